//! Numerics for mixed-norm alpha-modulation spaces on sampled fields.
//!
//! The library discretizes a family of smoothness spaces that interpolate
//! between modulation spaces (alpha = 0) and Besov spaces (alpha = 1):
//! a function on a periodic box is split into frequency bands by a smooth
//! partition of unity subordinate to an alpha-covering of frequency space,
//! each band is measured in a mixed (iterated) Lebesgue norm, and the band
//! norms are combined with polynomial weights. On top of that sit symbol
//! classes and a Kohn-Nirenberg quadrature for applying pseudodifferential
//! operators, plus an experiment harness that measures lifting, boundedness
//! and parametrix behaviour as finite ratio statistics.
//!
//! Module map:
//! - [`grid`]: periodic grids, sampled fields, forward/inverse transforms.
//! - [`mixed`]: mixed Lebesgue quasi-norms and directional maximal operators.
//! - [`covering`]: alpha-coverings of frequency space and admissibility checks.
//! - [`bapu`]: bounded admissible partitions of unity over a covering.
//! - [`modspace`]: band projections and alpha-modulation norms.
//! - [`symbols`]: symbol catalog, Hormander-type seminorms, composition.
//! - [`pdo`]: operator application paths (multiplier, separable, dense).
//! - [`verify`]: test families, ratio experiments, calibration constants.

pub mod bapu;
pub mod covering;
pub mod error;
pub mod grid;
pub mod mixed;
pub mod modspace;
pub mod pdo;
pub mod symbols;
pub mod verify;

pub use error::{Error, Result};
