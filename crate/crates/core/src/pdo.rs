//! Application of pseudodifferential operators to sampled fields:
//!
//! ```text
//! T_sigma f(x) = (2 pi)^{-n/2} integral sigma(x, xi) fhat(xi) e^{i x.xi} dxi
//! ```
//!
//! realized as the frequency-grid Riemann sum consistent with the transform
//! normalization. Three paths, by symbol structure:
//!
//! * multiplier: one spectral multiply and one inverse transform;
//! * separable `sum_r a_r(x) m_r(xi)`: R multiplier applications recombined
//!   with pointwise amplitudes;
//! * general: the dense quadrature, row-by-row in x (the full N^n x N^n
//!   matrix is never materialized), parallelized over rows.
//!
//! The dense path costs O(N^{2n}) symbol evaluations and is guarded.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{forward_transform, inverse_transform, GridSpec, SampledField, Spectrum};
use crate::symbols::{Symbol, SymbolKind};

/// Hard ceiling on dense-quadrature work: `N^{2n} <= 2^32`.
pub const DENSE_COST_LIMIT: u128 = 1 << 32;

/// How an operator application will be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyPath {
    Multiplier,
    Separable,
    General,
}

/// Requested execution path; `Auto` follows the symbol kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathChoice {
    #[default]
    Auto,
    Multiplier,
    Separable,
    General,
}

/// Cost and routing summary for applying a symbol on a grid.
#[derive(Debug, Clone)]
pub struct ApplicationPlan {
    pub symbol: String,
    pub kind: &'static str,
    pub grid: GridSpec,
    pub path: ApplyPath,
    /// Node-count product the chosen path will touch.
    pub cost: u128,
}

fn kind_name(sym: &Symbol) -> &'static str {
    match sym.kind {
        SymbolKind::Multiplier(_) => "multiplier",
        SymbolKind::Separable(_) => "separable",
        SymbolKind::General(_) => "general",
    }
}

/// Route a symbol to its natural path and estimate the work.
pub fn plan(sym: &Symbol, grid: &GridSpec) -> ApplicationPlan {
    let nodes = grid.len() as u128;
    let (path, cost) = match &sym.kind {
        SymbolKind::Multiplier(_) => (ApplyPath::Multiplier, nodes),
        SymbolKind::Separable(terms) => (ApplyPath::Separable, nodes * terms.len() as u128),
        SymbolKind::General(_) => (ApplyPath::General, nodes * nodes),
    };
    ApplicationPlan {
        symbol: sym.name.clone(),
        kind: kind_name(sym),
        grid: grid.clone(),
        path,
        cost,
    }
}

fn multiplier_values(sym: &Symbol, m: &dyn Fn(&[f64]) -> Complex64, grid: &GridSpec) -> Result<Vec<Complex64>> {
    let mut vals = vec![Complex64::default(); grid.len()];
    let mut xi = [0.0f64; crate::grid::MAX_DIM];
    let dim = grid.dim();
    let mut bad: Option<Vec<f64>> = None;
    grid.for_each_node(|idx, flat| {
        grid.xi_coords(idx, &mut xi[..dim]);
        let v = m(&xi[..dim]);
        if !(v.re.is_finite() && v.im.is_finite()) && bad.is_none() {
            bad = Some(xi[..dim].to_vec());
        }
        vals[flat] = v;
    });
    if let Some(node) = bad {
        return Err(Error::NonFinite(format!(
            "multiplier {} is not finite at frequency node {node:?}",
            sym.name
        )));
    }
    Ok(vals)
}

/// Apply a pure frequency multiplier: `F^{-1}(m(xi) fhat(xi))`.
pub fn apply_multiplier(sym: &Symbol, f: &SampledField) -> Result<SampledField> {
    let SymbolKind::Multiplier(m) = &sym.kind else {
        return Err(Error::InvalidParam(format!(
            "symbol {} is {}-kind, not a multiplier",
            sym.name,
            kind_name(sym)
        )));
    };
    let grid = f.spec().clone();
    let vals = multiplier_values(sym, &**m, &grid)?;
    let mut spec = forward_transform(f);
    for (s, v) in spec.values_mut().iter_mut().zip(&vals) {
        *s *= v;
    }
    Ok(inverse_transform(&spec))
}

/// Bessel-potential lift of order `b`: multiply the spectrum by `<xi>^b`.
pub fn bessel_lift(f: &SampledField, b: f64) -> Result<SampledField> {
    apply_multiplier(&crate::symbols::bessel(b), f)
}

/// Apply a separable symbol `sum_r a_r(x) m_r(xi)`: one forward transform,
/// one inverse per term, amplitudes multiplied pointwise in space.
pub fn apply_separable(sym: &Symbol, f: &SampledField) -> Result<SampledField> {
    let SymbolKind::Separable(terms) = &sym.kind else {
        return Err(Error::InvalidParam(format!(
            "symbol {} is {}-kind, not separable",
            sym.name,
            kind_name(sym)
        )));
    };
    let grid = f.spec().clone();
    let dim = grid.dim();
    let fhat = forward_transform(f);
    let mut out = vec![Complex64::default(); grid.len()];
    for (a_r, m_r) in terms {
        let vals = multiplier_values(sym, &**m_r, &grid)?;
        let mut banded = fhat.clone();
        for (s, v) in banded.values_mut().iter_mut().zip(&vals) {
            *s *= v;
        }
        let piece = inverse_transform(&banded);
        let mut x = [0.0f64; crate::grid::MAX_DIM];
        let piece_vals = piece.values();
        grid.for_each_node(|idx, flat| {
            grid.x_coords(idx, &mut x[..dim]);
            out[flat] += a_r(&x[..dim]) * piece_vals[flat];
        });
    }
    SampledField::from_values(grid, out)
}

/// Apply any symbol through the dense quadrature
/// `(2 pi)^{-n/2} dxi^n sum_m sigma(x_j, xi_m) fhat(xi_m) e^{i x_j . xi_m}`,
/// row-by-row in `x_j`.
pub fn apply_general(sym: &Symbol, f: &SampledField) -> Result<SampledField> {
    let grid = f.spec().clone();
    let dim = grid.dim();
    let n = grid.samples();
    let nodes = grid.len() as u128;
    let cost = nodes * nodes;
    if cost > DENSE_COST_LIMIT {
        return Err(Error::CostGuard(format!(
            "dense quadrature needs {cost} symbol evaluations for N={n}, dim={dim} \
             (limit {DENSE_COST_LIMIT}); use a multiplier/separable path or a smaller grid"
        )));
    }
    let fhat = forward_transform(f);
    let fvals = fhat.values();
    // Per-axis slot coordinates and slot decode strides (row-major, last
    // axis fastest), shared by every row.
    let xi_axis: Vec<f64> = (0..n).map(|t| grid.xi_node(t)).collect();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * n;
    }
    let scale = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0)
        * grid.freq_step().powi(dim as i32);
    let rows: Result<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|row| {
            let mut x = vec![0.0f64; dim];
            for a in 0..dim {
                x[a] = grid.x_node(row / strides[a] % n);
            }
            // e^{i x.xi} factors per axis, evaluated once per row.
            let mut phase: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
            for a in 0..dim {
                phase.push(
                    xi_axis
                        .iter()
                        .map(|&xi| Complex64::new(0.0, x[a] * xi).exp())
                        .collect(),
                );
            }
            let mut xi = vec![0.0f64; dim];
            let mut acc = Complex64::default();
            for (slot, &fv) in fvals.iter().enumerate() {
                let mut ph = Complex64::new(1.0, 0.0);
                for a in 0..dim {
                    let t = slot / strides[a] % n;
                    xi[a] = xi_axis[t];
                    ph *= phase[a][t];
                }
                let s = sym.eval(&x, &xi);
                if !(s.re.is_finite() && s.im.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "symbol {} is not finite at x={x:?}, xi={xi:?}",
                        sym.name
                    )));
                }
                acc += s * fv * ph;
            }
            Ok(acc * scale)
        })
        .collect();
    SampledField::from_values(grid, rows?)
}

/// Apply a symbol along a chosen (or automatically selected) path.
pub fn apply(sym: &Symbol, f: &SampledField, choice: PathChoice) -> Result<SampledField> {
    match choice {
        PathChoice::Auto => match &sym.kind {
            SymbolKind::Multiplier(_) => apply_multiplier(sym, f),
            SymbolKind::Separable(_) => apply_separable(sym, f),
            SymbolKind::General(_) => apply_general(sym, f),
        },
        PathChoice::Multiplier => apply_multiplier(sym, f),
        PathChoice::Separable => apply_separable(sym, f),
        PathChoice::General => apply_general(sym, f),
    }
}

/// Multiply a spectrum slot-wise by a multiplier symbol (no transforms).
pub fn multiply_spectrum(sym: &Symbol, s: &Spectrum) -> Result<Spectrum> {
    let SymbolKind::Multiplier(m) = &sym.kind else {
        return Err(Error::InvalidParam(format!(
            "symbol {} is {}-kind, not a multiplier",
            sym.name,
            kind_name(sym)
        )));
    };
    let vals = multiplier_values(sym, &**m, s.spec())?;
    let mut out = s.clone();
    for (o, v) in out.values_mut().iter_mut().zip(&vals) {
        *o *= v;
    }
    Ok(out)
}
