//! Symbols `sigma(x, xi)`, Hormander-type seminorm estimation, and
//! hypoellipticity diagnostics.
//!
//! A symbol carries its declared order `b` and type `rho`; membership in the
//! class `S^b_rho` is probed numerically through the seminorm
//!
//! ```text
//! max_{|alpha|<=N, |beta|<=M}  sup  <xi>^{rho |alpha| - b}
//!                                   |d^alpha_xi d^beta_x sigma(x, xi)|
//! ```
//!
//! evaluated over a finite lattice (x in the grid box, |xi| log-spaced up to
//! a multiple of the Nyquist radius). A sup over all frequencies is not
//! computable, so "bounded seminorm" is operationalized as range stability:
//! the estimate moves by less than 10% when the frequency range grows
//! tenfold. Hypoellipticity is probed the same way through the lower bound
//! `a <xi>^{b0} <= |sigma|` and the quotient constants
//! `C_{alpha,beta} = sup |d sigma| <xi>^{rho |alpha|} / |sigma|`.
//!
//! Derivatives use analytic formulas when the symbol provides them and
//! nested central differences otherwise, with the xi-step scaled as
//! `1e-3 <xi>^rho` (the natural derivative scale of the class) and the
//! x-step fixed at `1e-3`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bapu::multi_indices;
use crate::covering::bracket;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub type MultiplierFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
pub type SpatialFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
pub type GeneralFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;
/// Analytic partial derivatives: `(alpha, beta, x, xi) -> Some(value)`, or
/// `None` to fall back to finite differences for that derivative.
pub type DerivFn = Arc<dyn Fn(&[usize], &[usize], &[f64], &[f64]) -> Option<Complex64> + Send + Sync>;

/// Structural kind of a symbol, which also decides how an operator built
/// from it can be applied.
#[derive(Clone)]
pub enum SymbolKind {
    /// Pure frequency multiplier `m(xi)`.
    Multiplier(MultiplierFn),
    /// Finite sum of products `sum_r a_r(x) m_r(xi)`.
    Separable(Vec<(SpatialFn, MultiplierFn)>),
    /// Full `sigma(x, xi)` evaluator.
    General(GeneralFn),
}

#[derive(Clone)]
pub struct Symbol {
    pub name: String,
    /// Declared order `b`.
    pub order: f64,
    /// Declared type `rho` in (0, 1].
    pub rho: f64,
    pub kind: SymbolKind,
    /// Optional analytic derivatives.
    pub analytic: Option<DerivFn>,
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            SymbolKind::Multiplier(_) => "multiplier",
            SymbolKind::Separable(_) => "separable",
            SymbolKind::General(_) => "general",
        };
        write!(f, "Symbol({}, order {}, rho {}, {kind})", self.name, self.order, self.rho)
    }
}

impl Symbol {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        match &self.kind {
            SymbolKind::Multiplier(m) => m(xi),
            SymbolKind::Separable(terms) => terms.iter().map(|(a, m)| a(x) * m(xi)).sum(),
            SymbolKind::General(f) => f(x, xi),
        }
    }

    pub fn is_multiplier(&self) -> bool {
        matches!(self.kind, SymbolKind::Multiplier(_))
    }
}

/// `d^alpha_xi d^beta_x sigma` at one point: analytic when available, nested
/// central differences otherwise.
pub fn partial(sym: &Symbol, alpha: &[usize], beta: &[usize], x: &[f64], xi: &[f64]) -> Complex64 {
    if let Some(d) = &sym.analytic {
        if let Some(v) = d(alpha, beta, x, xi) {
            return v;
        }
    }
    let xi2: f64 = xi.iter().map(|&c| c * c).sum();
    let eps_xi = 1e-3 * bracket(xi2).powf(sym.rho);
    fd_partial(sym, alpha, beta, x, xi, eps_xi, 1e-3)
}

fn fd_partial(
    sym: &Symbol,
    alpha: &[usize],
    beta: &[usize],
    x: &[f64],
    xi: &[f64],
    eps_xi: f64,
    eps_x: f64,
) -> Complex64 {
    if let Some(axis) = alpha.iter().position(|&a| a > 0) {
        let mut lower = alpha.to_vec();
        lower[axis] -= 1;
        let mut p = xi.to_vec();
        p[axis] = xi[axis] + eps_xi;
        let plus = fd_partial(sym, &lower, beta, x, &p, eps_xi, eps_x);
        p[axis] = xi[axis] - eps_xi;
        let minus = fd_partial(sym, &lower, beta, x, &p, eps_xi, eps_x);
        return (plus - minus) / (2.0 * eps_xi);
    }
    if let Some(axis) = beta.iter().position(|&b| b > 0) {
        let mut lower = beta.to_vec();
        lower[axis] -= 1;
        let mut p = x.to_vec();
        p[axis] = x[axis] + eps_x;
        let plus = fd_partial(sym, alpha, &lower, &p, xi, eps_xi, eps_x);
        p[axis] = x[axis] - eps_x;
        let minus = fd_partial(sym, alpha, &lower, &p, xi, eps_xi, eps_x);
        return (plus - minus) / (2.0 * eps_x);
    }
    sym.eval(x, xi)
}

// ---------------------------------------------------------------------------
// Sampling lattice
// ---------------------------------------------------------------------------

/// Finite (x, xi) sampling set: x points across the grid box, xi points with
/// log-spaced radii along a fixed direction set.
#[derive(Debug, Clone)]
pub struct SamplingLattice {
    pub x_points: Vec<Vec<f64>>,
    pub xi_points: Vec<Vec<f64>>,
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
                vec![s, s],
                vec![s, -s],
                vec![-s, s],
                vec![-s, -s],
            ]
        }
        _ => {
            let s = 1.0 / (dim as f64).sqrt();
            let mut out = Vec::new();
            for a in 0..dim {
                let mut d = vec![0.0; dim];
                d[a] = 1.0;
                out.push(d.clone());
                d[a] = -1.0;
                out.push(d);
            }
            out.push(vec![s; dim]);
            out.push(vec![-s; dim]);
            out
        }
    }
}

impl SamplingLattice {
    /// Lattice for a grid: x midpoints across the box (one point if the
    /// symbol will not be x-swept), radii log-spaced in `[1, hi]`.
    pub fn new(grid: &GridSpec, xi_hi: f64, x_per_axis: usize, radii: usize) -> Self {
        let dim = grid.dim();
        let mut x_points = Vec::new();
        let mut idx = vec![0usize; dim];
        let total = x_per_axis.pow(dim as u32);
        for _ in 0..total {
            let mut p = Vec::with_capacity(dim);
            for a in 0..dim {
                let t = (idx[a] as f64 + 0.5) / x_per_axis as f64;
                p.push(-grid.half_width() + 2.0 * grid.half_width() * t);
            }
            x_points.push(p);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < x_per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        let mut xi_points = Vec::new();
        let lo: f64 = 1.0;
        for i in 0..radii {
            let t = i as f64 / (radii - 1) as f64;
            let r = lo * (xi_hi / lo).powf(t);
            for d in directions(dim) {
                xi_points.push(d.iter().map(|&c| c * r).collect());
            }
        }
        SamplingLattice { x_points, xi_points }
    }

    /// Default lattice: x 9 per axis, 24 radii up to `factor * Omega`.
    pub fn for_grid(grid: &GridSpec, factor: f64) -> Self {
        SamplingLattice::new(grid, factor * grid.nyquist(), 9, 24)
    }
}

// ---------------------------------------------------------------------------
// Seminorm estimation
// ---------------------------------------------------------------------------

/// Result of a seminorm sweep: the max weighted derivative and where it was
/// attained.
#[derive(Debug, Clone)]
pub struct SeminormEstimate {
    pub n_order: usize,
    pub m_order: usize,
    pub value: f64,
    pub argmax_x: Vec<f64>,
    pub argmax_xi: Vec<f64>,
    pub argmax_alpha: Vec<usize>,
    pub argmax_beta: Vec<usize>,
}

fn zero_and_orders(dim: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0usize; dim]];
    out.extend(multi_indices(dim, max));
    out
}

/// `max_{|alpha|<=N,|beta|<=M} sup <xi>^{rho|alpha|-b} |d^a_xi d^b_x sigma|`
/// over the lattice.
pub fn seminorm_estimate(
    sym: &Symbol,
    n_order: usize,
    m_order: usize,
    lattice: &SamplingLattice,
) -> Result<SeminormEstimate> {
    if n_order + m_order > 4 {
        return Err(Error::InvalidParam(format!(
            "finite-difference depth N+M = {} exceeds 4",
            n_order + m_order
        )));
    }
    let dim = lattice.xi_points[0].len();
    // x sweeps matter only for x-dependent symbols.
    let x_points: &[Vec<f64>] = if sym.is_multiplier() {
        &lattice.x_points[..1]
    } else {
        &lattice.x_points
    };
    let alphas = zero_and_orders(dim, n_order);
    let betas = zero_and_orders(dim, m_order);
    let mut best = SeminormEstimate {
        n_order,
        m_order,
        value: -1.0,
        argmax_x: Vec::new(),
        argmax_xi: Vec::new(),
        argmax_alpha: Vec::new(),
        argmax_beta: Vec::new(),
    };
    for alpha in &alphas {
        let a_ord: usize = alpha.iter().sum();
        for beta in &betas {
            for xi in &lattice.xi_points {
                let xi2: f64 = xi.iter().map(|&c| c * c).sum();
                let weight = bracket(xi2).powf(sym.rho * a_ord as f64 - sym.order);
                for x in x_points {
                    let d = partial(sym, alpha, beta, x, xi);
                    if !(d.re.is_finite() && d.im.is_finite()) {
                        return Err(Error::NonFinite(format!(
                            "derivative alpha={alpha:?} beta={beta:?} of {} is not finite at xi={xi:?}",
                            sym.name
                        )));
                    }
                    let v = weight * d.norm();
                    if v > best.value {
                        best.value = v;
                        best.argmax_x = x.clone();
                        best.argmax_xi = xi.clone();
                        best.argmax_alpha = alpha.clone();
                        best.argmax_beta = beta.clone();
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Seminorm estimates over `[1, factor*Omega]` and `[1, 10*factor*Omega]`.
/// A symbol honestly in its declared class moves by less than 10%.
pub fn range_stability(
    sym: &Symbol,
    n_order: usize,
    m_order: usize,
    grid: &GridSpec,
    factor: f64,
) -> Result<(f64, f64)> {
    let low = seminorm_estimate(sym, n_order, m_order, &SamplingLattice::for_grid(grid, factor))?;
    let high = seminorm_estimate(
        sym,
        n_order,
        m_order,
        &SamplingLattice::new(grid, 10.0 * factor * grid.nyquist(), 9, 24),
    )?;
    Ok((low.value, high.value))
}

/// Relative growth of the seminorm when the range is extended tenfold.
pub fn range_growth(low: f64, high: f64) -> f64 {
    if low == 0.0 {
        if high == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (high - low).abs() / low
    }
}

// ---------------------------------------------------------------------------
// Hypoellipticity
// ---------------------------------------------------------------------------

/// Parameters of the lower-bound class: order pair `b0 <= b`, the cutoff
/// radius below which nothing is asserted, and derivative orders to probe.
#[derive(Debug, Clone)]
pub struct HypoellipticSpec {
    pub b: f64,
    pub b0: f64,
    pub cutoff: f64,
}

impl HypoellipticSpec {
    pub fn new(b: f64, b0: f64, cutoff: f64) -> Result<Self> {
        if b0 > b {
            return Err(Error::InvalidParam(format!("need b0 <= b, got b0={b0} > b={b}")));
        }
        if !(cutoff.is_finite() && cutoff >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "cutoff must be a finite bracket value >= 1, got {cutoff}"
            )));
        }
        Ok(HypoellipticSpec { b, b0, cutoff })
    }
}

/// Outcome of a hypoellipticity sweep.
#[derive(Debug, Clone)]
pub struct HypoellipticReport {
    /// `inf |sigma| / <xi>^{b0}` over the restricted lattice.
    pub a_est: f64,
    /// `sup |d^alpha_xi d^beta_x sigma| <xi>^{rho|alpha|} / |sigma|` rows.
    pub constants: Vec<(Vec<usize>, Vec<usize>, f64)>,
}

impl HypoellipticReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("alpha,beta,constant\n");
        for (a, b, c) in &self.constants {
            let fmt = |v: &[usize]| {
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            };
            let _ = writeln!(out, "{},{},{}", fmt(a), fmt(b), c);
        }
        out
    }
}

/// Probe the lower bound `a <xi>^{b0} <= |sigma|` and the derivative
/// quotients on the lattice restricted to `<xi> >= cutoff`. A vanishing
/// symbol value inside that region refutes hypoellipticity outright.
pub fn hypoelliptic_check(
    sym: &Symbol,
    spec: &HypoellipticSpec,
    n_order: usize,
    m_order: usize,
    lattice: &SamplingLattice,
) -> Result<HypoellipticReport> {
    if n_order + m_order > 4 {
        return Err(Error::InvalidParam(format!(
            "finite-difference depth N+M = {} exceeds 4",
            n_order + m_order
        )));
    }
    let dim = lattice.xi_points[0].len();
    let x_points: &[Vec<f64>] = if sym.is_multiplier() {
        &lattice.x_points[..1]
    } else {
        &lattice.x_points
    };
    let restricted: Vec<&Vec<f64>> = lattice
        .xi_points
        .iter()
        .filter(|xi| {
            let xi2: f64 = xi.iter().map(|&c| c * c).sum();
            bracket(xi2) >= spec.cutoff
        })
        .collect();
    if restricted.is_empty() {
        return Err(Error::InvalidParam(
            "cutoff excludes the entire sampling lattice".into(),
        ));
    }
    let mut a_est = f64::INFINITY;
    let mut mags: Vec<Vec<f64>> = Vec::new();
    for xi in &restricted {
        let xi2: f64 = xi.iter().map(|&c| c * c).sum();
        let w = bracket(xi2).powf(-spec.b0);
        let mut row = Vec::with_capacity(x_points.len());
        for x in x_points {
            let v = sym.eval(x, xi).norm();
            if v == 0.0 {
                return Err(Error::SymbolVanishes(format!(
                    "{} vanishes at xi={xi:?}, x={x:?} with <xi> >= {}",
                    sym.name, spec.cutoff
                )));
            }
            if v * w < a_est {
                a_est = v * w;
            }
            row.push(v);
        }
        mags.push(row);
    }
    let alphas = zero_and_orders(dim, n_order);
    let betas = zero_and_orders(dim, m_order);
    let mut constants = Vec::new();
    for alpha in &alphas {
        let a_ord: usize = alpha.iter().sum();
        for beta in &betas {
            if a_ord == 0 && beta.iter().all(|&b| b == 0) {
                continue;
            }
            let mut sup = 0.0f64;
            for (i, xi) in restricted.iter().enumerate() {
                let xi2: f64 = xi.iter().map(|&c| c * c).sum();
                let w = bracket(xi2).powf(sym.rho * a_ord as f64);
                for (j, x) in x_points.iter().enumerate() {
                    let d = partial(sym, alpha, beta, x, xi);
                    if !(d.re.is_finite() && d.im.is_finite()) {
                        return Err(Error::NonFinite(format!(
                            "derivative alpha={alpha:?} beta={beta:?} of {} is not finite",
                            sym.name
                        )));
                    }
                    let v = d.norm() * w / mags[i][j];
                    if v > sup {
                        sup = v;
                    }
                }
            }
            constants.push((alpha.clone(), beta.clone(), sup));
        }
    }
    Ok(HypoellipticReport { a_est, constants })
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Constant symbol 1 (the identity operator's symbol).
pub fn identity() -> Symbol {
    Symbol {
        name: "identity".into(),
        order: 0.0,
        rho: 1.0,
        kind: SymbolKind::Multiplier(Arc::new(|_| Complex64::new(1.0, 0.0))),
        analytic: Some(Arc::new(|alpha, beta, _, _| {
            let total: usize = alpha.iter().sum::<usize>() + beta.iter().sum::<usize>();
            Some(if total == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            })
        })),
    }
}

/// Bessel-potential symbol `<xi>^b`, the lift of order `b`.
pub fn bessel(b: f64) -> Symbol {
    Symbol {
        name: format!("bessel({b})"),
        order: b,
        rho: 1.0,
        kind: SymbolKind::Multiplier(Arc::new(move |xi| {
            let xi2: f64 = xi.iter().map(|&c| c * c).sum();
            Complex64::new(bracket(xi2).powf(b), 0.0)
        })),
        analytic: None,
    }
}

/// Heat-operator symbol on `w = (tau, xi')`: `i tau + |xi'|^2` (order 2,
/// hypoelliptic with lower order 1).
pub fn heat() -> Symbol {
    Symbol {
        name: "heat".into(),
        order: 2.0,
        rho: 1.0,
        kind: SymbolKind::Multiplier(Arc::new(|w| {
            let space: f64 = w[1..].iter().map(|&c| c * c).sum();
            Complex64::new(space, w[0])
        })),
        analytic: None,
    }
}

/// Smooth radial cutoff: 0 on `<w> <= c`, 1 on `<w> >= 2c`.
fn radial_cutoff(c: f64, w2: f64) -> f64 {
    let t = bracket(w2);
    if t <= c {
        0.0
    } else if t >= 2.0 * c {
        1.0
    } else {
        let u = (t - c) / c;
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// Parametrix of the heat operator: `(i tau + |xi'|^2)^{-1} eta(<w>)` with a
/// smooth cutoff vanishing below `c` (order -1, lower order -2).
pub fn heat_parametrix(c: f64) -> Symbol {
    Symbol {
        name: format!("heat_parametrix({c})"),
        order: -1.0,
        rho: 1.0,
        kind: SymbolKind::Multiplier(Arc::new(move |w| {
            let w2: f64 = w.iter().map(|&c| c * c).sum();
            let eta = radial_cutoff(c, w2);
            if eta == 0.0 {
                return Complex64::default();
            }
            let space: f64 = w[1..].iter().map(|&c| c * c).sum();
            eta / Complex64::new(space, w[0])
        })),
        analytic: None,
    }
}

/// Oscillatory symbol `exp(i <xi>^{1-rho})` cut off smoothly near the
/// origin; the canonical member of `S^0_rho` that is *not* in any better
/// class.
pub fn oscillatory(rho: f64) -> Symbol {
    Symbol {
        name: format!("oscillatory({rho})"),
        order: 0.0,
        rho,
        kind: SymbolKind::Multiplier(Arc::new(move |xi| {
            let xi2: f64 = xi.iter().map(|&c| c * c).sum();
            let r = xi2.sqrt();
            let cut = if r <= 0.5 {
                0.0
            } else if r >= 1.0 {
                1.0
            } else {
                let u = 2.0 * (r - 0.5);
                let a = (-1.0 / u).exp();
                let b = (-1.0 / (1.0 - u)).exp();
                a / (a + b)
            };
            if cut == 0.0 {
                return Complex64::default();
            }
            cut * Complex64::new(0.0, bracket(xi2).powf(1.0 - rho)).exp()
        })),
        analytic: None,
    }
}

/// Separable symbol `a(x) m(xi)` with a smooth bounded amplitude.
pub fn modulated(name: &str, a: SpatialFn, m: MultiplierFn) -> Symbol {
    Symbol {
        name: name.into(),
        order: 0.0,
        rho: 1.0,
        kind: SymbolKind::Separable(vec![(a, m)]),
        analytic: None,
    }
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Leading part of the composed symbol:
/// `sum_{|alpha| < N} (-i)^{|alpha|}/alpha! d^alpha_xi sigma1 d^alpha_x sigma2`,
/// a general-kind symbol of declared order `b1 + b2`.
pub fn composition_leading(s1: &Symbol, s2: &Symbol, n_terms: usize, dim: usize) -> Result<Symbol> {
    if n_terms == 0 {
        return Err(Error::InvalidParam("composition needs at least one term".into()));
    }
    if n_terms > 4 {
        return Err(Error::InvalidParam(
            "composition depth beyond 3 derivative orders is not supported".into(),
        ));
    }
    let alphas = zero_and_orders(dim, n_terms - 1);
    let a = s1.clone();
    let b = s2.clone();
    let name = format!("{} o {} (N={n_terms})", s1.name, s2.name);
    let order = s1.order + s2.order;
    let rho = s1.rho.min(s2.rho);
    let beta0 = vec![0usize; dim];
    let eval: GeneralFn = Arc::new(move |x: &[f64], xi: &[f64]| {
        let mut acc = Complex64::default();
        for alpha in &alphas {
            let ord: usize = alpha.iter().sum();
            let coeff = Complex64::new(0.0, -1.0).powu(ord as u32)
                / alpha.iter().map(|&k| factorial(k)).product::<f64>();
            let d1 = partial(&a, alpha, &beta0, x, xi);
            let d2 = partial(&b, &beta0, alpha, x, xi);
            acc += coeff * d1 * d2;
        }
        acc
    });
    Ok(Symbol {
        name,
        order,
        rho,
        kind: SymbolKind::General(eval),
        analytic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> GridSpec {
        GridSpec::new(1, 16.0, 256).unwrap()
    }

    fn grid2() -> GridSpec {
        GridSpec::new(2, 12.0, 128).unwrap()
    }

    #[test]
    fn constant_symbol_has_unit_seminorm() {
        let lattice = SamplingLattice::for_grid(&grid1(), 10.0);
        let est = seminorm_estimate(&identity(), 2, 2, &lattice).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.argmax_alpha.iter().all(|&a| a == 0));
    }

    #[test]
    fn bessel_zeroth_seminorm_is_one() {
        let lattice = SamplingLattice::for_grid(&grid1(), 10.0);
        let est = seminorm_estimate(&bessel(1.7), 0, 0, &lattice).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12, "estimate {}", est.value);
    }

    #[test]
    fn finite_difference_matches_hand_derivative_of_bessel() {
        let sym = bessel(1.3);
        let xi = [3.0f64];
        let x = [0.0f64];
        let got = partial(&sym, &[1], &[0], &x, &xi);
        // d/dxi <xi>^b = b xi <xi>^{b-2}
        let want = 1.3 * 3.0 * bracket(9.0).powf(1.3 - 2.0);
        assert!((got.re - want).abs() / want.abs() < 1e-6, "{got} vs {want}");
        assert!(got.im.abs() < 1e-12);
    }

    #[test]
    fn seminorm_monotone_in_orders_and_rho() {
        let lattice = SamplingLattice::for_grid(&grid1(), 10.0);
        let sym = bessel(0.8);
        let mut last = 0.0;
        for n in 0..=2 {
            let est = seminorm_estimate(&sym, n, 0, &lattice).unwrap();
            assert!(est.value >= last - 1e-15, "N={n}: {} < {last}", est.value);
            last = est.value;
        }
        // Declaring a smaller rho can only shrink the weights on the
        // lattice (where <xi> >= 1): the computational face of the class
        // inclusion for types below 1.
        let mut relaxed = sym.clone();
        relaxed.rho = 0.5;
        let full = seminorm_estimate(&sym, 2, 0, &lattice).unwrap();
        let half = seminorm_estimate(&relaxed, 2, 0, &lattice).unwrap();
        assert!(half.value <= full.value * (1.0 + 1e-12));
    }

    /// The two-range membership oracle: the chirp-type symbol is stable at
    /// its true type and blows up when declared one class better.
    #[test]
    fn oscillatory_symbol_is_stable_only_at_its_true_type() {
        let grid = grid1();
        let honest = oscillatory(0.5);
        let (lo, hi) = range_stability(&honest, 2, 0, &grid, 10.0).unwrap();
        assert!(
            range_growth(lo, hi) < 0.10,
            "honest declaration should be range-stable: {lo} -> {hi}"
        );
        let mut lying = oscillatory(0.5);
        lying.rho = 1.0;
        let (lo, hi) = range_stability(&lying, 2, 0, &grid, 10.0).unwrap();
        assert!(
            range_growth(lo, hi) > 0.10,
            "misdeclared type should grow with the range: {lo} -> {hi}"
        );
    }

    #[test]
    fn heat_symbol_is_hypoelliptic_on_its_stated_orders() {
        let grid = grid2();
        let lattice = SamplingLattice::for_grid(&grid, 10.0);
        let spec = HypoellipticSpec::new(2.0, 1.0, 2.0).unwrap();
        let report = hypoelliptic_check(&heat(), &spec, 2, 0, &lattice).unwrap();
        assert!(report.a_est > 0.05, "a_est {}", report.a_est);
        for (_, _, c) in &report.constants {
            assert!(c.is_finite());
        }
        // The lower bound is range-stable: the infimum of |sigma|/<w> is
        // attained near the cutoff, so widening the radii tenfold leaves it
        // essentially unchanged.
        let wide = lattice_union(
            &lattice,
            &SamplingLattice::new(&grid, 100.0 * grid.nyquist(), 9, 24),
        );
        let report_wide = hypoelliptic_check(&heat(), &spec, 2, 0, &wide).unwrap();
        assert!(
            (report_wide.a_est - report.a_est).abs() <= 0.01 * report.a_est,
            "a_est moved under range growth: {} -> {}",
            report.a_est,
            report_wide.a_est
        );
    }

    /// The quotient constants of i tau + |xi|^2 are anisotropic: the second
    /// xi-derivative is the constant 2 while the symbol grows only like |tau|
    /// along the tau axis, so sup |d^2 sigma| <w>^{2 rho} / |sigma| is
    /// bounded at the parabolic type 1/2 and grows linearly at type 1.
    #[test]
    fn heat_quotient_constants_stabilize_at_parabolic_type() {
        let grid = grid2();
        let spec = HypoellipticSpec::new(2.0, 1.0, 2.0).unwrap();
        let narrow = SamplingLattice::for_grid(&grid, 10.0);
        let wide = lattice_union(
            &narrow,
            &SamplingLattice::new(&grid, 100.0 * grid.nyquist(), 9, 24),
        );
        let mut parabolic = heat();
        parabolic.rho = 0.5;
        let rn = hypoelliptic_check(&parabolic, &spec, 2, 0, &narrow).unwrap();
        let rw = hypoelliptic_check(&parabolic, &spec, 2, 0, &wide).unwrap();
        for ((a, b, c1), (_, _, c2)) in rn.constants.iter().zip(&rw.constants) {
            assert!(
                *c2 <= c1.max(1e-9) * 1.10,
                "type-1/2 constant alpha={a:?} beta={b:?} grew: {c1} -> {c2}"
            );
        }
        let rn1 = hypoelliptic_check(&heat(), &spec, 2, 0, &narrow).unwrap();
        let rw1 = hypoelliptic_check(&heat(), &spec, 2, 0, &wide).unwrap();
        let second_xi = |r: &HypoellipticReport| {
            r.constants
                .iter()
                .find(|(a, b, _)| a == &[0, 2] && b.iter().all(|&x| x == 0))
                .map(|(_, _, c)| *c)
                .unwrap()
        };
        assert!(
            second_xi(&rw1) > 5.0 * second_xi(&rn1),
            "type-1 second-derivative quotient should track the range: {} -> {}",
            second_xi(&rn1),
            second_xi(&rw1)
        );
    }

    fn lattice_union(a: &SamplingLattice, b: &SamplingLattice) -> SamplingLattice {
        let mut xi = a.xi_points.clone();
        xi.extend(b.xi_points.iter().cloned());
        SamplingLattice { x_points: a.x_points.clone(), xi_points: xi }
    }

    #[test]
    fn heat_parametrix_is_hypoelliptic_with_negative_orders() {
        let grid = grid2();
        let lattice = SamplingLattice::for_grid(&grid, 10.0);
        let spec = HypoellipticSpec::new(-1.0, -2.0, 2.0).unwrap();
        let report = hypoelliptic_check(&heat_parametrix(1.0), &spec, 2, 0, &lattice).unwrap();
        assert!(report.a_est > 0.05, "a_est {}", report.a_est);
    }

    #[test]
    fn constant_symbol_hypoelliptic_with_zero_constants() {
        let lattice = SamplingLattice::for_grid(&grid1(), 10.0);
        let spec = HypoellipticSpec::new(0.0, 0.0, 1.0).unwrap();
        let report = hypoelliptic_check(&identity(), &spec, 2, 2, &lattice).unwrap();
        assert_eq!(report.a_est, 1.0);
        for (_, _, c) in &report.constants {
            assert_eq!(*c, 0.0);
        }
    }

    #[test]
    fn vanishing_symbol_is_refused() {
        let sym = Symbol {
            name: "first-coordinate".into(),
            order: 1.0,
            rho: 1.0,
            kind: SymbolKind::Multiplier(Arc::new(|xi| Complex64::new(xi[0], 0.0))),
            analytic: None,
        };
        let lattice = SamplingLattice::for_grid(&grid2(), 10.0);
        let spec = HypoellipticSpec::new(1.0, 0.0, 1.0).unwrap();
        let err = hypoelliptic_check(&sym, &spec, 1, 0, &lattice).unwrap_err();
        assert!(matches!(err, Error::SymbolVanishes(_)), "got {err:?}");
    }

    #[test]
    fn heat_symbol_evaluates_as_stated() {
        let v = heat().eval(&[], &[1.0, 1.0]);
        assert_eq!(v, Complex64::new(1.0, 1.0));
        assert_eq!(bessel(0.0).eval(&[], &[4.0]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_term_composition_is_the_pointwise_product() {
        let s1 = bessel(1.2);
        let a: SpatialFn = Arc::new(|x: &[f64]| Complex64::new((x[0]).sin() + 2.0, 0.0));
        let m: MultiplierFn = Arc::new(|_: &[f64]| Complex64::new(1.0, 0.0));
        let s2 = modulated("amp", a, m);
        let comp = composition_leading(&s1, &s2, 1, 1).unwrap();
        assert_eq!(comp.order, 1.2);
        for &(x, xi) in &[(0.3, 2.0), (-1.0, 5.0), (2.0, -3.0)] {
            let got = comp.eval(&[x], &[xi]);
            let want = s1.eval(&[x], &[xi]) * s2.eval(&[x], &[xi]);
            assert!((got - want).norm() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn composition_with_x_independent_factor_is_exact_at_any_depth() {
        let s1 = bessel(0.7);
        let s2 = bessel(-0.4);
        for n in 1..=3 {
            let comp = composition_leading(&s1, &s2, n, 1).unwrap();
            let got = comp.eval(&[0.1], &[4.0]);
            let want = s1.eval(&[0.1], &[4.0]) * s2.eval(&[0.1], &[4.0]);
            assert!(
                (got - want).norm() < 1e-9,
                "N={n}: {got} vs {want} (x-derivatives of a multiplier must vanish)"
            );
        }
    }

    /// Hand-derivative oracle: sigma1 = <xi>^2, sigma2 = sin(x); the N=2
    /// composition adds (1/i) * 2 xi * cos(x).
    #[test]
    fn two_term_composition_matches_hand_formula() {
        let s1 = Symbol {
            name: "bracket-squared".into(),
            order: 2.0,
            rho: 1.0,
            kind: SymbolKind::Multiplier(Arc::new(|xi: &[f64]| {
                Complex64::new(1.0 + xi[0] * xi[0], 0.0)
            })),
            analytic: None,
        };
        let a: SpatialFn = Arc::new(|x: &[f64]| Complex64::new(x[0].sin(), 0.0));
        let m: MultiplierFn = Arc::new(|_: &[f64]| Complex64::new(1.0, 0.0));
        let s2 = modulated("sin", a, m);
        let comp = composition_leading(&s1, &s2, 2, 1).unwrap();
        for &(x, xi) in &[(0.0, 1.0), (0.7, 2.5), (-1.3, 4.0), (2.2, -3.0), (0.4, 0.5)] {
            let got = comp.eval(&[x], &[xi]);
            let want = Complex64::new((1.0 + xi * xi) * x.sin(), 0.0)
                + Complex64::new(0.0, -1.0) * 2.0 * xi * x.cos();
            assert!(
                (got - want).norm() < 1e-5,
                "at (x,xi)=({x},{xi}): {got} vs {want}"
            );
        }
    }
}
