//! Mixed (iterated) Lebesgue quasi-norms and directional maximal operators.
//!
//! The mixed norm integrates axis by axis with its own exponent per axis,
//! innermost first:
//!
//! ```text
//! ||f||_p = ( int ( ... ( int |f|^{p_1} dx_1 )^{p_2/p_1} ... dx_n )^{1/p_n}
//! ```
//!
//! discretized with Riemann sums. Exponents below 1 are allowed (quasi-norm
//! range); an infinite exponent turns that stage into an axis-wise maximum.
//!
//! The directional maximal operator along one axis takes, at every node, the
//! largest average of `|f|` over node intervals containing the node; it is
//! evaluated exactly by enumerating all interval starts in O(N^2) per line.
//! Iterating the axes (with an inner power `theta`) gives the strong maximal
//! function used in vector-valued inequalities, and `peetre_check` measures
//! the constant in the band-limited pointwise bound
//! `sup_y |f(y)| / <R(x-y)>^{n/theta} <= c * M_theta f(x)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{forward_transform, GridSpec, SampledField, MAX_DIM};

/// Per-axis integrability exponents `p = (p_1, ..., p_n)`, each in `(0, inf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExponents {
    p: Vec<f64>,
}

impl MixedExponents {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() > MAX_DIM {
            return Err(Error::InvalidParam(format!(
                "exponent vector length must be 1..={MAX_DIM}, got {}",
                p.len()
            )));
        }
        for (j, &pj) in p.iter().enumerate() {
            if pj.is_nan() || pj <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "exponent p_{} must be positive (or inf), got {pj}",
                    j + 1
                )));
            }
        }
        Ok(MixedExponents { p })
    }

    pub fn uniform(p: f64, dim: usize) -> Result<Self> {
        Self::new(vec![p; dim])
    }

    pub fn components(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn min_exponent(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Running truncation `ptilde_j = min(1, p_1, ..., p_j)`, the exponent
    /// vector governing convolution/norm inequalities in the quasi-Banach
    /// range.
    pub fn tilde(&self) -> MixedExponents {
        let mut run = 1.0f64;
        let p = self
            .p
            .iter()
            .map(|&pj| {
                run = run.min(pj);
                run
            })
            .collect();
        MixedExponents { p }
    }

    /// `r = min(1, q, p_1, ..., p_n)` for a companion sum exponent `q`.
    pub fn little_r(&self, q: f64) -> f64 {
        self.min_exponent().min(q).min(1.0)
    }
}

/// One reduction stage: collapse axis 0 of a row-major `[d0, rest]` array
/// with exponent `p` (`h` is the quadrature weight; ignored for `p = inf`).
fn reduce_axis0(values: &[f64], d0: usize, p: f64, h: f64) -> Vec<f64> {
    let rest = values.len() / d0;
    let mut out = vec![0.0f64; rest];
    if p.is_infinite() {
        for (r, o) in out.iter_mut().enumerate() {
            let mut m = 0.0f64;
            for t in 0..d0 {
                m = m.max(values[r + t * rest]);
            }
            *o = m;
        }
    } else {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0f64;
            for t in 0..d0 {
                s += values[r + t * rest].powf(p);
            }
            *o = (h * s).powf(1.0 / p);
        }
    }
    out
}

fn mixed_norm_abs(spec: &GridSpec, abs: Vec<f64>, p: &MixedExponents) -> Result<f64> {
    if p.dim() != spec.dim() {
        return Err(Error::GridMismatch(format!(
            "exponent vector has {} components, grid dimension is {}",
            p.dim(),
            spec.dim()
        )));
    }
    let h = spec.spatial_step();
    let n = spec.samples();
    let mut work = abs;
    for &pj in p.components() {
        work = reduce_axis0(&work, n, pj, h);
    }
    debug_assert_eq!(work.len(), 1);
    let v = work[0];
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("mixed norm evaluated to {v}")));
    }
    Ok(v)
}

/// Mixed Lebesgue quasi-norm of a sampled field.
pub fn mixed_norm(f: &SampledField, p: &MixedExponents) -> Result<f64> {
    let abs = f.values().iter().map(|v| v.norm()).collect();
    mixed_norm_abs(f.spec(), abs, p)
}

/// Exact directional maximal operator along `axis` (0-based): at each node,
/// the maximum of interval averages of `|f|` over all node intervals of that
/// axis containing the node. Runs in O(N^2) per line by sweeping interval
/// starts and suffix-maximizing over interval ends.
pub fn directional_maximal(f: &SampledField, axis: usize) -> Result<SampledField> {
    let abs: Vec<f64> = f.values().iter().map(|v| v.norm()).collect();
    let out = directional_maximal_abs(f.spec(), &abs, axis)?;
    SampledField::from_values(
        f.spec().clone(),
        out.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    )
}

fn directional_maximal_abs(spec: &GridSpec, abs: &[f64], axis: usize) -> Result<Vec<f64>> {
    let dim = spec.dim();
    if axis >= dim {
        return Err(Error::InvalidParam(format!(
            "maximal axis {axis} out of range for dimension {dim}"
        )));
    }
    let n = spec.samples();
    let stride = n.pow((dim - 1 - axis) as u32);
    let block = stride * n;
    let blocks = abs.len() / block;
    let mut out = vec![0.0f64; abs.len()];
    let mut line = vec![0.0f64; n];
    let mut prefix = vec![0.0f64; n + 1];
    let mut best_for = vec![0.0f64; n];
    for b in 0..blocks {
        let base = b * block;
        for r in 0..stride {
            let start = base + r;
            for i in 0..n {
                line[i] = abs[start + i * stride];
            }
            // Singleton intervals first: guarantees M f >= |f| exactly,
            // immune to prefix-sum rounding.
            best_for.copy_from_slice(&line);
            prefix[0] = 0.0;
            for i in 0..n {
                prefix[i + 1] = prefix[i] + line[i];
            }
            for a in 0..n {
                let mut best = f64::NEG_INFINITY;
                for j in (a..n).rev() {
                    // avg over nodes [a, j]
                    let avg = (prefix[j + 1] - prefix[a]) / ((j + 1 - a) as f64);
                    if avg > best {
                        best = avg;
                    }
                    // best = max over b >= j of avg(a, b); node j sees every
                    // interval [a, b] containing it with this start a.
                    if best > best_for[j] {
                        best_for[j] = best;
                    }
                }
            }
            for i in 0..n {
                out[start + i * stride] = best_for[i];
            }
        }
    }
    Ok(out)
}

/// Iterated (strong-type) maximal function with inner power `theta`:
/// `M_theta f = (M_n ( ... (M_1 |f|^theta) ... ))^{1/theta}` where `M_k`
/// acts along axis k. Returns a real-valued field.
pub fn iterated_maximal(f: &SampledField, theta: f64) -> Result<SampledField> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "maximal inner power theta must be positive and finite, got {theta}"
        )));
    }
    let spec = f.spec().clone();
    let mut work: Vec<f64> = f.values().iter().map(|v| v.norm().powf(theta)).collect();
    for axis in 0..spec.dim() {
        work = directional_maximal_abs(&spec, &work, axis)?;
    }
    let inv = 1.0 / theta;
    SampledField::from_values(
        spec,
        work.into_iter().map(|v| Complex64::new(v.powf(inv), 0.0)).collect(),
    )
}

/// Outcome of a Peetre-type maximal comparison.
#[derive(Debug, Clone)]
pub struct PeetreReport {
    /// Worst observed `sup_y |f(y)| <R(x-y)>^{-n/theta} / M_theta f(x)`.
    pub worst_ratio: f64,
    /// Relative spectral L2 mass found outside the declared support box.
    pub support_leak: f64,
}

/// Measure the constant in the band-limited maximal bound. `f` must have
/// its spectrum inside the box `c_f + R [-2, 2]^n` (relative leak above
/// 1e-10 is refused); `big_r` is the box scale R, `theta` the inner power.
pub fn peetre_check(
    f: &SampledField,
    spectral_center: &[f64],
    big_r: f64,
    theta: f64,
) -> Result<PeetreReport> {
    let spec = f.spec().clone();
    let dim = spec.dim();
    if spectral_center.len() != dim {
        return Err(Error::InvalidParam(
            "spectral center dimension does not match the grid".into(),
        ));
    }
    if !(big_r.is_finite() && big_r > 0.0) {
        return Err(Error::InvalidParam(format!("box scale R must be positive, got {big_r}")));
    }
    let len = spec.len();
    if (len as u128) * (len as u128) > (1u128 << 32) {
        return Err(Error::CostGuard(format!(
            "pairwise maximal comparison on {len} nodes exceeds the cost ceiling"
        )));
    }
    let fhat = forward_transform(f);
    let support_leak = fhat.relative_mass_where(|xi| {
        xi.iter()
            .zip(spectral_center)
            .any(|(&x, &c)| (x - c).abs() > 2.0 * big_r)
    });
    if support_leak > 1e-10 {
        return Err(Error::SupportGuard(format!(
            "spectrum leaks {support_leak:.3e} (relative) outside the declared box"
        )));
    }

    let m_field = iterated_maximal(f, theta)?;
    let m_values = m_field.values();
    let abs: Vec<f64> = f.values().iter().map(|v| v.norm()).collect();
    // Flat coordinate table: coords[flat * dim + a].
    let mut coords = vec![0.0f64; len * dim];
    let mut x = [0.0f64; MAX_DIM];
    spec.for_each_node(|idx, flat| {
        spec.x_coords(idx, &mut x);
        coords[flat * dim..flat * dim + dim].copy_from_slice(&x[..dim]);
    });
    let exponent = dim as f64 / theta;
    let mut worst = 0.0f64;
    for xf in 0..len {
        let m = m_values[xf].re;
        if m < 1e-14 {
            continue;
        }
        let xc = &coords[xf * dim..xf * dim + dim];
        let mut lhs = 0.0f64;
        for yf in 0..len {
            let a = abs[yf];
            if a == 0.0 {
                continue;
            }
            let yc = &coords[yf * dim..yf * dim + dim];
            let mut d2 = 0.0;
            for a in 0..dim {
                let d = big_r * (xc[a] - yc[a]);
                d2 += d * d;
            }
            let w = (1.0 + d2).powf(-exponent / 2.0);
            let v = a * w;
            if v > lhs {
                lhs = v;
            }
        }
        let ratio = lhs / m;
        if ratio > worst {
            worst = ratio;
        }
    }
    Ok(PeetreReport { worst_ratio: worst, support_leak })
}
