//! Bounded admissible partitions of unity subordinate to a frequency
//! covering.
//!
//! Each patch carries a mother-bump window `phi_k(xi) = g((xi - xi_k)/rho_k)`
//! with `g(t) = exp(-1/(1-|t|^2))` inside the unit ball (radial log-dyadic
//! profiles for the shell family), and the partition is normalized
//! discretely: `psi_k(node) = phi_k(node) / sum_j phi_j(node)`, which makes
//! `sum_k psi_k = 1` hold to rounding on every covered frequency node. The
//! same formula evaluated off-grid gives a closed-form window for
//! finite-difference derivative checks.
//!
//! The quantitative checks mirror what makes such a family usable:
//! derivative bounds with the `<xi>^{|beta| alpha}` weighting, uniformity of
//! the rescaled windows, decay of the transforms of the dilated windows, and
//! the mixed-norm condition `|Q_k|^{-1} ||chi_{Q_k}|| ||F^{-1} psi_k||`.
//! "Uniform in k" is operationalized as: every per-window value within a
//! fixed factor of the family median. Truncating the covering at the grid's
//! margin leaves the outermost windows without outer neighbours, so their
//! normalized profiles end in a hard edge; the transform-based checks
//! therefore run over the *interior* windows, those whose entire support
//! sees a denominator above the floor.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::covering::{
    admissibility_check, build_covering, dyadic_covering, AdmissibilityReport, CoveringParams,
    FrequencyPatch, PatchGeometry,
};
use crate::error::{Error, Result};
use crate::grid::{
    forward_transform, inverse_transform, sample_function, GridSpec, Spectrum, MAX_DIM,
};
use crate::mixed::{mixed_norm, MixedExponents};

/// Partition denominator floor: every covered node must see this much total
/// bump mass, otherwise the covering is too sparse to normalize stably.
pub const DENOMINATOR_FLOOR: f64 = 0.1;

/// Fraction of the Nyquist radius the family is required to cover.
pub const DEFAULT_MARGIN: f64 = 0.9;

/// Relative L1 mass of `F^{-1} psi_k` allowed outside the half-size box of
/// the auxiliary grid before the norm condition refuses the result.
const WINDOW_TAIL_GUARD: f64 = 1e-6;

/// Mother bump `g(t) = exp(-1/(1 - |t|^2))` for `|t| < 1`, else 0.
#[inline]
pub fn mother_bump(t_norm_sqr: f64) -> f64 {
    if t_norm_sqr < 1.0 {
        (-1.0 / (1.0 - t_norm_sqr)).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `u <= 0`, 1 for `u >= 1`, `C^inf` monotone between.
#[inline]
fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// One window: its patch and the normalized samples on the frequency nodes
/// it touches (sparse: `(flat node, value)`).
#[derive(Debug, Clone)]
pub struct Window {
    pub patch: FrequencyPatch,
    pub samples: Vec<(u32, f64)>,
}

/// A partition-of-unity family over a covering, sampled on a grid.
#[derive(Debug, Clone)]
pub struct BapuFamily {
    pub grid: GridSpec,
    /// Declared geometry exponent (1.0 for the dyadic shell family).
    pub alpha: f64,
    /// Radius factor the covering was built with (1.0 reported for shells).
    pub radius_factor: f64,
    pub margin: f64,
    pub delta: f64,
    pub windows: Vec<Window>,
    /// `sum_k psi_k` at every frequency node (1 on the covered region,
    /// decaying to 0 beyond it).
    partition: Vec<f64>,
    /// Per-window indices of patches whose closed supports may touch it
    /// (includes the window itself); enough to evaluate the normalization
    /// denominator anywhere inside the window's support.
    neighbors: Vec<Vec<usize>>,
}

fn closed_touch(a: &FrequencyPatch, b: &FrequencyPatch) -> bool {
    const SLACK: f64 = 1e-9;
    match (&a.geometry, &b.geometry) {
        (PatchGeometry::Cube, PatchGeometry::Cube) => a
            .center
            .iter()
            .zip(&b.center)
            .all(|(&x, &y)| (x - y).abs() <= a.rho + b.rho + SLACK),
        (
            PatchGeometry::Annulus { inner: i1, outer: o1 },
            PatchGeometry::Annulus { inner: i2, outer: o2 },
        ) => *i1 <= o2 + SLACK && *i2 <= o1 + SLACK,
        _ => true,
    }
}

fn phi_on_patch(patch: &FrequencyPatch, xi: &[f64]) -> f64 {
    match &patch.geometry {
        PatchGeometry::Cube => {
            let mut t2 = 0.0;
            for (&x, &c) in xi.iter().zip(&patch.center) {
                let t = (x - c) / patch.rho;
                t2 += t * t;
                if t2 >= 1.0 {
                    return 0.0;
                }
            }
            mother_bump(t2)
        }
        PatchGeometry::Annulus { inner, outer } => {
            let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if *inner == 0.0 {
                // Central ball {r <= outer}: flat inside half the outer
                // radius, smooth log-radial falloff to the rim.
                if r <= 0.5 * *outer {
                    1.0
                } else if r >= *outer {
                    0.0
                } else {
                    1.0 - smooth_step((r / (0.5 * outer)).log2())
                }
            } else {
                // Shell {inner <= r <= outer} peaking at 2*inner: a tent in
                // log2(r) from complementary smooth steps, so adjacent
                // shells sum to exactly 1 between their peaks.
                if r <= *inner || r >= *outer {
                    return 0.0;
                }
                let u = (r / (2.0 * inner)).log2();
                if u < 0.0 {
                    smooth_step(u + 1.0)
                } else {
                    1.0 - smooth_step(u)
                }
            }
        }
    }
}

/// Midpoint lattice over the support cube of a patch, `per_axis` points per
/// axis, strictly inside the boundary.
fn patch_lattice(patch: &FrequencyPatch, dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let mut points = Vec::with_capacity(per_axis.pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        let mut p = Vec::with_capacity(dim);
        for a in 0..dim {
            let t = (idx[a] as f64 + 0.5) / per_axis as f64;
            p.push(patch.center[a] - patch.rho + 2.0 * patch.rho * t);
        }
        points.push(p);
        let mut done = true;
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < per_axis {
                done = false;
                break;
            }
            idx[a] = 0;
        }
        if done {
            break;
        }
    }
    points
}

impl BapuFamily {
    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    /// `sum_k psi_k` sampled at every frequency node.
    pub fn partition_sums(&self) -> &[f64] {
        &self.partition
    }

    /// Unnormalized bump of window `idx` at an arbitrary frequency point.
    pub fn phi_at(&self, idx: usize, xi: &[f64]) -> f64 {
        phi_on_patch(&self.windows[idx].patch, xi)
    }

    /// Normalization denominator near window `idx` (only its neighbours can
    /// contribute inside its support).
    pub fn denominator_near(&self, idx: usize, xi: &[f64]) -> f64 {
        self.neighbors[idx]
            .iter()
            .map(|&j| phi_on_patch(&self.windows[j].patch, xi))
            .sum()
    }

    /// Closed-form normalized window at an arbitrary frequency point.
    pub fn psi_at(&self, idx: usize, xi: &[f64]) -> f64 {
        let phi = self.phi_at(idx, xi);
        if phi == 0.0 {
            return 0.0;
        }
        phi / self.denominator_near(idx, xi)
    }

    /// Dense spectrum samples of one window (zeros off its support).
    pub fn window_values(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; self.grid.len()];
        for &(flat, v) in &self.windows[idx].samples {
            out[flat as usize] = v;
        }
        out
    }

    /// Windows whose entire support sees a normalization denominator above
    /// the floor. Only these have the smooth compactly supported profile
    /// the uniformity statements speak about; the outermost windows of a
    /// truncated covering end in a hard edge and are excluded.
    pub fn interior_windows(&self) -> Vec<usize> {
        let dim = self.grid.dim();
        let per_axis = if dim == 1 { 33 } else { 9 };
        let top_outer = self
            .windows
            .iter()
            .map(|o| match o.patch.geometry {
                PatchGeometry::Annulus { outer, .. } => outer,
                PatchGeometry::Cube => 0.0,
            })
            .fold(0.0f64, f64::max);
        let mut out = Vec::new();
        'win: for (wi, w) in self.windows.iter().enumerate() {
            match w.patch.geometry {
                PatchGeometry::Cube => {
                    for p in patch_lattice(&w.patch, dim, per_axis) {
                        if self.denominator_near(wi, &p) < self.delta {
                            continue 'win;
                        }
                    }
                    out.push(wi);
                }
                // Shells: interior iff not the outermost (whose outer flank
                // has no successor to share mass with).
                PatchGeometry::Annulus { outer, .. } => {
                    if outer < top_outer {
                        out.push(wi);
                    }
                }
            }
        }
        out
    }

    /// Largest deviation of `sum_k psi_k` from 1 over nodes in the covered
    /// ball `|xi| <= margin * Omega`.
    pub fn partition_deviation(&self) -> f64 {
        self.partition_deviation_skipping(None)
    }

    /// Same, with one window removed — the negative control showing the
    /// partition identity actually depends on every member.
    pub fn partition_deviation_skipping(&self, skip: Option<usize>) -> f64 {
        let mut sums = self.partition.clone();
        if let Some(idx) = skip {
            for &(flat, v) in &self.windows[idx].samples {
                sums[flat as usize] -= v;
            }
        }
        let radius = self.margin * self.grid.nyquist();
        let mut xi = [0.0f64; MAX_DIM];
        let mut worst = 0.0f64;
        let dim = self.grid.dim();
        self.grid.for_each_node(|idx, flat| {
            self.grid.xi_coords(idx, &mut xi);
            let r2: f64 = xi[..dim].iter().map(|&x| x * x).sum();
            if r2.sqrt() <= radius {
                let d = (sums[flat] - 1.0).abs();
                if d > worst {
                    worst = d;
                }
            }
        });
        worst
    }

    /// Window dump as deterministic CSV: `k, node, psi`.
    pub fn windows_csv(&self) -> String {
        let mut out = String::from("k,node,psi\n");
        let n = self.grid.samples();
        let dim = self.grid.dim();
        for w in &self.windows {
            let label = w.patch.key.label();
            for &(flat, v) in &w.samples {
                let mut node = String::new();
                let mut rest = flat as usize;
                let mut idx = [0usize; MAX_DIM];
                for a in (0..dim).rev() {
                    idx[a] = rest % n;
                    rest /= n;
                }
                for j in idx[..dim].iter() {
                    if !node.is_empty() {
                        node.push(';');
                    }
                    let _ = write!(node, "{j}");
                }
                let _ = writeln!(out, "{label},{node},{v}");
            }
        }
        out
    }
}

/// Sample windows over the patches and normalize discretely. `alpha` is the
/// declared geometry exponent used in downstream weightings; the covered
/// ball is checked against the denominator floor `delta`.
pub fn build_bapu(
    patches: Vec<FrequencyPatch>,
    grid: &GridSpec,
    alpha: f64,
    radius_factor: f64,
    margin: f64,
    delta: f64,
) -> Result<BapuFamily> {
    if patches.is_empty() {
        return Err(Error::InvalidParam(
            "cannot build a partition over an empty covering".into(),
        ));
    }
    let dim = grid.dim();
    let len = grid.len();
    // Raw bump samples per patch (sparse) and the shared denominator.
    let mut raw: Vec<Vec<(u32, f64)>> = vec![Vec::new(); patches.len()];
    let mut denom = vec![0.0f64; len];
    let mut xi = [0.0f64; MAX_DIM];
    grid.for_each_node(|idx, flat| {
        grid.xi_coords(idx, &mut xi);
        for (pi, p) in patches.iter().enumerate() {
            let v = phi_on_patch(p, &xi[..dim]);
            if v > 0.0 {
                raw[pi].push((flat as u32, v));
                denom[flat] += v;
            }
        }
    });

    // Every node of the covered ball needs denominator mass >= delta.
    let radius = margin * grid.nyquist();
    let mut bad: Option<(usize, f64)> = None;
    grid.for_each_node(|idx, flat| {
        if bad.is_some() {
            return;
        }
        grid.xi_coords(idx, &mut xi);
        let r2: f64 = xi[..dim].iter().map(|&x| x * x).sum();
        if r2.sqrt() <= radius && denom[flat] < delta {
            bad = Some((flat, denom[flat]));
        }
    });
    if let Some((flat, d)) = bad {
        return Err(Error::Coverage(format!(
            "partition denominator {d:.3e} below floor {delta} at covered node {flat}"
        )));
    }

    let mut partition = vec![0.0f64; len];
    let windows: Vec<Window> = patches
        .iter()
        .zip(raw)
        .map(|(p, samples)| {
            let samples: Vec<(u32, f64)> = samples
                .into_iter()
                .map(|(flat, v)| {
                    let psi = v / denom[flat as usize];
                    partition[flat as usize] += psi;
                    (flat, psi)
                })
                .collect();
            Window { patch: p.clone(), samples }
        })
        .collect();

    let neighbors: Vec<Vec<usize>> = windows
        .iter()
        .map(|w| {
            windows
                .iter()
                .enumerate()
                .filter(|(_, o)| closed_touch(&w.patch, &o.patch))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    Ok(BapuFamily {
        grid: grid.clone(),
        alpha,
        radius_factor,
        margin,
        delta,
        windows,
        partition,
        neighbors,
    })
}

/// Calibrate the radius factor: start at 0.75 and grow by 1.25x until the
/// covering closes the margin ball and the partition denominator clears its
/// floor. Returns the family, its admissibility report, and the factor.
pub fn calibrate(
    alpha: f64,
    grid: &GridSpec,
    margin: f64,
) -> Result<(BapuFamily, AdmissibilityReport, f64)> {
    let mut factor = 0.75f64;
    let mut last_err = String::new();
    for _ in 0..32 {
        let params = CoveringParams { alpha, radius_factor: factor, margin, kmax: None };
        match build_covering(&params, grid).and_then(|patches| {
            let report = admissibility_check(&patches, grid, alpha, margin)?;
            if report.coverage_deficit > 0.0 {
                return Err(Error::Coverage(format!(
                    "coverage deficit {:.3e} at radius factor {factor:.4}",
                    report.coverage_deficit
                )));
            }
            let fam = build_bapu(patches, grid, alpha, factor, margin, DENOMINATOR_FLOOR)?;
            Ok((fam, report))
        }) {
            Ok((fam, report)) => return Ok((fam, report, factor)),
            Err(Error::Coverage(msg)) => {
                last_err = msg;
                factor *= 1.25;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Calibration(format!(
        "radius factor grew past {factor:.2} without closing the covering: {last_err}"
    )))
}

/// Build the family for any `alpha` in [0, 1]: lattice cubes with an
/// optional explicit radius factor (calibrated when absent), dyadic shells
/// at `alpha = 1`.
pub fn build_family(
    alpha: f64,
    grid: &GridSpec,
    margin: f64,
    radius_factor: Option<f64>,
) -> Result<(BapuFamily, AdmissibilityReport, f64)> {
    if alpha == 1.0 {
        let patches = dyadic_covering(grid, margin)?;
        let report = admissibility_check(&patches, grid, alpha, margin)?;
        if report.coverage_deficit > 0.0 {
            return Err(Error::Coverage(format!(
                "dyadic covering leaves deficit {:.3e}",
                report.coverage_deficit
            )));
        }
        let fam = build_bapu(patches, grid, alpha, 1.0, margin, DENOMINATOR_FLOOR)?;
        return Ok((fam, report, 1.0));
    }
    match radius_factor {
        Some(factor) => {
            let params = CoveringParams { alpha, radius_factor: factor, margin, kmax: None };
            let patches = build_covering(&params, grid)?;
            let report = admissibility_check(&patches, grid, alpha, margin)?;
            if report.coverage_deficit > 0.0 {
                return Err(Error::Coverage(format!(
                    "coverage deficit {:.3e} at radius factor {factor}; margin-ball node left uncovered",
                    report.coverage_deficit
                )));
            }
            let fam = build_bapu(patches, grid, alpha, factor, margin, DENOMINATOR_FLOOR)?;
            Ok((fam, report, factor))
        }
        None => calibrate(alpha, grid, margin),
    }
}

// ---------------------------------------------------------------------------
// Uniformity reporting
// ---------------------------------------------------------------------------

/// Per-window values of one scalar diagnostic.
#[derive(Debug, Clone)]
pub struct UniformityReport {
    pub label: String,
    pub keys: Vec<String>,
    pub values: Vec<f64>,
}

impl UniformityReport {
    pub fn new(label: String, keys: Vec<String>, values: Vec<f64>) -> Self {
        UniformityReport { label, keys, values }
    }

    pub fn median(&self) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }

    /// Worst multiplicative deviation from the median (>= 1).
    pub fn worst_factor(&self) -> f64 {
        let med = self.median();
        self.values
            .iter()
            .map(|&v| {
                if v == 0.0 && med == 0.0 {
                    1.0
                } else {
                    (v / med).max(med / v)
                }
            })
            .fold(1.0f64, f64::max)
    }

    /// Every value within `factor` of the median, two-sided.
    pub fn within_factor(&self, factor: f64) -> bool {
        self.worst_factor() <= factor
    }

    /// Regroup values by dyadic shells of the given key magnitudes, reducing
    /// each shell to its median; used when uniformity is judged shell by
    /// shell rather than member by member.
    pub fn shell_medians(&self, magnitudes: &[f64]) -> UniformityReport {
        let mut buckets: std::collections::BTreeMap<i32, Vec<f64>> = Default::default();
        for (&m, &v) in magnitudes.iter().zip(&self.values) {
            let shell = m.log2().floor() as i32;
            buckets.entry(shell).or_default().push(v);
        }
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (shell, vals) in buckets {
            let sub = UniformityReport::new(String::new(), Vec::new(), vals);
            keys.push(format!("2^{shell}"));
            values.push(sub.median());
        }
        UniformityReport::new(format!("{} (shell medians)", self.label), keys, values)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("k,value\n");
        for (k, v) in self.keys.iter().zip(&self.values) {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Finite differences on the closed-form windows
// ---------------------------------------------------------------------------

/// Central finite difference of a scalar function for a multi-index `beta`,
/// recursing one axis order at a time with fixed step `eps`.
fn finite_difference(
    f: &mut dyn FnMut(&[f64]) -> f64,
    beta: &[usize],
    point: &[f64],
    eps: f64,
) -> f64 {
    match beta.iter().position(|&b| b > 0) {
        None => f(point),
        Some(axis) => {
            let mut lower = beta.to_vec();
            lower[axis] -= 1;
            let mut p = point.to_vec();
            p[axis] = point[axis] + eps;
            let plus = finite_difference(f, &lower, &p, eps);
            p[axis] = point[axis] - eps;
            let minus = finite_difference(f, &lower, &p, eps);
            (plus - minus) / (2.0 * eps)
        }
    }
}

/// All multi-indices of the given dimension with `1 <= |beta| <= max_order`,
/// ordered by total order then lexicographically.
pub(crate) fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    fn fill(dim: usize, order: usize, prefix: &mut Vec<usize>, level: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            let used: usize = prefix.iter().sum();
            prefix.push(order - used);
            level.push(prefix.clone());
            prefix.pop();
            return;
        }
        let used: usize = prefix.iter().sum();
        for v in 0..=(order - used) {
            prefix.push(v);
            fill(dim, order, prefix, level);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for order in 1..=max_order {
        fill(dim, order, &mut Vec::new(), &mut out);
    }
    out
}

fn require_lattice_family(fam: &BapuFamily, what: &str) -> Result<()> {
    if fam
        .windows
        .iter()
        .any(|w| !matches!(w.patch.geometry, PatchGeometry::Cube))
    {
        return Err(Error::InvalidParam(format!(
            "{what} applies to lattice (cube) families, not shell families"
        )));
    }
    Ok(())
}

/// Sup of `<xi>^{|beta| alpha} |d^beta psi_k|` over each window, one report
/// per multi-index up to `max_order`. Uniformity of these numbers across k
/// is what "smooth uniformly at the patch scale" means here. Sample points
/// where the denominator sits below the floor are skipped: there the window
/// is an unnormalized fringe, not part of the partition proper.
pub fn derivative_bound_check(
    fam: &BapuFamily,
    max_order: usize,
) -> Result<Vec<(Vec<usize>, UniformityReport)>> {
    require_lattice_family(fam, "derivative bound check")?;
    let dim = fam.grid.dim();
    let per_axis = if dim == 1 { 33 } else { 9 };
    let mut reports = Vec::new();
    for beta in multi_indices(dim, max_order) {
        let order: usize = beta.iter().sum();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (wi, w) in fam.windows.iter().enumerate() {
            let eps = 1e-3 * w.patch.rho;
            let mut sup = 0.0f64;
            for point in patch_lattice(&w.patch, dim, per_axis) {
                if fam.denominator_near(wi, &point) < fam.delta {
                    continue;
                }
                let mut eval = |xi: &[f64]| fam.psi_at(wi, xi);
                let d = finite_difference(&mut eval, &beta, &point, eps).abs();
                let xi2: f64 = point.iter().map(|&x| x * x).sum();
                let weighted = (1.0 + xi2).sqrt().powf(order as f64 * fam.alpha) * d;
                if weighted > sup {
                    sup = weighted;
                }
            }
            keys.push(w.patch.key.label());
            values.push(sup);
        }
        reports.push((
            beta.clone(),
            UniformityReport::new(format!("derivative bound |beta|={order}"), keys, values),
        ));
    }
    Ok(reports)
}

/// Rescaled-window diagnostics: `psi~_k(xi) = psi_k(|xi_k|^alpha xi + xi_k)`
/// must live in a common ball and have uniformly bounded derivatives.
#[derive(Debug, Clone)]
pub struct RescaledReport {
    /// Half-width of each rescaled support (cube geometry).
    pub support_radii: UniformityReport,
    /// Per multi-index derivative sups.
    pub derivative_sups: Vec<(Vec<usize>, UniformityReport)>,
}

pub fn rescaled_window_check(fam: &BapuFamily, max_order: usize) -> Result<RescaledReport> {
    require_lattice_family(fam, "rescaled window check")?;
    let dim = fam.grid.dim();
    let per_axis = if dim == 1 { 33 } else { 9 };
    let mut radii_keys = Vec::new();
    let mut radii = Vec::new();
    let mut scales = Vec::new();
    for w in &fam.windows {
        let xi_norm = w.patch.center.iter().map(|&c| c * c).sum::<f64>().sqrt();
        let scale = xi_norm.powf(fam.alpha);
        radii_keys.push(w.patch.key.label());
        radii.push(w.patch.rho / scale);
        scales.push(scale);
    }
    let betas = multi_indices(dim, max_order);
    let mut derivative_sups = Vec::new();
    for beta in betas {
        let order: usize = beta.iter().sum();
        let mut values = Vec::new();
        for (wi, w) in fam.windows.iter().enumerate() {
            let scale = scales[wi];
            let r = radii[wi];
            let eps = 1e-3 * r;
            let mut sup = 0.0f64;
            let mut mapped = vec![0.0f64; dim];
            let mut idx = vec![0usize; dim];
            loop {
                let mut point = Vec::with_capacity(dim);
                for a in 0..dim {
                    let t = (idx[a] as f64 + 0.5) / per_axis as f64;
                    point.push(-r + 2.0 * r * t);
                }
                for a in 0..dim {
                    mapped[a] = scale * point[a] + w.patch.center[a];
                }
                if fam.denominator_near(wi, &mapped) >= fam.delta {
                    let mut eval = |u: &[f64]| {
                        let xi: Vec<f64> = u
                            .iter()
                            .zip(&w.patch.center)
                            .map(|(&ui, &ci)| scale * ui + ci)
                            .collect();
                        fam.psi_at(wi, &xi)
                    };
                    let d = finite_difference(&mut eval, &beta, &point, eps).abs();
                    if d > sup {
                        sup = d;
                    }
                }
                let mut done = true;
                for a in (0..dim).rev() {
                    idx[a] += 1;
                    if idx[a] < per_axis {
                        done = false;
                        break;
                    }
                    idx[a] = 0;
                }
                if done {
                    break;
                }
            }
            values.push(sup);
        }
        derivative_sups.push((
            beta.clone(),
            UniformityReport::new(
                format!("rescaled derivative |beta|={order}"),
                radii_keys.clone(),
                values,
            ),
        ));
    }
    Ok(RescaledReport {
        support_radii: UniformityReport::new("rescaled support radius".into(), radii_keys, radii),
        derivative_sups,
    })
}

/// Decay of the transforms of the dilated windows `mu_k(xi) = psi_k(a_k xi)`:
/// reports `sup_y |mu^_k(y)| <y>^m / a_k^{(m-n)(1-alpha)}` per interior
/// window for each requested `m`. The dilated supports live in a fixed ball,
/// so one fine auxiliary grid serves the whole family.
pub fn dilated_window_decay_check(
    fam: &BapuFamily,
    moments: &[u32],
    fine: &GridSpec,
) -> Result<Vec<(u32, UniformityReport)>> {
    require_lattice_family(fam, "dilated window decay check")?;
    if fine.dim() != fam.grid.dim() {
        return Err(Error::GridMismatch(
            "auxiliary grid dimension must match the family".into(),
        ));
    }
    let dim = fam.grid.dim();
    let members = fam.interior_windows();
    if members.is_empty() {
        return Err(Error::Coverage("no interior windows to check".into()));
    }
    let mut spectra = Vec::with_capacity(members.len());
    for &wi in &members {
        let w = &fam.windows[wi];
        let a_k = w.patch.scale;
        // The dilated support is the cube of half-width rho/a_k around
        // xi_k/a_k; it must fit well inside the auxiliary box.
        let reach = w
            .patch
            .center
            .iter()
            .map(|&c| c.abs() / a_k + w.patch.rho / a_k)
            .fold(0.0f64, f64::max);
        if reach > 0.9 * fine.half_width() {
            return Err(Error::SupportGuard(format!(
                "dilated window {} reaches {reach:.3}, auxiliary box half-width {}",
                w.patch.key.label(),
                fine.half_width()
            )));
        }
        let field = sample_function(fine, |u| {
            let xi: Vec<f64> = u.iter().map(|&ui| a_k * ui).collect();
            Complex64::new(fam.psi_at(wi, &xi), 0.0)
        })?;
        spectra.push(forward_transform(&field));
    }
    let mut out = Vec::new();
    for &m in moments {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (pos, &wi) in members.iter().enumerate() {
            let w = &fam.windows[wi];
            let a_k = w.patch.scale;
            let norm = a_k.powf((m as f64 - dim as f64) * (1.0 - fam.alpha));
            let mut sup = 0.0f64;
            let spec = &spectra[pos];
            let mut y = [0.0f64; MAX_DIM];
            fine.for_each_node(|idx, flat| {
                fine.xi_coords(idx, &mut y);
                let y2: f64 = y[..dim].iter().map(|&v| v * v).sum();
                let weight = (1.0 + y2).sqrt().powi(m as i32);
                let v = spec.values()[flat].norm() * weight / norm;
                if v > sup {
                    sup = v;
                }
            });
            keys.push(w.patch.key.label());
            values.push(sup);
        }
        out.push((m, UniformityReport::new(format!("dilated decay m={m}"), keys, values)));
    }
    Ok(out)
}

/// Zeroth-moment identity for one dilated window: its transform at `y = 0`
/// equals `(2pi)^{-n/2} a_k^{-n}` times the integral of `psi_k` (checked by
/// independent midpoint quadrature over the support cube).
pub fn dilated_moment_identity(
    fam: &BapuFamily,
    idx: usize,
    fine: &GridSpec,
) -> Result<(f64, f64)> {
    require_lattice_family(fam, "dilated moment identity")?;
    let dim = fam.grid.dim();
    let w = &fam.windows[idx];
    let a_k = w.patch.scale;
    let field = sample_function(fine, |u| {
        let xi: Vec<f64> = u.iter().map(|&ui| a_k * ui).collect();
        Complex64::new(fam.psi_at(idx, &xi), 0.0)
    })?;
    let spec = forward_transform(&field);
    let zero_slot = {
        let n = fine.samples();
        let mut flat = 0usize;
        for _ in 0..dim {
            flat = flat * n + n / 2;
        }
        flat
    };
    let got = spec.values()[zero_slot].re;
    let steps = if dim == 1 { 4096 } else { 256 };
    let points = patch_lattice(&w.patch, dim, steps);
    let cell = (2.0 * w.patch.rho / steps as f64).powi(dim as i32);
    let integral: f64 = points.iter().map(|p| fam.psi_at(idx, p)).sum::<f64>() * cell;
    let expect = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0)
        * a_k.powf(-(dim as f64))
        * integral;
    Ok((got, expect))
}

/// Mixed-norm condition value per interior window:
/// `|Q_k|^{-1} ||chi_{Q_k}||_{L_ptilde} ||F^{-1} psi_k||_{L_ptilde}`.
///
/// The indicator factor is exact for cubes. The kernel factor needs a box
/// several times wider than the family grid before its tail is negligible,
/// so the window is re-evaluated in closed form on an auxiliary grid with
/// the same spatial resolution and a progressively wider box; the run fails
/// if the kernel keeps more than `1e-6` of its mass in the outer half of
/// the widest box tried.
pub fn bapu_norm_condition(fam: &BapuFamily, p: &MixedExponents) -> Result<UniformityReport> {
    require_lattice_family(fam, "norm condition")?;
    let dim = fam.grid.dim();
    if p.dim() != dim {
        return Err(Error::GridMismatch(
            "exponent vector dimension must match the family grid".into(),
        ));
    }
    let ptilde = p.tilde();
    let members = fam.interior_windows();
    if members.is_empty() {
        return Err(Error::Coverage("no interior windows to check".into()));
    }
    let factors: &[usize] = if dim == 1 { &[8, 16, 64] } else { &[8, 16] };
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for &wi in &members {
        let w = &fam.windows[wi];
        let rho = w.patch.rho;
        let measure = w.patch.measure(dim);
        let chi: f64 = ptilde
            .components()
            .iter()
            .map(|&pj| (2.0 * rho).powf(1.0 / pj))
            .product();
        let mut kernel_norm = None;
        let mut last_leak = 0.0f64;
        for &f in factors {
            let aux = GridSpec::new(
                dim,
                fam.grid.half_width() * f as f64,
                fam.grid.samples() * f,
            )?;
            // The support must fit strictly inside the auxiliary node range.
            let omega = aux.nyquist();
            if w
                .patch
                .center
                .iter()
                .any(|&c| c.abs() + rho >= omega - aux.freq_step())
            {
                return Err(Error::SupportGuard(format!(
                    "window {} support exceeds the auxiliary frequency range",
                    w.patch.key.label()
                )));
            }
            let spec = sample_window_spectrum(fam, wi, &aux);
            let kernel = inverse_transform(&spec);
            let half = aux.half_width() / 2.0;
            let mut inside = 0.0f64;
            let mut total = 0.0f64;
            let mut x = [0.0f64; MAX_DIM];
            aux.for_each_node(|idx, flat| {
                aux.x_coords(idx, &mut x);
                let v = kernel.values()[flat].norm();
                total += v;
                if x[..dim].iter().all(|&c| c.abs() <= half) {
                    inside += v;
                }
            });
            last_leak = if total > 0.0 { (total - inside) / total } else { 0.0 };
            if last_leak <= WINDOW_TAIL_GUARD {
                kernel_norm = Some(mixed_norm(&kernel, &ptilde)?);
                break;
            }
        }
        let kernel_norm = kernel_norm.ok_or_else(|| {
            Error::SupportGuard(format!(
                "window {} kernel keeps {last_leak:.3e} of its mass in the outer half box even on the widest auxiliary grid",
                w.patch.key.label()
            ))
        })?;
        keys.push(w.patch.key.label());
        values.push(chi * kernel_norm / measure);
    }
    Ok(UniformityReport::new(
        format!("norm condition p={:?}", p.components()),
        keys,
        values,
    ))
}

/// Closed-form samples of window `wi` on an arbitrary grid, touching only
/// the nodes inside the support cube.
fn sample_window_spectrum(fam: &BapuFamily, wi: usize, aux: &GridSpec) -> Spectrum {
    let dim = aux.dim();
    let n = aux.samples();
    let dxi = aux.freq_step();
    let w = &fam.windows[wi];
    let mut lo = [0usize; MAX_DIM];
    let mut hi = [0usize; MAX_DIM];
    for a in 0..dim {
        let c = w.patch.center[a];
        let l = ((c - w.patch.rho) / dxi).ceil() as i64 + (n / 2) as i64;
        let h = ((c + w.patch.rho) / dxi).floor() as i64 + (n / 2) as i64;
        lo[a] = l.clamp(0, n as i64 - 1) as usize;
        hi[a] = h.clamp(0, n as i64 - 1) as usize;
    }
    let mut values = vec![Complex64::default(); aux.len()];
    let mut idx = lo;
    let mut xi = [0.0f64; MAX_DIM];
    loop {
        let mut flat = 0usize;
        for a in 0..dim {
            flat = flat * n + idx[a];
        }
        aux.xi_coords(&idx[..dim], &mut xi);
        let v = fam.psi_at(wi, &xi[..dim]);
        if v != 0.0 {
            values[flat] = Complex64::new(v, 0.0);
        }
        let mut done = true;
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] <= hi[a] {
                done = false;
                break;
            }
            idx[a] = lo[a];
        }
        if done {
            break;
        }
    }
    Spectrum::from_values(aux.clone(), values).expect("finite window samples")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice_family(alpha: f64, grid: &GridSpec) -> BapuFamily {
        build_family(alpha, grid, DEFAULT_MARGIN, None).unwrap().0
    }

    #[test]
    fn partition_sums_to_one_on_covered_ball() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        for &alpha in &[0.0, 0.25, 0.5, 0.75] {
            let fam = lattice_family(alpha, &grid);
            let dev = fam.partition_deviation();
            assert!(dev <= 1e-12, "alpha={alpha}: deviation {dev}");
        }
    }

    #[test]
    fn dyadic_partition_sums_to_one() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let (fam, report, _) = build_family(1.0, &grid, DEFAULT_MARGIN, None).unwrap();
        assert_eq!(report.coverage_deficit, 0.0);
        assert!(fam.partition_deviation() <= 1e-12);
    }

    #[test]
    fn zeroing_a_window_breaks_the_partition() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let fam = lattice_family(0.5, &grid);
        let dev = fam.partition_deviation_skipping(Some(0));
        assert!(dev > 0.1, "deviation after removing a window: {dev}");
    }

    #[test]
    fn windows_vanish_off_their_patches_and_stay_in_unit_range() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let fam = lattice_family(0.5, &grid);
        let mut xi = [0.0f64; MAX_DIM];
        for (wi, w) in fam.windows.iter().enumerate() {
            for &(flat, v) in &w.samples {
                assert!(v > 0.0 && v <= 1.0 + 1e-15);
                let idx = [flat as usize];
                grid.xi_coords(&idx, &mut xi);
                assert!(w.patch.contains(&xi[..1]), "window {wi} sampled outside its patch");
            }
            let outside = [w.patch.center[0] + w.patch.rho * 1.01];
            assert_eq!(fam.psi_at(wi, &outside), 0.0);
        }
    }

    #[test]
    fn calibration_grows_radius_until_covered() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let (fam, report, factor) = calibrate(0.0, &grid, DEFAULT_MARGIN).unwrap();
        // The unit lattice has no member at the origin, so radius factors
        // at or below 1 leave a hole there.
        assert!(factor > 1.0, "calibrated factor {factor}");
        assert_eq!(report.coverage_deficit, 0.0);
        assert!(fam.partition_deviation() <= 1e-12);
    }

    #[test]
    fn forced_small_radius_fails_with_coverage_error() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let err = build_family(0.5, &grid, DEFAULT_MARGIN, Some(0.1)).unwrap_err();
        assert!(matches!(err, Error::Coverage(_)), "got {err:?}");
    }

    #[test]
    fn interior_windows_exclude_the_truncation_edge() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let fam = lattice_family(0.0, &grid);
        let interior = fam.interior_windows();
        assert!(!interior.is_empty());
        let kmax = fam
            .windows
            .iter()
            .map(|w| w.patch.key.magnitude())
            .fold(0.0f64, f64::max);
        for wi in 0..fam.window_count() {
            let mag = fam.windows[wi].patch.key.magnitude();
            if mag == kmax {
                assert!(!interior.contains(&wi), "outermost window marked interior");
            } else {
                assert!(interior.contains(&wi), "window |k|={mag} should be interior");
            }
        }
    }

    /// Weighted derivative sups are uniform across windows at the declared
    /// alpha, and detectably non-uniform when the declared exponent lies.
    #[test]
    fn derivative_bounds_uniform_at_declared_alpha() {
        let grid = GridSpec::new(1, 16.0, 4096).unwrap();
        let fam = lattice_family(0.5, &grid);
        assert!(fam.window_count() >= 30, "{} windows", fam.window_count());
        for (beta, report) in derivative_bound_check(&fam, 2).unwrap() {
            assert!(
                report.within_factor(4.0),
                "beta={beta:?}: worst factor {}",
                report.worst_factor()
            );
        }
    }

    #[test]
    fn derivative_bounds_catch_wrong_declared_alpha() {
        let grid = GridSpec::new(1, 16.0, 4096).unwrap();
        let mut fam = lattice_family(0.25, &grid);
        fam.alpha = 0.75; // misdeclare the geometry exponent
        let reports = derivative_bound_check(&fam, 1).unwrap();
        let (_, first_order) = &reports[0];
        assert!(
            !first_order.within_factor(4.0),
            "mismatch should blow the factor-4 budget, got {}",
            first_order.worst_factor()
        );
    }

    #[test]
    fn rescaled_windows_share_support_and_bounds() {
        let grid = GridSpec::new(1, 16.0, 4096).unwrap();
        let fam = lattice_family(0.5, &grid);
        let report = rescaled_window_check(&fam, 2).unwrap();
        let max_radius = report
            .support_radii
            .values
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
        // <xi>/|xi| <= sqrt(3/2) at the innermost center, so the rescaled
        // supports all sit inside a ball just above the radius factor.
        assert!(max_radius <= 1.25 * fam.radius_factor, "radius {max_radius}");
        for (beta, sups) in &report.derivative_sups {
            assert!(
                sups.within_factor(4.0),
                "beta={beta:?}: worst factor {}",
                sups.worst_factor()
            );
        }
    }

    #[test]
    fn dilated_window_transforms_decay_uniformly() {
        let grid = GridSpec::new(1, 16.0, 4096).unwrap();
        let fam = lattice_family(0.5, &grid);
        let fine = GridSpec::new(1, 4.0, 1024).unwrap();
        for (m, report) in dilated_window_decay_check(&fam, &[2, 4], &fine).unwrap() {
            assert!(
                report.within_factor(4.0),
                "m={m}: worst factor {}",
                report.worst_factor()
            );
        }
    }

    #[test]
    fn dilated_zero_moment_matches_quadrature() {
        let grid = GridSpec::new(1, 16.0, 1024).unwrap();
        let fam = lattice_family(0.5, &grid);
        let fine = GridSpec::new(1, 4.0, 1024).unwrap();
        // The innermost window dilates to the widest profile, the one the
        // auxiliary grid resolves best.
        let idx = fam
            .interior_windows()
            .into_iter()
            .min_by(|&a, &b| {
                let ma = fam.windows[a].patch.key.magnitude();
                let mb = fam.windows[b].patch.key.magnitude();
                ma.partial_cmp(&mb).unwrap()
            })
            .unwrap();
        let (got, expect) = dilated_moment_identity(&fam, idx, &fine).unwrap();
        assert!(
            (got - expect).abs() / expect.abs() < 1e-6,
            "transform at 0: {got}, quadrature: {expect}"
        );
    }

    /// At alpha = 0 the windows far from both the origin (where the lattice
    /// has no member) and the truncation edge are exact translates of each
    /// other, so their norm-condition values coincide to high precision.
    #[test]
    fn norm_condition_identical_for_translated_windows() {
        let grid = GridSpec::new(1, 16.0, 256).unwrap();
        let fam = lattice_family(0.0, &grid);
        let p = MixedExponents::new(vec![1.0]).unwrap();
        let report = bapu_norm_condition(&fam, &p).unwrap();
        let ks: Vec<i64> = report.keys.iter().map(|k| k.parse().unwrap()).collect();
        let kmax = ks.iter().map(|k| k.abs()).max().unwrap();
        let bulk: Vec<f64> = ks
            .iter()
            .zip(&report.values)
            .filter(|(k, _)| k.abs() >= 3 && k.abs() <= kmax - 2)
            .map(|(_, &v)| v)
            .collect();
        assert!(bulk.len() >= 10, "only {} bulk windows", bulk.len());
        let first = bulk[0];
        for v in &bulk {
            assert!(
                (v - first).abs() / first < 1e-6,
                "translate values differ: {v} vs {first}"
            );
        }
    }

    #[test]
    fn norm_condition_uniform_for_quasi_exponents() {
        let grid = GridSpec::new(1, 16.0, 512).unwrap();
        let fam = lattice_family(0.5, &grid);
        let p = MixedExponents::new(vec![0.5]).unwrap();
        let report = bapu_norm_condition(&fam, &p).unwrap();
        assert!(
            report.within_factor(4.0),
            "worst factor {}",
            report.worst_factor()
        );
    }

    #[test]
    fn multi_index_enumeration_is_complete() {
        let betas = multi_indices(2, 2);
        assert_eq!(
            betas,
            vec![vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]]
        );
    }
}
