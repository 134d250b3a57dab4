//! Alpha-coverings of frequency space.
//!
//! For `0 <= alpha < 1` the covering consists of axis-aligned cubes centered
//! at the warped lattice `xi_k = k <k>^{alpha/(1-alpha)}` (`k` a nonzero
//! integer vector, `<x> = (1+|x|^2)^{1/2}`) with half-width
//! `rho_k = A <xi_k>^alpha`. The scale `a_k = <xi_k>` drives both the patch
//! size and the smoothness weights downstream. At `alpha = 1` the same role
//! is played by dyadic annuli `{2^{j-1} <= |xi| <= 2^{j+1}}` plus a central
//! ball, built by [`dyadic_covering`].
//!
//! A covering is only useful if it covers the sampled frequency region with
//! bounded overlap and patches of the right measure; [`admissibility_check`]
//! measures exactly that and reports the numbers instead of trusting them.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MAX_DIM};

/// Parameters for building a lattice covering.
#[derive(Debug, Clone)]
pub struct CoveringParams {
    /// Geometry interpolation parameter, `0 <= alpha < 1` here.
    pub alpha: f64,
    /// Patch half-width multiplier `A` in `rho_k = A <xi_k>^alpha`.
    pub radius_factor: f64,
    /// Fraction of the Nyquist radius to cover, usually 0.9.
    pub margin: f64,
    /// Lattice enumeration cap `|k|_inf <= kmax`; `None` derives the smallest
    /// cap that exhausts the margin ball.
    pub kmax: Option<usize>,
}

/// Identity of a patch: a lattice point for `alpha < 1`, a shell index for
/// the dyadic family (shell 0 is the central ball).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatchKey {
    Lattice(Vec<i64>),
    Shell(u32),
}

impl PatchKey {
    /// Deterministic text form: lattice components joined by `;`, shells as
    /// `d<j>`.
    pub fn label(&self) -> String {
        match self {
            PatchKey::Lattice(k) => {
                let mut s = String::new();
                for (i, c) in k.iter().enumerate() {
                    if i > 0 {
                        s.push(';');
                    }
                    let _ = write!(s, "{c}");
                }
                s
            }
            PatchKey::Shell(j) => format!("d{j}"),
        }
    }

    /// Euclidean length of the lattice index (shell keys report `2^j`).
    pub fn magnitude(&self) -> f64 {
        match self {
            PatchKey::Lattice(k) => {
                k.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
            }
            PatchKey::Shell(j) => (*j as f64).exp2(),
        }
    }
}

/// Support geometry of a patch.
#[derive(Debug, Clone)]
pub enum PatchGeometry {
    /// Cube `prod_a [center_a - rho, center_a + rho]`.
    Cube,
    /// Radial annulus `{inner <= |xi| <= outer}`; `inner = 0` is a ball.
    Annulus { inner: f64, outer: f64 },
}

/// One member of a covering.
#[derive(Debug, Clone)]
pub struct FrequencyPatch {
    pub key: PatchKey,
    /// Center `xi_k` (the origin for annuli).
    pub center: Vec<f64>,
    /// Scale `a_k`.
    pub scale: f64,
    /// Cube half-width (for annuli: the outer radius, kept for reporting).
    pub rho: f64,
    pub geometry: PatchGeometry,
}

impl FrequencyPatch {
    pub fn contains(&self, xi: &[f64]) -> bool {
        match &self.geometry {
            PatchGeometry::Cube => xi
                .iter()
                .zip(&self.center)
                .all(|(&x, &c)| (x - c).abs() <= self.rho),
            PatchGeometry::Annulus { inner, outer } => {
                let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
                *inner <= r && r <= *outer
            }
        }
    }

    /// Euclidean distance from a point to the patch (0 inside).
    pub fn distance(&self, xi: &[f64]) -> f64 {
        match &self.geometry {
            PatchGeometry::Cube => {
                let mut d2 = 0.0;
                for (&x, &c) in xi.iter().zip(&self.center) {
                    let d = ((x - c).abs() - self.rho).max(0.0);
                    d2 += d * d;
                }
                d2.sqrt()
            }
            PatchGeometry::Annulus { inner, outer } => {
                let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
                if r < *inner {
                    inner - r
                } else if r > *outer {
                    r - outer
                } else {
                    0.0
                }
            }
        }
    }

    /// Lebesgue measure of the patch in `dim` dimensions.
    pub fn measure(&self, dim: usize) -> f64 {
        match &self.geometry {
            PatchGeometry::Cube => (2.0 * self.rho).powi(dim as i32),
            PatchGeometry::Annulus { inner, outer } => match dim {
                1 => 2.0 * (outer - inner),
                2 => std::f64::consts::PI * (outer * outer - inner * inner),
                _ => 4.0 / 3.0 * std::f64::consts::PI * (outer.powi(3) - inner.powi(3)),
            },
        }
    }

    /// Circumscribed over inscribed ball radius. Cubes give sqrt(dim);
    /// annuli `outer / ((outer-inner)/2)`, balls 1.
    pub fn eccentricity(&self, dim: usize) -> f64 {
        match &self.geometry {
            PatchGeometry::Cube => (dim as f64).sqrt(),
            PatchGeometry::Annulus { inner, outer } => {
                if *inner == 0.0 {
                    1.0
                } else {
                    outer / ((outer - inner) / 2.0)
                }
            }
        }
    }

    /// Essential (positive-measure) intersection test: touching boundaries
    /// do not count, so unit boxes at integer centers meet exactly their two
    /// neighbours and dyadic shells meet exactly the adjacent shells.
    pub fn intersects(&self, other: &FrequencyPatch) -> bool {
        match (&self.geometry, &other.geometry) {
            (PatchGeometry::Cube, PatchGeometry::Cube) => self
                .center
                .iter()
                .zip(&other.center)
                .all(|(&a, &b)| (a - b).abs() < self.rho + other.rho),
            (
                PatchGeometry::Annulus { inner: i1, outer: o1 },
                PatchGeometry::Annulus { inner: i2, outer: o2 },
            ) => i1 < o2 && i2 < o1,
            // Mixed families are never built together; be conservative.
            (PatchGeometry::Cube, PatchGeometry::Annulus { .. }) => {
                other.distance(&self.center) < self.rho * (self.center.len() as f64).sqrt()
            }
            (PatchGeometry::Annulus { .. }, PatchGeometry::Cube) => other.intersects(self),
        }
    }
}

/// `<x>` for a Euclidean vector norm squared.
#[inline]
pub(crate) fn bracket(norm_sqr: f64) -> f64 {
    (1.0 + norm_sqr).sqrt()
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(Error::InvalidParam(format!(
            "lattice coverings need 0 <= alpha < 1 (got {alpha}); use the dyadic family for alpha = 1"
        )));
    }
    Ok(())
}

/// Center `xi_k = k <k>^{alpha/(1-alpha)}` of the patch at lattice point `k`.
pub fn center_of(alpha: f64, k: &[i64]) -> Result<Vec<f64>> {
    validate_alpha(alpha)?;
    if k.iter().all(|&c| c == 0) {
        return Err(Error::InvalidParam("lattice index 0 has no patch".into()));
    }
    let k2: f64 = k.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let warp = bracket(k2).powf(alpha / (1.0 - alpha));
    Ok(k.iter().map(|&c| c as f64 * warp).collect())
}

/// All nonzero lattice points with `|k|_inf <= kmax`, in deterministic
/// row-major order.
pub fn lattice_points(kmax: usize, dim: usize) -> Vec<Vec<i64>> {
    let side = 2 * kmax + 1;
    let total = side.pow(dim as u32);
    let mut out = Vec::with_capacity(total - 1);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let k: Vec<i64> = idx.iter().map(|&i| i as i64 - kmax as i64).collect();
        if k.iter().any(|&c| c != 0) {
            out.push(k);
        }
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < side {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Warped lattice centers for all `|k|_inf <= kmax`.
pub fn centers(alpha: f64, kmax: usize, dim: usize) -> Result<Vec<(Vec<i64>, Vec<f64>)>> {
    validate_alpha(alpha)?;
    lattice_points(kmax, dim)
        .into_iter()
        .map(|k| {
            let c = center_of(alpha, &k)?;
            Ok((k, c))
        })
        .collect()
}

/// Smallest lattice cap whose next ring already lies outside the margin
/// ball. `|xi_k|` depends only on `|k|` and grows strictly, so the first
/// axis point of each ring witnesses the minimum.
fn auto_kmax(alpha: f64, radius: f64) -> usize {
    let expo = alpha / (1.0 - alpha);
    let mut k = 1usize;
    loop {
        let kk = k as f64;
        let xi = kk * bracket(kk * kk).powf(expo);
        if xi > radius || k > 4096 {
            return k;
        }
        k += 1;
    }
}

/// Build the lattice covering for `alpha < 1`: enumerate centers, retain
/// those inside the margin ball `|xi_k| <= margin * Omega`, attach cubes of
/// half-width `A <xi_k>^alpha`.
pub fn build_covering(params: &CoveringParams, grid: &GridSpec) -> Result<Vec<FrequencyPatch>> {
    validate_alpha(params.alpha)?;
    if !(params.radius_factor.is_finite() && params.radius_factor > 0.0) {
        return Err(Error::InvalidParam(format!(
            "radius factor must be positive, got {}",
            params.radius_factor
        )));
    }
    if !(params.margin > 0.0 && params.margin <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "margin must lie in (0, 1], got {}",
            params.margin
        )));
    }
    let radius = params.margin * grid.nyquist();
    let kmax = params.kmax.unwrap_or_else(|| auto_kmax(params.alpha, radius));
    let mut patches = Vec::new();
    for (k, center) in centers(params.alpha, kmax, grid.dim())? {
        let norm_sqr: f64 = center.iter().map(|&c| c * c).sum();
        if norm_sqr.sqrt() > radius {
            continue;
        }
        let scale = bracket(norm_sqr);
        let rho = params.radius_factor * scale.powf(params.alpha);
        patches.push(FrequencyPatch {
            key: PatchKey::Lattice(k),
            center,
            scale,
            rho,
            geometry: PatchGeometry::Cube,
        });
    }
    if patches.is_empty() {
        return Err(Error::Coverage(format!(
            "no lattice centers inside radius {radius:.3} (grid too coarse for alpha = {})",
            params.alpha
        )));
    }
    Ok(patches)
}

/// Dyadic family for `alpha = 1`: central ball `{|xi| <= 2}` (shell 0, scale
/// 1) and annuli `{2^{j-1} <= |xi| <= 2^{j+1}}` (scale `2^j`), enough shells
/// that the margin ball sits below the top shell's peak.
pub fn dyadic_covering(grid: &GridSpec, margin: f64) -> Result<Vec<FrequencyPatch>> {
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(Error::InvalidParam(format!("margin must lie in (0, 1], got {margin}")));
    }
    let radius = margin * grid.nyquist();
    let mut top = 1u32;
    while (top as f64).exp2() < radius {
        top += 1;
    }
    let dim = grid.dim();
    let mut patches = Vec::with_capacity(top as usize + 1);
    patches.push(FrequencyPatch {
        key: PatchKey::Shell(0),
        center: vec![0.0; dim],
        scale: 1.0,
        rho: 2.0,
        geometry: PatchGeometry::Annulus { inner: 0.0, outer: 2.0 },
    });
    for j in 1..=top {
        let inner = ((j - 1) as f64).exp2();
        let outer = ((j + 1) as f64).exp2();
        patches.push(FrequencyPatch {
            key: PatchKey::Shell(j),
            center: vec![0.0; dim],
            scale: (j as f64).exp2(),
            rho: outer,
            geometry: PatchGeometry::Annulus { inner, outer },
        });
    }
    Ok(patches)
}

/// Quantitative admissibility of a covering on a grid.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    /// Largest closed-intersection count of any patch with the family
    /// (including itself).
    pub overlap_max: usize,
    /// Worst two-sided ratio between patch measure and `<xi>^{alpha n}`
    /// sampled over the patch.
    pub measure_comparability: f64,
    /// Worst circumscribed/inscribed ball ratio.
    pub eccentricity: f64,
    /// Largest distance from a frequency node in the margin ball to the
    /// nearest patch; 0 means the ball is covered.
    pub coverage_deficit: f64,
}

/// Measure overlap, measure comparability, eccentricity, and coverage of
/// the margin ball `|xi| <= margin * Omega` on the grid's frequency nodes.
pub fn admissibility_check(
    patches: &[FrequencyPatch],
    grid: &GridSpec,
    alpha: f64,
    margin: f64,
) -> Result<AdmissibilityReport> {
    if patches.is_empty() {
        return Err(Error::InvalidParam("empty covering".into()));
    }
    let dim = grid.dim();
    let mut overlap_max = 0usize;
    for p in patches {
        let count = patches.iter().filter(|q| p.intersects(q)).count();
        overlap_max = overlap_max.max(count);
    }

    let mut comparability = 1.0f64;
    let mut xi = vec![0.0f64; dim];
    for p in patches {
        let measure = p.measure(dim);
        // Sample <xi>^{alpha n} over the patch: 5 points per axis for cubes,
        // inner/peak/outer radii for annuli.
        let mut probe = |xi: &[f64]| {
            let w = bracket(xi.iter().map(|&x| x * x).sum::<f64>()).powf(alpha * dim as f64);
            let r = (measure / w).max(w / measure);
            if r > comparability {
                comparability = r;
            }
        };
        match &p.geometry {
            PatchGeometry::Cube => {
                let steps = 5usize;
                let mut idx = vec![0usize; dim];
                let total = steps.pow(dim as u32);
                for _ in 0..total {
                    for a in 0..dim {
                        let t = idx[a] as f64 / (steps - 1) as f64;
                        xi[a] = p.center[a] - p.rho + 2.0 * p.rho * t;
                    }
                    probe(&xi);
                    for a in (0..dim).rev() {
                        idx[a] += 1;
                        if idx[a] < steps {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
            }
            PatchGeometry::Annulus { inner, outer } => {
                for r in [*inner, 0.5 * (inner + outer), *outer] {
                    xi.iter_mut().for_each(|v| *v = 0.0);
                    xi[0] = r;
                    probe(&xi);
                }
            }
        }
    }

    let eccentricity = patches
        .iter()
        .map(|p| p.eccentricity(dim))
        .fold(0.0f64, f64::max);

    let radius = margin * grid.nyquist();
    let mut deficit = 0.0f64;
    let mut node = [0.0f64; MAX_DIM];
    grid.for_each_node(|idx, _| {
        grid.xi_coords(idx, &mut node);
        let xi = &node[..dim];
        let r2: f64 = xi.iter().map(|&x| x * x).sum();
        if r2.sqrt() > radius {
            return;
        }
        if patches.iter().any(|p| p.contains(xi)) {
            return;
        }
        let d = patches
            .iter()
            .map(|p| p.distance(xi))
            .fold(f64::INFINITY, f64::min);
        if d > deficit {
            deficit = d;
        }
    });

    Ok(AdmissibilityReport {
        overlap_max,
        measure_comparability: comparability,
        eccentricity,
        coverage_deficit: deficit,
    })
}

/// Deterministic CSV dump: `k, xi_1.. , a_k, rho_k`.
pub fn covering_csv(patches: &[FrequencyPatch], dim: usize) -> String {
    let mut out = String::from("k");
    for a in 0..dim {
        let _ = write!(out, ",xi_{}", a + 1);
    }
    out.push_str(",a_k,rho_k\n");
    for p in patches {
        let _ = write!(out, "{}", p.key.label());
        for a in 0..dim {
            let _ = write!(out, ",{}", p.center[a]);
        }
        let _ = writeln!(out, ",{},{}", p.scale, p.rho);
    }
    out
}
