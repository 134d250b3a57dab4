//! Periodic sampling grids and Fourier transforms.
//!
//! Functions live on the box `[-L, L)^n` sampled at `N` equispaced nodes per
//! axis (`N` even), `x_j = -L + j * h` with `h = 2L/N`. Spectra live on the
//! centered frequency lattice `xi_m = m * pi/L` for `m in [-N/2, N/2)`. Both
//! transforms carry the symmetric `(2pi)^{-n/2}` normalization of the
//! continuous Fourier transform, discretized by Riemann sums:
//!
//! ```text
//! fhat(xi_m) = (2pi)^{-n/2} h^n    sum_j f(x_j)    exp(-i x_j . xi_m)
//! f(x_j)     = (2pi)^{-n/2} dxi^n  sum_m fhat(xi_m) exp(+i x_j . xi_m)
//! ```
//!
//! With `dxi = pi/L` the two sums compose to the identity exactly (up to
//! rounding), and the unit Gaussian `exp(-|x|^2/2)` is its own transform.
//! Internally the sums are evaluated by FFT; the shifted/centered indexing
//! never leaks out of this module.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Maximum supported dimension. Index scratch buffers are sized by this.
pub const MAX_DIM: usize = 3;

/// Geometry of a periodic sampling grid: dimension, half-width of the box,
/// and sample count per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    samples: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, samples: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParam(format!(
                "grid dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParam(format!(
                "grid half width must be positive and finite, got {half_width}"
            )));
        }
        if samples == 0 || samples % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "samples per axis must be even and positive, got {samples}"
            )));
        }
        // Keep the flat length representable comfortably.
        let len = (samples as u128).pow(dim as u32);
        if len > (1u128 << 31) {
            return Err(Error::CostGuard(format!(
                "grid with {samples}^{dim} nodes exceeds the in-memory ceiling"
            )));
        }
        Ok(GridSpec { dim, half_width, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Total node count `N^n`.
    pub fn len(&self) -> usize {
        self.samples.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial step `h = 2L/N`.
    pub fn spatial_step(&self) -> f64 {
        2.0 * self.half_width / self.samples as f64
    }

    /// Frequency step `pi/L`.
    pub fn freq_step(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    /// Nyquist frequency `pi/h = pi N / (2L)`; the lattice covers
    /// `[-Omega, Omega)` per axis.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.samples as f64 / (2.0 * self.half_width)
    }

    /// Spatial node along one axis: `x_j = -L + j h`.
    pub fn x_node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spatial_step()
    }

    /// Frequency node along one axis in centered storage order:
    /// slot `t` holds `xi = (t - N/2) * pi/L`, ascending in `xi`.
    pub fn xi_node(&self, t: usize) -> f64 {
        (t as f64 - self.samples as f64 / 2.0) * self.freq_step()
    }

    /// Fill `out[..dim]` with the spatial coordinates of a multi-index.
    pub fn x_coords(&self, idx: &[usize], out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = self.x_node(idx[a]);
        }
    }

    /// Fill `out[..dim]` with the frequency coordinates of a multi-index.
    pub fn xi_coords(&self, idx: &[usize], out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = self.xi_node(idx[a]);
        }
    }

    /// Visit every node in flat (row-major, last axis fastest) order.
    /// The callback receives the per-axis multi-index and the flat index.
    pub fn for_each_node(&self, mut f: impl FnMut(&[usize], usize)) {
        let n = self.samples;
        let dim = self.dim;
        let mut idx = [0usize; MAX_DIM];
        let total = self.len();
        for flat in 0..total {
            f(&idx[..dim], flat);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

/// Complex samples of a function on the spatial nodes of a grid, stored
/// row-major (last axis fastest).
#[derive(Debug, Clone)]
pub struct SampledField {
    spec: GridSpec,
    values: Vec<Complex64>,
}

/// Complex values on the centered frequency lattice of a grid, same
/// row-major layout as [`SampledField`], slot `t` per axis holding
/// `xi = (t - N/2) pi/L`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    spec: GridSpec,
    values: Vec<Complex64>,
}

fn check_values(spec: &GridSpec, values: &[Complex64], what: &str) -> Result<()> {
    if values.len() != spec.len() {
        return Err(Error::GridMismatch(format!(
            "{what}: expected {} values for the grid, got {}",
            spec.len(),
            values.len()
        )));
    }
    for (i, v) in values.iter().enumerate() {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite(format!("{what}: value at flat index {i} is {v}")));
        }
    }
    Ok(())
}

impl SampledField {
    pub fn from_values(spec: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        check_values(&spec, &values, "sampled field")?;
        Ok(SampledField { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        self.spec_ref()
    }

    fn spec_ref(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Largest modulus over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Spectrum {
    pub fn from_values(spec: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        check_values(&spec, &values, "spectrum")?;
        Ok(Spectrum { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Relative L2 mass of the spectrum on nodes selected by `pred`
    /// (predicate on the frequency coordinates). Returns 0 for a zero
    /// spectrum.
    pub fn relative_mass_where(&self, mut pred: impl FnMut(&[f64]) -> bool) -> f64 {
        let mut xi = [0.0f64; MAX_DIM];
        let mut selected = 0.0;
        let mut total = 0.0;
        self.spec.for_each_node(|idx, flat| {
            let m = self.values[flat].norm_sqr();
            total += m;
            self.spec.xi_coords(idx, &mut xi);
            if pred(&xi[..self.spec.dim()]) {
                selected += m;
            }
        });
        if total == 0.0 {
            0.0
        } else {
            selected / total
        }
    }
}

/// Sample a pointwise generator on the spatial nodes. Fails on non-finite
/// samples, identifying the offending node.
pub fn sample_function(
    spec: &GridSpec,
    mut gen: impl FnMut(&[f64]) -> Complex64,
) -> Result<SampledField> {
    let mut values = vec![Complex64::default(); spec.len()];
    let mut x = [0.0f64; MAX_DIM];
    let mut bad: Option<usize> = None;
    spec.for_each_node(|idx, flat| {
        spec.x_coords(idx, &mut x);
        let v = gen(&x[..spec.dim()]);
        if !(v.re.is_finite() && v.im.is_finite()) && bad.is_none() {
            bad = Some(flat);
        }
        values[flat] = v;
    });
    if let Some(flat) = bad {
        return Err(Error::NonFinite(format!(
            "generator produced a non-finite sample at flat node {flat}"
        )));
    }
    Ok(SampledField { spec: spec.clone(), values })
}

static PLANNER: Mutex<Option<FftPlanner<f64>>> = Mutex::new(None);

fn plan(len: usize, forward: bool) -> std::sync::Arc<dyn rustfft::Fft<f64>> {
    let mut guard = PLANNER.lock().expect("fft planner lock");
    let planner = guard.get_or_insert_with(FftPlanner::new);
    if forward {
        planner.plan_fft_forward(len)
    } else {
        planner.plan_fft_inverse(len)
    }
}

/// Unnormalized DFT (`forward`: sum with `exp(-2 pi i jk/N)`, else the
/// conjugate sum) applied along every axis of a row-major hypercube.
fn dft_all_axes(values: &mut [Complex64], dim: usize, n: usize, forward: bool) {
    let fft = plan(n, forward);
    let mut line = vec![Complex64::default(); n];
    let len = values.len();
    for axis in 0..dim {
        // Row-major with equal extents: stride of `axis` is n^(dim-1-axis).
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        let blocks = len / block;
        for b in 0..blocks {
            let base = b * block;
            for r in 0..stride {
                let start = base + r;
                for i in 0..n {
                    line[i] = values[start + i * stride];
                }
                fft.process(&mut line);
                for i in 0..n {
                    values[start + i * stride] = line[i];
                }
            }
        }
    }
}

/// Parity of `sum_a m_a` for the centered index of flat slot `flat`:
/// slot `t` per axis means `m = t - N/2`, and `(-1)^m = (-1)^t (-1)^{N/2}`.
#[inline]
fn centered_sign(idx: &[usize], half: usize) -> f64 {
    let mut parity = 0usize;
    for &t in idx {
        parity += t + half;
    }
    if parity % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform: Riemann-sum discretization of the continuous Fourier
/// transform with symmetric normalization (see module docs).
pub fn forward_transform(f: &SampledField) -> Spectrum {
    let spec = f.spec.clone();
    let n = spec.samples();
    let dim = spec.dim();
    let half = n / 2;
    let mut work = f.values.clone();
    dft_all_axes(&mut work, dim, n, true);
    // Reorder k -> centered slot t and apply the node phase and scale:
    // fhat[t] = scale * (-1)^{sum m_a} * dft[k], k_a = (t_a + N/2) mod N.
    let scale = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0)
        * spec.spatial_step().powi(dim as i32);
    let mut out = vec![Complex64::default(); work.len()];
    let mut k = [0usize; MAX_DIM];
    spec.for_each_node(|idx, flat| {
        for a in 0..dim {
            k[a] = (idx[a] + half) % n;
        }
        let mut src = 0usize;
        for a in 0..dim {
            src = src * n + k[a];
        }
        out[flat] = work[src] * (scale * centered_sign(idx, half));
    });
    Spectrum { spec, values: out }
}

/// Inverse transform: exact inverse of [`forward_transform`] (the symmetric
/// normalization makes the round trip the identity up to rounding).
pub fn inverse_transform(s: &Spectrum) -> SampledField {
    let spec = s.spec.clone();
    let n = spec.samples();
    let dim = spec.dim();
    let half = n / 2;
    // Build G[k] = fhat[t] * (-1)^{sum m_a} in DFT order, then inverse DFT.
    let mut work = vec![Complex64::default(); s.values.len()];
    let mut k = [0usize; MAX_DIM];
    spec.for_each_node(|idx, flat| {
        for a in 0..dim {
            k[a] = (idx[a] + half) % n;
        }
        let mut dst = 0usize;
        for a in 0..dim {
            dst = dst * n + k[a];
        }
        work[dst] = s.values[flat] * centered_sign(idx, half);
    });
    dft_all_axes(&mut work, dim, n, false);
    let scale = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0)
        * spec.freq_step().powi(dim as i32);
    for v in work.iter_mut() {
        *v *= scale;
    }
    SampledField { spec, values: work }
}

/// Multiply a spectrum node-wise by a real window sampled in the same
/// centered layout.
pub fn band_multiply(s: &Spectrum, window: &[f64]) -> Result<Spectrum> {
    if window.len() != s.values.len() {
        return Err(Error::GridMismatch(format!(
            "band window has {} samples, spectrum has {}",
            window.len(),
            s.values.len()
        )));
    }
    let values = s
        .values
        .iter()
        .zip(window.iter())
        .map(|(v, w)| v * *w)
        .collect();
    Ok(Spectrum { spec: s.spec.clone(), values })
}

/// Discrete L2 norm `(h^n sum |f|^2)^{1/2}` — the equal-exponent collapse of
/// the mixed norm, provided here because transforms preserve it exactly.
pub fn l2_norm(f: &SampledField) -> f64 {
    let h = f.spec.spatial_step().powi(f.spec.dim() as i32);
    (f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * h).sqrt()
}

/// Same quantity on the frequency side: `(dxi^n sum |fhat|^2)^{1/2}`.
pub fn l2_norm_spectrum(s: &Spectrum) -> f64 {
    let d = s.spec.freq_step().powi(s.spec.dim() as i32);
    (s.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * d).sqrt()
}

// ---------------------------------------------------------------------------
// Field files: a small self-describing text format. Three header lines fix
// the grid, then CSV rows (semicolon-joined node index, re, im).
// ---------------------------------------------------------------------------

/// Serialize a field. Floats use Rust's shortest round-trip formatting, so
/// the output is byte-deterministic for identical inputs.
pub fn field_to_string(f: &SampledField) -> String {
    let spec = &f.spec;
    let mut out = String::new();
    let _ = writeln!(out, "dim = {}", spec.dim());
    let _ = writeln!(out, "half_width = {}", spec.half_width());
    let _ = writeln!(out, "samples = {}", spec.samples());
    out.push_str("index,re,im\n");
    spec.for_each_node(|idx, flat| {
        for (a, j) in idx.iter().enumerate() {
            if a > 0 {
                out.push(';');
            }
            let _ = write!(out, "{j}");
        }
        let v = f.values[flat];
        let _ = writeln!(out, ",{},{}", v.re, v.im);
    });
    out
}

pub fn write_field(f: &SampledField, path: &Path) -> Result<()> {
    std::fs::write(path, field_to_string(f))?;
    Ok(())
}

pub fn field_from_str(text: &str) -> Result<SampledField> {
    let mut lines = text.lines().enumerate();
    let mut dim: Option<usize> = None;
    let mut half_width: Option<f64> = None;
    let mut samples: Option<usize> = None;
    let mut header_done = false;
    let mut rows: Vec<(Vec<usize>, Complex64)> = Vec::new();
    for (ln, raw) in &mut lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !header_done {
            if line == "index,re,im" {
                header_done = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", ln + 1)))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "dim" => {
                    dim = Some(value.parse().map_err(|_| {
                        Error::Parse(format!("line {}: bad dim `{value}`", ln + 1))
                    })?)
                }
                "half_width" => {
                    half_width = Some(value.parse().map_err(|_| {
                        Error::Parse(format!("line {}: bad half_width `{value}`", ln + 1))
                    })?)
                }
                "samples" => {
                    samples = Some(value.parse().map_err(|_| {
                        Error::Parse(format!("line {}: bad samples `{value}`", ln + 1))
                    })?)
                }
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown field header key `{other}`",
                        ln + 1
                    )))
                }
            }
            continue;
        }
        let mut parts = line.split(',');
        let idx_part = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing index", ln + 1)))?;
        let re_part = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing re", ln + 1)))?;
        let im_part = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing im", ln + 1)))?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!("line {}: too many columns", ln + 1)));
        }
        let idx: Vec<usize> = idx_part
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad index `{s}`", ln + 1)))
            })
            .collect::<Result<_>>()?;
        let re: f64 = re_part
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad re `{re_part}`", ln + 1)))?;
        let im: f64 = im_part
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad im `{im_part}`", ln + 1)))?;
        rows.push((idx, Complex64::new(re, im)));
    }
    let dim = dim.ok_or_else(|| Error::Parse("missing `dim` header".into()))?;
    let half_width = half_width.ok_or_else(|| Error::Parse("missing `half_width` header".into()))?;
    let samples = samples.ok_or_else(|| Error::Parse("missing `samples` header".into()))?;
    let spec = GridSpec::new(dim, half_width, samples)?;
    let n = spec.samples();
    let mut values = vec![Complex64::default(); spec.len()];
    let mut seen = vec![false; spec.len()];
    for (idx, v) in rows {
        if idx.len() != dim {
            return Err(Error::Parse(format!(
                "row index {:?} has {} components, grid dim is {dim}",
                idx,
                idx.len()
            )));
        }
        let mut flat = 0usize;
        for &j in &idx {
            if j >= n {
                return Err(Error::Parse(format!("row index {idx:?} out of range (N = {n})")));
            }
            flat = flat * n + j;
        }
        if seen[flat] {
            return Err(Error::Parse(format!("duplicate row for index {idx:?}")));
        }
        seen[flat] = true;
        values[flat] = v;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("missing row for flat node {missing}")));
    }
    SampledField::from_values(spec, values)
}

pub fn read_field(path: &Path) -> Result<SampledField> {
    let text = std::fs::read_to_string(path)?;
    field_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_field(spec: &GridSpec) -> SampledField {
        sample_function(spec, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / 2.0).exp(), 0.0)
        })
        .unwrap()
    }

    /// The unit Gaussian is self-dual under the symmetric normalization:
    /// exp(-|x|^2/2) transforms to exp(-|xi|^2/2) in any dimension.
    #[test]
    fn gaussian_is_self_dual_1d() {
        let spec = GridSpec::new(1, 16.0, 256).unwrap();
        let fhat = forward_transform(&gaussian_field(&spec));
        let mut worst = 0.0f64;
        for t in 0..spec.samples() {
            let xi = spec.xi_node(t);
            let expect = (-xi * xi / 2.0).exp();
            worst = worst.max((fhat.values()[t].re - expect).abs().max(fhat.values()[t].im.abs()));
        }
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    #[test]
    fn gaussian_is_self_dual_2d() {
        let spec = GridSpec::new(2, 12.0, 128).unwrap();
        let fhat = forward_transform(&gaussian_field(&spec));
        let mut xi = [0.0f64; MAX_DIM];
        let mut worst = 0.0f64;
        spec.for_each_node(|idx, flat| {
            spec.xi_coords(idx, &mut xi);
            let expect = (-(xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp();
            let v = fhat.values()[flat];
            worst = worst.max((v.re - expect).abs().max(v.im.abs()));
        });
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    /// A pure lattice exponential exp(i xi_{m0} . x) concentrates on the
    /// single frequency node m0 with value (2pi)^{-n/2} (2L)^n.
    #[test]
    fn lattice_exponential_hits_single_node() {
        let spec = GridSpec::new(1, 16.0, 256).unwrap();
        let t0 = 140; // m0 = 12
        let xi0 = spec.xi_node(t0);
        let f = sample_function(&spec, |x| Complex64::new(0.0, xi0 * x[0]).exp()).unwrap();
        let fhat = forward_transform(&f);
        let peak = (2.0 * std::f64::consts::PI).powf(-0.5) * 2.0 * spec.half_width();
        for t in 0..spec.samples() {
            let v = fhat.values()[t];
            if t == t0 {
                assert!((v.re - peak).abs() / peak < 1e-12 && v.im.abs() / peak < 1e-12);
            } else {
                assert!(v.norm() / peak < 1e-12, "leak at slot {t}: {v}");
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let spec = GridSpec::new(2, 12.0, 64).unwrap();
        let f = sample_function(&spec, |x| {
            Complex64::new((x[0] * 0.7).sin() * (-x[1] * x[1] / 3.0).exp(), (x[0] * x[1] / 9.0).cos())
        })
        .unwrap();
        let back = inverse_transform(&forward_transform(&f));
        let scale = f.max_abs();
        let worst = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst / scale < 1e-12, "round trip error {}", worst / scale);
    }

    #[test]
    fn plancherel_holds() {
        let spec = GridSpec::new(1, 16.0, 256).unwrap();
        let f = gaussian_field(&spec);
        let a = l2_norm(&f);
        let b = l2_norm_spectrum(&forward_transform(&f));
        assert!((a - b).abs() / a < 1e-10);
    }

    #[test]
    fn odd_sample_count_rejected() {
        assert!(matches!(GridSpec::new(1, 16.0, 255), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let spec = GridSpec::new(1, 16.0, 64).unwrap();
        let r = sample_function(&spec, |x| Complex64::new(1.0 / (x[0] - spec.x_node(3)), 0.0));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn field_file_round_trip() {
        let spec = GridSpec::new(2, 12.0, 8).unwrap();
        let f = sample_function(&spec, |x| Complex64::new(x[0] + 0.25, x[1] - 1.0 / 3.0)).unwrap();
        let text = field_to_string(&f);
        let g = field_from_str(&text).unwrap();
        assert_eq!(f.spec(), g.spec());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(a, b, "shortest round-trip formatting must be lossless");
        }
        // Serialization is deterministic byte for byte.
        assert_eq!(text, field_to_string(&g));
    }

    #[test]
    fn field_file_rejects_unknown_header() {
        let text = "dim = 1\nhalf_width = 1\nsamples = 2\nflavor = up\nindex,re,im\n0,0,0\n1,0,0\n";
        assert!(matches!(field_from_str(text), Err(Error::Parse(_))));
    }
}
