//! Mixed-norm modulation norms over a partition-of-unity family.
//!
//! The norm of a sampled field is assembled band by band,
//!
//! ```text
//! ||f|| = ( sum_k  a_k^{qs} ||F^{-1}(psi_k Ff)||_{L_pbar}^q )^{1/q},
//! ```
//!
//! with `a_k = <xi_k>` the weight of the patch at lattice point k (the shell
//! scale `2^j` for the dyadic family, where the same formula reduces to an
//! inhomogeneous Besov norm) and the sum replaced by a sup at `q = inf`.
//!
//! The retained index set is finite, so the norm is honest only for fields
//! whose spectrum lives where the partition actually sums to one; a tail
//! guard rejects inputs carrying more than a sliver of spectral mass beyond
//! that region.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::bapu::BapuFamily;
use crate::error::{Error, Result};
use crate::grid::{forward_transform, inverse_transform, SampledField, Spectrum};
use crate::mixed::{mixed_norm, MixedExponents};

/// Nodes where `sum_k psi_k` is at least `1 - PARTITION_ONE_TOL` count as
/// honestly covered by the truncated family.
const PARTITION_ONE_TOL: f64 = 1e-9;

/// Largest relative spectral L2 mass allowed outside the covered nodes.
const TAIL_MASS_GUARD: f64 = 1e-8;

/// Parameters of one modulation space: geometry exponent, smoothness weight,
/// integrability vector, and summability exponent (`inf` for a sup).
#[derive(Debug, Clone)]
pub struct SpaceParams {
    pub alpha: f64,
    pub s: f64,
    pub p: MixedExponents,
    pub q: f64,
}

impl SpaceParams {
    pub fn new(alpha: f64, s: f64, p: MixedExponents, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParam(format!(
                "geometry exponent must lie in [0, 1], got {alpha}"
            )));
        }
        if !s.is_finite() {
            return Err(Error::InvalidParam(format!("smoothness weight must be finite, got {s}")));
        }
        if !(q > 0.0) {
            return Err(Error::InvalidParam(format!(
                "summability exponent must be positive (possibly infinite), got {q}"
            )));
        }
        Ok(SpaceParams { alpha, s, p, q })
    }
}

/// One diagnostic row: band identity, weight, band norm, weighted term.
#[derive(Debug, Clone)]
pub struct BandRow {
    pub key: String,
    pub weight: f64,
    pub band_norm: f64,
    pub weighted: f64,
}

/// Per-band view of the norm's summands, one row per retained index.
#[derive(Debug, Clone)]
pub struct BandProfile {
    pub rows: Vec<BandRow>,
}

impl BandProfile {
    /// Recombine the rows exactly as `modulation_norm` does.
    pub fn recombine(&self, q: f64) -> f64 {
        let weighted: Vec<f64> = self.rows.iter().map(|r| r.weighted).collect();
        aggregate_band_terms(&weighted, q)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("k,a_k,band_norm,weighted_term\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.key, r.weight, r.band_norm, r.weighted);
        }
        out
    }
}

fn check_grid(fam: &BapuFamily, f: &SampledField) -> Result<()> {
    if *f.spec() != fam.grid {
        return Err(Error::GridMismatch(
            "field and partition family live on different grids".into(),
        ));
    }
    Ok(())
}

/// Windowed spectrum of band `k`: `psi_k * Ff` as a dense spectrum.
fn windowed_spectrum(fam: &BapuFamily, spec: &Spectrum, k: usize) -> Spectrum {
    let mut values = vec![Complex64::default(); fam.grid.len()];
    for &(flat, w) in &fam.windows[k].samples {
        values[flat as usize] = spec.values()[flat as usize] * w;
    }
    Spectrum::from_values(fam.grid.clone(), values).expect("windowed samples stay finite")
}

/// `F^{-1}(psi_k Ff)`: the field filtered to one frequency band.
pub fn band_project(fam: &BapuFamily, f: &SampledField, k: usize) -> Result<SampledField> {
    check_grid(fam, f)?;
    if k >= fam.window_count() {
        return Err(Error::InvalidParam(format!(
            "band index {k} out of range ({} windows)",
            fam.window_count()
        )));
    }
    let spec = forward_transform(f);
    Ok(inverse_transform(&windowed_spectrum(fam, &spec, k)))
}

/// Mixed norms of all band projections, in window order. The transform runs
/// once; each band multiplies it by its (sparse) window.
pub fn band_norms(fam: &BapuFamily, f: &SampledField, p: &MixedExponents) -> Result<Vec<f64>> {
    check_grid(fam, f)?;
    if p.dim() != fam.grid.dim() {
        return Err(Error::GridMismatch(
            "exponent vector dimension must match the grid".into(),
        ));
    }
    let spec = forward_transform(f);
    let mut out = Vec::with_capacity(fam.window_count());
    for k in 0..fam.window_count() {
        let band = inverse_transform(&windowed_spectrum(fam, &spec, k));
        out.push(mixed_norm(&band, p)?);
    }
    Ok(out)
}

/// Relative spectral L2 mass of `f` on nodes the partition does not cover
/// (where `sum_k psi_k < 1 - 1e-9`).
pub fn spectral_tail_mass(fam: &BapuFamily, f: &SampledField) -> Result<f64> {
    check_grid(fam, f)?;
    let spec = forward_transform(f);
    let sums = fam.partition_sums();
    let mut tail = 0.0f64;
    let mut total = 0.0f64;
    for (flat, v) in spec.values().iter().enumerate() {
        let m = v.norm_sqr();
        total += m;
        if sums[flat] < 1.0 - PARTITION_ONE_TOL {
            tail += m;
        }
    }
    Ok(if total > 0.0 { tail / total } else { 0.0 })
}

/// Combine nonnegative weighted band terms with the `l^q` rule (`sup` at
/// `q = inf`).
pub fn aggregate_band_terms(weighted: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        weighted.iter().copied().fold(0.0f64, f64::max)
    } else {
        weighted
            .iter()
            .map(|&t| t.powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

fn profile_rows(fam: &BapuFamily, f: &SampledField, params: &SpaceParams) -> Result<Vec<BandRow>> {
    if (params.alpha - fam.alpha).abs() > 1e-12 {
        return Err(Error::InvalidParam(format!(
            "space has geometry exponent {} but the family was built at {}",
            params.alpha, fam.alpha
        )));
    }
    let tail = spectral_tail_mass(fam, f)?;
    if tail > TAIL_MASS_GUARD {
        return Err(Error::SupportGuard(format!(
            "relative spectral mass {tail:.3e} lies beyond the covered frequency region (guard {TAIL_MASS_GUARD:.0e})"
        )));
    }
    let norms = band_norms(fam, f, &params.p)?;
    Ok(fam
        .windows
        .iter()
        .zip(norms)
        .map(|(w, b)| {
            let weight = w.patch.scale.powf(params.s);
            BandRow {
                key: w.patch.key.label(),
                weight: w.patch.scale,
                band_norm: b,
                weighted: weight * b,
            }
        })
        .collect())
}

/// The modulation norm of `f` in the space described by `params`, over the
/// family's retained bands.
pub fn modulation_norm(fam: &BapuFamily, f: &SampledField, params: &SpaceParams) -> Result<f64> {
    let rows = profile_rows(fam, f, params)?;
    let weighted: Vec<f64> = rows.iter().map(|r| r.weighted).collect();
    Ok(aggregate_band_terms(&weighted, params.q))
}

/// Per-band diagnostic rows for `f` (same pipeline as the norm).
pub fn band_profile(fam: &BapuFamily, f: &SampledField, params: &SpaceParams) -> Result<BandProfile> {
    Ok(BandProfile { rows: profile_rows(fam, f, params)? })
}
