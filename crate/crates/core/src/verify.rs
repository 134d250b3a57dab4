//! Experiment harness: lifting, boundedness, maximal, composition, and
//! hypoelliptic-smoothing statements evaluated as ratio statistics over
//! deterministic test families.
//!
//! The underlying theorems assert the existence of constants; here they are
//! converted to two-phase regression: a calibration run records the observed
//! worst ratios, the committed constants below are twice those values, and
//! the test suite asserts against them thereafter. Hypothesis-violating
//! configurations (alpha > rho, theta >= min p_j, cutoff dead zones) are
//! always computed and reported but flagged exploratory and never asserted.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bapu::{build_family, mother_bump, BapuFamily, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::grid::{
    forward_transform, inverse_transform, l2_norm, sample_function, GridSpec, SampledField,
    Spectrum,
};
use crate::mixed::{iterated_maximal, mixed_norm, peetre_check, MixedExponents};
use crate::modspace::{
    aggregate_band_terms, band_norms, modulation_norm, spectral_tail_mass, SpaceParams,
};
use crate::pdo::{apply, apply_multiplier, bessel_lift, PathChoice};
use crate::symbols::{
    composition_leading, heat, heat_parametrix, oscillatory, Symbol, SymbolKind,
};

/// Family members must be negligible at the box boundary (relative).
pub const BOUNDARY_DECAY_GUARD: f64 = 1e-12;
/// Relative spectral L2 mass allowed beyond the covering margin for members
/// consumed by transform-based experiments.
pub const SPECTRAL_MARGIN_GUARD: f64 = 1e-9;

// Committed calibration constants: twice the worst ratios observed on the
// first run at the default grids (1D: L=16 N=256; 2D: L=12 N=128) over
// b in {-1, 1, 2}, alpha in {0.25, 0.5}, p in {(2), (2,2), (2,4)}.
/// Lifting ratio spread (max/min) ceiling; worst observed 2.7462.
pub const LIFTING_SPREAD_CAL: f64 = 5.5;
/// Boundedness max-ratio ceiling for the standard separable symbol;
/// worst observed 0.6145.
pub const BOUNDEDNESS_RATIO_CAL: f64 = 1.23;
/// Mixed maximal-function ratio ceiling for theta < min p_j; worst
/// observed 3.1097.
pub const MAXIMAL_RATIO_CAL: f64 = 6.22;
/// Hypoelliptic smoothing target: fixed design goal, not calibrated.
pub const HYPO_SMOOTHING_TARGET: f64 = 0.1;
/// Relative spectral mass an operator output may scatter past the covered
/// region before the boundedness experiment refuses it. Symbols with
/// spatial amplitudes that are not box-periodic (e.g. `sin x_1`) shed
/// window sidelobes at this level; the band norms never see un-covered
/// nodes, so the scattered mass is discarded and recorded per row.
pub const OUTPUT_SCATTER_ALLOWANCE: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Test families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub label: String,
    pub field: SampledField,
}

/// Deterministic bundle of Schwartz-type test fields on one grid.
#[derive(Debug, Clone)]
pub struct TestFamily {
    pub grid: GridSpec,
    pub members: Vec<FamilyMember>,
    /// Notes about guards that were recorded rather than enforced.
    pub guards: Vec<String>,
}

/// Relative magnitude of a field on the boundary faces of the box.
pub fn boundary_decay(f: &SampledField) -> f64 {
    let spec = f.spec();
    let n = spec.samples();
    let vals = f.values();
    let mut worst = 0.0f64;
    spec.for_each_node(|idx, flat| {
        if idx.iter().any(|&j| j == 0 || j == n - 1) {
            worst = worst.max(vals[flat].norm());
        }
    });
    worst / f.max_abs().max(1e-300)
}

/// Relative spectral L2 mass beyond the covering margin radius.
pub fn spectral_margin_mass(f: &SampledField, margin: f64) -> f64 {
    let radius = margin * f.spec().nyquist();
    let fhat = forward_transform(f);
    fhat.relative_mass_where(|xi| xi.iter().map(|&c| c * c).sum::<f64>().sqrt() > radius)
}

fn guarded_member(
    grid: &GridSpec,
    label: String,
    gen: impl FnMut(&[f64]) -> Complex64,
    enforce_spectral: bool,
    guards: &mut Vec<String>,
) -> Result<FamilyMember> {
    let field = sample_function(grid, gen)?;
    let decay = boundary_decay(&field);
    if decay > BOUNDARY_DECAY_GUARD {
        return Err(Error::SupportGuard(format!(
            "member {label} has boundary magnitude {decay:.3e} (limit {BOUNDARY_DECAY_GUARD:.0e})"
        )));
    }
    let mass = spectral_margin_mass(&field, DEFAULT_MARGIN);
    if mass > SPECTRAL_MARGIN_GUARD {
        if enforce_spectral {
            return Err(Error::SupportGuard(format!(
                "member {label} leaks {mass:.3e} of spectral mass past the margin \
                 (limit {SPECTRAL_MARGIN_GUARD:.0e})"
            )));
        }
        guards.push(format!(
            "member {label}: spectral margin waived (mass {mass:.3e}), spatial-only use"
        ));
    }
    Ok(FamilyMember { label, field })
}

fn axis_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for a in 0..dim {
        let mut d = vec![0.0; dim];
        d[a] = 1.0;
        dirs.push(d);
    }
    if dim > 1 {
        dirs.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    }
    dirs
}

fn dilated(lam: f64) -> impl FnMut(&[f64]) -> Complex64 {
    move |x: &[f64]| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        Complex64::new((-lam * r2).exp(), 0.0)
    }
}

fn modulated_gaussian(omega: Vec<f64>) -> impl FnMut(&[f64]) -> Complex64 {
    move |x: &[f64]| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        let phase: f64 = x.iter().zip(&omega).map(|(&a, &b)| a * b).sum();
        Complex64::new(0.0, phase).exp() * (-r2).exp()
    }
}

fn chirp(c: f64) -> impl FnMut(&[f64]) -> Complex64 {
    move |x: &[f64]| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        Complex64::new(-r2, c * r2).exp()
    }
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

impl TestFamily {
    /// Twelve members for transform-based experiments: six dilated
    /// Gaussians with the dilation capped so their spectra respect the
    /// margin guard, three modulated Gaussians with |omega| capped the same
    /// way, three chirps.
    pub fn default_for_grid(grid: &GridSpec) -> Result<Self> {
        let margin_radius = DEFAULT_MARGIN * grid.nyquist();
        // e^{-lam |x|^2} has relative spectral L2 tail ~ e^{-M^2/(2 lam)}
        // outside radius M (exact in 2D); lam <= M^2/46 keeps it below 1e-10.
        let lam_hi = (margin_radius * margin_radius / 46.0).min(64.0);
        // A unit-width Gaussian centered at |omega| = M - 7 keeps its tail
        // outside radius M near e^{-49/2} relative.
        let omega_hi = (margin_radius - 7.0).max(1.0);
        let mut guards = Vec::new();
        let mut members = Vec::new();
        for lam in log_spaced(1.0, lam_hi, 6) {
            members.push(guarded_member(
                grid,
                format!("dilated(lam={lam:.4})"),
                dilated(lam),
                true,
                &mut guards,
            )?);
        }
        let dirs = axis_directions(grid.dim());
        for (i, frac) in [1.0 / 3.0, 2.0 / 3.0, 1.0].into_iter().enumerate() {
            let dir = &dirs[i % dirs.len()];
            let omega: Vec<f64> = dir.iter().map(|&d| d * frac * omega_hi).collect();
            let label = format!(
                "modulated(w=[{}])",
                omega.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(",")
            );
            members.push(guarded_member(
                grid,
                label,
                modulated_gaussian(omega),
                true,
                &mut guards,
            )?);
        }
        for c in [0.5, 1.0, 2.0] {
            members.push(guarded_member(
                grid,
                format!("chirp(c={c:.2})"),
                chirp(c),
                true,
                &mut guards,
            )?);
        }
        Ok(TestFamily { grid: grid.clone(), members, guards })
    }

    /// Twenty members for maximal-function experiments (spatial-only):
    /// dilations sweep the full spike range [1, 64]; the spectral margin is
    /// recorded for spiky members instead of enforced.
    pub fn maximal_for_grid(grid: &GridSpec) -> Result<Self> {
        let margin_radius = DEFAULT_MARGIN * grid.nyquist();
        let omega_hi = (margin_radius - 7.0).max(1.0);
        let mut guards = Vec::new();
        let mut members = Vec::new();
        for lam in log_spaced(1.0, 64.0, 10) {
            members.push(guarded_member(
                grid,
                format!("dilated(lam={lam:.4})"),
                dilated(lam),
                false,
                &mut guards,
            )?);
        }
        let dirs = axis_directions(grid.dim());
        for (i, frac) in [0.2, 0.4, 0.6, 0.8, 1.0].into_iter().enumerate() {
            let dir = &dirs[i % dirs.len()];
            let omega: Vec<f64> = dir.iter().map(|&d| d * frac * omega_hi).collect();
            let label = format!(
                "modulated(w=[{}])",
                omega.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(",")
            );
            members.push(guarded_member(grid, label, modulated_gaussian(omega), false, &mut guards)?);
        }
        for c in [0.25, 0.5, 1.0, 1.5, 2.0] {
            members.push(guarded_member(
                grid,
                format!("chirp(c={c:.2})"),
                chirp(c),
                false,
                &mut guards,
            )?);
        }
        Ok(TestFamily { grid: grid.clone(), members, guards })
    }

    /// Fields of the modulated members with their modulation centers, for
    /// band-limited maximal comparisons.
    fn modulated_members(&self) -> Vec<(usize, Vec<f64>)> {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                let inner = m.label.strip_prefix("modulated(w=[")?.strip_suffix("])")?;
                let omega: Vec<f64> = inner
                    .split(',')
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .ok()?;
                Some((i, omega))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub member: String,
    pub input_norm: f64,
    pub output_norm: f64,
    pub ratio: f64,
    /// Hypothesis-violating row: reported, never asserted.
    pub exploratory: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub rows: Vec<ExperimentRow>,
    pub guards: Vec<String>,
}

impl ExperimentReport {
    pub fn asserted_rows(&self) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(|r| !r.exploratory)
    }

    pub fn min_ratio(&self) -> f64 {
        self.asserted_rows().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self) -> f64 {
        self.asserted_rows().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn median_ratio(&self) -> f64 {
        let mut v: Vec<f64> = self.asserted_rows().map(|r| r.ratio).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        if v.is_empty() {
            return f64::NAN;
        }
        if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
        }
    }

    /// max/min ratio over asserted rows.
    pub fn spread(&self) -> f64 {
        self.max_ratio() / self.min_ratio()
    }

    /// One row per member; columns fixed for machine consumption.
    pub fn csv(&self) -> String {
        let mut out = String::from("member,input_norm,output_norm,ratio,exploratory,note\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.member, r.input_norm, r.output_norm, r.ratio, r.exploratory, r.note
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Structured-text aggregate block.
    pub fn summary(&self) -> String {
        let mut out = format!("experiment: {}\n", self.name);
        for (k, v) in &self.params {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        let asserted = self.asserted_rows().count();
        out.push_str(&format!(
            "  rows: {} ({} asserted, {} exploratory)\n",
            self.rows.len(),
            asserted,
            self.rows.len() - asserted
        ));
        if asserted > 0 {
            out.push_str(&format!(
                "  ratio min/median/max: {} / {} / {}  (spread {})\n",
                self.min_ratio(),
                self.median_ratio(),
                self.max_ratio(),
                self.spread()
            ));
        }
        for g in &self.guards {
            out.push_str(&format!("  guard: {g}\n"));
        }
        out
    }

    /// Family experiments must report at least `min_members` finite rows.
    fn validate(self, min_members: usize) -> Result<Self> {
        if self.rows.len() < min_members {
            return Err(Error::InvalidParam(format!(
                "experiment {} produced {} rows, needs at least {min_members}",
                self.name,
                self.rows.len()
            )));
        }
        for r in &self.rows {
            if !r.ratio.is_finite() {
                return Err(Error::NonFinite(format!(
                    "experiment {}: ratio for {} is {}",
                    self.name, r.member, r.ratio
                )));
            }
        }
        Ok(self)
    }
}

fn with_member(label: &str, e: Error) -> Error {
    let tag = |m: String| format!("member {label}: {m}");
    match e {
        Error::InvalidParam(m) => Error::InvalidParam(tag(m)),
        Error::GridMismatch(m) => Error::GridMismatch(tag(m)),
        Error::NonFinite(m) => Error::NonFinite(tag(m)),
        Error::SupportGuard(m) => Error::SupportGuard(tag(m)),
        Error::Coverage(m) => Error::Coverage(tag(m)),
        Error::Calibration(m) => Error::Calibration(tag(m)),
        Error::CostGuard(m) => Error::CostGuard(tag(m)),
        Error::SymbolVanishes(m) => Error::SymbolVanishes(tag(m)),
        Error::Parse(m) => Error::Parse(tag(m)),
        Error::Io(e) => Error::Io(e),
    }
}

fn space_param_list(params: &SpaceParams) -> Vec<(String, String)> {
    vec![
        ("alpha".into(), format!("{}", params.alpha)),
        ("s".into(), format!("{}", params.s)),
        (
            "p".into(),
            format!(
                "({})",
                params
                    .p
                    .components()
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        ),
        ("q".into(), format!("{}", params.q)),
    ]
}

// ---------------------------------------------------------------------------
// Lifting
// ---------------------------------------------------------------------------

/// Ratios `|J^b f|_{M^{s-b}} / |f|_{M^s}` over the family; the lifting
/// theorem asserts the spread is a bounded constant.
pub fn lifting_experiment(
    family: &TestFamily,
    b: f64,
    params: &SpaceParams,
) -> Result<ExperimentReport> {
    let (fam, _, _) = build_family(params.alpha, &family.grid, DEFAULT_MARGIN, None)?;
    lifting_experiment_on(&fam, family, b, params)
}

/// Lifting experiment against a prebuilt window family (grids must match).
pub fn lifting_experiment_on(
    fam: &BapuFamily,
    family: &TestFamily,
    b: f64,
    params: &SpaceParams,
) -> Result<ExperimentReport> {
    let shifted = SpaceParams::new(params.alpha, params.s - b, params.p.clone(), params.q)?;
    let rows: Result<Vec<ExperimentRow>> = family
        .members
        .par_iter()
        .map(|m| {
            let wrap = |e| with_member(&m.label, e);
            let input = modulation_norm(fam, &m.field, params).map_err(wrap)?;
            let lifted = bessel_lift(&m.field, b).map_err(wrap)?;
            let output = modulation_norm(fam, &lifted, &shifted).map_err(wrap)?;
            Ok(ExperimentRow {
                member: m.label.clone(),
                input_norm: input,
                output_norm: output,
                ratio: output / input,
                exploratory: false,
                note: String::new(),
            })
        })
        .collect();
    let mut params_list = space_param_list(params);
    params_list.push(("b".into(), format!("{b}")));
    ExperimentReport {
        name: "lifting".into(),
        params: params_list,
        rows: rows?,
        guards: family.guards.clone(),
    }
    .validate(12)
}

// ---------------------------------------------------------------------------
// Boundedness
// ---------------------------------------------------------------------------

/// Ratios `|T_sigma f|_{M^{s-b}} / |f|_{M^s}`. Rows are exploratory when
/// the hypothesis alpha <= rho fails.
pub fn boundedness_experiment(
    sym: &Symbol,
    b: f64,
    family: &TestFamily,
    params: &SpaceParams,
) -> Result<ExperimentReport> {
    let (fam, _, _) = build_family(params.alpha, &family.grid, DEFAULT_MARGIN, None)?;
    boundedness_experiment_on(&fam, sym, b, family, params)
}

pub fn boundedness_experiment_on(
    fam: &BapuFamily,
    sym: &Symbol,
    b: f64,
    family: &TestFamily,
    params: &SpaceParams,
) -> Result<ExperimentReport> {
    let shifted = SpaceParams::new(params.alpha, params.s - b, params.p.clone(), params.q)?;
    let exploratory = params.alpha > sym.rho;
    let note = if exploratory {
        format!("alpha {} > rho {}: outside hypothesis", params.alpha, sym.rho)
    } else {
        String::new()
    };
    let rows: Result<Vec<ExperimentRow>> = family
        .members
        .par_iter()
        .map(|m| {
            let wrap = |e| with_member(&m.label, e);
            let input = modulation_norm(fam, &m.field, params).map_err(wrap)?;
            let mapped = apply(sym, &m.field, PathChoice::Auto).map_err(wrap)?;
            let (output, scatter) =
                covered_modulation_norm(fam, &mapped, &shifted).map_err(wrap)?;
            let mut note = note.clone();
            if let Some(tail) = scatter {
                if !note.is_empty() {
                    note.push_str("; ");
                }
                note.push_str(&format!("discarded scatter {tail:.3e} past the covered region"));
            }
            Ok(ExperimentRow {
                member: m.label.clone(),
                input_norm: input,
                output_norm: output,
                ratio: output / input,
                exploratory,
                note,
            })
        })
        .collect();
    let mut params_list = space_param_list(params);
    params_list.push(("b".into(), format!("{b}")));
    params_list.push(("rho".into(), format!("{}", sym.rho)));
    params_list.push(("symbol".into(), sym.name.clone()));
    ExperimentReport {
        name: "boundedness".into(),
        params: params_list,
        rows: rows?,
        guards: family.guards.clone(),
    }
    .validate(12)
}

/// The standard boundedness test symbol: a separable product of the
/// oscillatory type-1/2 multiplier with the smooth bounded amplitude
/// `(1 + sin x_1)/2`.
pub fn standard_boundedness_symbol() -> Symbol {
    let SymbolKind::Multiplier(m) = oscillatory(0.5).kind else {
        unreachable!("oscillatory is a multiplier");
    };
    Symbol {
        name: "oscillatory-separable(0.5)".into(),
        order: 0.0,
        rho: 0.5,
        kind: SymbolKind::Separable(vec![(
            std::sync::Arc::new(|x: &[f64]| Complex64::new((1.0 + x[0].sin()) / 2.0, 0.0)),
            m,
        )]),
        analytic: None,
    }
}

// ---------------------------------------------------------------------------
// Maximal
// ---------------------------------------------------------------------------

/// Mixed-norm ratios of the iterated maximal function over a theta and
/// exponent grid, plus band-limited maximal (Peetre-type) worst ratios on
/// the modulated members. Rows with theta >= min p_j are exploratory.
pub fn maximal_experiment(
    family: &TestFamily,
    thetas: &[f64],
    exponents: &[MixedExponents],
) -> Result<ExperimentReport> {
    let mut rows = Vec::new();
    for m in &family.members {
        let wrap = |e| with_member(&m.label, e);
        for &theta in thetas {
            let maximal = iterated_maximal(&m.field, theta).map_err(wrap)?;
            for p in exponents {
                let input = mixed_norm(&m.field, p).map_err(wrap)?;
                let output = mixed_norm(&maximal, p).map_err(wrap)?;
                let exploratory = theta >= p.min_exponent();
                rows.push(ExperimentRow {
                    member: format!(
                        "{}|theta={theta}|p=({})",
                        m.label,
                        p.components()
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    ),
                    input_norm: input,
                    output_norm: output,
                    ratio: output / input,
                    exploratory,
                    note: if exploratory {
                        "theta >= min p_j: outside hypothesis".into()
                    } else {
                        String::new()
                    },
                });
            }
        }
    }
    // Peetre-type comparison on band-limited (modulated Gaussian) members:
    // reported alongside, not part of the calibrated assertion.
    for (idx, omega) in family.modulated_members() {
        let m = &family.members[idx];
        for &theta in thetas {
            let report = peetre_check(&m.field, &omega, 6.0, theta)
                .map_err(|e| with_member(&m.label, e))?;
            rows.push(ExperimentRow {
                member: format!("peetre|{}|theta={theta}", m.label),
                input_norm: 1.0,
                output_norm: report.worst_ratio,
                ratio: report.worst_ratio,
                exploratory: true,
                note: format!("peetre worst ratio; support leak {:.3e}", report.support_leak),
            });
        }
    }
    ExperimentReport {
        name: "maximal".into(),
        params: vec![
            ("thetas".into(), format!("{thetas:?}")),
            (
                "exponents".into(),
                format!(
                    "[{}]",
                    exponents
                        .iter()
                        .map(|p| format!(
                            "({})",
                            p.components()
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(",")
                        ))
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            ),
        ],
        rows,
        guards: family.guards.clone(),
    }
    .validate(12)
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// Residuals `r_N = |T_{s1}(T_{s2} f) - T_{comp_N} f|_{L2}` relative to
/// `|f|_{L2}`, for each truncation depth N.
pub fn composition_experiment(
    s1: &Symbol,
    s2: &Symbol,
    f: &SampledField,
    depths: &[usize],
) -> Result<ExperimentReport> {
    let dim = f.spec().dim();
    let two_step = apply(s1, &apply(s2, f, PathChoice::Auto)?, PathChoice::Auto)?;
    let input = l2_norm(f);
    let mut rows = Vec::new();
    for &n in depths {
        let comp = composition_leading(s1, s2, n, dim)?;
        let one_step = apply(&comp, f, PathChoice::Auto)?;
        let residual = l2_norm(&SampledField::from_values(
            f.spec().clone(),
            two_step
                .values()
                .iter()
                .zip(one_step.values())
                .map(|(a, b)| a - b)
                .collect(),
        )?);
        rows.push(ExperimentRow {
            member: format!("N={n}"),
            input_norm: input,
            output_norm: residual,
            ratio: if input > 0.0 { residual / input } else { 0.0 },
            exploratory: false,
            note: String::new(),
        });
    }
    ExperimentReport {
        name: "composition".into(),
        params: vec![
            ("symbol1".into(), s1.name.clone()),
            ("symbol2".into(), s2.name.clone()),
        ],
        rows,
        guards: Vec::new(),
    }
    .validate(1)
}

/// The standard composition pair: the second-order multiplier `<xi>^2` and
/// the nonvanishing amplitude `(1 + sin x_1)/2 + 1`.
pub fn standard_composition_pair() -> (Symbol, Symbol) {
    let s1 = Symbol {
        name: "bracket-squared".into(),
        order: 2.0,
        rho: 1.0,
        kind: SymbolKind::Multiplier(std::sync::Arc::new(|xi: &[f64]| {
            Complex64::new(1.0 + xi.iter().map(|&c| c * c).sum::<f64>(), 0.0)
        })),
        analytic: None,
    };
    let s2 = Symbol {
        name: "shifted-sine-amplitude".into(),
        order: 0.0,
        rho: 1.0,
        kind: SymbolKind::Separable(vec![(
            std::sync::Arc::new(|x: &[f64]| Complex64::new((1.0 + x[0].sin()) / 2.0 + 1.0, 0.0)),
            std::sync::Arc::new(|_: &[f64]| Complex64::new(1.0, 0.0)),
        )]),
        analytic: None,
    };
    (s1, s2)
}

// ---------------------------------------------------------------------------
// Hypoelliptic smoothing
// ---------------------------------------------------------------------------

/// The rough input of the heat demonstration: a broad Gaussian plus a
/// high-frequency modulated Gaussian, on a (tau, x) grid.
pub fn default_rough_field(grid: &GridSpec) -> Result<SampledField> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParam(
            "the heat demonstration runs on a 2-axis (tau, x) grid".into(),
        ));
    }
    sample_function(grid, |x| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        let smooth = Complex64::new((-r2).exp(), 0.0);
        let rough = Complex64::new(0.0, 10.0 * x[0]).exp() * (-r2 / 4.0).exp();
        smooth + rough
    })
}

fn unguarded_modulation_norm(
    fam: &BapuFamily,
    g: &SampledField,
    params: &SpaceParams,
) -> Result<f64> {
    let norms = band_norms(fam, g, &params.p)?;
    let weighted: Vec<f64> = fam
        .windows
        .iter()
        .zip(norms)
        .map(|(w, b)| w.patch.scale.powf(params.s) * b)
        .collect();
    Ok(aggregate_band_terms(&weighted, params.q))
}

/// Modulation norm of an operator output, tolerating bounded quadrature
/// scatter past the covered region. Returns the norm of the covered part
/// and the relative mass that was discarded, if any.
fn covered_modulation_norm(
    fam: &BapuFamily,
    g: &SampledField,
    params: &SpaceParams,
) -> Result<(f64, Option<f64>)> {
    match modulation_norm(fam, g, params) {
        Ok(v) => Ok((v, None)),
        Err(Error::SupportGuard(_)) => {
            let tail = spectral_tail_mass(fam, g)?;
            if tail > OUTPUT_SCATTER_ALLOWANCE {
                return Err(Error::SupportGuard(format!(
                    "operator output scatters {tail:.3e} of its spectral mass past the \
                     covered region (allowance {OUTPUT_SCATTER_ALLOWANCE:.0e})"
                )));
            }
            Ok((unguarded_modulation_norm(fam, g, params)?, Some(tail)))
        }
        Err(e) => Err(e),
    }
}

/// Modulation norm of a residual field measured against a reference scale.
///
/// A residual that is numerically zero at the reference scale has a pure
/// roundoff spectrum, so the relative tail guard inside `modulation_norm`
/// would compare noise against noise. Any mass the covering misses is then
/// itself below the reference epsilon, so the band decomposition is normed
/// directly; fields of honest size go through the guarded path.
fn residual_modulation_norm(
    fam: &BapuFamily,
    g: &SampledField,
    reference_l2: f64,
    params: &SpaceParams,
) -> Result<f64> {
    if l2_norm(g) > 1e-10 * reference_l2 {
        return modulation_norm(fam, g, params);
    }
    unguarded_modulation_norm(fam, g, params)
}

/// Band-limited field whose spectrum sits where the parametrix cutoff is
/// identically 1 (radii 3..8), making `T_a T_l` the exact identity on it.
fn eta_one_control(grid: &GridSpec) -> Result<SampledField> {
    let mut values = vec![Complex64::default(); grid.len()];
    let dim = grid.dim();
    let mut xi = [0.0f64; crate::grid::MAX_DIM];
    grid.for_each_node(|idx, flat| {
        let mut r2 = 0.0;
        for a in 0..dim {
            xi[a] = grid.xi_node(idx[a]);
            r2 += xi[a] * xi[a];
        }
        let t = (r2.sqrt() - 5.5) / 2.5;
        values[flat] = Complex64::new(mother_bump(t * t), 0.0);
    });
    let spectrum = Spectrum::from_values(grid.clone(), values)?;
    Ok(inverse_transform(&spectrum))
}

/// Smoothing signature of the heat parametrix: `g = (I - T_a T_l) f` must
/// be small in the modulation norm because `I - T_a T_l` is infinitely
/// smoothing. Rows: the rough member (asserted against the 0.1 target), a
/// control supported where `eta = 1` (near-zero residual), and a
/// low-frequency member inside the cutoff rise (exploratory: the parametrix
/// does nothing there).
pub fn hypoelliptic_experiment(f_rough: &SampledField) -> Result<ExperimentReport> {
    let grid = f_rough.spec().clone();
    if grid.dim() != 2 {
        return Err(Error::InvalidParam(
            "the heat demonstration runs on a 2-axis (tau, x) grid".into(),
        ));
    }
    let params = SpaceParams::new(0.5, 2.0, MixedExponents::new(vec![2.0, 2.0])?, 2.0)?;
    let (fam, _, _) = build_family(params.alpha, &grid, DEFAULT_MARGIN, None)?;
    let l = heat();
    let a = heat_parametrix(1.0);
    let residual_row = |label: &str, f: &SampledField, exploratory: bool, note: &str| -> Result<ExperimentRow> {
        let wrap = |e| with_member(label, e);
        let lf = apply_multiplier(&l, f).map_err(wrap)?;
        let alf = apply_multiplier(&a, &lf).map_err(wrap)?;
        let g = SampledField::from_values(
            grid.clone(),
            f.values().iter().zip(alf.values()).map(|(x, y)| x - y).collect(),
        )?;
        let input = modulation_norm(&fam, f, &params).map_err(wrap)?;
        let output = residual_modulation_norm(&fam, &g, l2_norm(f), &params).map_err(wrap)?;
        Ok(ExperimentRow {
            member: label.into(),
            input_norm: input,
            output_norm: output,
            ratio: output / input,
            exploratory,
            note: note.into(),
        })
    };
    let rows = vec![
        residual_row("rough", f_rough, false, "asserted against the smoothing target")?,
        residual_row(
            "eta-one-control",
            &eta_one_control(&grid)?,
            false,
            "spectrum inside eta == 1: residual is pure quadrature error",
        )?,
        residual_row(
            "low-frequency",
            &sample_function(&grid, |x| {
                let r2: f64 = x.iter().map(|&c| c * c).sum();
                Complex64::new((-r2 / 4.0).exp(), 0.0)
            })?,
            true,
            "spectrum inside the cutoff rise: parametrix inert, outside the assertion",
        )?,
    ];
    ExperimentReport {
        name: "hypoelliptic".into(),
        params: space_param_list(&params)
            .into_iter()
            .chain([
                ("symbol".into(), l.name.clone()),
                ("parametrix".into(), a.name.clone()),
                ("target".into(), format!("{HYPO_SMOOTHING_TARGET}")),
            ])
            .collect(),
        rows,
        guards: Vec::new(),
    }
    .validate(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::bessel;

    fn grid1() -> GridSpec {
        GridSpec::new(1, 16.0, 256).unwrap()
    }

    fn grid2() -> GridSpec {
        GridSpec::new(2, 12.0, 128).unwrap()
    }

    fn params1(alpha: f64, s: f64) -> SpaceParams {
        SpaceParams::new(alpha, s, MixedExponents::new(vec![2.0]).unwrap(), 2.0).unwrap()
    }

    #[test]
    fn default_family_has_twelve_guarded_members() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        assert_eq!(family.members.len(), 12);
        assert!(family.guards.is_empty(), "guards: {:?}", family.guards);
        let mut labels: Vec<&str> = family.members.iter().map(|m| m.label.as_str()).collect();
        labels.dedup();
        assert_eq!(labels.len(), 12, "duplicate member labels");
        for m in &family.members {
            assert!(boundary_decay(&m.field) <= BOUNDARY_DECAY_GUARD);
            assert!(spectral_margin_mass(&m.field, DEFAULT_MARGIN) <= SPECTRAL_MARGIN_GUARD);
        }
    }

    #[test]
    fn maximal_family_keeps_the_spike_and_records_waivers() {
        let family = TestFamily::maximal_for_grid(&grid1()).unwrap();
        assert_eq!(family.members.len(), 20);
        assert!(family.members.iter().any(|m| m.label == "dilated(lam=64.0000)"));
        // The lam = 64 spike cannot satisfy the spectral guard on this grid;
        // its waiver must be on record.
        assert!(family.guards.iter().any(|g| g.contains("lam=64")), "guards: {:?}", family.guards);
    }

    #[test]
    fn lifting_at_b_zero_gives_unit_ratios() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let report = lifting_experiment(&family, 0.0, &params1(0.5, 2.0)).unwrap();
        for row in &report.rows {
            assert!(
                (row.ratio - 1.0).abs() < 1e-10,
                "{}: ratio {}",
                row.member,
                row.ratio
            );
        }
        assert!(report.spread() <= 1.0 + 1e-9);
    }

    #[test]
    fn lifting_ratios_are_scale_invariant() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let mut scaled = family.clone();
        for m in &mut scaled.members {
            let values = m.field.values().iter().map(|v| 5.0 * v).collect();
            m.field = SampledField::from_values(m.field.spec().clone(), values).unwrap();
        }
        let params = params1(0.5, 2.0);
        let a = lifting_experiment(&family, 2.0, &params).unwrap();
        let b = lifting_experiment(&scaled, 2.0, &params).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.ratio - rb.ratio).abs() <= 1e-12 * ra.ratio);
        }
    }

    #[test]
    fn lifting_spread_stays_under_the_committed_constant() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let report = lifting_experiment(&family, 2.0, &params1(0.5, 2.0)).unwrap();
        assert!(
            report.spread() <= LIFTING_SPREAD_CAL,
            "spread {} over cal {}",
            report.spread(),
            LIFTING_SPREAD_CAL
        );
        let down = lifting_experiment(&family, -1.0, &params1(0.25, 2.0)).unwrap();
        assert!(down.spread() <= LIFTING_SPREAD_CAL, "spread {}", down.spread());
    }

    #[test]
    fn boundedness_with_identity_symbol_is_exactly_unit() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let report =
            boundedness_experiment(&crate::symbols::identity(), 0.0, &family, &params1(0.5, 2.0))
                .unwrap();
        for row in &report.rows {
            assert!((row.ratio - 1.0).abs() < 1e-10, "{}: {}", row.member, row.ratio);
            assert!(!row.exploratory);
        }
    }

    #[test]
    fn boundedness_with_bessel_symbol_reproduces_lifting_rows() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let params = params1(0.5, 2.0);
        let lift = lifting_experiment(&family, 1.5, &params).unwrap();
        let bound = boundedness_experiment(&bessel(1.5), 1.5, &family, &params).unwrap();
        for (a, b) in lift.rows.iter().zip(&bound.rows) {
            assert_eq!(a.ratio, b.ratio, "rows diverge at {}", a.member);
            assert_eq!(a.input_norm, b.input_norm);
            assert_eq!(a.output_norm, b.output_norm);
        }
    }

    #[test]
    fn boundedness_flags_hypothesis_violations_as_exploratory() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let sym = standard_boundedness_symbol();
        let report = boundedness_experiment(
            &sym,
            0.0,
            &family,
            &SpaceParams::new(0.75, 2.0, MixedExponents::new(vec![2.0]).unwrap(), 2.0).unwrap(),
        )
        .unwrap();
        assert!(report.rows.iter().all(|r| r.exploratory));
        assert!(report.asserted_rows().count() == 0);
    }

    #[test]
    fn standard_symbol_boundedness_stays_under_the_committed_constant() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let sym = standard_boundedness_symbol();
        let report = boundedness_experiment(&sym, 0.0, &family, &params1(0.5, 2.0)).unwrap();
        assert!(report.asserted_rows().count() >= 12);
        assert!(
            report.max_ratio() <= BOUNDEDNESS_RATIO_CAL,
            "max ratio {} over cal {}",
            report.max_ratio(),
            BOUNDEDNESS_RATIO_CAL
        );
    }

    #[test]
    fn maximal_ratios_dominate_one_and_grow_with_theta() {
        let family = TestFamily::maximal_for_grid(&grid1()).unwrap();
        let p = MixedExponents::new(vec![2.0]).unwrap();
        let report = maximal_experiment(&family, &[1.0, 2.5], &[p]).unwrap();
        let ratio_of = |needle: &str, theta: &str| {
            report
                .rows
                .iter()
                .find(|r| r.member.starts_with(needle) && r.member.contains(theta))
                .map(|r| r.ratio)
                .unwrap()
        };
        for row in &report.rows {
            if row.member.starts_with("peetre") {
                continue;
            }
            assert!(row.ratio >= 1.0 - 1e-12, "{}: {}", row.member, row.ratio);
            if row.member.contains("theta=2.5") {
                assert!(row.exploratory, "theta 2.5 >= p 2 must be exploratory");
            }
        }
        // The inner power mean is monotone in theta, so the ratio at
        // theta = 2.5 dominates the one at theta = 1 for every member.
        for m in &family.members {
            let lo = ratio_of(m.label.as_str(), "theta=1");
            let hi = ratio_of(m.label.as_str(), "theta=2.5");
            assert!(
                hi >= lo - 1e-12,
                "{}: ratio fell from {lo} to {hi} as theta grew",
                m.label
            );
        }
        assert!(
            report.max_ratio() <= MAXIMAL_RATIO_CAL,
            "max ratio {} over cal {}",
            report.max_ratio(),
            MAXIMAL_RATIO_CAL
        );
        // Peetre rows exist for every modulated member and theta.
        assert_eq!(
            report.rows.iter().filter(|r| r.member.starts_with("peetre")).count(),
            10
        );
    }

    #[test]
    fn composition_residual_shrinks_with_truncation_depth() {
        let grid = grid1();
        let f = sample_function(&grid, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap();
        let (s1, s2) = standard_composition_pair();
        let report = composition_experiment(&s1, &s2, &f, &[1, 2]).unwrap();
        let r1 = report.rows[0].ratio;
        let r2 = report.rows[1].ratio;
        assert!(r2 < r1, "r2 {r2} should be below r1 {r1}");
        assert!(r1.is_finite() && r1 > 0.0);
    }

    #[test]
    fn composition_is_exact_for_frequency_only_factors() {
        let grid = grid1();
        let f = sample_function(&grid, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap();
        let (s1, _) = standard_composition_pair();
        let s2 = bessel(-0.7);
        let report = composition_experiment(&s1, &s2, &f, &[1, 2]).unwrap();
        for row in &report.rows {
            assert!(row.ratio <= 1e-10, "{}: residual ratio {}", row.member, row.ratio);
        }
    }

    #[test]
    fn composition_of_zero_field_is_zero() {
        let grid = grid1();
        let f = SampledField::from_values(
            grid.clone(),
            vec![Complex64::default(); grid.len()],
        )
        .unwrap();
        let (s1, s2) = standard_composition_pair();
        let report = composition_experiment(&s1, &s2, &f, &[1, 2]).unwrap();
        for row in &report.rows {
            assert_eq!(row.output_norm, 0.0);
            assert_eq!(row.ratio, 0.0);
        }
    }

    #[test]
    fn heat_parametrix_smooths_the_rough_field() {
        let grid = grid2();
        let f = default_rough_field(&grid).unwrap();
        let report = hypoelliptic_experiment(&f).unwrap();
        let row = |label: &str| report.rows.iter().find(|r| r.member == label).unwrap();
        let rough = row("rough");
        assert!(
            rough.ratio <= HYPO_SMOOTHING_TARGET,
            "smoothing ratio {} misses the target {HYPO_SMOOTHING_TARGET}",
            rough.ratio
        );
        let control = row("eta-one-control");
        assert!(control.ratio <= 1e-6, "control residual {}", control.ratio);
        let low = row("low-frequency");
        assert!(low.exploratory);
        assert!(low.ratio > 0.2, "cutoff dead zone should leave the field mostly intact");
    }

    #[test]
    fn reports_are_deterministic_across_reruns() {
        let family = TestFamily::default_for_grid(&grid1()).unwrap();
        let params = params1(0.5, 2.0);
        let a = lifting_experiment(&family, 1.0, &params).unwrap();
        let b = lifting_experiment(&TestFamily::default_for_grid(&grid1()).unwrap(), 1.0, &params)
            .unwrap();
        assert_eq!(a.csv(), b.csv());
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.csv().starts_with("member,input_norm,output_norm,ratio,exploratory,note\n"));
    }

    #[test]
    fn family_reports_must_have_a_dozen_finite_rows() {
        let report = ExperimentReport {
            name: "stub".into(),
            params: Vec::new(),
            rows: vec![ExperimentRow {
                member: "only".into(),
                input_norm: 1.0,
                output_norm: 1.0,
                ratio: 1.0,
                exploratory: false,
                note: String::new(),
            }],
            guards: Vec::new(),
        };
        assert!(matches!(report.validate(12), Err(Error::InvalidParam(_))));
    }
}
