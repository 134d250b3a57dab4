//! Subcommand implementations. Each returns `Ok(Outcome)` when the run
//! itself completed (the outcome says whether asserted checks held) and
//! `Err` for configuration, input, or guard errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use alphamod::bapu::{
    bapu_norm_condition, build_family, derivative_bound_check, dilated_window_decay_check,
    rescaled_window_check, BapuFamily,
};
use alphamod::covering::{build_covering, covering_csv, CoveringParams};
use alphamod::grid::{read_field, sample_function, write_field, GridSpec, SampledField};
use alphamod::mixed::MixedExponents;
use alphamod::modspace::{band_profile, modulation_norm};
use alphamod::pdo::{apply, plan};
use alphamod::verify::{
    boundedness_experiment_on, composition_experiment, default_rough_field,
    hypoelliptic_experiment, lifting_experiment_on, maximal_experiment,
    standard_composition_pair, ExperimentReport, TestFamily, BOUNDEDNESS_RATIO_CAL,
    HYPO_SMOOTHING_TARGET, LIFTING_SPREAD_CAL, MAXIMAL_RATIO_CAL,
};
use alphamod::{Error, Result};
use num_complex::Complex64;

use crate::config::{Format, RunConfig};

/// Whether the asserted checks of a completed run held.
pub enum Outcome {
    Pass,
    Fail(String),
}

impl Outcome {
    fn fail(msg: impl Into<String>) -> Self {
        Outcome::Fail(msg.into())
    }
}

/// Tolerance a uniformity report must meet: within this factor of the
/// family median (committed across the bapu checks).
const UNIFORMITY_FACTOR: f64 = 4.0;
/// Partition sums must equal 1 on covered nodes to this tolerance.
const PARTITION_TOL: f64 = 1e-12;
/// Sweep points are capped at this cartesian-product size.
const SWEEP_LIMIT: usize = 10_000;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn write_report(cfg: &RunConfig, report: &ExperimentReport, stem: &str) -> Result<()> {
    ensure_dir(&cfg.output_dir)?;
    for format in &cfg.formats {
        match format {
            Format::Csv => {
                write_text(&cfg.output_dir, &format!("{stem}.csv"), &report.csv())?;
            }
            Format::Json => {
                write_text(&cfg.output_dir, &format!("{stem}.json"), &report.to_json())?;
            }
        }
    }
    write_text(&cfg.output_dir, &format!("{stem}_summary.txt"), &report.summary())?;
    Ok(())
}

/// The auxiliary grid used by the dilated-decay check: dilated windows live
/// on unit frequency scale, so a short wide-sample box resolves them.
fn decay_probe_grid(dim: usize) -> Result<GridSpec> {
    let samples = if dim == 1 { 1024 } else { 256 };
    GridSpec::new(dim, 4.0, samples)
}

fn build_configured_family(cfg: &RunConfig) -> Result<(BapuFamily, f64)> {
    let (fam, _, factor) = build_family(
        cfg.space.alpha,
        &cfg.grid,
        cfg.margin,
        cfg.radius_factor,
    )?;
    Ok((fam, factor))
}

/// Locate a frequency node in the margin ball left uncovered by an
/// explicitly-sized covering, for diagnostics.
fn first_uncovered_node(cfg: &RunConfig, factor: f64) -> Result<Option<Vec<f64>>> {
    let params = CoveringParams {
        alpha: cfg.space.alpha,
        radius_factor: factor,
        margin: cfg.margin,
        kmax: cfg.kmax,
    };
    let patches = build_covering(&params, &cfg.grid)?;
    let radius = cfg.margin * cfg.grid.nyquist();
    let dim = cfg.grid.dim();
    let mut found: Option<Vec<f64>> = None;
    let mut node = [0.0f64; alphamod::grid::MAX_DIM];
    cfg.grid.for_each_node(|idx, _| {
        if found.is_some() {
            return;
        }
        cfg.grid.xi_coords(idx, &mut node);
        let xi = &node[..dim];
        let r2: f64 = xi.iter().map(|&x| x * x).sum();
        if r2.sqrt() <= radius && !patches.iter().any(|p| p.contains(xi)) {
            found = Some(xi.to_vec());
        }
    });
    Ok(found)
}

pub fn cmd_bapu_check(cfg: &RunConfig) -> Result<Outcome> {
    let (fam, factor) = match build_configured_family(cfg) {
        Ok(x) => x,
        Err(Error::Coverage(msg)) => {
            if let Some(factor) = cfg.radius_factor {
                if let Some(node) = first_uncovered_node(cfg, factor)? {
                    return Ok(Outcome::fail(format!(
                        "coverage check failed at radius factor {factor}: frequency node \
                         ({}) lies in the margin ball but in no patch",
                        node.iter()
                            .map(|v| format!("{v:.6}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    )));
                }
            }
            return Ok(Outcome::fail(format!("covering construction failed: {msg}")));
        }
        Err(e) => return Err(e),
    };

    ensure_dir(&cfg.output_dir)?;
    let patches: Vec<_> = fam.windows.iter().map(|w| w.patch.clone()).collect();
    write_text(
        &cfg.output_dir,
        "covering.csv",
        &covering_csv(&patches, cfg.grid.dim()),
    )?;
    write_text(&cfg.output_dir, "windows.csv", &fam.windows_csv())?;

    let mut summary = String::new();
    let mut failures: Vec<String> = Vec::new();
    let _ = writeln!(
        summary,
        "family: alpha = {}, radius factor = {factor:.6}, {} windows",
        fam.alpha,
        fam.window_count()
    );

    let deviation = fam.partition_deviation();
    let _ = writeln!(summary, "partition deviation: {deviation:.3e}");
    if deviation > PARTITION_TOL {
        failures.push(format!(
            "partition sums deviate from 1 by {deviation:.3e} on covered nodes"
        ));
    }

    if cfg.space.alpha < 1.0 {
        let mut csv = String::new();
        for (beta, report) in derivative_bound_check(&fam, 2)? {
            let _ = writeln!(
                summary,
                "derivative bound beta={beta:?}: worst factor {:.3}",
                report.worst_factor()
            );
            csv.push_str(&report.csv());
            if !report.within_factor(UNIFORMITY_FACTOR) {
                failures.push(format!(
                    "derivative sup for beta={beta:?} varies by factor {:.3}",
                    report.worst_factor()
                ));
            }
        }
        write_text(&cfg.output_dir, "derivative_bounds.csv", &csv)?;

        let rescaled = rescaled_window_check(&fam, 2)?;
        let _ = writeln!(
            summary,
            "rescaled support radii: worst factor {:.3}",
            rescaled.support_radii.worst_factor()
        );
        if !rescaled.support_radii.within_factor(UNIFORMITY_FACTOR) {
            failures.push(format!(
                "rescaled supports vary by factor {:.3}",
                rescaled.support_radii.worst_factor()
            ));
        }
        let mut csv = rescaled.support_radii.csv();
        for (beta, report) in &rescaled.derivative_sups {
            let _ = writeln!(
                summary,
                "rescaled derivative beta={beta:?}: worst factor {:.3}",
                report.worst_factor()
            );
            csv.push_str(&report.csv());
            if !report.within_factor(UNIFORMITY_FACTOR) {
                failures.push(format!(
                    "rescaled derivative sup beta={beta:?} varies by factor {:.3}",
                    report.worst_factor()
                ));
            }
        }
        write_text(&cfg.output_dir, "rescaled.csv", &csv)?;

        let fine = decay_probe_grid(cfg.grid.dim())?;
        let mut csv = String::new();
        for (m, report) in dilated_window_decay_check(&fam, &[2, 4], &fine)? {
            let _ = writeln!(
                summary,
                "dilated decay moment {m}: worst factor {:.3}",
                report.worst_factor()
            );
            csv.push_str(&report.csv());
            if !report.within_factor(UNIFORMITY_FACTOR) {
                failures.push(format!(
                    "dilated moment-{m} norms vary by factor {:.3}",
                    report.worst_factor()
                ));
            }
        }
        write_text(&cfg.output_dir, "decay.csv", &csv)?;

        let norm_cond = bapu_norm_condition(&fam, &cfg.space.p)?;
        let _ = writeln!(
            summary,
            "norm condition: worst factor {:.3}",
            norm_cond.worst_factor()
        );
        write_text(&cfg.output_dir, "norm_condition.csv", &norm_cond.csv())?;
        if !norm_cond.within_factor(UNIFORMITY_FACTOR) {
            failures.push(format!(
                "norm-condition kernels vary by factor {:.3}",
                norm_cond.worst_factor()
            ));
        }
    } else {
        let _ = writeln!(
            summary,
            "dyadic shell family: lattice uniformity checks not applicable"
        );
    }

    write_text(&cfg.output_dir, "bapu_check_summary.txt", &summary)?;
    print!("{summary}");
    if failures.is_empty() {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::fail(failures.join("; ")))
    }
}

fn read_matching_field(cfg: &RunConfig, input: &Path) -> Result<SampledField> {
    let field = read_field(input)?;
    if field.spec() != &cfg.grid {
        return Err(Error::GridMismatch(format!(
            "input field has grid dim {} / half-width {} / samples {}, config says \
             {} / {} / {}",
            field.spec().dim(),
            field.spec().half_width(),
            field.spec().samples(),
            cfg.grid.dim(),
            cfg.grid.half_width(),
            cfg.grid.samples()
        )));
    }
    Ok(field)
}

pub fn cmd_norm(cfg: &RunConfig, input: &Path) -> Result<Outcome> {
    let field = read_matching_field(cfg, input)?;
    let (fam, _) = build_configured_family(cfg)?;
    let norm = modulation_norm(&fam, &field, &cfg.space)?;
    let profile = band_profile(&fam, &field, &cfg.space)?;
    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir, "band_profile.csv", &profile.csv())?;
    println!("{norm}");
    Ok(Outcome::Pass)
}

pub fn cmd_apply(cfg: &RunConfig, input: &Path) -> Result<Outcome> {
    let field = read_matching_field(cfg, input)?;
    let symbol = cfg.resolve_symbol()?;
    let plan = plan(&symbol, &cfg.grid);
    let output = apply(&symbol, &field, cfg.symbol.path)?;
    ensure_dir(&cfg.output_dir)?;
    let out_path = cfg.output_dir.join("applied.field");
    write_field(&output, &out_path)?;
    let meta = format!(
        "input = {}\nsymbol = {}\nkind = {}\npath = {:?}\ncost = {}\ngrid = dim {} half_width {} samples {}\n",
        input.display(),
        symbol.name,
        plan.kind,
        plan.path,
        plan.cost,
        cfg.grid.dim(),
        cfg.grid.half_width(),
        cfg.grid.samples(),
    );
    write_text(&cfg.output_dir, "applied.field.meta", &meta)?;
    println!("{}", out_path.display());
    Ok(Outcome::Pass)
}

fn default_input_field(grid: &GridSpec) -> Result<SampledField> {
    sample_function(grid, |x| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        Complex64::new((-r2 / 2.0).exp(), 0.0)
    })
}

/// Run the configured experiment and evaluate its asserted criterion.
fn run_experiment(cfg: &RunConfig) -> Result<(ExperimentReport, Outcome)> {
    match cfg.experiment.name.as_str() {
        "lifting" => {
            let family = TestFamily::default_for_grid(&cfg.grid)?;
            let (fam, _) = build_configured_family(cfg)?;
            let report = lifting_experiment_on(&fam, &family, cfg.experiment.b, &cfg.space)?;
            let outcome = if report.spread() <= LIFTING_SPREAD_CAL {
                Outcome::Pass
            } else {
                let worst = report
                    .rows
                    .iter()
                    .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                    .expect("validated reports have rows");
                Outcome::fail(format!(
                    "lifting spread {:.4} exceeds the committed {LIFTING_SPREAD_CAL}; \
                     largest ratio at member {}",
                    report.spread(),
                    worst.member
                ))
            };
            Ok((report, outcome))
        }
        "boundedness" => {
            let family = TestFamily::default_for_grid(&cfg.grid)?;
            let (fam, _) = build_configured_family(cfg)?;
            let symbol = cfg.resolve_symbol()?;
            let report =
                boundedness_experiment_on(&fam, &symbol, cfg.experiment.b, &family, &cfg.space)?;
            let asserted = report.asserted_rows().count();
            let outcome = if asserted == 0 {
                Outcome::Pass // purely exploratory run, reported without assertion
            } else if report.max_ratio() <= BOUNDEDNESS_RATIO_CAL {
                Outcome::Pass
            } else {
                let worst = report
                    .rows
                    .iter()
                    .filter(|r| !r.exploratory)
                    .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                    .expect("asserted rows exist");
                Outcome::fail(format!(
                    "boundedness ratio {:.4} at member {} exceeds the committed {BOUNDEDNESS_RATIO_CAL}",
                    worst.ratio, worst.member
                ))
            };
            Ok((report, outcome))
        }
        "maximal" => {
            let family = TestFamily::maximal_for_grid(&cfg.grid)?;
            let report =
                maximal_experiment(&family, &cfg.experiment.thetas, &[cfg.space.p.clone()])?;
            let outcome = if report.asserted_rows().count() == 0
                || report.max_ratio() <= MAXIMAL_RATIO_CAL
            {
                Outcome::Pass
            } else {
                let worst = report
                    .rows
                    .iter()
                    .filter(|r| !r.exploratory)
                    .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                    .expect("asserted rows exist");
                Outcome::fail(format!(
                    "maximal ratio {:.4} at row {} exceeds the committed {MAXIMAL_RATIO_CAL}",
                    worst.ratio, worst.member
                ))
            };
            Ok((report, outcome))
        }
        "composition" => {
            let (s1, s2) = standard_composition_pair();
            let f = default_input_field(&cfg.grid)?;
            let report = composition_experiment(&s1, &s2, &f, &cfg.experiment.depths)?;
            let mut outcome = Outcome::Pass;
            for pair in report.rows.windows(2) {
                if pair[1].ratio > pair[0].ratio {
                    outcome = Outcome::fail(format!(
                        "composition residual grew from {} ({}) to {} ({})",
                        pair[0].ratio, pair[0].member, pair[1].ratio, pair[1].member
                    ));
                }
            }
            Ok((report, outcome))
        }
        "hypoelliptic" => {
            let rough = default_rough_field(&cfg.grid)?;
            let report = hypoelliptic_experiment(&rough)?;
            let row = |label: &str| {
                report
                    .rows
                    .iter()
                    .find(|r| r.member == label)
                    .expect("experiment emits fixed rows")
            };
            let rough_row = row("rough");
            let control = row("eta-one-control");
            let outcome = if rough_row.ratio > HYPO_SMOOTHING_TARGET {
                Outcome::fail(format!(
                    "smoothing ratio {:.4} at member rough exceeds the target {HYPO_SMOOTHING_TARGET}",
                    rough_row.ratio
                ))
            } else if control.ratio > 1e-6 {
                Outcome::fail(format!(
                    "control residual {:.3e} at member eta-one-control exceeds 1e-6",
                    control.ratio
                ))
            } else {
                Outcome::Pass
            };
            Ok((report, outcome))
        }
        other => Err(Error::InvalidParam(format!("unknown experiment `{other}`"))),
    }
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let (report, outcome) = run_experiment(cfg)?;
    write_report(cfg, &report, &cfg.experiment.name)?;
    print!("{}", report.summary());
    Ok(outcome)
}

fn non_empty(list: &[f64], fallback: f64) -> Vec<f64> {
    if list.is_empty() {
        vec![fallback]
    } else {
        list.to_vec()
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let exp = &cfg.experiment;
    let alphas = non_empty(&exp.sweep_alpha, cfg.space.alpha);
    let ss = non_empty(&exp.sweep_s, cfg.space.s);
    let ps: Vec<Vec<f64>> = if exp.sweep_p.is_empty() {
        vec![cfg.space.p.components().to_vec()]
    } else {
        exp.sweep_p.clone()
    };
    let qs = non_empty(&exp.sweep_q, cfg.space.q);
    let bs = non_empty(&exp.sweep_b, exp.b);

    let points = alphas.len() * ss.len() * ps.len() * qs.len() * bs.len();
    if points > SWEEP_LIMIT {
        return Err(Error::CostGuard(format!(
            "sweep cartesian product has {points} points, limit {SWEEP_LIMIT}"
        )));
    }

    let mut long = String::from(
        "alpha,s,p,q,b,member,input_norm,output_norm,ratio,exploratory\n",
    );
    let mut aggregate = String::from("alpha,s,p,q,b,rows,min,median,max,spread\n");

    // Window families depend only on alpha; build each once.
    let mut bapu_cache: Vec<(f64, BapuFamily)> = Vec::new();
    for &alpha in &alphas {
        if exp.name != "maximal" && !bapu_cache.iter().any(|(a, _)| *a == alpha) {
            let (fam, _, _) = build_family(alpha, &cfg.grid, cfg.margin, cfg.radius_factor)?;
            bapu_cache.push((alpha, fam));
        }
    }

    let family = match exp.name.as_str() {
        "maximal" => TestFamily::maximal_for_grid(&cfg.grid)?,
        _ => TestFamily::default_for_grid(&cfg.grid)?,
    };

    for &alpha in &alphas {
        for &s in &ss {
            for p in &ps {
                for &q in &qs {
                    for &b in &bs {
                        let p_vec = if p.len() == 1 && cfg.grid.dim() > 1 {
                            MixedExponents::uniform(p[0], cfg.grid.dim())?
                        } else {
                            MixedExponents::new(p.clone())?
                        };
                        let params =
                            alphamod::modspace::SpaceParams::new(alpha, s, p_vec.clone(), q)?;
                        let report = match exp.name.as_str() {
                            "lifting" => {
                                let fam = &bapu_cache
                                    .iter()
                                    .find(|(a, _)| *a == alpha)
                                    .expect("cached above")
                                    .1;
                                lifting_experiment_on(fam, &family, b, &params)?
                            }
                            "boundedness" => {
                                let fam = &bapu_cache
                                    .iter()
                                    .find(|(a, _)| *a == alpha)
                                    .expect("cached above")
                                    .1;
                                let symbol = cfg.resolve_symbol()?;
                                boundedness_experiment_on(fam, &symbol, b, &family, &params)?
                            }
                            "maximal" => {
                                maximal_experiment(&family, &exp.thetas, &[p_vec.clone()])?
                            }
                            other => {
                                return Err(Error::InvalidParam(format!(
                                    "sweep supports lifting, boundedness, maximal; got `{other}`"
                                )))
                            }
                        };
                        let p_label = p
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join("|");
                        for row in &report.rows {
                            let _ = writeln!(
                                long,
                                "{alpha},{s},{p_label},{q},{b},{},{},{},{},{}",
                                row.member,
                                row.input_norm,
                                row.output_norm,
                                row.ratio,
                                row.exploratory
                            );
                        }
                        let _ = writeln!(
                            aggregate,
                            "{alpha},{s},{p_label},{q},{b},{},{},{},{},{}",
                            report.rows.len(),
                            report.min_ratio(),
                            report.median_ratio(),
                            report.max_ratio(),
                            report.spread()
                        );
                    }
                }
            }
        }
    }

    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir, "sweep.csv", &long)?;
    write_text(&cfg.output_dir, "sweep_aggregate.csv", &aggregate)?;
    println!("{points} sweep points written");
    Ok(Outcome::Pass)
}
