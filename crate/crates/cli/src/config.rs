//! Flat `section.key = value` run configuration.
//!
//! The format is deliberately schema-free: one assignment per line, `#`
//! starts a comment, lists are comma-separated (exponent vectors inside a
//! sweep are separated by `;`). Every key is checked against the allowed
//! set before any computation starts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use alphamod::grid::GridSpec;
use alphamod::mixed::MixedExponents;
use alphamod::modspace::SpaceParams;
use alphamod::pdo::PathChoice;
use alphamod::symbols::{
    bessel, heat, heat_parametrix, identity, oscillatory, Symbol,
};
use alphamod::verify::standard_boundedness_symbol;
use alphamod::{Error, Result};

const ALLOWED_KEYS: &[&str] = &[
    "grid.dim",
    "grid.half_width",
    "grid.samples",
    "space.alpha",
    "space.s",
    "space.p",
    "space.q",
    "covering.radius_factor",
    "covering.kmax",
    "covering.margin",
    "symbol.name",
    "symbol.order",
    "symbol.rho",
    "symbol.cutoff",
    "symbol.path",
    "experiment.name",
    "experiment.b",
    "experiment.thetas",
    "experiment.depths",
    "experiment.sweep.alpha",
    "experiment.sweep.s",
    "experiment.sweep.p",
    "experiment.sweep.q",
    "experiment.sweep.b",
    "output.directory",
    "output.formats",
];

fn parse_err(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("config line {line_no}: {msg}"))
}

/// Raw key/value view of a config file after syntax and key validation.
struct RawConfig {
    map: BTreeMap<String, String>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_err(line_no, format!("expected `section.key = value`, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if !ALLOWED_KEYS.contains(&key) {
                return Err(parse_err(line_no, format!("unknown key `{key}`")));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(parse_err(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(RawConfig { map })
    }

    fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.map.get(key).map(String::as_str).unwrap_or(default)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not an integer"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(Vec::new()),
            Some(v) => parse_f64_list(key, v),
        }
    }

    fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => parse_f64_list(key, v),
        }
    }

    /// `auto` (or absent) means None; otherwise a parsed value.
    fn auto_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key).map(String::as_str) {
            None | Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not a number or `auto`"))),
        }
    }

    fn auto_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.map.get(key).map(String::as_str) {
            None | Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not an integer or `auto`"))),
        }
    }
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("key `{key}`: `{t}` is not a number")))
        })
        .collect()
}

/// Vectors separated by `;`, components by `,`: `2,4;2,2`.
fn parse_vec_list(key: &str, v: &str) -> Result<Vec<Vec<f64>>> {
    v.split(';').map(|group| parse_f64_list(key, group)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct SymbolConfig {
    pub name: String,
    pub order: f64,
    pub rho: f64,
    pub cutoff: f64,
    pub path: PathChoice,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub b: f64,
    pub thetas: Vec<f64>,
    pub depths: Vec<usize>,
    pub sweep_alpha: Vec<f64>,
    pub sweep_s: Vec<f64>,
    pub sweep_p: Vec<Vec<f64>>,
    pub sweep_q: Vec<f64>,
    pub sweep_b: Vec<f64>,
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub space: SpaceParams,
    pub radius_factor: Option<f64>,
    pub kmax: Option<usize>,
    pub margin: f64,
    pub symbol: SymbolConfig,
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;

        let dim = raw.usize_or("grid.dim", 1)?;
        let half_width = raw.f64_or("grid.half_width", 16.0)?;
        let samples = raw.usize_or("grid.samples", 256)?;
        let grid = GridSpec::new(dim, half_width, samples)?;

        let alpha = raw.f64_or("space.alpha", 0.5)?;
        let s = raw.f64_or("space.s", 2.0)?;
        let p_list = raw.f64_list_or("space.p", &[2.0])?;
        let p = if p_list.len() == 1 && dim > 1 {
            MixedExponents::uniform(p_list[0], dim)?
        } else {
            MixedExponents::new(p_list)?
        };
        if p.dim() != dim {
            return Err(Error::Parse(format!(
                "space.p has {} components but the grid has {dim} axes",
                p.dim()
            )));
        }
        let q = raw.f64_or("space.q", 2.0)?;
        let space = SpaceParams::new(alpha, s, p, q)?;

        let radius_factor = raw.auto_f64("covering.radius_factor")?;
        let kmax = raw.auto_usize("covering.kmax")?;
        let margin = raw.f64_or("covering.margin", 0.9)?;
        if !(margin > 0.0 && margin <= 1.0) {
            return Err(Error::Parse(format!(
                "covering.margin must lie in (0, 1], got {margin}"
            )));
        }

        let symbol = SymbolConfig {
            name: raw.str_or("symbol.name", "identity").to_string(),
            order: raw.f64_or("symbol.order", 0.0)?,
            rho: raw.f64_or("symbol.rho", 0.5)?,
            cutoff: raw.f64_or("symbol.cutoff", 1.0)?,
            path: match raw.str_or("symbol.path", "auto") {
                "auto" => PathChoice::Auto,
                "multiplier" => PathChoice::Multiplier,
                "separable" => PathChoice::Separable,
                "general" => PathChoice::General,
                other => {
                    return Err(Error::Parse(format!(
                        "symbol.path must be auto|multiplier|separable|general, got `{other}`"
                    )))
                }
            },
        };

        let experiment = ExperimentConfig {
            name: raw.str_or("experiment.name", "lifting").to_string(),
            b: raw.f64_or("experiment.b", 2.0)?,
            thetas: raw.f64_list_or("experiment.thetas", &[1.0])?,
            depths: {
                let d = raw.f64_list_or("experiment.depths", &[1.0, 2.0])?;
                d.into_iter()
                    .map(|v| {
                        if v.fract() == 0.0 && v >= 1.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::Parse(format!(
                                "experiment.depths entries must be positive integers, got {v}"
                            )))
                        }
                    })
                    .collect::<Result<Vec<usize>>>()?
            },
            sweep_alpha: raw.f64_list("experiment.sweep.alpha")?,
            sweep_s: raw.f64_list("experiment.sweep.s")?,
            sweep_p: match raw.map.get("experiment.sweep.p") {
                None => Vec::new(),
                Some(v) => parse_vec_list("experiment.sweep.p", v)?,
            },
            sweep_q: raw.f64_list("experiment.sweep.q")?,
            sweep_b: raw.f64_list("experiment.sweep.b")?,
        };
        let known = [
            "lifting",
            "boundedness",
            "maximal",
            "composition",
            "hypoelliptic",
        ];
        if !known.contains(&experiment.name.as_str()) {
            return Err(Error::Parse(format!(
                "experiment.name must be one of {known:?}, got `{}`",
                experiment.name
            )));
        }

        let output_dir = PathBuf::from(raw.str_or("output.directory", "."));
        let mut formats = Vec::new();
        for f in raw.str_or("output.formats", "csv").split(',') {
            match f.trim() {
                "csv" => formats.push(Format::Csv),
                "json" => formats.push(Format::Json),
                other => {
                    return Err(Error::Parse(format!(
                        "output.formats entries must be csv or json, got `{other}`"
                    )))
                }
            }
        }

        Ok(RunConfig {
            grid,
            space,
            radius_factor,
            kmax,
            margin,
            symbol,
            experiment,
            output_dir,
            formats,
        })
    }

    /// Resolve the configured symbol from the catalog.
    pub fn resolve_symbol(&self) -> Result<Symbol> {
        let c = &self.symbol;
        Ok(match c.name.as_str() {
            "identity" => identity(),
            "bessel" => bessel(c.order),
            "heat" => heat(),
            "heat-parametrix" => heat_parametrix(c.cutoff),
            "oscillatory" => oscillatory(c.rho),
            "standard-boundedness" => standard_boundedness_symbol(),
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown symbol `{other}`; catalog: identity, bessel, heat, \
                     heat-parametrix, oscillatory, standard-boundedness"
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_to_the_desk_grid() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.grid.dim(), 1);
        assert_eq!(cfg.grid.samples(), 256);
        assert_eq!(cfg.space.alpha, 0.5);
        assert_eq!(cfg.formats, vec![Format::Csv]);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let err = RunConfig::parse("grid.dim = 1\nspace.banana = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("space.banana"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# heading\n\ngrid.dim = 2 # trailing\ngrid.half_width = 12\ngrid.samples = 128\nspace.p = 2,4\n").unwrap();
        assert_eq!(cfg.grid.dim(), 2);
        assert_eq!(cfg.space.p.components(), &[2.0, 4.0]);
    }

    #[test]
    fn scalar_p_broadcasts_over_axes() {
        let cfg = RunConfig::parse("grid.dim = 2\ngrid.half_width = 12\ngrid.samples = 128\n").unwrap();
        assert_eq!(cfg.space.p.components(), &[2.0, 2.0]);
    }

    #[test]
    fn invalid_q_is_a_config_error() {
        assert!(RunConfig::parse("space.q = 0\n").is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(RunConfig::parse("space.s = 1\nspace.s = 2\n").is_err());
    }

    #[test]
    fn sweep_vectors_use_semicolon_groups() {
        let cfg = RunConfig::parse("experiment.sweep.p = 2,4;2,2\n").unwrap();
        assert_eq!(cfg.experiment.sweep_p, vec![vec![2.0, 4.0], vec![2.0, 2.0]]);
    }
}
