//! Run configuration files.
//!
//! The format is flat `key = value` text. `[section]` headers prefix the keys
//! that follow with `section.`; keys may also be written dotted in full.
//! `#` starts a comment, values may be double-quoted, lists are
//! comma-separated and matrix rows are separated by `;`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::desingularize::{parse_desingularizer, Desingularizer};
use crate::dynamics::{DynamicsConfig, PhaseState};
use crate::error::{Error, Result};
use crate::levelset::LevelOptions;
use crate::potential::{build_catalog, CatalogEntry};
use crate::rates::RatesOptions;

pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let text = text.trim().trim_start_matches('[').trim_end_matches(']');
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|_| format!("`{p}` is not a number"))
        })
        .collect()
}

pub fn parse_matrix(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let rows: Vec<Vec<f64>> = text.split(';').map(parse_list).collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() || rows.iter().any(Vec::is_empty) {
        return Err("matrix has an empty row".into());
    }
    Ok(rows)
}

/// Key/value pairs of a config file with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(Error::Config(format!("line {lineno}: bad section name `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {lineno}: empty key")));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let v = unquote(v.trim());
            if entries.insert(key.clone(), (v, lineno)).is_some() {
                return Err(Error::Config(format!("{key}: defined twice (line {lineno})")));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Entries under `section.`, with the prefix removed.
    pub fn section(&self, section: &str) -> BTreeMap<String, String> {
        let prefix = format!("{section}.");
        self.entries
            .iter()
            .filter_map(|(k, (v, _))| k.strip_prefix(&prefix).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))
            })
            .transpose()
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("on") | Some("1") => Ok(true),
            Some("false") | Some("no") | Some("off") | Some("0") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key}: `{v}` is not a boolean"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| parse_list(v).map_err(|e| Error::Config(format!("{key}: {e}"))))
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> String {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
        .to_string()
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "potential.name",
    "dynamics.gamma",
    "dynamics.abs_tol",
    "dynamics.rel_tol",
    "dynamics.t_max",
    "dynamics.conv_tol_v",
    "dynamics.conv_tol_g",
    "dynamics.conv_window",
    "dynamics.r_escape",
    "dynamics.stop_at_convergence",
    "dynamics.sample_times",
    "initial.u",
    "initial.v",
    "analysis.certify",
    "analysis.levelset",
    "analysis.rates",
    "analysis.exponent",
    "certify.radius",
    "certify.budget",
    "certify.lambda",
    "levelset.r_hi",
    "levelset.r_lo",
    "levelset.points_per_decade",
    "levelset.starts",
    "levelset.start_radius",
    "levelset.fd_multiplier",
    "levelset.center",
    "rates.phi",
    "rates.budget",
    "rates.fit_window",
    "rates.t_start",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalysisToggles {
    pub certify: bool,
    pub levelset: bool,
    pub rates: bool,
    /// Estimate the exponent from the trajectory even when `rates.phi` is set.
    pub exponent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifySettings {
    /// Defaults to 1 for standalone certification and to the trajectory
    /// bound inside rate analysis.
    pub radius: Option<f64>,
    pub budget: usize,
    /// Defaults to `λ⋆`.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelsetSettings {
    pub r_hi: f64,
    pub r_lo: f64,
    pub points_per_decade: usize,
    pub center: Option<Vec<f64>>,
    pub options: LevelOptions,
}

#[derive(Debug, Clone)]
pub struct RatesSettings {
    pub phi: Option<Desingularizer>,
    pub options: RatesOptions,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub potential: CatalogEntry,
    pub dynamics: DynamicsConfig,
    pub initial: PhaseState,
    pub analysis: AnalysisToggles,
    pub certify: CertifySettings,
    pub levelset: LevelsetSettings,
    pub rates: RatesSettings,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw = RawConfig::parse(&text)?;
        Self::from_raw(&raw, path.parent())
    }

    /// Builds and validates a run configuration. Relative paths (tables, the
    /// output directory) resolve against `base_dir`.
    pub fn from_raw(raw: &RawConfig, base_dir: Option<&Path>) -> Result<Self> {
        for k in raw.keys() {
            if !(KNOWN_KEYS.contains(&k) || k.starts_with("potential.")) {
                return Err(Error::Config(format!("{k}: unknown key")));
            }
        }
        let seed = match raw.get("seed") {
            None => 0,
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("seed: `{v}` is not a non-negative integer")))?,
        };
        let out = raw.get("out").map(|o| match base_dir {
            Some(d) if Path::new(o).is_relative() => d.join(o),
            _ => PathBuf::from(o),
        });

        let name = raw
            .get("potential.name")
            .ok_or_else(|| Error::Config("potential.name: missing".into()))?;
        let mut params = raw.section("potential");
        params.remove("name");
        let potential = build_catalog(name, &params)?;
        let n = potential.spec.dim();

        let d = DynamicsConfig::default();
        let dynamics = DynamicsConfig {
            gamma: raw.num_or("dynamics.gamma", d.gamma)?,
            abs_tol: raw.num_or("dynamics.abs_tol", d.abs_tol)?,
            rel_tol: raw.num_or("dynamics.rel_tol", d.rel_tol)?,
            t_max: raw.num_or("dynamics.t_max", d.t_max)?,
            conv_tol_v: raw.num_or("dynamics.conv_tol_v", d.conv_tol_v)?,
            conv_tol_g: raw.num_or("dynamics.conv_tol_g", d.conv_tol_g)?,
            conv_window: raw.num_or("dynamics.conv_window", d.conv_window)?,
            r_escape: raw.num_or("dynamics.r_escape", d.r_escape)?,
            stop_at_convergence: raw.flag("dynamics.stop_at_convergence", d.stop_at_convergence)?,
            sample_times: raw.list("dynamics.sample_times")?.unwrap_or_default(),
        };
        dynamics
            .validate()
            .map_err(|e| Error::Config(format!("dynamics.{}", e.to_string().trim_start_matches("invalid input: "))))?;

        let u = raw
            .list("initial.u")?
            .ok_or_else(|| Error::Config("initial.u: missing".into()))?;
        let v = raw.list("initial.v")?.unwrap_or_else(|| vec![0.0; n]);
        for (key, x) in [("initial.u", &u), ("initial.v", &v)] {
            if x.len() != n {
                return Err(Error::Config(format!(
                    "{key}: expected {n} values for `{name}`, got {}",
                    x.len()
                )));
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("{key}: values must be finite")));
            }
        }
        let initial = PhaseState {
            u: nalgebra::DVector::from_vec(u),
            v: nalgebra::DVector::from_vec(v),
        };

        let analysis = AnalysisToggles {
            certify: raw.flag("analysis.certify", false)?,
            levelset: raw.flag("analysis.levelset", false)?,
            rates: raw.flag("analysis.rates", false)?,
            exponent: raw.flag("analysis.exponent", false)?,
        };

        let certify = CertifySettings {
            radius: raw.num("certify.radius")?,
            budget: raw.count("certify.budget", 10_000)?,
            lambda: raw.num("certify.lambda")?,
        };
        if certify.radius.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("certify.radius: must be positive".into()));
        }
        if certify.budget == 0 {
            return Err(Error::Config("certify.budget: must be positive".into()));
        }
        if certify.lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("certify.lambda: must be non-negative".into()));
        }

        let lo = LevelOptions::default();
        let levelset = LevelsetSettings {
            r_hi: raw.num_or("levelset.r_hi", 1e-2)?,
            r_lo: raw.num_or("levelset.r_lo", 1e-8)?,
            points_per_decade: raw.count("levelset.points_per_decade", 2)?,
            center: raw.list("levelset.center")?,
            options: LevelOptions {
                starts: raw.count("levelset.starts", lo.starts)?,
                start_radius: raw.num_or("levelset.start_radius", lo.start_radius)?,
                fd_multiplier: raw.flag("levelset.fd_multiplier", lo.fd_multiplier)?,
                seed,
                max_iter: lo.max_iter,
            },
        };
        if !(levelset.r_hi > levelset.r_lo && levelset.r_lo > 0.0) {
            return Err(Error::Config("levelset.r_lo: need 0 < r_lo < r_hi".into()));
        }
        if levelset.points_per_decade == 0 {
            return Err(Error::Config("levelset.points_per_decade: must be positive".into()));
        }
        if levelset.options.starts == 0 {
            return Err(Error::Config("levelset.starts: must be positive".into()));
        }
        if !(levelset.options.start_radius > 0.0) {
            return Err(Error::Config("levelset.start_radius: must be positive".into()));
        }
        if levelset.center.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::Config(format!("levelset.center: expected {n} values")));
        }

        let phi = raw
            .get("rates.phi")
            .map(|t| parse_desingularizer(t, base_dir))
            .transpose()
            .map_err(|e| Error::Config(format!("rates.phi: {}", e.to_string().trim_start_matches("config error: "))))?;
        let fit_window = match raw.list("rates.fit_window")? {
            None => None,
            Some(w) if w.len() == 2 && w[0] > 0.0 && w[1] > w[0] => Some((w[0], w[1])),
            Some(_) => return Err(Error::Config("rates.fit_window: expected `t_lo, t_hi` with 0 < t_lo < t_hi".into())),
        };
        let rates = RatesSettings {
            phi,
            options: RatesOptions {
                certify_budget: raw.count("rates.budget", 4000)?,
                seed,
                fit_window,
                t_start: raw.num("rates.t_start")?,
                ..RatesOptions::default()
            },
        };
        if rates.options.certify_budget == 0 {
            return Err(Error::Config("rates.budget: must be positive".into()));
        }

        Ok(RunConfig {
            seed,
            out,
            potential,
            dynamics,
            initial,
            analysis,
            certify,
            levelset,
            rates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# comment line
seed = 7
out = "runs/q"   # trailing comment

[potential]
name = quadratic
matrix = 1, 0; 0, 3

[dynamics]
gamma = 1.5
t_max = 50

[initial]
u = 1, -1

[rates]
phi = power(c=1.0, theta=0.5)
"#;

    #[test]
    fn parses_sections_and_values() {
        let raw = RawConfig::parse(SAMPLE).unwrap();
        assert_eq!(raw.get("dynamics.gamma"), Some("1.5"));
        assert_eq!(raw.get("out"), Some("runs/q"));
        let cfg = RunConfig::from_raw(&raw, None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.dynamics.gamma, 1.5);
        assert_eq!(cfg.initial.v.len(), 2);
        assert_eq!(cfg.potential.spec.dim(), 2);
        assert!(cfg.rates.phi.is_some());
    }

    #[test]
    fn dotted_keys_equal_sections() {
        let a = RawConfig::parse("[dynamics]\ngamma = 2").unwrap();
        let b = RawConfig::parse("dynamics.gamma = 2").unwrap();
        assert_eq!(a.get("dynamics.gamma"), b.get("dynamics.gamma"));
    }

    #[test]
    fn negative_gamma_names_key() {
        let raw = RawConfig::parse("potential.name = saddle\ninitial.u = 1, 0\ndynamics.gamma = -1").unwrap();
        let e = RunConfig::from_raw(&raw, None).unwrap_err().to_string();
        assert!(e.contains("dynamics.gamma"), "{e}");
    }

    #[test]
    fn unknown_key_rejected() {
        let raw = RawConfig::parse("potential.name = saddle\ninitial.u = 1, 0\ndynamics.gama = 1").unwrap();
        let e = RunConfig::from_raw(&raw, None).unwrap_err().to_string();
        assert!(e.contains("dynamics.gama"), "{e}");
    }

    #[test]
    fn wrong_initial_length() {
        let raw = RawConfig::parse("potential.name = saddle\ninitial.u = 1").unwrap();
        assert!(RunConfig::from_raw(&raw, None).unwrap_err().to_string().contains("initial.u"));
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(RawConfig::parse("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn matrix_and_list_parsing() {
        assert_eq!(parse_list("1, 2.5, -3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_list("[1, 2]").unwrap(), vec![1.0, 2.0]);
        assert_eq!(parse_matrix("1,0; 0,1").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(parse_list("1, x").is_err());
    }
}
