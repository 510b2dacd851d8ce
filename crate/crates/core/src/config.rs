//! Line-oriented experiment configuration.
//!
//! One or more `key = value` pairs per line, `#` starts a comment. Lists are
//! comma-separated (`dims = 64,128,256`). The spectral function uses the record
//! keys `family a lambda b file tail_a tail_lambda tail_b`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::analysis::Which;
use crate::ccr::ConvergenceBase;
use crate::spectrum::SpectralRecord;

pub const DEFAULT_TOL_IDENTITY: f64 = 1e-12;
pub const DEFAULT_TOL_EIGEN: f64 = 1e-10;

const KEYS: [&str; 20] = [
    "dims", "dim", "gamma", "beta_term", "beta", "alpha", "delta", "n_max", "k_max", "seeds",
    "m_cuts", "seed", "power", "base", "which", "enm_c", "enm_lambda", "tol.identity",
    "tol.eigen", "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spectrum: Option<SpectralRecord>,
    pub dims: Option<Vec<usize>>,
    pub dim: Option<usize>,
    pub gamma: Option<f64>,
    pub beta_term: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub n_max: Option<u64>,
    pub k_max: Option<u64>,
    pub seeds: Option<Vec<usize>>,
    pub m_cuts: Option<Vec<usize>>,
    pub seed: Option<usize>,
    pub power: Option<f64>,
    pub base: Option<ConvergenceBase>,
    pub which: Option<Which>,
    pub enm_c: Option<f64>,
    pub enm_lambda: Option<f64>,
    pub tol_identity: f64,
    pub tol_eigen: f64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spectrum: None,
            dims: None,
            dim: None,
            gamma: None,
            beta_term: None,
            beta: None,
            alpha: None,
            delta: None,
            n_max: None,
            k_max: None,
            seeds: None,
            m_cuts: None,
            seed: None,
            power: None,
            base: None,
            which: None,
            enm_c: None,
            enm_lambda: None,
            tol_identity: DEFAULT_TOL_IDENTITY,
            tol_eigen: DEFAULT_TOL_EIGEN,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based source line, 0 for overrides and whole-file checks.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

/// Every problem found in a config, in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    line: usize,
    value: String,
}

/// Drop whitespace around `=` so `a = 1` and `a=1` tokenize alike.
fn normalize(line: &str) -> String {
    let parts: Vec<&str> = line.split('=').collect();
    let last = parts.len() - 1;
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let p = if i > 0 { p.trim_start() } else { p };
            if i < last {
                p.trim_end()
            } else {
                p
            }
        })
        .collect::<Vec<_>>()
        .join("=")
}

fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> Vec<(usize, String, String)> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        for tok in normalize(body).split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) if !k.is_empty() => pairs.push((line, k.to_string(), v.to_string())),
                _ => match pairs.last_mut() {
                    // `dims = 64, 128` continues the previous list.
                    Some((l, _, v)) if *l == line && v.ends_with(',') => v.push_str(tok),
                    _ => errors.push(ConfigError {
                        line,
                        message: format!("expected key=value, got {tok:?}"),
                    }),
                },
            }
        }
    }
    pairs
}

fn parse_num<T: FromStr>(key: &str, e: &Entry, errors: &mut Vec<ConfigError>) -> Option<T> {
    match e.value.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(ConfigError {
                line: e.line,
                message: format!("malformed number for {key}: {:?}", e.value),
            });
            None
        }
    }
}

fn parse_list(key: &str, e: &Entry, errors: &mut Vec<ConfigError>) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for item in e.value.split(',') {
        match item.trim().parse() {
            Ok(v) => out.push(v),
            Err(_) => {
                errors.push(ConfigError {
                    line: e.line,
                    message: format!("malformed integer in {key}: {item:?}"),
                });
                return None;
            }
        }
    }
    Some(out)
}

fn increasing(key: &str, e: &Entry, v: &[usize], errors: &mut Vec<ConfigError>) {
    if v.windows(2).any(|w| w[1] <= w[0]) {
        errors.push(ConfigError {
            line: e.line,
            message: format!("{key} must be strictly increasing"),
        });
    }
}

fn parse_base(s: &str) -> Option<ConvergenceBase> {
    match s {
        "f" => Some(ConvergenceBase::F),
        "f2" | "f_squared" => Some(ConvergenceBase::FSquared),
        _ => None,
    }
}

fn base_name(b: ConvergenceBase) -> &'static str {
    match b {
        ConvergenceBase::F => "f",
        ConvergenceBase::FSquared => "f2",
    }
}

/// Parse config text, then apply `key=value` overrides on top of it.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[String],
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (line, key, value) in tokenize(text, &mut errors) {
        if !KEYS.contains(&key.as_str()) && !SpectralRecord::KEYS.contains(&key.as_str()) {
            errors.push(ConfigError {
                line,
                message: format!("unknown key {key:?}"),
            });
            continue;
        }
        match entries.entry(key) {
            std::collections::btree_map::Entry::Occupied(o) => errors.push(ConfigError {
                line,
                message: format!("duplicate key {:?}", o.key()),
            }),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(Entry { line, value });
            }
        }
    }
    for o in overrides {
        match o.split_once('=') {
            Some((k, v)) if KEYS.contains(&k.trim()) || SpectralRecord::KEYS.contains(&k.trim()) => {
                entries.insert(
                    k.trim().to_string(),
                    Entry {
                        line: 0,
                        value: v.trim().to_string(),
                    },
                );
            }
            Some((k, _)) => errors.push(ConfigError {
                line: 0,
                message: format!("unknown override key {:?}", k.trim()),
            }),
            None => errors.push(ConfigError {
                line: 0,
                message: format!("override must be key=value, got {o:?}"),
            }),
        }
    }

    let mut cfg = ExperimentConfig::default();
    let record_pairs: Vec<(&str, &Entry)> = SpectralRecord::KEYS
        .iter()
        .filter_map(|k| entries.get(*k).map(|e| (*k, e)))
        .collect();
    if !record_pairs.is_empty() {
        let mut ok = true;
        for (k, e) in &record_pairs {
            if !matches!(*k, "family" | "file") && parse_num::<f64>(k, e, &mut errors).is_none() {
                ok = false;
            }
        }
        if ok {
            let line = record_pairs.iter().map(|(_, e)| e.line).min().unwrap_or(0);
            match SpectralRecord::from_pairs(record_pairs.iter().map(|(k, e)| (*k, e.value.as_str()))) {
                Ok(r) => cfg.spectrum = Some(r),
                Err(err) => errors.push(ConfigError {
                    line,
                    message: err.to_string(),
                }),
            }
        }
    }

    for (key, e) in &entries {
        let errs = &mut errors;
        match key.as_str() {
            "dims" => {
                cfg.dims = parse_list(key, e, errs);
                if let Some(d) = &cfg.dims {
                    increasing(key, e, d, errs);
                }
            }
            "m_cuts" => {
                cfg.m_cuts = parse_list(key, e, errs);
                if let Some(d) = &cfg.m_cuts {
                    increasing(key, e, d, errs);
                }
            }
            "seeds" => cfg.seeds = parse_list(key, e, errs),
            "dim" => cfg.dim = parse_num(key, e, errs),
            "seed" => cfg.seed = parse_num(key, e, errs),
            "n_max" => cfg.n_max = parse_num(key, e, errs),
            "k_max" => cfg.k_max = parse_num(key, e, errs),
            "gamma" => cfg.gamma = parse_num(key, e, errs),
            "beta_term" => cfg.beta_term = parse_num(key, e, errs),
            "beta" => cfg.beta = parse_num(key, e, errs),
            "alpha" => cfg.alpha = parse_num(key, e, errs),
            "delta" => cfg.delta = parse_num(key, e, errs),
            "power" => cfg.power = parse_num(key, e, errs),
            "enm_c" => cfg.enm_c = parse_num(key, e, errs),
            "enm_lambda" => cfg.enm_lambda = parse_num(key, e, errs),
            "tol.identity" | "tol.eigen" => {
                if let Some(v) = parse_num::<f64>(key, e, errs) {
                    if !(v > 0.0 && v.is_finite()) {
                        errs.push(ConfigError {
                            line: e.line,
                            message: format!("{key} must be positive"),
                        });
                    } else if key == "tol.identity" {
                        cfg.tol_identity = v;
                    } else {
                        cfg.tol_eigen = v;
                    }
                }
            }
            "base" => match parse_base(&e.value) {
                Some(b) => cfg.base = Some(b),
                None => errs.push(ConfigError {
                    line: e.line,
                    message: format!("base must be f or f2, got {:?}", e.value),
                }),
            },
            "which" => match e.value.parse::<Which>() {
                Ok(w) => cfg.which = Some(w),
                Err(m) => errs.push(ConfigError { line: e.line, message: m }),
            },
            "out" => cfg.out = Some(PathBuf::from(&e.value)),
            _ => {}
        }
    }

    errors.sort_by_key(|e| e.line);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[])
}

fn join(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical text form; `parse_config(render(c)) == c`.
pub fn render(cfg: &ExperimentConfig) -> String {
    let mut lines = Vec::new();
    if let Some(r) = &cfg.spectrum {
        lines.push(r.render());
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            lines.push(format!("{k} = {v}"));
        }
    };
    push("dims", cfg.dims.as_deref().map(join));
    push("dim", cfg.dim.map(|v| v.to_string()));
    push("gamma", cfg.gamma.map(|v| v.to_string()));
    push("beta_term", cfg.beta_term.map(|v| v.to_string()));
    push("beta", cfg.beta.map(|v| v.to_string()));
    push("alpha", cfg.alpha.map(|v| v.to_string()));
    push("delta", cfg.delta.map(|v| v.to_string()));
    push("n_max", cfg.n_max.map(|v| v.to_string()));
    push("k_max", cfg.k_max.map(|v| v.to_string()));
    push("seeds", cfg.seeds.as_deref().map(join));
    push("m_cuts", cfg.m_cuts.as_deref().map(join));
    push("seed", cfg.seed.map(|v| v.to_string()));
    push("power", cfg.power.map(|v| v.to_string()));
    push("base", cfg.base.map(|b| base_name(b).to_string()));
    push(
        "which",
        cfg.which.map(|w| match w {
            Which::Tf => "tf".to_string(),
            Which::Tf2 => "tf2".to_string(),
        }),
    );
    push("enm_c", cfg.enm_c.map(|v| v.to_string()));
    push("enm_lambda", cfg.enm_lambda.map(|v| v.to_string()));
    push("tol.identity", Some(cfg.tol_identity.to_string()));
    push("tol.eigen", Some(cfg.tol_eigen.to_string()));
    push("out", cfg.out.as_ref().map(|p| p.display().to_string()));
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_and_dims_on_separate_lines() {
        let cfg = parse_config("family=powerlaw a=1 lambda=0.8 b=1\ndims=64,128,256").unwrap();
        assert_eq!(
            cfg.spectrum,
            Some(SpectralRecord::PowerLaw {
                a: 1.0,
                lambda: 0.8,
                b: 1.0
            })
        );
        assert_eq!(cfg.dims, Some(vec![64, 128, 256]));
        assert_eq!(cfg.tol_eigen, DEFAULT_TOL_EIGEN);
    }

    #[test]
    fn spaces_comments_and_split_lists() {
        let cfg = parse_config("# header\nfamily = sqrtshift   # trailing\ndims = 16, 32,64\ntol.identity=1e-13").unwrap();
        assert_eq!(cfg.spectrum, Some(SpectralRecord::SqrtShift));
        assert_eq!(cfg.dims, Some(vec![16, 32, 64]));
        assert_eq!(cfg.tol_identity, 1e-13);
    }

    #[test]
    fn non_increasing_dims() {
        let err = parse_config("dims=64,32").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("strictly increasing"));
    }

    #[test]
    fn malformed_number() {
        let err = parse_config("family=powerlaw a=1 lambda=abc b=1").unwrap_err();
        assert!(err.0[0].message.contains("malformed number for lambda"));
    }

    #[test]
    fn all_errors_are_collected() {
        let err = parse_config("dims=8,4\nbogus=1\ngamma=x\ntol.eigen=-1").unwrap_err();
        assert_eq!(err.0.len(), 4, "{err}");
        assert_eq!(err.0.iter().map(|e| e.line).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(parse_config("dim=4\ndim=8").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let cfg = parse_config_with_overrides("dim=4\ngamma=1", &["dim=8".into(), "beta=2".into()]).unwrap();
        assert_eq!(cfg.dim, Some(8));
        assert_eq!(cfg.beta, Some(2.0));
        assert!(parse_config_with_overrides("", &["nope=1".into()]).is_err());
    }

    #[test]
    fn render_round_trips() {
        let cfg = ExperimentConfig {
            spectrum: Some(SpectralRecord::Tabulated {
                file: "table.txt".into(),
                tail: Some((1.0, 0.75, 0.1)),
            }),
            dims: Some(vec![2, 4]),
            seeds: Some(vec![0, 3, 1]),
            base: Some(ConvergenceBase::FSquared),
            which: Some(Which::Tf2),
            gamma: Some(0.1 + 0.2),
            out: Some("out/run-1".into()),
            ..Default::default()
        };
        let text = render(&cfg);
        assert_eq!(parse_config(&text), Ok(cfg), "{text}");
    }
}
