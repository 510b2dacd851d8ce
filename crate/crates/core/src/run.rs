//! Command dispatch, run reports and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{
    self, check_m_beta, check_ms_beta, katorellich_margin, lower_bound_check, norm_scan,
    relative_bound, ClassWitness, KrVerdict, ScanOptions, Which,
};
use crate::ccr::{self, ccr_report, domain_convergence, gen_ccr_domain, ConvergenceBase, DomainTag};
use crate::config::{render, ExperimentConfig};
use crate::operators::{build_diag, build_galapon, build_symmetrized, build_tf, OperatorError};
use crate::spectrum::{
    all_pairs, check_class_k, check_class_k_minus, check_enm, EnmVerdict, SpectralFunction,
    SpectrumError, TriVerdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SpectrumCheck,
    CcrVerify,
    NormScan,
    ClassCheck,
    RelBound,
    KrMargin,
    LowerBound,
    GalaponCompare,
    IdentityCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    /// Process exit code: only failed checks are nonzero.
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass | Status::Inconclusive => 0,
            Status::Fail => 1,
        }
    }

    fn from_tri(v: TriVerdict) -> Self {
        match v {
            TriVerdict::Pass => Status::Pass,
            TriVerdict::Fail => Status::Fail,
            TriVerdict::Inconclusive => Status::Inconclusive,
        }
    }

    fn and(self, other: Status) -> Status {
        match (self, other) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{command:?} needs `{key}` in the config")]
    Missing { command: Command, key: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Ccr(#[from] ccr::CcrError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RunError>;

/// A plot-ready series written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub identity: f64,
    pub eigen: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub version: &'static str,
    pub function: String,
    /// Canonical rendering of the effective config.
    pub config: String,
    pub tolerances: Tolerances,
    pub status: Status,
    pub result: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

struct Ctx<'a> {
    command: Command,
    cfg: &'a ExperimentConfig,
}

impl Ctx<'_> {
    fn need<T: Clone>(&self, v: &Option<T>, key: &'static str) -> Result<T> {
        v.clone().ok_or(RunError::Missing {
            command: self.command,
            key,
        })
    }

    fn lambda(&self, f: &SpectralFunction) -> Result<f64> {
        match f.power_law_params() {
            Some((a, lambda, b)) if a == 1.0 && b == 1.0 => Ok(lambda),
            _ => Err(RunError::Invalid(format!(
                "{:?} builds its witness for x^lambda + 1, got {f}",
                self.command
            ))),
        }
    }

    fn witness(&self, f: &SpectralFunction, beta: f64) -> Result<ClassWitness> {
        let lambda = self.lambda(f)?;
        let alpha = self.need(&self.cfg.alpha, "alpha")?;
        Ok(match self.cfg.delta {
            Some(delta) => ClassWitness::with_delta(lambda, alpha, delta)?,
            None => ClassWitness::power_law(lambda, alpha, beta)?,
        })
    }
}

fn f64_rows<'a>(pairs: impl Iterator<Item = (usize, &'a f64)>) -> Vec<Vec<String>> {
    pairs.map(|(d, v)| vec![d.to_string(), format!("{v:e}")]).collect()
}

/// Run one command against a parsed config. `base_dir` resolves relative table paths.
pub fn run(command: Command, cfg: &ExperimentConfig, base_dir: Option<&Path>) -> Result<RunReport> {
    let ctx = Ctx { command, cfg };
    let record = ctx.need(&cfg.spectrum, "family")?;
    let f = record.load(base_dir)?;
    let tol_id = cfg.tol_identity;
    let tol_eig = cfg.tol_eigen;
    let mut tables = Vec::new();

    let (status, result) = match command {
        Command::SpectrumCheck => {
            let n_max = cfg.n_max.unwrap_or(1000);
            let k = check_class_k(&f, n_max)?;
            let k_minus = check_class_k_minus(&f, n_max)?;
            let mut status = if k.passed() { Status::Pass } else { Status::Fail };
            let enm = match (cfg.enm_c, cfg.enm_lambda) {
                (Some(c), Some(lambda)) => {
                    let v = check_enm(&f, c, lambda, &all_pairs(n_max.min(256)))?;
                    if v != EnmVerdict::Pass {
                        status = Status::Fail;
                    }
                    Some(v)
                }
                (None, None) => None,
                _ => return Err(RunError::Invalid("enm_c and enm_lambda go together".into())),
            };
            (status, json!({ "n_max": n_max, "class_k": k, "class_k_minus": k_minus, "enm": enm }))
        }
        Command::CcrVerify => {
            let dim = cfg.dim.unwrap_or(256);
            let seeds = cfg
                .seeds
                .clone()
                .unwrap_or_else(|| (0..20.min(dim.saturating_sub(2))).collect());
            let mut vectors = gen_ccr_domain(DomainTag::FinDiff, &f, dim, &seeds)?;
            vectors.extend(gen_ccr_domain(DomainTag::Extended, &f, dim, &seeds)?);
            // Off-domain control: a basis vector has residual sqrt(dim).
            vectors.extend(gen_ccr_domain(DomainTag::Raw, &f, dim, &seeds[..seeds.len().min(1)])?);
            let h = build_diag(&f, dim, 1.0)?;
            let t = build_tf(&f, dim)?;
            let report = ccr_report(&h, &t, &vectors, tol_id)?;
            let status = if report.domain_exact() { Status::Pass } else { Status::Fail };
            tables.push(Table {
                name: "residuals",
                header: vec!["tag", "support_max", "residual"],
                rows: report
                    .vectors
                    .iter()
                    .map(|r| vec![r.tag.to_string(), r.support_max.to_string(), format!("{:e}", r.residual)])
                    .collect(),
            });
            let convergence = match &cfg.m_cuts {
                Some(cuts) => Some(domain_convergence(
                    &f,
                    cfg.power.unwrap_or(0.0),
                    cfg.base.unwrap_or(ConvergenceBase::F),
                    cfg.seed.unwrap_or(0),
                    cuts,
                )?),
                None => None,
            };
            (status, json!({ "ccr": report, "domain_exact": report.domain_exact(), "convergence": convergence }))
        }
        Command::NormScan => {
            let dims = ctx.need(&cfg.dims, "dims")?;
            let mut opts = ScanOptions {
                tol: tol_eig,
                ..ScanOptions::default()
            };
            if let Some(k) = cfg.k_max {
                opts.k_max = k;
            }
            if let Some(n) = cfg.n_max {
                opts.n_max = n;
            }
            let scan = norm_scan(&f, &dims, cfg.which.unwrap_or(Which::Tf), &opts)?;
            tables.push(Table {
                name: "norms",
                header: vec!["dim", "value"],
                rows: f64_rows(scan.dims.iter().copied().zip(&scan.values)),
            });
            // Bounded or growing is the finding, not a failure.
            (Status::Pass, serde_json::to_value(&scan)?)
        }
        Command::ClassCheck => {
            let beta = cfg.beta.unwrap_or(1.0);
            let witness = ctx.witness(&f, beta)?;
            let n_max = cfg.n_max.unwrap_or(2000);
            let k_max = cfg.k_max.unwrap_or(2000);
            let m = check_m_beta(&f, &witness, beta, n_max, k_max)?;
            let mut status = Status::from_tri(m.verdict);
            let ms = if m.verdict == TriVerdict::Pass {
                let ms = check_ms_beta(&f, &witness, beta, n_max)?;
                status = status.and(Status::from_tri(ms.verdict));
                Some(ms)
            } else {
                None
            };
            (status, json!({ "beta": beta, "witness": witness, "m_beta": m, "ms_beta": ms }))
        }
        Command::RelBound => {
            let beta = cfg.beta.unwrap_or(1.0);
            let dims = ctx.need(&cfg.dims, "dims")?;
            let witness = ctx.witness(&f, beta)?;
            let ms = check_ms_beta(&f, &witness, beta, cfg.n_max.unwrap_or(2000))?;
            if ms.verdict != TriVerdict::Pass {
                (Status::Fail, json!({ "beta": beta, "ms_beta": ms, "relative_bound": null }))
            } else {
                let witness = witness.with_c_estimate(ms.c_estimate);
                let rb = relative_bound(&f, beta, &dims, &witness, tol_eig)?;
                tables.push(Table {
                    name: "norms",
                    header: vec!["dim", "value"],
                    rows: f64_rows(rb.dims.iter().copied().zip(&rb.numeric)),
                });
                let status = if rb.nondecreasing && rb.within_cap { Status::Pass } else { Status::Fail };
                (status, json!({ "beta": beta, "ms_beta": ms, "relative_bound": rb }))
            }
        }
        Command::KrMargin => {
            let gamma = ctx.need(&cfg.gamma, "gamma")?;
            let beta_term = ctx.need(&cfg.beta_term, "beta_term")?;
            let dims = ctx.need(&cfg.dims, "dims")?;
            let kr = katorellich_margin(&f, gamma, beta_term, &dims, tol_eig)?;
            let status = match kr.verdict {
                KrVerdict::PremiseHolds => Status::Pass,
                KrVerdict::PremiseFails => Status::Fail,
                KrVerdict::Inconclusive => Status::Inconclusive,
            };
            (status, serde_json::to_value(&kr)?)
        }
        Command::LowerBound => {
            let gamma = ctx.need(&cfg.gamma, "gamma")?;
            let dim = cfg.dim.unwrap_or(256);
            // Eigen tolerance is relative; the cap comparison needs an absolute slack.
            let probe = lower_bound_check(&f, gamma, dim, tol_eig, 0.0)?;
            let slack = tol_eig * probe.cap.abs().max(1.0);
            let mut report = probe;
            report.cap_ok = report.min_eigenvalue >= report.cap - slack;
            let status = if report.cap_ok { Status::Pass } else { Status::Fail };
            (status, json!({ "lower_bound": report, "slack": slack }))
        }
        Command::GalaponCompare => {
            let dim = cfg.dim.unwrap_or(64);
            let energies = f.values(dim)?;
            let g = build_galapon(&energies, dim)?;
            let t = build_tf(&f, dim)?;
            let diff = g.max_abs_diff(&t)?;
            let scale = t.max_abs();
            let status = if diff <= tol_id * scale { Status::Pass } else { Status::Fail };
            (status, json!({ "dim": dim, "max_abs_diff": diff, "scale": scale, "tol": tol_id }))
        }
        Command::IdentityCheck => {
            let dim = cfg.dim.unwrap_or(512);
            let sym = build_symmetrized(&f, dim, 0.0, 1.0)?;
            let t = build_tf(&f, dim)?;
            let diff = sym.max_abs_diff(&t)?;
            let scale = t.max_abs();
            let ninv = ccr::ninv_identity_residual(&f, dim)?;
            // Entries of f(N) / Delta_1(f, N) set the size of the second identity.
            let ninv_scale = (0..dim as u64)
                .map(|n| Ok(f.eval(n)? / f.delta(1, n)?))
                .collect::<std::result::Result<Vec<f64>, SpectrumError>>()?
                .into_iter()
                .fold(1.0f64, f64::max);
            let ok = diff <= tol_id * scale && ninv <= tol_id * ninv_scale;
            let status = if ok { Status::Pass } else { Status::Fail };
            (
                status,
                json!({
                    "dim": dim,
                    "symmetrized_vs_tf": { "max_abs_diff": diff, "scale": scale },
                    "ninv": { "residual": ninv, "scale": ninv_scale },
                    "tol": tol_id,
                }),
            )
        }
    };

    Ok(RunReport {
        command,
        version: env!("CARGO_PKG_VERSION"),
        function: f.label.clone(),
        config: render(cfg),
        tolerances: Tolerances {
            identity: tol_id,
            eigen: tol_eig,
        },
        status,
        result,
        tables,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `report.json` and one CSV per non-empty table; returns the paths written.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);
    for table in report.tables.iter().filter(|t| !t.rows.is_empty()) {
        let path = dir.join(format!("{}.csv", table.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn galapon_compare_is_exact() {
        let cfg = parse_config("family=powerlaw a=1 lambda=2 b=1\ndim=64").unwrap();
        let r = run(Command::GalaponCompare, &cfg, None).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.result["max_abs_diff"], 0.0);
    }

    #[test]
    fn missing_key_is_an_error() {
        let cfg = parse_config("family=sqrtshift").unwrap();
        assert!(matches!(
            run(Command::NormScan, &cfg, None),
            Err(RunError::Missing { key: "dims", .. })
        ));
        assert!(run(Command::GalaponCompare, &parse_config("dim=4").unwrap(), None).is_err());
    }

    #[test]
    fn empty_tables_write_no_csv() {
        let dir = tempfile::tempdir().unwrap();
        let report = RunReport {
            command: Command::NormScan,
            version: "0",
            function: String::new(),
            config: String::new(),
            tolerances: Tolerances { identity: 1.0, eigen: 1.0 },
            status: Status::Pass,
            result: json!({ "dims": [], "values": [] }),
            tables: vec![Table { name: "norms", header: vec!["dim", "value"], rows: vec![] }],
        };
        let paths = emit_report(&report, dir.path()).unwrap();
        assert_eq!(paths, vec![dir.path().join("report.json")]);
    }

    #[test]
    fn status_combination() {
        assert_eq!(Status::Pass.and(Status::Inconclusive), Status::Inconclusive);
        assert_eq!(Status::Inconclusive.and(Status::Fail), Status::Fail);
        assert_eq!(Status::Fail.exit_code(), 1);
        assert_eq!(Status::Inconclusive.exit_code(), 0);
    }
}
