//! Relative bounds of `f(N) T_{f^2}` and the self-adjointness premises built on them.

use serde::{Deserialize, Serialize};

use super::classes::ClassWitness;
use super::{check_tol, min_eigenvalue, op_norm, AnalysisError, Result};
use crate::numeric::{power_tail_bound, CompensatedSum};
use crate::operators::{build_diag, build_symmetrized, build_tf2, OperatorKind, OperatorMatrix};
use crate::spectrum::SpectralFunction;

/// Terms of `sum f^2 / g` summed exactly before the closed-form tail takes over.
const F2_OVER_G_HEAD: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelBoundReport {
    pub beta: f64,
    pub dims: Vec<usize>,
    /// `||f(N) T_{f^2} f(N)^(-beta)||` per truncation.
    pub numeric: Vec<f64>,
    /// `sqrt((||h||_2^2 + C) sum f^2/g)`.
    pub analytic_cap: f64,
    pub h_l2_sq_upper: f64,
    pub c_estimate: f64,
    pub f2_over_g_upper: f64,
    pub nondecreasing: bool,
    pub within_cap: bool,
}

fn f2_over_g_upper(f: &SpectralFunction, g: &SpectralFunction) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for n in 0..=F2_OVER_G_HEAD {
        let v = f.eval(n)?;
        acc.add(v * v / g.eval(n)?);
    }
    let (cf, pf) = f
        .power_majorant(F2_OVER_G_HEAD + 1)
        .ok_or_else(|| AnalysisError::Invalid(format!("no closed-form growth bound for {f}")))?;
    let (ag, lg, _) = g
        .power_law_params()
        .ok_or_else(|| AnalysisError::Invalid("witness g must be a power law".into()))?;
    Ok(acc.value() + power_tail_bound(cf * cf / ag, lg - 2.0 * pf, F2_OVER_G_HEAD))
}

/// `f(N) T_{f^2} f(N)^(-beta)` on the truncation.
pub fn weighted_tf2(f: &SpectralFunction, dim: usize, beta: f64) -> Result<OperatorMatrix> {
    let d = build_diag(f, dim, 1.0)?;
    let t2 = build_tf2(f, dim)?;
    let mut m = d.matmul(&t2)?;
    if beta != 0.0 {
        m = m.matmul(&build_diag(f, dim, -beta)?)?;
    }
    Ok(m.with_kind(OperatorKind::Derived))
}

/// Numeric relative bound of `f(N) T_{f^2}` with respect to `f(N)^beta`
/// against the witness cap. The witness must carry a constant `C`.
pub fn relative_bound(
    f: &SpectralFunction,
    beta: f64,
    dims: &[usize],
    witness: &ClassWitness,
    tol: f64,
) -> Result<RelBoundReport> {
    check_tol(tol)?;
    let c = witness
        .c_estimate
        .ok_or_else(|| AnalysisError::Invalid("witness has no C estimate".into()))?;
    let numeric = dims
        .iter()
        .map(|&m| op_norm(&weighted_tf2(f, m, beta)?, tol))
        .collect::<Result<Vec<_>>>()?;
    let h2 = witness.h.l2_sq_upper(100_000);
    let sum = f2_over_g_upper(f, &witness.g)?;
    let cap = ((h2 + c) * sum).sqrt();
    let nondecreasing = numeric.windows(2).all(|w| w[1] >= w[0] * (1.0 - tol));
    let within_cap = numeric.iter().all(|v| *v <= cap);
    Ok(RelBoundReport {
        beta,
        dims: dims.to_vec(),
        numeric,
        analytic_cap: cap,
        h_l2_sq_upper: h2,
        c_estimate: c,
        f2_over_g_upper: sum,
        nondecreasing,
        within_cap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KrVerdict {
    PremiseHolds,
    PremiseFails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KrMode {
    /// First-order perturbation: `|gamma|` against twice the relative bound.
    GammaThreshold { relative_bounds: Vec<f64>, threshold: f64 },
    /// Higher-order perturbation: `||S (f(N)^beta_term + c)^(-1)||` along the ladder.
    ResolventDecay {
        dim: usize,
        ladder: Vec<f64>,
        norms: Vec<f64>,
        /// Decrease factor between consecutive ladder points.
        ratios: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrReport {
    pub verdict: KrVerdict,
    pub gamma: f64,
    pub beta_term: f64,
    pub dims: Vec<usize>,
    #[serde(flatten)]
    pub mode: KrMode,
}

pub const KR_LADDER: [f64; 7] = [1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
/// Required decrease of the resolvent-weighted norm per decade of `c`.
pub const KR_MIN_DECAY: f64 = 2.0;

/// Finite-dimensional premise of the Kato-Rellich argument for
/// `f(N) T_{f^2} + T_{f^2} f(N) + gamma f(N)^beta_term`.
///
/// For `beta_term = 1` the premise is `|gamma| > 2 ||f(N) T_{f^2} f(N)^(-1)||` at every
/// tested dim. For larger `beta_term` the symmetric part must be infinitesimally
/// small relative to `f(N)^beta_term`, proxied by the resolvent-weighted norm
/// shrinking at least [`KR_MIN_DECAY`]-fold per decade of `c` at the largest dim.
pub fn katorellich_margin(
    f: &SpectralFunction,
    gamma: f64,
    beta_term: f64,
    dims: &[usize],
    tol: f64,
) -> Result<KrReport> {
    check_tol(tol)?;
    let Some(&largest) = dims.iter().max() else {
        return Err(AnalysisError::Invalid("no dims given".into()));
    };
    if !(beta_term >= 1.0) {
        return Err(AnalysisError::Invalid(format!("beta_term must be at least 1, got {beta_term}")));
    }
    let (verdict, mode) = if beta_term == 1.0 {
        let relative_bounds = dims
            .iter()
            .map(|&m| op_norm(&weighted_tf2(f, m, 1.0)?, tol))
            .collect::<Result<Vec<_>>>()?;
        let threshold = 2.0 * relative_bounds.iter().copied().fold(0.0, f64::max);
        let verdict = if gamma.abs() > threshold {
            KrVerdict::PremiseHolds
        } else {
            KrVerdict::PremiseFails
        };
        (verdict, KrMode::GammaThreshold { relative_bounds, threshold })
    } else {
        let s = build_symmetrized(f, largest, 0.0, beta_term)?;
        let powers = f
            .values(largest)?
            .into_iter()
            .map(|v| v.powf(beta_term))
            .collect::<Vec<_>>();
        let norms = KR_LADDER
            .iter()
            .map(|&c| {
                let resolvent = OperatorMatrix::from_diagonal(
                    powers.iter().map(|p| 1.0 / (p + c)).collect(),
                    OperatorKind::Derived,
                    f.label.clone(),
                );
                op_norm(&s.matmul(&resolvent)?, tol)
            })
            .collect::<Result<Vec<_>>>()?;
        let ratios: Vec<f64> = norms.windows(2).map(|w| w[0] / w[1]).collect();
        let verdict = if gamma == 0.0 || ratios.iter().any(|r| *r < 1.0) {
            KrVerdict::PremiseFails
        } else if ratios.iter().all(|r| *r >= KR_MIN_DECAY) {
            KrVerdict::PremiseHolds
        } else {
            KrVerdict::Inconclusive
        };
        (
            verdict,
            KrMode::ResolventDecay {
                dim: largest,
                ladder: KR_LADDER.to_vec(),
                norms,
                ratios,
            },
        )
    };
    Ok(KrReport {
        verdict,
        gamma,
        beta_term,
        dims: dims.to_vec(),
        mode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub gamma: f64,
    pub dim: usize,
    pub min_eigenvalue: f64,
    pub tf2_norm: f64,
    /// `-||T_{f^2}||^2`.
    pub cap: f64,
    pub cap_ok: bool,
}

/// Smallest eigenvalue of `f(N) T_{f^2} + T_{f^2} f(N) + gamma f(N)^2` against the
/// lower bound `-||T_{f^2}||^2` from completing the square.
pub fn lower_bound_check(
    f: &SpectralFunction,
    gamma: f64,
    dim: usize,
    tol: f64,
    slack: f64,
) -> Result<LowerBoundReport> {
    if !(gamma >= 1.0) {
        return Err(AnalysisError::Invalid(format!("gamma must be at least 1, got {gamma}")));
    }
    let a = build_symmetrized(f, dim, gamma, 2.0)?;
    let min = min_eigenvalue(&a, tol)?;
    let norm = op_norm(&build_tf2(f, dim)?, tol)?;
    let cap = -norm * norm;
    Ok(LowerBoundReport {
        gamma,
        dim,
        min_eigenvalue: min,
        tf2_norm: norm,
        cap,
        cap_ok: min >= cap - slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::check_ms_beta;

    #[test]
    fn beta_zero_is_plain_product() {
        let f = SpectralFunction::power_law(1.0, 2.0, 1.0).unwrap();
        let a = weighted_tf2(&f, 24, 0.0).unwrap();
        let direct = build_diag(&f, 24, 1.0).unwrap().matmul(&build_tf2(&f, 24).unwrap()).unwrap();
        assert_eq!(a.max_abs_diff(&direct).unwrap(), 0.0);
    }

    #[test]
    fn weighted_entries() {
        let f = SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap();
        let a = weighted_tf2(&f, 8, 1.0).unwrap();
        let fv = f.values(8).unwrap();
        let t2 = build_tf2(&f, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expected = t2.get(r, c) * (fv[r] / fv[c]);
                assert!((a.get(r, c) - expected).norm() <= 1e-15 * expected.norm().max(1.0));
            }
        }
    }

    #[test]
    fn relative_bound_under_cap_small() {
        let f = SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap();
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        let ms = check_ms_beta(&f, &w, 1.0, 256).unwrap();
        let w = w.with_c_estimate(ms.c_estimate);
        let r = relative_bound(&f, 1.0, &[32, 64, 128], &w, 1e-10).unwrap();
        assert!(r.nondecreasing && r.within_cap, "{r:?}");
    }

    #[test]
    fn lower_bound_sqrt_shift_small() {
        let f = SpectralFunction::sqrt_shift();
        let r1 = lower_bound_check(&f, 1.0, 64, 1e-10, 1e-8).unwrap();
        let r2 = lower_bound_check(&f, 2.0, 64, 1e-10, 1e-8).unwrap();
        assert!(r1.cap_ok && r2.cap_ok);
        assert!(r1.tf2_norm < std::f64::consts::PI);
        assert!(r2.min_eigenvalue >= r1.min_eigenvalue);
        assert!(lower_bound_check(&f, 0.5, 64, 1e-10, 1e-8).is_err());
    }

    #[test]
    fn diagonal_part_alone() {
        let f = SpectralFunction::sqrt_shift();
        let d = build_diag(&f, 16, 2.0).unwrap();
        assert_eq!(min_eigenvalue(&d, 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn tiny_gamma_fails_first_order_premise() {
        let f = SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap();
        let r = katorellich_margin(&f, 1e-6, 1.0, &[32, 64], 1e-10).unwrap();
        assert_eq!(r.verdict, KrVerdict::PremiseFails);
        let r = katorellich_margin(&f, 1e3, 1.0, &[32, 64], 1e-10).unwrap();
        assert_eq!(r.verdict, KrVerdict::PremiseHolds);
    }
}
