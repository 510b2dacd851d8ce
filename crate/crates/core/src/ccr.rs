//! Test vectors from the CCR domains and commutation residuals `||[H, T] psi + i psi||`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CompensatedSum;
use crate::operators::{
    build_delta_inv, build_diag, build_shift, commutator, OperatorError, OperatorKind,
    OperatorMatrix, C64,
};
use crate::spectrum::{pow_exact, SpectralFunction, SpectrumError};

#[derive(Debug, Error)]
pub enum CcrError {
    #[error("H must be diagonal for an exact truncated commutator (got {0})")]
    NonDiagonalH(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("seed {seed} leaves no room for the shifts in dimension {dim}")]
    SeedTooClose { seed: usize, dim: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

pub type Result<T> = std::result::Result<T, CcrError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainTag {
    /// `span{xi_n - xi_m} = (1 - L*) l2_fin`.
    FinDiff,
    /// `(1 - L*) delta_1(f,N)^{-1} (1 - L*) l2_fin`.
    Extended,
    /// Arbitrary finite support.
    Raw,
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainTag::FinDiff => "FinDiff",
            DomainTag::Extended => "Extended",
            DomainTag::Raw => "Raw",
        })
    }
}

/// Finitely supported coefficient vector over `xi_0, ..., xi_{M-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainVector {
    coeffs: Vec<C64>,
    support_max: usize,
    tag: DomainTag,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn last_nonzero(coeffs: &[C64]) -> usize {
    coeffs.iter().rposition(|z| *z != zero()).unwrap_or(0)
}

impl DomainVector {
    pub fn raw(coeffs: Vec<C64>) -> Self {
        let support_max = last_nonzero(&coeffs);
        Self {
            coeffs,
            support_max,
            tag: DomainTag::Raw,
        }
    }

    /// `xi_n` in dimension `dim`.
    pub fn basis(dim: usize, n: usize) -> Result<Self> {
        if n >= dim {
            return Err(CcrError::Invalid(format!("index {n} outside dimension {dim}")));
        }
        let mut coeffs = vec![zero(); dim];
        coeffs[n] = C64::new(1.0, 0.0);
        Ok(Self::raw(coeffs))
    }

    /// `(1 - L*) phi`; `phi` must vanish at index `dim - 1` so the shift stays in range.
    pub fn fin_diff_from(phi: &[C64]) -> Result<Self> {
        let dim = phi.len();
        if dim < 2 || phi[dim - 1] != zero() {
            return Err(CcrError::SeedTooClose {
                seed: dim.saturating_sub(1),
                dim,
            });
        }
        let coeffs = one_minus_shift(phi);
        let support_max = last_nonzero(&coeffs);
        Ok(Self {
            coeffs,
            support_max,
            tag: DomainTag::FinDiff,
        })
    }

    /// `xi_n - xi_m`.
    pub fn pair_difference(dim: usize, n: usize, m: usize) -> Result<Self> {
        if n >= dim || m >= dim || n == m {
            return Err(CcrError::Invalid(format!(
                "pair ({n}, {m}) invalid in dimension {dim}"
            )));
        }
        let mut coeffs = vec![zero(); dim];
        coeffs[n] = C64::new(1.0, 0.0);
        coeffs[m] = C64::new(-1.0, 0.0);
        let support_max = n.max(m);
        Ok(Self {
            coeffs,
            support_max,
            tag: DomainTag::FinDiff,
        })
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn support_max(&self) -> usize {
        self.support_max
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn coefficient_sum(&self) -> C64 {
        self.coeffs.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(1 - L*) v` with `(L* v)_j = v_{j-1}`; assumes the last entry of `v` is zero.
fn one_minus_shift(v: &[C64]) -> Vec<C64> {
    (0..v.len())
        .map(|j| if j == 0 { v[0] } else { v[j] - v[j - 1] })
        .collect()
}

/// Vectors of the given CCR domain, one per seed index.
///
/// `FinDiff`: `xi_n - xi_{n+1}`. `Extended`: `(1 - L*) diag(1/delta_1) (xi_n - xi_{n+1})`.
/// `Raw`: `xi_n`.
pub fn gen_ccr_domain(
    tag: DomainTag,
    f: &SpectralFunction,
    dim: usize,
    seeds: &[usize],
) -> Result<Vec<DomainVector>> {
    seeds
        .iter()
        .map(|&seed| {
            if seed + 2 >= dim {
                return Err(CcrError::SeedTooClose { seed, dim });
            }
            match tag {
                DomainTag::Raw => DomainVector::basis(dim, seed),
                DomainTag::FinDiff => DomainVector::pair_difference(dim, seed, seed + 1),
                DomainTag::Extended => {
                    let d0 = f.delta(1, seed as u64)?;
                    let d1 = f.delta(1, seed as u64 + 1)?;
                    let mut inner = vec![zero(); dim];
                    inner[seed] = C64::new(1.0 / d0, 0.0);
                    inner[seed + 1] = C64::new(-1.0 / d1, 0.0);
                    let coeffs = one_minus_shift(&inner);
                    Ok(DomainVector {
                        support_max: seed + 2,
                        coeffs,
                        tag: DomainTag::Extended,
                    })
                }
            }
        })
        .collect()
}

/// `||(H T - T H) psi + i psi||_2` with diagonal `H`.
///
/// The commutator is formed entrywise as `(h_m - h_n) t_mn`, so for sum-zero `psi`
/// and a Cauchy-type `T` the result is rounding-level.
pub fn ccr_residual(h: &OperatorMatrix, t: &OperatorMatrix, psi: &DomainVector) -> Result<f64> {
    if !h.is_diagonal() {
        return Err(CcrError::NonDiagonalH(h.label()));
    }
    if h.dim() != t.dim() {
        return Err(CcrError::DimensionMismatch(h.dim(), t.dim()));
    }
    if psi.dim() != h.dim() {
        return Err(CcrError::DimensionMismatch(h.dim(), psi.dim()));
    }
    let k = commutator(h, t)?;
    residual_with(&k, psi)
}

fn residual_with(k: &OperatorMatrix, psi: &DomainVector) -> Result<f64> {
    let mut out = k.apply(psi.coeffs());
    for (o, p) in out.iter_mut().zip(psi.coeffs()) {
        *o += C64::new(0.0, 1.0) * p;
    }
    Ok(norm(&out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrRecord {
    pub tag: DomainTag,
    pub support_max: usize,
    pub residual: f64,
    /// `residual <= tol * ||psi||`.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrReport {
    pub dim: usize,
    #[serde(rename = "H")]
    pub h: String,
    #[serde(rename = "T")]
    pub t: String,
    pub tol: f64,
    pub vectors: Vec<CcrRecord>,
}

impl CcrReport {
    /// Every in-domain (non-Raw) vector met the tolerance.
    pub fn domain_exact(&self) -> bool {
        self.vectors
            .iter()
            .filter(|r| r.tag != DomainTag::Raw)
            .all(|r| r.exact)
    }
}

/// Residuals for a batch of vectors; the commutator is formed once.
pub fn ccr_report(
    h: &OperatorMatrix,
    t: &OperatorMatrix,
    vectors: &[DomainVector],
    tol: f64,
) -> Result<CcrReport> {
    if !h.is_diagonal() {
        return Err(CcrError::NonDiagonalH(h.label()));
    }
    if h.dim() != t.dim() {
        return Err(CcrError::DimensionMismatch(h.dim(), t.dim()));
    }
    let k = commutator(h, t)?;
    let records = vectors
        .iter()
        .map(|psi| {
            if psi.dim() != h.dim() {
                return Err(CcrError::DimensionMismatch(h.dim(), psi.dim()));
            }
            let residual = residual_with(&k, psi)?;
            Ok(CcrRecord {
                tag: psi.tag(),
                support_max: psi.support_max(),
                residual,
                exact: residual <= tol * psi.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CcrReport {
        dim: h.dim(),
        h: h.label(),
        t: t.label(),
        tol,
        vectors: records,
    })
}

/// Which generator the partial sums `T_{base,m}` use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceBase {
    F,
    FSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seed: usize,
    pub cuts: Vec<usize>,
    /// `s(m) = ||f(N)^p T_{base,m} xi_n||` per cut.
    pub values: Vec<f64>,
    /// `s(m_{j+1})^2 - s(m_j)^2`, the squared Cauchy increments.
    pub increments: Vec<f64>,
    /// Tail bound on `sum_{k > m_j}` of the new terms, per cut; `+inf` when
    /// no finite bound applies.
    pub tail_bounds: Vec<f64>,
    pub verdict: ConvergenceVerdict,
}

/// Growth factor of `s` between the first and last cut that signals divergence.
pub const DIVERGENCE_GROWTH: f64 = 10.0;
/// Minimum ratio of successive log-normalized increments for a harmonic-like trend.
pub const HARMONIC_TREND_RATIO: f64 = 0.9;

/// Partial sums `s(m) = ||f(N)^p T_{base,m} xi_n||` over increasing cuts and a
/// convergence verdict against the Cauchy tail bound
/// `(1 - f(n)/f(n+1))^{-2} sum_{k > m} 1/f(n+k)^2`.
///
/// The tail bound applies to `(p = 0, base = f)` and `(p = 1, base = f^2)`.
pub fn domain_convergence(
    f: &SpectralFunction,
    power: f64,
    base: ConvergenceBase,
    seed: usize,
    cuts: &[usize],
) -> Result<ConvergenceReport> {
    if cuts.is_empty() || cuts.windows(2).any(|w| w[0] >= w[1]) || cuts[0] == 0 {
        return Err(CcrError::Invalid("cuts must be positive and strictly increasing".into()));
    }
    let gen = match base {
        ConvergenceBase::F => f.clone(),
        ConvergenceBase::FSquared => f.squared(),
    };
    let n = seed as u64;
    let term = |j: u64, gap: f64| -> Result<f64> {
        let weight = if power == 0.0 {
            1.0
        } else {
            pow_exact(f.eval(j)?, 2.0 * power)
        };
        Ok(weight / (gap * gap))
    };

    let mut acc = CompensatedSum::new();
    let mut values = Vec::with_capacity(cuts.len());
    let mut next_cut = 0;
    let max_cut = *cuts.last().unwrap();
    for k in 1..=max_cut as u64 {
        acc.add(term(n + k, gen.delta(k, n)?)?);
        if k <= n {
            acc.add(term(n - k, gen.delta(k, n - k)?)?);
        }
        if k as usize == cuts[next_cut] {
            values.push(acc.value().sqrt());
            next_cut += 1;
        }
    }
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] * w[1] - w[0] * w[0]).collect();

    let bound_applies = matches!(
        (power, base),
        (p, ConvergenceBase::F) if p == 0.0
    ) || matches!((power, base), (p, ConvergenceBase::FSquared) if p == 1.0);
    let prefactor = {
        let ratio = f.eval(n)? / f.eval(n + 1)?;
        (1.0 - ratio).powi(-2)
    };
    let tail_bounds = cuts
        .iter()
        .map(|&m| {
            if !bound_applies {
                return Ok(f64::INFINITY);
            }
            Ok(match f.inverse_square_tail(n + m as u64)? {
                Some(t) => prefactor * t,
                None => f64::INFINITY,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // The Cauchy estimate holds for cuts m >= n.
    let certified = tail_bounds.iter().all(|b| b.is_finite())
        && cuts
            .windows(2)
            .zip(&increments)
            .zip(&tail_bounds)
            .filter(|((w, _), _)| w[0] >= seed)
            .all(|((_, inc), bound)| *inc <= bound * (1.0 + 1e-12));

    let verdict = if certified {
        ConvergenceVerdict::Convergent
    } else if grows_divergently(cuts, &values, &increments) {
        ConvergenceVerdict::Divergent
    } else {
        ConvergenceVerdict::Inconclusive
    };
    Ok(ConvergenceReport {
        seed,
        cuts: cuts.to_vec(),
        values,
        increments,
        tail_bounds,
        verdict,
    })
}

/// Either `s` grew by [`DIVERGENCE_GROWTH`], or the squared increments per unit of
/// `log m` stopped decaying over the last three steps (terms no smaller than `c/k`).
fn grows_divergently(cuts: &[usize], values: &[f64], increments: &[f64]) -> bool {
    let (first, last) = (values[0], values[values.len() - 1]);
    if first > 0.0 && last > DIVERGENCE_GROWTH * first {
        return true;
    }
    if increments.len() < 4 {
        return false;
    }
    let normalized: Vec<f64> = cuts
        .windows(2)
        .zip(increments)
        .map(|(w, inc)| inc / (w[1] as f64 / w[0] as f64).ln())
        .collect();
    normalized
        .windows(2)
        .rev()
        .take(3)
        .all(|w| w[0] > 0.0 && w[1] >= HARMONIC_TREND_RATIO * w[0])
}

/// Deviation between the two sides of
/// `f(N)(1 - L*) delta_1^{-1} (1 - L*) = (1 - L*)(f(N) delta_1^{-1} (1 - L*) - L*)`,
/// both assembled from truncated factors. Columns `0..=M-3` only: later columns
/// are touched by the truncated shift.
pub fn ninv_identity_residual(f: &SpectralFunction, dim: usize) -> Result<f64> {
    if dim < 3 {
        return Err(CcrError::Invalid(format!("dimension {dim} below 3")));
    }
    let identity = OperatorMatrix::from_diagonal(vec![1.0; dim], OperatorKind::DiagPower { p: 0.0 }, "");
    let shift = build_shift(dim, 1, true)?;
    let one_minus = identity.sub(&shift)?;
    let d = build_diag(f, dim, 1.0)?;
    let dinv = build_delta_inv(f, dim, 1)?;

    let lhs = d.matmul(&one_minus)?.matmul(&dinv)?.matmul(&one_minus)?;
    let inner = d.matmul(&dinv)?.matmul(&one_minus)?.sub(&shift)?;
    let rhs = one_minus.matmul(&inner)?;

    let mut worst = 0.0f64;
    for c in 0..dim - 2 {
        let col: f64 = (0..dim)
            .map(|r| (lhs.get(r, c) - rhs.get(r, c)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(col);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_symmetrized, build_tf};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pl(lambda: f64) -> SpectralFunction {
        SpectralFunction::power_law(1.0, lambda, 1.0).unwrap()
    }

    fn real(v: &DomainVector) -> Vec<f64> {
        v.coeffs().iter().map(|z| z.re).collect()
    }

    #[test]
    fn gen_examples() {
        let f = pl(1.0);
        let v = gen_ccr_domain(DomainTag::FinDiff, &f, 4, &[0]).unwrap();
        assert_eq!(real(&v[0]), vec![1.0, -1.0, 0.0, 0.0]);
        let v = gen_ccr_domain(DomainTag::Extended, &f, 4, &[0]).unwrap();
        assert_eq!(real(&v[0]), vec![1.0, -2.0, 1.0, 0.0]);
        assert_eq!(v[0].support_max(), 2);
        let v = gen_ccr_domain(DomainTag::FinDiff, &f, 8, &[0, 1]).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| x.coefficient_sum() == c(0.0, 0.0)));
        assert!(matches!(
            gen_ccr_domain(DomainTag::FinDiff, &f, 4, &[2]),
            Err(CcrError::SeedTooClose { seed: 2, dim: 4 })
        ));
    }

    #[test]
    fn extended_vectors_sum_to_zero() {
        for f in [pl(0.8), SpectralFunction::sqrt_shift(), pl(2.0)] {
            let seeds: Vec<usize> = (0..20).collect();
            for v in gen_ccr_domain(DomainTag::Extended, &f, 32, &seeds).unwrap() {
                let scale = v.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(v.coefficient_sum().norm() <= 4.0 * f64::EPSILON * scale);
            }
        }
    }

    #[test]
    fn fin_diff_from_applies_one_minus_shift() {
        let phi = vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
        let v = DomainVector::fin_diff_from(&phi).unwrap();
        assert_eq!(v.coeffs(), &[c(2.0, 0.0), c(-2.0, 1.0), c(0.0, -1.0)]);
        assert_eq!(v.coefficient_sum(), c(0.0, 0.0));
        assert!(DomainVector::fin_diff_from(&[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn residual_examples() {
        let dim = 256;
        for f in [pl(0.8), pl(2.0), SpectralFunction::sqrt_shift()] {
            let h = build_diag(&f, dim, 1.0).unwrap();
            let t = build_tf(&f, dim).unwrap();
            let psi = DomainVector::pair_difference(dim, 0, 1).unwrap();
            assert!(ccr_residual(&h, &t, &psi).unwrap() <= 1e-13);

            let raw = DomainVector::basis(dim, 0).unwrap();
            let r = ccr_residual(&h, &t, &raw).unwrap();
            assert!((r - (dim as f64).sqrt()).abs() <= 1e-9 * r);

            let s = build_symmetrized(&f, dim, 1.5, 2.0).unwrap();
            assert!(ccr_residual(&h, &s, &psi).unwrap() <= 1e-13);
        }
    }

    #[test]
    fn residual_rejects_dense_h() {
        let f = pl(1.0);
        let t = build_tf(&f, 4).unwrap();
        let psi = DomainVector::pair_difference(4, 0, 1).unwrap();
        assert!(matches!(ccr_residual(&t, &t, &psi), Err(CcrError::NonDiagonalH(_))));
        let h = build_diag(&f, 5, 1.0).unwrap();
        assert!(matches!(
            ccr_residual(&h, &t, &psi),
            Err(CcrError::DimensionMismatch(5, 4))
        ));
    }

    #[test]
    fn report_flags_raw_vectors() {
        let f = pl(0.8);
        let h = build_diag(&f, 16, 1.0).unwrap();
        let t = build_tf(&f, 16).unwrap();
        let mut vectors = gen_ccr_domain(DomainTag::FinDiff, &f, 16, &[0, 3]).unwrap();
        vectors.push(DomainVector::basis(16, 0).unwrap());
        let report = ccr_report(&h, &t, &vectors, 1e-12).unwrap();
        assert!(report.domain_exact());
        assert!(report.vectors[0].exact && !report.vectors[2].exact);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["dim"], 16);
        assert_eq!(json["vectors"][0]["tag"], "FinDiff");
        assert!(json["H"].as_str().unwrap().starts_with("f(N)^1"));
    }

    fn dyadic(lo: u32, hi: u32) -> Vec<usize> {
        (lo..=hi).map(|e| 1usize << e).collect()
    }

    #[test]
    fn convergence_examples() {
        let r = domain_convergence(&pl(0.8), 0.0, ConvergenceBase::F, 0, &dyadic(4, 14)).unwrap();
        assert_eq!(r.verdict, ConvergenceVerdict::Convergent);
        let r = domain_convergence(
            &SpectralFunction::sqrt_shift(),
            0.0,
            ConvergenceBase::F,
            0,
            &dyadic(4, 14),
        )
        .unwrap();
        assert_eq!(r.verdict, ConvergenceVerdict::Divergent);
        let r =
            domain_convergence(&pl(0.8), 1.0, ConvergenceBase::FSquared, 0, &dyadic(4, 14)).unwrap();
        assert_eq!(r.verdict, ConvergenceVerdict::Convergent);
    }

    #[test]
    fn convergence_increments_are_new_terms() {
        let f = pl(0.8);
        let seed = 3;
        let cuts = [4, 9, 20];
        let r = domain_convergence(&f, 0.0, ConvergenceBase::F, seed, &cuts).unwrap();
        for (j, w) in cuts.windows(2).enumerate() {
            let new: f64 = (w[0] + 1..=w[1])
                .map(|k| f.delta(k as u64, seed as u64).unwrap().powi(-2))
                .sum();
            assert!((r.increments[j] - new).abs() <= 1e-12 * new);
            assert!(r.increments[j] > 0.0);
        }
        // First cut includes both directions: k <= seed reaches back to xi_{seed-k}.
        let first: f64 = (1..=4u64)
            .map(|k| f.delta(k, 3).unwrap().powi(-2))
            .chain((1..=3u64).map(|k| f.delta(k, 3 - k).unwrap().powi(-2)))
            .sum();
        assert!((r.values[0] - first.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn convergence_rejects_bad_cuts() {
        assert!(domain_convergence(&pl(0.8), 0.0, ConvergenceBase::F, 0, &[4, 4]).is_err());
        assert!(domain_convergence(&pl(0.8), 0.0, ConvergenceBase::F, 0, &[]).is_err());
    }

    #[test]
    fn ninv_examples() {
        assert_eq!(ninv_identity_residual(&pl(1.0), 8).unwrap(), 0.0);
        assert!(ninv_identity_residual(&pl(0.8), 64).unwrap() <= 1e-13);
        assert!(ninv_identity_residual(&SpectralFunction::sqrt_shift(), 64).unwrap() <= 1e-13);
        assert!(ninv_identity_residual(&pl(1.0), 2).is_err());
    }
}
