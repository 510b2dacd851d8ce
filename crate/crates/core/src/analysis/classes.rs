//! Witness-based membership checks for the relative-bound classes `M(beta)` and `M_s(beta)`.

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::numeric::{compensated_sum, power_tail_bound, CompensatedSum};
use crate::spectrum::{check_class_k, check_class_k_minus, SpectralFunction, TriVerdict};

/// Positive sequence `h(k)`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HSequence {
    /// `c * k^(-exponent)`.
    PowerDecay { c: f64, exponent: f64 },
    /// `values[k - 1]`, zero past the end.
    Tabulated { values: Vec<f64> },
}

impl HSequence {
    pub fn at(&self, k: u64) -> f64 {
        match self {
            HSequence::PowerDecay { c, exponent } => c * (k as f64).powf(-exponent),
            HSequence::Tabulated { values } => values.get(k as usize - 1).copied().unwrap_or(0.0),
        }
    }

    /// Upper bound on `sum_k h(k)`.
    pub fn l1_upper(&self, k_max: u64) -> f64 {
        match self {
            HSequence::PowerDecay { c, exponent } => {
                crate::numeric::power_series_upper(*c, *exponent, k_max)
            }
            HSequence::Tabulated { values } => compensated_sum(values.iter().copied()),
        }
    }

    /// Upper bound on `sum_k h(k)^2`.
    pub fn l2_sq_upper(&self, k_max: u64) -> f64 {
        match self {
            HSequence::PowerDecay { c, exponent } => {
                crate::numeric::power_series_upper(c * c, 2.0 * exponent, k_max)
            }
            HSequence::Tabulated { values } => compensated_sum(values.iter().map(|v| v * v)),
        }
    }

    fn covers(&self, k_max: u64) -> bool {
        match self {
            HSequence::PowerDecay { .. } => true,
            HSequence::Tabulated { values } => values.len() as u64 >= k_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWitness {
    pub g: SpectralFunction,
    pub h: HSequence,
    pub alpha: f64,
    pub delta: f64,
    pub c_estimate: Option<f64>,
}

impl ClassWitness {
    pub fn new(g: SpectralFunction, h: HSequence, alpha: f64, delta: f64) -> Result<Self> {
        if let HSequence::PowerDecay { c, .. } = h {
            if !(c > 0.0) {
                return Err(AnalysisError::Invalid(format!("h scale must be positive, got {c}")));
            }
        }
        if let HSequence::Tabulated { values } = &h {
            if values.iter().any(|v| !(*v > 0.0)) {
                return Err(AnalysisError::Invalid("tabulated h must be positive".into()));
            }
        }
        Ok(Self {
            g,
            h,
            alpha,
            delta,
            c_estimate: None,
        })
    }

    /// Witness for `f = x^lambda + 1`: `g = x^alpha + 1` and
    /// `h(k) = sqrt(2)/lambda * k^(-(2 + delta)/2)` with
    /// `delta = min((2 beta + 4) lambda - 2 - alpha, 4 lambda - 2)`.
    ///
    /// The mean value bound `Delta_k(f^2, n) >= lambda k (n + k)^(2 lambda - 1)` and
    /// `g(n) / f(n)^(2 beta) <= 2 n^(alpha - 2 beta lambda)` give the first exponent;
    /// the second takes over when `alpha < 2 beta lambda`.
    pub fn power_law(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(lambda > 0.0) || !alpha.is_finite() || !(beta >= 0.0) {
            return Err(AnalysisError::Invalid(format!(
                "bad witness parameters lambda={lambda} alpha={alpha} beta={beta}"
            )));
        }
        let delta = ((2.0 * beta + 4.0) * lambda - 2.0 - alpha).min(4.0 * lambda - 2.0);
        Self::with_delta(lambda, alpha, delta)
    }

    /// Same `g` and `h` shape as [`ClassWitness::power_law`] with an explicit `delta`.
    pub fn with_delta(lambda: f64, alpha: f64, delta: f64) -> Result<Self> {
        let g = SpectralFunction::power_law(1.0, alpha, 1.0)
            .map_err(AnalysisError::from)?
            .with_label(format!("x^{alpha}+1"));
        let h = HSequence::PowerDecay {
            c: std::f64::consts::SQRT_2 / lambda,
            exponent: (2.0 + delta) / 2.0,
        };
        Self::new(g, h, alpha, delta)
    }

    pub fn with_c_estimate(mut self, c: f64) -> Self {
        self.c_estimate = Some(c);
        self
    }
}

/// A condition of the membership definition that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum Violation {
    /// `f` is not strictly increasing and positive, or `1/f` is not square-summable.
    NotInKMinus,
    /// `sum f^2 / g` diverges.
    F2OverGNotSummable,
    /// The witness `h` is not summable.
    HNotL1,
    /// `g(n) / (f(n)^beta Delta_k(f^2, n))^2 > h(k)^2` at this grid point.
    Ac1Violated { n: u64, k: u64, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub verdict: TriVerdict,
    pub violations: Vec<Violation>,
    /// Largest `LHS / h(k)^2` over the grid.
    pub worst_margin: f64,
    pub worst_at: (u64, u64),
    pub f2_over_g_partial: f64,
    /// Closed-form bound on `sum_{n > n_max} f(n)^2 / g(n)`.
    pub f2_over_g_tail: Option<f64>,
    pub h_l1_upper: f64,
    pub h_l2_sq_upper: f64,
}

impl MembershipReport {
    /// Upper bound on `sum f^2 / g` when the tail is known.
    pub fn f2_over_g_upper(&self) -> Option<f64> {
        self.f2_over_g_tail.map(|t| self.f2_over_g_partial + t)
    }
}

/// Bound on `sum_{n > start} f(n)^2 / g(n)` from power majorants, when available.
fn f2_over_g_tail(f: &SpectralFunction, g: &SpectralFunction, start: u64) -> Option<f64> {
    let (cf, pf) = f.power_majorant(start + 1)?;
    // g(n) >= a n^lambda for power laws.
    let (ag, lg, _) = g.power_law_params()?;
    Some(power_tail_bound(cf * cf / ag, lg - 2.0 * pf, start))
}

/// Checks the witness inequalities for `f` in `M(beta)` on `[0, n_max] x [1, k_max]`.
pub fn check_m_beta(
    f: &SpectralFunction,
    witness: &ClassWitness,
    beta: f64,
    n_max: u64,
    k_max: u64,
) -> Result<MembershipReport> {
    if k_max == 0 {
        return Err(AnalysisError::Invalid("k_max must be at least 1".into()));
    }
    if !witness.h.covers(k_max) {
        return Err(AnalysisError::Invalid(format!("tabulated h shorter than k_max={k_max}")));
    }
    let mut violations = Vec::new();
    let class_grid = n_max.max(1);
    let k_minus = check_class_k(f, class_grid)?.passed()
        && check_class_k_minus(f, class_grid)?.verdict == TriVerdict::Pass;
    if !k_minus {
        violations.push(Violation::NotInKMinus);
    }

    let g = &witness.g;
    let partial: f64 = (0..=n_max)
        .map(|n| -> Result<f64> {
            let v = f.eval(n)?;
            Ok(v * v / g.eval(n)?)
        })
        .collect::<Result<CompensatedSum>>()?
        .value();
    let tail = f2_over_g_tail(f, g, n_max);
    if tail == Some(f64::INFINITY) {
        violations.push(Violation::F2OverGNotSummable);
    }

    let h_l1 = witness.h.l1_upper(k_max);
    if !h_l1.is_finite() {
        violations.push(Violation::HNotL1);
    }

    let values = f.values((n_max + k_max + 1) as usize)?;
    let mut worst = (0.0f64, (0, 1));
    for n in 0..=n_max {
        let fn_ = values[n as usize];
        let weight = g.eval(n)? / fn_.powf(2.0 * beta);
        for k in 1..=k_max {
            let d = f.delta(k, n)? * (values[(n + k) as usize] + fn_);
            let hk = witness.h.at(k);
            let ratio = weight / (d * d) / (hk * hk);
            if ratio > worst.0 {
                worst = (ratio, (n, k));
            }
        }
    }
    // Both sides are rounded evaluations of closed forms.
    if worst.0 > 1.0 + 1e-12 {
        violations.push(Violation::Ac1Violated {
            n: worst.1 .0,
            k: worst.1 .1,
            ratio: worst.0,
        });
    }

    let verdict = if !violations.is_empty() {
        TriVerdict::Fail
    } else if tail.is_none() {
        TriVerdict::Inconclusive
    } else {
        TriVerdict::Pass
    };
    Ok(MembershipReport {
        verdict,
        violations,
        worst_margin: worst.0,
        worst_at: worst.1,
        f2_over_g_partial: partial,
        f2_over_g_tail: tail,
        h_l1_upper: h_l1,
        h_l2_sq_upper: witness.h.l2_sq_upper(k_max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsReport {
    pub verdict: TriVerdict,
    /// Observed `max S(n)` times the safety factor.
    pub c_estimate: f64,
    pub max_value: f64,
    pub argmax: u64,
    /// `(n, S(n))` at powers of two and at `n_max`.
    pub series: Vec<(u64, f64)>,
}

pub const MS_SAFETY: f64 = 1.1;

/// `S(n) = sum_{k=1}^n g(n) / (f(n-k)^beta (f(n)^2 - f(n-k)^2))^2`.
fn ms_term_sum(f: &SpectralFunction, g: &SpectralFunction, beta: f64, values: &[f64], n: u64) -> Result<f64> {
    let gn = g.eval(n)?;
    let fsq = f.squared();
    let mut acc = CompensatedSum::new();
    for k in 1..=n {
        let j = n - k;
        let d = fsq.delta(k, j)?;
        let denom = values[j as usize].powf(beta) * d;
        acc.add(gn / (denom * denom));
    }
    Ok(acc.value())
}

/// Evaluates the `M_s(beta)` supremum for `n <= n_max`.
///
/// Passes when the running maximum is attained before the last octave
/// `(n_max/2, n_max]` and `S` does not grow across that octave; fails when `S`
/// more than doubles over the last three octaves.
pub fn check_ms_beta(f: &SpectralFunction, witness: &ClassWitness, beta: f64, n_max: u64) -> Result<MsReport> {
    if n_max < 16 {
        return Err(AnalysisError::Invalid("n_max must be at least 16 for the trend test".into()));
    }
    let values = f.values(n_max as usize + 1)?;
    let mut s = Vec::with_capacity(n_max as usize + 1);
    s.push(0.0);
    for n in 1..=n_max {
        s.push(ms_term_sum(f, &witness.g, beta, &values, n)?);
    }
    let (argmax, max_value) = s
        .iter()
        .enumerate()
        .fold((0u64, 0.0f64), |acc, (n, v)| if *v > acc.1 { (n as u64, *v) } else { acc });
    let mut series: Vec<(u64, f64)> = std::iter::successors(Some(1u64), |n| n.checked_mul(2))
        .take_while(|n| *n <= n_max)
        .map(|n| (n, s[n as usize]))
        .collect();
    if series.last().map(|p| p.0) != Some(n_max) {
        series.push((n_max, s[n_max as usize]));
    }
    let half = n_max / 2;
    let eighth = n_max / 8;
    let last = s[n_max as usize];
    let verdict = if argmax <= half && last <= s[half as usize] {
        TriVerdict::Pass
    } else if last >= 2.0 * s[eighth as usize] {
        TriVerdict::Fail
    } else {
        TriVerdict::Inconclusive
    };
    Ok(MsReport {
        verdict,
        c_estimate: MS_SAFETY * max_value,
        max_value,
        argmax,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f08() -> SpectralFunction {
        SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap()
    }

    #[test]
    fn power_witness_delta() {
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        assert!((w.delta - 0.1).abs() < 1e-12);
        let w = ClassWitness::power_law(0.6, 2.3, 2.0).unwrap();
        assert!((w.delta - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ac1_at_origin() {
        // g(0) / (f(0) Delta_1(f^2, 0))^2 = 1 / (1 * (4 - 1))^2.
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        let r = check_m_beta(&f08(), &w, 1.0, 0, 1).unwrap();
        let lhs = r.worst_margin * w.h.at(1).powi(2);
        assert!((lhs - 1.0 / 9.0).abs() < 1e-15);
        assert!(lhs <= 2.0 / 0.64);
    }

    #[test]
    fn example_witness_passes() {
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        let r = check_m_beta(&f08(), &w, 1.0, 300, 300).unwrap();
        assert_eq!(r.verdict, TriVerdict::Pass, "{r:?}");
        assert!(r.worst_margin <= 1.0);
        assert!(r.f2_over_g_upper().unwrap().is_finite());
    }

    #[test]
    fn steep_g_names_violations() {
        let w = ClassWitness::power_law(0.8, 4.0, 1.0).unwrap();
        let r = check_m_beta(&f08(), &w, 1.0, 300, 300).unwrap();
        assert_eq!(r.verdict, TriVerdict::Fail);
        assert!(r.violations.contains(&Violation::HNotL1));
        assert!(r.violations.iter().any(|v| matches!(v, Violation::Ac1Violated { .. })));
        assert!(!r.violations.contains(&Violation::F2OverGNotSummable));
    }

    #[test]
    fn non_k_minus_is_reported() {
        let f = SpectralFunction::sqrt_shift();
        let w = ClassWitness::power_law(0.5, 2.5, 1.0).unwrap();
        let r = check_m_beta(&f, &w, 1.0, 50, 50).unwrap();
        assert!(r.violations.contains(&Violation::NotInKMinus));
    }

    #[test]
    fn ms_single_term() {
        let f = f08();
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        let values = f.values(2).unwrap();
        let s1 = ms_term_sum(&f, &w.g, 1.0, &values, 1).unwrap();
        let f0 = 1.0f64;
        let f1 = 2.0f64;
        let expected = 2.0 / (f0 * (f1 * f1 - f0 * f0)).powi(2);
        assert!((s1 - expected).abs() < 1e-15);
    }

    #[test]
    fn ms_example_passes() {
        let w = ClassWitness::power_law(0.8, 2.7, 1.0).unwrap();
        let r = check_ms_beta(&f08(), &w, 1.0, 512).unwrap();
        assert_eq!(r.verdict, TriVerdict::Pass, "{r:?}");
        assert!(r.c_estimate.is_finite() && r.c_estimate > r.max_value);
    }
}
