//! Boundedness caps for `T_f` and dyadic norm scans.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_tol, op_norm, AnalysisError, Result};
use crate::numeric::{compensated_sum, power_series_upper, power_tail_bound};
use crate::operators::{build_tf, build_tf2};
use crate::spectrum::{Family, Shape, SpectralFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum BoundVerdict {
    /// `2 * sum_k sup_n 1/Delta_k(f, n) <= cap`.
    Finite { cap: f64 },
    /// `sup_n 1/Delta_k(f, n)` is not summable in `k`.
    Diverging,
    /// Only grid partial sums are available.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdTBound {
    pub verdict: BoundVerdict,
    /// `2 * sum_{k <= k_max} sup_{n <= n_max} 1/Delta_k(f, n)` on the grid.
    pub partial: f64,
    pub k_max: u64,
    pub n_max: u64,
}

impl BdTBound {
    pub fn cap(&self) -> Option<f64> {
        match self.verdict {
            BoundVerdict::Finite { cap } => Some(cap),
            _ => None,
        }
    }
}

/// `(c, q)` with `Delta_k(f, n) >= c k^q` for all `n` and `k >= 1`, for the
/// families where this holds with `q > 1`, or `None`.
fn uniform_gap_minorant(f: &SpectralFunction) -> Option<(f64, f64)> {
    match &f.family {
        // Convex: the gap is smallest at n = 0, where it equals a k^lambda.
        Family::PowerLaw { a, lambda, .. } if *lambda > 1.0 => Some((*a, *lambda)),
        Family::Squared(inner) => match inner.as_ref() {
            // (a k^l + b)^2 - b^2 >= a^2 k^(2l), again attained at n = 0.
            Family::PowerLaw { a, lambda, .. } if *lambda >= 1.0 => Some((a * a, 2.0 * lambda)),
            // Mean value theorem: Delta_k(f^2, n) >= a^2 l k (n + k)^(2l - 1) >= a^2 l k^(2l).
            Family::PowerLaw { a, lambda, .. } if *lambda > 0.5 => Some((a * a * lambda, 2.0 * lambda)),
            _ => None,
        },
        _ => None,
    }
}

/// Whether `sup_n 1/Delta_k(f, n)` is known to fail summability in `k`.
fn provably_diverging(f: &SpectralFunction) -> bool {
    match f.shape() {
        // Gaps tend to zero in n, so each supremum is infinite.
        Shape::Concave => true,
        // Gaps proportional to k give the harmonic series.
        Shape::Linear => true,
        Shape::Convex => false,
        Shape::Unknown => matches!(
            &f.family,
            Family::Squared(inner) if matches!(inner.as_ref(), Family::PowerLaw { lambda, .. } if *lambda <= 0.5)
        ),
    }
}

/// Cap on `||T_f||` from the summability of `sup_n 1/Delta_k(f, n)`.
///
/// Convex closed forms take the supremum at `n = 0` and add an integral tail
/// past `k_max`; families whose gaps shrink are reported as diverging; anything
/// else only gets a grid partial sum over `n <= n_max`.
pub fn bd_t_bound(f: &SpectralFunction, k_max: u64, n_max: u64) -> Result<BdTBound> {
    if k_max == 0 {
        return Err(AnalysisError::Invalid("k_max must be at least 1".into()));
    }
    let mut sups = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let mut worst = 0.0f64;
        for n in 0..=n_max {
            worst = worst.max(1.0 / f.delta(k, n)?);
        }
        sups.push(worst);
    }
    let partial = 2.0 * compensated_sum(sups);
    let verdict = if let Some((c, q)) = uniform_gap_minorant(f) {
        if f.shape() == Shape::Convex {
            // Exact supremum at n = 0 for the partial sum, minorant only for the tail.
            let head = (1..=k_max)
                .map(|k| f.delta(k, 0).map(|d| 1.0 / d))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let tail = power_tail_bound(1.0 / c, q, k_max);
            let head = compensated_sum(head);
            BoundVerdict::Finite { cap: 2.0 * (head + tail) }
        } else {
            BoundVerdict::Finite { cap: 2.0 * power_series_upper(1.0 / c, q, k_max) }
        }
    } else if provably_diverging(f) {
        BoundVerdict::Diverging
    } else {
        BoundVerdict::Inconclusive
    };
    Ok(BdTBound {
        verdict,
        partial,
        k_max,
        n_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Tf,
    Tf2,
}

impl std::str::FromStr for Which {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tf" => Ok(Which::Tf),
            "tf2" => Ok(Which::Tf2),
            other => Err(format!("expected tf or tf2, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanVerdict {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub verdict: ScanVerdict,
    pub bound_reference: Option<f64>,
}

impl ScanResult {
    /// `dim,value` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dim", "value"])?;
        for (d, v) in self.dims.iter().zip(&self.values) {
            w.write_record([d.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub tol: f64,
    /// Minimum last/first ratio for a growing verdict.
    pub growth_ratio: f64,
    /// Minimum number of dims for a growing verdict.
    pub min_dims: usize,
    /// Largest relative last increment still counted as a plateau when no cap exists.
    pub plateau: f64,
    pub k_max: u64,
    pub n_max: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            growth_ratio: 2.0,
            min_dims: 5,
            plateau: 0.05,
            k_max: 100_000,
            n_max: 64,
        }
    }
}

fn classify(values: &[f64], cap: Option<f64>, opts: &ScanOptions) -> ScanVerdict {
    if values.is_empty() {
        return ScanVerdict::Inconclusive;
    }
    if let Some(cap) = cap {
        if values.iter().all(|v| *v <= cap * (1.0 + opts.tol)) {
            return ScanVerdict::Bounded;
        }
    }
    let first = values[0];
    let last = values[values.len() - 1];
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    if cap.is_none() && values.len() >= opts.min_dims && increasing && last >= opts.growth_ratio * first {
        return ScanVerdict::Growing;
    }
    if cap.is_none() && values.len() >= 3 && last < opts.growth_ratio * first {
        let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let shrinking = inc.windows(2).all(|w| w[1] <= w[0]);
        if shrinking && inc[inc.len() - 1] <= opts.plateau * last {
            return ScanVerdict::Bounded;
        }
    }
    ScanVerdict::Inconclusive
}

/// Norms of `T_f` or `T_{f^2}` across increasing truncation sizes.
pub fn norm_scan(f: &SpectralFunction, dims: &[usize], which: Which, opts: &ScanOptions) -> Result<ScanResult> {
    check_tol(opts.tol)?;
    if dims.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::Invalid("dims must be strictly increasing".into()));
    }
    let base = match which {
        Which::Tf => f.clone(),
        Which::Tf2 => f.squared(),
    };
    let cap = bd_t_bound(&base, opts.k_max, opts.n_max)?.cap();
    let values = dims
        .iter()
        .map(|&m| {
            let t = match which {
                Which::Tf => build_tf(f, m)?,
                Which::Tf2 => build_tf2(f, m)?,
            };
            op_norm(&t, opts.tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = classify(&values, cap, opts);
    Ok(ScanResult {
        dims: dims.to_vec(),
        values,
        verdict,
        bound_reference: cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeta(s: f64) -> f64 {
        // Euler-Maclaurin with a few Bernoulli corrections.
        let n = 1000.0f64;
        let head: f64 = (1..1000).map(|k| (k as f64).powf(-s)).sum();
        head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
            - s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0)
    }

    #[test]
    fn convex_cap_is_twice_zeta() {
        let f = SpectralFunction::power_law(1.0, 1.5, 1.0).unwrap();
        let cap = bd_t_bound(&f, 100_000, 16).unwrap().cap().unwrap();
        let exact = 2.0 * zeta(1.5);
        assert!((exact - 5.2248).abs() < 1e-4);
        assert!(cap >= exact && cap - exact < 1e-6, "{cap} vs {exact}");

        let f = SpectralFunction::power_law(1.0, 2.0, 1.0).unwrap();
        let cap = bd_t_bound(&f, 10_000, 16).unwrap().cap().unwrap();
        let exact = std::f64::consts::PI.powi(2) / 3.0;
        assert!(cap >= exact && cap - exact < 1e-8);
    }

    #[test]
    fn shrinking_gaps_diverge() {
        let f = SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap();
        assert_eq!(bd_t_bound(&f, 100, 100).unwrap().verdict, BoundVerdict::Diverging);
        let b1 = bd_t_bound(&f, 100, 1000).unwrap().partial;
        let b2 = bd_t_bound(&f, 100, 10_000).unwrap().partial;
        assert!(b2 > b1);
        assert_eq!(
            bd_t_bound(&SpectralFunction::sqrt_shift().squared(), 10, 10).unwrap().verdict,
            BoundVerdict::Diverging
        );
    }

    #[test]
    fn squared_power_cap_majorizes_grid() {
        let f = SpectralFunction::power_law(1.0, 0.6, 1.0).unwrap().squared();
        let b = bd_t_bound(&f, 200, 2000).unwrap();
        assert!(b.partial <= b.cap().unwrap());
    }

    #[test]
    fn classify_rules() {
        let o = ScanOptions::default();
        assert_eq!(classify(&[1.0, 2.0, 3.0], Some(3.5), &o), ScanVerdict::Bounded);
        assert_eq!(classify(&[1.0, 1.3, 1.6, 2.0, 2.5], None, &o), ScanVerdict::Growing);
        assert_eq!(classify(&[1.0, 1.2, 1.5, 1.9, 1.99], None, &o), ScanVerdict::Inconclusive);
        assert_eq!(classify(&[2.0, 2.5, 2.8, 2.9], None, &o), ScanVerdict::Bounded);
        assert_eq!(classify(&[1.0, 5.0], Some(3.0), &o), ScanVerdict::Inconclusive);
    }

    #[test]
    fn csv_layout() {
        let r = ScanResult {
            dims: vec![4, 8],
            values: vec![1.5, 2.0],
            verdict: ScanVerdict::Bounded,
            bound_reference: None,
        };
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "dim,value\n4,1.5e0\n8,2e0\n");
    }
}
