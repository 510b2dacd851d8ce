//! Summation helpers shared by the class checks and bound computations.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<CompensatedSum>().value()
}

/// Upper bound on `sum_{k > start} scale * k^(-exponent)` for `exponent > 1`.
///
/// `x^(-exponent)` is convex, so each term is majorized by its integral over
/// `[k - 1/2, k + 1/2]`; the tail is then bounded by the integral from `start + 1/2`.
/// Returns `+inf` when the series diverges.
pub fn power_tail_bound(scale: f64, exponent: f64, start: u64) -> f64 {
    if exponent <= 1.0 {
        return f64::INFINITY;
    }
    let from = start as f64 + 0.5;
    scale * from.powf(1.0 - exponent) / (exponent - 1.0)
}

/// Partial sum over `k = 1..=k_max` plus the convex tail bound: an upper
/// bound on `sum_{k >= 1} scale * k^(-exponent)`.
pub fn power_series_upper(scale: f64, exponent: f64, k_max: u64) -> f64 {
    let partial = compensated_sum((1..=k_max).map(|k| scale * (k as f64).powf(-exponent)));
    partial + power_tail_bound(scale, exponent, k_max)
}
