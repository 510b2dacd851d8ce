//! Spectral functions `f: N -> (0, inf)` and the class predicates built on them.
//!
//! A [`SpectralFunction`] generates the diagonal operator `f(N)`; every other
//! operator in the crate is assembled from its values and its gaps
//! `delta_k(f, n) = f(n + k) - f(n)`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, power_tail_bound};

/// Below this ratio `k / n` the power-law gap is evaluated through `expm1`/`log1p`.
const CANCELLATION_RATIO: f64 = 1.0 / (1u64 << 20) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} outside tabulated range 0..{len} and extrapolation is disabled")]
    OutOfRange { index: u64, len: usize },
    #[error("gap order k must be at least 1")]
    ZeroGapOrder,
    #[error("malformed spectral record: {0}")]
    Record(String),
    #[error("cannot read table {path}: {message}")]
    Table { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, SpectrumError>;

/// What a tabulated spectrum does past its last stored value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Extrapolation {
    /// Evaluation beyond the table is an error.
    Error,
    /// Values at `n >= len` follow `a * n^lambda + b`.
    PowerLawTail { a: f64, lambda: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `f(x) = a x^lambda + b`.
    PowerLaw { a: f64, lambda: f64, b: f64 },
    /// `f(x) = sqrt(x + 1)`.
    SqrtShift,
    Tabulated {
        values: Vec<f64>,
        extrapolation: Extrapolation,
    },
    /// Pointwise square of another family, `f^2(x) = f(x)^2`.
    Squared(Box<Family>),
}

/// How `delta_k(f, n)` behaves as `n` grows, when it is known analytically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Gaps nondecreasing in `n`.
    Convex,
    /// Gaps nonincreasing in `n` and tending to zero.
    Concave,
    /// Gaps independent of `n`.
    Linear,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    pub family: Family,
    pub label: String,
}

pub(crate) fn pow_exact(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

impl Family {
    fn eval(&self, n: u64) -> Result<f64> {
        match self {
            Family::PowerLaw { a, lambda, b } => Ok(a * pow_exact(n as f64, *lambda) + b),
            Family::SqrtShift => Ok((n as f64 + 1.0).sqrt()),
            Family::Tabulated {
                values,
                extrapolation,
            } => match values.get(n as usize) {
                Some(v) => Ok(*v),
                None => match extrapolation {
                    Extrapolation::Error => Err(SpectrumError::OutOfRange {
                        index: n,
                        len: values.len(),
                    }),
                    Extrapolation::PowerLawTail { a, lambda, b } => {
                        Ok(a * pow_exact(n as f64, *lambda) + b)
                    }
                },
            },
            Family::Squared(inner) => {
                let v = inner.eval(n)?;
                Ok(v * v)
            }
        }
    }

    fn delta(&self, k: u64, n: u64) -> Result<f64> {
        if k == 0 {
            return Err(SpectrumError::ZeroGapOrder);
        }
        match self {
            Family::PowerLaw { a, lambda, .. } => {
                let ratio = k as f64 / n as f64;
                if n > 0 && ratio < CANCELLATION_RATIO {
                    let base = pow_exact(n as f64, *lambda);
                    Ok(a * base * (lambda * ratio.ln_1p()).exp_m1())
                } else {
                    Ok(self.eval(n + k)? - self.eval(n)?)
                }
            }
            Family::SqrtShift => {
                let hi = (n as f64 + k as f64 + 1.0).sqrt();
                let lo = (n as f64 + 1.0).sqrt();
                Ok(k as f64 / (hi + lo))
            }
            Family::Tabulated { .. } => Ok(self.eval(n + k)? - self.eval(n)?),
            Family::Squared(inner) => {
                let gap = inner.delta(k, n)?;
                Ok(gap * (inner.eval(n + k)? + inner.eval(n)?))
            }
        }
    }

    fn shape(&self) -> Shape {
        match self {
            Family::PowerLaw { lambda, .. } if *lambda > 1.0 => Shape::Convex,
            Family::PowerLaw { lambda, .. } if *lambda < 1.0 => Shape::Concave,
            Family::PowerLaw { .. } => Shape::Linear,
            Family::SqrtShift => Shape::Concave,
            Family::Tabulated { .. } => Shape::Unknown,
            Family::Squared(inner) => match inner.as_ref() {
                // (a x^l + b)^2 with l >= 1 is convex; (sqrt(x+1))^2 = x + 1.
                Family::PowerLaw { lambda, .. } if *lambda >= 1.0 => Shape::Convex,
                Family::SqrtShift => Shape::Linear,
                _ => Shape::Unknown,
            },
        }
    }

    /// `(c, p)` with `f(n) >= c n^p` for every `n >= from`, where `from` is the
    /// returned index. Also the exact growth order for every closed form here.
    fn power_minorant(&self) -> Option<(f64, f64, u64)> {
        match self {
            Family::PowerLaw { a, lambda, .. } => Some((*a, *lambda, 1)),
            Family::SqrtShift => Some((1.0, 0.5, 1)),
            Family::Tabulated {
                values,
                extrapolation: Extrapolation::PowerLawTail { a, lambda, .. },
            } => Some((*a, *lambda, values.len().max(1) as u64)),
            Family::Tabulated { .. } => None,
            Family::Squared(inner) => inner
                .power_minorant()
                .map(|(c, p, from)| (c * c, 2.0 * p, from)),
        }
    }

    /// `(C, p)` with `f(n) <= C n^p` for every `n >= from >= 1`; closed forms only.
    fn power_majorant(&self, from: u64) -> Option<(f64, f64)> {
        let from = from.max(1) as f64;
        match self {
            Family::PowerLaw { a, lambda, b } => Some((a + b * from.powf(-lambda), *lambda)),
            Family::SqrtShift => Some(((1.0 + 1.0 / from).sqrt(), 0.5)),
            Family::Tabulated { .. } => None,
            Family::Squared(inner) => inner
                .power_majorant(from as u64)
                .map(|(c, p)| (c * c, 2.0 * p)),
        }
    }

    fn label(&self) -> String {
        match self {
            Family::PowerLaw { a, lambda, b } => format!("powerlaw(a={a},lambda={lambda},b={b})"),
            Family::SqrtShift => "sqrtshift".to_string(),
            Family::Tabulated { values, .. } => format!("tabulated(len={})", values.len()),
            Family::Squared(inner) => format!("({})^2", inner.label()),
        }
    }
}

impl SpectralFunction {
    pub fn power_law(a: f64, lambda: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(SpectrumError::InvalidParameter(format!("a must be positive, got {a}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(SpectrumError::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(SpectrumError::InvalidParameter(format!(
                "b must be nonnegative, got {b}"
            )));
        }
        Ok(Self::from_family(Family::PowerLaw { a, lambda, b }))
    }

    pub fn sqrt_shift() -> Self {
        Self::from_family(Family::SqrtShift)
    }

    /// A tabulated spectrum. Monotonicity is not enforced here; use
    /// [`check_class_k`] to decide it.
    pub fn tabulated(values: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if values.is_empty() {
            return Err(SpectrumError::InvalidParameter("empty table".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SpectrumError::InvalidParameter(format!(
                "non-finite table value {v} at index {i}"
            )));
        }
        if let Extrapolation::PowerLawTail { a, lambda, b } = extrapolation {
            Self::power_law(a, lambda, b)?;
        }
        Ok(Self::from_family(Family::Tabulated {
            values,
            extrapolation,
        }))
    }

    pub fn from_family(family: Family) -> Self {
        let label = family.label();
        Self { family, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The pointwise square `f^2`, generator of `T_{f^2}`.
    pub fn squared(&self) -> Self {
        Self {
            family: Family::Squared(Box::new(self.family.clone())),
            label: format!("({})^2", self.label),
        }
    }

    pub fn eval(&self, n: u64) -> Result<f64> {
        self.family.eval(n)
    }

    /// `delta_k(f, n) = f(n + k) - f(n)`.
    pub fn delta(&self, k: u64, n: u64) -> Result<f64> {
        self.family.delta(k, n)
    }

    /// Values `f(0), ..., f(len - 1)`.
    pub fn values(&self, len: usize) -> Result<Vec<f64>> {
        (0..len as u64).map(|n| self.eval(n)).collect()
    }

    pub fn shape(&self) -> Shape {
        self.family.shape()
    }

    /// Largest index that can be evaluated, if finite.
    pub fn max_index(&self) -> Option<u64> {
        fn go(family: &Family) -> Option<u64> {
            match family {
                Family::Tabulated {
                    values,
                    extrapolation: Extrapolation::Error,
                } => Some(values.len() as u64 - 1),
                Family::Squared(inner) => go(inner),
                _ => None,
            }
        }
        go(&self.family)
    }

    /// Upper bound on `sum_{j > start} 1/f(j)^2`: `+inf` when the series diverges,
    /// `None` when the growth of `f` is unknown.
    pub fn inverse_square_tail(&self, start: u64) -> Result<Option<f64>> {
        let Some((c, p, from)) = self.family.power_minorant() else {
            return Ok(None);
        };
        // Terms below the minorant's range are summed exactly.
        let tail_start = start.max(from.saturating_sub(1));
        let skipped = (start + 1..=tail_start)
            .map(|n| self.eval(n).map(|v| 1.0 / (v * v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(
            compensated_sum(skipped) + power_tail_bound(1.0 / (c * c), 2.0 * p, tail_start),
        ))
    }

    /// `(C, p)` with `f(n) <= C n^p` for all `n >= from` (and `n >= 1`), when
    /// known in closed form. `C` tightens as `from` grows.
    pub fn power_majorant(&self, from: u64) -> Option<(f64, f64)> {
        self.family.power_majorant(from)
    }

    pub fn power_law_params(&self) -> Option<(f64, f64, f64)> {
        match self.family {
            Family::PowerLaw { a, lambda, b } => Some((a, lambda, b)),
            _ => None,
        }
    }
}

impl fmt::Display for SpectralFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Why a function is not in class K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ClassKFailure {
    NonPositiveAtZero { value: f64 },
    NotIncreasing { at: u64 },
}

impl fmt::Display for ClassKFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassKFailure::NonPositiveAtZero { value } => write!(f, "f(0)={value} is not positive"),
            ClassKFailure::NotIncreasing { at } => write!(f, "not increasing at n={at}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ClassKVerdict {
    Pass,
    Fail(ClassKFailure),
}

impl ClassKVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ClassKVerdict::Pass)
    }
}

/// Class K: `f(0) > 0` and `f(n) < f(n + 1)`, checked on `0..=n_max`.
///
/// Tabulated spectra without a tail are checked over their stored values only.
/// Closed forms are additionally decided from their parameters.
pub fn check_class_k(f: &SpectralFunction, n_max: u64) -> Result<ClassKVerdict> {
    if n_max < 1 {
        return Err(SpectrumError::InvalidParameter("n_max must be at least 1".into()));
    }
    let f0 = f.eval(0)?;
    if f0 <= 0.0 {
        return Ok(ClassKVerdict::Fail(ClassKFailure::NonPositiveAtZero { value: f0 }));
    }
    let last = match f.max_index() {
        Some(max) => n_max.min(max),
        None => n_max,
    };
    for n in 0..last {
        if f.delta(1, n)? <= 0.0 {
            return Ok(ClassKVerdict::Fail(ClassKFailure::NotIncreasing { at: n }));
        }
    }
    // Tail beyond a table: the power law is increasing, so only the seam can fail.
    if let Family::Tabulated {
        values,
        extrapolation: Extrapolation::PowerLawTail { .. },
    } = &f.family
    {
        let seam = values.len() as u64 - 1;
        if f.eval(seam + 1)? <= f.eval(seam)? {
            return Ok(ClassKVerdict::Fail(ClassKFailure::NotIncreasing { at: seam }));
        }
    }
    Ok(ClassKVerdict::Pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMinusReport {
    pub verdict: TriVerdict,
    /// `sum_{n <= n_max} 1/f(n)^2` (over the stored range for tables).
    pub partial_sum: f64,
    /// Upper bound on the remaining tail, `+inf` when it diverges, `None` when unknown.
    pub tail_bound: Option<f64>,
}

/// Class K⁻: `1/f` square-summable.
///
/// Closed forms are decided from the growth order `f(n) ~ c n^p` (pass iff `p > 1/2`);
/// tables without a declared tail are inconclusive.
pub fn check_class_k_minus(f: &SpectralFunction, n_max: u64) -> Result<KMinusReport> {
    let last = match f.max_index() {
        Some(max) => n_max.min(max),
        None => n_max,
    };
    let values = (0..=last)
        .map(|n| f.eval(n).map(|v| 1.0 / (v * v)))
        .collect::<Result<Vec<_>>>()?;
    let partial_sum = compensated_sum(values);

    let Some(tail_bound) = f.inverse_square_tail(last)? else {
        return Ok(KMinusReport {
            verdict: TriVerdict::Inconclusive,
            partial_sum,
            tail_bound: None,
        });
    };
    let verdict = if tail_bound.is_finite() {
        TriVerdict::Pass
    } else {
        TriVerdict::Fail
    };
    Ok(KMinusReport {
        verdict,
        partial_sum,
        tail_bound: Some(tail_bound),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EnmVerdict {
    Pass,
    Fail { n: u64, m: u64, lhs: f64, rhs: f64 },
}

/// Gap-growth condition `E_n - E_m >= C (n^lambda - m^lambda)` on a grid of pairs `n > m`,
/// with `E_n = f(n)`. Comparisons allow a few ulps of the operands' magnitude.
pub fn check_enm(
    f: &SpectralFunction,
    c: f64,
    lambda: f64,
    grid: &[(u64, u64)],
) -> Result<EnmVerdict> {
    if !(c > 0.0) {
        return Err(SpectrumError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if !(lambda > 1.0) {
        return Err(SpectrumError::InvalidParameter(format!(
            "lambda must exceed 1, got {lambda}"
        )));
    }
    for &(n, m) in grid {
        if n <= m {
            return Err(SpectrumError::InvalidParameter(format!(
                "grid pair ({n}, {m}) must satisfy n > m"
            )));
        }
        let (en, em) = (f.eval(n)?, f.eval(m)?);
        let (pn, pm) = (pow_exact(n as f64, lambda), pow_exact(m as f64, lambda));
        let lhs = en - em;
        let rhs = c * (pn - pm);
        let slack = 4.0 * f64::EPSILON * (en.abs() + em.abs() + c * (pn + pm));
        if lhs < rhs - slack {
            return Ok(EnmVerdict::Fail { n, m, lhs, rhs });
        }
    }
    Ok(EnmVerdict::Pass)
}

/// All pairs `(n, m)` with `0 <= m < n <= max`.
pub fn all_pairs(max: u64) -> Vec<(u64, u64)> {
    (1..=max).flat_map(|n| (0..n).map(move |m| (n, m))).collect()
}

/// Mean-value lower bound `lambda k / (n + k)^(1 - lambda)` on `delta_k(f, n)` for
/// `f(x) = x^lambda + b`, `0 < lambda < 1`.
pub fn mvt_lower_bound(f: &SpectralFunction, n: u64, k: u64) -> Result<f64> {
    let Some((a, lambda, _)) = f.power_law_params() else {
        return Err(SpectrumError::InvalidParameter(
            "mean-value bound needs a power law".into(),
        ));
    };
    if a != 1.0 {
        return Err(SpectrumError::InvalidParameter(format!(
            "mean-value bound needs a = 1, got {a}"
        )));
    }
    if !(lambda < 1.0) {
        return Err(SpectrumError::InvalidParameter(format!(
            "mean-value bound needs lambda < 1, got {lambda}"
        )));
    }
    if k == 0 {
        return Err(SpectrumError::ZeroGapOrder);
    }
    Ok(lambda * k as f64 / ((n + k) as f64).powf(1.0 - lambda))
}

/// Serializable description of a spectral function: the text record
/// `family=powerlaw a=1.0 lambda=0.8 b=1.0`, `family=sqrtshift` or
/// `family=tabulated file=<path>` (one value per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpectralRecord {
    #[serde(rename = "powerlaw")]
    PowerLaw { a: f64, lambda: f64, b: f64 },
    #[serde(rename = "sqrtshift")]
    SqrtShift,
    Tabulated {
        file: PathBuf,
        /// Declared power-law tail `(a, lambda, b)`; absent means out-of-range is an error.
        tail: Option<(f64, f64, f64)>,
    },
}

impl SpectralRecord {
    /// Keys that may appear in a record.
    pub const KEYS: [&'static str; 8] = [
        "family", "a", "lambda", "b", "file", "tail_a", "tail_lambda", "tail_b",
    ];

    /// Build a record from already-split `key=value` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut family = None;
        let mut nums: std::collections::BTreeMap<&str, f64> = Default::default();
        let mut file = None;
        for (key, value) in pairs {
            match key {
                "family" => family = Some(value.to_string()),
                "file" => file = Some(PathBuf::from(value)),
                "a" | "lambda" | "b" | "tail_a" | "tail_lambda" | "tail_b" => {
                    let v: f64 = value.parse().map_err(|_| {
                        SpectrumError::Record(format!("malformed number for {key}: {value:?}"))
                    })?;
                    nums.insert(key, v);
                }
                other => return Err(SpectrumError::Record(format!("unknown key {other:?}"))),
            }
        }
        let family = family.ok_or_else(|| SpectrumError::Record("missing family".into()))?;
        let get = |k: &str| {
            nums.get(k)
                .copied()
                .ok_or_else(|| SpectrumError::Record(format!("missing {k}")))
        };
        match family.as_str() {
            "powerlaw" => Ok(SpectralRecord::PowerLaw {
                a: get("a")?,
                lambda: get("lambda")?,
                b: get("b")?,
            }),
            "sqrtshift" => Ok(SpectralRecord::SqrtShift),
            "tabulated" => {
                let file = file.ok_or_else(|| SpectrumError::Record("missing file".into()))?;
                let tail = match (nums.get("tail_a"), nums.get("tail_lambda"), nums.get("tail_b")) {
                    (None, None, None) => None,
                    (Some(a), Some(l), Some(b)) => Some((*a, *l, *b)),
                    _ => {
                        return Err(SpectrumError::Record(
                            "tail needs all of tail_a, tail_lambda, tail_b".into(),
                        ))
                    }
                };
                Ok(SpectralRecord::Tabulated { file, tail })
            }
            other => Err(SpectrumError::Record(format!("unknown family {other:?}"))),
        }
    }

    /// Parse a whitespace-separated record line.
    pub fn parse(line: &str) -> Result<Self> {
        let pairs = line
            .split_whitespace()
            .map(|tok| {
                tok.split_once('=')
                    .ok_or_else(|| SpectrumError::Record(format!("expected key=value, got {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs)
    }

    /// Render as a single record line.
    pub fn render(&self) -> String {
        match self {
            SpectralRecord::PowerLaw { a, lambda, b } => {
                format!("family=powerlaw a={a} lambda={lambda} b={b}")
            }
            SpectralRecord::SqrtShift => "family=sqrtshift".to_string(),
            SpectralRecord::Tabulated { file, tail } => {
                let mut s = format!("family=tabulated file={}", file.display());
                if let Some((a, l, b)) = tail {
                    s.push_str(&format!(" tail_a={a} tail_lambda={l} tail_b={b}"));
                }
                s
            }
        }
    }

    /// Materialize the function, reading the table file if needed.
    /// Relative table paths are resolved against `base_dir`.
    pub fn load(&self, base_dir: Option<&Path>) -> Result<SpectralFunction> {
        match self {
            SpectralRecord::PowerLaw { a, lambda, b } => SpectralFunction::power_law(*a, *lambda, *b),
            SpectralRecord::SqrtShift => Ok(SpectralFunction::sqrt_shift()),
            SpectralRecord::Tabulated { file, tail } => {
                let path = match base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let values = read_table(&path)?;
                let extrapolation = match tail {
                    None => Extrapolation::Error,
                    Some((a, lambda, b)) => Extrapolation::PowerLawTail {
                        a: *a,
                        lambda: *lambda,
                        b: *b,
                    },
                };
                Ok(SpectralFunction::tabulated(values, extrapolation)?
                    .with_label(format!("tabulated({})", file.display())))
            }
        }
    }
}

/// One positive real per line; blank lines are skipped, index = position.
pub fn read_table(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| SpectrumError::Table {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| SpectrumError::Table {
            path: path.to_path_buf(),
            message: format!("line {}: malformed number {line:?}", lineno + 1),
        })?;
        if !(v > 0.0) {
            return Err(SpectrumError::Table {
                path: path.to_path_buf(),
                message: format!("line {}: value {v} is not positive", lineno + 1),
            });
        }
        values.push(v);
    }
    Ok(values)
}
