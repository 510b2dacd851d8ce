//! M×M truncations of the operators acting on `span{xi_0, ..., xi_{M-1}}`.
//!
//! Truncation keeps rows and columns `0..M`. Diagonal factors commute with
//! truncation, so products such as `f(N) T` are exact finite-matrix identities;
//! shift powers drop whatever would leave the window.

use std::fmt;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{pow_exact, SpectralFunction, SpectrumError};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension must be at least {min}, got {dim}")]
    InvalidDimension { dim: usize, min: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("shift order {k} does not fit in dimension {dim}")]
    ShiftTooLarge { k: usize, dim: usize },
    #[error("spectrum not strictly increasing between indices {lo} and {hi}")]
    NotIncreasing { lo: usize, hi: usize },
    #[error("eigenvalues {0} and {1} coincide")]
    NonDistinct(usize, usize),
    #[error("need {needed} eigenvalues, got {got}")]
    TooFewEigenvalues { needed: usize, got: usize },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed matrix dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, OperatorError>;

/// Which operator a matrix truncates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `f(N)^p`.
    DiagPower { p: f64 },
    /// `L^k`.
    ShiftLeft { k: usize },
    /// `L*^k`.
    ShiftRight { k: usize },
    /// `delta_k(f, N)^{-1}`.
    DeltaInv { k: usize },
    Tf,
    /// Partial sum `T_{f,m}`.
    Tfm { m_cut: usize },
    Galapon,
    /// `T_{f^2}`.
    Tf2,
    /// `f(N) T_{f^2} + T_{f^2} f(N) + gamma f(N)^beta_term`.
    Symmetrized { gamma: f64, beta_term: f64 },
    /// Anything assembled from other matrices (products, commutators, sums).
    Derived,
}

impl OperatorKind {
    /// Tag written into binary dumps.
    pub fn tag(&self) -> u32 {
        match self {
            OperatorKind::DiagPower { .. } => 1,
            OperatorKind::ShiftLeft { .. } => 2,
            OperatorKind::ShiftRight { .. } => 3,
            OperatorKind::DeltaInv { .. } => 4,
            OperatorKind::Tf => 5,
            OperatorKind::Tfm { .. } => 6,
            OperatorKind::Galapon => 7,
            OperatorKind::Tf2 => 8,
            OperatorKind::Symmetrized { .. } => 9,
            OperatorKind::Derived => 0,
        }
    }

    pub fn is_hermitian_kind(&self) -> bool {
        matches!(
            self,
            OperatorKind::DiagPower { .. }
                | OperatorKind::DeltaInv { .. }
                | OperatorKind::Tf
                | OperatorKind::Tfm { .. }
                | OperatorKind::Galapon
                | OperatorKind::Tf2
                | OperatorKind::Symmetrized { .. }
        )
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::DiagPower { p } => write!(f, "f(N)^{p}"),
            OperatorKind::ShiftLeft { k } => write!(f, "L^{k}"),
            OperatorKind::ShiftRight { k } => write!(f, "L*^{k}"),
            OperatorKind::DeltaInv { k } => write!(f, "Delta_{k}^-1"),
            OperatorKind::Tf => write!(f, "T_f"),
            OperatorKind::Tfm { m_cut } => write!(f, "T_f,{m_cut}"),
            OperatorKind::Galapon => write!(f, "T_G"),
            OperatorKind::Tf2 => write!(f, "T_f^2"),
            OperatorKind::Symmetrized { gamma, beta_term } => {
                write!(f, "fT_f^2+T_f^2f+{gamma}f^{beta_term}")
            }
            OperatorKind::Derived => write!(f, "derived"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Diagonal(Vec<f64>),
    Dense(DMatrix<C64>),
}

/// A truncated operator with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    kind: OperatorKind,
    storage: Storage,
    source: String,
}

impl OperatorMatrix {
    pub fn from_diagonal(diag: Vec<f64>, kind: OperatorKind, source: impl Into<String>) -> Self {
        Self {
            dim: diag.len(),
            kind,
            storage: Storage::Diagonal(diag),
            source: source.into(),
        }
    }

    pub fn from_dense(m: DMatrix<C64>, kind: OperatorKind, source: impl Into<String>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrices are square");
        Self {
            dim: m.nrows(),
            kind,
            storage: Storage::Dense(m),
            source: source.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// Label of the spectral function the matrix was built from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn label(&self) -> String {
        if self.source.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}[{}]", self.kind, self.source)
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.storage, Storage::Diagonal(_))
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Diagonal(d) => Some(d),
            Storage::Dense(_) => None,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        match &self.storage {
            Storage::Diagonal(d) if row == col => C64::new(d[row], 0.0),
            Storage::Diagonal(_) => C64::new(0.0, 0.0),
            Storage::Dense(m) => m[(row, col)],
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Diagonal(d) => {
                DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| C64::new(x, 0.0))))
            }
            Storage::Dense(m) => m.clone(),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        match &self.storage {
            Storage::Diagonal(d) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(d) {
                    *yi = xi * di;
                }
            }
            Storage::Dense(m) => {
                y.fill(C64::new(0.0, 0.0));
                // Column-major storage: accumulate column by column.
                for (j, col) in m.column_iter().enumerate() {
                    let xj = x[j];
                    if xj == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (yi, a) in y.iter_mut().zip(col.iter()) {
                        *yi += a * xj;
                    }
                }
            }
        }
    }

    /// `A^* x`.
    pub fn apply_adjoint_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        match &self.storage {
            Storage::Diagonal(d) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(d) {
                    *yi = xi * di;
                }
            }
            Storage::Dense(m) => {
                for (yj, col) in y.iter_mut().zip(m.column_iter()) {
                    *yj = col.iter().zip(x).map(|(a, xi)| a.conj() * xi).sum();
                }
            }
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Diagonal(d) => d.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            Storage::Dense(m) => m.iter().fold(0.0, |acc, x| acc.max(x.norm())),
        }
    }

    /// `max |a_mn - conj(a_nm)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        match &self.storage {
            Storage::Diagonal(_) => 0.0,
            Storage::Dense(m) => {
                let mut worst = 0.0f64;
                for r in 0..self.dim {
                    for c in r..self.dim {
                        worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
                    }
                }
                worst
            }
        }
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> Result<f64> {
        self.check_dim(other)?;
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                worst = worst.max((self.get(r, c) - other.get(r, c)).norm());
            }
        }
        Ok(worst)
    }

    fn check_dim(&self, other: &OperatorMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(OperatorError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    /// Matrix product; diagonal factors are applied as row/column scalings.
    pub fn matmul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_dim(other)?;
        let source = self.source.clone();
        let out = match (&self.storage, &other.storage) {
            (Storage::Diagonal(a), Storage::Diagonal(b)) => {
                return Ok(OperatorMatrix::from_diagonal(
                    a.iter().zip(b).map(|(x, y)| x * y).collect(),
                    OperatorKind::Derived,
                    source,
                ))
            }
            (Storage::Diagonal(d), Storage::Dense(m)) => {
                let mut m = m.clone();
                for (r, mut row) in m.row_iter_mut().enumerate() {
                    row *= C64::new(d[r], 0.0);
                }
                m
            }
            (Storage::Dense(m), Storage::Diagonal(d)) => {
                let mut m = m.clone();
                for (c, mut col) in m.column_iter_mut().enumerate() {
                    col *= C64::new(d[c], 0.0);
                }
                m
            }
            (Storage::Dense(a), Storage::Dense(b)) => a * b,
        };
        Ok(OperatorMatrix::from_dense(out, OperatorKind::Derived, source))
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &OperatorMatrix, scale: C64) -> Result<OperatorMatrix> {
        self.check_dim(other)?;
        if let (Storage::Diagonal(a), Storage::Diagonal(b)) = (&self.storage, &other.storage) {
            if scale.im == 0.0 {
                return Ok(OperatorMatrix::from_diagonal(
                    a.iter().zip(b).map(|(x, y)| x + scale.re * y).collect(),
                    OperatorKind::Derived,
                    self.source.clone(),
                ));
            }
        }
        let out = self.to_dense() + other.to_dense() * scale;
        Ok(OperatorMatrix::from_dense(out, OperatorKind::Derived, self.source.clone()))
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.add_scaled(other, C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: C64) -> OperatorMatrix {
        let out = self.to_dense() * s;
        OperatorMatrix::from_dense(out, OperatorKind::Derived, self.source.clone())
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }

    /// Row-major CSV, one quoted `re,im` cell per entry.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{},{}", z.re, z.im)
                })
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian dump: `u64` dim, `u32` kind tag, then row-major `(f64 re, f64 im)` pairs.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&(self.dim as u64).to_le_bytes())?;
        writer.write_all(&self.kind.tag().to_le_bytes())?;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let z = self.get(r, c);
                writer.write_all(&z.re.to_le_bytes())?;
                writer.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Contents of a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDump {
    pub dim: usize,
    pub kind_tag: u32,
    /// Row-major entries.
    pub entries: Vec<C64>,
}

impl MatrixDump {
    pub fn read<R: Read>(mut reader: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        reader.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        reader.read_exact(&mut b4)?;
        let kind_tag = u32::from_le_bytes(b4);
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| OperatorError::Format(format!("dimension {dim} overflows")))?;
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            reader.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            reader.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            entries.push(C64::new(re, im));
        }
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(OperatorError::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            dim,
            kind_tag,
            entries,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim + col]
    }
}

fn require_dim(dim: usize, min: usize) -> Result<()> {
    if dim < min {
        return Err(OperatorError::InvalidDimension { dim, min });
    }
    Ok(())
}

/// `diag(f(0)^p, ..., f(M-1)^p)`.
pub fn build_diag(f: &SpectralFunction, dim: usize, p: f64) -> Result<OperatorMatrix> {
    require_dim(dim, 1)?;
    let diag = f
        .values(dim)?
        .into_iter()
        .map(|v| if p == 1.0 { v } else { pow_exact(v, p) })
        .collect();
    Ok(OperatorMatrix::from_diagonal(
        diag,
        OperatorKind::DiagPower { p },
        f.label.clone(),
    ))
}

/// `L^k` (`xi_n -> xi_{n-k}`), or `L*^k` (`xi_n -> xi_{n+k}`, overflow dropped) when `adjoint`.
pub fn build_shift(dim: usize, k: usize, adjoint: bool) -> Result<OperatorMatrix> {
    require_dim(dim, 1)?;
    if k == 0 || k >= dim {
        return Err(OperatorError::ShiftTooLarge { k, dim });
    }
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim - k {
        if adjoint {
            m[(n + k, n)] = C64::new(1.0, 0.0);
        } else {
            m[(n, n + k)] = C64::new(1.0, 0.0);
        }
    }
    let kind = if adjoint {
        OperatorKind::ShiftRight { k }
    } else {
        OperatorKind::ShiftLeft { k }
    };
    Ok(OperatorMatrix::from_dense(m, kind, ""))
}

/// `diag(1 / delta_k(f, n))`, `n = 0..M`. Needs `f` up to index `M - 1 + k`.
pub fn build_delta_inv(f: &SpectralFunction, dim: usize, k: usize) -> Result<OperatorMatrix> {
    require_dim(dim, 1)?;
    let diag = (0..dim)
        .map(|n| {
            let d = f.delta(k as u64, n as u64)?;
            if d <= 0.0 {
                return Err(OperatorError::NotIncreasing { lo: n, hi: n + k });
            }
            Ok(1.0 / d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorMatrix::from_diagonal(
        diag,
        OperatorKind::DeltaInv { k },
        f.label.clone(),
    ))
}

/// Fill a Hermitian matrix from its strict upper triangle `(r < c) -> entry`.
fn hermitian_from_upper(
    dim: usize,
    mut upper: impl FnMut(usize, usize) -> Result<C64>,
) -> Result<DMatrix<C64>> {
    let mut m = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        for r in 0..c {
            let z = upper(r, c)?;
            m[(r, c)] = z;
            m[(c, r)] = z.conj();
        }
    }
    Ok(m)
}

/// Entries `i / (f(m) - f(n))` off the diagonal, gaps taken from [`SpectralFunction::delta`].
fn cauchy_entries(f: &SpectralFunction, dim: usize) -> Result<DMatrix<C64>> {
    if let Some(max) = f.max_index() {
        if (max as usize) < dim - 1 {
            return Err(SpectrumError::OutOfRange {
                index: dim as u64 - 1,
                len: max as usize + 1,
            }
            .into());
        }
    }
    hermitian_from_upper(dim, |r, c| {
        // r < c: f(r) - f(c) = -delta_{c-r}(f, r).
        let gap = f.delta((c - r) as u64, r as u64)?;
        if gap <= 0.0 {
            return Err(OperatorError::NotIncreasing { lo: r, hi: c });
        }
        Ok(C64::new(0.0, 1.0 / -gap))
    })
}

/// `T_f` truncated: `entry(m, n) = i / (f(m) - f(n))`, zero diagonal.
pub fn build_tf(f: &SpectralFunction, dim: usize) -> Result<OperatorMatrix> {
    require_dim(dim, 2)?;
    Ok(OperatorMatrix::from_dense(
        cauchy_entries(f, dim)?,
        OperatorKind::Tf,
        f.label.clone(),
    ))
}

/// `T_{f^2}` truncated: `entry(m, n) = i / (f(m)^2 - f(n)^2)`.
pub fn build_tf2(f: &SpectralFunction, dim: usize) -> Result<OperatorMatrix> {
    require_dim(dim, 2)?;
    Ok(OperatorMatrix::from_dense(
        cauchy_entries(&f.squared(), dim)?,
        OperatorKind::Tf2,
        f.label.clone(),
    ))
}

/// `T_{f,m} = i sum_{k=1}^{m} (L*^k delta_k(f,N)^{-1} - delta_k(f,N)^{-1} L^k)`,
/// assembled literally from truncated shift and diagonal factors.
pub fn build_tfm(f: &SpectralFunction, dim: usize, m_cut: usize) -> Result<OperatorMatrix> {
    require_dim(dim, 2)?;
    if m_cut == 0 {
        return Err(OperatorError::ShiftTooLarge { k: 0, dim });
    }
    let mut acc = DMatrix::<C64>::zeros(dim, dim);
    for k in 1..=m_cut.min(dim - 1) {
        let dinv = build_delta_inv(f, dim, k)?;
        let up = build_shift(dim, k, true)?.matmul(&dinv)?;
        let down = dinv.matmul(&build_shift(dim, k, false)?)?;
        acc += up.to_dense() - down.to_dense();
    }
    Ok(OperatorMatrix::from_dense(
        acc * I,
        OperatorKind::Tfm { m_cut },
        f.label.clone(),
    ))
}

/// Galapon operator in the eigenbasis: `entry(n, m) = i / (E_n - E_m)`.
pub fn build_galapon(energies: &[f64], dim: usize) -> Result<OperatorMatrix> {
    require_dim(dim, 2)?;
    if energies.len() < dim {
        return Err(OperatorError::TooFewEigenvalues {
            needed: dim,
            got: energies.len(),
        });
    }
    let e = &energies[..dim];
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| e[a].total_cmp(&e[b]));
    if let Some(w) = order.windows(2).find(|w| e[w[0]] == e[w[1]]) {
        return Err(OperatorError::NonDistinct(w[0].min(w[1]), w[0].max(w[1])));
    }
    let m = hermitian_from_upper(dim, |r, c| Ok(C64::new(0.0, 1.0 / (e[r] - e[c]))))?;
    Ok(OperatorMatrix::from_dense(m, OperatorKind::Galapon, "E"))
}

/// `f(N) T_{f^2} + T_{f^2} f(N) + gamma f(N)^beta_term`, exact on the truncation
/// because every factor besides `T_{f^2}` is diagonal.
pub fn build_symmetrized(
    f: &SpectralFunction,
    dim: usize,
    gamma: f64,
    beta_term: f64,
) -> Result<OperatorMatrix> {
    require_dim(dim, 2)?;
    let fv = f.values(dim)?;
    let t2 = cauchy_entries(&f.squared(), dim)?;
    let mut m = hermitian_from_upper(dim, |r, c| {
        let t = t2[(r, c)];
        Ok(t * fv[r] + t * fv[c])
    })?;
    for n in 0..dim {
        m[(n, n)] = C64::new(gamma * pow_exact(fv[n], beta_term), 0.0);
    }
    Ok(OperatorMatrix::from_dense(
        m,
        OperatorKind::Symmetrized { gamma, beta_term },
        f.label.clone(),
    ))
}

/// `[A, B] = AB - BA`. For diagonal `A` the entries are `(a_m - a_n) b_mn`, formed
/// without matrix products.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.check_dim(b)?;
    let dim = a.dim;
    let source = a.source.clone();
    if let Some(da) = a.diagonal() {
        if b.is_diagonal() {
            return Ok(OperatorMatrix::from_diagonal(vec![0.0; dim], OperatorKind::Derived, source));
        }
        let mut m = b.to_dense();
        for c in 0..dim {
            for r in 0..dim {
                m[(r, c)] *= da[r] - da[c];
            }
        }
        return Ok(OperatorMatrix::from_dense(m, OperatorKind::Derived, source));
    }
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    Ok(ab.sub(&ba)?.with_kind(OperatorKind::Derived))
}
