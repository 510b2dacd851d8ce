//! Norm scans, class-membership checks and relative-bound estimates.

mod bounds;
mod classes;
pub mod lanczos;
mod norms;

use thiserror::Error;

use crate::operators::{OperatorError, OperatorMatrix};
use crate::spectrum::SpectrumError;
use lanczos::{lanczos, Gram, LanczosOptions, Target};

pub use bounds::{
    katorellich_margin, lower_bound_check, relative_bound, KrMode, KrReport, KrVerdict,
    LowerBoundReport, RelBoundReport, weighted_tf2, KR_LADDER, KR_MIN_DECAY,
};
pub use classes::{
    check_m_beta, check_ms_beta, ClassWitness, HSequence, MembershipReport, MsReport, Violation,
    MS_SAFETY,
};
pub use norms::{bd_t_bound, norm_scan, BdTBound, BoundVerdict, ScanOptions, ScanResult, ScanVerdict, Which};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("eigenvalue iteration did not converge after {iterations} steps (best estimate {best}, residual {residual:e})")]
    NonConvergence {
        best: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::Invalid(format!("tolerance must be positive, got {tol}")))
    }
}

fn finish(r: lanczos::Ritz) -> Result<f64> {
    if r.converged {
        Ok(r.value)
    } else {
        Err(AnalysisError::NonConvergence {
            best: r.value,
            residual: r.residual,
            iterations: r.iterations,
        })
    }
}

/// Spectral norm of a truncation to relative tolerance `tol`.
///
/// Diagonal matrices are read off directly; Hermitian matrices use Lanczos on
/// the matrix itself, anything else on the Gram matrix `A^* A`.
pub fn op_norm(a: &OperatorMatrix, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if let Some(d) = a.diagonal() {
        return Ok(d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    if a.hermiticity_defect() == 0.0 {
        let r = lanczos(a, Target::LargestMagnitude, LanczosOptions::with_tol(tol));
        return finish(r).map(f64::abs);
    }
    // Squaring halves the relative accuracy of the root, so ask for more.
    let r = lanczos(&Gram::new(a), Target::Largest, LanczosOptions::with_tol(tol * 0.5));
    finish(r).map(|v| v.max(0.0).sqrt())
}

/// Smallest eigenvalue of a Hermitian truncation.
pub fn min_eigenvalue(a: &OperatorMatrix, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if let Some(d) = a.diagonal() {
        return Ok(d.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let defect = a.hermiticity_defect();
    if defect > 0.0 {
        return Err(AnalysisError::NotHermitian { defect });
    }
    finish(lanczos(a, Target::Smallest, LanczosOptions::with_tol(tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_tf, OperatorKind, C64};
    use crate::spectrum::SpectralFunction;
    use nalgebra::{DMatrix, SymmetricEigen};

    /// Full Hermitian eigensolve through the real embedding [[Re, -Im], [Im, Re]].
    fn dense_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
        let n = a.nrows();
        let real = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let z = a[(r % n, c % n)];
            match (r < n, c < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let mut v: Vec<f64> = SymmetricEigen::new(real).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn pauli_and_diagonal_norms() {
        let z = C64::new(0.0, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z]);
        let a = OperatorMatrix::from_dense(m, OperatorKind::Derived, "");
        assert!((op_norm(&a, 1e-12).unwrap() - 1.0).abs() < 1e-14);
        let d = OperatorMatrix::from_diagonal(vec![1.0, 2.0, 3.0], OperatorKind::Derived, "");
        assert_eq!(op_norm(&d, 1e-12).unwrap(), 3.0);
    }

    #[test]
    fn tf_norm_under_zeta_cap() {
        let f = SpectralFunction::power_law(1.0, 2.0, 1.0).unwrap();
        let t = build_tf(&f, 64).unwrap();
        let norm = op_norm(&t, 1e-10).unwrap();
        assert!(norm <= std::f64::consts::PI.powi(2) / 3.0);
    }

    #[test]
    fn lanczos_matches_dense_eigensolve() {
        for (f, m) in [
            (SpectralFunction::power_law(1.0, 0.8, 1.0).unwrap(), 40),
            (SpectralFunction::power_law(1.0, 1.5, 1.0).unwrap(), 128),
            (SpectralFunction::sqrt_shift(), 256),
        ] {
            let t = build_tf(&f, m).unwrap();
            let eig = dense_eigenvalues(&t.to_dense());
            let exact = eig[0].abs().max(eig[eig.len() - 1].abs());
            let norm = op_norm(&t, 1e-10).unwrap();
            assert!((norm - exact).abs() <= 1e-9 * exact, "{norm} vs {exact}");
            let lo = min_eigenvalue(&t, 1e-10).unwrap();
            assert!((lo - eig[0]).abs() <= 1e-9 * exact);
        }
    }

    #[test]
    fn non_hermitian_norm_uses_singular_values() {
        let m = DMatrix::from_fn(30, 30, |r, c| C64::new((r as f64 + 1.0) / (c as f64 + 2.0), (r * c) as f64 * 0.01));
        let a = OperatorMatrix::from_dense(m.clone(), OperatorKind::Derived, "");
        let exact = m.svd(false, false).singular_values.max();
        let norm = op_norm(&a, 1e-10).unwrap();
        assert!((norm - exact).abs() <= 1e-9 * exact);
    }

    #[test]
    fn min_eigenvalue_rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let a = OperatorMatrix::from_dense(m, OperatorKind::Derived, "");
        assert!(matches!(min_eigenvalue(&a, 1e-10), Err(AnalysisError::NotHermitian { .. })));
    }
}
