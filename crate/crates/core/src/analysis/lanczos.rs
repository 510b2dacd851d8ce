//! Extremal eigenvalues of Hermitian operators by Lanczos with full reorthogonalization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::operators::{OperatorMatrix, C64};

/// Hermitian linear map on `C^dim`.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl HermitianOperator for OperatorMatrix {
    fn dim(&self) -> usize {
        OperatorMatrix::dim(self)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_into(x, y)
    }
}

/// `A^* A` for an arbitrary square matrix `A`.
pub struct Gram<'a> {
    inner: &'a OperatorMatrix,
    scratch: std::cell::RefCell<Vec<C64>>,
}

impl<'a> Gram<'a> {
    pub fn new(inner: &'a OperatorMatrix) -> Self {
        Self {
            inner,
            scratch: std::cell::RefCell::new(vec![C64::new(0.0, 0.0); inner.dim()]),
        }
    }
}

impl HermitianOperator for Gram<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let mut tmp = self.scratch.borrow_mut();
        self.inner.apply_into(x, &mut tmp);
        self.inner.apply_adjoint_into(&tmp, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Largest,
    Smallest,
    LargestMagnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Relative accuracy requested for the target eigenvalue.
    pub tol: f64,
    /// Iteration cap; the Krylov space is exhausted at `dim` regardless.
    pub max_iter: usize,
    pub seed: u64,
}

impl LanczosOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 800,
            seed: 0x5eed_1a2c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ritz {
    pub value: f64,
    /// Residual norm `||A y - value y||` of the Ritz vector.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

struct RitzState {
    value: f64,
    residual: f64,
    gap: f64,
}

fn ritz(alphas: &[f64], betas: &[f64], beta_next: f64, target: Target) -> RitzState {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let vals = &eig.eigenvalues;
    let pick = (0..k)
        .max_by(|&a, &b| {
            let key = |i: usize| match target {
                Target::Largest => vals[i],
                Target::Smallest => -vals[i],
                Target::LargestMagnitude => vals[i].abs(),
            };
            key(a).total_cmp(&key(b))
        })
        .unwrap();
    let value = vals[pick];
    let residual = beta_next * eig.eigenvectors[(k - 1, pick)].abs();
    let gap = (0..k)
        .filter(|&i| i != pick)
        .map(|i| (vals[i] - value).abs())
        .fold(f64::INFINITY, f64::min);
    RitzState {
        value,
        residual,
        gap,
    }
}

/// Extremal eigenvalue of a Hermitian operator.
///
/// Converged when the Ritz value is stable between checks and either the residual
/// or the gap-refined bound `residual^2 / gap` is below `tol * |value|`.
/// The start vector comes from a fixed-seed generator, so results are reproducible.
pub fn lanczos<A: HermitianOperator + ?Sized>(
    op: &A,
    target: Target,
    opts: LanczosOptions,
) -> Ritz {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let q_norm = norm(&q);
    q.iter_mut().for_each(|z| *z /= q_norm);

    let cap = opts.max_iter.min(n).max(1);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(cap);
    let mut alphas = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut previous: Option<f64> = None;
    let mut next_check = 4usize;
    let mut scale = 0.0f64;

    loop {
        op.apply(&q, &mut w);
        let alpha = dot(&q, &w).re;
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= qi * alpha;
        }
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev.iter()) {
                *wi -= pi * beta;
            }
        }
        basis.push(q.clone());
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= vi * c;
                }
            }
        }
        let beta = norm(&w);
        scale = scale.max(alpha.abs()).max(beta);
        let k = alphas.len();
        let exhausted = k >= n || beta <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        let at_cap = k >= cap;

        if exhausted || at_cap || k >= next_check {
            let state = ritz(&alphas, &betas, if exhausted { 0.0 } else { beta }, target);
            let threshold = opts.tol * state.value.abs().max(f64::MIN_POSITIVE);
            let stable = previous.is_some_and(|p| (p - state.value).abs() <= threshold);
            let small = state.residual <= threshold
                || (state.gap > 0.0 && state.residual * state.residual / state.gap <= threshold);
            if exhausted || (stable && small) || at_cap {
                return Ritz {
                    value: state.value,
                    residual: state.residual,
                    iterations: k,
                    converged: exhausted || (stable && small),
                };
            }
            previous = Some(state.value);
            next_check = k + (k / 8).max(4);
        }

        betas.push(beta);
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = wi / beta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::OperatorKind;

    fn dense(rows: &[&[C64]]) -> OperatorMatrix {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
        OperatorMatrix::from_dense(m, OperatorKind::Derived, "")
    }

    #[test]
    fn pauli_type_matrix() {
        let z = C64::new(0.0, 0.0);
        let a = dense(&[&[z, C64::new(0.0, -1.0)], &[C64::new(0.0, 1.0), z]]);
        let r = lanczos(&a, Target::LargestMagnitude, LanczosOptions::with_tol(1e-12));
        assert!(r.converged);
        assert!((r.value.abs() - 1.0).abs() < 1e-14);
        let lo = lanczos(&a, Target::Smallest, LanczosOptions::with_tol(1e-12));
        assert!((lo.value + 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_extremes() {
        let d = OperatorMatrix::from_diagonal(vec![1.0, -5.0, 3.0, 2.0], OperatorKind::Derived, "");
        let opts = LanczosOptions::with_tol(1e-12);
        assert!((lanczos(&d, Target::Largest, opts).value - 3.0).abs() < 1e-13);
        assert!((lanczos(&d, Target::Smallest, opts).value + 5.0).abs() < 1e-13);
        assert!((lanczos(&d, Target::LargestMagnitude, opts).value + 5.0).abs() < 1e-13);
    }

    #[test]
    fn gram_gives_squared_singular_value() {
        let z = C64::new(0.0, 0.0);
        let a = dense(&[&[z, C64::new(2.0, 0.0)], &[C64::new(0.5, 0.0), z]]);
        let r = lanczos(&Gram::new(&a), Target::Largest, LanczosOptions::with_tol(1e-12));
        assert!((r.value - 4.0).abs() < 1e-12);
    }
}
