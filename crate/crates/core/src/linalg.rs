//! Linear solvers behind the implicit diffusion step: a reusable Thomas
//! factorization for symmetric tridiagonal systems with constant
//! off-diagonal, and matrix-free conjugate gradients for the 2d case.

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Real};

/// LU factors of a tridiagonal matrix whose sub- and super-diagonal are the
/// same constant. Factor once, then solve against many right-hand sides.
///
/// The builder requires strict diagonal dominance, which every caller in
/// this crate guarantees through its own step-size guard; dominance keeps
/// the elimination pivots positive so no pivoting is needed.
#[derive(Debug, Clone)]
pub struct TridiagFactor<T> {
    off: T,
    pivots: Vec<T>,
    lowers: Vec<T>,
}

impl<T: Real> TridiagFactor<T> {
    /// Factors the matrix with diagonal `diag` and constant off-diagonal
    /// `off`. Panics if a pivot degenerates, which diagonal dominance rules
    /// out.
    pub fn new(diag: &[T], off: T) -> Self {
        assert!(!diag.is_empty(), "empty diagonal");
        let n = diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut lowers = Vec::with_capacity(n);
        pivots.push(diag[0]);
        lowers.push(T::zero());
        for i in 1..n {
            let l = off / pivots[i - 1];
            let w = diag[i] - l * off;
            assert!(
                w.abs() > T::epsilon(),
                "tridiagonal pivot degenerated at row {i}"
            );
            lowers.push(l);
            pivots.push(w);
        }
        TridiagFactor { off, pivots, lowers }
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Solves in place: on entry `x` is the right-hand side, on exit the
    /// solution.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.pivots.len();
        assert_eq!(x.len(), n, "rhs length mismatch");
        for i in 1..n {
            let upd = self.lowers[i] * x[i - 1];
            x[i] -= upd;
        }
        x[n - 1] = x[n - 1] / self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.off * x[i + 1]) / self.pivots[i];
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` for symmetric positive definite `A` given only the
/// action `apply(x, out)`. `x` holds the initial guess on entry and the
/// solution on exit. Converges when the true residual norm falls below
/// `rel_tol * |b|`; errors if `max_iter` iterations do not get there.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    assert_eq!(x.len(), n, "guess length mismatch");
    let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).map(|(&p, &q)| p * q).sum() };

    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * b_norm;
    if rr.sqrt() <= target {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: to_f64(rr.sqrt() / b_norm),
        });
    }

    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            // recompute the true residual: accumulated recurrence drift
            // must not be what declares convergence
            apply(x, &mut ap);
            let mut true_rr = T::zero();
            for i in 0..n {
                let d = b[i] - ap[i];
                true_rr += d * d;
                r[i] = d;
            }
            if true_rr.sqrt() <= target {
                return Ok(CgOutcome {
                    iterations: iter,
                    relative_residual: to_f64(true_rr.sqrt() / b_norm),
                });
            }
            rr = true_rr;
            p.copy_from_slice(&r);
            continue;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveDiverged {
        residual: to_f64(rr.sqrt() / b_norm),
    })
}

/// Convenience wrapper with the crate-standard tolerance.
pub fn cg_standard<T: Real>(
    apply: impl Fn(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
) -> Result<CgOutcome> {
    conjugate_gradient(apply, b, x, real::<T>(1e-10), 10 * b.len().max(100))
}
