//! Sine-basis oracle for 1d problems with spatially constant controls.
//!
//! On an interval of length `len` the Dirichlet Laplacian has eigenvalues
//! `lambda_k = (k pi / len)^2` with eigenfunctions
//! `phi_k = sqrt(2/len) sin(k pi x / len)`, and the rectangle rule makes the
//! sampled modes exactly orthonormal. Evolution under a constant control
//! shifts every eigenvalue by the same amount, which gives closed-form
//! solutions the finite-difference stepper can be checked against. The
//! reaction term enters through a Duhamel integral evaluated from a solve
//! trace.

use std::io::Write as IoWrite;

use crate::dynamics::SolveTrace;
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::scalar::{real, to_f64, Real};

/// Coefficients of a field in the first `K` sine modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalCoeffs<T> {
    length: T,
    coeffs: Vec<T>,
}

impl<T: Real> ModalCoeffs<T> {
    pub fn new(length: T, coeffs: Vec<T>) -> Self {
        ModalCoeffs { length, coeffs }
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of mode `k` (1-based).
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs[k - 1]
    }

    /// Continuum eigenvalue of mode `k`.
    pub fn lambda(&self, k: usize) -> T {
        mode_lambda(self.length, k)
    }

    /// Sum of squared coefficients; equals the squared field norm when the
    /// basis is complete.
    pub fn energy(&self) -> T {
        self.coeffs.iter().map(|&c| c * c).sum()
    }

    /// CSV export: one row per mode.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,lambda_k,c_k")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, self.lambda(i + 1), c)?;
        }
        Ok(())
    }
}

fn mode_lambda<T: Real>(length: T, k: usize) -> T {
    let w = real::<T>(k as f64) * T::PI() / length;
    w * w
}

fn require_1d<T: Real>(grid: &Grid<T>) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::OneDimensionalOnly);
    }
    Ok(())
}

/// Continuum eigenvalue and unit-norm sampled eigenfunction of mode `k`.
pub fn eigenpair<T: Real>(grid: &Grid<T>, k: usize) -> Result<(T, ScalarField<T>)> {
    require_1d(grid)?;
    if k < 1 {
        return Err(Error::ModeOutOfRange { k, max: grid.n() });
    }
    let len = grid.length(0);
    let amp = (real::<T>(2.0) / len).sqrt();
    let freq = real::<T>(k as f64) * T::PI() / len;
    let phi = ScalarField::sample(*grid, |x, _| amp * (freq * x).sin());
    Ok((mode_lambda(len, k), phi))
}

/// Projects onto the first `K` modes: `c_k = <field, phi_k>`.
pub fn project<T: Real>(field: &ScalarField<T>, k_max: usize) -> Result<ModalCoeffs<T>> {
    let grid = field.grid();
    require_1d(grid)?;
    if k_max < 1 || k_max > grid.n() {
        return Err(Error::ModeOutOfRange {
            k: k_max,
            max: grid.n(),
        });
    }
    let mut coeffs = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let (_, phi) = eigenpair(grid, k)?;
        coeffs.push(field.inner(&phi)?);
    }
    Ok(ModalCoeffs {
        length: grid.length(0),
        coeffs,
    })
}

/// Sums the modal series back into a field on `grid`.
pub fn reconstruct<T: Real>(grid: &Grid<T>, coeffs: &ModalCoeffs<T>) -> Result<ScalarField<T>> {
    require_1d(grid)?;
    if coeffs.length != grid.length(0) {
        return Err(Error::GridMismatch);
    }
    if coeffs.order() > grid.n() {
        return Err(Error::ModeOutOfRange {
            k: coeffs.order(),
            max: grid.n(),
        });
    }
    let mut out = ScalarField::zeros(*grid);
    for (i, &c) in coeffs.coeffs.iter().enumerate() {
        let (_, phi) = eigenpair(grid, i + 1)?;
        let values = out.values_mut();
        for (o, p) in values.iter_mut().zip(phi.values()) {
            *o += c * *p;
        }
    }
    Ok(out)
}

/// Exact evolution under a spatially constant control: every mode scales
/// by `exp((v1 - lambda_k) t)`.
pub fn evolve_const_v<T: Real>(coeffs: &ModalCoeffs<T>, v1: T, t: T) -> ModalCoeffs<T> {
    let out = coeffs
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| ((v1 - mode_lambda(coeffs.length, i + 1)) * t).exp() * c)
        .collect();
    ModalCoeffs {
        length: coeffs.length,
        coeffs: out,
    }
}

/// Duhamel contribution of the reaction term over `[0, t1]` under a
/// constant control `v1`, truncated to `k_max` modes:
/// per mode, the trapezoid-in-time integral of
/// `exp((v1 - lambda_k)(t1 - t)) <f(u(t)), phi_k>` over the trace times.
pub fn f_term<T: Real>(
    trace: &SolveTrace<T>,
    v1: T,
    t1: T,
    k_max: usize,
) -> Result<ScalarField<T>> {
    let grid = *trace.initial_state().grid();
    require_1d(&grid)?;
    if k_max < 1 || k_max > grid.n() {
        return Err(Error::ModeOutOfRange {
            k: k_max,
            max: grid.n(),
        });
    }
    let tol = real::<T>(1e-9) * t1.max(T::one());
    if (trace.horizon() - t1).abs() > tol {
        return Err(Error::TraceHorizonMismatch {
            trace: to_f64(trace.horizon()),
            expected: to_f64(t1),
        });
    }
    let f = *trace.nonlinearity();
    let mut acc = vec![T::zero(); k_max];
    let last = trace.len() - 1;
    let half = real::<T>(0.5);
    for (j, (t, state)) in trace.times().iter().zip(trace.states()).enumerate() {
        let w = if j == 0 || j == last {
            half * trace.dt()
        } else {
            trace.dt()
        };
        let fu = f.apply(state);
        let c = project(&fu, k_max)?;
        for (k, a) in acc.iter_mut().enumerate() {
            let lam = mode_lambda(grid.length(0), k + 1);
            *a += w * ((v1 - lam) * (t1 - *t)).exp() * c.coeffs[k];
        }
    }
    reconstruct(
        &grid,
        &ModalCoeffs {
            length: grid.length(0),
            coeffs: acc,
        },
    )
}

/// Closed-form majorant of the reaction contribution:
/// `sqrt(m_eps^2 * t1 * integral of |f(u)|^2 over [0, t1])`, with the same
/// trapezoid weights as [`f_term`]. Requires the consistency
/// `exp(v1 t1) = m_eps` that the two-step construction guarantees.
pub fn f_term_bound<T: Real>(
    trace: &SolveTrace<T>,
    m_eps: T,
    v1: T,
    t1: T,
) -> Result<T> {
    if !(m_eps > T::one()) {
        return Err(Error::AmplificationNotAboveOne(to_f64(m_eps)));
    }
    let amp = (v1 * t1).exp();
    if ((amp - m_eps) / m_eps).abs() > real::<T>(1e-9) {
        return Err(Error::InconsistentAmplification {
            exp_v1_t1: to_f64(amp),
            m_eps: to_f64(m_eps),
        });
    }
    let tol = real::<T>(1e-9) * t1.max(T::one());
    if (trace.horizon() - t1).abs() > tol {
        return Err(Error::TraceHorizonMismatch {
            trace: to_f64(trace.horizon()),
            expected: to_f64(t1),
        });
    }
    let last = trace.len() - 1;
    let half = real::<T>(0.5);
    let mut integral = T::zero();
    for (j, r) in trace.records().iter().enumerate() {
        let w = if j == 0 || j == last {
            half * trace.dt()
        } else {
            trace.dt()
        };
        integral += w * r.l2_f_u * r.l2_f_u;
    }
    Ok((m_eps * m_eps * t1 * integral).sqrt())
}
