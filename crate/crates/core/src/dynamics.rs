//! The controlled evolution itself: Lipschitz reaction terms, piecewise-static
//! control schedules, and an implicit-explicit backward-Euler stepper that
//! produces solution traces.
//!
//! Each time step solves `(I - dt*Lap - dt*diag(v)) u_next = u + dt*f(u)`.
//! Diffusion and the reaction coefficient are implicit, so phase controls
//! that scale like the reciprocal of a short interval stay harmless; the
//! Lipschitz term is explicit, guarded by [`stability_guard`]. Within one
//! schedule step the control field is static, so the system matrix is
//! factored once per step in 1d and applied matrix-free to conjugate
//! gradients in 2d.

use std::io::Write as IoWrite;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::linalg::{cg_standard, TridiagFactor};
use crate::scalar::{real, to_f64, Real};

/// Reaction term `f(u)` with its Lipschitz constant.
///
/// Every builtin satisfies `f(0) = 0` and `|f(a) - f(b)| <= L |a - b|`,
/// which [`lipschitz_selfcheck`] can confirm by sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity<T> {
    kind: Kind<T>,
    lipschitz: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind<T> {
    Zero,
    Linear { slope: T },
    ScaledSine,
    Saturating,
}

impl<T: Real> Nonlinearity<T> {
    /// `f == 0`.
    pub fn zero() -> Self {
        Nonlinearity {
            kind: Kind::Zero,
            lipschitz: T::zero(),
        }
    }

    /// `f(u) = slope * u`; requires `|slope| <= lipschitz`.
    pub fn linear(slope: T, lipschitz: T) -> Result<Self> {
        check_lipschitz(lipschitz)?;
        if !slope.is_finite() || slope.abs() > lipschitz {
            return Err(Error::InvalidLipschitz {
                reason: format!(
                    "linear slope {} exceeds lipschitz constant {}",
                    to_f64(slope),
                    to_f64(lipschitz)
                ),
            });
        }
        Ok(Nonlinearity {
            kind: Kind::Linear { slope },
            lipschitz,
        })
    }

    /// `f(u) = L * sin(u)`.
    pub fn scaled_sine(lipschitz: T) -> Result<Self> {
        check_lipschitz(lipschitz)?;
        Ok(Nonlinearity {
            kind: Kind::ScaledSine,
            lipschitz,
        })
    }

    /// `f(u) = L * u / (1 + u^2)`; the derivative peaks at `u = 0` with
    /// slope exactly `L`.
    pub fn saturating(lipschitz: T) -> Result<Self> {
        check_lipschitz(lipschitz)?;
        Ok(Nonlinearity {
            kind: Kind::Saturating,
            lipschitz,
        })
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    pub fn eval(&self, u: T) -> T {
        match self.kind {
            Kind::Zero => T::zero(),
            Kind::Linear { slope } => slope * u,
            Kind::ScaledSine => self.lipschitz * u.sin(),
            Kind::Saturating => self.lipschitz * u / (T::one() + u * u),
        }
    }

    pub fn apply(&self, u: &ScalarField<T>) -> ScalarField<T> {
        u.map(|v| self.eval(v))
    }

    /// Exponent for the exact reaction-only update, when one exists: the
    /// zero and linear kinds evolve as `u * exp((v + slope) dt)` per node.
    fn exact_reaction_slope(&self) -> Option<T> {
        match self.kind {
            Kind::Zero => Some(T::zero()),
            Kind::Linear { slope } => Some(slope),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Zero => "zero",
            Kind::Linear { .. } => "linear",
            Kind::ScaledSine => "scaled_sine",
            Kind::Saturating => "saturating",
        }
    }
}

fn check_lipschitz<T: Real>(l: T) -> Result<()> {
    if !(l.is_finite() && l >= T::zero()) {
        return Err(Error::InvalidLipschitz {
            reason: format!("constant {} not finite and nonnegative", to_f64(l)),
        });
    }
    Ok(())
}

/// Confirms `f(0) = 0` and the Lipschitz inequality over all sample pairs.
pub fn lipschitz_selfcheck<T: Real>(f: &Nonlinearity<T>, samples: &[T]) -> Result<bool> {
    lipschitz_selfcheck_fn(|u| f.eval(u), f.lipschitz(), samples)
}

/// Same check for an arbitrary function with a claimed constant; used to
/// expose fake registrations.
pub fn lipschitz_selfcheck_fn<T: Real>(
    f: impl Fn(T) -> T,
    lipschitz: T,
    samples: &[T],
) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let tiny = real::<T>(1e-12);
    if f(T::zero()).abs() > tiny {
        return Ok(false);
    }
    let slack = T::one() + tiny;
    for (i, &a) in samples.iter().enumerate() {
        for &b in &samples[i + 1..] {
            if (f(a) - f(b)).abs() > lipschitz * (a - b).abs() * slack {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Piecewise-static control: breakpoints `0 = t_0 < t_1 < ... < t_m = T`
/// and one static field per interval. The value at time t is the first
/// step's field on the closed interval `[t_0, t_1]` and step k's field on
/// the half-open `(t_{k-1}, t_k]` afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule<T> {
    breakpoints: Vec<T>,
    steps: Vec<ScalarField<T>>,
}

impl<T: Real> ControlSchedule<T> {
    pub fn new(breakpoints: Vec<T>, steps: Vec<ScalarField<T>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if breakpoints.len() != steps.len() + 1 {
            return Err(Error::StepCountMismatch {
                breakpoints: breakpoints.len(),
                steps: steps.len(),
            });
        }
        if breakpoints[0] != T::zero() {
            return Err(Error::ScheduleStartNotZero(to_f64(breakpoints[0])));
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if !(w[1] > w[0] && w[1].is_finite()) {
                return Err(Error::BreakpointsNotIncreasing { index: i + 1 });
            }
        }
        let grid = *steps[0].grid();
        if steps.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(ControlSchedule { breakpoints, steps })
    }

    /// Single-interval schedule holding one static field for the whole
    /// horizon.
    pub fn single(field: ScalarField<T>, horizon: T) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(Error::NonpositiveHorizon(to_f64(horizon)));
        }
        Self::new(vec![T::zero(), horizon], vec![field])
    }

    /// Single-interval schedule with a spatially constant control.
    pub fn constant(grid: Grid<T>, value: T, horizon: T) -> Result<Self> {
        Self::single(ScalarField::constant(grid, value), horizon)
    }

    pub fn horizon(&self) -> T {
        *self.breakpoints.last().expect("validated nonempty")
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn steps(&self) -> &[ScalarField<T>] {
        &self.steps
    }

    pub fn grid(&self) -> &Grid<T> {
        self.steps[0].grid()
    }

    /// The static field governing time `t`.
    pub fn control_at(&self, t: T) -> Result<&ScalarField<T>> {
        if !(t >= T::zero() && t <= self.horizon()) {
            return Err(Error::TimeOutOfRange {
                t: to_f64(t),
                horizon: to_f64(self.horizon()),
            });
        }
        for (k, step) in self.steps.iter().enumerate() {
            if t <= self.breakpoints[k + 1] {
                return Ok(step);
            }
        }
        Ok(self.steps.last().expect("validated nonempty"))
    }

    /// Largest sup-norm of the positive parts of the step fields; the
    /// growth-rate input of the Gronwall-type bounds.
    pub fn max_linf_positive_part(&self) -> T {
        self.steps.iter().fold(T::zero(), |m, s| {
            m.max(s.values().iter().fold(T::zero(), |a, &v| a.max(v)))
        })
    }

    /// Appends `tail`, whose breakpoints are relative to its own zero, after
    /// this schedule's horizon.
    pub fn concat(&self, tail: &ControlSchedule<T>) -> Result<Self> {
        if self.grid() != tail.grid() {
            return Err(Error::GridMismatch);
        }
        let t0 = self.horizon();
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(tail.breakpoints[1..].iter().map(|&b| t0 + b));
        let mut steps = self.steps.clone();
        steps.extend(tail.steps.iter().cloned());
        ControlSchedule::new(breakpoints, steps)
    }
}

/// Initial-value problem: grid, reaction term, initial state, horizon.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    grid: Grid<T>,
    f: Nonlinearity<T>,
    u0: ScalarField<T>,
    horizon: T,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(f: Nonlinearity<T>, u0: ScalarField<T>, horizon: T) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(Error::NonpositiveHorizon(to_f64(horizon)));
        }
        Ok(ProblemSpec {
            grid: *u0.grid(),
            f,
            u0,
            horizon,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn nonlinearity(&self) -> &Nonlinearity<T> {
        &self.f
    }

    pub fn initial_state(&self) -> &ScalarField<T> {
        &self.u0
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn with_initial_state(&self, u0: ScalarField<T>) -> Result<Self> {
        if u0.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ProblemSpec {
            grid: self.grid,
            f: self.f,
            u0,
            horizon: self.horizon,
        })
    }

    pub fn with_horizon(&self, horizon: T) -> Result<Self> {
        Self::new(self.f, self.u0.clone(), horizon)
    }
}

/// Norm functionals recorded at one trace time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    pub l2_u: T,
    pub linf_u: T,
    pub l2_f_u: T,
    pub l2_lap_u: T,
}

fn record_of<T: Real>(u: &ScalarField<T>, f: &Nonlinearity<T>) -> StepRecord<T> {
    StepRecord {
        l2_u: u.l2_norm(),
        linf_u: u.linf_norm(),
        l2_f_u: f.apply(u).l2_norm(),
        l2_lap_u: u.laplacian().l2_norm(),
    }
}

/// Time-indexed record of one simulation: states and norm functionals at
/// `t = 0, dt, 2 dt, ..., T`.
#[derive(Debug, Clone)]
pub struct SolveTrace<T> {
    times: Vec<T>,
    states: Vec<ScalarField<T>>,
    records: Vec<StepRecord<T>>,
    dt: T,
    f: Nonlinearity<T>,
}

impl<T: Real> SolveTrace<T> {
    /// Assembles a trace from explicit states, recomputing the norm
    /// records. Lets verification tests fabricate traces that never came
    /// from the stepper.
    pub fn from_parts(
        times: Vec<T>,
        states: Vec<ScalarField<T>>,
        dt: T,
        f: Nonlinearity<T>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::TraceMismatch {
                reason: format!(
                    "{} times against {} states",
                    times.len(),
                    states.len()
                ),
            });
        }
        if times[0] != T::zero() {
            return Err(Error::TraceMismatch {
                reason: "first time is not zero".into(),
            });
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::TraceMismatch {
                    reason: "times not strictly increasing".into(),
                });
            }
        }
        let grid = *states[0].grid();
        if states.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::NonpositiveDt(to_f64(dt)));
        }
        let records = states.iter().map(|u| record_of(u, &f)).collect();
        Ok(SolveTrace {
            times,
            states,
            records,
            dt,
            f,
        })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[ScalarField<T>] {
        &self.states
    }

    pub fn records(&self) -> &[StepRecord<T>] {
        &self.records
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn nonlinearity(&self) -> &Nonlinearity<T> {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("validated nonempty")
    }

    pub fn initial_state(&self) -> &ScalarField<T> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &ScalarField<T> {
        self.states.last().expect("validated nonempty")
    }

    /// Largest recorded `l2(u)` over the whole trace.
    pub fn max_l2(&self) -> T {
        self.records.iter().fold(T::zero(), |m, r| m.max(r.l2_u))
    }

    /// Smallest node value over every state.
    pub fn min_value(&self) -> T {
        self.states
            .iter()
            .fold(T::infinity(), |m, s| m.min(s.min_value()))
    }

    /// CSV export: one row per trace time with the recorded norms.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,l2_u,linf_u,l2_f_u,l2_lap_u")?;
        for (t, r) in self.times.iter().zip(&self.records) {
            writeln!(
                w,
                "{},{},{},{},{}",
                t, r.l2_u, r.linf_u, r.l2_f_u, r.l2_lap_u
            )?;
        }
        Ok(())
    }
}

/// How [`solve_with_mode`] advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepperMode {
    /// Implicit diffusion and reaction coefficient, explicit `f`.
    Imex,
    /// Diffusion disabled: per-node exponential update, exact for the zero
    /// and linear reaction kinds. Diagnostic tool for identities that hold
    /// without the Laplacian.
    ReactionOnly,
}

/// Accepts `dt` iff `dt * max(L, sup of positive control parts) <= 1/2`:
/// the margin that keeps the implicit matrix an M-matrix (discrete
/// nonnegativity), the linear solves well conditioned, and the explicit
/// reaction term contractive.
pub fn stability_guard<T: Real>(
    dt: T,
    schedule: &ControlSchedule<T>,
    f: &Nonlinearity<T>,
) -> Result<()> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::NonpositiveDt(to_f64(dt)));
    }
    let limit = real::<T>(0.5);
    let from_l = dt * f.lipschitz();
    let from_v = dt * schedule.max_linf_positive_part();
    if from_l > limit || from_v > limit {
        let (product, origin) = if from_l >= from_v {
            (from_l, "lipschitz constant")
        } else {
            (from_v, "positive control part")
        };
        return Err(Error::StabilityViolated {
            product: to_f64(product),
            limit: to_f64(limit),
            origin: origin.into(),
        });
    }
    Ok(())
}

/// One implicit-explicit step. For repeated stepping under a static
/// control, [`solve`] amortizes the matrix factorization; this entry point
/// rebuilds it.
pub fn step_imex<T: Real>(
    state: &ScalarField<T>,
    v_field: &ScalarField<T>,
    dt: T,
    f: &Nonlinearity<T>,
) -> Result<ScalarField<T>> {
    if state.grid() != v_field.grid() {
        return Err(Error::GridMismatch);
    }
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::NonpositiveDt(to_f64(dt)));
    }
    let stepper = ImplicitStep::new(state.grid(), v_field, dt);
    let mut rhs: Vec<T> = state
        .values()
        .iter()
        .map(|&u| u + dt * f.eval(u))
        .collect();
    stepper.advance(state.values(), &mut rhs)?;
    ScalarField::from_values(*state.grid(), rhs)
}

/// Factored implicit operator `(I - dt*Lap - dt*diag(v))` for one schedule
/// step.
enum ImplicitStep<T> {
    Direct(TridiagFactor<T>),
    Iterative {
        diag: Vec<T>,
        inv_hx2: T,
        inv_hy2: T,
        n: usize,
        dt: T,
    },
}

impl<T: Real> ImplicitStep<T> {
    fn new(grid: &Grid<T>, v: &ScalarField<T>, dt: T) -> Self {
        let two = real::<T>(2.0);
        if grid.dim() == 1 {
            let inv_h2 = T::one() / (grid.spacing(0) * grid.spacing(0));
            let diag: Vec<T> = v
                .values()
                .iter()
                .map(|&vi| T::one() + two * dt * inv_h2 - dt * vi)
                .collect();
            ImplicitStep::Direct(TridiagFactor::new(&diag, -dt * inv_h2))
        } else {
            let inv_hx2 = T::one() / (grid.spacing(0) * grid.spacing(0));
            let inv_hy2 = T::one() / (grid.spacing(1) * grid.spacing(1));
            let diag: Vec<T> = v
                .values()
                .iter()
                .map(|&vi| T::one() + two * dt * (inv_hx2 + inv_hy2) - dt * vi)
                .collect();
            ImplicitStep::Iterative {
                diag,
                inv_hx2,
                inv_hy2,
                n: grid.n(),
                dt,
            }
        }
    }

    /// Solves the implicit system: `rhs` holds the right-hand side on
    /// entry and the new state on exit. `guess` warm-starts the iterative
    /// branch.
    fn advance(&self, guess: &[T], rhs: &mut [T]) -> Result<()> {
        match self {
            ImplicitStep::Direct(factor) => {
                factor.solve_in_place(rhs);
                Ok(())
            }
            ImplicitStep::Iterative {
                diag,
                inv_hx2,
                inv_hy2,
                n,
                dt,
            } => {
                let (n, dt) = (*n, *dt);
                let (ax, ay) = (dt * *inv_hx2, dt * *inv_hy2);
                let apply = |x: &[T], out: &mut [T]| {
                    for iy in 0..n {
                        for ix in 0..n {
                            let idx = iy * n + ix;
                            let mut acc = diag[idx] * x[idx];
                            if ix > 0 {
                                acc -= ax * x[idx - 1];
                            }
                            if ix + 1 < n {
                                acc -= ax * x[idx + 1];
                            }
                            if iy > 0 {
                                acc -= ay * x[idx - n];
                            }
                            if iy + 1 < n {
                                acc -= ay * x[idx + n];
                            }
                            out[idx] = acc;
                        }
                    }
                };
                let b = rhs.to_vec();
                rhs.copy_from_slice(guess);
                cg_standard(apply, &b, rhs)?;
                Ok(())
            }
        }
    }
}

/// Integrates the problem under the schedule with time step `dt`,
/// recording every intermediate state. Breakpoints and the horizon must be
/// integer multiples of `dt` (callers snap them; the solver refuses to
/// interpolate). The control is sampled at the right endpoint of each time
/// step, matching the half-open interval convention.
pub fn solve<T: Real>(
    problem: &ProblemSpec<T>,
    schedule: &ControlSchedule<T>,
    dt: T,
) -> Result<SolveTrace<T>> {
    solve_with_mode(problem, schedule, dt, StepperMode::Imex)
}

pub fn solve_with_mode<T: Real>(
    problem: &ProblemSpec<T>,
    schedule: &ControlSchedule<T>,
    dt: T,
    mode: StepperMode,
) -> Result<SolveTrace<T>> {
    if schedule.grid() != problem.grid() {
        return Err(Error::GridMismatch);
    }
    let horizon = problem.horizon();
    let scale = horizon.max(T::one());
    let tol = real::<T>(1e-9) * scale;
    if (schedule.horizon() - horizon).abs() > tol {
        return Err(Error::HorizonMismatch {
            schedule: to_f64(schedule.horizon()),
            problem: to_f64(horizon),
        });
    }
    stability_guard(dt, schedule, problem.nonlinearity())?;

    let steps_of = |t: T| -> usize {
        let raw = to_f64(t / dt);
        raw.round().max(0.0) as usize
    };
    let total = steps_of(horizon);
    if total == 0 || (real::<T>(total as f64) * dt - horizon).abs() > tol {
        return Err(Error::HorizonMisaligned {
            horizon: to_f64(horizon),
            dt: to_f64(dt),
        });
    }
    let mut step_marks = Vec::with_capacity(schedule.num_steps() + 1);
    step_marks.push(0usize);
    for (k, &b) in schedule.breakpoints().iter().enumerate().skip(1) {
        let s = steps_of(b);
        if (real::<T>(s as f64) * dt - b).abs() > tol || s <= step_marks[k - 1] {
            return Err(Error::BreakpointMisaligned {
                index: k,
                t: to_f64(b),
                dt: to_f64(dt),
            });
        }
        step_marks.push(s);
    }

    let f = *problem.nonlinearity();
    let mut u = problem.initial_state().clone();
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    let mut records = Vec::with_capacity(total + 1);
    times.push(T::zero());
    records.push(record_of(&u, &f));
    states.push(u.clone());

    for (k, v) in schedule.steps().iter().enumerate() {
        let imex = match mode {
            StepperMode::Imex => Some(ImplicitStep::new(problem.grid(), v, dt)),
            StepperMode::ReactionOnly => None,
        };
        for j in step_marks[k] + 1..=step_marks[k + 1] {
            match &imex {
                Some(op) => {
                    let mut rhs: Vec<T> = u
                        .values()
                        .iter()
                        .map(|&w| w + dt * f.eval(w))
                        .collect();
                    op.advance(u.values(), &mut rhs)?;
                    u = ScalarField::from_values(*problem.grid(), rhs)?;
                }
                None => {
                    let next: Vec<T> = match f.exact_reaction_slope() {
                        Some(slope) => u
                            .values()
                            .iter()
                            .zip(v.values())
                            .map(|(&w, &vi)| w * ((vi + slope) * dt).exp())
                            .collect(),
                        None => u
                            .values()
                            .iter()
                            .zip(v.values())
                            .map(|(&w, &vi)| (w + dt * f.eval(w)) * (vi * dt).exp())
                            .collect(),
                    };
                    u = ScalarField::from_values(*problem.grid(), next)?;
                }
            }
            times.push(real::<T>(j as f64) * dt);
            records.push(record_of(&u, &f));
            states.push(u.clone());
        }
    }
    Ok(SolveTrace {
        times,
        states,
        records,
        dt,
        f,
    })
}

/// Same march as `solve`, keeping only the terminal state. For long runs
/// (millions of steps) storing the whole trace is not an option.
pub fn solve_final<T: Real>(
    problem: &ProblemSpec<T>,
    schedule: &ControlSchedule<T>,
    dt: T,
) -> Result<ScalarField<T>> {
    if schedule.grid() != problem.grid() {
        return Err(Error::GridMismatch);
    }
    let horizon = problem.horizon();
    let scale = horizon.max(T::one());
    let tol = real::<T>(1e-9) * scale;
    if (schedule.horizon() - horizon).abs() > tol {
        return Err(Error::HorizonMismatch {
            schedule: to_f64(schedule.horizon()),
            problem: to_f64(horizon),
        });
    }
    stability_guard(dt, schedule, problem.nonlinearity())?;

    let steps_of = |t: T| -> usize {
        let raw = to_f64(t / dt);
        raw.round().max(0.0) as usize
    };
    let total = steps_of(horizon);
    if total == 0 || (real::<T>(total as f64) * dt - horizon).abs() > tol {
        return Err(Error::HorizonMisaligned {
            horizon: to_f64(horizon),
            dt: to_f64(dt),
        });
    }
    let mut step_marks = Vec::with_capacity(schedule.num_steps() + 1);
    step_marks.push(0usize);
    for (k, &b) in schedule.breakpoints().iter().enumerate().skip(1) {
        let s = steps_of(b);
        if (real::<T>(s as f64) * dt - b).abs() > tol || s <= step_marks[k - 1] {
            return Err(Error::BreakpointMisaligned {
                index: k,
                t: to_f64(b),
                dt: to_f64(dt),
            });
        }
        step_marks.push(s);
    }

    let f = *problem.nonlinearity();
    let mut u: Vec<T> = problem.initial_state().values().to_vec();
    let mut rhs: Vec<T> = vec![T::zero(); u.len()];
    for (k, v) in schedule.steps().iter().enumerate() {
        let op = ImplicitStep::new(problem.grid(), v, dt);
        for _ in step_marks[k] + 1..=step_marks[k + 1] {
            for (r, &w) in rhs.iter_mut().zip(u.iter()) {
                *r = w + dt * f.eval(w);
            }
            op.advance(&u, &mut rhs)?;
            std::mem::swap(&mut u, &mut rhs);
        }
    }
    ScalarField::from_values(*problem.grid(), u)
}
