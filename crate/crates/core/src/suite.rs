//! A canned battery of verification runs: randomized problems whose
//! simulated traces must satisfy every estimate checker, plus deliberately
//! corrupted traces that the checkers must reject. Exists so one call can
//! answer "do the verifiers hold on real output and catch fake output".

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{solve, ControlSchedule, Nonlinearity, ProblemSpec, SolveTrace};
use crate::error::Result;
use crate::estimates::{
    verify_contraction, verify_nonneg, verify_decay_bounds, verify_growth_bound, BoundReport,
};
use crate::field::{Grid, ScalarField};
use crate::scalar::{real, to_f64, Real};

/// One verification case: a randomized problem, its static control, and
/// the time step used to march it.
#[derive(Debug, Clone)]
pub struct SuiteCase<T: Real> {
    pub name: String,
    pub problem: ProblemSpec<T>,
    pub schedule: ControlSchedule<T>,
    pub dt: T,
}

/// All checker verdicts for one case.
#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub nonlinearity: String,
    pub lipschitz: f64,
    pub reports: Vec<BoundReport>,
    pub all_pass: bool,
}

/// Verdicts for the whole battery.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub seed: u64,
    pub cases: Vec<CaseOutcome>,
    pub all_pass: bool,
}

fn random_mix<T: Real>(grid: Grid<T>, rng: &mut ChaCha8Rng, modes: usize) -> ScalarField<T> {
    let mut field = ScalarField::zeros(grid);
    let pi = T::PI();
    let len = grid.length(0);
    for k in 1..=modes {
        let amp = real::<T>(rng.gen_range(0.2..1.0) / k as f64);
        let kk = real::<T>(k as f64);
        let mode = if grid.dim() == 1 {
            ScalarField::sample(grid, move |x, _| amp * (kk * pi * x / len).sin())
        } else {
            let ly = grid.length(1);
            ScalarField::sample(grid, move |x, y| {
                amp * (kk * pi * x / len).sin() * (pi * y / ly).sin()
            })
        };
        field = field.add(&mode);
    }
    field
}

/// Nonpositive control with sup-norm at most `max_linf`: a random mode mix
/// shifted down by its maximum.
fn random_nonpositive_control<T: Real>(
    grid: Grid<T>,
    rng: &mut ChaCha8Rng,
    max_linf: f64,
) -> ScalarField<T> {
    let raw = random_mix(grid, rng, 4);
    let top = raw.max_value();
    let shifted = raw.map(|v| v - top);
    let linf = shifted.linf_norm();
    if linf == T::zero() {
        return shifted;
    }
    let scale = real::<T>(rng.gen_range(0.3..1.0) * max_linf) / linf;
    shifted.scaled(scale.min(T::one()))
}

fn nonlinearity_for<T: Real>(index: usize, lipschitz: T) -> Result<Nonlinearity<T>> {
    match index % 4 {
        0 => Ok(Nonlinearity::zero()),
        1 => Nonlinearity::linear(-lipschitz, lipschitz),
        2 => Nonlinearity::scaled_sine(lipschitz),
        _ => Nonlinearity::saturating(lipschitz),
    }
}

/// Builds the standard ten-case battery. Deterministic in `seed`.
pub fn standard_suite<T: Real>(seed: u64) -> Result<Vec<SuiteCase<T>>> {
    let mut cases = Vec::with_capacity(10);
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        let grid = if i == 9 {
            Grid::new_2d(15, [real::<T>(1.0), real::<T>(1.0)])?
        } else {
            Grid::new_1d(63, T::one())?
        };
        let u0 = random_mix(grid, &mut rng, 5).map(|v| v.abs());
        let lipschitz = real::<T>(rng.gen_range(0.05..0.3));
        let f = nonlinearity_for(i as usize, lipschitz)?;
        let horizon = real::<T>(0.1);
        let v = random_nonpositive_control(grid, &mut rng, 5.0);
        let schedule = ControlSchedule::single(v, horizon)?;
        let problem = ProblemSpec::new(f, u0, horizon)?;
        let dt = horizon / real::<T>(256.0);
        cases.push(SuiteCase {
            name: format!("case-{i:02}"),
            problem,
            schedule,
            dt,
        });
    }
    Ok(cases)
}

/// Runs every checker against one case: the a-priori envelope, the growth
/// envelope, the two-trajectory contraction, and nonnegativity.
pub fn run_case<T: Real>(case: &SuiteCase<T>) -> Result<CaseOutcome> {
    let f = case.problem.nonlinearity();
    let lipschitz = f.lipschitz();
    let horizon = case.problem.horizon();
    let trace = solve(&case.problem, &case.schedule, case.dt)?;

    let mut reports = Vec::new();
    let v_field = case.schedule.steps()[0].clone();
    reports.extend(verify_decay_bounds(&trace, lipschitz, &v_field, horizon)?);
    reports.push(verify_growth_bound(&trace, lipschitz, &case.schedule));
    reports.push(verify_nonneg(&trace));

    let bumped = case
        .problem
        .initial_state()
        .map(|u| u * real::<T>(1.02) + real::<T>(0.01) * u * u);
    let problem_b = case.problem.with_initial_state(bumped)?;
    let trace_b = solve(&problem_b, &case.schedule, case.dt)?;
    reports.push(verify_contraction(&trace, &trace_b, lipschitz, &case.schedule)?);

    let all_pass = reports.iter().all(|r| r.pass);
    Ok(CaseOutcome {
        name: case.name.clone(),
        nonlinearity: f.kind_name().into(),
        lipschitz: to_f64(lipschitz),
        reports,
        all_pass,
    })
}

/// Builds and runs the whole battery.
pub fn run_standard_suite<T: Real>(seed: u64) -> Result<SuiteSummary> {
    let cases = standard_suite::<T>(seed)?;
    let mut outcomes = Vec::with_capacity(cases.len());
    for case in &cases {
        outcomes.push(run_case(case)?);
    }
    let all_pass = outcomes.iter().all(|c| c.all_pass);
    Ok(SuiteSummary {
        seed,
        cases: outcomes,
        all_pass,
    })
}

/// Corruption fixture: rescales every state strictly after time zero.
/// Growth and envelope checkers must reject the result for factors well
/// above one.
pub fn scaled_tail_trace<T: Real>(trace: &SolveTrace<T>, factor: T) -> Result<SolveTrace<T>> {
    let states: Vec<ScalarField<T>> = trace
        .states()
        .iter()
        .enumerate()
        .map(|(j, s)| if j == 0 { s.clone() } else { s.scaled(factor) })
        .collect();
    SolveTrace::from_parts(
        trace.times().to_vec(),
        states,
        trace.dt(),
        *trace.nonlinearity(),
    )
}

/// Corruption fixture: forces one interior node negative at the midpoint
/// in time. The nonnegativity checker must reject the result.
pub fn negative_dip_trace<T: Real>(trace: &SolveTrace<T>, depth: T) -> Result<SolveTrace<T>> {
    let mid = trace.len() / 2;
    let states: Vec<ScalarField<T>> = trace
        .states()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if j == mid {
                let mut vals = s.values().to_vec();
                let node = vals.len() / 2;
                vals[node] = -depth.abs();
                ScalarField::from_values(*s.grid(), vals).unwrap()
            } else {
                s.clone()
            }
        })
        .collect();
    SolveTrace::from_parts(
        trace.times().to_vec(),
        states,
        trace.dt(),
        *trace.nonlinearity(),
    )
}
