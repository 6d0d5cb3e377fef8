//! Error type shared by every module of the crate.

/// Everything that can go wrong when building grids, schedules, solving, or
/// synthesizing controls. Payloads are `f64` so the enum stays non-generic.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid dimension must be 1 or 2, got {0}")]
    InvalidDim(usize),
    #[error("need at least 3 interior points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("axis length must be positive and finite, got {0}")]
    NonpositiveLength(f64),
    #[error("expected {expected} axis lengths, got {got}")]
    LengthCountMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value at node {index}")]
    NonfiniteValue { index: usize },
    #[error("expected {expected} node values, got {got}")]
    ValueCountMismatch { expected: usize, got: usize },
    #[error("cutoff width {eta} outside (0, {max})")]
    EtaOutOfRange { eta: f64, max: f64 },
    #[error("mollifier width must be nonnegative, got {0}")]
    NegativeSigma(f64),
    #[error("invalid Lipschitz data: {reason}")]
    InvalidLipschitz { reason: String },
    #[error("schedule needs at least one step")]
    EmptySchedule,
    #[error("schedule must start at t = 0, got {0}")]
    ScheduleStartNotZero(f64),
    #[error("schedule breakpoints not strictly increasing at index {index}")]
    BreakpointsNotIncreasing { index: usize },
    #[error("schedule has {breakpoints} breakpoints but {steps} step fields")]
    StepCountMismatch { breakpoints: usize, steps: usize },
    #[error("time {t} outside the schedule horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("schedule horizon {schedule} does not match problem horizon {problem}")]
    HorizonMismatch { schedule: f64, problem: f64 },
    #[error("time step must be positive, got {0}")]
    NonpositiveDt(f64),
    #[error("horizon must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error("explicit-step stability violated: dt * {origin} = {product} > {limit}")]
    StabilityViolated {
        product: f64,
        limit: f64,
        origin: String,
    },
    #[error("breakpoint {index} at t = {t} is not a multiple of dt = {dt}")]
    BreakpointMisaligned { index: usize, t: f64, dt: f64 },
    #[error("horizon {horizon} is not a multiple of dt = {dt}")]
    HorizonMisaligned { horizon: f64, dt: f64 },
    #[error("linear solve did not reach tolerance, relative residual {residual}")]
    LinearSolveDiverged { residual: f64 },
    #[error("mode index {k} outside 1..={max}")]
    ModeOutOfRange { k: usize, max: usize },
    #[error("operation defined on 1d grids only")]
    OneDimensionalOnly,
    #[error("trace horizon {trace} does not match expected {expected}")]
    TraceHorizonMismatch { trace: f64, expected: f64 },
    #[error("amplification data inconsistent: exp(v1*t1) = {exp_v1_t1} but m_eps = {m_eps}")]
    InconsistentAmplification { exp_v1_t1: f64, m_eps: f64 },
    #[error("traces cannot be compared: {reason}")]
    TraceMismatch { reason: String },
    #[error("state ratio undefined: initial state vanishes at node {index}")]
    RatioUndefined { index: usize },
    #[error("state ratio condition violated: max ratio {max_ratio} exceeds 1")]
    RatioConditionViolated { max_ratio: f64 },
    #[error("state must be nonnegative, found {value} at node {index}")]
    NegativeState { index: usize, value: f64 },
    #[error("initial state vanishes identically")]
    VanishingInitialState,
    #[error("tolerance must be positive, got {0}")]
    NonpositiveEps(f64),
    #[error("amplification factor must exceed 1, got {0}")]
    AmplificationNotAboveOne(f64),
    #[error("blended target exceeds amplified state at node {index}")]
    CutoffRatioExceeded { index: usize },
    #[error(
        "approximant budgets not met after {iterations} halvings \
         (target gap {target_gap}, initial gap {initial_gap})"
    )]
    ApproximantBudgetNotMet {
        iterations: usize,
        target_gap: f64,
        initial_gap: f64,
    },
    #[error("amplification interval search failed: best error {best_error} above target {target}")]
    PhaseOneSearchFailed { best_error: f64, target: f64 },
    #[error("horizon {horizon} leaves no room after amplification interval {t1}")]
    HorizonTooShort { horizon: f64, t1: f64 },
    #[error("sample list is empty")]
    EmptySamples,
    #[error("refinement needs at least one interval")]
    ZeroIntervals,
    #[error("csv parse failure: {reason}")]
    CsvFormat { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
