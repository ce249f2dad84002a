//! First-order IMEX time stepping: donor-cell taxis and logistic reaction are
//! explicit, diffusion and signal absorption implicit.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{InitialData, ModelParameters, ScalarField, SignalMode, SimState, ValidationError};
use crate::operators::{taxis_velocities, transport_time_scale, upwind_fluxes, FaceFluxSet, OperatorError};
use crate::solver::{solve_helmholtz_from, HelmholtzProblem, SolverError, SolverSettings};

/// Relative floor below which `v` is treated as numerically singular.
pub const SIGNAL_GUARD: f64 = 1e-12;
/// Negative `u` values down to this fraction of `max u` are solver noise.
pub const POSITIVITY_SLACK: f64 = 1e-12;
/// Default blow-up trigger relative to the initial maximum of `u`.
pub const DEFAULT_BLOWUP_FACTOR: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("step control `{field}` invalid: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the explicit stability limits actually used, in (0, 1].
    pub cfl_safety: f64,
    /// Sup-norm of `u` that counts as blow-up.
    pub blowup_threshold: f64,
    pub t_end: f64,
}

impl StepControl {
    pub fn validate(self) -> Result<Self, ControlError> {
        let invalid = |field, message: String| Err(ControlError::Invalid { field, message });
        for (field, value) in [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("blowup_threshold", self.blowup_threshold),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return invalid(field, format!("must be finite and > 0, got {value}"));
            }
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return invalid("t_end", format!("must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return invalid("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return invalid(
                "dt_init",
                format!(
                    "need dt_min <= dt_init <= dt_max, got {} / {} / {}",
                    self.dt_min, self.dt_init, self.dt_max
                ),
            );
        }
        Ok(self)
    }

    /// Fixed step size `dt` with no CFL headroom, ending at `t_end`.
    pub fn fixed(dt: f64, t_end: f64, blowup_threshold: f64) -> Self {
        Self {
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            cfl_safety: 1.0,
            blowup_threshold,
            t_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Advanced,
    BlowupDetected,
    SolverFailure,
    PositivityFailure,
    SingularSignal,
}

impl StepStatus {
    /// Process exit code reported by the command-line runner.
    pub fn exit_code(self) -> i32 {
        match self {
            StepStatus::Advanced => 0,
            StepStatus::BlowupDetected => 2,
            StepStatus::SolverFailure | StepStatus::PositivityFailure => 3,
            StepStatus::SingularSignal => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// The new state when advanced or on blow-up, otherwise the input state.
    pub state: SimState,
    pub status: StepStatus,
    pub detail: Option<String>,
}

enum Failure {
    Blowup(Box<SimState>, String),
    Positivity(String),
    Solver(SolverError),
    Singular(OperatorError),
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        Failure::Solver(e)
    }
}

impl From<OperatorError> for Failure {
    fn from(e: OperatorError) -> Self {
        Failure::Singular(e)
    }
}

/// Stepping context for one run.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: ModelParameters,
    control: StepControl,
    solver: SolverSettings,
    signal_floor: f64,
}

impl Integrator {
    /// `reference_min_v` is the minimum of the initial signal; the singular
    /// signal guard sits at [`SIGNAL_GUARD`] times this value.
    pub fn new(
        params: ModelParameters,
        control: StepControl,
        solver: SolverSettings,
        reference_min_v: f64,
    ) -> Result<Self, ControlError> {
        params.check_simulable()?;
        let control = control.validate()?;
        if !(solver.tol > 0.0) {
            return Err(ControlError::Invalid {
                field: "solver.tol",
                message: format!("must be > 0, got {}", solver.tol),
            });
        }
        Ok(Self {
            params,
            control,
            solver,
            signal_floor: SIGNAL_GUARD * reference_min_v,
        })
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.solver
    }

    pub fn signal_floor(&self) -> f64 {
        self.signal_floor
    }

    /// Step size from the CFL and reaction limits, clipped to `[dt_min, dt_max]`.
    pub fn choose_dt(&self, s: &SimState, velocities: &FaceFluxSet) -> f64 {
        let c = &self.control;
        let cap = if s.step_count == 0 { c.dt_init } else { c.dt_max };
        let transport = c.cfl_safety * transport_time_scale(s.grid(), velocities);
        let rate = self.params.r + 2.0 * self.params.mu * s.u.max();
        let reaction = if rate > 0.0 {
            c.cfl_safety / rate
        } else {
            f64::INFINITY
        };
        cap.min(transport).min(reaction).clamp(c.dt_min, c.dt_max)
    }

    /// One step towards `t_end`.
    pub fn step(&self, s: &SimState) -> StepOutcome {
        self.step_until(s, self.control.t_end)
    }

    /// One step that does not overshoot `t_limit`.
    pub fn step_until(&self, s: &SimState, t_limit: f64) -> StepOutcome {
        let fail = |status, detail: String| StepOutcome {
            state: s.clone(),
            status,
            detail: Some(detail),
        };
        let velocities = match taxis_velocities(&s.v, &self.params, self.signal_floor) {
            Ok(w) => w,
            Err(e) => return fail(StepStatus::SingularSignal, e.to_string()),
        };
        let mut dt = self.choose_dt(s, &velocities);
        let mut land = false;
        // Land on the limit instead of leaving a rounding-sized sliver.
        if s.t + dt * (1.0 + 1e-6) >= t_limit {
            dt = t_limit - s.t;
            land = true;
        }
        if !(dt > 0.0) {
            return fail(
                StepStatus::SolverFailure,
                format!("no time left to step: t = {}, limit = {t_limit}", s.t),
            );
        }

        let mut result = self.attempt(s, dt, land.then_some(t_limit), &velocities);
        if matches!(result, Err(Failure::Positivity(_)) | Err(Failure::Solver(_))) {
            let half = 0.5 * dt;
            if half >= self.control.dt_min {
                result = self.attempt(s, half, None, &velocities);
            }
        }
        match result {
            Ok(state) => StepOutcome {
                state,
                status: StepStatus::Advanced,
                detail: None,
            },
            Err(Failure::Blowup(state, msg)) => StepOutcome {
                state: *state,
                status: StepStatus::BlowupDetected,
                detail: Some(msg),
            },
            Err(Failure::Positivity(msg)) => fail(StepStatus::PositivityFailure, msg),
            Err(Failure::Solver(e)) => fail(StepStatus::SolverFailure, e.to_string()),
            Err(Failure::Singular(e)) => fail(StepStatus::SingularSignal, e.to_string()),
        }
    }

    fn attempt(
        &self,
        s: &SimState,
        dt: f64,
        landing: Option<f64>,
        velocities: &FaceFluxSet,
    ) -> Result<SimState, Failure> {
        let p = &self.params;
        let grid = *s.grid();
        let n = grid.len();
        let inv_dt = 1.0 / dt;

        // Explicit part: u + dt (−∇·F + r u − μ u²), scaled by 1/dt for the solve.
        let fluxes = upwind_fluxes(&s.u, velocities);
        let mut rhs = ScalarField::zeros(grid);
        fluxes.divergence_into(&grid, rhs.values_mut());
        {
            let u = s.u.values();
            let out = rhs.values_mut();
            for i in 0..n {
                let reaction = p.r * u[i] - p.mu * u[i] * u[i];
                out[i] = u[i] * inv_dt - out[i] + reaction;
            }
        }
        let u_sol = solve_helmholtz_from(&HelmholtzProblem::new(inv_dt, &rhs, &self.solver), Some(&s.u))?;
        let mut iterations = u_sol.iterations;
        let mut u_new = u_sol.x;

        let t_new = landing.unwrap_or(s.t + dt);
        let sup = u_new.max();
        if !u_new.is_finite() || sup > self.control.blowup_threshold {
            let state = SimState {
                u: u_new,
                v: s.v.clone(),
                t: t_new,
                last_dt: dt,
                step_count: s.step_count + 1,
                last_iterations: iterations,
            };
            return Err(Failure::Blowup(
                Box::new(state),
                format!(
                    "max u = {sup:e} exceeds threshold {:e} at t = {t_new}",
                    self.control.blowup_threshold
                ),
            ));
        }
        let inf = u_new.min();
        if inf < -POSITIVITY_SLACK * sup {
            return Err(Failure::Positivity(format!(
                "min u = {inf:e} against max u = {sup:e} with dt = {dt:e}"
            )));
        }
        for x in u_new.values_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }

        let v_sol = match p.kappa {
            SignalMode::FullyParabolic => {
                let rhs = s.v.zip_map(&s.u, |v, u| v * inv_dt + p.beta * u);
                solve_helmholtz_from(
                    &HelmholtzProblem::new(inv_dt + p.alpha, &rhs, &self.solver),
                    Some(&s.v),
                )?
            }
            SignalMode::ParabolicElliptic => {
                let rhs = u_new.map(|u| p.beta * u);
                solve_helmholtz_from(&HelmholtzProblem::new(p.alpha, &rhs, &self.solver), Some(&s.v))?
            }
        };
        iterations += v_sol.iterations;
        let v_new = v_sol.x;
        crate::operators::check_signal(&v_new, self.signal_floor)?;

        Ok(SimState {
            u: u_new,
            v: v_new,
            t: t_new,
            last_dt: dt,
            step_count: s.step_count + 1,
            last_iterations: iterations,
        })
    }
}

/// Single step with the default solver, guarding `v` relative to its own
/// current minimum.
pub fn step(s: &SimState, params: &ModelParameters, control: &StepControl) -> Result<StepOutcome, ControlError> {
    let integrator = Integrator::new(*params, *control, SolverSettings::default(), s.v.min())?;
    Ok(integrator.step(s))
}

/// Solves `(−Δ + α) v = β u` for the parabolic-elliptic signal.
pub fn elliptic_signal(
    u: &ScalarField,
    params: &ModelParameters,
    solver: &SolverSettings,
) -> Result<ScalarField, SolverError> {
    let rhs = u.map(|x| params.beta * x);
    Ok(solve_helmholtz_from(&HelmholtzProblem::new(params.alpha, &rhs, solver), None)?.x)
}

/// Receives the states produced by [`run`].
pub trait Observer {
    /// Called after every accepted step.
    fn on_step(&mut self, _before: &SimState, _after: &SimState) {}
    /// Called at `t = 0`, at every multiple of the sample interval, and at the
    /// final state.
    fn on_sample(&mut self, state: &SimState);
}

impl<F: FnMut(&SimState)> Observer for F {
    fn on_sample(&mut self, state: &SimState) {
        self(state)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: StepOutcome,
    pub wall_time: Duration,
    pub steps: u64,
    /// Running maximum of `‖u‖∞` over all accepted states.
    pub max_sup_u: f64,
    pub samples: usize,
}

impl RunSummary {
    pub fn status(&self) -> StepStatus {
        self.outcome.status
    }

    pub fn final_state(&self) -> &SimState {
        &self.outcome.state
    }
}

/// Prepares the initial state. For the parabolic-elliptic system the signal
/// is not an independent unknown, so `v0` is replaced by the elliptic
/// solution for `u0`.
pub fn initial_state(
    init: &InitialData,
    params: &ModelParameters,
    control: &StepControl,
    solver: &SolverSettings,
) -> Result<SimState, SolverError> {
    let mut state = SimState::initial(init, control.dt_init);
    if params.kappa == SignalMode::ParabolicElliptic {
        state.v = elliptic_signal(&state.u, params, solver)?;
    }
    Ok(state)
}

/// Runs from `t = 0` to `control.t_end`.
pub fn run(
    init: &InitialData,
    params: &ModelParameters,
    control: &StepControl,
    solver: &SolverSettings,
    sample_interval: f64,
    observer: &mut dyn Observer,
) -> Result<RunSummary, ControlError> {
    let start = Instant::now();
    let grid = *init.u0.grid();
    let init = init.clone().validate(&grid)?;
    params.check_simulable()?;
    let state = match initial_state(&init, params, control, solver) {
        Ok(s) => s,
        Err(e) => {
            let state = SimState::initial(&init, control.dt_init);
            observer.on_sample(&state);
            return Ok(RunSummary {
                max_sup_u: state.u.max(),
                outcome: StepOutcome {
                    state,
                    status: StepStatus::SolverFailure,
                    detail: Some(e.to_string()),
                },
                wall_time: start.elapsed(),
                steps: 0,
                samples: 1,
            });
        }
    };
    let reference = state.v.min();
    let integrator = Integrator::new(*params, *control, *solver, reference)?;
    Ok(run_from(&integrator, state, sample_interval, observer, start))
}

/// Continues from an arbitrary state (restart). Samples are taken on the
/// global grid of multiples of `sample_interval`.
pub fn run_from(
    integrator: &Integrator,
    mut state: SimState,
    sample_interval: f64,
    observer: &mut dyn Observer,
    start: Instant,
) -> RunSummary {
    let t_end = integrator.control().t_end;
    let interval = if sample_interval > 0.0 && sample_interval.is_finite() {
        sample_interval
    } else {
        f64::INFINITY
    };
    let mut max_sup_u = state.u.max();
    let mut samples = 0usize;
    let mut steps = 0u64;
    let mut last_sample_t = f64::NAN;
    let mut sample = |s: &SimState, obs: &mut dyn Observer, last: &mut f64| {
        obs.on_sample(s);
        *last = s.t;
        samples += 1;
    };

    sample(&state, observer, &mut last_sample_t);

    let finish = |outcome: StepOutcome, steps, max_sup_u, samples| RunSummary {
        outcome,
        wall_time: start.elapsed(),
        steps,
        max_sup_u,
        samples,
    };

    if max_sup_u > integrator.control().blowup_threshold || !state.u.is_finite() {
        let detail = format!(
            "initial max u = {max_sup_u:e} exceeds threshold {:e}",
            integrator.control().blowup_threshold
        );
        return finish(
            StepOutcome {
                state,
                status: StepStatus::BlowupDetected,
                detail: Some(detail),
            },
            0,
            max_sup_u,
            samples,
        );
    }

    // Index of the next sample time on the global grid k·interval.
    let mut next_k = if interval.is_finite() {
        (state.t / interval).floor() as u64 + 1
    } else {
        u64::MAX
    };

    while state.t < t_end {
        let next_sample = if interval.is_finite() {
            next_k as f64 * interval
        } else {
            f64::INFINITY
        };
        let limit = t_end.min(next_sample);
        let outcome = integrator.step_until(&state, limit);
        match outcome.status {
            StepStatus::Advanced => {
                steps += 1;
                observer.on_step(&state, &outcome.state);
                state = outcome.state;
                max_sup_u = max_sup_u.max(state.u.max());
                if state.t >= next_sample {
                    sample(&state, observer, &mut last_sample_t);
                    next_k += 1;
                }
            }
            StepStatus::BlowupDetected => {
                steps += 1;
                let s = outcome.state.clone();
                max_sup_u = max_sup_u.max(s.u.max());
                if s.u.is_finite() {
                    sample(&s, observer, &mut last_sample_t);
                }
                return finish(outcome, steps, max_sup_u, samples);
            }
            _ => {
                if last_sample_t != state.t {
                    sample(&state, observer, &mut last_sample_t);
                }
                return finish(outcome, steps, max_sup_u, samples);
            }
        }
    }
    if last_sample_t != state.t {
        sample(&state, observer, &mut last_sample_t);
    }
    finish(
        StepOutcome {
            state,
            status: StepStatus::Advanced,
            detail: None,
        },
        steps,
        max_sup_u,
        samples,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    fn logistic(r: f64, mu: f64) -> ModelParameters {
        ModelParameters {
            chi: 1.0,
            r,
            mu,
            k: 0.5,
            alpha: 1.0,
            beta: 1.0,
            kappa: SignalMode::FullyParabolic,
        }
    }

    fn state(grid: Grid, u: f64, v: f64) -> SimState {
        SimState::initial(&InitialData::constant(grid, u, v), 1e-3)
    }

    #[test]
    fn control_validation() {
        let ok = StepControl::fixed(1e-3, 1.0, 10.0);
        assert!(ok.validate().is_ok());
        assert!(StepControl { dt_min: 1e-2, ..ok }.validate().is_err());
        assert!(StepControl { cfl_safety: 1.5, ..ok }.validate().is_err());
        assert!(StepControl { t_end: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn homogeneous_step_is_explicit_logistic_update() {
        let g = Grid::unit_square(8).unwrap();
        let p = logistic(1.0, 1.0);
        let dt = 1e-2;
        let c = StepControl::fixed(dt, 1.0, 1e6);
        let s = state(g, 2.0, 0.7);
        let out = step(&s, &p, &c).unwrap();
        assert_eq!(out.status, StepStatus::Advanced);
        let expected = 2.0 + dt * (2.0 - 4.0);
        for u in out.state.u.values() {
            assert!((u - expected).abs() < 1e-12, "{u} vs {expected}");
        }
        // v_new = (v/dt + β u_old) / (1/dt + α)
        let v_expected = (0.7 / dt + 2.0) / (1.0 / dt + 1.0);
        for v in out.state.v.values() {
            assert!((v - v_expected).abs() < 1e-12);
        }
        assert_eq!(out.state.step_count, 1);
        assert!((out.state.t - dt).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = Grid::unit_square(8).unwrap();
        let p = ModelParameters {
            r: 2.0,
            mu: 1.0,
            alpha: 0.5,
            beta: 1.5,
            ..logistic(1.0, 1.0)
        };
        let (ue, ve) = p.homogeneous_equilibrium();
        let s = state(g, ue, ve);
        let out = step(&s, &p, &StepControl::fixed(1e-2, 1.0, 1e6)).unwrap();
        assert_eq!(out.status, StepStatus::Advanced);
        for (a, b) in out.state.u.values().iter().zip(s.u.values()) {
            assert!((a - b).abs() <= 1e-10 * ue);
        }
        for (a, b) in out.state.v.values().iter().zip(s.v.values()) {
            assert!((a - b).abs() <= 1e-10 * ve);
        }
    }

    #[test]
    fn heat_equation_conserves_mass() {
        let g = Grid::unit_square(16).unwrap();
        let p = ModelParameters {
            chi: 0.0,
            r: 0.0,
            mu: 0.0,
            ..logistic(1.0, 1.0)
        };
        let u0 = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * (3.0 * x).cos() * y);
        let mut s = SimState::initial(
            &InitialData {
                u0,
                v0: ScalarField::constant(g, 1.0),
            },
            1e-3,
        );
        let m0 = s.u.integrate();
        let integ = Integrator::new(p, StepControl::fixed(1e-3, 1.0, 1e6), SolverSettings::default(), 1.0).unwrap();
        for _ in 0..50 {
            let out = integ.step(&s);
            assert_eq!(out.status, StepStatus::Advanced);
            s = out.state;
        }
        assert!(((s.u.integrate() - m0) / m0).abs() < 1e-12);
    }

    #[test]
    fn elliptic_branch_satisfies_signal_equation() {
        let g = Grid::unit_square(16).unwrap();
        let p = ModelParameters {
            kappa: SignalMode::ParabolicElliptic,
            ..logistic(1.0, 1.0)
        };
        let u0 = ScalarField::from_fn(g, |x, y| 1.0 + (-(x - 0.3).powi(2) * 20.0 - (y - 0.6).powi(2) * 20.0).exp());
        let init = InitialData {
            u0,
            v0: ScalarField::constant(g, 1.0),
        };
        let solver = SolverSettings::default();
        let mut s = initial_state(&init, &p, &StepControl::fixed(1e-3, 1.0, 1e6), &solver).unwrap();
        let integ = Integrator::new(p, StepControl::fixed(1e-3, 1.0, 1e6), solver, s.v.min()).unwrap();
        for _ in 0..5 {
            s = integ.step(&s).state;
            let lap = crate::operators::laplacian(&s.v);
            let res: f64 = (0..g.len())
                .map(|i| (p.alpha * s.v.values()[i] - lap.values()[i] - p.beta * s.u.values()[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            let bn: f64 = s.u.values().iter().map(|u| (p.beta * u).powi(2)).sum::<f64>().sqrt();
            assert!(res <= solver.tol * bn * (1.0 + 1e-6), "{res:e}");
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = Grid::unit_square(32).unwrap();
        let p = ModelParameters { chi: 50.0, ..logistic(1.0, 1.0) };
        let u0 = ScalarField::from_fn(g, |x, _| 1.0 + x);
        let v0 = ScalarField::from_fn(g, |x, y| 0.01 + 5.0 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) * 50.0).exp());
        let s = SimState::initial(&InitialData { u0, v0 }, 0.05);
        let c = StepControl::fixed(0.05, 1.0, 1e9);
        let out = step(&s, &p, &c).unwrap();
        assert_eq!(out.status, StepStatus::PositivityFailure);
        assert_eq!(out.state, s);
    }

    #[test]
    fn dt_respects_cfl_and_bounds() {
        let g = Grid::unit_square(16).unwrap();
        let p = logistic(1.0, 1.0);
        let c = StepControl {
            dt_init: 1e-3,
            dt_min: 1e-8,
            dt_max: 1.0,
            cfl_safety: 0.2,
            blowup_threshold: 1e6,
            t_end: 1.0,
        };
        let integ = Integrator::new(p, c, SolverSettings::default(), 1.0).unwrap();
        let mut s = state(g, 3.0, 1.0);
        let w = taxis_velocities(&s.v, &p, 0.0).unwrap();
        assert_eq!(integ.choose_dt(&s, &w), 1e-3);
        s.step_count = 1;
        // reaction limit 0.2 / (1 + 2·3)
        assert!((integ.choose_dt(&s, &w) - 0.2 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn run_with_zero_horizon_returns_initial_state() {
        let g = Grid::unit_square(8).unwrap();
        let init = InitialData::constant(g, 1.0, 1.0);
        let mut seen = Vec::new();
        let mut obs = |s: &SimState| seen.push(s.t);
        let summary = run(
            &init,
            &logistic(1.0, 1.0),
            &StepControl::fixed(1e-3, 0.0, 10.0),
            &SolverSettings::default(),
            0.1,
            &mut obs,
        )
        .unwrap();
        assert_eq!(summary.steps, 0);
        assert_eq!(summary.status(), StepStatus::Advanced);
        assert_eq!(summary.final_state().u, init.u0);
        assert_eq!(seen, vec![0.0]);
    }

    #[test]
    fn run_detects_initial_blowup() {
        let g = Grid::unit_square(8).unwrap();
        let init = InitialData::constant(g, 100.0, 1.0);
        let mut obs = |_: &SimState| {};
        let summary = run(
            &init,
            &logistic(1.0, 1.0),
            &StepControl::fixed(1e-3, 1.0, 10.0),
            &SolverSettings::default(),
            0.1,
            &mut obs,
        )
        .unwrap();
        assert_eq!(summary.status(), StepStatus::BlowupDetected);
        assert_eq!(summary.steps, 0);
    }

    #[test]
    fn samples_land_on_interval_multiples() {
        let g = Grid::unit_square(8).unwrap();
        let init = InitialData::constant(g, 0.5, 1.0);
        let mut times = Vec::new();
        let mut obs = |s: &SimState| times.push(s.t);
        let control = StepControl {
            dt_init: 0.03,
            dt_min: 1e-6,
            dt_max: 0.03,
            cfl_safety: 0.5,
            blowup_threshold: 1e6,
            t_end: 0.5,
        };
        run(&init, &logistic(1.0, 1.0), &control, &SolverSettings::default(), 0.1, &mut obs).unwrap();
        let expected = [0.0, 0.1, 0.2, 0.30000000000000004, 0.4, 0.5];
        assert_eq!(times.len(), expected.len(), "{times:?}");
        for (t, e) in times.iter().zip(expected) {
            assert!((t - e).abs() < 1e-15);
        }
    }
}
