//! Reference solutions and convergence studies.
//!
//! The closed-form evaluators here share no code with the stepping path; the
//! studies only call the public integrator API and compare its output with
//! them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{initial_state, Integrator, StepControl, StepStatus};
use crate::model::{Grid, InitialData, ModelParameters, ScalarField, SignalMode, SimState};
use crate::solver::SolverSettings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("errors do not decrease monotonically under refinement: {0:?}")]
    InsufficientResolution(Vec<f64>),
    #[error("simulation stopped with {status:?} at t = {t}: {detail}")]
    Simulation { status: StepStatus, t: f64, detail: String },
    #[error("invalid study: {0}")]
    Invalid(String),
}

/// Exact solution of `u' = r u − μ u²`.
pub fn logistic_oracle(u0: f64, r: f64, mu: f64, t: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    // r u0 e^{rt} / (r + μ u0 (e^{rt} − 1)), divided through by e^{rt}.
    let decay = (-r * t).exp();
    r * u0 / (r * decay + mu * u0 * (1.0 - decay))
}

/// Parameters of a logistic trajectory `u(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticPath {
    pub u0: f64,
    pub r: f64,
    pub mu: f64,
}

impl LogisticPath {
    pub fn at(&self, t: f64) -> f64 {
        logistic_oracle(self.u0, self.r, self.mu, t)
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights on the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = KRONROD_WEIGHTS[7] * f(c);
    let mut gauss = GAUSS_WEIGHTS[3] * f(c);
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature to absolute tolerance `tol`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth >= 48 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, tol, 0)
}

/// Exact homogeneous signal `v' = −α v + β u(t)` driven by a logistic `u`:
/// `e^{−αt} v0 + β ∫₀ᵗ e^{−α(t−s)} u(s) ds`, the integral by adaptive quadrature.
pub fn homogeneous_v_oracle(v0: f64, path: LogisticPath, alpha: f64, beta: f64, t: f64) -> f64 {
    let forced = integrate_adaptive(|s| (-alpha * (t - s)).exp() * path.at(s), 0.0, t, 1e-13);
    (-alpha * t).exp() * v0 + beta * forced
}

/// Exact Neumann heat solution
/// `1 + A cos(mx π x/lx) cos(my π y/ly) e^{−π²((mx/lx)² + (my/ly)²) t}` at cell centers.
pub fn heat_eigenmode_oracle(amplitude: f64, mode: (u32, u32), grid: &Grid, t: f64) -> ScalarField {
    let (mx, my) = (f64::from(mode.0), f64::from(mode.1));
    let (lx, ly) = (grid.lx, grid.ly);
    let decay = (-PI * PI * ((mx / lx).powi(2) + (my / ly).powi(2)) * t).exp();
    ScalarField::from_fn(*grid, |x, y| {
        1.0 + amplitude * (mx * PI * x / lx).cos() * (my * PI * y / ly).cos() * decay
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    Linf,
    L2,
}

impl Norm {
    pub fn distance(self, a: &ScalarField, b: &ScalarField) -> f64 {
        let diffs = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs());
        match self {
            Norm::Linf => diffs.fold(0.0, f64::max),
            Norm::L2 => (diffs.map(|d| d * d).sum::<f64>() * a.grid().cell_area()).sqrt(),
        }
    }
}

/// A problem with a known exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleCase {
    /// Pure Neumann heat equation for `u` (no taxis, no reaction).
    HeatEigenmode { amplitude: f64, mode: (u32, u32) },
    /// Constant data: the PDE reduces to the logistic ODE and its signal.
    HomogeneousLogistic { u0: f64, v0: f64, params: ModelParameters },
}

impl OracleCase {
    pub fn name(&self) -> String {
        match self {
            OracleCase::HeatEigenmode { mode, .. } => format!("heat_eigenmode_{}_{}", mode.0, mode.1),
            OracleCase::HomogeneousLogistic { u0, .. } => format!("homogeneous_logistic_u0={u0}"),
        }
    }

    pub fn norm(&self) -> Norm {
        match self {
            OracleCase::HeatEigenmode { .. } => Norm::L2,
            OracleCase::HomogeneousLogistic { .. } => Norm::Linf,
        }
    }

    pub fn params(&self) -> ModelParameters {
        match self {
            OracleCase::HeatEigenmode { .. } => ModelParameters {
                chi: 0.0,
                r: 0.0,
                mu: 0.0,
                k: 0.5,
                alpha: 1.0,
                beta: 0.0,
                kappa: SignalMode::FullyParabolic,
            },
            OracleCase::HomogeneousLogistic { params, .. } => *params,
        }
    }

    pub fn initial(&self, grid: &Grid) -> InitialData {
        match self {
            OracleCase::HeatEigenmode { amplitude, mode } => InitialData {
                u0: heat_eigenmode_oracle(*amplitude, *mode, grid, 0.0),
                v0: ScalarField::constant(*grid, 1.0),
            },
            OracleCase::HomogeneousLogistic { u0, v0, .. } => InitialData::constant(*grid, *u0, *v0),
        }
    }

    pub fn exact_u(&self, grid: &Grid, t: f64) -> ScalarField {
        match self {
            OracleCase::HeatEigenmode { amplitude, mode } => heat_eigenmode_oracle(*amplitude, *mode, grid, t),
            OracleCase::HomogeneousLogistic { u0, params, .. } => {
                ScalarField::constant(*grid, logistic_oracle(*u0, params.r, params.mu, t))
            }
        }
    }
}

/// Simulates with a fixed step `dt` from `t = 0` to `horizon`.
pub fn simulate_fixed(
    params: &ModelParameters,
    init: &InitialData,
    dt: f64,
    horizon: f64,
    solver: &SolverSettings,
) -> Result<SimState, OracleError> {
    let init = init
        .clone()
        .validate(init.u0.grid())
        .map_err(|e| OracleError::Invalid(e.to_string()))?;
    let init = &init;
    let control = StepControl::fixed(dt, horizon, f64::MAX);
    let sim_err = |status, t, detail: Option<String>| OracleError::Simulation {
        status,
        t,
        detail: detail.unwrap_or_default(),
    };
    let mut state = initial_state(init, params, &control, solver)
        .map_err(|e| sim_err(StepStatus::SolverFailure, 0.0, Some(e.to_string())))?;
    let integrator = Integrator::new(*params, control, *solver, state.v.min())
        .map_err(|e| OracleError::Invalid(e.to_string()))?;
    while state.t < horizon {
        let out = integrator.step(&state);
        if out.status != StepStatus::Advanced {
            return Err(sim_err(out.status, out.state.t, out.detail));
        }
        state = out.state;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Space,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
}

/// Order report, serialized as `{case, axis, observed_order, error_table}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub case: String,
    pub axis: Axis,
    pub observed_order: f64,
    pub error_table: Vec<ErrorRow>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_order(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn finish_report(case: String, axis: Axis, mut rows: Vec<ErrorRow>) -> Result<OrderReport, OracleError> {
    let key = |r: &ErrorRow| match axis {
        Axis::Space => r.h,
        Axis::Time => r.dt,
    };
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)));
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    if errors.windows(2).any(|w| !(w[1] < w[0])) || errors.iter().any(|e| !(*e > 0.0)) {
        return Err(OracleError::InsufficientResolution(errors));
    }
    let xs: Vec<f64> = rows.iter().map(key).collect();
    Ok(OrderReport {
        case,
        axis,
        observed_order: fit_order(&xs, &errors),
        error_table: rows,
    })
}

/// Runs `case` on every `(grid, dt)` pair up to `horizon` and fits the
/// observed order along `axis`.
pub fn convergence_study(
    case: &OracleCase,
    runs: &[(Grid, f64)],
    axis: Axis,
    horizon: f64,
    solver: &SolverSettings,
) -> Result<OrderReport, OracleError> {
    if runs.len() < 2 {
        return Err(OracleError::Invalid("need at least two resolutions".into()));
    }
    let params = case.params();
    let mut rows = Vec::with_capacity(runs.len());
    for (grid, dt) in runs {
        let state = simulate_fixed(&params, &case.initial(grid), *dt, horizon, solver)?;
        let exact = case.exact_u(grid, state.t);
        rows.push(ErrorRow {
            nx: grid.nx,
            ny: grid.ny,
            h: grid.hx().max(grid.hy()),
            dt: *dt,
            error: case.norm().distance(&state.u, &exact),
        });
    }
    finish_report(case.name(), axis, rows)
}

/// Averages 2×2 blocks of a field onto the grid with half the cells per axis.
pub fn restrict(fine: &ScalarField) -> ScalarField {
    let g = fine.grid();
    assert!(g.nx.is_multiple_of(2) && g.ny.is_multiple_of(2), "restriction needs even cell counts");
    let coarse = Grid::new(g.nx / 2, g.ny / 2, g.lx, g.ly).expect("coarse grid");
    let mut out = ScalarField::zeros(coarse);
    for j in 0..coarse.ny {
        for i in 0..coarse.nx {
            let s = fine.at(2 * i, 2 * j) + fine.at(2 * i + 1, 2 * j) + fine.at(2 * i, 2 * j + 1) + fine.at(2 * i + 1, 2 * j + 1);
            out.values_mut()[coarse.index(i, j)] = 0.25 * s;
        }
    }
    out
}

/// Two-grid self-convergence: for consecutive grids `n` and `2n`, the
/// distance between the coarse solution and the restricted fine solution.
/// `dt_for(h)` picks the step size on each grid.
#[allow(clippy::too_many_arguments)]
pub fn self_convergence(
    name: &str,
    params: &ModelParameters,
    initial: impl Fn(&Grid) -> InitialData,
    sizes: &[usize],
    dt_for: impl Fn(f64) -> f64,
    horizon: f64,
    norm: Norm,
    solver: &SolverSettings,
) -> Result<OrderReport, OracleError> {
    if sizes.len() < 3 {
        return Err(OracleError::Invalid("need at least three grids".into()));
    }
    let mut solutions = Vec::new();
    for &n in sizes {
        let grid = Grid::unit_square(n).map_err(|e| OracleError::Invalid(e.to_string()))?;
        let dt = dt_for(grid.hx());
        solutions.push((grid, dt, simulate_fixed(params, &initial(&grid), dt, horizon, solver)?));
    }
    let rows = solutions
        .windows(2)
        .map(|w| {
            let (coarse, dt, ref c) = w[0];
            let fine = restrict(&w[1].2.u);
            ErrorRow {
                nx: coarse.nx,
                ny: coarse.ny,
                h: coarse.hx(),
                dt,
                error: norm.distance(&c.u, &fine),
            }
        })
        .collect();
    finish_report(name.to_string(), Axis::Space, rows)
}

/// The verification suite behind `ksim verify`: spatial order on the heat
/// eigenmode, temporal order on the homogeneous logistic case, and first-order
/// self-convergence of a smooth taxis problem.
pub fn standard_suite(solver: &SolverSettings) -> Result<Vec<OrderReport>, OracleError> {
    let heat = OracleCase::HeatEigenmode {
        amplitude: 0.5,
        mode: (1, 0),
    };
    let heat_runs: Vec<(Grid, f64)> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let g = Grid::unit_square(n).expect("grid");
            (g, 0.25 * g.hx() * g.hx())
        })
        .collect();
    let spatial = convergence_study(&heat, &heat_runs, Axis::Space, 0.02, solver)?;

    let logistic = OracleCase::HomogeneousLogistic {
        u0: 2.0,
        v0: 1.0,
        params: ModelParameters {
            chi: 1.0,
            r: 1.0,
            mu: 1.0,
            k: 0.5,
            alpha: 1.0,
            beta: 1.0,
            kappa: SignalMode::FullyParabolic,
        },
    };
    let g = Grid::unit_square(8).expect("grid");
    let time_runs: Vec<(Grid, f64)> = [4e-3, 2e-3, 1e-3, 5e-4].iter().map(|&dt| (g, dt)).collect();
    let temporal = convergence_study(&logistic, &time_runs, Axis::Time, 5.0, solver)?;

    let taxis = self_convergence(
        "taxis_self_convergence",
        &taxis_test_params(),
        taxis_test_initial,
        &[16, 32, 64, 128],
        |h| 0.05 * h,
        0.1,
        Norm::L2,
        solver,
    )?;
    Ok(vec![spatial, temporal, taxis])
}

/// Smooth, moderately strong taxis problem used for self-convergence.
pub fn taxis_test_params() -> ModelParameters {
    ModelParameters {
        chi: 1.0,
        r: 1.0,
        mu: 1.0,
        k: 0.5,
        alpha: 1.0,
        beta: 1.0,
        kappa: SignalMode::FullyParabolic,
    }
}

pub fn taxis_test_initial(grid: &Grid) -> InitialData {
    InitialData {
        u0: ScalarField::from_fn(*grid, |x, y| 1.0 + 0.5 * (PI * x).cos() * (PI * y).cos()),
        v0: ScalarField::from_fn(*grid, |x, y| 1.0 + 0.4 * (PI * x).cos() + 0.2 * (2.0 * PI * y).cos()),
    }
}
