//! Functionals of the solution that the a priori estimates control, their
//! sampled time series, and pass/fail verdicts on those series.
//!
//! Only the L¹ bound and the windowed L² bound come with explicit constants,
//! so they are checked absolutely. Every other estimate only asserts that
//! *some* constant exists; for those a plateau heuristic is used instead
//! (no late-time growth beyond a tolerance).

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::Observer;
use crate::model::{Grid, ModelParameters, SignalMode, SimState};
use crate::operators::gradient_squared;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("functional `{name}` is not finite at t = {t}")]
    SingularSignal { name: &'static str, t: f64 },
    #[error("empty diagnostics series")]
    EmptySeries,
    #[error("diagnostics config `{field}` invalid: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Simulation-time cadence of samples.
    pub sample_interval: f64,
    /// Exponent `p > 1` of the `L^p`-type functionals.
    pub p_exponent: f64,
    /// Exponent `q` of the weighted functional, `0 < q < p − 1`.
    pub q_exponent: f64,
    /// Weight of `−∫u ln v` in the energy `y`.
    pub lambda: f64,
    /// Extra weights for which the energy `y` gets its own plateau verdict.
    pub lambda_sweep: Vec<f64>,
    /// Averaging window for `∫∫u²`; `None` means `min{1, t_end/2}`.
    pub tau: Option<f64>,
    /// Relative slack for the explicit bounds.
    pub bound_tolerance: f64,
    /// Relative slack for the plateau heuristics.
    pub plateau_tolerance: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            sample_interval: 0.1,
            p_exponent: 2.0,
            q_exponent: 0.5,
            lambda: 0.1,
            lambda_sweep: vec![0.01, 0.1, 0.3],
            tau: None,
            bound_tolerance: 1e-6,
            plateau_tolerance: 0.05,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(self) -> Result<Self, DiagnosticsError> {
        let invalid = |field, message: String| Err(DiagnosticsError::Invalid { field, message });
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return invalid("sample_interval", format!("must be > 0, got {}", self.sample_interval));
        }
        if !(self.p_exponent > 1.0) {
            return invalid("p_exponent", format!("must be > 1, got {}", self.p_exponent));
        }
        if !(self.q_exponent > 0.0 && self.q_exponent < self.p_exponent - 1.0) {
            return invalid(
                "q_exponent",
                format!(
                    "need 0 < q < p - 1 = {}, got {}",
                    self.p_exponent - 1.0,
                    self.q_exponent
                ),
            );
        }
        if !(self.lambda > 0.0) || self.lambda_sweep.iter().any(|l| !(*l > 0.0)) {
            return invalid("lambda", "weights must be > 0".into());
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) {
                return invalid("tau", format!("must be >= 0, got {tau}"));
            }
        }
        if !(self.bound_tolerance >= 0.0 && self.plateau_tolerance >= 0.0) {
            return invalid("bound_tolerance", "tolerances must be >= 0".into());
        }
        Ok(self)
    }

    /// Window length actually used for a run ending at `t_end`.
    pub fn window(&self, t_end: f64) -> f64 {
        self.tau.unwrap_or_else(|| window_length(t_end))
    }

    /// Smallest exponent strictly above `max{2, 1/(1−k)}` used to exercise the
    /// cross functional's hypothesis: `max{2, 1/(1−k)} + 1`.
    pub fn cross_exponent(k: f64) -> f64 {
        2.0f64.max(1.0 / (1.0 - k)) + 1.0
    }
}

/// `τ = min{1, t_end/2}`.
pub fn window_length(t_end: f64) -> f64 {
    1.0f64.min(0.5 * t_end)
}

/// One sample of every monitored functional. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫u`
    pub mass: f64,
    /// `∫u²`
    pub l2_u: f64,
    /// `∫v^p`
    pub lp_v: f64,
    /// `∫|∇v|²`
    pub grad_v_sq: f64,
    /// `l = −∫u ln v`
    pub l_func: f64,
    /// `∫u ln u` (with `0 ln 0 = 0`)
    pub u_ln_u: f64,
    /// `∫u ln u − λ∫u ln v + ½∫|∇v|²`
    pub y_func: f64,
    /// `∫u^p v^{−q} + ∫u^p + ∫|∇v|^{2p}`
    pub z_func: f64,
    /// `∫u^p |∇v|^p v^{−kp}`
    pub cross_func: f64,
    pub sup_u: f64,
    pub min_v: f64,
    /// `∫_{t−τ}^{t} ∫u²`; NaN until `t ≥ τ`.
    pub windowed_l2: f64,
}

pub const RECORD_COLUMNS: [&str; 13] = [
    "t",
    "mass",
    "l2_u",
    "lp_v",
    "grad_v_sq",
    "l_func",
    "u_ln_u",
    "y_func",
    "z_func",
    "cross_func",
    "sup_u",
    "min_v",
    "windowed_l2",
];

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.l2_u,
            self.lp_v,
            self.grad_v_sq,
            self.l_func,
            self.u_ln_u,
            self.y_func,
            self.z_func,
            self.cross_func,
            self.sup_u,
            self.min_v,
            self.windowed_l2,
        ]
    }

    /// The energy `y` for another weight `λ`.
    pub fn y_with(&self, lambda: f64) -> f64 {
        self.u_ln_u + lambda * self.l_func + 0.5 * self.grad_v_sq
    }
}

/// Evaluates every functional on `s`. `windowed_l2` is left as NaN; the
/// [`Monitor`] fills it in from its running time integral.
pub fn sample(
    s: &SimState,
    cfg: &DiagnosticsConfig,
    params: &ModelParameters,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let grid = s.grid();
    let area = grid.cell_area();
    let p = cfg.p_exponent;
    let q = cfg.q_exponent;
    let k = params.k;
    let grad = gradient_squared(&s.v);
    let u = s.u.values();
    let v = s.v.values();
    let g = grad.values();

    let mut mass = 0.0;
    let mut l2_u = 0.0;
    let mut lp_v = 0.0;
    let mut grad_v_sq = 0.0;
    let mut u_ln_v = 0.0;
    let mut u_ln_u = 0.0;
    let mut weighted = 0.0;
    let mut lp_u = 0.0;
    let mut grad_2p = 0.0;
    let mut cross = 0.0;
    for i in 0..u.len() {
        let (ui, vi, gi) = (u[i], v[i], g[i]);
        let up = ui.powf(p);
        mass += ui;
        l2_u += ui * ui;
        lp_v += vi.powf(p);
        grad_v_sq += gi;
        u_ln_v += ui * vi.ln();
        if ui > 0.0 {
            u_ln_u += ui * ui.ln();
        }
        weighted += up * vi.powf(-q);
        lp_u += up;
        grad_2p += gi.powf(p);
        cross += up * gi.powf(0.5 * p) * vi.powf(-k * p);
    }
    let l_func = -u_ln_v * area;
    let u_ln_u = u_ln_u * area;
    let grad_v_sq = grad_v_sq * area;
    let record = DiagnosticsRecord {
        t: s.t,
        mass: mass * area,
        l2_u: l2_u * area,
        lp_v: lp_v * area,
        grad_v_sq,
        l_func,
        u_ln_u,
        y_func: u_ln_u + cfg.lambda * l_func + 0.5 * grad_v_sq,
        z_func: (weighted + lp_u + grad_2p) * area,
        cross_func: cross * area,
        sup_u: s.u.max(),
        min_v: s.v.min(),
        windowed_l2: f64::NAN,
    };
    let checks = [
        ("mass", record.mass),
        ("l2_u", record.l2_u),
        ("lp_v", record.lp_v),
        ("grad_v_sq", record.grad_v_sq),
        ("l_func", record.l_func),
        ("u_ln_u", record.u_ln_u),
        ("y_func", record.y_func),
        ("z_func", record.z_func),
        ("cross_func", record.cross_func),
        ("sup_u", record.sup_u),
        ("min_v", record.min_v),
    ];
    for (name, value) in checks {
        if !value.is_finite() {
            return Err(DiagnosticsError::SingularSignal { name, t: s.t });
        }
    }
    Ok(record)
}

/// `m = max{r|Ω|/μ, ∫u0}`. Without growth (`r = 0`) the first branch is 0.
pub fn mass_bound(params: &ModelParameters, grid: &Grid, u0_mass: f64) -> f64 {
    let carrying = if params.r == 0.0 {
        0.0
    } else {
        params.r * grid.area() / params.mu
    };
    carrying.max(u0_mass)
}

/// `m(rτ + 1)/μ`; infinite without damping.
pub fn windowed_l2_bound(params: &ModelParameters, m: f64, tau: f64) -> f64 {
    if params.mu == 0.0 {
        return f64::INFINITY;
    }
    m * (params.r * tau + 1.0) / params.mu
}

/// Running `∫₀ᵗ ∫u²` with the left-endpoint rule on every accepted step, the
/// same quadrature the explicit reaction term uses, so the discrete mass
/// balance carries over to the window integral exactly.
#[derive(Debug, Clone, Default)]
pub struct WindowedIntegral {
    history: VecDeque<(f64, f64)>,
    total: f64,
}

impl WindowedIntegral {
    pub fn new(t0: f64) -> Self {
        let mut history = VecDeque::new();
        history.push_back((t0, 0.0));
        Self { history, total: 0.0 }
    }

    pub fn push(&mut self, dt: f64, l2_before: f64, t_after: f64) {
        self.total += dt * l2_before;
        self.history.push_back((t_after, self.total));
    }

    fn cumulative_at(&self, t: f64) -> Option<f64> {
        let first = self.history.front()?;
        if t < first.0 {
            return None;
        }
        let idx = self.history.partition_point(|&(ti, _)| ti <= t);
        if idx == 0 {
            return Some(first.1);
        }
        let (t0, c0) = self.history[idx - 1];
        if t0 == t || idx == self.history.len() {
            return Some(c0);
        }
        let (t1, c1) = self.history[idx];
        Some(c0 + (c1 - c0) * (t - t0) / (t1 - t0))
    }

    /// `∫_{t−τ}^{t} ∫u²`, or `None` when the history does not reach back to `t − τ`.
    pub fn window(&mut self, t: f64, tau: f64) -> Option<f64> {
        let start = t - tau;
        let value = self.cumulative_at(start).map(|c| self.total - c);
        // Drop entries that can no longer be the left endpoint of a window.
        while self.history.len() > 2 && self.history[1].0 <= start {
            self.history.pop_front();
        }
        value
    }
}

/// Observer that records a [`DiagnosticsRecord`] at every sample time.
#[derive(Debug, Clone)]
pub struct Monitor {
    cfg: DiagnosticsConfig,
    params: ModelParameters,
    tau: f64,
    integral: WindowedIntegral,
    pending_l2: Option<f64>,
    series: Vec<DiagnosticsRecord>,
    error: Option<DiagnosticsError>,
}

impl Monitor {
    pub fn new(cfg: DiagnosticsConfig, params: ModelParameters, t_end: f64) -> Self {
        let tau = cfg.window(t_end);
        Self {
            cfg,
            params,
            tau,
            integral: WindowedIntegral::new(0.0),
            pending_l2: None,
            series: Vec::new(),
            error: None,
        }
    }

    /// Monitor for a run restarted at `t0`; windows before `t0` are undefined.
    pub fn starting_at(mut self, t0: f64) -> Self {
        self.integral = WindowedIntegral::new(t0);
        self
    }

    pub fn series(&self) -> &[DiagnosticsRecord] {
        &self.series
    }

    pub fn into_series(self) -> Vec<DiagnosticsRecord> {
        self.series
    }

    pub fn error(&self) -> Option<&DiagnosticsError> {
        self.error.as_ref()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Observer for Monitor {
    fn on_step(&mut self, before: &SimState, after: &SimState) {
        let l2 = self
            .pending_l2
            .take()
            .unwrap_or_else(|| before.u.values().iter().map(|u| u * u).sum::<f64>() * before.grid().cell_area());
        self.integral.push(after.t - before.t, l2, after.t);
        self.pending_l2 = Some(after.u.values().iter().map(|u| u * u).sum::<f64>() * after.grid().cell_area());
    }

    fn on_sample(&mut self, state: &SimState) {
        match sample(state, &self.cfg, &self.params) {
            Ok(mut rec) => {
                if state.t >= self.tau {
                    if let Some(w) = self.integral.window(state.t, self.tau) {
                        rec.windowed_l2 = w;
                    }
                }
                self.series.push(rec);
            }
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(e);
                }
            }
        }
    }
}

/// Writes the series as CSV: header of field names, one row per sample.
pub fn write_series_csv<W: Write>(mut w: W, series: &[DiagnosticsRecord]) -> io::Result<()> {
    writeln!(w, "{}", RECORD_COLUMNS.join(","))?;
    for rec in series {
        let row: Vec<String> = rec.values().iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    /// Checked against a bound with an explicit constant.
    Explicit,
    /// Existence-of-a-constant claim checked by the no-late-growth heuristic.
    PlateauHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Sample time at which the ratio is worst.
    pub worst_time: f64,
    /// Explicit bounds: value / bound (pass iff ≤ 1 + tolerance).
    /// Plateau checks: late growth / scale (pass iff ≤ plateau tolerance).
    pub worst_ratio: f64,
    pub kind: VerdictKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub verdicts: Vec<Verdict>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// JSON object with one entry per verdict, keyed by name.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for v in &self.verdicts {
            map.insert(v.name.clone(), serde_json::to_value(v).expect("serializable"));
        }
        serde_json::Value::Object(map)
    }
}

/// Facts about the run that the verdicts need besides the series itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunContext {
    pub grid: Grid,
    pub blowup_threshold: f64,
    /// Window length the series was recorded with.
    pub tau: f64,
}

/// Plateau check: the maximum over the final third of the samples may not
/// exceed the maximum over the middle third by more than `tol · scale`, where
/// `scale = max(|middle max|, 0.01 · max |value|)` keeps the check meaningful
/// for signed functionals that settle near zero.
pub fn plateau_verdict(name: &str, times: &[f64], values: &[f64], tol: f64) -> Verdict {
    let n = values.len();
    if n < 3 {
        return Verdict {
            name: name.to_string(),
            pass: true,
            worst_time: times.last().copied().unwrap_or(0.0),
            worst_ratio: 0.0,
            kind: VerdictKind::PlateauHeuristic,
        };
    }
    let (a, b) = (n / 3, 2 * n / 3);
    let argmax = |range: std::ops::Range<usize>| {
        range
            .map(|i| (i, values[i]))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
    };
    let (_, mid_max) = argmax(a..b);
    let (late_idx, late_max) = argmax(b..n);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = mid_max.abs().max(0.01 * peak);
    let ratio = if scale > 0.0 {
        (late_max - mid_max) / scale
    } else if late_max > mid_max {
        f64::INFINITY
    } else {
        0.0
    };
    Verdict {
        name: name.to_string(),
        pass: ratio <= tol,
        worst_time: if late_idx == usize::MAX { 0.0 } else { times[late_idx] },
        worst_ratio: ratio,
        kind: VerdictKind::PlateauHeuristic,
    }
}

fn explicit_verdict(name: &str, series: &[DiagnosticsRecord], tol: f64, ratio: impl Fn(&DiagnosticsRecord) -> Option<f64>) -> Verdict {
    let mut worst_time = series[0].t;
    let mut worst = f64::NEG_INFINITY;
    for rec in series {
        if let Some(r) = ratio(rec) {
            if r > worst || r.is_nan() {
                worst = r;
                worst_time = rec.t;
            }
        }
    }
    let worst = if worst == f64::NEG_INFINITY { 0.0 } else { worst };
    Verdict {
        name: name.to_string(),
        pass: worst <= 1.0 + tol,
        worst_time,
        worst_ratio: worst,
        kind: VerdictKind::Explicit,
    }
}

/// Evaluates every bound on a completed series whose first record is `t = 0`.
pub fn verdicts(
    series: &[DiagnosticsRecord],
    params: &ModelParameters,
    cfg: &DiagnosticsConfig,
    ctx: &RunContext,
) -> Result<BoundReport, DiagnosticsError> {
    let first = series.first().ok_or(DiagnosticsError::EmptySeries)?;
    let tol = cfg.bound_tolerance;
    let m = mass_bound(params, &ctx.grid, first.mass);
    let l2_bound = windowed_l2_bound(params, m, ctx.tau);
    let min_v0 = first.min_v;
    let mut out = Vec::new();

    out.push(explicit_verdict("mass_bound", series, tol, |r| Some(r.mass / m)));
    out.push(explicit_verdict("windowed_l2_bound", series, tol, |r| {
        if r.windowed_l2.is_nan() {
            None
        } else if l2_bound.is_infinite() {
            Some(0.0)
        } else {
            Some(r.windowed_l2 / l2_bound)
        }
    }));
    if params.kappa == SignalMode::FullyParabolic {
        // v ≥ e^{−αt} min v0 by comparison; ratio = lower bound / observed.
        out.push(explicit_verdict("signal_lower_bound", series, 0.0, |r| {
            Some((-params.alpha * r.t).exp() * min_v0 * (1.0 - tol) / r.min_v)
        }));
    }

    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let column = |f: fn(&DiagnosticsRecord) -> f64| series.iter().map(f).collect::<Vec<f64>>();
    let ptol = cfg.plateau_tolerance;
    out.push(plateau_verdict("lp_v_plateau", &times, &column(|r| r.lp_v), ptol));
    out.push(plateau_verdict("grad_v_sq_plateau", &times, &column(|r| r.grad_v_sq), ptol));
    out.push(plateau_verdict("u_ln_u_plateau", &times, &column(|r| r.u_ln_u), ptol));
    out.push(plateau_verdict("y_func_plateau", &times, &column(|r| r.y_func), ptol));
    for &lambda in &cfg.lambda_sweep {
        let ys: Vec<f64> = series.iter().map(|r| r.y_with(lambda)).collect();
        out.push(plateau_verdict(&format!("y_func_plateau(lambda={lambda})"), &times, &ys, ptol));
    }
    out.push(plateau_verdict("z_func_plateau", &times, &column(|r| r.z_func), ptol));
    out.push(plateau_verdict("cross_func_plateau", &times, &column(|r| r.cross_func), ptol));

    out.push(explicit_verdict("no_blowup", series, 0.0, |r| Some(r.sup_u / ctx.blowup_threshold)));
    Ok(BoundReport { verdicts: out })
}
