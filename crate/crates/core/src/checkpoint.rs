//! Restartable snapshots: the two fields in the binary field format plus a
//! JSON sidecar with time, step metadata and the settings of the run.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::integrator::{run_from, ControlError, Integrator, Observer, RunSummary, StepControl};
use crate::model::{FieldIoError, ModelParameters, ScalarField, SimState};
use crate::solver::SolverSettings;

pub const META_FILE: &str = "checkpoint.json";
pub const U_FILE: &str = "u.bin";
pub const V_FILE: &str = "v.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub t: f64,
    pub last_dt: f64,
    pub step_count: u64,
    pub last_iterations: usize,
    /// Minimum of the signal at `t = 0`; anchors the singular-signal guard.
    pub reference_min_v: f64,
    pub params: ModelParameters,
    pub control: StepControl,
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: SimState,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(
        state: SimState,
        params: ModelParameters,
        control: StepControl,
        solver: SolverSettings,
        reference_min_v: f64,
    ) -> Self {
        let meta = CheckpointMeta {
            t: state.t,
            last_dt: state.last_dt,
            step_count: state.step_count,
            last_iterations: state.last_iterations,
            reference_min_v,
            params,
            control,
            solver,
        };
        Self { state, meta }
    }

    pub fn write(&self, dir: &Path) -> Result<(), FieldIoError> {
        fs::create_dir_all(dir)?;
        let mut u = BufWriter::new(File::create(dir.join(U_FILE))?);
        self.state.u.write_binary(&mut u)?;
        u.flush()?;
        let mut v = BufWriter::new(File::create(dir.join(V_FILE))?);
        self.state.v.write_binary(&mut v)?;
        v.flush()?;
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| FieldIoError::Format(e.to_string()))?;
        fs::write(dir.join(META_FILE), json)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, FieldIoError> {
        let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)
            .map_err(|e| FieldIoError::Format(e.to_string()))?;
        let (u, v) = read_fields(dir)?;
        Ok(Self {
            state: SimState {
                u,
                v,
                t: meta.t,
                last_dt: meta.last_dt,
                step_count: meta.step_count,
                last_iterations: meta.last_iterations,
            },
            meta,
        })
    }

    /// Continues the stored run up to `t_end`, reproducing bit for bit what
    /// an uninterrupted run would have computed.
    pub fn resume(
        &self,
        t_end: f64,
        sample_interval: f64,
        observer: &mut dyn Observer,
    ) -> Result<RunSummary, ControlError> {
        let control = StepControl {
            t_end,
            ..self.meta.control
        };
        let integrator = Integrator::new(self.meta.params, control, self.meta.solver, self.meta.reference_min_v)?;
        Ok(run_from(&integrator, self.state.clone(), sample_interval, observer, Instant::now()))
    }
}

/// Reads `u` and `v` from a directory holding `u.bin`/`v.bin` or `u.csv`/`v.csv`.
pub fn read_fields(dir: &Path) -> Result<(ScalarField, ScalarField), FieldIoError> {
    let load = |stem: &str| -> Result<ScalarField, FieldIoError> {
        let bin = dir.join(format!("{stem}.bin"));
        if bin.exists() {
            return ScalarField::read_binary(BufReader::new(File::open(bin)?));
        }
        let csv = dir.join(format!("{stem}.csv"));
        ScalarField::read_csv(BufReader::new(File::open(csv)?))
    };
    Ok((load("u")?, load("v")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::run;
    use crate::model::{Grid, InitialData};

    #[test]
    fn restart_is_bit_exact() {
        let g = Grid::unit_square(12).unwrap();
        let init = InitialData {
            u0: ScalarField::from_fn(g, |x, y| 1.0 + 4.0 * (-((x - 0.3).powi(2) + (y - 0.6).powi(2)) * 40.0).exp()),
            v0: ScalarField::from_fn(g, |x, _| 0.1 + x),
        };
        let params = ModelParameters { chi: 2.0, ..Default::default() };
        let control = StepControl {
            dt_init: 1e-4,
            dt_min: 1e-9,
            dt_max: 5e-3,
            cfl_safety: 0.2,
            blowup_threshold: 1e6,
            t_end: 0.4,
        };
        let solver = SolverSettings::default();
        let mut ignore = |_: &SimState| {};
        let direct = run(&init, &params, &control, &solver, 0.1, &mut ignore).unwrap();

        let half = StepControl { t_end: 0.2, ..control };
        let first = run(&init, &params, &half, &solver, 0.1, &mut ignore).unwrap();
        let dir = tempfile::tempdir().unwrap();
        Checkpoint::new(first.final_state().clone(), params, half, solver, init.v0.min())
            .write(dir.path())
            .unwrap();
        let restored = Checkpoint::read(dir.path()).unwrap();
        assert_eq!(&restored.state, first.final_state());
        let resumed = restored.resume(0.4, 0.1, &mut ignore).unwrap();
        assert_eq!(resumed.final_state(), direct.final_state());
        // restart closure: the restored state is admissible initial data
        assert!(restored.state.to_initial_data().validate(&g).is_ok());
    }
}
