//! Matrix-free conjugate gradients for `(shift·I − Δ) x = b` with the
//! mirrored Neumann Laplacian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Grid, ScalarField};
use crate::operators::{helmholtz_apply, helmholtz_diagonal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    None,
    /// Diagonal (Jacobi) scaling.
    Jacobi,
}

/// Tolerances shared by every solve in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` means `10·(nx + ny)`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::None,
        }
    }
}

impl SolverSettings {
    pub fn max_iter_for(&self, grid: &Grid) -> usize {
        self.max_iter.unwrap_or(10 * (grid.nx + grid.ny))
    }
}

/// `(shift·I − Δ) x = rhs`.
#[derive(Debug, Clone)]
pub struct HelmholtzProblem<'a> {
    pub shift: f64,
    pub rhs: &'a ScalarField,
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl<'a> HelmholtzProblem<'a> {
    pub fn new(shift: f64, rhs: &'a ScalarField, settings: &SolverSettings) -> Self {
        Self {
            shift,
            rhs,
            tol: settings.tol,
            max_iter: settings.max_iter_for(rhs.grid()),
            preconditioner: settings.preconditioner,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: ScalarField,
    pub iterations: usize,
    /// `‖b − A x‖₂`, recomputed from the returned iterate.
    pub residual: f64,
    pub rhs_norm: f64,
}

impl Solution {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual / self.rhs_norm
        } else {
            self.residual
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_helmholtz(prob: &HelmholtzProblem<'_>) -> Result<Solution, SolverError> {
    solve_helmholtz_from(prob, None)
}

/// Conjugate gradients started from `guess` (zero when absent).
///
/// After the residual test passes, the constant component of the residual is
/// removed exactly: constants are eigenvectors of the operator with
/// eigenvalue `shift`, so this is a one-dimensional exact solve that makes
/// `shift·∫x = ∫b` hold to rounding.
pub fn solve_helmholtz_from(
    prob: &HelmholtzProblem<'_>,
    guess: Option<&ScalarField>,
) -> Result<Solution, SolverError> {
    let grid = *prob.rhs.grid();
    if !(prob.shift > 0.0 && prob.shift.is_finite()) {
        return Err(SolverError::InvalidProblem(format!(
            "shift must be positive, got {}",
            prob.shift
        )));
    }
    if !(prob.tol > 0.0) {
        return Err(SolverError::InvalidProblem(format!(
            "tolerance must be positive, got {}",
            prob.tol
        )));
    }
    if !prob.rhs.is_finite() {
        return Err(SolverError::InvalidProblem("non-finite right-hand side".into()));
    }
    let n = grid.len();
    let b = prob.rhs.values();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(Solution {
            x: ScalarField::zeros(grid),
            iterations: 0,
            residual: 0.0,
            rhs_norm: 0.0,
        });
    }
    let target = prob.tol * b_norm;
    let shift = prob.shift;
    let inv_diag: Option<Vec<f64>> = match prob.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(
            helmholtz_diagonal(&grid, shift)
                .into_iter()
                .map(|d| 1.0 / d)
                .collect(),
        ),
    };

    let mut x = match guess {
        Some(g) if g.grid() == &grid => g.values().to_vec(),
        _ => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0usize;

    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        helmholtz_apply(&grid, shift, x, ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
    };

    loop {
        // (Re)start from the true residual, with its mean removed.
        true_residual(&x, &mut r, &mut ap);
        let mean = r.iter().sum::<f64>() / n as f64;
        let c = mean / shift;
        for (xi, ri) in x.iter_mut().zip(r.iter_mut()) {
            *xi += c;
            *ri -= mean;
        }
        let mut rr = dot(&r, &r);
        if rr.sqrt() <= target {
            // Confirm against a fresh evaluation of the residual.
            true_residual(&x, &mut r, &mut ap);
            let res = dot(&r, &r).sqrt();
            if res <= target {
                return Ok(Solution {
                    x: ScalarField::from_values(grid, x).expect("same grid"),
                    iterations,
                    residual: res,
                    rhs_norm: b_norm,
                });
            }
        }
        if iterations >= prob.max_iter {
            return Err(SolverError::NoConvergence {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }

        let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
            Some(d) => {
                for i in 0..n {
                    z[i] = d[i] * r[i];
                }
            }
            None => z.copy_from_slice(r),
        };
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);

        while iterations < prob.max_iter {
            helmholtz_apply(&grid, shift, &p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            rr = 0.0;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
                rr += r[i] * r[i];
            }
            iterations += 1;
            if rr.sqrt() <= target {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if rr.sqrt() > target && iterations >= prob.max_iter {
            return Err(SolverError::NoConvergence {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
    }
}
