//! Matrix-free spatial operators on the cell-centered grid.
//!
//! Homogeneous Neumann conditions are imposed by mirror ghost cells: the ghost
//! value across a boundary face equals the adjacent interior value, so every
//! normal difference (and every flux) through the boundary vanishes.

use thiserror::Error;

use crate::model::{Grid, ModelParameters, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    /// The signal dropped below the positivity floor; the singular
    /// sensitivity can no longer be evaluated reliably.
    #[error("signal minimum {min_v:e} is below the positivity floor {floor:e}")]
    SingularSignal { min_v: f64, floor: f64 },
}

/// Writes the 5-point Neumann Laplacian of `src` into `dst`.
pub fn laplacian_into(grid: &Grid, src: &[f64], dst: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ax = 1.0 / (grid.hx() * grid.hx());
    let ay = 1.0 / (grid.hy() * grid.hy());
    debug_assert_eq!(src.len(), nx * ny);
    debug_assert_eq!(dst.len(), nx * ny);
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        let up = if j + 1 == ny { row } else { row + nx };
        for i in 0..nx {
            let c = src[row + i];
            let w = if i == 0 { c } else { src[row + i - 1] };
            let e = if i + 1 == nx { c } else { src[row + i + 1] };
            let s = src[down + i];
            let n = src[up + i];
            dst[row + i] = ax * (w - 2.0 * c + e) + ay * (s - 2.0 * c + n);
        }
    }
}

/// Writes `shift·x − Δx` into `dst`; the operator inverted by the linear solver.
pub fn helmholtz_apply(grid: &Grid, shift: f64, x: &[f64], dst: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ax = 1.0 / (grid.hx() * grid.hx());
    let ay = 1.0 / (grid.hy() * grid.hy());
    let diag = shift + 2.0 * ax + 2.0 * ay;
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        let up = if j + 1 == ny { row } else { row + nx };
        for i in 0..nx {
            let c = x[row + i];
            let w = if i == 0 { c } else { x[row + i - 1] };
            let e = if i + 1 == nx { c } else { x[row + i + 1] };
            dst[row + i] = diag * c - ax * (w + e) - ay * (x[down + i] + x[up + i]);
        }
    }
}

/// Diagonal of `shift·I − Δ` (boundary cells lose the mirrored neighbours).
pub fn helmholtz_diagonal(grid: &Grid, shift: f64) -> Vec<f64> {
    let ax = 1.0 / (grid.hx() * grid.hx());
    let ay = 1.0 / (grid.hy() * grid.hy());
    let mut d = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        let ny_links = usize::from(j > 0) + usize::from(j + 1 < grid.ny);
        for i in 0..grid.nx {
            let nx_links = usize::from(i > 0) + usize::from(i + 1 < grid.nx);
            d.push(shift + ax * nx_links as f64 + ay * ny_links as f64);
        }
    }
    d
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(*f.grid());
    laplacian_into(f.grid(), f.values(), out.values_mut());
    out
}

/// Per-cell `|∇f|²` from central differences with mirror ghosts, so the
/// normal derivative is zero at the boundary.
pub fn gradient_squared(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let src = f.values();
    let cx = 0.5 / grid.hx();
    let cy = 0.5 / grid.hy();
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        let up = if j + 1 == ny { row } else { row + nx };
        for i in 0..nx {
            let c = src[row + i];
            let w = if i == 0 { c } else { src[row + i - 1] };
            let e = if i + 1 == nx { c } else { src[row + i + 1] };
            let gx = (e - w) * cx;
            let gy = (src[up + i] - src[down + i]) * cy;
            out[row + i] = gx * gx + gy * gy;
        }
    }
    ScalarField::from_values(grid, out).expect("same grid")
}

/// Face-normal fluxes. `flux_x` has `(nx+1)·ny` entries (vertical faces,
/// index `j·(nx+1) + i` is the face left of cell `i`); `flux_y` has
/// `nx·(ny+1)` entries (horizontal faces, index `j·nx + i` is the face below
/// cell `(i, j)`). Boundary entries are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxSet {
    pub nx: usize,
    pub ny: usize,
    pub flux_x: Vec<f64>,
    pub flux_y: Vec<f64>,
}

impl FaceFluxSet {
    fn zeros(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            flux_x: vec![0.0; (grid.nx + 1) * grid.ny],
            flux_y: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> f64 {
        self.flux_x[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> f64 {
        self.flux_y[j * self.nx + i]
    }

    /// Largest `|value|` over all faces.
    pub fn max_abs(&self) -> f64 {
        self.flux_x
            .iter()
            .chain(&self.flux_y)
            .fold(0.0, |m, f| m.max(f.abs()))
    }

    /// Writes the net outflux per unit area of every cell into `dst`.
    pub fn divergence_into(&self, grid: &Grid, dst: &mut [f64]) {
        let (nx, ny) = (grid.nx, grid.ny);
        let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
        for j in 0..ny {
            let fx = &self.flux_x[j * (nx + 1)..(j + 1) * (nx + 1)];
            let below = &self.flux_y[j * nx..(j + 1) * nx];
            let above = &self.flux_y[(j + 1) * nx..(j + 2) * nx];
            let out = &mut dst[j * nx..(j + 1) * nx];
            for i in 0..nx {
                out[i] = (fx[i + 1] - fx[i]) * ihx + (above[i] - below[i]) * ihy;
            }
        }
    }
}

/// Checks that `v` can be fed to the singular sensitivity.
pub fn check_signal(v: &ScalarField, floor: f64) -> Result<(), OperatorError> {
    let min_v = v.min();
    if min_v.is_nan() || min_v <= 0.0 || min_v < floor {
        return Err(OperatorError::SingularSignal { min_v, floor });
    }
    Ok(())
}

/// Taxis velocities `χ ∂v / v_face^k` on every interior face, with `v_face`
/// the arithmetic mean of the two adjacent cells.
pub fn taxis_velocities(
    v: &ScalarField,
    params: &ModelParameters,
    floor: f64,
) -> Result<FaceFluxSet, OperatorError> {
    check_signal(v, floor)?;
    let grid = *v.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let vals = v.values();
    let mut faces = FaceFluxSet::zeros(&grid);
    if params.chi == 0.0 {
        return Ok(faces);
    }
    let k = params.k;
    let sx = params.chi / grid.hx();
    let sy = params.chi / grid.hy();
    let sensitivity = |a: f64, b: f64| -> f64 {
        let mean = 0.5 * (a + b);
        if k == 0.0 {
            1.0
        } else {
            mean.powf(-k)
        }
    };
    for j in 0..ny {
        let row = &vals[j * nx..(j + 1) * nx];
        let fx = &mut faces.flux_x[j * (nx + 1)..(j + 1) * (nx + 1)];
        for i in 1..nx {
            let (a, b) = (row[i - 1], row[i]);
            fx[i] = sx * (b - a) * sensitivity(a, b);
        }
    }
    for j in 1..ny {
        let below = &vals[(j - 1) * nx..j * nx];
        let above = &vals[j * nx..(j + 1) * nx];
        let fy = &mut faces.flux_y[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let (a, b) = (below[i], above[i]);
            fy[i] = sy * (b - a) * sensitivity(a, b);
        }
    }
    Ok(faces)
}

/// Donor-cell fluxes `w · u_upwind` for face velocities `w`.
pub fn upwind_fluxes(u: &ScalarField, velocities: &FaceFluxSet) -> FaceFluxSet {
    let grid = *u.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let vals = u.values();
    let mut out = FaceFluxSet::zeros(&grid);
    for j in 0..ny {
        let row = &vals[j * nx..(j + 1) * nx];
        let w = &velocities.flux_x[j * (nx + 1)..(j + 1) * (nx + 1)];
        let f = &mut out.flux_x[j * (nx + 1)..(j + 1) * (nx + 1)];
        for i in 1..nx {
            let donor = if w[i] > 0.0 { row[i - 1] } else { row[i] };
            f[i] = w[i] * donor;
        }
    }
    for j in 1..ny {
        let below = &vals[(j - 1) * nx..j * nx];
        let above = &vals[j * nx..(j + 1) * nx];
        let w = &velocities.flux_y[j * nx..(j + 1) * nx];
        let f = &mut out.flux_y[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let donor = if w[i] > 0.0 { below[i] } else { above[i] };
            f[i] = w[i] * donor;
        }
    }
    out
}

/// Conservative upwind discretization of `χ ∇·(u v^{-k} ∇v)`: net outflux per
/// unit area of every cell. Integrates to zero up to rounding.
pub fn chemotactic_divergence(
    u: &ScalarField,
    v: &ScalarField,
    params: &ModelParameters,
) -> Result<ScalarField, OperatorError> {
    chemotactic_divergence_guarded(u, v, params, 0.0)
}

/// As [`chemotactic_divergence`], with an explicit lower floor for `v`.
pub fn chemotactic_divergence_guarded(
    u: &ScalarField,
    v: &ScalarField,
    params: &ModelParameters,
    floor: f64,
) -> Result<ScalarField, OperatorError> {
    let velocities = taxis_velocities(v, params, floor)?;
    let fluxes = upwind_fluxes(u, &velocities);
    let mut out = ScalarField::zeros(*u.grid());
    fluxes.divergence_into(u.grid(), out.values_mut());
    Ok(out)
}

/// Largest admissible explicit step for donor-cell transport with the given
/// face velocities: `min over faces of h / |w|` (infinite when all vanish).
pub fn transport_time_scale(grid: &Grid, velocities: &FaceFluxSet) -> f64 {
    let wx = velocities
        .flux_x
        .iter()
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let wy = velocities
        .flux_y
        .iter()
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let tx = if wx > 0.0 { grid.hx() / wx } else { f64::INFINITY };
    let ty = if wy > 0.0 { grid.hy() / wy } else { f64::INFINITY };
    tx.min(ty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignalMode;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(chi: f64, k: f64) -> ModelParameters {
        ModelParameters {
            chi,
            r: 1.0,
            mu: 1.0,
            k,
            alpha: 1.0,
            beta: 1.0,
            kappa: SignalMode::FullyParabolic,
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(7, 5, 2.0, 1.0).unwrap();
        let lap = laplacian(&ScalarField::constant(g, 3.25));
        assert!(lap.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_of_quadratic_is_two_in_interior() {
        let g = Grid::new(10, 4, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x * x);
        let lap = laplacian(&f);
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert!((lap.at(i, j) - 2.0).abs() < 1e-10, "{}", lap.at(i, j));
            }
        }
    }

    #[test]
    fn cosine_is_a_discrete_eigenfield() {
        for (nx, lx) in [(8, 1.0), (17, 2.5), (64, 1.0)] {
            let g = Grid::new(nx, 5, lx, 1.0).unwrap();
            let h = g.hx();
            let f = ScalarField::from_fn(g, |x, _| (PI * x / lx).cos());
            let eig = -(2.0 / (h * h)) * (1.0 - (PI * h / lx).cos());
            let lap = laplacian(&f);
            for (l, v) in lap.values().iter().zip(f.values()) {
                assert!((l - eig * v).abs() < 1e-9 * eig.abs(), "{l} vs {}", eig * v);
            }
        }
    }

    #[test]
    fn divergence_vanishes_for_flat_signal_or_empty_density() {
        let g = Grid::unit_square(6).unwrap();
        let u = ScalarField::from_fn(g, |x, y| 1.0 + x * y);
        let v = ScalarField::constant(g, 0.3);
        let d = chemotactic_divergence(&u, &v, &params(2.0, 0.5)).unwrap();
        assert!(d.values().iter().all(|&x| x == 0.0));
        let v = ScalarField::from_fn(g, |x, y| 1.0 + x + y * y);
        let d = chemotactic_divergence(&ScalarField::zeros(g), &v, &params(2.0, 0.5)).unwrap();
        assert!(d.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn three_cell_hand_computation() {
        // One row of (1, 4, 1) repeated in y, h = 1, chi = 1, k = 0.5.
        let g = Grid::new(3, 3, 3.0, 3.0).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let v = ScalarField::from_fn(g, |x, _| if (1.0..2.0).contains(&x) { 4.0 } else { 1.0 });
        let d = chemotactic_divergence(&u, &v, &params(1.0, 0.5)).unwrap();

        // Left face: speed (4-1)/1 / sqrt(2.5) > 0, donor is cell 0 (u = 1).
        let f1 = 3.0 / 2.5f64.sqrt() * 1.0;
        // Right face: speed (1-4)/1 / sqrt(2.5) < 0, donor is cell 2 (u = 1).
        let f2 = -3.0 / 2.5f64.sqrt() * 1.0;
        let expected = [f1, f2 - f1, -f2];
        for j in 0..3 {
            for (i, e) in expected.iter().enumerate() {
                assert!((d.at(i, j) - e).abs() < 1e-14, "cell {i}: {} vs {e}", d.at(i, j));
            }
        }
        // Density moves towards the signal peak.
        assert!(d.at(1, 1) < 0.0);
    }

    #[test]
    fn rejects_nonpositive_signal() {
        let g = Grid::unit_square(4).unwrap();
        let mut v = ScalarField::constant(g, 1.0);
        v.values_mut()[3] = 0.0;
        let err = chemotactic_divergence(&ScalarField::constant(g, 1.0), &v, &params(1.0, 0.5));
        assert!(matches!(err, Err(OperatorError::SingularSignal { .. })));
        let v = ScalarField::constant(g, 1e-6);
        let err = chemotactic_divergence_guarded(&v, &v, &params(1.0, 0.5), 1e-5);
        assert!(matches!(err, Err(OperatorError::SingularSignal { .. })));
    }

    #[test]
    fn boundary_faces_carry_no_flux() {
        let g = Grid::new(5, 4, 1.0, 1.0).unwrap();
        let v = ScalarField::from_fn(g, |x, y| 1.0 + (3.0 * x).sin() + y);
        let w = taxis_velocities(&v, &params(3.0, 0.5), 0.0).unwrap();
        let f = upwind_fluxes(&ScalarField::constant(g, 2.0), &w);
        for j in 0..g.ny {
            assert_eq!(f.x_face(0, j), 0.0);
            assert_eq!(f.x_face(g.nx, j), 0.0);
        }
        for i in 0..g.nx {
            assert_eq!(f.y_face(i, 0), 0.0);
            assert_eq!(f.y_face(i, g.ny), 0.0);
        }
    }

    #[test]
    fn gradient_squared_basic_cases() {
        let g = Grid::new(9, 4, 1.0, 1.0).unwrap();
        assert!(gradient_squared(&ScalarField::constant(g, 2.0))
            .values()
            .iter()
            .all(|&x| x == 0.0));
        let lin = gradient_squared(&ScalarField::from_fn(g, |x, _| x));
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert!((lin.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_squared_converges_at_second_order() {
        let err = |n: usize| {
            let g = Grid::new(n, 3, 1.0, 1.0).unwrap();
            let f = ScalarField::from_fn(g, |x, _| (PI * x).cos());
            let gs = gradient_squared(&f);
            (0..n)
                .map(|i| {
                    let x = g.x(i);
                    (gs.at(i, 1) - PI * PI * (PI * x).sin().powi(2)).abs()
                })
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| err(n)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..2.3).contains(&order), "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn transport_time_scale_uses_fastest_face() {
        let g = Grid::new(4, 4, 1.0, 2.0).unwrap();
        let mut w = FaceFluxSet::zeros(&g);
        assert_eq!(transport_time_scale(&g, &w), f64::INFINITY);
        w.flux_x[2] = -5.0;
        w.flux_y[6] = 4.0;
        // hx / 5 = 0.05, hy / 4 = 0.125
        assert!((transport_time_scale(&g, &w) - 0.05).abs() < 1e-15);
    }

    fn random_grid_fields() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>)> {
        (3usize..12, 3usize..12, 0.5f64..3.0, 0.5f64..3.0).prop_flat_map(|(nx, ny, lx, ly)| {
            let n = nx * ny;
            (
                Just(Grid::new(nx, ny, lx, ly).unwrap()),
                proptest::collection::vec(0.0f64..10.0, n),
                proptest::collection::vec(0.01f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn operators_conserve_mass((g, u, v) in random_grid_fields(), chi in 0.0f64..5.0, k in 0.0f64..0.99) {
            let u = ScalarField::from_values(g, u).unwrap();
            let v = ScalarField::from_values(g, v).unwrap();
            let l1 = u.map(f64::abs).integrate() + v.map(f64::abs).integrate();
            let lap = laplacian(&u);
            let lap_scale = lap.map(f64::abs).integrate().max(l1);
            prop_assert!(lap.integrate().abs() <= 1e-12 * lap_scale);
            let d = chemotactic_divergence(&u, &v, &params(chi, k)).unwrap();
            let d_scale = d.map(f64::abs).integrate().max(l1);
            prop_assert!(d.integrate().abs() <= 1e-12 * d_scale);
        }

        #[test]
        fn donor_cell_outflux_is_bounded((g, u, v) in random_grid_fields(), chi in 0.0f64..5.0, k in 0.0f64..0.99) {
            let u = ScalarField::from_values(g, u).unwrap();
            let v = ScalarField::from_values(g, v).unwrap();
            let w = taxis_velocities(&v, &params(chi, k), 0.0).unwrap();
            let f = upwind_fluxes(&u, &w);
            let (hx, hy) = (g.hx(), g.hy());
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let faces = [
                        (-f.x_face(i, j), -w.x_face(i, j), hy),
                        (f.x_face(i + 1, j), w.x_face(i + 1, j), hy),
                        (-f.y_face(i, j), -w.y_face(i, j), hx),
                        (f.y_face(i, j + 1), w.y_face(i, j + 1), hx),
                    ];
                    let out: f64 = faces.iter().map(|(fl, _, len)| fl.max(0.0) * len).sum();
                    let speeds: f64 = faces.iter().map(|(_, s, len)| s.max(0.0) * len).sum();
                    prop_assert!(out <= u.at(i, j) * speeds * (1.0 + 1e-12) + 1e-300);
                }
            }
        }

        #[test]
        fn laplacian_respects_reflection(n in 3usize..10, seed in proptest::collection::vec(0.0f64..1.0, 100)) {
            let g = Grid::new(n, n, 1.0, 1.0).unwrap();
            // symmetric under i -> n-1-i
            let f = ScalarField::from_fn(g, |x, y| {
                let i = (x / g.hx()) as usize;
                let j = (y / g.hy()) as usize;
                let m = i.min(n - 1 - i);
                seed[(m * 10 + j) % seed.len()]
            });
            let lap = laplacian(&f);
            for j in 0..n {
                for i in 0..n {
                    let (a, b) = (lap.at(i, j), lap.at(n - 1 - i, j));
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()) * (n * n) as f64);
                }
            }
        }
    }
}
