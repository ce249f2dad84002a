//! Domain types: model constants, the rectangular grid, cell-centered
//! fields, simulation snapshots and initial data.

use std::fmt;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when parameters or initial data fall outside the admissible set.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("parameter `{field}` out of range: {value} ({constraint})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("grid invalid: {0}")]
    Grid(String),
    #[error("field `{0}` has negative entries")]
    NonnegativityViolation(&'static str),
    #[error("field `{0}` has zero total mass")]
    ZeroMass(&'static str),
    #[error("field `{0}` is not strictly positive")]
    PositivityViolation(&'static str),
    #[error("field `{0}` contains non-finite values")]
    NonFinite(&'static str),
    #[error("field `{0}` is defined on a different grid")]
    GridMismatch(&'static str),
}

/// Whether the signal equation carries a time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SignalMode {
    /// kappa = 0: the signal solves an elliptic equation at every instant.
    ParabolicElliptic,
    /// kappa = 1: the signal evolves by its own parabolic equation.
    FullyParabolic,
}

impl SignalMode {
    pub fn kappa(self) -> u8 {
        match self {
            SignalMode::ParabolicElliptic => 0,
            SignalMode::FullyParabolic => 1,
        }
    }
}

impl TryFrom<u8> for SignalMode {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(SignalMode::ParabolicElliptic),
            1 => Ok(SignalMode::FullyParabolic),
            other => Err(format!("kappa must be 0 or 1, got {other}")),
        }
    }
}

impl From<SignalMode> for u8 {
    fn from(mode: SignalMode) -> u8 {
        mode.kappa()
    }
}

/// Constants of the chemotaxis system
///
/// ```text
/// u_t       = Δu − χ ∇·(u v^{-k} ∇v) + r u − μ u²
/// κ v_t     = Δv − α v + β u
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParameters {
    /// Taxis strength.
    pub chi: f64,
    /// Logistic growth rate.
    pub r: f64,
    /// Logistic damping.
    pub mu: f64,
    /// Sensitivity exponent, strictly inside (0, 1).
    pub k: f64,
    /// Signal decay.
    pub alpha: f64,
    /// Signal production.
    pub beta: f64,
    pub kappa: SignalMode,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            chi: 1.0,
            r: 1.0,
            mu: 1.0,
            k: 0.5,
            alpha: 1.0,
            beta: 1.0,
            kappa: SignalMode::FullyParabolic,
        }
    }
}

fn out_of_range(field: &'static str, value: f64, constraint: &'static str) -> ValidationError {
    ValidationError::OutOfRange {
        field,
        value,
        constraint,
    }
}

impl ModelParameters {
    /// Checks the admissible range of the boundedness result: all rates
    /// strictly positive and `0 < k < 1`.
    pub fn validate(self) -> Result<Self, ValidationError> {
        let positive = [
            ("chi", self.chi),
            ("r", self.r),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(out_of_range(field, value, "must be finite and > 0"));
            }
        }
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(out_of_range("k", self.k, "must lie in (0, 1)"));
        }
        Ok(self)
    }

    /// Looser check used by the integrator. Degenerate cases (no taxis, no
    /// reaction) are legitimate numerical test problems even though they sit
    /// outside the range of [`ModelParameters::validate`].
    pub fn check_simulable(&self) -> Result<(), ValidationError> {
        let nonneg = [
            ("chi", self.chi),
            ("r", self.r),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (field, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(out_of_range(field, value, "must be finite and >= 0"));
            }
        }
        if !(self.k >= 0.0 && self.k < 1.0) {
            return Err(out_of_range("k", self.k, "must lie in [0, 1)"));
        }
        if self.kappa == SignalMode::ParabolicElliptic && self.alpha <= 0.0 {
            return Err(out_of_range(
                "alpha",
                self.alpha,
                "must be > 0 for the elliptic signal equation",
            ));
        }
        Ok(())
    }

    /// Spatially homogeneous equilibrium `(r/μ, βr/(αμ))`.
    pub fn homogeneous_equilibrium(&self) -> (f64, f64) {
        let u = self.r / self.mu;
        (u, self.beta * u / self.alpha)
    }
}

/// Uniform cell-centered discretization of `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
        }
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, ValidationError> {
        Grid { nx, ny, lx, ly }.validate()
    }

    pub fn unit_square(n: usize) -> Result<Self, ValidationError> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn validate(self) -> Result<Self, ValidationError> {
        if self.nx < 3 || self.ny < 3 {
            return Err(ValidationError::Grid(format!(
                "need at least 3 cells per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.lx.is_finite() && self.lx > 0.0 && self.ly.is_finite() && self.ly > 0.0) {
            return Err(ValidationError::Grid(format!(
                "side lengths must be positive, got {} x {}",
                self.lx, self.ly
            )));
        }
        Ok(self)
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of the domain, `lx · ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Row-major cell index.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

/// Errors reading or writing serialized fields.
#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

const FIELD_MAGIC: &[u8; 8] = b"KSFIELD1";

/// Real values at cell centers, stored row-major (`index = j·nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, ValidationError> {
        if values.len() != grid.len() {
            return Err(ValidationError::Grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Midpoint-rule integral over the domain.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Binary format: magic, `nx`, `ny` as little-endian u64, `lx`, `ly` and
    /// then `nx·ny` values as little-endian f64 in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.ny as u64).to_le_bytes())?;
        w.write_all(&self.grid.lx.to_le_bytes())?;
        w.write_all(&self.grid.ly.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FieldIoError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(FieldIoError::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let nx = u64::from_le_bytes(next(&mut r)?) as usize;
        let ny = u64::from_le_bytes(next(&mut r)?) as usize;
        let lx = f64::from_le_bytes(next(&mut r)?);
        let ly = f64::from_le_bytes(next(&mut r)?);
        let grid = Grid::new(nx, ny, lx, ly)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self { grid, values })
    }

    /// CSV format: the header row `nx,ny,lx,ly`, one row with those numbers,
    /// then one value per line in row-major order. Values are written in
    /// shortest round-trip form so a read recovers the exact bits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "nx,ny,lx,ly")?;
        writeln!(
            w,
            "{},{},{},{}",
            self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly
        )?;
        for v in &self.values {
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, FieldIoError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| FieldIoError::Format("empty file".into()))??;
        if header.trim() != "nx,ny,lx,ly" {
            return Err(FieldIoError::Format(format!("unexpected header `{header}`")));
        }
        let dims = lines
            .next()
            .ok_or_else(|| FieldIoError::Format("missing grid row".into()))??;
        let parts: Vec<&str> = dims.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(FieldIoError::Format(format!("bad grid row `{dims}`")));
        }
        let bad = |s: &str| FieldIoError::Format(format!("cannot parse `{s}`"));
        let nx: usize = parts[0].parse().map_err(|_| bad(parts[0]))?;
        let ny: usize = parts[1].parse().map_err(|_| bad(parts[1]))?;
        let lx: f64 = parts[2].parse().map_err(|_| bad(parts[2]))?;
        let ly: f64 = parts[3].parse().map_err(|_| bad(parts[3]))?;
        let grid = Grid::new(nx, ny, lx, ly)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let s = line.trim();
            if s.is_empty() {
                continue;
            }
            values.push(s.parse::<f64>().map_err(|_| bad(s))?);
        }
        Ok(Self::from_values(grid, values)?)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ScalarField({}x{}, min={:e}, max={:e})",
            self.grid.nx,
            self.grid.ny,
            self.min(),
            self.max()
        )
    }
}

/// Midpoint-rule integral of a field.
pub fn integrate(f: &ScalarField) -> f64 {
    f.integrate()
}

/// Snapshot of the solution pair at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
    /// Time step used to reach this state (the initial step size for `t = 0`).
    pub last_dt: f64,
    pub step_count: u64,
    /// CG iterations spent on the last step (both solves).
    pub last_iterations: usize,
}

impl SimState {
    pub fn initial(data: &InitialData, dt_init: f64) -> Self {
        Self {
            u: data.u0.clone(),
            v: data.v0.clone(),
            t: 0.0,
            last_dt: dt_init,
            step_count: 0,
            last_iterations: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `u ≥ 0`, `v > 0`, everything finite.
    pub fn satisfies_invariants(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.u.min() >= 0.0 && self.v.min() > 0.0
    }

    /// Reinterprets the snapshot as initial data for a restarted run.
    pub fn to_initial_data(&self) -> InitialData {
        InitialData {
            u0: self.u.clone(),
            v0: self.v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: ScalarField,
    pub v0: ScalarField,
}

impl InitialData {
    pub fn constant(grid: Grid, u0: f64, v0: f64) -> Self {
        Self {
            u0: ScalarField::constant(grid, u0),
            v0: ScalarField::constant(grid, v0),
        }
    }

    /// Requires `u0 ≥ 0` with positive mass and `v0 > 0` on `grid`.
    pub fn validate(self, grid: &Grid) -> Result<Self, ValidationError> {
        if self.u0.grid() != grid {
            return Err(ValidationError::GridMismatch("u0"));
        }
        if self.v0.grid() != grid {
            return Err(ValidationError::GridMismatch("v0"));
        }
        if !self.u0.is_finite() {
            return Err(ValidationError::NonFinite("u0"));
        }
        if !self.v0.is_finite() {
            return Err(ValidationError::NonFinite("v0"));
        }
        if self.u0.min() < 0.0 {
            return Err(ValidationError::NonnegativityViolation("u0"));
        }
        if !(self.u0.integrate() > 0.0) {
            return Err(ValidationError::ZeroMass("u0"));
        }
        if !(self.v0.min() > 0.0) {
            return Err(ValidationError::PositivityViolation("v0"));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> ModelParameters {
        ModelParameters::default()
    }

    #[test]
    fn accepts_admissible_parameters() {
        assert_eq!(base().validate(), Ok(base()));
    }

    #[test]
    fn rejects_k_equal_one() {
        let p = ModelParameters { k: 1.0, ..base() };
        match p.validate() {
            Err(ValidationError::OutOfRange { field, .. }) => assert_eq!(field, "k"),
            other => panic!("expected OutOfRange(k), got {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_growth_rate() {
        let p = ModelParameters { r: 0.0, ..base() };
        match p.validate() {
            Err(ValidationError::OutOfRange { field, .. }) => assert_eq!(field, "r"),
            other => panic!("expected OutOfRange(r), got {other:?}"),
        }
    }

    #[test]
    fn kappa_round_trips_through_integer() {
        assert_eq!(SignalMode::try_from(0), Ok(SignalMode::ParabolicElliptic));
        assert_eq!(SignalMode::try_from(1), Ok(SignalMode::FullyParabolic));
        assert!(SignalMode::try_from(2).is_err());
    }

    #[test]
    fn grid_rejects_too_few_cells() {
        assert!(Grid::new(2, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn grid_area_matches_domain() {
        for (nx, ny, lx, ly) in [(3, 3, 1.0, 1.0), (7, 13, 2.5, 0.3), (128, 64, 3.0, 7.0)] {
            let g = Grid::new(nx, ny, lx, ly).unwrap();
            let total = (nx * ny) as f64 * g.cell_area();
            assert!((total - lx * ly).abs() <= 4.0 * f64::EPSILON * lx * ly);
        }
    }

    #[test]
    fn initial_data_checks() {
        let g = Grid::unit_square(4).unwrap();
        assert!(InitialData::constant(g, 1.0, 1.0).validate(&g).is_ok());
        assert_eq!(
            InitialData::constant(g, 0.0, 1.0).validate(&g),
            Err(ValidationError::ZeroMass("u0"))
        );
        let mut d = InitialData::constant(g, 1.0, 1.0);
        d.v0.values_mut()[5] = 0.0;
        assert_eq!(d.validate(&g), Err(ValidationError::PositivityViolation("v0")));
        let mut d = InitialData::constant(g, 1.0, 1.0);
        d.u0.values_mut()[2] = -1e-3;
        assert_eq!(
            d.validate(&g),
            Err(ValidationError::NonnegativityViolation("u0"))
        );
    }

    #[test]
    fn integrate_constants_and_single_cell() {
        let g = Grid::unit_square(4).unwrap();
        assert_eq!(ScalarField::constant(g, 1.0).integrate(), 1.0);
        let g2 = Grid::new(5, 7, 2.0, 3.0).unwrap();
        let c = 1.75;
        assert!((ScalarField::constant(g2, c).integrate() - c * 6.0).abs() < 1e-13);
        let mut f = ScalarField::zeros(g);
        f.values_mut()[g.index(2, 1)] = 1.0;
        assert_eq!(f.integrate(), 1.0 / 16.0);
    }

    #[test]
    fn csv_and_binary_round_trip_exactly() {
        let g = Grid::new(4, 3, 1.3, 0.7).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (x * 17.0).sin() + y.exp() / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(ScalarField::read_csv(&buf[..]).unwrap(), f);
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        assert_eq!(ScalarField::read_binary(&bin[..]).unwrap(), f);
    }

    #[test]
    fn csv_layout_is_row_major() {
        let g = Grid::new(3, 3, 1.0, 1.0).unwrap();
        let f = ScalarField::from_values(g, (0..9).map(f64::from).collect()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "nx,ny,lx,ly");
        assert_eq!(lines[1], "3,3,1,1");
        assert_eq!(lines[2], "0.0");
        assert_eq!(lines[2 + g.index(1, 2)], "7.0");
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            vals in proptest::collection::vec(-1e3f64..1e3, 6 * 5),
            other in proptest::collection::vec(-1e3f64..1e3, 6 * 5),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let g = Grid::new(6, 5, 1.7, 0.9).unwrap();
            let f = ScalarField::from_values(g, vals).unwrap();
            let h = ScalarField::from_values(g, other).unwrap();
            let combo = f.zip_map(&h, |x, y| a * x + b * y);
            let lhs = combo.integrate();
            let rhs = a * f.integrate() + b * h.integrate();
            let scale = combo.map(f64::abs).integrate()
                .max(a.abs() * f.map(f64::abs).integrate() + b.abs() * h.map(f64::abs).integrate())
                .max(f64::MIN_POSITIVE);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale);
        }
    }
}
