//! Uniform time and space grids with trapezoid quadrature.
//!
//! Every discrete inner product in the crate is the trapezoid rule on one of
//! these grids. Discrete adjoints are taken with respect to that weighted
//! product: for a matrix `A` acting on nodal values, `A* = W⁻¹ Aᵀ W` where
//! `W` is the diagonal of quadrature weights.

use std::fmt::Debug;
use std::io::Write;

use crate::error::{Error, Result};

/// Relative slack used when checking that a value lies on the grid.
const ALIGN_TOL: f64 = 1e-9;

/// A one-dimensional node set with quadrature weights.
pub trait Grid: Clone + Debug + PartialEq {
    /// Number of nodes.
    fn len(&self) -> usize;
    fn node(&self, i: usize) -> f64;
    fn weight(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }
}

fn trapezoid_weight(i: usize, intervals: usize, step: f64) -> f64 {
    if i == 0 || i == intervals {
        0.5 * step
    } else {
        step
    }
}

/// Uniform grid on `[0, 2T]` with `n_t` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
    dt: f64,
}

impl TimeGrid {
    /// `n_t` must be even so that `t = T` is a node.
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon T must be positive, got {horizon}")));
        }
        if intervals < 2 || !intervals.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_t must be even and at least 2, got {intervals}"
            )));
        }
        Ok(Self {
            horizon,
            intervals,
            dt: 2.0 * horizon / intervals as f64,
        })
    }

    /// The horizon `T`; the grid spans `[0, 2T]`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the node `t = T`.
    pub fn mid_index(&self) -> usize {
        self.intervals / 2
    }

    /// Converts a radius in `[0, T]` into a whole number of time steps.
    pub fn radius_steps(&self, radius: f64) -> Result<usize> {
        if !(radius >= -ALIGN_TOL * self.horizon) || radius > self.horizon * (1.0 + ALIGN_TOL) {
            return Err(Error::RadiusOutOfRange {
                radius,
                horizon: self.horizon,
            });
        }
        let steps = (radius / self.dt).round();
        if (steps * self.dt - radius).abs() > ALIGN_TOL * self.dt.max(radius.abs()) {
            return Err(Error::MisalignedRadius { radius, dt: self.dt });
        }
        Ok(steps as usize)
    }

    /// All grid-aligned radii `0, dt, ..., T`.
    pub fn all_radii(&self) -> Vec<f64> {
        (0..=self.mid_index()).map(|k| self.node(k)).collect()
    }
}

impl Grid for TimeGrid {
    fn len(&self) -> usize {
        self.intervals + 1
    }

    fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            2.0 * self.horizon
        } else {
            i as f64 * self.dt
        }
    }

    fn weight(&self, i: usize) -> f64 {
        trapezoid_weight(i, self.intervals, self.dt)
    }
}

/// Uniform grid on `[0, x_max]`, the computational truncation of the half axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGrid {
    x_max: f64,
    intervals: usize,
    dx: f64,
}

impl SpaceGrid {
    pub fn new(x_max: f64, intervals: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() || intervals < 2 {
            return Err(Error::InvalidGrid(format!(
                "space grid needs x_max > 0 and n_x >= 2, got x_max = {x_max}, n_x = {intervals}"
            )));
        }
        Ok(Self {
            x_max,
            intervals,
            dx: x_max / intervals as f64,
        })
    }

    /// The coarsest grid compatible with `time` at Courant number `cfl` for
    /// speeds up to `c_max`, long enough that no wave launched at `x = 0`
    /// reaches `x_max` before `t = 2T`.
    pub fn for_time_grid(time: &TimeGrid, c_max: f64, cfl: f64) -> Result<Self> {
        if !(c_max > 0.0) || !(cfl > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "c_max and cfl must be positive, got {c_max}, {cfl}"
            )));
        }
        let dx = c_max * time.dt() / cfl;
        let reach = c_max * 2.0 * time.horizon();
        let intervals = (reach / dx).ceil() as usize + 2;
        Ok(Self {
            x_max: intervals as f64 * dx,
            intervals,
            dx,
        })
    }

    /// Same spacing as `for_time_grid` but with the spacing refined so that
    /// `n_x` intervals cover the required length.
    pub fn with_intervals(time: &TimeGrid, c_max: f64, intervals: usize) -> Result<Self> {
        let reach = c_max * 2.0 * time.horizon();
        let dx = reach / (intervals as f64 - 2.0);
        if intervals < 4 {
            return Err(Error::InvalidGrid(format!("n_x = {intervals} too small")));
        }
        Ok(Self {
            x_max: intervals as f64 * dx,
            intervals,
            dx,
        })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Checks the truncation invariant `x_max >= c_max * 2T + 2 dx`.
    pub fn covers(&self, time: &TimeGrid, c_max: f64) -> bool {
        self.x_max >= c_max * 2.0 * time.horizon() + 2.0 * self.dx - ALIGN_TOL * self.x_max
    }
}

impl Grid for SpaceGrid {
    fn len(&self) -> usize {
        self.intervals + 1
    }

    fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.x_max
        } else {
            i as f64 * self.dx
        }
    }

    fn weight(&self, i: usize) -> f64 {
        trapezoid_weight(i, self.intervals, self.dx)
    }
}

/// Nodal samples of a real function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<G: Grid> {
    grid: G,
    values: Vec<f64>,
}

pub type TimeFunction = GridFunction<TimeGrid>;
pub type SpaceFunction = GridFunction<SpaceGrid>;

impl<G: Grid> GridFunction<G> {
    pub fn new(grid: G, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite ({})", values[i])));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: G) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: G, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Weighted inner product `Σ w_i f_i g_i`.
    pub fn inner_product(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| self.grid.weight(i) * a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.weight(i) * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Pointwise linear combination `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Writes `node,value` rows under a one-line header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["node", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([fmt_f64(self.grid.node(i)), fmt_f64(*v)])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
