//! Data-side operator calculus on the time grid: the triangle integral `J`,
//! time reversal `R`, the control `B1`, window projectors, the connecting
//! operator `K = JΛ − RΛRJ`, and the radius family `r ↦ Q_r K Q_r`.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{read_matrix_binary, write_matrix_binary, NtdMatrix};
use crate::grids::{Grid, TimeFunction, TimeGrid};

/// Which time window a radius selects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projector {
    /// Nodes with `T − r ≤ t < T`: controls that reach exactly `M(r)` by `t = T`.
    #[default]
    LateWindow,
    /// Nodes with `0 ≤ t < r`.
    EarlyWindow,
}

impl Projector {
    /// Index range of the nodes kept for a radius of `steps` time steps.
    pub fn window(&self, grid: &TimeGrid, steps: usize) -> Range<usize> {
        let mid = grid.mid_index();
        match self {
            Projector::LateWindow => mid - steps..mid,
            Projector::EarlyWindow => 0..steps,
        }
    }
}

/// Cumulative trapezoid `∫₀^{t_k} f`.
fn cumulative(f: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for w in f.windows(2) {
        out.push(out.last().unwrap() + 0.5 * dt * (w[0] + w[1]));
    }
    out
}

fn j_values(f: &[f64], grid: &TimeGrid) -> Vec<f64> {
    let n = grid.intervals();
    let mid = grid.mid_index();
    let acc = cumulative(f, grid.dt());
    (0..=n)
        .map(|i| if i < mid { 0.5 * (acc[n - i] - acc[i]) } else { 0.0 })
        .collect()
}

/// `(Jf)(t) = ½ ∫_t^{2T−t} f(s) ds` for `t < T` and 0 otherwise, by the
/// trapezoid rule on the nodes inside the triangle.
pub fn apply_j(f: &TimeFunction) -> TimeFunction {
    let values = j_values(f.values(), f.grid());
    TimeFunction::new(*f.grid(), values).expect("same grid")
}

/// `(Rf)(t) = f(2T − t)`.
pub fn apply_r(f: &TimeFunction) -> TimeFunction {
    let mut values = f.values().to_vec();
    values.reverse();
    TimeFunction::new(*f.grid(), values).expect("same grid")
}

/// `B1(t) = (T − t)` on `(0, T)`, zero elsewhere.
pub fn control_b1(grid: &TimeGrid) -> TimeFunction {
    let horizon = grid.horizon();
    TimeFunction::from_fn(*grid, |t| (horizon - t).max(0.0))
}

/// Zeroes every sample outside the window of radius `r`.
pub fn restrict(f: &TimeFunction, r: f64, projector: Projector) -> Result<TimeFunction> {
    let steps = f.grid().radius_steps(r)?;
    let window = projector.window(f.grid(), steps);
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| if window.contains(&i) { *v } else { 0.0 })
        .collect();
    TimeFunction::new(*f.grid(), values)
}

/// `J` as a dense matrix on nodal values.
pub fn j_matrix(grid: &TimeGrid) -> DMatrix<f64> {
    let n = grid.len();
    let mid = grid.mid_index();
    let last = grid.intervals();
    let dt = grid.dt();
    DMatrix::from_fn(n, n, |i, s| {
        if i >= mid || s < i || s > last - i {
            0.0
        } else if s == i || s == last - i {
            0.25 * dt
        } else {
            0.5 * dt
        }
    })
}

/// Weighted adjoint `W⁻¹ Aᵀ W`.
pub fn weighted_adjoint(a: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(j, i)] * weights[j] / weights[i])
}

/// The connecting operator built from (possibly noisy) boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectingOperator {
    grid: TimeGrid,
    matrix: DMatrix<f64>,
}

impl ConnectingOperator {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn from_matrix(grid: TimeGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.shape() != (n, n) {
            return Err(Error::GridMismatch(format!(
                "{:?} matrix for {n} time nodes",
                matrix.shape()
            )));
        }
        Ok(Self { grid, matrix })
    }

    pub fn apply(&self, f: &TimeFunction) -> Result<TimeFunction> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch("operator and function grids differ".into()));
        }
        let x = nalgebra::DVector::from_column_slice(f.values());
        TimeFunction::new(self.grid, (&self.matrix * x).as_slice().to_vec())
    }

    /// `⟨f, K h⟩` in the weighted product.
    pub fn form(&self, f: &TimeFunction, h: &TimeFunction) -> Result<f64> {
        f.inner_product(&self.apply(h)?)
    }

    /// Weighted self-adjoint part `(K + K*)/2`.
    pub fn symmetric_part(&self) -> ConnectingOperator {
        let adj = weighted_adjoint(&self.matrix, &self.grid.weights());
        ConnectingOperator {
            grid: self.grid,
            matrix: (&self.matrix + adj) * 0.5,
        }
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_matrix_binary(path, &self.grid, &self.matrix)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (grid, matrix) = read_matrix_binary(path)?;
        Self::from_matrix(grid, matrix)
    }
}

/// Connecting operator `K = JΛ_ν − RΛ_νRJ` in the nodal convention, where
/// `Λ_ν = −Λ` is the data for the outward flux `−∂ₓu(t, 0) = f`. With that
/// sign `⟨f, Kh⟩ = ⟨u^f(T), u^h(T)⟩` in `c⁻²dx`, for the waves of [`solve_forward`]
/// (both sides flip together).
///
/// [`solve_forward`]: crate::forward::solve_forward
pub fn build_k(lambda: &NtdMatrix) -> ConnectingOperator {
    let grid = *lambda.grid();
    let n = grid.len();
    let lam = lambda.matrix();
    // JΛ column by column
    let mut j_lam = DMatrix::zeros(n, n);
    for k in 0..n {
        let col: Vec<f64> = lam.column(k).iter().cloned().collect();
        let jc = j_values(&col, &grid);
        j_lam.column_mut(k).copy_from_slice(&jc);
    }
    // RΛR reverses both indices
    let r_lam_r = DMatrix::from_fn(n, n, |i, k| lam[(n - 1 - i, n - 1 - k)]);
    let second = r_lam_r * j_matrix(&grid);
    ConnectingOperator {
        grid,
        matrix: second - j_lam,
    }
}

/// The family `r ↦ H_r = Q_r K Q_r` over a set of grid-aligned radii.
///
/// `H_r` vanishes outside its index window, so only `K` and the windows are
/// stored; `block` extracts the active part.
#[derive(Clone, Debug)]
pub struct RadiusFamily {
    k: ConnectingOperator,
    radii: Vec<f64>,
    windows: Vec<Range<usize>>,
    projector: Projector,
}

impl RadiusFamily {
    pub fn connecting(&self) -> &ConnectingOperator {
        &self.k
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.k.grid
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn projector(&self) -> Projector {
        self.projector
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn window(&self, idx: usize) -> Range<usize> {
        self.windows[idx].clone()
    }

    /// Active block of `H_r` (rows and columns of the window).
    pub fn block(&self, idx: usize) -> DMatrix<f64> {
        let w = &self.windows[idx];
        self.k.matrix.view((w.start, w.start), (w.len(), w.len())).into_owned()
    }

    /// `H_r` as a full matrix on the time grid.
    pub fn full(&self, idx: usize) -> DMatrix<f64> {
        let n = self.k.grid.len();
        let w = &self.windows[idx];
        DMatrix::from_fn(n, n, |i, j| {
            if w.contains(&i) && w.contains(&j) {
                self.k.matrix[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Index of the radius with the largest window.
    pub fn widest(&self) -> Option<usize> {
        (0..self.windows.len()).max_by_key(|&i| self.windows[i].len())
    }

    /// Same windows on another connecting operator, e.g. a perturbed one.
    pub fn with_operator(&self, k: ConnectingOperator) -> Result<Self> {
        if k.grid != self.k.grid {
            return Err(Error::GridMismatch("operator lives on another grid".into()));
        }
        Ok(Self {
            k,
            radii: self.radii.clone(),
            windows: self.windows.clone(),
            projector: self.projector,
        })
    }
}

pub fn build_h(lambda: &NtdMatrix, radii: &[f64], projector: Projector) -> Result<RadiusFamily> {
    family_from_k(build_k(lambda), radii, projector)
}

pub fn family_from_k(k: ConnectingOperator, radii: &[f64], projector: Projector) -> Result<RadiusFamily> {
    let windows = radii
        .iter()
        .map(|&r| Ok(projector.window(&k.grid, k.grid.radius_steps(r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusFamily {
        k,
        radii: radii.to_vec(),
        windows,
        projector,
    })
}
