//! Leapfrog solver for the Neumann problem
//! `u_tt = c(x)² u_xx`, `u_x(t, 0) = f(t)`, zero initial data,
//! and assembly of the discrete Neumann-to-Dirichlet matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{fmt_f64, Grid, SpaceFunction, SpaceGrid, TimeFunction, TimeGrid};
use crate::velocity::VelocityProfile;

/// Default Courant number bound `c_max dt / dx`.
pub const DEFAULT_CFL: f64 = 0.9;

/// Solution samples `u(t_n, x_j)` on the full space-time grid.
#[derive(Clone, Debug)]
pub struct WaveField {
    time: TimeGrid,
    space: SpaceGrid,
    values: Vec<f64>,
}

impl WaveField {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.space
    }

    /// Row `n`, i.e. `u(t_n, ·)`.
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.space.len();
        &self.values[n * w..(n + 1) * w]
    }

    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.row(n)[j]
    }
}

pub(crate) fn check_cfl(c: &VelocityProfile, time: &TimeGrid, limit: f64) -> Result<()> {
    let courant = c.max_speed() * time.dt() / c.grid().dx();
    if courant > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { courant, limit });
    }
    Ok(())
}

/// `scaled` holds the local Courant numbers `c_j dt / dx`.
/// Marches the scheme over the whole time grid, handing each new time level
/// to `visit(n, u_n)`. Levels before the first nonzero forcing sample are
/// identically zero and are reported without being computed.
fn march(scaled: &VelocityProfile, forcing: &[f64], mut visit: impl FnMut(usize, &[f64])) {
    let space = scaled.grid();
    let nx = space.len();
    let steps = forcing.len() - 1;
    let ratio: Vec<f64> = scaled.samples().iter().map(|s| s * s).collect();
    let dx = space.dx();

    let mut prev = vec![0.0; nx];
    let mut curr = vec![0.0; nx];
    let mut next = vec![0.0; nx];

    let first = forcing.iter().position(|v| *v != 0.0).unwrap_or(steps);
    for n in 0..=first.min(steps) {
        visit(n, &curr);
    }
    if first >= steps {
        for n in first + 1..=steps {
            visit(n, &curr);
        }
        return;
    }
    // cone: after the step into level n+1 only nodes j <= n + 1 - first can be nonzero
    let mut active = 0usize;
    for n in first..steps {
        let g = forcing[n];
        // Taylor start from zero data at t = 0 uses half the update.
        let start = n == 0;
        active = (active + 1).min(nx - 1);
        for j in 0..=active {
            let lap = if j == 0 {
                2.0 * (curr[1] - curr[0]) - 2.0 * dx * g
            } else if j == nx - 1 {
                2.0 * (curr[j - 1] - curr[j])
            } else {
                curr[j + 1] - 2.0 * curr[j] + curr[j - 1]
            };
            let update = ratio[j] * lap;
            next[j] = if start {
                curr[j] + 0.5 * update
            } else {
                2.0 * curr[j] - prev[j] + update
            };
        }
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
        visit(n + 1, &curr);
    }
}

fn scaled_profile(c: &VelocityProfile, time: &TimeGrid) -> VelocityProfile {
    // march() multiplies by s², so pass s = c dt / dx.
    let k = time.dt() / c.grid().dx();
    let samples = c.samples().iter().map(|s| s * k).collect();
    VelocityProfile::new(*c.grid(), samples, *c.class()).expect("positive samples stay positive")
}

/// Forward solve with the default Courant bound.
pub fn solve_forward(c: &VelocityProfile, f: &TimeFunction) -> Result<WaveField> {
    solve_forward_with(c, f, DEFAULT_CFL)
}

pub fn solve_forward_with(c: &VelocityProfile, f: &TimeFunction, cfl: f64) -> Result<WaveField> {
    let time = *f.grid();
    check_cfl(c, &time, cfl)?;
    let scaled = scaled_profile(c, &time);
    let nx = c.grid().len();
    let mut values = vec![0.0; time.len() * nx];
    march(&scaled, f.values(), |n, row| {
        values[n * nx..(n + 1) * nx].copy_from_slice(row);
    });
    Ok(WaveField {
        time,
        space: *c.grid(),
        values,
    })
}

fn trace_only(scaled: &VelocityProfile, forcing: &[f64]) -> Vec<f64> {
    let mut trace = vec![0.0; forcing.len()];
    march(scaled, forcing, |n, row| trace[n] = row[0]);
    trace
}

/// `u(t_i, 0)`.
pub fn boundary_trace(field: &WaveField) -> TimeFunction {
    let values = (0..field.time.len()).map(|n| field.at(n, 0)).collect();
    TimeFunction::new(field.time, values).expect("trace length matches the time grid")
}

/// `u(T, ·)`.
pub fn final_snapshot(field: &WaveField) -> SpaceFunction {
    let row = field.row(field.time.mid_index()).to_vec();
    SpaceFunction::new(field.space, row).expect("row length matches the space grid")
}

/// Leapfrog energy between levels `n` and `n + 1`; exactly conserved by the
/// scheme while the boundary flux vanishes.
pub fn discrete_energy(field: &WaveField, c: &VelocityProfile, n: usize) -> f64 {
    let dt = field.time.dt();
    let dx = field.space.dx();
    let (a, b) = (field.row(n), field.row(n + 1));
    let kinetic: f64 = (0..a.len())
        .map(|j| {
            let v = (b[j] - a[j]) / dt;
            field.space.weight(j) * v * v / (c.samples()[j] * c.samples()[j])
        })
        .sum();
    let potential: f64 = (0..a.len() - 1)
        .map(|j| (a[j + 1] - a[j]) * (b[j + 1] - b[j]) / dx)
        .sum();
    0.5 * (kinetic + potential)
}

/// How columns of an operator matrix are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Column `k` is the response to the `k`-th nodal hat function.
    Nodal,
}

/// Dense operator on nodal samples of the time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NtdMatrix {
    grid: TimeGrid,
    matrix: DMatrix<f64>,
    convention: Convention,
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    n_t: usize,
    #[serde(rename = "T")]
    horizon: f64,
    convention: Convention,
}

impl NtdMatrix {
    pub fn new(grid: TimeGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::GridMismatch(format!(
                "{}x{} matrix for {} time nodes",
                matrix.nrows(),
                matrix.ncols(),
                n
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self {
            grid,
            matrix,
            convention: Convention::Nodal,
        })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            matrix: DMatrix::zeros(n, n),
            convention: Convention::Nodal,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Plain matrix-vector product on nodal values.
    pub fn apply(&self, f: &TimeFunction) -> Result<TimeFunction> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch("operator and function grids differ".into()));
        }
        let x = nalgebra::DVector::from_column_slice(f.values());
        TimeFunction::new(self.grid, (&self.matrix * x).as_slice().to_vec())
    }

    /// `self + other`, e.g. data plus a noise perturbation.
    pub fn perturbed(&self, other: &NtdMatrix) -> Result<NtdMatrix> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("perturbation lives on another grid".into()));
        }
        NtdMatrix::new(self.grid, &self.matrix + &other.matrix)
    }

    /// Writes row-major little-endian f64 data to `path` and the JSON header
    /// to the sibling `.json` file.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_matrix_binary(path, &self.grid, &self.matrix)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (grid, matrix) = read_matrix_binary(path)?;
        NtdMatrix::new(grid, matrix)
    }

    /// Small-grid CSV export: `n_t + 1` rows of comma-separated entries.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(writer, &self.matrix)
    }
}

pub(crate) fn header_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub(crate) fn write_matrix_binary(path: &Path, grid: &TimeGrid, matrix: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(matrix.len() * 8);
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            bytes.extend_from_slice(&matrix[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let header = MatrixHeader {
        n_t: grid.intervals(),
        horizon: grid.horizon(),
        convention: Convention::Nodal,
    };
    let hp = header_path(path);
    fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))?;
    Ok(())
}

pub(crate) fn read_matrix_binary(path: &Path) -> Result<(TimeGrid, DMatrix<f64>)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: MatrixHeader = serde_json::from_str(&text)?;
    let grid = TimeGrid::new(header.horizon, header.n_t)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = grid.len();
    if bytes.len() != n * n * 8 {
        return Err(Error::InvalidInput(format!(
            "{} holds {} bytes, expected {} for n_t = {}",
            path.display(),
            bytes.len(),
            n * n * 8,
            header.n_t
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((grid, DMatrix::from_row_slice(n, n, &values)))
}

pub(crate) fn write_matrix_csv<W: Write>(writer: W, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for i in 0..matrix.nrows() {
        out.write_record((0..matrix.ncols()).map(|j| fmt_f64(matrix[(i, j)])))?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Discrete NtD matrix: column `k` is the boundary trace of the solve driven
/// by the `k`-th nodal basis function. Columns are solved in parallel.
pub fn assemble_ntd(c: &VelocityProfile, grid: &TimeGrid) -> Result<NtdMatrix> {
    assemble_ntd_with(c, grid, DEFAULT_CFL)
}

pub fn assemble_ntd_with(c: &VelocityProfile, grid: &TimeGrid, cfl: f64) -> Result<NtdMatrix> {
    check_cfl(c, grid, cfl)?;
    let scaled = scaled_profile(c, grid);
    let n = grid.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            trace_only(&scaled, &e)
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, k| columns[k][i]);
    NtdMatrix::new(*grid, matrix)
}
