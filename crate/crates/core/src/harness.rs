//! Seeded noise, error metrics and the identity and refinement checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::control_wave;
use crate::error::{Error, Result};
use crate::forward::{assemble_ntd_with, NtdMatrix};
use crate::grids::{Grid, SpaceFunction, SpaceGrid, TimeFunction, TimeGrid};
use crate::linalg::exact_norm;
use crate::operators::{build_k, control_b1};
use crate::velocity::{dv_inner, dv_norm, ProfileShape, VelocityProfile};

pub use crate::linalg::spectral_norm;

/// Rank of the `lowrank` noise.
pub const LOW_RANK: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Independent standard-normal entries.
    #[default]
    Gaussian,
    /// Product of two Gaussian factors of rank [`LOW_RANK`].
    Lowrank,
    /// Gaussian entries on and below the diagonal.
    Causal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
    /// RNG stream, so several draws can share one seed.
    pub stream: u64,
    pub fill: f64,
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn new(epsilon: f64, seed: u64, fill: f64) -> Self {
        Self {
            epsilon,
            seed,
            stream: 0,
            fill,
            kind: NoiseKind::Gaussian,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) || !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::InvalidInput(format!(
                "noise needs epsilon >= 0 and fill in [0, 1], got {} and {}",
                self.epsilon, self.fill
            )));
        }
        Ok(())
    }
}

/// Random matrix with the requested structure and unit-free entries.
pub fn raw_noise(n: usize, kind: NoiseKind, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    match kind {
        NoiseKind::Gaussian => DMatrix::from_fn(n, n, |_, _| normal()),
        NoiseKind::Causal => DMatrix::from_fn(n, n, |i, j| if j <= i { normal() } else { 0.0 }),
        NoiseKind::Lowrank => {
            let u = DMatrix::from_fn(n, LOW_RANK, |_, _| normal());
            let v = DMatrix::from_fn(LOW_RANK, n, |_, _| normal());
            u * v
        }
    }
}

/// Perturbation with weighted spectral norm exactly `fill · epsilon`.
pub fn make_noise(grid: &TimeGrid, spec: &NoiseSpec) -> Result<NtdMatrix> {
    spec.validate()?;
    let target = spec.fill * spec.epsilon;
    if target == 0.0 {
        return Ok(NtdMatrix::zeros(*grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream);
    let raw = raw_noise(grid.len(), spec.kind, &mut rng);
    let norm = exact_norm(&raw, &grid.weights());
    NtdMatrix::new(*grid, raw * (target / norm))
}

/// `max_j |a_j − b_j|` over the common space grid.
pub fn sup_error(a: &VelocityProfile, b: &VelocityProfile) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("profiles live on different space grids".into()));
    }
    Ok(a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Random combination of sines on `(0, T)`, zero on `[T, 2T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomControl {
    terms: Vec<(f64, f64, f64)>,
    horizon: f64,
}

impl RandomControl {
    pub fn draw(rng: &mut ChaCha8Rng, horizon: f64, terms: usize) -> Self {
        let terms = (0..terms)
            .map(|k| {
                let amp: f64 = rng.sample(StandardNormal);
                let freq = (k + 1) as f64 + rng.random::<f64>();
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                (amp, freq, phase)
            })
            .collect();
        Self { terms, horizon }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.horizon {
            return 0.0;
        }
        let x = std::f64::consts::PI * t / self.horizon;
        self.terms.iter().map(|(a, f, p)| a * (f * x + p).sin()).sum()
    }

    pub fn sample(&self, grid: &TimeGrid) -> TimeFunction {
        TimeFunction::from_fn(*grid, |t| self.eval(t))
    }
}

/// Both sides of the two boundary-interior identities for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub data_side: f64,
    pub wave_side: f64,
    /// Difference scaled by `‖U_T f‖ ‖U_T h‖`.
    pub relative: f64,
    pub mass_data_side: f64,
    pub mass_wave_side: f64,
    /// Difference scaled by `‖U_T f‖ ‖1‖` on `[0, χ(T)]`.
    pub mass_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n_t: usize,
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn worst(&self) -> f64 {
        self.rows.iter().map(|r| r.relative).fold(0.0, f64::max)
    }

    pub fn worst_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.mass_relative).fold(0.0, f64::max)
    }
}

/// Compares `⟨f, Kh⟩` with `⟨U_T f, U_T h⟩` and `⟨f, B1⟩` with
/// `⟨U_T f, 1⟩` for `pairs` random smooth controls.
pub fn blago_check(c: &VelocityProfile, grid: &TimeGrid, pairs: usize, seed: u64, cfl: f64) -> Result<IdentityReport> {
    let lambda = assemble_ntd_with(c, grid, cfl)?;
    let k = build_k(&lambda);
    let b1 = control_b1(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls: Vec<(RandomControl, RandomControl)> = (0..pairs)
        .map(|_| {
            (
                RandomControl::draw(&mut rng, grid.horizon(), 6),
                RandomControl::draw(&mut rng, grid.horizon(), 6),
            )
        })
        .collect();
    let reach = crate::velocity::travel_time(c).chi(grid.horizon());
    let ones = SpaceFunction::from_fn(*c.grid(), |x| if x <= reach { 1.0 } else { 0.0 });
    let ones_norm = dv_norm(&ones, c)?;
    let rows = controls
        .iter()
        .map(|(fc, hc)| {
            let (f, h) = (fc.sample(grid), hc.sample(grid));
            let (uf, uh) = (control_wave(c, &f)?, control_wave(c, &h)?);
            let data_side = k.form(&f, &h)?;
            let wave_side = dv_inner(&uf, &uh, c)?;
            let scale = dv_norm(&uf, c)? * dv_norm(&uh, c)?;
            let mass_data_side = f.inner_product(&b1)?;
            let mass_wave_side = dv_inner(&uf, &ones, c)?;
            Ok(IdentityRow {
                data_side,
                wave_side,
                relative: (data_side - wave_side).abs() / scale,
                mass_data_side,
                mass_wave_side,
                mass_relative: (mass_data_side - mass_wave_side).abs() / (dv_norm(&uf, c)? * ones_norm),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentityReport {
        n_t: grid.intervals(),
        rows,
    })
}

/// One refinement level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefineRow {
    pub n_t: usize,
    /// `sup |Λ1 + min(t, T)|` for unit speed.
    pub trace_error: f64,
    /// Worst relative identity residual for the given profile.
    pub identity_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineReport {
    pub rows: Vec<RefineRow>,
    /// `log₂` ratios between consecutive levels (levels must double).
    pub trace_orders: Vec<f64>,
    pub identity_orders: Vec<f64>,
}

fn orders(errors: &[f64], levels: &[usize]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(levels.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect()
}

/// Runs the unit-speed trace and the identity check at each `n_t`.
pub fn refine_check(
    shape: &ProfileShape,
    class: crate::velocity::ClassConstants,
    horizon: f64,
    levels: &[usize],
    pairs: usize,
    seed: u64,
    cfl: f64,
) -> Result<RefineReport> {
    let mut rows = Vec::with_capacity(levels.len());
    for &n_t in levels {
        let grid = TimeGrid::new(horizon, n_t)?;
        let space = SpaceGrid::for_time_grid(&grid, class.c1, cfl)?;
        let unit = VelocityProfile::from_shape(space, &ProfileShape::Constant { value: 1.0 }, class)?;
        let lambda = assemble_ntd_with(&unit, &grid, cfl)?;
        let indicator = TimeFunction::from_fn(grid, |t| if t < horizon { 1.0 } else { 0.0 });
        let trace = lambda.apply(&indicator)?;
        let trace_error = grid
            .nodes()
            .iter()
            .zip(trace.values())
            .map(|(t, u)| (u + t.min(horizon)).abs())
            .fold(0.0, f64::max);
        let c = VelocityProfile::from_shape(space, shape, class)?;
        let identity_error = blago_check(&c, &grid, pairs, seed, cfl)?.worst();
        rows.push(RefineRow {
            n_t,
            trace_error,
            identity_error,
        });
    }
    let trace: Vec<f64> = rows.iter().map(|r| r.trace_error).collect();
    let identity: Vec<f64> = rows.iter().map(|r| r.identity_error).collect();
    Ok(RefineReport {
        trace_orders: orders(&trace, levels),
        identity_orders: orders(&identity, levels),
        rows,
    })
}
