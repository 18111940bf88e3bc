//! Parameter schedules and the composed reconstruction map.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{gate, volume_estimate_with_gate, GateConstants, GateOutcome, VolumeEstimate};
use crate::error::{Error, Result};
use crate::forward::NtdMatrix;
use crate::grids::{SpaceGrid, TimeGrid};
use crate::operators::{build_h, Projector};
use crate::postprocess::{
    clamp_reciprocal, clamp_speed, discrete_derivative, integrate_speed, pullback, DerivativeCurve, ReciprocalClamp,
    SpeedEstimate, TravelMap,
};
use crate::velocity::{ClassConstants, VelocityProfile};

/// Exponent of the noise level in the schedule `α ∝ ε^p`.
pub const SCHEDULE_EXPONENT: f64 = 4.0 / 9.0;

/// `α(ε) = 2^{13/9} T^{4/9} ε^{4/9}`.
pub fn alpha_of_epsilon(epsilon: f64, horizon: f64) -> f64 {
    2f64.powf(13.0 / 9.0) * horizon.powf(4.0 / 9.0) * epsilon.powf(4.0 / 9.0)
}

/// Largest admissible noise level, with `χ(T)` replaced by its bound `C₁T`.
pub fn epsilon_zero(horizon: f64, c1: f64) -> f64 {
    let base = 2f64.powf(13.0 / 4.0) * horizon.powi(9);
    [
        1.0,
        1.0 / (2.0 * horizon),
        1.0 / base,
        1.0 / (base * (c1 * horizon).powf(4.5)),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// How the difference step depends on the noise level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    /// `h = (2Tε)^{1/2}`.
    #[default]
    Default,
    /// `h = ε₂^{1/2}` with `ε₂ = (2^{−2p}/3) T^{4−2p} ε^{1−2p}`.
    ProofFaithful,
}

pub fn raw_step(epsilon: f64, horizon: f64, policy: StepPolicy) -> f64 {
    let p = SCHEDULE_EXPONENT;
    match policy {
        StepPolicy::Default => (2.0 * horizon * epsilon).sqrt(),
        StepPolicy::ProofFaithful => {
            let level = 2f64.powf(-2.0 * p) / 3.0 * horizon.powf(4.0 - 2.0 * p) * epsilon.powf(1.0 - 2.0 * p);
            level.sqrt()
        }
    }
}

/// Smallest positive multiple of `dt` not below `h`.
pub fn snap_step(h: f64, dt: f64) -> f64 {
    let steps = (h / dt - 1e-9).ceil().max(1.0);
    steps * dt
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epsilon: f64,
    pub alpha: f64,
    pub step: f64,
    pub exponent: f64,
    pub horizon: f64,
    pub policy: StepPolicy,
}

impl Schedule {
    pub fn new(epsilon: f64, grid: &TimeGrid, policy: StepPolicy) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level {epsilon} must be positive")));
        }
        let horizon = grid.horizon();
        let step = snap_step(raw_step(epsilon, horizon, policy), grid.dt());
        if step >= horizon {
            return Err(Error::InvalidInput(format!(
                "difference step {step} is not below the horizon {horizon}"
            )));
        }
        Ok(Self {
            epsilon,
            alpha: alpha_of_epsilon(epsilon, horizon),
            step,
            exponent: SCHEDULE_EXPONENT,
            horizon,
            policy,
        })
    }
}

/// Everything besides the data and the noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub class: ClassConstants,
    /// Grid on which the reconstruction is sampled.
    pub output_grid: SpaceGrid,
    pub projector: Projector,
    pub step_policy: StepPolicy,
    pub reciprocal: ReciprocalClamp,
    pub m1_override: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub profile: VelocityProfile,
    pub schedule: Schedule,
    pub gate_constants: GateConstants,
    pub gate: GateOutcome,
    pub volume: VolumeEstimate,
    pub derivative: DerivativeCurve,
    /// After the reciprocal clamp.
    pub reciprocal: SpeedEstimate,
    /// After the speed clamp.
    pub speed: SpeedEstimate,
    pub travel: TravelMap,
}

#[derive(Serialize)]
struct Meta<'a> {
    schedule: &'a Schedule,
    gate_constants: &'a GateConstants,
    gate: &'a GateOutcome,
    max_residual: f64,
    class: &'a ClassConstants,
}

impl ReconstructionResult {
    /// Writes `c_tilde.csv`, `meta.json` and, if asked, `stages/*.csv`.
    pub fn write_bundle(&self, dir: &Path, stages: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |p: &Path| fs::File::create(p).map_err(|e| Error::io(p, e));
        self.profile.write_csv(create(&dir.join("c_tilde.csv"))?)?;
        let meta = Meta {
            schedule: &self.schedule,
            gate_constants: &self.gate_constants,
            gate: &self.gate,
            max_residual: self.volume.max_residual(),
            class: self.profile.class(),
        };
        let path = dir.join("meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
        if stages {
            let sd = dir.join("stages");
            fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
            self.volume.write_csv(create(&sd.join("s_alpha.csv"))?)?;
            self.derivative.cells.write_csv(create(&sd.join("derivative.csv"))?)?;
            self.reciprocal.cells.write_csv(create(&sd.join("reciprocal.csv"))?)?;
            self.speed.cells.write_csv(create(&sd.join("speed.csv"))?)?;
            self.travel.write_csv(create(&sd.join("chi.csv"))?)?;
        }
        Ok(())
    }
}

fn check_admissible(epsilon: f64, horizon: f64, c1: f64) -> Result<()> {
    let epsilon_zero = epsilon_zero(horizon, c1);
    if epsilon > 0.0 && epsilon < epsilon_zero {
        Ok(())
    } else {
        Err(Error::Inadmissible { epsilon, epsilon_zero })
    }
}

/// Runs data → `H` → gated inverse → `s_α` → `D_h` → `W` → clamp → `χ̃` →
/// pullback.
pub fn reconstruct(data: &NtdMatrix, epsilon: f64, settings: &Settings) -> Result<ReconstructionResult> {
    let grid = *data.grid();
    let class = settings.class;
    check_admissible(epsilon, grid.horizon(), class.c1)?;
    let schedule = Schedule::new(epsilon, &grid, settings.step_policy)?;
    if schedule.alpha > 2.0 {
        return Err(Error::AlphaOutOfRange(schedule.alpha));
    }
    let family = build_h(data, &grid.all_radii(), settings.projector)?;
    let gate_constants = match settings.m1_override {
        Some(m1) => GateConstants::new(m1, grid.horizon())?,
        None => GateConstants::from_data(data.matrix(), &grid, epsilon)?,
    };
    let outcome = gate(&family, schedule.alpha, &gate_constants)?;
    let volume = volume_estimate_with_gate(&family, schedule.alpha, outcome.psi)?;
    let derivative = discrete_derivative(&volume, schedule.step, grid.horizon(), 1e-6 * grid.dt())?;
    let reciprocal = clamp_reciprocal(&derivative, &class, settings.reciprocal);
    let speed = clamp_speed(&reciprocal, &class);
    let travel = integrate_speed(&speed)?;
    let profile = pullback(&speed, &travel, class, settings.output_grid)?;
    Ok(ReconstructionResult {
        profile,
        schedule,
        gate_constants,
        gate: outcome,
        volume,
        derivative,
        reciprocal,
        speed,
        travel,
    })
}
