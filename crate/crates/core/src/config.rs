//! JSON run configuration shared by the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::DEFAULT_CFL;
use crate::grids::{SpaceGrid, TimeGrid};
use crate::harness::NoiseKind;
use crate::operators::Projector;
use crate::postprocess::ReciprocalClamp;
use crate::regularize::{alpha_of_epsilon, epsilon_zero, Settings, StepPolicy};
use crate::velocity::{validate_profile, ClassConstants, ProfileShape, VelocityProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "L")]
    pub support: f64,
    pub m: f64,
    pub n_t: usize,
    /// Space intervals; derived from the Courant bound when absent.
    pub n_x: Option<usize>,
    pub cfl: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub projector: Projector,
    pub h_policy: StepPolicy,
    #[serde(rename = "M1_override")]
    pub m1_override: Option<f64>,
    pub reciprocal: ReciprocalClamp,
    pub profile: ProfileShape,
    /// Fraction of `epsilon` used by generated noise.
    pub theta: f64,
    pub noise_kind: NoiseKind,
    pub epsilons: Vec<f64>,
    /// Noise draws per level in the noise study.
    pub seeds: u64,
    pub alphas: Vec<f64>,
    /// Errors below this count as discretization limited in the alpha study.
    pub alpha_floor: f64,
    pub blago_pairs: usize,
    pub blago_tolerance: f64,
    pub refine_levels: Vec<usize>,
    /// Optional profile file (`x,c` CSV with sidecar) replacing `profile`.
    pub profile_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            c0: 0.9,
            c1: 1.4,
            support: 0.8,
            m: 25.0,
            n_t: 512,
            n_x: None,
            cfl: DEFAULT_CFL,
            epsilon: 1e-5,
            seed: 42,
            projector: Projector::LateWindow,
            h_policy: StepPolicy::Default,
            m1_override: None,
            reciprocal: ReciprocalClamp::Continuous,
            profile: ProfileShape::standard_bump(),
            theta: 1.0,
            noise_kind: NoiseKind::Gaussian,
            epsilons: vec![1e-3, 3e-4, 1e-4, 3e-5],
            seeds: 3,
            alphas: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            alpha_floor: 0.0,
            blago_pairs: 20,
            blago_tolerance: 0.02,
            refine_levels: vec![128, 256, 512],
            profile_path: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Config = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let class = self.class();
        if !(class.c0 > 0.0 && class.c0 <= 1.0 && class.c1 >= 1.0 && class.support > 0.0 && class.m > 0.0) {
            return Err(Error::InvalidInput(format!("class constants {class:?} are not usable")));
        }
        if !(self.horizon > class.support / class.c0) {
            return Err(Error::InvalidInput(format!(
                "horizon T = {} must exceed L/C0 = {}",
                self.horizon,
                class.support / class.c0
            )));
        }
        let alpha_max = alpha_of_epsilon(epsilon_zero(self.horizon, class.c1), self.horizon);
        if alpha_max > 2.0 {
            return Err(Error::InvalidInput(format!(
                "alpha(epsilon_0) = {alpha_max} exceeds 2 for T = {}",
                self.horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!("theta = {} outside [0, 1]", self.theta)));
        }
        self.time_grid()?;
        Ok(())
    }

    pub fn class(&self) -> ClassConstants {
        ClassConstants {
            c0: self.c0,
            c1: self.c1,
            support: self.support,
            m: self.m,
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_t)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        let time = self.time_grid()?;
        match self.n_x {
            Some(n) => SpaceGrid::with_intervals(&time, self.c1, n),
            None => SpaceGrid::for_time_grid(&time, self.c1, self.cfl),
        }
    }

    /// The true profile: from `profile_path` if set, else the closed-form
    /// shape on the configured space grid. Rejects inadmissible profiles.
    pub fn velocity(&self) -> Result<VelocityProfile> {
        let c = match &self.profile_path {
            Some(path) => crate::io::read_profile(path)?.0,
            None => VelocityProfile::from_shape(self.space_grid()?, &self.profile, self.class())?,
        };
        let violations = validate_profile(&c);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidInput(format!("profile is not admissible: {v}")));
        }
        Ok(c)
    }

    pub fn settings(&self, output_grid: SpaceGrid) -> Settings {
        Settings {
            class: self.class(),
            output_grid,
            projector: self.projector,
            step_policy: self.h_policy,
            reciprocal: self.reciprocal,
            m1_override: self.m1_override,
        }
    }
}
