#![allow(dead_code)]

use bcwave::config::Config;
use bcwave::forward::{assemble_ntd_with, NtdMatrix};
use bcwave::grids::TimeGrid;
use bcwave::velocity::{ProfileShape, VelocityProfile};

pub struct Setup {
    pub config: Config,
    pub grid: TimeGrid,
    pub profile: VelocityProfile,
    pub data: NtdMatrix,
}

pub fn setup(n_t: usize, shape: ProfileShape) -> Setup {
    let config = Config {
        n_t,
        profile: shape,
        ..Config::default()
    };
    let grid = config.time_grid().unwrap();
    let profile = config.velocity().unwrap();
    let data = assemble_ntd_with(&profile, &grid, config.cfl).unwrap();
    Setup {
        config,
        grid,
        profile,
        data,
    }
}

pub fn bump(n_t: usize) -> Setup {
    setup(n_t, ProfileShape::standard_bump())
}

pub fn unit(n_t: usize) -> Setup {
    setup(n_t, ProfileShape::Constant { value: 1.0 })
}

/// Index of the sampled radius closest to `r`.
pub fn radius_index(radii: &[f64], r: f64) -> usize {
    (0..radii.len())
        .min_by(|&a, &b| (radii[a] - r).abs().total_cmp(&(radii[b] - r).abs()))
        .unwrap()
}
