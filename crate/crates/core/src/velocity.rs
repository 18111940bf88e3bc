//! Admissible wave-speed profiles, travel-time coordinates and volume curves.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{fmt_f64, Grid, SpaceFunction, SpaceGrid};

const BOUNDARY_TOL: f64 = 1e-12;

/// Class constants of the admissible set: speed bounds `C₀ ≤ c ≤ C₁`,
/// support length `L` of `c − 1`, and the C² bound `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "L")]
    pub support: f64,
    pub m: f64,
}

/// Closed-form profile shapes used to build test and demo profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileShape {
    Constant {
        value: f64,
    },
    /// `1 + a sin²(π (x − x₀)/w)` on `(x₀, x₀ + w)`, 1 elsewhere.
    Bump {
        start: f64,
        width: f64,
        amplitude: f64,
    },
    /// Sum of two bumps (amplitudes may be negative).
    DoubleBump {
        first: [f64; 3],
        second: [f64; 3],
    },
    /// Smooth rise to `1 + a` on `[x₀, x₀ + ramp]`, flat, then a smooth fall
    /// ending at `x₁`.
    Plateau {
        start: f64,
        end: f64,
        ramp: f64,
        amplitude: f64,
    },
}

fn sin2_bump(x: f64, start: f64, width: f64, amplitude: f64) -> f64 {
    if x > start && x < start + width {
        let s = (std::f64::consts::PI * (x - start) / width).sin();
        amplitude * s * s
    } else {
        0.0
    }
}

impl ProfileShape {
    /// The default bump on `(0.25, 0.75)` with amplitude 0.3.
    pub fn standard_bump() -> Self {
        ProfileShape::Bump {
            start: 0.25,
            width: 0.5,
            amplitude: 0.3,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ProfileShape::Constant { value } => value,
            ProfileShape::Bump {
                start,
                width,
                amplitude,
            } => 1.0 + sin2_bump(x, start, width, amplitude),
            ProfileShape::DoubleBump { first, second } => {
                1.0 + sin2_bump(x, first[0], first[1], first[2]) + sin2_bump(x, second[0], second[1], second[2])
            }
            ProfileShape::Plateau {
                start,
                end,
                ramp,
                amplitude,
            } => {
                let half = std::f64::consts::FRAC_PI_2;
                let rise = if x <= start {
                    0.0
                } else if x < start + ramp {
                    (half * (x - start) / ramp).sin().powi(2)
                } else {
                    1.0
                };
                let fall = if x >= end {
                    0.0
                } else if x > end - ramp {
                    (half * (end - x) / ramp).sin().powi(2)
                } else {
                    1.0
                };
                1.0 + amplitude * rise.min(fall)
            }
        }
    }
}

/// A sampled wave speed `c(x)` together with its class constants.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityProfile {
    grid: SpaceGrid,
    samples: Vec<f64>,
    class: ClassConstants,
}

impl VelocityProfile {
    pub fn new(grid: SpaceGrid, samples: Vec<f64>, class: ClassConstants) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} speed samples for {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(i) = samples.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "speed sample {i} must be positive and finite, got {}",
                samples[i]
            )));
        }
        Ok(Self { grid, samples, class })
    }

    pub fn from_shape(grid: SpaceGrid, shape: &ProfileShape, class: ClassConstants) -> Result<Self> {
        let samples = grid.nodes().into_iter().map(|x| shape.eval(x)).collect();
        Self::new(grid, samples, class)
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn class(&self) -> &ClassConstants {
        &self.class
    }

    pub fn with_class(mut self, class: ClassConstants) -> Self {
        self.class = class;
        self
    }

    /// CSV with header `x,c`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "c"])?;
        for (x, c) in self.grid.nodes().iter().zip(&self.samples) {
            w.write_record([fmt_f64(*x), fmt_f64(*c)])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Piecewise-linear interpolation of the samples; constant beyond `x_max`.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate_uniform(&self.samples, self.grid.dx(), x)
    }

    /// Largest of `|c|`, `|c′|`, `|c″|` over the nodes, using centered
    /// differences in the interior and second-order one-sided stencils at
    /// the two ends.
    pub fn discrete_c2_norm(&self) -> f64 {
        let c = &self.samples;
        let n = c.len();
        let h = self.grid.dx();
        let mut norm = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for j in 0..n {
            let (d1, d2) = if j == 0 && n >= 4 {
                (
                    (-3.0 * c[0] + 4.0 * c[1] - c[2]) / (2.0 * h),
                    (2.0 * c[0] - 5.0 * c[1] + 4.0 * c[2] - c[3]) / (h * h),
                )
            } else if j == n - 1 && n >= 4 {
                (
                    (3.0 * c[j] - 4.0 * c[j - 1] + c[j - 2]) / (2.0 * h),
                    (2.0 * c[j] - 5.0 * c[j - 1] + 4.0 * c[j - 2] - c[j - 3]) / (h * h),
                )
            } else if j > 0 && j < n - 1 {
                (
                    (c[j + 1] - c[j - 1]) / (2.0 * h),
                    (c[j + 1] - 2.0 * c[j] + c[j - 1]) / (h * h),
                )
            } else {
                (0.0, 0.0)
            };
            norm = norm.max(d1.abs()).max(d2.abs());
        }
        norm
    }
}

pub(crate) fn interpolate_uniform(values: &[f64], step: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return values[0];
    }
    let pos = x / step;
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        return *values.last().expect("non-empty samples");
    }
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// One way in which a profile fails to be admissible.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    LowerBound { x: f64, value: f64 },
    UpperBound { x: f64, value: f64 },
    NotOneAtOrigin { value: f64 },
    NotOneBeyondSupport { x: f64, value: f64 },
    C2Norm { norm: f64, bound: f64 },
    BadConstants(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LowerBound { x, value } => write!(f, "lower bound: c({x}) = {value} < C0"),
            Violation::UpperBound { x, value } => write!(f, "upper bound: c({x}) = {value} > C1"),
            Violation::NotOneAtOrigin { value } => write!(f, "c(0) = {value} != 1"),
            Violation::NotOneBeyondSupport { x, value } => {
                write!(f, "support: c({x}) = {value} != 1 beyond L")
            }
            Violation::C2Norm { norm, bound } => {
                write!(f, "C2 norm {norm} exceeds m = {bound}")
            }
            Violation::BadConstants(msg) => write!(f, "class constants: {msg}"),
        }
    }
}

/// Lists every admissibility violation of `c`; empty means admissible.
pub fn validate_profile(c: &VelocityProfile) -> Vec<Violation> {
    let class = c.class;
    let mut out = Vec::new();
    if !(class.c0 > 0.0 && class.c0 <= class.c1 && class.support > 0.0 && class.m > 0.0) {
        out.push(Violation::BadConstants(format!("{class:?}")));
    }
    let grid = c.grid;
    for (j, &value) in c.samples.iter().enumerate() {
        let x = grid.node(j);
        if value < class.c0 {
            out.push(Violation::LowerBound { x, value });
        }
        if value > class.c1 {
            out.push(Violation::UpperBound { x, value });
        }
        if x >= class.support && (value - 1.0).abs() > BOUNDARY_TOL {
            out.push(Violation::NotOneBeyondSupport { x, value });
        }
    }
    if (c.samples[0] - 1.0).abs() > BOUNDARY_TOL {
        out.push(Violation::NotOneAtOrigin { value: c.samples[0] });
    }
    let norm = c.discrete_c2_norm();
    if norm > class.m {
        out.push(Violation::C2Norm { norm, bound: class.m });
    }
    out
}

/// Monotone piecewise-linear inversion: finds `s` with `table(s) = y` where
/// `table` is sampled at `args` and strictly increasing. Beyond the last
/// sample the map is continued with slope `tail_slope`.
pub(crate) fn invert_monotone(args: &[f64], table: &[f64], y: f64, tail_slope: f64) -> f64 {
    let n = table.len();
    if y <= table[0] {
        return args[0];
    }
    if y >= table[n - 1] {
        return args[n - 1] + (y - table[n - 1]) / tail_slope;
    }
    // first index with table[i] > y
    let i = table.partition_point(|v| *v <= y);
    let (t0, t1) = (table[i - 1], table[i]);
    let frac = (y - t0) / (t1 - t0);
    args[i - 1] + frac * (args[i] - args[i - 1])
}

/// Travel-time coordinate `τ(x) = ∫₀ˣ dx′/c` on the space nodes and its
/// inverse `χ`.
#[derive(Clone, Debug)]
pub struct TravelTimeMap {
    xs: Vec<f64>,
    tau: Vec<f64>,
    tail_speed: f64,
}

impl TravelTimeMap {
    /// `τ` at the space nodes.
    pub fn tau_table(&self) -> &[f64] {
        &self.tau
    }

    pub fn tau(&self, x: f64) -> f64 {
        if x >= *self.xs.last().unwrap() {
            return self.tau.last().unwrap() + (x - self.xs.last().unwrap()) / self.tail_speed;
        }
        let step = self.xs[1] - self.xs[0];
        interpolate_uniform(&self.tau, step, x)
    }

    /// `χ(t) = τ⁻¹(t)`.
    pub fn chi(&self, t: f64) -> f64 {
        invert_monotone(&self.xs, &self.tau, t, 1.0 / self.tail_speed)
    }

    pub fn chi_table(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.chi(t)).collect()
    }
}

/// Cumulative trapezoid of `1/c`, inverted by binary search.
pub fn travel_time(c: &VelocityProfile) -> TravelTimeMap {
    let dx = c.grid.dx();
    let mut tau = Vec::with_capacity(c.samples.len());
    tau.push(0.0);
    for w in c.samples.windows(2) {
        let last = *tau.last().unwrap();
        tau.push(last + 0.5 * dx * (1.0 / w[0] + 1.0 / w[1]));
    }
    TravelTimeMap {
        xs: c.grid.nodes(),
        tau,
        tail_speed: *c.samples.last().unwrap(),
    }
}

/// Sampled `V(r)`, the `dV = c⁻² dx` measure of `M(r) = [0, χ(r)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeCurve {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl VolumeCurve {
    /// Linear interpolation between the sampled radii.
    pub fn eval(&self, r: f64) -> f64 {
        let i = self.radii.partition_point(|x| *x <= r);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.radii.len() {
            return *self.values.last().unwrap();
        }
        let (r0, r1) = (self.radii[i - 1], self.radii[i]);
        let frac = (r - r0) / (r1 - r0);
        self.values[i - 1] * (1.0 - frac) + self.values[i] * frac
    }
}

/// `V(r) = ∫₀^{χ(r)} c(x)⁻² dx` by trapezoid quadrature on the space nodes,
/// with the last partial cell integrated against the interpolated integrand.
pub fn volume_curve(c: &VelocityProfile, radii: &[f64], horizon: f64) -> Result<VolumeCurve> {
    let map = travel_time(c);
    let dx = c.grid.dx();
    let integrand: Vec<f64> = c.samples.iter().map(|v| 1.0 / (v * v)).collect();
    let mut cumulative = Vec::with_capacity(integrand.len());
    cumulative.push(0.0);
    for w in integrand.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + 0.5 * dx * (w[0] + w[1]));
    }
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r >= 0.0 && r <= horizon * (1.0 + 1e-12)) {
            return Err(Error::RadiusOutOfRange { radius: r, horizon });
        }
        let x = map.chi(r);
        let pos = x / dx;
        let i = (pos.floor() as usize).min(integrand.len() - 1);
        if i + 1 >= integrand.len() {
            return Err(Error::InvalidInput(format!(
                "chi({r}) = {x} lies beyond the space grid"
            )));
        }
        let frac = pos - i as f64;
        let g0 = integrand[i];
        let gx = g0 + frac * (integrand[i + 1] - g0);
        values.push(cumulative[i] + 0.5 * frac * dx * (g0 + gx));
    }
    Ok(VolumeCurve {
        radii: radii.to_vec(),
        values,
    })
}

/// `(Σ w_j p_j² c_j⁻²)^{1/2}`.
pub fn dv_norm(p: &SpaceFunction, c: &VelocityProfile) -> Result<f64> {
    Ok(dv_inner(p, p, c)?.sqrt())
}

/// `Σ w_j p_j q_j c_j⁻²`.
pub fn dv_inner(p: &SpaceFunction, q: &SpaceFunction, c: &VelocityProfile) -> Result<f64> {
    p.same_grid(q)?;
    if *p.grid() != c.grid {
        return Err(Error::GridMismatch(
            "function and profile live on different space grids".into(),
        ));
    }
    Ok(p.values()
        .iter()
        .zip(q.values())
        .zip(&c.samples)
        .enumerate()
        .map(|(j, ((a, b), s))| c.grid.weight(j) * a * b / (s * s))
        .sum())
}
