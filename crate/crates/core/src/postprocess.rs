//! From a sampled volume curve to a velocity profile: difference quotients,
//! reciprocal and speed clamps, travel-time integration and pullback.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::VolumeEstimate;
use crate::error::{Error, Result};
use crate::grids::{fmt_f64, Grid, SpaceGrid};
use crate::velocity::{ClassConstants, VelocityProfile};

/// Piecewise-constant function on `(0, T)` with cells `[e_j, e_{j+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFunction {
    edges: Vec<f64>,
    values: Vec<f64>,
}

impl CellFunction {
    pub fn new(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} edges for {} cells",
                edges.len(),
                values.len()
            )));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) || edges[0] != 0.0 {
            return Err(Error::InvalidInput("cell edges must increase from 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite cell value".into()));
        }
        Ok(Self { edges, values })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn end(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Index of the cell containing `r`, clamped to the first and last cell.
    pub fn cell(&self, r: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|e| *e <= r)
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.values[self.cell(r)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            edges: self.edges.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn sup_distance(&self, g: impl Fn(f64) -> f64, samples_per_cell: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in self.values.iter().enumerate() {
            let (a, b) = (self.edges[j], self.edges[j + 1]);
            for k in 0..samples_per_cell {
                let r = a + (b - a) * (k as f64 + 0.5) / samples_per_cell as f64;
                worst = worst.max((v - g(r)).abs());
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell_left", "cell_right", "value"])?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([fmt_f64(self.edges[j]), fmt_f64(self.edges[j + 1]), fmt_f64(*v)])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

/// Output of the difference-quotient stage.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeCurve {
    pub step: f64,
    pub cells: CellFunction,
}

impl DerivativeCurve {
    /// Index `N` of the last cell `[Nh, T)`.
    pub fn last_index(&self) -> usize {
        self.cells.values().len() - 1
    }
}

/// `N = ⌈T/h⌉ − 1`, so that `T − h ≤ Nh < T`.
pub fn partition_count(horizon: f64, step: f64) -> usize {
    let ratio = horizon / step;
    let nearest = ratio.round();
    // guard against ratios like 3.0000000000000004
    let ceil = if (ratio - nearest).abs() < 1e-9 {
        nearest
    } else {
        ratio.ceil()
    };
    ceil as usize - 1
}

/// Cell edges `0, h, …, Nh, T`.
pub fn partition_edges(horizon: f64, step: f64) -> Vec<f64> {
    let n = partition_count(horizon, step);
    let mut edges: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();
    edges.push(horizon);
    edges
}

/// Difference quotients of `s` on the partition of step `h`.
///
/// `s` must be sampled at every partition endpoint; `tol` is the matching
/// tolerance for radii.
pub fn discrete_derivative(s: &VolumeEstimate, step: f64, horizon: f64, tol: f64) -> Result<DerivativeCurve> {
    if !(step > 0.0) || step >= horizon {
        return Err(Error::InvalidInput(format!(
            "difference step {step} outside (0, {horizon})"
        )));
    }
    let edges = partition_edges(horizon, step);
    let at = |r: f64| s.at(r, tol).ok_or(Error::MissingEndpoint(r));
    let n = edges.len() - 2;
    let mut values = Vec::with_capacity(n + 1);
    values.push(at(step)? / step);
    for j in 1..n {
        values.push((at(edges[j + 1])? - at(edges[j])?) / step);
    }
    if n >= 1 {
        values.push((at(horizon)? - at(edges[n])?) / step);
    }
    Ok(DerivativeCurve {
        step,
        cells: CellFunction::new(edges, values)?,
    })
}

/// How out-of-range difference quotients are mapped to speeds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReciprocalClamp {
    /// `clamp(1/k, C₀, C₁)`: continuous, range `[C₀, C₁]`.
    #[default]
    Continuous,
    /// Branch values `1/C₁` below `1/C₁` and `1/C₀` above `1/C₀`.
    Literal,
}

/// Piecewise-constant speed in travel-time coordinates on `(0, T)`; equal to
/// 1 on `[T, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedEstimate {
    pub cells: CellFunction,
}

impl SpeedEstimate {
    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.cells.end() {
            1.0
        } else {
            self.cells.eval(t)
        }
    }
}

pub fn reciprocal_value(k: f64, class: &ClassConstants, rule: ReciprocalClamp) -> f64 {
    let (low, high) = (1.0 / class.c1, 1.0 / class.c0);
    match rule {
        ReciprocalClamp::Continuous if k < low => class.c1,
        ReciprocalClamp::Continuous if k > high => class.c0,
        ReciprocalClamp::Literal if k < low => 1.0 / class.c1,
        ReciprocalClamp::Literal if k > high => 1.0 / class.c0,
        _ => 1.0 / k,
    }
}

pub fn clamp_reciprocal(k: &DerivativeCurve, class: &ClassConstants, rule: ReciprocalClamp) -> SpeedEstimate {
    SpeedEstimate {
        cells: k.cells.map(|v| reciprocal_value(v, class, rule)),
    }
}

pub fn clamp_speed(w: &SpeedEstimate, class: &ClassConstants) -> SpeedEstimate {
    SpeedEstimate {
        cells: w.cells.map(|v| v.clamp(class.c0, class.c1)),
    }
}

/// `χ̃(t) = ∫₀ᵗ w`, exact for piecewise-constant `w`; slope 1 past the last
/// cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TravelMap {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TravelMap {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.knots.len() - 1;
        if t >= self.knots[last] {
            return self.values[last] + (t - self.knots[last]);
        }
        let j = self.knots[1..].partition_point(|k| *k <= t);
        let slope = (self.values[j + 1] - self.values[j]) / (self.knots[j + 1] - self.knots[j]);
        self.values[j] + slope * (t - self.knots[j])
    }

    pub fn inverse(&self, x: f64) -> f64 {
        let last = self.knots.len() - 1;
        if x >= self.values[last] {
            return self.knots[last] + (x - self.values[last]);
        }
        let j = self.values[1..].partition_point(|v| *v <= x);
        let slope = (self.values[j + 1] - self.values[j]) / (self.knots[j + 1] - self.knots[j]);
        self.knots[j] + (x - self.values[j]) / slope
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "chi"])?;
        for (t, x) in self.knots.iter().zip(&self.values) {
            w.write_record([fmt_f64(*t), fmt_f64(*x)])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

pub fn integrate_speed(w: &SpeedEstimate) -> Result<TravelMap> {
    let edges = w.cells.edges();
    if let Some(v) = w.cells.values().iter().find(|v| **v <= 0.0) {
        return Err(Error::InvalidInput(format!("speed {v} is not positive")));
    }
    let mut values = Vec::with_capacity(edges.len());
    values.push(0.0);
    for (j, v) in w.cells.values().iter().enumerate() {
        values.push(values[j] + v * (edges[j + 1] - edges[j]));
    }
    Ok(TravelMap {
        knots: edges.to_vec(),
        values,
    })
}

/// `c̃(x) = w(χ̃⁻¹(x))` on `[0, L)` and 1 beyond, sampled on `grid`.
pub fn pullback(w: &SpeedEstimate, chi: &TravelMap, class: ClassConstants, grid: SpaceGrid) -> Result<VelocityProfile> {
    let samples = grid
        .nodes()
        .iter()
        .map(|&x| if x < class.support { w.eval(chi.inverse(x)) } else { 1.0 })
        .collect();
    VelocityProfile::new(grid, samples, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn class() -> ClassConstants {
        ClassConstants {
            c0: 0.5,
            c1: 2.0,
            support: 1.0,
            m: 10.0,
        }
    }

    fn linear_estimate(step: f64, n: usize, f: impl Fn(f64) -> f64) -> VolumeEstimate {
        let radii: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        VolumeEstimate {
            values: radii.iter().map(|r| f(*r)).collect(),
            residuals: vec![0.0; n + 1],
            radii,
            psi: 1.0,
            alpha: 0.1,
        }
    }

    #[test]
    fn partition_bounds() {
        for (t, h) in [(1.0, 0.25), (1.0, 0.3), (1.0, 0.1), (2.0, 0.7)] {
            let n = partition_count(t, h);
            assert!(t - h <= n as f64 * h + 1e-12 && (n as f64) * h < t, "{t} {h} {n}");
        }
        assert_eq!(partition_count(1.0, 0.25), 3);
    }

    #[test]
    fn derivative_of_linear_curve() {
        let s = linear_estimate(0.125, 8, |r| r);
        let d = discrete_derivative(&s, 0.25, 1.0, 1e-9).unwrap();
        assert_eq!(d.last_index(), 3);
        for v in d.cells.values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }
        // non-dividing step: last cell [Nh, T) gives (T − Nh)/h
        let s = linear_estimate(0.05, 20, |r| r);
        let d = discrete_derivative(&s, 0.3, 1.0, 1e-9).unwrap();
        assert_eq!(d.last_index(), 3);
        assert_relative_eq!(d.cells.values()[3], 0.1 / 0.3, epsilon = 1e-12);
        let zero = linear_estimate(0.125, 8, |_| 0.0);
        let d = discrete_derivative(&zero, 0.25, 1.0, 1e-9).unwrap();
        assert!(d.cells.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn missing_endpoint_rejected() {
        let s = linear_estimate(0.2, 5, |r| r);
        assert!(matches!(
            discrete_derivative(&s, 0.25, 1.0, 1e-9),
            Err(Error::MissingEndpoint(_))
        ));
        assert!(discrete_derivative(&s, 1.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn cell_lookup_uses_half_open_cells() {
        let f = CellFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(0.49), 1.0);
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(1.5), 2.0);
    }

    #[test]
    fn reciprocal_branches() {
        let c = class();
        let curve = |k| DerivativeCurve {
            step: 0.5,
            cells: CellFunction::new(vec![0.0, 0.5, 1.0], vec![k, k]).unwrap(),
        };
        let w = clamp_reciprocal(&curve(1.0), &c, ReciprocalClamp::Continuous);
        assert!(w.cells.values().iter().all(|v| *v == 1.0));
        assert_eq!(w.eval(1.0), 1.0);
        let w = clamp_reciprocal(&curve(10.0), &c, ReciprocalClamp::Continuous);
        assert!(w.cells.values().iter().all(|v| *v == c.c0));
        let w = clamp_reciprocal(&curve(0.0), &c, ReciprocalClamp::Continuous);
        assert!(w.cells.values().iter().all(|v| *v == c.c1));
        let w = clamp_reciprocal(&curve(10.0), &c, ReciprocalClamp::Literal);
        assert!(w.cells.values().iter().all(|v| *v == 2.0));
        let w = clamp_reciprocal(&curve(0.0), &c, ReciprocalClamp::Literal);
        assert!(w.cells.values().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn speed_clamp_is_idempotent() {
        let c = class();
        let w = SpeedEstimate {
            cells: CellFunction::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.1, 1.2, 3.0]).unwrap(),
        };
        let once = clamp_speed(&w, &c);
        assert_eq!(once.cells.values(), &[0.5, 1.2, 2.0]);
        assert_eq!(clamp_speed(&once, &c), once);
    }

    #[test]
    fn integration_is_exact_and_invertible() {
        let w = SpeedEstimate {
            cells: CellFunction::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, 2.0, 0.5]).unwrap(),
        };
        let chi = integrate_speed(&w).unwrap();
        assert_relative_eq!(chi.eval(0.25), 0.25, epsilon = 1e-15);
        assert_relative_eq!(chi.eval(0.375), 0.5, epsilon = 1e-15);
        assert_relative_eq!(chi.eval(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(chi.eval(1.5), 1.5, epsilon = 1e-15);
        for x in [0.0, 0.1, 0.6, 0.9, 1.2] {
            assert_relative_eq!(chi.eval(chi.inverse(x)), x, epsilon = 1e-14);
        }
        let unit = SpeedEstimate {
            cells: CellFunction::new(vec![0.0, 1.0], vec![0.5]).unwrap(),
        };
        assert_relative_eq!(integrate_speed(&unit).unwrap().eval(0.8), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn unit_speed_pulls_back_to_unit_profile() {
        let w = SpeedEstimate {
            cells: CellFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.0]).unwrap(),
        };
        let chi = integrate_speed(&w).unwrap();
        let grid = SpaceGrid::new(2.0, 40).unwrap();
        let c = pullback(&w, &chi, class(), grid).unwrap();
        assert!(c.samples().iter().all(|v| *v == 1.0));
    }
}
