//! Regularized control solves `(H_r + α) f = Q_r B1`, the gate `Ψ^Z`, and
//! the volume estimate `s_α(r) = ψ ⟨f_{α,r}, B1⟩`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{final_snapshot, solve_forward_with, DEFAULT_CFL};
use crate::grids::{fmt_f64, Grid, SpaceFunction, TimeFunction, TimeGrid};
use crate::linalg::{exact_norm, spectral_norm};
use crate::operators::{control_b1, ConnectingOperator, RadiusFamily};
use crate::velocity::{dv_norm, travel_time, VelocityProfile};

/// Relative residual above which a solve is reported as unreliable.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Bounds used by the gate: `M₁ ≥ ‖Λ‖`, `M₂ = 2T M₁`, `M₃ = M₂ + 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl GateConstants {
    pub fn new(m1: f64, horizon: f64) -> Result<Self> {
        if !(m1 > 0.0 && m1.is_finite()) || !(horizon > 0.0) {
            return Err(Error::InvalidInput(format!("gate bound M1 = {m1} must be positive")));
        }
        let m2 = 2.0 * horizon * m1;
        Ok(Self { m1, m2, m3: m2 + 3.0 })
    }

    /// `M₁ = ‖Λ̃‖ + ε` from the data at hand.
    pub fn from_data(lambda: &DMatrix<f64>, grid: &TimeGrid, epsilon: f64) -> Result<Self> {
        let norm = spectral_norm(lambda, &grid.weights())?;
        Self::new(norm + epsilon, grid.horizon())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// The continuous cutoff `Ψ^Z_α(s)`.
pub fn gate_value(s: f64, alpha: f64, m3: f64) -> f64 {
    if s <= m3 - alpha / 2.0 {
        1.0
    } else if s > m3 - alpha / 4.0 {
        0.0
    } else {
        -4.0 * s / alpha + 4.0 * m3 / alpha - 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    /// `sup_r ‖M₃ − (H_r + α)‖` over the sampled radii.
    pub norm: f64,
    pub psi: f64,
}

/// Evaluates the gate once for the whole family.
///
/// Off the window `M₃ − (H_r + α)` is `(M₃ − α)` times the identity, and a
/// compression of an operator never has a larger norm, so the supremum is
/// attained at the widest sampled window and is computed exactly there.
pub fn gate(family: &RadiusFamily, alpha: f64, gates: &GateConstants) -> Result<GateOutcome> {
    check_alpha(alpha)?;
    let shift = gates.m3 - alpha;
    let mut norm = if family.is_empty() { 0.0 } else { shift.abs() };
    if let Some(idx) = family.widest() {
        let window = family.window(idx);
        if !window.is_empty() {
            let weights = &family.grid().weights()[window.clone()];
            let block = DMatrix::identity(window.len(), window.len()) * shift - family.block(idx);
            norm = norm.max(exact_norm(&block, weights));
        }
    }
    Ok(GateOutcome {
        norm,
        psi: gate_value(norm, alpha, gates.m3),
    })
}

/// One regularized minimizer `f_{α,r}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSolve {
    pub radius: f64,
    pub alpha: f64,
    pub control: TimeFunction,
    /// `‖(H_r + α) f − Q_r B1‖ / ‖Q_r B1‖` on the window.
    pub residual: f64,
    pub psi: f64,
}

/// Solves `(H_r + α) f = Q_r B1` on the active window of radius `idx`.
pub fn solve_control(family: &RadiusFamily, idx: usize, alpha: f64, psi: f64) -> Result<ControlSolve> {
    if !(alpha > 0.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let grid = *family.grid();
    let b1 = control_b1(&grid);
    let window = family.window(idx);
    let radius = family.radii()[idx];
    let mut values = vec![0.0; grid.len()];
    if window.is_empty() {
        return Ok(ControlSolve {
            radius,
            alpha,
            control: TimeFunction::new(grid, values)?,
            residual: 0.0,
            psi,
        });
    }
    let mut a = family.block(idx);
    for i in 0..window.len() {
        a[(i, i)] += alpha;
    }
    let rhs = DVector::from_column_slice(&b1.values()[window.clone()]);
    let singular = |a: &DMatrix<f64>| {
        let sv = a.clone().singular_values();
        Error::SingularSystem {
            radius,
            condition: sv.max() / sv.min(),
        }
    };
    let f = match a.clone().lu().solve(&rhs) {
        Some(f) if f.iter().all(|v| v.is_finite()) => f,
        _ => return Err(singular(&a)),
    };
    let scale = rhs.norm();
    let residual = if scale > 0.0 {
        (&a * &f - &rhs).norm() / scale
    } else {
        0.0
    };
    if !residual.is_finite() {
        return Err(singular(&a));
    }
    values[window.clone()].copy_from_slice(f.as_slice());
    Ok(ControlSolve {
        radius,
        alpha,
        control: TimeFunction::new(grid, values)?,
        residual,
        psi,
    })
}

/// Sampled `s_α` with per-radius diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeEstimate {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub psi: f64,
    pub alpha: f64,
}

impl VolumeEstimate {
    /// Value at a sampled radius, if present.
    pub fn at(&self, r: f64, tol: f64) -> Option<f64> {
        self.radii
            .iter()
            .position(|x| (x - r).abs() <= tol)
            .map(|i| self.values[i])
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "s_alpha", "psi", "residual"])?;
        for i in 0..self.radii.len() {
            w.write_record([
                fmt_f64(self.radii[i]),
                fmt_f64(self.values[i]),
                fmt_f64(self.psi),
                fmt_f64(self.residuals[i]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

/// `s_α(r) = ψ ⟨(H_r + α)⁻¹ Q_r B1, B1⟩` on every radius of the family.
///
/// A closed gate skips the solves: `ψ = 0` annihilates the inverse.
pub fn volume_estimate(family: &RadiusFamily, alpha: f64, gates: &GateConstants) -> Result<VolumeEstimate> {
    let outcome = gate(family, alpha, gates)?;
    volume_estimate_with_gate(family, alpha, outcome.psi)
}

pub fn volume_estimate_with_gate(family: &RadiusFamily, alpha: f64, psi: f64) -> Result<VolumeEstimate> {
    check_alpha(alpha)?;
    let n = family.len();
    if psi == 0.0 {
        return Ok(VolumeEstimate {
            radii: family.radii().to_vec(),
            values: vec![0.0; n],
            residuals: vec![0.0; n],
            psi,
            alpha,
        });
    }
    let b1 = control_b1(family.grid());
    let rows = (0..n)
        .into_par_iter()
        .map(|idx| {
            let solve = solve_control(family, idx, alpha, psi)?;
            let s = psi * solve.control.inner_product(&b1)?;
            Ok((s, solve.residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, residuals) = rows.into_iter().unzip();
    Ok(VolumeEstimate {
        radii: family.radii().to_vec(),
        values,
        residuals,
        psi,
        alpha,
    })
}

/// Tikhonov functional `⟨f, Kf⟩ − 2⟨f, B1⟩ + α‖f‖²`.
pub fn energy(k: &ConnectingOperator, f: &TimeFunction, alpha: f64) -> Result<f64> {
    let b1 = control_b1(k.grid());
    Ok(k.form(f, f)? - 2.0 * f.inner_product(&b1)? + alpha * f.inner_product(f)?)
}

/// Final-time wave `U_T f` driven by the control `f` as an outward flux,
/// the sign under which the connecting operator is built.
pub fn control_wave(c: &VelocityProfile, f: &TimeFunction) -> Result<SpaceFunction> {
    let flipped = TimeFunction::new(*f.grid(), f.values().iter().map(|v| -v).collect())?;
    Ok(final_snapshot(&solve_forward_with(c, &flipped, DEFAULT_CFL)?))
}

/// Indicator of `M(r) = [0, χ(r)]` on the space grid.
pub fn domain_indicator(c: &VelocityProfile, r: f64) -> SpaceFunction {
    let edge = travel_time(c).chi(r);
    SpaceFunction::from_fn(*c.grid(), |x| if x <= edge { 1.0 } else { 0.0 })
}

/// `‖U_T f − 1_{M(r)}‖` in `L²(c⁻²dx)`.
pub fn focusing_error(c: &VelocityProfile, f: &TimeFunction, r: f64) -> Result<f64> {
    let wave = control_wave(c, f)?;
    let diff = wave.axpby(1.0, &domain_indicator(c, r), -1.0)?;
    dv_norm(&diff, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{assemble_ntd, NtdMatrix};
    use crate::grids::SpaceGrid;
    use crate::operators::{build_h, Projector};
    use crate::velocity::{ClassConstants, ProfileShape};
    use approx::assert_relative_eq;

    fn unit_speed(n_t: usize) -> (TimeGrid, VelocityProfile) {
        let tg = TimeGrid::new(1.0, n_t).unwrap();
        let sg = SpaceGrid::for_time_grid(&tg, 1.0, DEFAULT_CFL).unwrap();
        let class = ClassConstants {
            c0: 0.5,
            c1: 1.4,
            support: 1.0,
            m: 1.0,
        };
        let c = VelocityProfile::from_shape(sg, &ProfileShape::Constant { value: 1.0 }, class).unwrap();
        (tg, c)
    }

    #[test]
    fn gate_branches() {
        assert_eq!(gate_value(4.9, 0.1, 5.0), 1.0);
        assert_eq!(gate_value(5.0 - 0.025 + 1e-12, 0.1, 5.0), 0.0);
        assert_relative_eq!(gate_value(5.0 - 3.0 * 0.1 / 8.0, 0.1, 5.0), 0.5, epsilon = 1e-12);
        // continuous at both ends
        assert_relative_eq!(gate_value(5.0 - 0.05 + 1e-13, 0.1, 5.0), 1.0, epsilon = 1e-10);
        assert_relative_eq!(gate_value(5.0 - 0.025, 0.1, 5.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_family_gate_is_open() {
        let tg = TimeGrid::new(1.0, 16).unwrap();
        let h = build_h(&NtdMatrix::zeros(tg), &tg.all_radii(), Projector::LateWindow).unwrap();
        let gates = GateConstants {
            m1: 1.0,
            m2: 2.0,
            m3: 5.0,
        };
        let out = gate(&h, 0.1, &gates).unwrap();
        assert_relative_eq!(out.norm, 4.9, epsilon = 1e-12);
        assert_eq!(out.psi, 1.0);
        assert!(matches!(gate(&h, 0.0, &gates), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(gate(&h, 2.5, &gates), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn gate_constants_relations() {
        let g = GateConstants::new(1.5, 1.0).unwrap();
        assert_eq!(g.m2, 3.0);
        assert_eq!(g.m3, 6.0);
        assert!(GateConstants::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_radius_gives_zero_control() {
        let (tg, c) = unit_speed(64);
        let lam = assemble_ntd(&c, &tg).unwrap();
        let h = build_h(&lam, &[0.0], Projector::LateWindow).unwrap();
        let s = solve_control(&h, 0, 0.1, 1.0).unwrap();
        assert!(s.control.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_speed_volume_tends_to_radius() {
        let (tg, c) = unit_speed(256);
        let lam = assemble_ntd(&c, &tg).unwrap();
        let h = build_h(&lam, &[0.5], Projector::LateWindow).unwrap();
        let gates = GateConstants::from_data(lam.matrix(), &tg, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for alpha in [1e-2, 1e-3, 1e-4] {
            let est = volume_estimate(&h, alpha, &gates).unwrap();
            assert_eq!(est.psi, 1.0);
            assert!(est.max_residual() <= RESIDUAL_TOL);
            let err = (est.values[0] - 0.5).abs();
            assert!(err < last, "alpha {alpha}: {err}");
            last = err;
        }
        assert!(last < 0.01, "{last}");
    }

    #[test]
    fn closed_gate_zeroes_the_estimate() {
        let (tg, _) = unit_speed(16);
        let big = DMatrix::from_fn(17, 17, |i, j| if j <= i { 1e3 } else { 0.0 });
        let big = NtdMatrix::new(tg, big).unwrap();
        let h = build_h(&big, &tg.all_radii(), Projector::LateWindow).unwrap();
        let gates = GateConstants::new(1e-3, 1.0).unwrap();
        let est = volume_estimate(&h, 0.1, &gates).unwrap();
        assert_eq!(est.psi, 0.0);
        assert!(est.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_columns() {
        let est = VolumeEstimate {
            radii: vec![0.0, 0.5],
            values: vec![0.0, 0.25],
            residuals: vec![0.0, 1e-15],
            psi: 1.0,
            alpha: 0.1,
        };
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "r,s_alpha,psi,residual");
        assert_eq!(text.lines().count(), 3);
    }
}
