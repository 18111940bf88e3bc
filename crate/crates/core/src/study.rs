//! Convergence studies over noise levels and regularization parameters.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{gate, volume_estimate_with_gate, GateConstants};
use crate::error::{Error, Result};
use crate::forward::NtdMatrix;
use crate::grids::fmt_f64;
use crate::harness::{make_noise, sup_error, NoiseKind, NoiseSpec};
use crate::operators::{build_h, Projector};
use crate::regularize::{reconstruct, Settings};
use crate::velocity::{volume_curve, VelocityProfile};

/// Relative slack allowed when checking that errors do not grow.
pub const MONOTONE_SLACK: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub parameter: f64,
    /// `None` for the noiseless reference row.
    pub seed: Option<u64>,
    pub error: Option<f64>,
    /// Envelope value `C p^q` at this row.
    pub envelope: f64,
    /// `ok` or the rejection message.
    pub status: String,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub parameter: String,
    pub metric: String,
    pub exponent: f64,
    pub constant: f64,
    /// Least-squares slope of `log error` against `log parameter`.
    pub slope: f64,
    pub envelope_ok: bool,
    pub monotone_ok: bool,
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.envelope_ok && self.monotone_ok
    }

    /// Per-row results; contains no timing so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            self.parameter.as_str(),
            "seed",
            self.metric.as_str(),
            "envelope",
            "status",
        ])?;
        for row in &self.rows {
            w.write_record([
                fmt_f64(row.parameter),
                row.seed.map_or_else(|| "none".to_string(), |s| s.to_string()),
                row.error.map_or_else(String::new, fmt_f64),
                fmt_f64(row.envelope),
                row.status.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }

    pub fn write_timings<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([self.parameter.as_str(), "seed", "seconds"])?;
        for row in &self.rows {
            w.write_record([
                fmt_f64(row.parameter),
                row.seed.map_or_else(|| "none".to_string(), |s| s.to_string()),
                format!("{:.3}", row.seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(p, e)| *p > 0.0 && *e > 0.0)
        .map(|(p, e)| (p.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Errors along decreasing parameter values must not grow beyond the slack.
fn non_increasing(series: &[(f64, f64)]) -> bool {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    sorted.windows(2).all(|w| w[1].1 <= (1.0 + MONOTONE_SLACK) * w[0].1)
}

/// Fits `C` at the largest parameter (worst case over rows there) and
/// checks every row against `C p^q`; rows below `floor` always pass.
fn finish(
    parameter: &str,
    metric: &str,
    exponent: f64,
    floor: f64,
    mut rows: Vec<StudyRow>,
    series: Vec<Vec<(f64, f64)>>,
    fit_rows: impl Fn(&StudyRow) -> bool,
) -> StudyReport {
    rows.sort_by(|a, b| a.parameter.total_cmp(&b.parameter).then(a.seed.cmp(&b.seed)));
    let ok: Vec<&StudyRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    let largest = ok.iter().map(|r| r.parameter).fold(f64::NAN, f64::max);
    let constant = ok
        .iter()
        .filter(|r| r.parameter == largest && fit_rows(r))
        .map(|r| r.error.unwrap() / largest.powf(exponent))
        .fold(0.0, f64::max);
    let mut envelope_ok = !ok.is_empty();
    for row in rows.iter_mut() {
        row.envelope = constant * row.parameter.powf(exponent);
        if let Some(e) = row.error {
            if e > row.envelope * (1.0 + 1e-12) && e > floor {
                envelope_ok = false;
            }
        }
    }
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| fit_rows(r))
        .filter_map(|r| r.error.map(|e| (r.parameter, e)))
        .collect();
    StudyReport {
        parameter: parameter.to_string(),
        metric: metric.to_string(),
        exponent,
        constant,
        slope: log_slope(&fit),
        envelope_ok,
        monotone_ok: series.iter().all(|s| non_increasing(s)),
        rows,
    }
}

/// Inputs of a noise study besides the exact data.
#[derive(Clone, Debug)]
pub struct NoiseStudy<'a> {
    pub epsilons: &'a [f64],
    pub seed: u64,
    /// Number of independent noise draws per level (RNG streams `0..draws`).
    pub draws: u64,
    pub fill: f64,
    pub kind: NoiseKind,
}

/// Reconstructs from `exact + noise` for every level and draw, plus one
/// noiseless row per level, and checks the `C ε^{1/18}` envelope.
pub fn run_noise_study(
    exact: &NtdMatrix,
    truth: &VelocityProfile,
    study: &NoiseStudy<'_>,
    settings: &Settings,
) -> Result<StudyReport> {
    let grid = *exact.grid();
    let jobs: Vec<(f64, Option<u64>)> = study
        .epsilons
        .iter()
        .flat_map(|&e| std::iter::once((e, None)).chain((0..study.draws).map(move |s| (e, Some(s)))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(epsilon, stream)| {
            let start = Instant::now();
            let outcome = (|| {
                let data = match stream {
                    None => exact.clone(),
                    Some(s) => {
                        let spec = NoiseSpec {
                            epsilon,
                            seed: study.seed,
                            stream: s,
                            fill: study.fill,
                            kind: study.kind,
                        };
                        exact.perturbed(&make_noise(&grid, &spec)?)?
                    }
                };
                let result = reconstruct(&data, epsilon, settings)?;
                sup_error(&result.profile, truth)
            })();
            let (error, status) = match outcome {
                Ok(e) => (Some(e), "ok".to_string()),
                Err(e) => (None, e.to_string()),
            };
            StudyRow {
                parameter: epsilon,
                seed: stream,
                error,
                envelope: 0.0,
                status,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect::<Vec<_>>();
    let mut keys: Vec<Option<u64>> = vec![None];
    keys.extend((0..study.draws).map(Some));
    let series = keys
        .iter()
        .map(|k| {
            rows.iter()
                .filter(|r| r.seed == *k)
                .filter_map(|r| r.error.map(|e| (r.parameter, e)))
                .collect()
        })
        .collect();
    Ok(finish("epsilon", "sup_error", 1.0 / 18.0, 0.0, rows, series, |r| {
        r.seed.is_some()
    }))
}

/// `‖s_α − V‖_∞` over all grid radii for each `α`, from exact data, with
/// the `C α^{1/4}` envelope; errors below `floor` count as discretization
/// limited.
pub fn run_alpha_study(
    exact: &NtdMatrix,
    truth: &VelocityProfile,
    alphas: &[f64],
    projector: Projector,
    gates: &GateConstants,
    floor: f64,
) -> Result<StudyReport> {
    let grid = *exact.grid();
    let radii = grid.all_radii();
    let family = build_h(exact, &radii, projector)?;
    let volume = volume_curve(truth, &radii, grid.horizon())?;
    let rows = alphas
        .iter()
        .map(|&alpha| {
            let start = Instant::now();
            let outcome = gate(&family, alpha, gates).and_then(|g| volume_estimate_with_gate(&family, alpha, g.psi));
            let (error, status) = match outcome {
                Ok(s) => {
                    let e = s
                        .values
                        .iter()
                        .zip(&volume.values)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    (Some(e), "ok".to_string())
                }
                Err(e) => (None, e.to_string()),
            };
            StudyRow {
                parameter: alpha,
                seed: None,
                error,
                envelope: 0.0,
                status,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect::<Vec<_>>();
    let series = vec![rows.iter().filter_map(|r| r.error.map(|e| (r.parameter, e))).collect()];
    Ok(finish("alpha", "sup_error", 0.25, floor, rows, series, |_| true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: f64, e: f64) -> StudyRow {
        StudyRow {
            parameter: p,
            seed: Some(0),
            error: Some(e),
            envelope: 0.0,
            status: "ok".into(),
            seconds: 0.0,
        }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|a: &f64| (*a, 3.0 * a.powf(0.5)))
            .collect();
        assert!((log_slope(&pts) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn envelope_and_monotonicity() {
        let rows = vec![row(1e-1, 0.5), row(1e-2, 0.2), row(1e-3, 0.1)];
        let series = vec![rows.iter().map(|r| (r.parameter, r.error.unwrap())).collect()];
        let rep = finish("alpha", "sup_error", 0.25, 0.0, rows, series, |_| true);
        assert!(rep.monotone_ok && rep.envelope_ok);
        assert_eq!(rep.rows[0].parameter, 1e-3);
        let bad = vec![row(1e-1, 0.1), row(1e-2, 0.2)];
        let series = vec![bad.iter().map(|r| (r.parameter, r.error.unwrap())).collect()];
        let rep = finish("alpha", "sup_error", 0.25, 0.0, bad, series, |_| true);
        assert!(!rep.monotone_ok && !rep.envelope_ok);
    }

    #[test]
    fn csv_has_no_timing() {
        let rows = vec![row(1e-1, 0.5)];
        let rep = finish("epsilon", "sup_error", 1.0 / 18.0, 0.0, rows, vec![], |_| true);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epsilon,seed,sup_error,envelope,status");
        assert!(!text.contains("seconds"));
    }
}
