use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bcwave::config::Config;
use bcwave::control::GateConstants;
use bcwave::error::{Error, Result};
use bcwave::forward::{assemble_ntd_with, NtdMatrix};
use bcwave::grids::Grid;
use bcwave::harness::{blago_check, refine_check, sup_error};
use bcwave::io::{read_profile, write_profile};
use bcwave::regularize::reconstruct;
use bcwave::study::{run_alpha_study, run_noise_study, NoiseStudy, StudyReport};

#[derive(Parser)]
#[command(
    name = "bcwave",
    version,
    about = "Regularized boundary-data inversion for the 1D wave equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Profile → NtD matrix (`ntd.bin` + header) and `profile.csv`.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Also write the matrix as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// NtD matrix + noise level → result bundle.
    Invert {
        #[command(flatten)]
        common: Common,
        /// NtD binary written by `forward`.
        #[arg(long)]
        data: PathBuf,
        /// Noise level; defaults to the configured epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Profile CSV to compare against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        dump_stages: bool,
    },
    /// Reconstruction error over noise levels and seeded draws.
    NoiseStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Volume-curve error over regularization parameters.
    AlphaStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Boundary-interior identity residuals for random controls.
    BlagoCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Observed convergence orders of the forward solver.
    RefineCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(config)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn report_study(report: &StudyReport, out: &Path, stem: &str) -> Result<bool> {
    report.write_csv(create(&out.join(format!("{stem}.csv")))?)?;
    report.write_timings(create(&out.join(format!("{stem}_timings.csv")))?)?;
    write_json(&out.join(format!("{stem}.json")), report)?;
    println!(
        "{stem}: C = {:.4e}, slope = {:.4}, envelope {}, monotone {}",
        report.constant,
        report.slope,
        verdict(report.envelope_ok),
        verdict(report.monotone_ok)
    );
    Ok(report.passed())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Forward { common, csv } => {
            let config = load(&common)?;
            let c = config.velocity()?;
            let grid = config.time_grid()?;
            let lambda = assemble_ntd_with(&c, &grid, config.cfl)?;
            write_profile(&common.out.join("profile.csv"), &c, config.horizon)?;
            lambda.write_binary(&common.out.join("ntd.bin"))?;
            if csv {
                lambda.write_csv(create(&common.out.join("ntd.csv"))?)?;
            }
            println!(
                "wrote {}x{} NtD matrix to {}",
                grid.len(),
                grid.len(),
                common.out.display()
            );
            Ok(true)
        }
        Command::Invert {
            common,
            data,
            epsilon,
            truth,
            dump_stages,
        } => {
            let config = load(&common)?;
            let lambda = NtdMatrix::read_binary(&data)?;
            let truth = truth.map(|p| read_profile(&p)).transpose()?;
            let output_grid = match &truth {
                Some((c, _)) => *c.grid(),
                None => config.space_grid()?,
            };
            let epsilon = epsilon.unwrap_or(config.epsilon);
            let result = reconstruct(&lambda, epsilon, &config.settings(output_grid))?;
            result.write_bundle(&common.out, dump_stages)?;
            println!(
                "alpha = {:.4e}, h = {:.4e}, psi = {}",
                result.schedule.alpha, result.schedule.step, result.gate.psi
            );
            if let Some((c, _)) = truth {
                println!("sup error = {:.6e}", sup_error(&result.profile, &c)?);
            }
            Ok(true)
        }
        Command::NoiseStudy { common } => {
            let config = load(&common)?;
            let c = config.velocity()?;
            let lambda = assemble_ntd_with(&c, &config.time_grid()?, config.cfl)?;
            let study = NoiseStudy {
                epsilons: &config.epsilons,
                seed: config.seed,
                draws: config.seeds,
                fill: config.theta,
                kind: config.noise_kind,
            };
            let report = run_noise_study(&lambda, &c, &study, &config.settings(*c.grid()))?;
            report_study(&report, &common.out, "noise_study")
        }
        Command::AlphaStudy { common } => {
            let config = load(&common)?;
            let c = config.velocity()?;
            let grid = config.time_grid()?;
            let lambda = assemble_ntd_with(&c, &grid, config.cfl)?;
            let gates = match config.m1_override {
                Some(m1) => GateConstants::new(m1, config.horizon)?,
                None => GateConstants::from_data(lambda.matrix(), &grid, 0.0)?,
            };
            let report = run_alpha_study(
                &lambda,
                &c,
                &config.alphas,
                config.projector,
                &gates,
                config.alpha_floor,
            )?;
            report_study(&report, &common.out, "alpha_study")
        }
        Command::BlagoCheck { common } => {
            let config = load(&common)?;
            let c = config.velocity()?;
            let report = blago_check(&c, &config.time_grid()?, config.blago_pairs, config.seed, config.cfl)?;
            let mut w = csv::Writer::from_writer(create(&common.out.join("blago.csv"))?);
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| Error::io(&common.out, e))?;
            let ok = report.worst() <= config.blago_tolerance && report.worst_mass() <= config.blago_tolerance;
            println!(
                "worst relative residual {:.3e} (mass identity {:.3e}), tolerance {}: {}",
                report.worst(),
                report.worst_mass(),
                config.blago_tolerance,
                verdict(ok)
            );
            Ok(ok)
        }
        Command::RefineCheck { common } => {
            let config = load(&common)?;
            let report = refine_check(
                &config.profile,
                config.class(),
                config.horizon,
                &config.refine_levels,
                config.blago_pairs,
                config.seed,
                config.cfl,
            )?;
            let mut w = csv::Writer::from_writer(create(&common.out.join("refine.csv"))?);
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| Error::io(&common.out, e))?;
            write_json(&common.out.join("refine.json"), &report)?;
            let decreasing = report
                .rows
                .windows(2)
                .all(|p| p[1].trace_error < p[0].trace_error && p[1].identity_error < p[0].identity_error);
            println!(
                "trace orders {:?}, identity orders {:?}: {}",
                report.trace_orders,
                report.identity_orders,
                verdict(decreasing)
            );
            Ok(decreasing)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
