//! Pipeline orchestration for the `projspec` binary: argument parsing,
//! configuration, staged outputs and run manifests.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

use args::{Cli, Command};
use config::PipelineConfig;
pub use error::{CliError, Result};

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::FitBasis(a) => commands::fit_basis_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Estimate(a) => {
            let m = commands::estimate_cmd(a)?;
            if let Some(r) = &m.result {
                println!("converged={} iterations={} final_cost={:e}", r.converged, r.iterations, r.final_cost);
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let report = commands::evaluate_cmd(a)?;
            println!("average_rmse={} average_delta_e00={}", report.average.rmse, report.average.delta_e00);
            Ok(())
        }
        Command::Run(a) => {
            let config = PipelineConfig::load(&a.config)?;
            let m = commands::run_pipeline(&config, &a.output)?;
            if let Some(r) = &m.result {
                println!(
                    "converged={} iterations={} average_rmse={} average_delta_e00={}",
                    r.converged,
                    r.iterations,
                    r.average_rmse.unwrap_or(f64::NAN),
                    r.average_delta_e00.unwrap_or(f64::NAN)
                );
            }
            Ok(())
        }
        Command::GenSurrogateSpd(a) => commands::gen_surrogate_spd_cmd(a),
        Command::GenSurrogateReflectance(a) => commands::gen_surrogate_reflectance_cmd(a),
        Command::GenCamera(a) => commands::gen_camera_cmd(a),
    }
}
