//! Example problems driven by the `adspec` binary. Each exposes a parameter
//! struct built from a [`Config`] and a function returning plain results, so
//! the same code backs the CLI and the acceptance tests.
//! [`run_command`] adds the file output.

mod config;
mod output;

pub mod burgers;
pub mod fhn;
pub mod orr_sommerfeld;
pub mod resolvent;
pub mod suite;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

pub use config::Config;
pub use output::RunOutput;

use crate::linalg::factorization_count;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    FhnPhase,
    NeutralCurve,
    Resolvent,
    BurgersOpt,
    Verify,
}

impl Command {
    pub const ALL: [Command; 5] = [Command::FhnPhase, Command::NeutralCurve, Command::Resolvent, Command::BurgersOpt, Command::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Command::FhnPhase => "fhn-phase",
            Command::NeutralCurve => "neutral-curve",
            Command::Resolvent => "resolvent",
            Command::BurgersOpt => "burgers-opt",
            Command::Verify => "verify",
        }
    }

    /// Keys accepted in the config file and as `--key value` flags.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::FhnPhase => fhn::FhnParams::KEYS,
            Command::NeutralCurve => orr_sommerfeld::NeutralCurveParams::KEYS,
            Command::Resolvent => resolvent::ResolventParams::KEYS,
            Command::BurgersOpt => burgers::BurgersParams::KEYS,
            Command::Verify => suite::SuiteParams::KEYS,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

/// What a finished command reports back to the caller.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub message: String,
}

/// Validate the config, run `command` and write its CSV files and
/// `summary.json` into `out_dir`.
///
/// Failed verification is reported through [`Outcome::passed`] after the
/// artifacts are written; solver failures are errors. A stalled line search
/// writes the last iterate before returning its error.
pub fn run_command(command: Command, cfg: &Config, out_dir: &Path, version: &str) -> Result<Outcome> {
    let facts0 = factorization_count();
    let name = command.name();
    match command {
        Command::FhnPhase => {
            let p = fhn::FhnParams::from_config(cfg)?;
            let out = RunOutput::create(out_dir)?;
            let r = fhn::run(&p)?;
            out.write_csv("phase_sensitivity.csv", &r.rows)?;
            let diag = json!({ "newton_iterations": r.newton_iterations, "factorizations": factorization_count() - facts0 });
            out.write_summary(name, version, &serde_json::to_value(&p)?, &diag, &serde_json::to_value(&r)?)?;
            Ok(Outcome {
                passed: true,
                message: format!(
                    "period {:.10}, |neutral Floquet eigenvalue| {:.2e}, phase tendency error {:.2e}",
                    r.period,
                    r.floquet_eigenvalue.0.hypot(r.floquet_eigenvalue.1),
                    r.tendency_error
                ),
            })
        }
        Command::NeutralCurve => {
            let p = orr_sommerfeld::NeutralCurveParams::from_config(cfg)?;
            let out = RunOutput::create(out_dir)?;
            let r = orr_sommerfeld::trace_neutral_curve(&p)?;
            out.write_csv("neutral_curve.csv", &r.points)?;
            let diag = json!({
                "eigensolves": r.total_eigensolves,
                "rejected_steps": r.rejected_steps,
                "factorizations": factorization_count() - facts0,
            });
            let results = json!({ "minimum": r.minimum, "points": r.points.len() });
            out.write_summary(name, version, &serde_json::to_value(&p)?, &diag, &results)?;
            let message = match &r.minimum {
                Some(m) => format!("{} points; minimum Re {:.4} at alpha {:.6}", r.points.len(), m.re, m.alpha),
                None => format!("{} points; minimum Re not bracketed", r.points.len()),
            };
            Ok(Outcome { passed: true, message })
        }
        Command::Resolvent => {
            let p = resolvent::ResolventParams::from_config(cfg)?;
            let out = RunOutput::create(out_dir)?;
            let r = resolvent::run(&p)?;
            out.write_csv("gains.csv", &r.gains)?;
            out.write_csv("optimal_profiles.csv", &r.profiles)?;
            let diag = json!({ "factorizations": factorization_count() - facts0 });
            out.write_summary(name, version, &serde_json::to_value(&p)?, &diag, &serde_json::to_value(&r)?)?;
            let peak = r.gains.iter().map(|g| g.sigma1).fold(0.0, f64::max);
            Ok(Outcome { passed: true, message: format!("peak sigma1 {peak:.6e} at omega {:.4}", r.peak_omega) })
        }
        Command::BurgersOpt => {
            let p = burgers::BurgersParams::from_config(cfg)?;
            let out = RunOutput::create(out_dir)?;
            let r = burgers::run(&p)?;
            out.write_json("trace.json", &r.trace)?;
            out.write_csv("trace.csv", &r.trace)?;
            out.write_csv("fields.csv", &r.fields)?;
            let diag = json!({
                "forward_steps": r.forward_steps,
                "recomputed_steps": r.recomputed_steps,
                "adjoint_steps": r.adjoint_steps,
                "integrator_factorizations": r.factorizations,
                "max_live_checkpoints": r.max_live,
                "factorizations": factorization_count() - facts0,
            });
            out.write_summary(name, version, &serde_json::to_value(&p)?, &diag, &serde_json::to_value(&r)?)?;
            if let Some(e) = r.stall_error() {
                return Err(e);
            }
            let slope = r.first_taylor.as_ref().map_or(Value::Null, |t| json!(t.slope));
            Ok(Outcome {
                passed: true,
                message: format!("{:?} after {} iterations, J = {:.3e}, first Taylor slope {slope}", r.outcome, r.iterations, r.final_cost),
            })
        }
        Command::Verify => {
            let p = suite::SuiteParams::from_config(cfg)?;
            let out = RunOutput::create(out_dir)?;
            let r = suite::run(&p)?;
            out.write_csv("verify_report.csv", &r.rows)?;
            let diag = json!({
                "adjoint_factorizations": r.adjoint_factorizations,
                "factorizations": factorization_count() - facts0,
            });
            let results = json!({ "passed": r.passed(), "failures": r.failures(), "checks": r.rows.len() });
            out.write_summary(name, version, &serde_json::to_value(&p)?, &diag, &results)?;
            let failures = r.failures();
            Ok(Outcome {
                passed: failures.is_empty(),
                message: if failures.is_empty() {
                    format!("all {} checks passed", r.rows.len())
                } else {
                    format!("failed checks: {}", failures.join(", "))
                },
            })
        }
    }
}
