//! Batch experiment runner: configuration, orchestration, persistence and
//! reports.

pub mod config;
pub mod report;
pub mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use starkscatter_core::{Error, ErrorKind};

pub use config::{ExperimentConfig, Scenario};
use run::Runner;

const REPRODUCIBILITY: &str = "CSV and JSON numbers are printed with 17 significant digits and are \
byte-reproducible for identical configs at any job count; .wfn binaries are bit-identical given the same \
FFT implementation (rustfft) and CPU feature set, otherwise equal to roundoff";

/// Failure of a CLI verb, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// Residual checks ran but at least one exceeded its tolerance.
    Checks(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Checks(names) => write!(f, "checks failed: {}", names.join(", ")),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) => match e.kind() {
                ErrorKind::Validation | ErrorKind::Io => 2,
                ErrorKind::NumericalGuard => 3,
                ErrorKind::PartialFailure => 4,
            },
            Failure::Checks(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Core(e) => match e.kind() {
                ErrorKind::Validation => "validation",
                ErrorKind::Io => "io",
                ErrorKind::NumericalGuard => "numerical-guard",
                ErrorKind::PartialFailure => "partial-failure",
            },
            Failure::Checks(_) => "check-failed",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> Value {
        json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": self.kind(),
            "message": self.to_string(),
        })
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Parse and validate without computing anything.
pub fn validate(path: &Path) -> Outcome<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Run one experiment. Returns the output directory.
pub fn run(path: &Path) -> Outcome<PathBuf> {
    let cfg = validate(path)?;
    run_config(&cfg)
}

pub fn run_config(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    cfg.validate()?;
    let out = cfg.resolved_output();
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let echo = cfg.to_toml()?;
    std::fs::write(out.join("config.toml"), &echo).map_err(Error::from)?;

    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut runner = Runner::new(cfg, out.clone());
    let result = runner.execute().map_err(Failure::from).and_then(|_| {
        let failed: Vec<String> = runner
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Checks(failed))
        }
    });

    let mut outputs = vec!["config.toml".to_string()];
    outputs.extend(runner.outputs.iter().cloned());
    let mut manifest = json!({
        "status": if result.is_ok() { "ok" } else { "error" },
        "scenario": cfg.scenario.name(),
        "config": cfg,
        "versions": {
            "starkscatter": env!("CARGO_PKG_VERSION"),
            "starkscatter-core": starkscatter_core::VERSION,
        },
        "started_unix": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "jobs": cfg.jobs,
        "stages": runner.stages,
        "checks": runner.checks,
        "outputs": outputs,
        "reproducibility": REPRODUCIBILITY,
    });
    if let Err(e) = &result {
        manifest["error"] = e.record();
        let text = serde_json::to_string_pretty(&e.record()).map_err(Error::from)?;
        std::fs::write(out.join("error.json"), text).map_err(Error::from)?;
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    std::fs::write(out.join("manifest.json"), text).map_err(Error::from)?;
    result.map(|_| out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let partial = Failure::Core(Error::PartialFailure {
            valid: 1,
            total: 10,
            required: 0.9,
        });
        assert_eq!(partial.exit_code(), 4);
        assert_eq!(partial.record()["kind"], "partial-failure");
        let guard = Failure::Core(Error::BoundaryMass {
            mass: 1.0,
            threshold: 1e-6,
            time: 0.0,
        });
        assert_eq!(guard.exit_code(), 3);
        assert_eq!(Failure::Checks(vec!["x".into()]).exit_code(), 3);
        assert_eq!(
            Failure::Core(Error::InvalidInput("x".into())).exit_code(),
            2
        );
    }
}
