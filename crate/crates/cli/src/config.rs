//! Experiment configuration: one TOML file per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starkscatter_core::reconstruction::{ReconstructionSpec, SweepPlan};
use starkscatter_core::scattering::Frame;
use starkscatter_core::{ElectricField, Error, GridSpec, PotentialModel, Result, WavePacketSpec};

/// Environment variable that overrides `output_dir`.
pub const OUT_ENV: &str = "STARKSCATTER_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Coeffs,
    FreepropCheck,
    Propagate,
    Scatter,
    Sweep,
    Reconstruct,
    Invariants,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Coeffs => "coeffs",
            Scenario::FreepropCheck => "freeprop-check",
            Scenario::Propagate => "propagate",
            Scenario::Scatter => "scatter",
            Scenario::Sweep => "sweep",
            Scenario::Reconstruct => "reconstruct",
            Scenario::Invariants => "invariants",
        }
    }
}

/// Time window for the propagation scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimePlan {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Diagnostics every this many steps.
    #[serde(default = "default_every")]
    pub every: usize,
    /// Wavefunction snapshot every this many steps (0 = final state only).
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
}

/// Parameters of a batch of commutator evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterPlan {
    pub s: f64,
    pub lambdas: Vec<f64>,
    pub omega: Vec<f64>,
    pub phi: WavePacketSpec,
    /// Defaults to `phi`.
    #[serde(default)]
    pub psi: Option<WavePacketSpec>,
    #[serde(default = "default_geom")]
    pub geom_length: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub dt: f64,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
    /// Also recompute with `|T± − s|` doubled.
    #[serde(default = "default_true")]
    pub check_truncation: bool,
}

/// Tolerance overrides. Defaults are the acceptance tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Gauge ODE residual (max over components).
    pub ode_residual: f64,
    /// `c(t+1) − c(t)`.
    pub periodicity: f64,
    /// Relative norm drift of a propagation run.
    pub norm_drift: f64,
    /// Split-step versus exact free flow.
    pub free_split: f64,
    /// `‖S Φ‖ − ‖Φ‖`.
    pub unitarity: f64,
    /// Residual checks pass below this multiple of their Richardson tolerance.
    pub residual_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode_residual: 1e-8,
            periodicity: 1e-10,
            norm_drift: 1e-10,
            free_split: 1e-4,
            unitarity: 1e-8,
            residual_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; results are collected by key so output order does not
    /// depend on it.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Nodes per period for the gauge coefficient tables.
    #[serde(default = "default_mesh")]
    pub mesh_size: usize,
    pub field: ElectricField,
    #[serde(default)]
    pub potential: Option<PotentialModel>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub packet: Option<WavePacketSpec>,
    #[serde(default)]
    pub time: Option<TimePlan>,
    #[serde(default)]
    pub scatter: Option<ScatterPlan>,
    #[serde(default)]
    pub sweep: Option<SweepPlan>,
    #[serde(default)]
    pub reconstruct: Option<ReconstructionSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_every() -> usize {
    1
}

fn default_threshold() -> f64 {
    starkscatter_core::gauge::DEFAULT_BOUNDARY_THRESHOLD
}

fn default_geom() -> f64 {
    8.0
}

fn default_margin() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_jobs() -> usize {
    1
}

fn default_mesh() -> usize {
    1024
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn missing(section: &str, scenario: Scenario) -> Error {
    invalid(format!(
        "scenario {} needs a [{section}] section",
        scenario.name()
    ))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// TOML echo written next to the outputs.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("config echo: {e}")))
    }

    /// Output directory, honouring the environment override.
    pub fn resolved_output(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn dims(&self) -> usize {
        self.field.dims()
    }

    pub fn potential(&self) -> PotentialModel {
        self.potential
            .clone()
            .unwrap_or_else(|| PotentialModel::zero(self.dims()))
    }

    pub fn grid_spec(&self) -> Result<&GridSpec> {
        self.grid
            .as_ref()
            .ok_or_else(|| missing("grid", self.scenario))
    }

    pub fn packet(&self) -> Result<&WavePacketSpec> {
        self.packet
            .as_ref()
            .ok_or_else(|| missing("packet", self.scenario))
    }

    pub fn time(&self) -> Result<&TimePlan> {
        self.time
            .as_ref()
            .ok_or_else(|| missing("time", self.scenario))
    }

    pub fn scatter(&self) -> Result<&ScatterPlan> {
        self.scatter
            .as_ref()
            .ok_or_else(|| missing("scatter", self.scenario))
    }

    pub fn sweep(&self) -> Result<SweepPlan> {
        let mut plan = self
            .sweep
            .clone()
            .ok_or_else(|| missing("sweep", self.scenario))?;
        plan.jobs = self.jobs;
        Ok(plan)
    }

    pub fn reconstruction(&self) -> Result<&ReconstructionSpec> {
        self.reconstruct
            .as_ref()
            .ok_or_else(|| missing("reconstruct", self.scenario))
    }

    /// Schema-level checks that need no grid allocation or propagation.
    /// Physical guards that depend on built objects run in `crate::run`
    /// before the first step.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if self.jobs == 0 {
            return Err(invalid("jobs must be at least 1"));
        }
        if self.mesh_size < 8 {
            return Err(invalid("mesh_size must be at least 8"));
        }
        let pot = self.potential();
        pot.validate()?;
        use starkscatter_core::Potential;
        if pot.dims() != dims {
            return Err(Error::GridMismatch(format!(
                "potential is {}-dimensional, field is {dims}-dimensional",
                pot.dims()
            )));
        }
        if let Some(g) = &self.grid {
            if g.counts.len() != dims {
                return Err(Error::GridMismatch(format!(
                    "grid is {}-dimensional, field is {dims}-dimensional",
                    g.counts.len()
                )));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("ode_residual", t.ode_residual),
            ("periodicity", t.periodicity),
            ("norm_drift", t.norm_drift),
            ("free_split", t.free_split),
            ("unitarity", t.unitarity),
            ("residual_factor", t.residual_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("tolerance {name} must be positive")));
            }
        }
        match self.scenario {
            Scenario::Coeffs => {}
            Scenario::FreepropCheck | Scenario::Propagate => {
                self.grid_spec()?;
                check_packet(self.packet()?, dims)?;
                let time = self.time()?;
                if time.every == 0 {
                    return Err(invalid("time.every must be at least 1"));
                }
                starkscatter_core::PropagationPlan::new(time.t0, time.t1, time.dt)?
                    .with_threshold(time.boundary_threshold)
                    .validate()?;
            }
            Scenario::Scatter => {
                self.grid_spec()?;
                let sc = self.scatter()?;
                check_packet(&sc.phi, dims)?;
                if let Some(psi) = &sc.psi {
                    check_packet(psi, dims)?;
                }
                if sc.lambdas.is_empty() || sc.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite()))
                {
                    return Err(invalid(
                        "scatter.lambdas must be a non-empty list of positive energies",
                    ));
                }
                if sc.omega.len() != dims {
                    return Err(Error::GridMismatch(
                        "scatter.omega has the wrong dimension".into(),
                    ));
                }
            }
            Scenario::Sweep => {
                self.grid_spec()?;
                self.sweep()?.validate(self.field.mean())?;
            }
            Scenario::Reconstruct => {
                self.sweep()?.validate(self.field.mean())?;
                let spec = self.reconstruction()?;
                spec.output_grid()?;
                if spec.mode == starkscatter_core::reconstruction::Mode::Measured {
                    self.grid_spec()?;
                }
            }
            Scenario::Invariants => {
                self.grid_spec()?;
                check_packet(self.packet()?, dims)?;
                self.scatter()?;
            }
        }
        Ok(())
    }
}

fn check_packet(spec: &WavePacketSpec, dims: usize) -> Result<()> {
    if spec.center.len() != dims || spec.sigma.len() != dims {
        return Err(Error::GridMismatch(
            "packet centre and width must match the field dimension".into(),
        ));
    }
    if !spec.momentum.is_empty() && spec.momentum.len() != dims {
        return Err(Error::GridMismatch(
            "packet momentum must match the field dimension".into(),
        ));
    }
    if spec.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("packet widths must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const COEFFS: &str = r#"
scenario = "coeffs"
mesh_size = 256

[field]
mean = [0.0]
harmonics = [{ k = 1, cos = [1.0], sin = [0.0] }]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(COEFFS).unwrap();
        assert_eq!(cfg.scenario, Scenario::Coeffs);
        assert_eq!(cfg.jobs, 1);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.tolerances, Tolerances::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{COEFFS}\nbogus = 1\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn missing_sections_fail_validation() {
        let text = COEFFS.replace("\"coeffs\"", "\"propagate\"");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("[grid]"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_caught() {
        let text = format!("{COEFFS}\n[grid]\nhalf_extent = [10.0, 10.0]\ncounts = [64, 64]\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
