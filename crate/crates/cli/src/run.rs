//! Scenario drivers. Each writes its artifacts through `Runner` and records
//! per-stage diagnostics for the manifest.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use starkscatter_core::gauge::{apply_gauge_t, free_propagate, free_propagate_with_threshold};
use starkscatter_core::io::{fmt_f64, write_real_grid, write_wavefunction};
use starkscatter_core::potential::GaugeShifted;
use starkscatter_core::propagator::{
    propagate, propagate_gauge, propagate_observed, StepDiagnostics,
};
use starkscatter_core::reconstruction::{reconstruct, run_jobs, Mode, PointEstimate, Sweep};
use starkscatter_core::scattering::{
    richardson_error, Asymptote, CommutatorSample, Frame, Scattering, ScatteringConfig,
    ROUNDOFF_FLOOR,
};
use starkscatter_core::{
    make_gaussian, ElectricField, Error, GaugeCoefficients, Grid, Hamiltonian, PotentialModel,
    PropagationPlan, Result, WavePacketSpec, WaveState,
};

use crate::config::{invalid, ExperimentConfig, ScatterPlan, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
    pub diagnostics: Value,
}

/// One pass/fail residual check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

pub struct Runner<'c> {
    pub config: &'c ExperimentConfig,
    pub out: PathBuf,
    pub stages: Vec<Stage>,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
}

impl<'c> Runner<'c> {
    pub fn new(config: &'c ExperimentConfig, out: PathBuf) -> Self {
        Runner {
            config,
            out,
            stages: Vec::new(),
            outputs: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Self) -> Result<(T, Value)>,
    ) -> Result<T> {
        let start = Instant::now();
        let (value, diagnostics) = f(self)?;
        self.stages.push(Stage {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
            diagnostics,
        });
        Ok(value)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn write_state(&mut self, name: &str, state: &WaveState) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.path(name))?);
        write_wavefunction(&mut w, state)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn write_real(&mut self, name: &str, grid: &Grid, values: &[f64]) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.path(name))?);
        write_real_grid(&mut w, grid, values)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn execute(&mut self) -> Result<()> {
        match self.config.scenario {
            Scenario::Coeffs => self.coeffs().map(|_| ()),
            Scenario::FreepropCheck => self.freeprop_check(),
            Scenario::Propagate => self.propagate(),
            Scenario::Scatter => self.scatter(),
            Scenario::Sweep => self.sweep(),
            Scenario::Reconstruct => self.reconstruct(),
            Scenario::Invariants => self.invariants(),
        }?;
        if !self.checks.is_empty() {
            let mut csv = String::from("check,value,tolerance,pass\n");
            for c in &self.checks {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    c.name,
                    fmt_f64(c.value),
                    fmt_f64(c.tolerance),
                    c.pass
                ));
            }
            self.write_text("checks.csv", &csv)?;
        }
        Ok(())
    }

    fn coeffs(&mut self) -> Result<GaugeCoefficients> {
        let cfg = self.config;
        self.stage("gauge-coefficients", |r| {
            let g = GaugeCoefficients::compute(&cfg.field, cfg.mesh_size)?;
            r.write_text("coeffs.csv", &g.to_csv())?;
            let ode = g.ode_residuals().max();
            let period = g.c_period_defect();
            let mean_b = g.mean_b().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tol = &cfg.tolerances;
            r.check(Check::below("ode-residual", ode, tol.ode_residual));
            r.check(Check::below("c-period-defect", period, tol.periodicity));
            r.check(Check::below("mean-b", mean_b, tol.periodicity));
            Ok((
                g,
                json!({"ode_residual": ode, "c_period_defect": period, "mean_b": mean_b}),
            ))
        })
    }

    fn setup(&mut self) -> Result<(GaugeCoefficients, Arc<Grid>)> {
        let coeffs = self.coeffs()?;
        let grid = self.config.grid_spec()?.build()?;
        Ok((coeffs, grid))
    }

    fn freeprop_check(&mut self) -> Result<()> {
        let cfg = self.config;
        let time = cfg.time()?.clone();
        let (coeffs, grid) = self.setup()?;
        let packet = cfg.packet()?;
        ballistic_guard(&grid, &cfg.field, packet, time.t0, time.t1)?;
        let psi = make_gaussian(&grid, packet)?;
        let zero = PotentialModel::zero(cfg.dims());
        let ham = Hamiltonian::full(&cfg.field, &zero)?;
        let field = &cfg.field;
        let run = |dt: f64, every: usize| -> Result<Vec<(f64, f64)>> {
            let plan =
                PropagationPlan::new(time.t0, time.t1, dt)?.with_threshold(time.boundary_threshold);
            let mut errors = Vec::new();
            propagate_observed(vec![psi.clone()], &plan, &ham, every, |_, t, states| {
                let exact = free_propagate_with_threshold(
                    &psi,
                    t,
                    time.t0,
                    field,
                    &coeffs,
                    time.boundary_threshold,
                )?;
                errors.push((t, states[0].distance(&exact)?));
                Ok(())
            })?;
            Ok(errors)
        };
        self.stage("split-vs-exact", |r| {
            let coarse = run(time.dt, time.every)?;
            let fine = run(0.5 * time.dt, 2 * time.every)?;
            let mut csv = String::from("t,error_dt,error_half_dt\n");
            for ((t, a), (_, b)) in coarse.iter().zip(&fine) {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(*t),
                    fmt_f64(*a),
                    fmt_f64(*b)
                ));
            }
            r.write_text("freeprop.csv", &csv)?;
            let sup = |v: &[(f64, f64)]| v.iter().fold(0.0f64, |m, e| m.max(e.1));
            let (ec, ef) = (sup(&coarse), sup(&fine));
            r.check(Check::below(
                "free-split-error",
                ec,
                cfg.tolerances.free_split,
            ));
            Ok((
                (),
                json!({"sup_error_dt": ec, "sup_error_half_dt": ef, "ratio": ec / ef}),
            ))
        })
    }

    fn propagate(&mut self) -> Result<()> {
        let cfg = self.config;
        let time = cfg.time()?.clone();
        let (_, grid) = self.setup()?;
        let packet = cfg.packet()?;
        ballistic_guard(&grid, &cfg.field, packet, time.t0, time.t1)?;
        let plan = PropagationPlan::new(time.t0, time.t1, time.dt)?
            .with_threshold(time.boundary_threshold);
        plan.check_grid(&grid)?;
        let psi = make_gaussian(&grid, packet)?;
        let pot = cfg.potential();
        let ham = Hamiltonian::full(&cfg.field, &pot)?;
        let out = self.out.clone();
        self.stage("propagate", |r| {
            let mut csv = StepDiagnostics::csv_header(grid.dims());
            csv.push('\n');
            let mut snapshots = Vec::new();
            let every = time.every;
            let snap = time.snapshot_every;
            // observe at the gcd-free cadence of both outputs
            let cadence = if snap == 0 { every } else { gcd(every, snap) };
            let result = propagate_observed(vec![psi.clone()], &plan, &ham, cadence, |step, t, states| {
                if step % every == 0 {
                    csv.push_str(&StepDiagnostics::measure(step, t, &states[0]).csv_row());
                    csv.push('\n');
                }
                if snap > 0 && step % snap == 0 {
                    let name = format!("snapshot_{step:07}.wfn");
                    let mut w = BufWriter::new(fs::File::create(out.join(&name))?);
                    write_wavefunction(&mut w, &states[0])?;
                    snapshots.push(name);
                }
                Ok(())
            });
            // diagnostics up to an abort are still useful
            r.write_text("diagnostics.csv", &csv)?;
            r.outputs.extend(snapshots);
            let last = result?.remove(0);
            r.write_state("final.wfn", &last)?;
            let drift = (last.norm() - psi.norm()).abs() / psi.norm();
            r.check(Check::below("norm-drift", drift, cfg.tolerances.norm_drift));
            Ok((
                (),
                json!({"steps": plan.steps(), "norm_drift": drift, "final_boundary_mass": last.boundary_mass()}),
            ))
        })
    }

    fn scatter(&mut self) -> Result<()> {
        let cfg = self.config;
        let sc = cfg.scatter()?.clone();
        let (coeffs, grid) = self.setup()?;
        let pot = cfg.potential();
        let psi_spec = sc.psi.clone().unwrap_or_else(|| sc.phi.clone());
        let engines = sc
            .lambdas
            .iter()
            .map(|&lambda| {
                let e = Scattering::new(
                    Arc::clone(&grid),
                    &cfg.field,
                    &coeffs,
                    &pot,
                    scatter_config(&sc, lambda),
                )?;
                e.check_cutoff(&sc.phi, lambda, &sc.omega)?;
                e.check_cutoff(&psi_spec, lambda, &sc.omega)?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        self.stage("commutator", |r| {
            let results = run_jobs(engines.len(), cfg.jobs, |i| {
                let lambda = sc.lambdas[i];
                if sc.check_truncation {
                    engines[i].commutator_checked(&sc.phi, &psi_spec, lambda, &sc.omega)
                } else {
                    engines[i].commutator(&sc.phi, &psi_spec, lambda, &sc.omega)
                }
            });
            let samples = results.into_iter().collect::<Result<Vec<CommutatorSample>>>()?;
            let mut csv = CommutatorSample::csv_header(grid.dims());
            csv.push('\n');
            for s in &samples {
                csv.push_str(&s.csv_row());
                csv.push('\n');
            }
            r.write_text("samples.csv", &csv)?;
            let rows: Vec<Value> = samples
                .iter()
                .map(|s| {
                    json!({
                        "lambda": s.lambda,
                        "scaled_re": s.scaled().iter().map(|z| z.re).collect::<Vec<_>>(),
                        "scaled_im": s.scaled().iter().map(|z| z.im).collect::<Vec<_>>(),
                        "truncation_change": s.truncation_change(),
                        "truncation_stable": s.truncation_change().map(|c| c <= engines[0].config().stability_tol),
                    })
                })
                .collect();
            Ok(((), json!({"samples": rows})))
        })
    }

    fn sweep(&mut self) -> Result<()> {
        let cfg = self.config;
        let plan = cfg.sweep()?;
        let (coeffs, grid) = self.setup()?;
        let pot = cfg.potential();
        let sweep = Sweep::new(grid, &cfg.field, &coeffs, &pot, plan.clone())?;
        let mut ladder = format!("{}\n", PointEstimate::csv_header());
        let mut worst = (1.0f64, 0usize, 0usize);
        for (i, &s) in plan.s_values.iter().enumerate() {
            let (sino, points) = self.stage(&format!("sweep s={s}"), |_| {
                let (sino, points) = sweep.sinogram(s)?;
                let flagged = points.iter().filter(|p| !p.monotone).count();
                let diag =
                    json!({"valid_fraction": sino.valid_fraction(), "non_monotone": flagged});
                Ok(((sino, points), diag))
            })?;
            self.write_text(&format!("sinogram_{i}.csv"), &sino.to_csv())?;
            for p in &points {
                ladder.push_str(&p.csv_rows());
            }
            if sino.valid_fraction() < worst.0 {
                worst = (
                    sino.valid_fraction(),
                    sino.valid.iter().filter(|v| **v).count(),
                    sino.len(),
                );
            }
        }
        self.write_text("ladder.csv", &ladder)?;
        let required = 0.9;
        if worst.0 < required {
            return Err(Error::PartialFailure {
                valid: worst.1,
                total: worst.2,
                required,
            });
        }
        Ok(())
    }

    fn reconstruct(&mut self) -> Result<()> {
        let cfg = self.config;
        let plan = cfg.sweep()?;
        let spec = cfg.reconstruction()?.clone();
        let coeffs = self.coeffs()?;
        let sim = match (&cfg.grid, spec.mode) {
            (Some(g), _) => g.build()?,
            (None, Mode::Oracle) => spec.output_grid()?,
            (None, Mode::Measured) => {
                return Err(invalid("measured reconstruction needs a [grid] section"))
            }
        };
        let pot = cfg.potential();
        let results = self.stage("reconstruct", |_| {
            let results = reconstruct(sim, &cfg.field, &coeffs, &pot, &plan, &spec)?;
            let errors: Vec<f64> = results.iter().map(|r| r.rel_error).collect();
            Ok((results, json!({"rel_l2_error": errors})))
        })?;
        for (i, res) in results.iter().enumerate() {
            self.write_text(&format!("sinogram_{i}.csv"), &res.sinogram.to_csv())?;
            self.write_real(&format!("reconstruction_{i}.wfn"), &res.grid, &res.field)?;
            self.write_real(&format!("truth_{i}.wfn"), &res.grid, &res.truth)?;
            let metrics = serde_json::to_string_pretty(&res.metrics_json())?;
            self.write_text(&format!("metrics_{i}.json"), &metrics)?;
            if !res.points.is_empty() {
                let mut ladder = format!("{}\n", PointEstimate::csv_header());
                for p in &res.points {
                    ladder.push_str(&p.csv_rows());
                }
                self.write_text(&format!("ladder_{i}.csv"), &ladder)?;
            }
        }
        Ok(())
    }

    fn invariants(&mut self) -> Result<()> {
        let cfg = self.config;
        let sc = cfg.scatter()?.clone();
        let (coeffs, grid) = self.setup()?;
        let pot = cfg.potential();
        let packet = cfg.packet()?;
        let psi = make_gaussian(&grid, packet)?;
        let tol = cfg.tolerances.clone();
        let field = &cfg.field;
        let half = sc.margin;
        ballistic_guard(
            &grid,
            field,
            packet,
            sc.s - 2.0 * half - 1.0,
            sc.s + 2.0 * half + 1.0,
        )?;

        self.stage("free-flow", |r| {
            let (t0, t1, t2) = (sc.s, sc.s + 0.4, sc.s + 0.9);
            let direct = free_propagate(&psi, t2, t0, field, &coeffs)?;
            let via = free_propagate(
                &free_propagate(&psi, t1, t0, field, &coeffs)?,
                t2,
                t1,
                field,
                &coeffs,
            )?;
            let group = direct.distance(&via)?;
            let period = free_propagate(&psi, t1 + 1.0, t0 + 1.0, field, &coeffs)?
                .distance(&free_propagate(&psi, t1, t0, field, &coeffs)?)?;
            let unit = (direct.norm() - psi.norm()).abs();
            r.check(Check::below("free-group-property", group, tol.periodicity));
            r.check(Check::below("free-period-defect", period, tol.periodicity));
            r.check(Check::below("free-unitarity", unit, tol.unitarity));
            Ok((
                (),
                json!({"group": group, "period": period, "unitarity": unit}),
            ))
        })?;

        self.stage("gauge-consistency", |r| {
            let v1 = GaugeShifted::new(&pot, &coeffs)?;
            let (s, t) = (sc.s, sc.s + 1.0);
            let run = |dt: f64| -> Result<(WaveState, WaveState)> {
                let plan = PropagationPlan::new(s, t, dt)?;
                let full = propagate(&psi, &plan, &Hamiltonian::full(field, &pot)?)?;
                let back = apply_gauge_t(&psi, s, &coeffs, true)?;
                let moved = propagate_gauge(&back, &plan, field.mean(), &v1)?;
                Ok((full, apply_gauge_t(&moved, t, &coeffs, false)?))
            };
            let (full, gauge) = run(sc.dt)?;
            let (full_fine, gauge_fine) = run(0.5 * sc.dt)?;
            let rich =
                richardson_error(&full, &full_fine)? + richardson_error(&gauge, &gauge_fine)?;
            let diff = full.distance(&gauge)?;
            let bound = tol.residual_factor * rich.max(ROUNDOFF_FLOOR);
            r.check(Check::below("gauge-consistency", diff, bound));
            Ok(((), json!({"residual": diff, "richardson": rich})))
        })?;

        let mut lab =
            ScatteringConfig::high_energy(sc.s, 1.0, 0.0, half, sc.dt).with_frame(Frame::Lab);
        lab.t_minus = sc.s - half;
        lab.t_plus = sc.s + half;
        lab.boundary_threshold = sc.boundary_threshold;
        let engine = Scattering::new(Arc::clone(&grid), field, &coeffs, &pot, lab.clone())?;

        self.stage("scattering-unitarity", |r| {
            let out = engine.apply_s(&psi)?;
            let defect = (out.norm() - psi.norm()).abs();
            r.check(Check::below("s-unitarity", defect, tol.unitarity));
            Ok(((), json!({"norm_defect": defect})))
        })?;

        self.stage("intertwining", |r| {
            let wide = engine.with_config(lab.doubled())?;
            let wide_fine = engine.with_config(lab.doubled().with_dt(0.5 * sc.dt))?;
            let mut diag = Vec::new();
            for (name, which) in [("incoming", Asymptote::Incoming), ("outgoing", Asymptote::Outgoing)] {
                let r1 = engine.intertwining_residual(&psi, which)?;
                let r2 = wide.intertwining_residual(&psi, which)?;
                let r2_fine = wide_fine.intertwining_residual(&psi, which)?;
                // the residual must shrink with T unless the splitting error accounts for it
                let splitting = 4.0 / 3.0 * (r2 - r2_fine).abs();
                let bound = (r1 / 1.8).max(tol.residual_factor * splitting.max(ROUNDOFF_FLOOR));
                r.check(Check::below(&format!("intertwining-{name}"), r2, bound));
                diag.push(json!({"asymptote": name, "residual_t": r1, "residual_2t": r2, "splitting_2t": splitting}));
            }
            Ok(((), Value::Array(diag)))
        })?;

        self.stage("s-covariance", |r| {
            let check = engine.s_covariance_residual(&psi, sc.s + 0.5)?;
            r.check(Check::below(
                "s-covariance",
                check.residual,
                tol.residual_factor * check.tolerance,
            ));
            Ok((
                (),
                json!({"residual": check.residual, "richardson": check.tolerance}),
            ))
        })?;
        Ok(())
    }
}

fn scatter_config(sc: &ScatterPlan, lambda: f64) -> ScatteringConfig {
    let mut c = ScatteringConfig::high_energy(sc.s, lambda, sc.geom_length, sc.margin, sc.dt)
        .with_frame(sc.frame);
    c.boundary_threshold = sc.boundary_threshold;
    c
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Free classical path plus five spreading widths must stay inside the grid
/// (less the boundary shell) over `[t0, t1]`.
pub fn ballistic_guard(
    grid: &Grid,
    field: &ElectricField,
    packet: &WavePacketSpec,
    t0: f64,
    t1: f64,
) -> Result<()> {
    const SAMPLES: usize = 400;
    let dims = grid.dims();
    let k = packet.momentum_or_zero();
    let h = (t1 - t0) / SAMPLES as f64;
    let mut x = packet.center.clone();
    let mut v_prev = k.clone();
    for i in 0..=SAMPLES {
        let t = t0 + i as f64 * h;
        if i > 0 {
            let kick = field.integral(t0, t);
            for d in 0..dims {
                let v = k[d] + kick[d];
                x[d] += 0.5 * h * (v + v_prev[d]);
                v_prev[d] = v;
            }
        }
        for d in 0..dims {
            let sigma = packet.sigma[d];
            let tau = (t - t0) / (2.0 * sigma * sigma);
            let spread = sigma * (1.0 + tau * tau).sqrt();
            let limit = grid.half_extent()[d] - 4.0 * grid.spacing(d);
            let reach = x[d].abs() + 5.0 * spread;
            if reach > limit {
                return Err(invalid(format!(
                    "packet reaches {reach:.3} on axis {d} at t = {t:.3}, beyond the usable half-extent {limit:.3}; enlarge the grid or shorten the window"
                )));
            }
        }
    }
    Ok(())
}
