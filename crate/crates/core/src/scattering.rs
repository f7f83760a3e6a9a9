//! Finite-time wave operators and scattering operator, the commutator
//! functional `⟨[S(s), p]Φ_{λ,ω}, Ψ_{λ,ω}⟩` and the operator identities used
//! as invariants.
//!
//! `S(s) ≈ U₀(s, T₊) U(T₊, T₋) U₀(T₋, s)` with exact free legs.
//!
//! Co-moving frame: let `X(t)` be the free classical path with `X(s) = 0`,
//! `Ẋ(s) = v`, i.e. `X(t) = v(t−s) + c(t) − c(s) + b(s)(t−s) + ½E₀(t−s)²`.
//! Conjugating by the phase-space translation along `X` turns `U` into the
//! propagator `Ũ` of `½p² + V(t, ξ + X(t))` and `U₀` into `e^{−i(t−r)p²/2}`,
//! so `S(s) e^{iv·x} = e^{iv·x} S̃` (global phases cancel) with
//!
//! ```text
//! S̃ = e^{−i(s−T₊)p²/2} Ũ(T₊, T₋) e^{−i(T₋−s)p²/2}.
//! ```
//!
//! The packet then never carries the boost on the grid, and the commutator
//! reduces to `F_u = ⟨(S̃−1) p_u Φ, Ψ⟩ − ⟨(S̃−1) Φ, p_u Ψ⟩`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ElectricField, GaugeCoefficients};
use crate::gauge::{free_propagate_with_threshold, DEFAULT_BOUNDARY_THRESHOLD};
use crate::grid::{apply_p, boost, inner, make_gaussian, Grid, WavePacketSpec, WaveState};
use crate::io::fmt_f64;
use crate::potential::{Potential, Translated};
use crate::propagator::{propagate_batch, propagate_with_free_legs, Hamiltonian, PropagationPlan};

/// Floor for Richardson tolerances, covering transform roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Lab,
    #[default]
    CoMoving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringConfig {
    pub s: f64,
    pub t_minus: f64,
    pub t_plus: f64,
    pub dt: f64,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
    /// Allowed relative change of F when `|T± − s|` doubles.
    #[serde(default = "default_stability")]
    pub stability_tol: f64,
    /// Largest potential displacement per step in the co-moving frame.
    #[serde(default = "default_shift")]
    pub max_shift_per_step: f64,
    #[serde(default)]
    pub frame: Frame,
}

fn default_threshold() -> f64 {
    DEFAULT_BOUNDARY_THRESHOLD
}

fn default_stability() -> f64 {
    0.01
}

fn default_shift() -> f64 {
    0.05
}

impl ScatteringConfig {
    /// `T± = s ± (geom_length/√λ + margin)`, rounded outward to whole steps.
    pub fn high_energy(s: f64, lambda: f64, geom_length: f64, margin: f64, dt: f64) -> Self {
        let half = geom_length / lambda.sqrt() + margin;
        let half = (half / dt).ceil() * dt;
        ScatteringConfig {
            s,
            t_minus: s - half,
            t_plus: s + half,
            dt,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
            stability_tol: default_stability(),
            max_shift_per_step: default_shift(),
            frame: Frame::default(),
        }
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_minus < self.s && self.s < self.t_plus) {
            return Err(Error::invalid(format!(
                "truncation times must satisfy T₋ < s < T₊, got {} < {} < {}",
                self.t_minus, self.s, self.t_plus
            )));
        }
        if !(self.stability_tol > 0.0 && self.max_shift_per_step > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        self.plan().map(|_| ())
    }

    pub fn plan(&self) -> Result<PropagationPlan> {
        Ok(PropagationPlan::new(self.t_minus, self.t_plus, self.dt)?
            .with_threshold(self.boundary_threshold))
    }

    /// Same configuration with `|T± − s|` doubled.
    pub fn doubled(&self) -> Self {
        let mut out = self.clone();
        out.t_minus = self.s - 2.0 * (self.s - self.t_minus);
        out.t_plus = self.s + 2.0 * (self.t_plus - self.s);
        out
    }

    /// Same truncation half-widths around another phase time.
    pub fn at_phase(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.t_minus = s - (self.s - self.t_minus);
        out.t_plus = s + (self.t_plus - self.s);
        out.s = s;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Asymptote {
    /// `W⁻`, limit `t → −∞`.
    Incoming,
    /// `W⁺`, limit `t → +∞`.
    Outgoing,
}

/// One measured commutator functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSample {
    pub s: f64,
    pub lambda: f64,
    pub omega: Vec<f64>,
    pub phi: WavePacketSpec,
    pub psi: WavePacketSpec,
    pub t_minus: f64,
    pub t_plus: f64,
    pub frame: Frame,
    /// `F_u = ⟨[S(s), p_u] Φ_{λ,ω}, Ψ_{λ,ω}⟩`.
    pub f: Vec<Complex64>,
    /// `⟨Φ, Φ⟩`.
    pub phi_norm_sqr: f64,
    /// `F` recomputed with `|T± − s|` doubled, when checked.
    #[serde(default)]
    pub f_doubled: Option<Vec<Complex64>>,
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl CommutatorSample {
    /// `λ^{1/2} F / ⟨Φ, Φ⟩`.
    pub fn scaled(&self) -> Vec<Complex64> {
        let k = self.lambda.sqrt() / self.phi_norm_sqr;
        self.f.iter().map(|z| z * k).collect()
    }

    /// Component of the scaled functional along `u`.
    pub fn scaled_along(&self, u: &[f64]) -> Complex64 {
        self.scaled().iter().zip(u).map(|(z, w)| z * w).sum()
    }

    /// Scaled functional with its `ω` component removed.
    pub fn scaled_transverse(&self) -> Vec<Complex64> {
        let along = self.scaled_along(&self.omega);
        self.scaled()
            .iter()
            .zip(&self.omega)
            .map(|(z, w)| z - along * w)
            .collect()
    }

    /// `|F(2T) − F(T)| / |F(T)|`.
    pub fn truncation_change(&self) -> Option<f64> {
        self.f_doubled.as_ref().map(|fd| {
            let diff: Vec<Complex64> = fd.iter().zip(&self.f).map(|(a, b)| a - b).collect();
            vec_norm(&diff) / vec_norm(&self.f).max(f64::MIN_POSITIVE)
        })
    }

    pub fn csv_header(dims: usize) -> String {
        let mut cols: Vec<String> = ["s", "lambda", "t_minus", "t_plus"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((1..=dims).map(|d| format!("omega{d}")));
        cols.extend((1..=dims).map(|d| format!("center{d}")));
        cols.push("sigma".into());
        for d in 1..=dims {
            cols.push(format!("re_f{d}"));
            cols.push(format!("im_f{d}"));
        }
        cols.push("phi_norm_sqr".into());
        cols.push("truncation_change".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            fmt_f64(self.s),
            fmt_f64(self.lambda),
            fmt_f64(self.t_minus),
            fmt_f64(self.t_plus),
        ];
        cols.extend(self.omega.iter().map(|&v| fmt_f64(v)));
        cols.extend(self.phi.center.iter().map(|&v| fmt_f64(v)));
        cols.push(fmt_f64(self.phi.sigma[0]));
        for z in &self.f {
            cols.push(fmt_f64(z.re));
            cols.push(fmt_f64(z.im));
        }
        cols.push(fmt_f64(self.phi_norm_sqr));
        cols.push(self.truncation_change().map_or(String::new(), fmt_f64));
        cols.join(",")
    }
}

/// Residual of an identity together with the tolerance it is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub residual: f64,
    pub tolerance: f64,
}

impl ResidualCheck {
    pub fn passes(&self, factor: f64) -> bool {
        self.residual <= factor * self.tolerance
    }
}

/// Error of the coarse result estimated from a step-halved one (Strang).
pub fn richardson_error(coarse: &WaveState, fine: &WaveState) -> Result<f64> {
    Ok(4.0 / 3.0 * coarse.distance(fine)?)
}

/// Everything needed to evaluate scattering quantities on one grid.
pub struct Scattering<'a> {
    grid: Arc<Grid>,
    field: &'a ElectricField,
    coeffs: &'a GaugeCoefficients,
    potential: &'a dyn Potential,
    config: ScatteringConfig,
}

impl<'a> Scattering<'a> {
    pub fn new(
        grid: Arc<Grid>,
        field: &'a ElectricField,
        coeffs: &'a GaugeCoefficients,
        potential: &'a dyn Potential,
        config: ScatteringConfig,
    ) -> Result<Self> {
        config.validate()?;
        let dims = grid.dims();
        if field.dims() != dims || coeffs.dims() != dims || potential.dims() != dims {
            return Err(Error::GridMismatch(
                "grid, field, coefficients and potential must share a dimension".into(),
            ));
        }
        if field.mean() != coeffs.mean_field() {
            return Err(Error::invalid(
                "coefficients were not computed for this field",
            ));
        }
        config.plan()?.check_grid(&grid)?;
        Ok(Scattering {
            grid,
            field,
            coeffs,
            potential,
            config,
        })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn with_config(&self, config: ScatteringConfig) -> Result<Scattering<'a>> {
        Scattering::new(
            Arc::clone(&self.grid),
            self.field,
            self.coeffs,
            self.potential,
            config,
        )
    }

    fn free(&self, state: &WaveState, t: f64, s: f64) -> Result<WaveState> {
        free_propagate_with_threshold(
            state,
            t,
            s,
            self.field,
            self.coeffs,
            self.config.boundary_threshold,
        )
    }

    /// Free path `X(t)` from the origin at time `s` with velocity `v`.
    fn path(&self, v: &[f64]) -> impl Fn(f64, &mut [f64]) + Sync + '_ {
        let s = self.config.s;
        let cs = self.coeffs.c(s);
        let bs = self.coeffs.b(s);
        let e0 = self.field.mean().to_vec();
        let v = v.to_vec();
        let coeffs = self.coeffs;
        move |t: f64, out: &mut [f64]| {
            coeffs.c_into(t, out);
            let tau = t - s;
            for d in 0..out.len() {
                out[d] += (v[d] + bs[d]) * tau - cs[d] + 0.5 * e0[d] * tau * tau;
            }
        }
    }

    /// Potential displacement per step must stay below the configured limit.
    fn check_path_speed(&self, v: &[f64]) -> Result<()> {
        let m = self.coeffs.mesh_size();
        let bmax = (0..=m)
            .map(|i| {
                self.coeffs
                    .node_b(i)
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let e0 = self.field.mean().iter().map(|x| x * x).sum::<f64>().sqrt();
        let span = (self.config.t_plus - self.config.s).max(self.config.s - self.config.t_minus);
        let speed = v.iter().map(|x| x * x).sum::<f64>().sqrt() + 2.0 * bmax + e0 * span;
        let shift = speed * self.config.dt;
        if shift > self.config.max_shift_per_step {
            return Err(Error::invalid(format!(
                "potential moves {shift:.3e} per step in the co-moving frame (limit {}); reduce dt",
                self.config.max_shift_per_step
            )));
        }
        Ok(())
    }

    /// `S̃_v` applied to each state (co-moving frame with velocity `v`).
    fn moving_s(&self, states: Vec<WaveState>, v: &[f64]) -> Result<Vec<WaveState>> {
        self.check_path_speed(v)?;
        let cfg = &self.config;
        let path = self.path(v);
        let moving = Translated::new(self.potential, path);
        let ham = Hamiltonian::without_field(&moving);
        propagate_with_free_legs(
            states,
            &cfg.plan()?,
            &ham,
            cfg.t_minus - cfg.s,
            cfg.s - cfg.t_plus,
        )
    }

    fn lab_s(&self, states: Vec<WaveState>) -> Result<Vec<WaveState>> {
        let cfg = &self.config;
        let ham = Hamiltonian::full(self.field, self.potential)?;
        let states = states
            .iter()
            .map(|st| self.free(st, cfg.t_minus, cfg.s))
            .collect::<Result<Vec<_>>>()?;
        let states = propagate_batch(states, &cfg.plan()?, &ham)?;
        states
            .iter()
            .map(|st| self.free(st, cfg.s, cfg.t_plus))
            .collect()
    }

    /// `S(s)` on several states, in the configured frame.
    pub fn apply_s_batch(&self, states: Vec<WaveState>) -> Result<Vec<WaveState>> {
        match self.config.frame {
            Frame::Lab => self.lab_s(states),
            Frame::CoMoving => {
                let v = vec![0.0; self.grid.dims()];
                self.moving_s(states, &v)
            }
        }
    }

    pub fn apply_s(&self, state: &WaveState) -> Result<WaveState> {
        Ok(self.apply_s_batch(vec![state.clone()])?.pop().unwrap())
    }

    /// Finite-time wave operator `W^±(s) ≈ U(s, T±) U₀(T±, s)` (lab frame).
    pub fn wave_operator(&self, state: &WaveState, which: Asymptote) -> Result<WaveState> {
        let cfg = &self.config;
        let t = match which {
            Asymptote::Incoming => cfg.t_minus,
            Asymptote::Outgoing => cfg.t_plus,
        };
        let ham = Hamiltonian::full(self.field, self.potential)?;
        let start = self.free(state, t, cfg.s)?;
        let plan = PropagationPlan::new(t, cfg.s, cfg.dt)?.with_threshold(cfg.boundary_threshold);
        Ok(propagate_batch(vec![start], &plan, &ham)?.pop().unwrap())
    }

    /// `‖U(s+1, s) W^± Φ − W^± U₀(s+1, s) Φ‖`.
    pub fn intertwining_residual(&self, state: &WaveState, which: Asymptote) -> Result<f64> {
        let s = self.config.s;
        let ham = Hamiltonian::full(self.field, self.potential)?;
        let plan = PropagationPlan::new(s, s + 1.0, self.config.dt)?
            .with_threshold(self.config.boundary_threshold);
        let w = self.wave_operator(state, which)?;
        let lhs = propagate_batch(vec![w], &plan, &ham)?.pop().unwrap();
        let free = self.free(state, s + 1.0, s)?;
        let rhs = self.wave_operator(&free, which)?;
        lhs.distance(&rhs)
    }

    /// `‖S(s')Φ − U₀(s', s) S(s) U₀(s, s')Φ‖` with a Richardson tolerance
    /// (sum of the step-halving error estimates of both sides).
    pub fn s_covariance_residual(&self, state: &WaveState, s_prime: f64) -> Result<ResidualCheck> {
        let s = self.config.s;
        let other = self.with_config(self.config.at_phase(s_prime))?;
        let pulled = self.free(state, s, s_prime)?;
        let run = |dt: f64| -> Result<(WaveState, WaveState)> {
            let direct = other
                .with_config(other.config.clone().with_dt(dt))?
                .apply_s(state)?;
            let via = self
                .with_config(self.config.clone().with_dt(dt))?
                .apply_s(&pulled)?;
            Ok((direct, self.free(&via, s_prime, s)?))
        };
        let (direct, via) = run(self.config.dt)?;
        let (direct_fine, via_fine) = run(0.5 * self.config.dt)?;
        let tolerance =
            richardson_error(&direct, &direct_fine)? + richardson_error(&via, &via_fine)?;
        Ok(ResidualCheck {
            residual: direct.distance(&via)?,
            tolerance: tolerance.max(ROUNDOFF_FLOOR),
        })
    }

    fn check_direction(&self, lambda: f64, omega: &[f64]) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("λ must be positive"));
        }
        if omega.len() != self.grid.dims() {
            return Err(Error::GridMismatch("ω has the wrong dimension".into()));
        }
        let norm = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "ω must be a unit vector (|ω| = {norm})"
            )));
        }
        let e0 = self.field.mean();
        let e0n = e0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if e0n > 0.0 {
            let dot: f64 = e0.iter().zip(omega).map(|(a, b)| a * b).sum();
            if dot.abs() >= e0n * (1.0 - 1e-12) {
                return Err(Error::invalid(format!(
                    "direction violates |ω·E₀| < |E₀| (ω·E₀ = {dot}, |E₀| = {e0n})"
                )));
            }
        }
        Ok(())
    }

    fn check_lab_cutoff(&self, lambda: f64, omega: &[f64]) -> Result<()> {
        let required = 4.0 * lambda.sqrt();
        for (axis, w) in omega.iter().enumerate() {
            let cutoff = self.grid.momentum_cutoff(axis);
            if *w != 0.0 && cutoff < required {
                return Err(Error::Cutoff {
                    axis,
                    cutoff,
                    required,
                });
            }
        }
        Ok(())
    }

    /// Grid cutoff guard for a probe at energy `λ`: `4√λ` along `ω` in the
    /// lab frame, ten momentum widths past the mean in the co-moving frame.
    pub fn check_cutoff(&self, spec: &WavePacketSpec, lambda: f64, omega: &[f64]) -> Result<()> {
        self.check_direction(lambda, omega)?;
        match self.config.frame {
            Frame::Lab => self.check_lab_cutoff(lambda, omega),
            Frame::CoMoving => self.check_probe_cutoff(spec),
        }
    }

    /// Unboosted packets must resolve ten momentum widths past their mean.
    fn check_probe_cutoff(&self, spec: &WavePacketSpec) -> Result<()> {
        let k0 = spec.momentum_or_zero();
        for (axis, (k, sigma)) in k0.iter().zip(&spec.sigma).enumerate() {
            let cutoff = self.grid.momentum_cutoff(axis);
            let required = k.abs() + 10.0 / (2.0 * sigma);
            if cutoff < required {
                return Err(Error::Cutoff {
                    axis,
                    cutoff,
                    required,
                });
            }
        }
        Ok(())
    }

    fn sample(
        &self,
        phi: &WavePacketSpec,
        psi: &WavePacketSpec,
        lambda: f64,
        omega: &[f64],
        f: Vec<Complex64>,
        phi_norm_sqr: f64,
    ) -> CommutatorSample {
        CommutatorSample {
            s: self.config.s,
            lambda,
            omega: omega.to_vec(),
            phi: phi.clone(),
            psi: psi.clone(),
            t_minus: self.config.t_minus,
            t_plus: self.config.t_plus,
            frame: self.config.frame,
            f,
            phi_norm_sqr,
            f_doubled: None,
        }
    }

    /// Reduced-form commutator functional in the configured frame.
    pub fn commutator(
        &self,
        phi: &WavePacketSpec,
        psi: &WavePacketSpec,
        lambda: f64,
        omega: &[f64],
    ) -> Result<CommutatorSample> {
        let g = &self.grid;
        let phi_state = make_gaussian(g, phi)?;
        let psi_state = make_gaussian(g, psi)?;
        self.commutator_states(&phi_state, &psi_state, lambda, omega)
            .map(|(f, n)| self.sample(phi, psi, lambda, omega, f, n))
    }

    /// Reduced form on arbitrary (unboosted) states; returns `(F, ⟨Φ,Φ⟩)`.
    pub fn commutator_states(
        &self,
        phi: &WaveState,
        psi: &WaveState,
        lambda: f64,
        omega: &[f64],
    ) -> Result<(Vec<Complex64>, f64)> {
        self.check_direction(lambda, omega)?;
        phi.same_grid(psi)?;
        let dims = self.grid.dims();
        let v: Vec<f64> = omega.iter().map(|w| w * lambda.sqrt()).collect();
        let mut batch = vec![phi.clone()];
        for axis in 0..dims {
            batch.push(apply_p(phi, axis)?);
        }
        let (scattered, psis) = match self.config.frame {
            Frame::CoMoving => {
                for st in [phi, psi] {
                    for (axis, kk) in st.expectation_p().iter().enumerate() {
                        if kk.abs() >= self.grid.momentum_cutoff(axis) {
                            return Err(Error::Cutoff {
                                axis,
                                cutoff: self.grid.momentum_cutoff(axis),
                                required: kk.abs(),
                            });
                        }
                    }
                }
                let psis: Vec<WaveState> = std::iter::once(Ok(psi.clone()))
                    .chain((0..dims).map(|a| apply_p(psi, a)))
                    .collect::<Result<_>>()?;
                (self.moving_s(batch.clone(), &v)?, psis)
            }
            Frame::Lab => {
                self.check_lab_cutoff(lambda, omega)?;
                let boosted = batch
                    .iter()
                    .map(|st| boost(st, &v))
                    .collect::<Result<Vec<_>>>()?;
                let psi_b = boost(psi, &v)?;
                let psis: Vec<WaveState> = std::iter::once(Ok(psi_b.clone()))
                    .chain((0..dims).map(|a| apply_p(psi, a).and_then(|p| boost(&p, &v))))
                    .collect::<Result<_>>()?;
                batch = boosted;
                (self.lab_s(batch.clone())?, psis)
            }
        };
        let delta: Vec<WaveState> = scattered
            .iter()
            .zip(&batch)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        let mut f = Vec::with_capacity(dims);
        for axis in 0..dims {
            f.push(inner(&delta[axis + 1], &psis[0])? - inner(&delta[0], &psis[axis + 1])?);
        }
        Ok((f, phi.norm_sqr()))
    }

    /// Reduced form plus the `T`-doubling stability check.
    pub fn commutator_checked(
        &self,
        phi: &WavePacketSpec,
        psi: &WavePacketSpec,
        lambda: f64,
        omega: &[f64],
    ) -> Result<CommutatorSample> {
        self.check_cutoff(phi, lambda, omega)?;
        self.check_cutoff(psi, lambda, omega)?;
        let mut sample = self.commutator(phi, psi, lambda, omega)?;
        let wide = self.with_config(self.config.doubled())?;
        sample.f_doubled = Some(wide.commutator(phi, psi, lambda, omega)?.f);
        Ok(sample)
    }

    /// Direct form `⟨S p Φ_b, Ψ_b⟩ − ⟨S Φ_b, p Ψ_b⟩` in the lab frame.
    pub fn commutator_direct(
        &self,
        phi: &WaveState,
        psi: &WaveState,
        lambda: f64,
        omega: &[f64],
    ) -> Result<Vec<Complex64>> {
        self.check_direction(lambda, omega)?;
        self.check_lab_cutoff(lambda, omega)?;
        let dims = self.grid.dims();
        let v: Vec<f64> = omega.iter().map(|w| w * lambda.sqrt()).collect();
        let phi_b = boost(phi, &v)?;
        let psi_b = boost(psi, &v)?;
        let mut batch = vec![phi_b.clone()];
        for axis in 0..dims {
            batch.push(apply_p(&phi_b, axis)?);
        }
        let scattered = self.lab_s(batch)?;
        let mut f = Vec::with_capacity(dims);
        for axis in 0..dims {
            let p_psi = apply_p(&psi_b, axis)?;
            f.push(inner(&scattered[axis + 1], &psi_b)? - inner(&scattered[0], &p_psi)?);
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialModel;

    fn setup_1d(l: f64, n: usize) -> (Arc<Grid>, ElectricField, GaugeCoefficients) {
        let grid = Arc::new(Grid::cubic(1, l, n).unwrap());
        let field = ElectricField::ac(vec![0.0], vec![1.0]).unwrap();
        let coeffs = GaugeCoefficients::compute(&field, 512).unwrap();
        (grid, field, coeffs)
    }

    fn config(s: f64, half: f64, dt: f64) -> ScatteringConfig {
        ScatteringConfig {
            s,
            t_minus: s - half,
            t_plus: s + half,
            dt,
            boundary_threshold: 1e-6,
            stability_tol: 0.01,
            max_shift_per_step: 0.05,
            frame: Frame::Lab,
        }
    }

    #[test]
    fn config_schedule() {
        let c = ScatteringConfig::high_energy(0.25, 400.0, 8.0, 2.0, 0.01);
        assert!((c.t_plus - 0.25 - 2.4).abs() < 1e-12);
        assert!((c.t_minus - 0.25 + 2.4).abs() < 1e-12);
        c.validate().unwrap();
        let d = c.doubled();
        assert!((d.t_plus - d.s - 4.8).abs() < 1e-12);
        d.validate().unwrap();
        assert!(config(0.0, -1.0, 0.1).validate().is_err());
    }

    #[test]
    fn no_potential_means_identity_and_zero_commutator() {
        let (grid, field, coeffs) = setup_1d(30.0, 256);
        let zero = PotentialModel::zero(1);
        let phi = WavePacketSpec::isotropic(vec![0.0], 1.0, vec![0.0]);
        for frame in [Frame::Lab, Frame::CoMoving] {
            let sc = Scattering::new(
                Arc::clone(&grid),
                &field,
                &coeffs,
                &zero,
                config(0.0, 2.0, 0.01).with_frame(frame),
            )
            .unwrap();
            let state = make_gaussian(&grid, &phi).unwrap();
            let out = sc.apply_s(&state).unwrap();
            assert!(out.distance(&state).unwrap() < 1e-10, "{frame:?}");
            let sample = sc.commutator(&phi, &phi, 4.0, &[1.0]).unwrap();
            assert!(sample.f[0].norm() < 1e-10, "{frame:?}: {:?}", sample.f);
        }
    }

    #[test]
    fn unitary_with_potential() {
        let (grid, field, coeffs) = setup_1d(30.0, 512);
        let v = PotentialModel::gaussian(1.0, 0.5, vec![0.0], 1.0);
        let state =
            make_gaussian(&grid, &WavePacketSpec::isotropic(vec![0.0], 1.0, vec![1.0])).unwrap();
        for frame in [Frame::Lab, Frame::CoMoving] {
            let sc = Scattering::new(
                Arc::clone(&grid),
                &field,
                &coeffs,
                &v,
                config(0.0, 3.0, 0.005).with_frame(frame),
            )
            .unwrap();
            let out = sc.apply_s(&state).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn born_approximation_for_weak_potential() {
        // ⟨Φ, (S−1)Φ⟩ ≈ −i ∫ ⟨U₀(t,s)Φ, V(t) U₀(t,s)Φ⟩ dt
        let (grid, field, coeffs) = setup_1d(40.0, 512);
        let v = PotentialModel::gaussian(0.01, 0.5, vec![0.0], 1.0);
        let phi = make_gaussian(
            &grid,
            &WavePacketSpec::isotropic(vec![-0.5], 1.0, vec![2.0]),
        )
        .unwrap();
        let cfg = config(0.0, 4.0, 0.005);
        let sc = Scattering::new(Arc::clone(&grid), &field, &coeffs, &v, cfg.clone()).unwrap();
        let measured = inner(&phi, &sc.apply_s(&phi).unwrap().sub(&phi).unwrap()).unwrap();

        let nodes = 800;
        let h = (cfg.t_plus - cfg.t_minus) / nodes as f64;
        let mut oracle = Complex64::new(0.0, 0.0);
        for j in 0..=nodes {
            let t = cfg.t_minus + j as f64 * h;
            let w = if j == 0 || j == nodes {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let moved = free_propagate_with_threshold(&phi, t, 0.0, &field, &coeffs, 1e-6).unwrap();
            let mut vphi = moved.clone();
            vphi.apply_position_multiplier(|x| Complex64::new(v.value(t, x), 0.0));
            oracle += inner(&moved, &vphi).unwrap() * (w * h / 3.0);
        }
        let oracle = oracle * Complex64::new(0.0, -1.0);
        let rel = (measured - oracle).norm() / oracle.norm();
        assert!(rel < 0.1, "{measured} vs {oracle}");
    }

    #[test]
    fn frames_agree() {
        let (grid, field, coeffs) = setup_1d(24.0, 512);
        let v = PotentialModel::gaussian(1.0, 0.5, vec![0.0], 1.0);
        let phi = WavePacketSpec::isotropic(vec![0.3], 0.8, vec![0.0]);
        let psi = WavePacketSpec::isotropic(vec![0.0], 1.0, vec![0.0]);
        let lab = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &v,
            config(0.0, 2.5, 0.002),
        )
        .unwrap();
        let co = lab
            .with_config(config(0.0, 2.5, 0.002).with_frame(Frame::CoMoving))
            .unwrap();
        let a = lab.commutator(&phi, &psi, 9.0, &[1.0]).unwrap();
        let b = co.commutator(&phi, &psi, 9.0, &[1.0]).unwrap();
        let rel = (a.f[0] - b.f[0]).norm() / a.f[0].norm();
        assert!(rel < 1e-3, "{:?} vs {:?}", a.f, b.f);

        let state = make_gaussian(&grid, &phi).unwrap();
        let d = lab
            .apply_s(&state)
            .unwrap()
            .distance(&co.apply_s(&state).unwrap())
            .unwrap();
        assert!(d < 5e-4, "{d}");
    }

    #[test]
    fn frames_agree_with_mean_field_in_2d() {
        let grid = Arc::new(Grid::cubic(2, 16.0, 128).unwrap());
        let field = ElectricField::harmonic(
            vec![0.0, 0.5],
            vec![crate::field::Harmonic {
                k: 1,
                cos: vec![1.0, 0.0],
                sin: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        let coeffs = GaugeCoefficients::compute(&field, 512).unwrap();
        let v = PotentialModel::gaussian(1.0, 0.5, vec![0.0, 0.0], 1.0);
        let phi = WavePacketSpec::isotropic(vec![0.0, 0.4], 1.0, vec![0.0, 0.0]);
        let lab = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &v,
            config(0.0, 1.5, 0.004),
        )
        .unwrap();
        let co = lab
            .with_config(config(0.0, 1.5, 0.004).with_frame(Frame::CoMoving))
            .unwrap();
        let a = lab.commutator(&phi, &phi, 9.0, &[1.0, 0.0]).unwrap();
        let b = co.commutator(&phi, &phi, 9.0, &[1.0, 0.0]).unwrap();
        let diff: Vec<Complex64> = a.f.iter().zip(&b.f).map(|(x, y)| x - y).collect();
        assert!(
            vec_norm(&diff) < 1e-3 * vec_norm(&a.f),
            "{:?} vs {:?}",
            a.f,
            b.f
        );
        assert!(lab.commutator(&phi, &phi, 9.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn reduced_equals_direct() {
        let (grid, field, coeffs) = setup_1d(24.0, 512);
        let v = PotentialModel::gaussian(1.0, 0.5, vec![0.0], 1.0);
        let phi =
            make_gaussian(&grid, &WavePacketSpec::isotropic(vec![0.2], 1.0, vec![0.0])).unwrap();
        let psi = make_gaussian(
            &grid,
            &WavePacketSpec::isotropic(vec![-0.3], 1.2, vec![0.5]),
        )
        .unwrap();
        let sc = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &v,
            config(0.0, 2.0, 0.005),
        )
        .unwrap();
        let (reduced, _) = sc.commutator_states(&phi, &psi, 9.0, &[1.0]).unwrap();
        let direct = sc.commutator_direct(&phi, &psi, 9.0, &[1.0]).unwrap();
        assert!((reduced[0] - direct[0]).norm() < 1e-8 * reduced[0].norm());
    }

    #[test]
    fn intertwining_without_potential() {
        let (grid, field, coeffs) = setup_1d(30.0, 256);
        let zero = PotentialModel::zero(1);
        let state =
            make_gaussian(&grid, &WavePacketSpec::isotropic(vec![0.0], 1.0, vec![0.5])).unwrap();
        let sc = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &zero,
            config(0.0, 3.0, 0.01),
        )
        .unwrap();
        for which in [Asymptote::Incoming, Asymptote::Outgoing] {
            assert!(sc.intertwining_residual(&state, which).unwrap() < 1e-10);
        }
    }

    #[test]
    fn covariance_trivial_cases() {
        let (grid, field, coeffs) = setup_1d(30.0, 256);
        let zero = PotentialModel::zero(1);
        let state =
            make_gaussian(&grid, &WavePacketSpec::isotropic(vec![0.0], 1.0, vec![0.5])).unwrap();
        let sc = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &zero,
            config(0.0, 2.0, 0.01),
        )
        .unwrap();
        let r = sc.s_covariance_residual(&state, 0.5).unwrap();
        assert!(r.passes(2.0), "{r:?}");
        let v = PotentialModel::gaussian(1.0, 0.5, vec![0.0], 1.0);
        let sc = Scattering::new(
            Arc::clone(&grid),
            &field,
            &coeffs,
            &v,
            config(0.0, 2.0, 0.01),
        )
        .unwrap();
        let r = sc.s_covariance_residual(&state, 0.0).unwrap();
        assert!(r.residual < 1e-12, "{r:?}");
    }

    #[test]
    fn lab_frame_enforces_cutoff() {
        let (grid, field, coeffs) = setup_1d(10.0, 64);
        let v = PotentialModel::gaussian(1.0, 0.0, vec![0.0], 1.0);
        let sc = Scattering::new(grid, &field, &coeffs, &v, config(0.0, 1.0, 0.01)).unwrap();
        let phi = WavePacketSpec::isotropic(vec![0.0], 1.0, vec![0.0]);
        let err = sc.commutator(&phi, &phi, 100.0, &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Cutoff { .. }));
    }
}
