//! High-energy sweeps into X-ray-transform data and filtered back-projection.
//!
//! Geometry for an angle `θ`: `ω = (cos θ, sin θ)`, offsets run along
//! `n = (−sin θ, cos θ)` and the offset-`y` line is `{y n + t ω}`. Probes are
//! centred at `y n`, so the transverse component of `λ^{1/2}F` is `F·n`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Transform;
use crate::field::{ElectricField, GaugeCoefficients};
use crate::grid::{Grid, WavePacketSpec};
use crate::io::fmt_f64;
use crate::potential::Potential;
use crate::quadrature::{integrate, integrate_line};
use crate::scattering::{Scattering, ScatteringConfig};

pub const MIN_ANGLES: usize = 8;

const SPACING_TOL: f64 = 1e-9;

pub fn direction(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

pub fn normal(theta: f64) -> [f64; 2] {
    [-theta.sin(), theta.cos()]
}

/// `count` equally spaced angles starting at 0 over `[0, π)` or `[0, 2π)`.
pub fn uniform_angles(count: usize, full_circle: bool) -> Vec<f64> {
    let span = if full_circle { 2.0 * PI } else { PI };
    (0..count).map(|k| span * k as f64 / count as f64).collect()
}

/// `count` offsets spaced evenly over `[−half_width, half_width]`.
pub fn symmetric_offsets(count: usize, half_width: f64) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    let h = 2.0 * half_width / (count - 1) as f64;
    (0..count).map(|i| -half_width + h * i as f64).collect()
}

fn uniform_step(values: &[f64], what: &str) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("{what}: need at least two values")));
    }
    let h = (values[values.len() - 1] - values[0]) / (values.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::invalid(format!("{what} must increase")));
    }
    for (i, v) in values.iter().enumerate() {
        if (v - (values[0] + h * i as f64)).abs() > SPACING_TOL * (1.0 + v.abs()) {
            return Err(Error::invalid(format!("{what} are not uniformly spaced")));
        }
    }
    Ok(h)
}

fn default_geom() -> f64 {
    8.0
}
fn default_margin() -> f64 {
    2.0
}
fn default_threshold() -> f64 {
    1e-4
}
fn default_cone() -> f64 {
    0.1
}
fn default_slack() -> f64 {
    0.02
}
fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub s_values: Vec<f64>,
    /// Increasing energy ladder; the top rung gives the estimate.
    pub lambdas: Vec<f64>,
    /// Directions as angles in radians.
    pub angles: Vec<f64>,
    pub offsets: Vec<f64>,
    pub probe_sigma: f64,
    #[serde(default)]
    pub richardson: bool,
    #[serde(default = "default_geom")]
    pub geom_length: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub dt: f64,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
    /// η in `|ω·E₀| < (1 − η)|E₀|`.
    #[serde(default = "default_cone")]
    pub cone_margin: f64,
    /// Slack for the monotone-convergence flag, relative to the largest rung.
    #[serde(default = "default_slack")]
    pub monotone_slack: f64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

impl SweepPlan {
    pub fn new(
        s_values: Vec<f64>,
        lambdas: Vec<f64>,
        angles: Vec<f64>,
        offsets: Vec<f64>,
        probe_sigma: f64,
        dt: f64,
    ) -> Self {
        SweepPlan {
            s_values,
            lambdas,
            angles,
            offsets,
            probe_sigma,
            richardson: false,
            geom_length: default_geom(),
            margin: default_margin(),
            dt,
            boundary_threshold: default_threshold(),
            cone_margin: default_cone(),
            monotone_slack: default_slack(),
            jobs: 1,
        }
    }

    pub fn validate(&self, e0: &[f64]) -> Result<()> {
        if self.s_values.is_empty() || self.s_values.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("s values must be finite and non-empty"));
        }
        if self.lambdas.is_empty() || self.lambdas[0] <= 0.0 {
            return Err(Error::invalid("λ ladder must be non-empty and positive"));
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("λ ladder must be increasing"));
        }
        if self.richardson && self.lambdas.len() < 2 {
            return Err(Error::invalid("Richardson extrapolation needs two λ rungs"));
        }
        if self.angles.is_empty() || self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("angles must be finite and non-empty"));
        }
        uniform_step(&self.offsets, "offsets")?;
        let n = self.offsets.len();
        for i in 0..n {
            if (self.offsets[i] + self.offsets[n - 1 - i]).abs()
                > SPACING_TOL * (1.0 + self.offsets[i].abs())
            {
                return Err(Error::invalid("offsets must be symmetric about 0"));
            }
        }
        if !(self.probe_sigma > 0.0
            && self.dt > 0.0
            && self.geom_length > 0.0
            && self.margin >= 0.0)
        {
            return Err(Error::invalid(
                "probe width, dt and truncation lengths must be positive",
            ));
        }
        if !(self.boundary_threshold > 0.0) || !(0.0..1.0).contains(&self.cone_margin) {
            return Err(Error::invalid(
                "boundary threshold must be positive and cone margin in [0, 1)",
            ));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        if e0.len() != 2 {
            return Err(Error::invalid("sweeps are two-dimensional"));
        }
        let e_norm = e0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if e_norm > 0.0 {
            for &a in &self.angles {
                let w = direction(a);
                let dot = (w[0] * e0[0] + w[1] * e0[1]).abs();
                if dot >= (1.0 - self.cone_margin) * e_norm {
                    return Err(Error::invalid(format!(
                        "direction at angle {a} has |ω·E₀| = {dot:.4} outside the cone (1 − η)|E₀| = {:.4}",
                        (1.0 - self.cone_margin) * e_norm
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn offset_step(&self) -> Result<f64> {
        uniform_step(&self.offsets, "offsets")
    }
}

/// One probe position: the ladder of scaled functionals and the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub s: f64,
    pub angle: f64,
    pub offset: f64,
    pub lambdas: Vec<f64>,
    /// `Re λ^{1/2} F·n / ⟨Φ,Φ⟩` per rung.
    pub transverse: Vec<f64>,
    /// `Re λ^{1/2} F·ω / ⟨Φ,Φ⟩` per rung.
    pub along: Vec<f64>,
    /// Imaginary part of the transverse component per rung.
    pub transverse_imag: Vec<f64>,
    pub value: f64,
    pub along_value: f64,
    pub monotone: bool,
}

impl PointEstimate {
    /// Distance between the top two rungs.
    pub fn ladder_residual(&self) -> f64 {
        let n = self.transverse.len();
        if n < 2 {
            0.0
        } else {
            (self.transverse[n - 1] - self.transverse[n - 2]).abs()
        }
    }

    pub fn csv_header() -> &'static str {
        "s,lambda,angle,offset,transverse,transverse_imag,along"
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for i in 0..self.lambdas.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_f64(self.s),
                fmt_f64(self.lambdas[i]),
                fmt_f64(self.angle),
                fmt_f64(self.offset),
                fmt_f64(self.transverse[i]),
                fmt_f64(self.transverse_imag[i]),
                fmt_f64(self.along[i])
            );
        }
        out
    }
}

/// Two-point Richardson in `h = λ^{−1/2}` assuming `e(h) = e₀ + c h`.
pub fn richardson_in_lambda(l1: f64, e1: f64, l2: f64, e2: f64) -> f64 {
    let (h1, h2) = (l1.powf(-0.5), l2.powf(-0.5));
    (h1 * e2 - h2 * e1) / (h1 - h2)
}

/// Successive ladder changes must not grow (up to `slack`).
pub fn ladder_is_monotone(values: &[f64], slack: f64) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .windows(3)
        .all(|w| (w[2] - w[1]).abs() <= (w[1] - w[0]).abs() + slack * scale)
}

/// Runs `f(i)` for `i < count` on up to `jobs` threads; results in index order.
pub fn run_jobs<T: Send, F: Fn(usize) -> T + Sync>(count: usize, jobs: usize, f: F) -> Vec<T> {
    if jobs <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = f(i);
                slots.lock().unwrap()[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.unwrap())
        .collect()
}

/// Measured sweeps over one potential.
pub struct Sweep<'a> {
    grid: Arc<Grid>,
    field: &'a ElectricField,
    coeffs: &'a GaugeCoefficients,
    potential: &'a dyn Potential,
    plan: SweepPlan,
}

impl<'a> Sweep<'a> {
    pub fn new(
        grid: Arc<Grid>,
        field: &'a ElectricField,
        coeffs: &'a GaugeCoefficients,
        potential: &'a dyn Potential,
        plan: SweepPlan,
    ) -> Result<Self> {
        plan.validate(field.mean())?;
        if grid.dims() != 2 || potential.dims() != 2 {
            return Err(Error::GridMismatch(
                "sweeps run on two-dimensional grids".into(),
            ));
        }
        let reach =
            plan.offsets.iter().fold(0.0f64, |m, y| m.max(y.abs())) + 6.0 * plan.probe_sigma;
        for axis in 0..2 {
            if reach >= grid.half_extent()[axis] {
                return Err(Error::invalid(format!(
                    "probe reach {reach:.3} exceeds the grid half-extent {}",
                    grid.half_extent()[axis]
                )));
            }
        }
        let required = 10.0 / (2.0 * plan.probe_sigma);
        for axis in 0..2 {
            let cutoff = grid.momentum_cutoff(axis);
            if cutoff < required {
                return Err(Error::Cutoff {
                    axis,
                    cutoff,
                    required,
                });
            }
        }
        Ok(Sweep {
            grid,
            field,
            coeffs,
            potential,
            plan,
        })
    }

    pub fn plan(&self) -> &SweepPlan {
        &self.plan
    }

    fn scattering(&self, s: f64, lambda: f64) -> Result<Scattering<'a>> {
        let mut cfg = ScatteringConfig::high_energy(
            s,
            lambda,
            self.plan.geom_length,
            self.plan.margin,
            self.plan.dt,
        );
        cfg.boundary_threshold = self.plan.boundary_threshold;
        Scattering::new(
            Arc::clone(&self.grid),
            self.field,
            self.coeffs,
            self.potential,
            cfg,
        )
    }

    /// Diagonal probe `Φ = Ψ` centred at `y n`, run over the λ ladder.
    pub fn estimate_pointwise(&self, s: f64, angle: f64, y: f64) -> Result<PointEstimate> {
        let w = direction(angle);
        let n = normal(angle);
        let probe = WavePacketSpec::at_rest(vec![y * n[0], y * n[1]], self.plan.probe_sigma);
        let mut transverse = Vec::new();
        let mut along = Vec::new();
        let mut imag = Vec::new();
        for &lambda in &self.plan.lambdas {
            let sample = self
                .scattering(s, lambda)?
                .commutator(&probe, &probe, lambda, &w)?;
            let f = sample.scaled();
            let perp: Complex64 = f[0] * n[0] + f[1] * n[1];
            let par: Complex64 = f[0] * w[0] + f[1] * w[1];
            transverse.push(perp.re);
            imag.push(perp.im);
            along.push(par.re);
        }
        let k = transverse.len();
        let (value, along_value) = if self.plan.richardson {
            let (l1, l2) = (self.plan.lambdas[k - 2], self.plan.lambdas[k - 1]);
            (
                richardson_in_lambda(l1, transverse[k - 2], l2, transverse[k - 1]),
                richardson_in_lambda(l1, along[k - 2], l2, along[k - 1]),
            )
        } else {
            (transverse[k - 1], along[k - 1])
        };
        Ok(PointEstimate {
            s,
            angle,
            offset: y,
            lambdas: self.plan.lambdas.clone(),
            monotone: ladder_is_monotone(&transverse, self.plan.monotone_slack),
            transverse,
            along,
            transverse_imag: imag,
            value,
            along_value,
        })
    }

    /// Measured sinogram at `s`. Samples hitting a numerical guard or a
    /// non-monotone ladder are flagged invalid; validation errors propagate.
    pub fn sinogram(&self, s: f64) -> Result<(Sinogram, Vec<PointEstimate>)> {
        let (na, no) = (self.plan.angles.len(), self.plan.offsets.len());
        let results = run_jobs(na * no, self.plan.jobs, |i| {
            let (ia, io) = (i / no, i % no);
            self.estimate_pointwise(s, self.plan.angles[ia], self.plan.offsets[io])
        });
        let mut sino = Sinogram::zeros(
            s,
            self.plan.angles.clone(),
            self.plan.offsets.clone(),
            Provenance::Measured,
        );
        let mut points = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(p) => {
                    sino.d_perp[i] = p.value;
                    sino.d_along[i] = p.along_value;
                    sino.valid[i] = p.monotone;
                    points.push(p);
                }
                Err(Error::BoundaryMass { .. }) => sino.valid[i] = false,
                Err(e) => return Err(e),
            }
        }
        Ok((sino, points))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Oracle,
}

impl Provenance {
    fn tag(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Oracle => "oracle",
        }
    }
}

/// Integrated profile of one sinogram row.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub values: Vec<f64>,
    /// Cumulative integral at the last offset before anchoring.
    pub end_value: f64,
    pub warning: bool,
}

/// Cumulative trapezoid of `d` over `offsets`, with the linear drift removed
/// so both ends vanish. Warns when the unanchored end exceeds `tol`.
pub fn assemble_profile(offsets: &[f64], d: &[f64], tol: f64) -> Result<Profile> {
    if offsets.len() != d.len() || offsets.len() < 2 {
        return Err(Error::invalid("profile needs matching offsets and samples"));
    }
    let n = d.len();
    let mut p = vec![0.0; n];
    for i in 1..n {
        p[i] = p[i - 1] + 0.5 * (d[i] + d[i - 1]) * (offsets[i] - offsets[i - 1]);
    }
    let end = p[n - 1];
    let span = offsets[n - 1] - offsets[0];
    for i in 0..n {
        p[i] -= end * (offsets[i] - offsets[0]) / span;
    }
    Ok(Profile {
        values: p,
        end_value: end,
        warning: end.abs() > tol,
    })
}

/// Row-major (angle, offset) arrays with validity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub s: f64,
    pub angles: Vec<f64>,
    pub offsets: Vec<f64>,
    pub provenance: Provenance,
    pub p: Vec<f64>,
    pub d_perp: Vec<f64>,
    pub d_along: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Sinogram {
    pub fn zeros(s: f64, angles: Vec<f64>, offsets: Vec<f64>, provenance: Provenance) -> Self {
        let len = angles.len() * offsets.len();
        Sinogram {
            s,
            angles,
            offsets,
            provenance,
            p: vec![0.0; len],
            d_perp: vec![0.0; len],
            d_along: vec![0.0; len],
            valid: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn index(&self, angle: usize, offset: usize) -> usize {
        angle * self.offsets.len() + offset
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.p[angle * n..(angle + 1) * n]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|v| **v).count() as f64 / self.valid.len() as f64
    }

    /// Fill `p` from `d_perp` row by row. Invalid samples are replaced by
    /// linear interpolation between valid neighbours first. Returns the
    /// unanchored end value per row.
    pub fn assemble(&mut self, tol: f64) -> Result<Vec<Profile>> {
        let n = self.offsets.len();
        let mut out = Vec::with_capacity(self.angles.len());
        for a in 0..self.angles.len() {
            let range = a * n..(a + 1) * n;
            let d = fill_invalid(
                &self.offsets,
                &self.d_perp[range.clone()],
                &self.valid[range.clone()],
            );
            let prof = assemble_profile(&self.offsets, &d, tol)?;
            self.p[range].copy_from_slice(&prof.values);
            out.push(prof);
        }
        Ok(out)
    }

    fn check_same_geometry(&self, other: &Sinogram) -> Result<()> {
        if self.angles != other.angles || self.offsets != other.offsets {
            Err(Error::invalid("sinograms have different geometry"))
        } else {
            Ok(())
        }
    }

    /// RMS of `P − reference.P` over samples valid in both.
    pub fn scatter_against(&self, reference: &Sinogram) -> Result<f64> {
        self.check_same_geometry(reference)?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.len() {
            if self.valid[i] && reference.valid[i] {
                sum += (self.p[i] - reference.p[i]).powi(2);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid("no commonly valid samples"));
        }
        Ok((sum / count as f64).sqrt())
    }

    /// Largest `|ΔP|` over samples valid in both.
    pub fn max_difference(&self, other: &Sinogram) -> Result<f64> {
        self.check_same_geometry(other)?;
        Ok((0..self.len())
            .filter(|&i| self.valid[i] && other.valid[i])
            .map(|i| (self.p[i] - other.p[i]).abs())
            .fold(0.0, f64::max))
    }

    /// Largest `|P(θ+π, −y) − P(θ, y)|` over pairs present in the angle set.
    pub fn evenness_residual(&self) -> f64 {
        let n = self.offsets.len();
        let mut worst = 0.0f64;
        for (a, &ta) in self.angles.iter().enumerate() {
            for (b, &tb) in self.angles.iter().enumerate() {
                let d = (tb - ta - PI).rem_euclid(2.0 * PI);
                if d.min(2.0 * PI - d) > 1e-9 {
                    continue;
                }
                for i in 0..n {
                    let (ia, ib) = (self.index(a, i), self.index(b, n - 1 - i));
                    if self.valid[ia] && self.valid[ib] {
                        worst = worst.max((self.p[ia] - self.p[ib]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Every `stride`-th angle.
    pub fn subsample_angles(&self, stride: usize) -> Sinogram {
        let keep: Vec<usize> = (0..self.angles.len()).step_by(stride.max(1)).collect();
        let mut out = Sinogram::zeros(
            self.s,
            keep.iter().map(|&a| self.angles[a]).collect(),
            self.offsets.clone(),
            self.provenance,
        );
        let n = self.offsets.len();
        for (k, &a) in keep.iter().enumerate() {
            let src = a * n..(a + 1) * n;
            let dst = k * n..(k + 1) * n;
            out.p[dst.clone()].copy_from_slice(&self.p[src.clone()]);
            out.d_perp[dst.clone()].copy_from_slice(&self.d_perp[src.clone()]);
            out.d_along[dst.clone()].copy_from_slice(&self.d_along[src.clone()]);
            out.valid[dst].copy_from_slice(&self.valid[src]);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "# s,{}", fmt_f64(self.s));
        let _ = writeln!(out, "# angles,{}", join(&self.angles));
        let _ = writeln!(out, "# offsets,{}", join(&self.offsets));
        let _ = writeln!(out, "# provenance,{}", self.provenance.tag());
        out.push_str("angle,offset,P,D_perp,D_along,valid\n");
        for (a, &theta) in self.angles.iter().enumerate() {
            for (o, &y) in self.offsets.iter().enumerate() {
                let i = self.index(a, o);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt_f64(theta),
                    fmt_f64(y),
                    fmt_f64(self.p[i]),
                    fmt_f64(self.d_perp[i]),
                    fmt_f64(self.d_along[i]),
                    u8::from(self.valid[i])
                );
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Sinogram> {
        let bad = |m: &str| Error::Format(format!("sinogram: {m}"));
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad number {s:?}")))
        };
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let rest = line
                .strip_prefix("# ")
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix(','))
                .ok_or_else(|| bad(&format!("expected header row {key}")))?;
            Ok(rest.split(',').map(str::to_string).collect())
        };
        let s = num(&header("s")?[0])?;
        let angles = header("angles")?
            .iter()
            .map(|v| num(v))
            .collect::<Result<Vec<_>>>()?;
        let offsets = header("offsets")?
            .iter()
            .map(|v| num(v))
            .collect::<Result<Vec<_>>>()?;
        let provenance = match header("provenance")?[0].trim() {
            "measured" => Provenance::Measured,
            "oracle" => Provenance::Oracle,
            other => return Err(bad(&format!("unknown provenance {other}"))),
        };
        if lines.next().map(str::trim) != Some("angle,offset,P,D_perp,D_along,valid") {
            return Err(bad("missing column header"));
        }
        let mut sino = Sinogram::zeros(s, angles, offsets, provenance);
        let mut count = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 || count >= sino.len() {
                return Err(bad("malformed data row"));
            }
            sino.p[count] = num(cols[2])?;
            sino.d_perp[count] = num(cols[3])?;
            sino.d_along[count] = num(cols[4])?;
            sino.valid[count] = cols[5].trim() == "1";
            count += 1;
        }
        if count != sino.len() {
            return Err(bad("row count does not match the header"));
        }
        Ok(sino)
    }
}

fn fill_invalid(offsets: &[f64], d: &[f64], valid: &[bool]) -> Vec<f64> {
    let good: Vec<usize> = (0..d.len()).filter(|&i| valid[i]).collect();
    if good.is_empty() {
        return vec![0.0; d.len()];
    }
    (0..d.len())
        .map(|i| {
            if valid[i] {
                return d[i];
            }
            let left = good.iter().rev().find(|&&j| j < i);
            let right = good.iter().find(|&&j| j > i);
            match (left, right) {
                (Some(&l), Some(&r)) => {
                    let w = (offsets[i] - offsets[l]) / (offsets[r] - offsets[l]);
                    d[l] * (1.0 - w) + d[r] * w
                }
                (Some(&l), None) => d[l],
                (None, Some(&r)) => d[r],
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// `(∫V(s, y n + t ω) dt, ∫∂ₙV dt, ∫∂_ωV dt)` by adaptive quadrature.
pub fn oracle_xray(
    potential: &dyn Potential,
    s: f64,
    angle: f64,
    y: f64,
    tol: f64,
) -> Result<(f64, f64, f64)> {
    let w = direction(angle);
    let n = normal(angle);
    let point = |t: f64| [y * n[0] + t * w[0], y * n[1] + t * w[1]];
    let (p, _) = integrate_line(|t| potential.value(s, &point(t)), tol)?;
    let mut g = [0.0; 2];
    let (dn, _) = integrate_line(
        |t| {
            potential.gradient(s, &point(t), &mut g);
            g[0] * n[0] + g[1] * n[1]
        },
        tol,
    )?;
    let (dw, _) = integrate_line(
        |t| {
            potential.gradient(s, &point(t), &mut g);
            g[0] * w[0] + g[1] * w[1]
        },
        tol,
    )?;
    Ok((p, dn, dw))
}

/// `oracle_xray` smoothed across offsets by a Gaussian density of standard
/// deviation `sigma`, the transverse marginal of a probe of width `sigma`.
pub fn oracle_convolved(
    potential: &dyn Potential,
    s: f64,
    angle: f64,
    y: f64,
    sigma: f64,
    tol: f64,
) -> Result<(f64, f64, f64)> {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let mut failure = None;
    let mut component = |k: usize| -> f64 {
        let r = integrate(
            |u| {
                let weight = norm * (-(u - y) * (u - y) / (2.0 * sigma * sigma)).exp();
                match oracle_xray(potential, s, angle, u, tol) {
                    Ok(v) => weight * [v.0, v.1, v.2][k],
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            y - 8.0 * sigma,
            y + 8.0 * sigma,
            tol,
        );
        match r {
            Ok((v, _)) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let out = (component(0), component(1), component(2));
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Oracle sinogram; with `probe_sigma` the data carry the probe smoothing.
pub fn oracle_sinogram(
    potential: &dyn Potential,
    s: f64,
    angles: &[f64],
    offsets: &[f64],
    probe_sigma: Option<f64>,
    tol: f64,
) -> Result<Sinogram> {
    let mut sino = Sinogram::zeros(s, angles.to_vec(), offsets.to_vec(), Provenance::Oracle);
    for (a, &theta) in angles.iter().enumerate() {
        for (o, &y) in offsets.iter().enumerate() {
            let (p, dn, dw) = match probe_sigma {
                Some(sigma) => oracle_convolved(potential, s, theta, y, sigma, tol)?,
                None => oracle_xray(potential, s, theta, y, tol)?,
            };
            let i = sino.index(a, o);
            sino.p[i] = p;
            sino.d_perp[i] = dn;
            sino.d_along[i] = dw;
        }
    }
    Ok(sino)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpSettings {
    pub filter: String,
    pub window: String,
    pub padded_length: usize,
    pub offset_step: f64,
    pub angles: usize,
    pub full_circle: bool,
}

/// Uniform coverage check; returns whether the set spans `2π`.
fn check_angles(angles: &[f64]) -> Result<bool> {
    if angles.len() < MIN_ANGLES {
        return Err(Error::SparseAngles {
            got: angles.len(),
            min: MIN_ANGLES,
        });
    }
    let k = angles.len() as f64;
    let spacing = (angles[angles.len() - 1] - angles[0]) / (k - 1.0);
    let uniform = spacing > 0.0
        && angles
            .iter()
            .enumerate()
            .all(|(i, a)| (a - (angles[0] + spacing * i as f64)).abs() < 1e-9);
    let coverage = spacing * k;
    if uniform && (coverage - PI).abs() < 1e-9 {
        return Ok(false);
    }
    if uniform && (coverage - 2.0 * PI).abs() < 1e-9 {
        return Ok(true);
    }
    Err(Error::LimitedAngle(format!(
        "{} angles spanning {:.4} rad; need uniform coverage of [θ₀, θ₀ + π) or a full circle",
        angles.len(),
        angles[angles.len() - 1] - angles[0]
    )))
}

/// Ram-Lak kernel with a Hann window, applied to each row by zero-padded FFT
/// convolution; returns `Q = τ (h ⋆ P)` per angle.
fn filter_rows(sino: &Sinogram, tau: f64) -> (Vec<Vec<f64>>, usize) {
    let n = sino.offsets.len();
    let m = (2 * n).next_power_of_two();
    let fft = Transform::new(&[m]);
    let mut h: Vec<Complex64> = (0..m)
        .map(|j| {
            let k = if j < m / 2 {
                j as i64
            } else {
                j as i64 - m as i64
            };
            let v = if k == 0 {
                1.0 / (4.0 * tau * tau)
            } else if k % 2 == 0 {
                0.0
            } else {
                -1.0 / ((k * k) as f64 * PI * PI * tau * tau)
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    fft.forward(&mut h);
    for (j, z) in h.iter_mut().enumerate() {
        let f = j.min(m - j) as f64 / (m / 2) as f64;
        *z *= 0.5 * (1.0 + (PI * f).cos());
    }
    let rows = (0..sino.angles.len())
        .map(|a| {
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            for (b, p) in buf.iter_mut().zip(sino.row(a)) {
                b.re = *p;
            }
            fft.forward(&mut buf);
            for (b, w) in buf.iter_mut().zip(&h) {
                *b *= w;
            }
            fft.inverse(&mut buf);
            buf[..n].iter().map(|z| z.re * tau).collect()
        })
        .collect();
    (rows, m)
}

/// Filtered back-projection of `sino.p` onto a two-dimensional `grid`.
pub fn fbp_invert(sino: &Sinogram, grid: &Grid) -> Result<(Vec<f64>, FbpSettings)> {
    if grid.dims() != 2 {
        return Err(Error::GridMismatch(
            "back-projection needs a two-dimensional grid".into(),
        ));
    }
    let full = check_angles(&sino.angles)?;
    let tau = uniform_step(&sino.offsets, "offsets")?;
    let (q, m) = filter_rows(sino, tau);
    let y0 = sino.offsets[0];
    let n = sino.offsets.len();
    let weight = PI / sino.angles.len() as f64;
    let normals: Vec<[f64; 2]> = sino.angles.iter().map(|&a| normal(a)).collect();
    let mut out = vec![0.0; grid.len()];
    grid.for_each_position(|i, x| {
        let mut acc = 0.0;
        for (row, nv) in q.iter().zip(&normals) {
            let u = ((x[0] * nv[0] + x[1] * nv[1]) - y0) / tau;
            if u < 0.0 || u > (n - 1) as f64 {
                continue;
            }
            let j = (u.floor() as usize).min(n - 2);
            let frac = u - j as f64;
            acc += row[j] * (1.0 - frac) + row[j + 1] * frac;
        }
        out[i] = weight * acc;
    });
    Ok((
        out,
        FbpSettings {
            filter: "ram-lak".into(),
            window: "hann".into(),
            padded_length: m,
            offset_step: tau,
            angles: sino.angles.len(),
            full_circle: full,
        },
    ))
}

/// `‖f − g‖/‖g‖` over the nodes with `|x| ≤ radius`.
pub fn relative_l2_error(grid: &Grid, field: &[f64], truth: &[f64], radius: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    grid.for_each_position(|i, x| {
        if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            num += (field[i] - truth[i]).powi(2);
            den += truth[i] * truth[i];
        }
    });
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn sample_on_grid(potential: &dyn Potential, s: f64, grid: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    grid.for_each_position(|i, x| out[i] = potential.value(s, x));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Measured,
}

fn default_radius() -> f64 {
    3.0
}
fn default_fraction() -> f64 {
    0.9
}
fn default_anchor() -> f64 {
    1e-2
}
fn default_oracle_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSpec {
    pub mode: Mode,
    pub output_half_width: f64,
    pub output_points: usize,
    #[serde(default = "default_radius")]
    pub error_radius: f64,
    #[serde(default = "default_fraction")]
    pub min_valid_fraction: f64,
    #[serde(default = "default_anchor")]
    pub anchor_tol: f64,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
}

impl ReconstructionSpec {
    pub fn new(mode: Mode, output_half_width: f64, output_points: usize) -> Self {
        ReconstructionSpec {
            mode,
            output_half_width,
            output_points,
            error_radius: default_radius(),
            min_valid_fraction: default_fraction(),
            anchor_tol: default_anchor(),
            oracle_tol: default_oracle_tol(),
        }
    }

    pub fn output_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::cubic(
            2,
            self.output_half_width,
            self.output_points,
        )?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub valid_fraction: f64,
    /// `(angle, offset)` of excluded samples.
    pub flagged: Vec<(f64, f64)>,
    pub anchor_warnings: usize,
    pub max_anchor_residual: f64,
    /// Largest `|D_ω|` relative to the largest `|D_⊥|`.
    pub along_ratio: f64,
    /// Largest distance between the top two λ rungs.
    pub max_ladder_residual: f64,
    pub richardson: bool,
    pub probe_sigma: Option<f64>,
    pub evenness_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub s: f64,
    pub mode: Mode,
    pub grid: Arc<Grid>,
    pub field: Vec<f64>,
    pub truth: Vec<f64>,
    pub error_radius: f64,
    pub rel_error: f64,
    pub sinogram: Sinogram,
    pub points: Vec<PointEstimate>,
    pub fbp: FbpSettings,
    pub diagnostics: Diagnostics,
}

impl ReconstructionResult {
    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "s": self.s,
            "mode": self.mode,
            "rel_l2_error": self.rel_error,
            "error_radius": self.error_radius,
            "angles": self.sinogram.angles.len(),
            "offsets": self.sinogram.offsets.len(),
            "fbp": self.fbp,
            "diagnostics": self.diagnostics,
            "error_vs_angle_count": self.error_vs_angle_count()
                .unwrap_or_default()
                .into_iter()
                .map(|(k, e)| serde_json::json!({"angles": k, "rel_l2_error": e}))
                .collect::<Vec<_>>(),
        })
    }

    /// Errors when only every `stride`-th angle is kept, for each stride that
    /// leaves a uniform set of at least `MIN_ANGLES`.
    pub fn error_vs_angle_count(&self) -> Result<Vec<(usize, f64)>> {
        let k = self.sinogram.angles.len();
        let mut out = Vec::new();
        for stride in (1..=k).rev() {
            if k % stride != 0 || k / stride < MIN_ANGLES {
                continue;
            }
            let sub = self.sinogram.subsample_angles(stride);
            let (field, _) = fbp_invert(&sub, &self.grid)?;
            out.push((
                sub.angles.len(),
                relative_l2_error(&self.grid, &field, &self.truth, self.error_radius),
            ));
        }
        Ok(out)
    }
}

/// Inverts an already assembled sinogram against the truth `V(s, ·)`.
pub fn reconstruct_from_sinogram(
    sino: Sinogram,
    points: Vec<PointEstimate>,
    potential: &dyn Potential,
    spec: &ReconstructionSpec,
    probe_sigma: Option<f64>,
    richardson: bool,
) -> Result<ReconstructionResult> {
    let grid = spec.output_grid()?;
    let (field, fbp) = fbp_invert(&sino, &grid)?;
    let truth = sample_on_grid(potential, sino.s, &grid);
    let rel_error = relative_l2_error(&grid, &field, &truth, spec.error_radius);
    let peak = sino.d_perp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let along = sino
        .d_along
        .iter()
        .zip(&sino.valid)
        .filter(|(_, v)| **v)
        .fold(0.0f64, |m, (d, _)| m.max(d.abs()));
    let n = sino.offsets.len();
    let flagged = (0..sino.len())
        .filter(|&i| !sino.valid[i])
        .map(|i| (sino.angles[i / n], sino.offsets[i % n]))
        .collect();
    let diagnostics = Diagnostics {
        valid_fraction: sino.valid_fraction(),
        flagged,
        anchor_warnings: 0,
        max_anchor_residual: 0.0,
        along_ratio: if peak > 0.0 { along / peak } else { 0.0 },
        max_ladder_residual: points
            .iter()
            .map(|p| p.ladder_residual())
            .fold(0.0, f64::max),
        richardson,
        probe_sigma,
        evenness_residual: sino.evenness_residual(),
    };
    Ok(ReconstructionResult {
        s: sino.s,
        mode: spec.mode,
        grid,
        field,
        truth,
        error_radius: spec.error_radius,
        rel_error,
        sinogram: sino,
        points,
        fbp,
        diagnostics,
    })
}

/// End-to-end reconstruction, one result per `s` in the plan.
///
/// Oracle mode builds the sinogram from exact line integrals; measured mode
/// runs the scattering sweep on `sim_grid` and integrates `D_⊥` into `P`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    sim_grid: Arc<Grid>,
    field: &ElectricField,
    coeffs: &GaugeCoefficients,
    potential: &dyn Potential,
    plan: &SweepPlan,
    spec: &ReconstructionSpec,
) -> Result<Vec<ReconstructionResult>> {
    plan.validate(field.mean())?;
    if field.mean().iter().any(|v| *v != 0.0) {
        return Err(Error::LimitedAngle(
            "a non-zero mean field restricts directions to a cone".into(),
        ));
    }
    check_angles(&plan.angles)?;
    let mut out = Vec::new();
    for &s in &plan.s_values {
        let result = match spec.mode {
            Mode::Oracle => {
                let sino = oracle_sinogram(
                    potential,
                    s,
                    &plan.angles,
                    &plan.offsets,
                    None,
                    spec.oracle_tol,
                )?;
                reconstruct_from_sinogram(sino, Vec::new(), potential, spec, None, false)?
            }
            Mode::Measured => {
                let sweep = Sweep::new(
                    Arc::clone(&sim_grid),
                    field,
                    coeffs,
                    potential,
                    plan.clone(),
                )?;
                let (mut sino, points) = sweep.sinogram(s)?;
                let valid = sino.valid.iter().filter(|v| **v).count();
                if (valid as f64) < spec.min_valid_fraction * sino.len() as f64 {
                    return Err(Error::PartialFailure {
                        valid,
                        total: sino.len(),
                        required: spec.min_valid_fraction,
                    });
                }
                let profiles = sino.assemble(spec.anchor_tol)?;
                let mut r = reconstruct_from_sinogram(
                    sino,
                    points,
                    potential,
                    spec,
                    Some(plan.probe_sigma),
                    plan.richardson,
                )?;
                r.diagnostics.anchor_warnings = profiles.iter().filter(|p| p.warning).count();
                r.diagnostics.max_anchor_residual = profiles
                    .iter()
                    .map(|p| p.end_value.abs())
                    .fold(0.0, f64::max);
                r
            }
        };
        out.push(result);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Bump, PotentialModel};

    fn gaussian() -> PotentialModel {
        PotentialModel::gaussian(1.0, 0.5, vec![0.0, 0.0], 1.0)
    }

    fn analytic_gaussian_sinogram(angles: &[f64], offsets: &[f64]) -> Sinogram {
        let mut sino = Sinogram::zeros(0.0, angles.to_vec(), offsets.to_vec(), Provenance::Oracle);
        for a in 0..angles.len() {
            for (o, y) in offsets.iter().enumerate() {
                let i = sino.index(a, o);
                sino.p[i] = PI.sqrt() * (-y * y).exp();
                sino.d_perp[i] = -2.0 * y * PI.sqrt() * (-y * y).exp();
            }
        }
        sino
    }

    #[test]
    fn plan_validation() {
        let good = SweepPlan::new(
            vec![0.0],
            vec![25.0, 100.0],
            uniform_angles(8, false),
            symmetric_offsets(9, 2.0),
            0.5,
            0.01,
        );
        good.validate(&[0.0, 0.0]).unwrap();
        let mut bad = good.clone();
        bad.lambdas = vec![100.0, 25.0];
        assert!(bad.validate(&[0.0, 0.0]).is_err());
        let mut bad = good.clone();
        bad.offsets = vec![-1.0, 0.0, 2.0];
        assert!(bad.validate(&[0.0, 0.0]).is_err());
        let mut bad = good.clone();
        bad.offsets = vec![-1.0, 0.5, 2.0];
        assert!(bad.validate(&[0.0, 0.0]).is_err());
        // E₀ along e₂: the e₂ direction is outside the cone, e₁ inside
        let mut cone = good.clone();
        cone.angles = vec![0.0];
        cone.validate(&[0.0, 1.0]).unwrap();
        cone.angles = vec![PI / 2.0];
        assert!(cone.validate(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn richardson_removes_linear_term() {
        let e = |l: f64| 2.0 + 3.0 / l.sqrt();
        assert!((richardson_in_lambda(100.0, e(100.0), 400.0, e(400.0)) - 2.0).abs() < 1e-12);
        assert!(ladder_is_monotone(&[1.0, 1.5, 1.7, 1.75], 0.0));
        assert!(!ladder_is_monotone(&[1.0, 1.1, 1.6], 0.0));
    }

    #[test]
    fn profile_of_gaussian_derivative() {
        // trapezoid error is O(τ²): 1% of the peak at τ = 1/8, quartered at τ = 1/16
        let worst = |count: usize| {
            let offsets = symmetric_offsets(count, 4.0);
            let d: Vec<f64> = offsets
                .iter()
                .map(|y| -2.0 * y * 1.5 * PI.sqrt() * (-y * y).exp())
                .collect();
            let prof = assemble_profile(&offsets, &d, 1e-3).unwrap();
            assert!(!prof.warning);
            prof.values
                .iter()
                .zip(&offsets)
                .map(|(p, y)| (p - 1.5 * PI.sqrt() * (-y * y).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (worst(65), worst(129));
        assert!(coarse < 0.01 * 1.5 * PI.sqrt(), "{coarse}");
        assert!((coarse / fine - 4.0).abs() < 0.2, "{}", coarse / fine);
    }

    #[test]
    fn drift_is_removed_by_anchor() {
        let offsets = symmetric_offsets(33, 4.0);
        let clean: Vec<f64> = offsets.iter().map(|y| -2.0 * y * (-y * y).exp()).collect();
        let drifted: Vec<f64> = clean.iter().map(|d| d + 0.05).collect();
        let a = assemble_profile(&offsets, &clean, 1e-3).unwrap();
        let b = assemble_profile(&offsets, &drifted, 1e-3).unwrap();
        assert!(b.warning);
        assert!((b.end_value - 0.4).abs() < 1e-9);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let zero = assemble_profile(&offsets, &vec![0.0; 33], 1e-3).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oracle_matches_closed_forms() {
        let v = gaussian();
        for &theta in &[0.0, 0.7, 2.0] {
            for &y in &[0.0, 0.5, -1.3] {
                let (p, dn, dw) = oracle_xray(&v, 0.0, theta, y, 1e-12).unwrap();
                let e = (-y * y as f64).exp();
                assert!((p - 1.5 * PI.sqrt() * e).abs() < 1e-10);
                assert!((dn + 3.0 * PI.sqrt() * y * e).abs() < 1e-10);
                assert!(dw.abs() < 1e-10);
            }
        }
        let zero = PotentialModel::zero(2);
        assert_eq!(
            oracle_xray(&zero, 0.3, 1.0, 0.4, 1e-12).unwrap(),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn convolved_oracle_matches_closed_form() {
        // e^{−y²} ⋆ N(0, σ²) = e^{−y²/a}/√a with a = 1 + 2σ²
        let v = gaussian();
        let sigma = 0.5;
        let a = 1.0 + 2.0 * sigma * sigma;
        for &y in &[0.0, 0.8, -1.5] {
            let (p, dn, _) = oracle_convolved(&v, 0.0, 0.0, y, sigma, 1e-11).unwrap();
            let pe = 1.5 * PI.sqrt() * (-y * y / a).exp() / a.sqrt();
            let de = 1.5 * PI.sqrt() * (-2.0 * y / a.powf(1.5)) * (-y * y / a).exp();
            assert!((p - pe).abs() < 1e-8, "{p} {pe}");
            assert!((dn - de).abs() < 1e-8, "{dn} {de}");
        }
    }

    #[test]
    fn power_law_line_integrals_converge() {
        let v = PotentialModel::power_law(2, 1.0, 0.0, 1.2);
        let g = PI.sqrt() * 0.951_350_769_866_873_2 / 0.893_515_349_287_690_3;
        for &y in &[0.5, 1.0, 2.0] {
            let (_, dn, _) = oracle_xray(&v, 0.0, 0.0, y, 1e-9).unwrap();
            let expected = -1.2 * y * (1.0 + y * y as f64).powf(-1.1) * g;
            assert!((dn - expected).abs() < 1e-7, "{dn} {expected}");
        }
    }

    #[test]
    fn angle_policy() {
        let offsets = symmetric_offsets(17, 3.0);
        let grid = Grid::cubic(2, 3.0, 32).unwrap();
        let sparse = Sinogram::zeros(
            0.0,
            uniform_angles(6, false),
            offsets.clone(),
            Provenance::Oracle,
        );
        assert!(matches!(
            fbp_invert(&sparse, &grid),
            Err(Error::SparseAngles { got: 6, min: 8 })
        ));
        let cone: Vec<f64> = (0..10).map(|k| 0.5 + 0.1 * k as f64).collect();
        let limited = Sinogram::zeros(0.0, cone, offsets.clone(), Provenance::Oracle);
        assert!(matches!(
            fbp_invert(&limited, &grid),
            Err(Error::LimitedAngle(_))
        ));
        let zero = Sinogram::zeros(0.0, uniform_angles(8, true), offsets, Provenance::Oracle);
        let (field, settings) = fbp_invert(&zero, &grid).unwrap();
        assert!(field.iter().all(|v| *v == 0.0));
        assert!(settings.full_circle);
    }

    #[test]
    fn analytic_gaussian_phantom() {
        let angles = uniform_angles(32, false);
        let offsets = symmetric_offsets(65, 4.0);
        let sino = analytic_gaussian_sinogram(&angles, &offsets);
        let grid = Grid::cubic(2, 4.0, 128).unwrap();
        let (field, _) = fbp_invert(&sino, &grid).unwrap();
        let mut truth = vec![0.0; grid.len()];
        grid.for_each_position(|i, x| truth[i] = (-(x[0] * x[0] + x[1] * x[1])).exp());
        let err = relative_l2_error(&grid, &field, &truth, 3.0);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn back_projection_is_linear() {
        let angles = uniform_angles(16, false);
        let offsets = symmetric_offsets(33, 4.0);
        let a = PotentialModel::gaussian(1.0, 0.0, vec![0.5, -0.5], 0.8);
        let b = PotentialModel::gaussian(0.7, 0.3, vec![-1.0, 0.2], 1.1);
        let both = PotentialModel::Bumps {
            bumps: vec![
                Bump {
                    amplitude: 1.0,
                    modulation: 0.0,
                    center: vec![0.5, -0.5],
                    width: 0.8,
                },
                Bump {
                    amplitude: 0.7,
                    modulation: 0.3,
                    center: vec![-1.0, 0.2],
                    width: 1.1,
                },
            ],
        };
        let grid = Grid::cubic(2, 4.0, 64).unwrap();
        let sa = oracle_sinogram(&a, 0.2, &angles, &offsets, None, 1e-11).unwrap();
        let sb = oracle_sinogram(&b, 0.2, &angles, &offsets, None, 1e-11).unwrap();
        let sab = oracle_sinogram(&both, 0.2, &angles, &offsets, None, 1e-11).unwrap();
        let (fa, _) = fbp_invert(&sa, &grid).unwrap();
        let (fb, _) = fbp_invert(&sb, &grid).unwrap();
        let (fab, _) = fbp_invert(&sab, &grid).unwrap();
        let worst = fa
            .iter()
            .zip(&fb)
            .zip(&fab)
            .map(|((x, y), z)| (x + y - z).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn two_bump_centres_recovered() {
        let centres = [[1.2, 0.4], [-0.9, -1.1]];
        let phantom = PotentialModel::Bumps {
            bumps: centres
                .iter()
                .map(|c| Bump {
                    amplitude: 1.0,
                    modulation: 0.0,
                    center: c.to_vec(),
                    width: 0.5,
                })
                .collect(),
        };
        let angles = uniform_angles(32, false);
        let offsets = symmetric_offsets(65, 4.0);
        let sino = oracle_sinogram(&phantom, 0.0, &angles, &offsets, None, 1e-11).unwrap();
        let grid = Grid::cubic(2, 4.0, 64).unwrap();
        let (field, _) = fbp_invert(&sino, &grid).unwrap();
        let h = grid.spacing(0);
        for c in &centres {
            // strongest node within 3 pixels of the true centre
            let mut best = (f64::MIN, [0.0, 0.0]);
            grid.for_each_position(|i, x| {
                if (x[0] - c[0]).abs() < 3.0 * h
                    && (x[1] - c[1]).abs() < 3.0 * h
                    && field[i] > best.0
                {
                    best = (field[i], [x[0], x[1]]);
                }
            });
            assert!(
                (best.1[0] - c[0]).abs() <= h && (best.1[1] - c[1]).abs() <= h,
                "{:?} vs {c:?}",
                best.1
            );
        }
    }

    #[test]
    fn evenness_and_csv() {
        let v = PotentialModel::gaussian(1.0, 0.0, vec![0.7, -0.3], 0.9);
        let angles = uniform_angles(8, true);
        let offsets = symmetric_offsets(9, 3.0);
        let mut sino = oracle_sinogram(&v, 0.0, &angles, &offsets, None, 1e-11).unwrap();
        assert!(sino.evenness_residual() < 1e-9);
        sino.valid[5] = false;
        let text = sino.to_csv();
        assert!(text.starts_with("# s,"));
        let back = Sinogram::from_csv(&text).unwrap();
        assert_eq!(back, sino);
        assert!(Sinogram::from_csv("# s,0\n").is_err());
    }

    #[test]
    fn invalid_samples_are_interpolated() {
        let offsets = symmetric_offsets(5, 2.0);
        let d = [0.0, 1.0, 99.0, 3.0, 0.0];
        let filled = fill_invalid(&offsets, &d, &[true, true, false, true, true]);
        assert_eq!(filled, vec![0.0, 1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn zero_potential_sweep_gives_zero() {
        let grid = Arc::new(Grid::cubic(2, 8.0, 64).unwrap());
        let field = ElectricField::zero(2);
        let coeffs = GaugeCoefficients::compute(&field, 64).unwrap();
        let v = PotentialModel::zero(2);
        let plan = SweepPlan::new(
            vec![0.0],
            vec![25.0],
            vec![0.3],
            vec![-1.0, 0.0, 1.0],
            0.6,
            0.01,
        );
        let sweep = Sweep::new(grid, &field, &coeffs, &v, plan).unwrap();
        let p = sweep.estimate_pointwise(0.0, 0.3, 1.0).unwrap();
        assert!(p.value.abs() < 1e-12 && p.along_value.abs() < 1e-12);
    }

    #[test]
    fn jobs_preserve_order() {
        let serial = run_jobs(17, 1, |i| i * i);
        let parallel = run_jobs(17, 4, |i| i * i);
        assert_eq!(serial, parallel);
    }
}
