//! Period-1 external electric fields and the gauge coefficients `a, b, c`.
//!
//! The coefficients solve
//!
//! ```text
//! ḃ = −(E(t) − E₀),   ċ = −b,   ȧ = ½|b|² − E₀·c,
//! ```
//!
//! with `a(0) = c(0) = 0` and the constant in `b` fixed so that `∫₀¹ b = 0`.
//! That choice makes `c` period-1. Integrals are composite Simpson on
//! nested refinements of the stored mesh, and values between nodes come from
//! cubic Hermite interpolation using the ODE right-hand sides as slopes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Relative tolerance for endpoint periodicity and zero mean of tabulated fields.
pub const TABLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Oscillation {
    Harmonics(Vec<Harmonic>),
    /// Samples at `t = i/M`, `i = 0..=M`, linearly interpolated; `cumulative[i]`
    /// holds `∫₀^{t_i}` of the interpolant.
    Table {
        samples: Vec<Vec<f64>>,
        cumulative: Vec<Vec<f64>>,
    },
}

/// `E(t) = E₀ + oscillatory part`, periodic with period 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct ElectricField {
    mean: Vec<f64>,
    osc: Oscillation,
}

/// Serialized form of [`ElectricField`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonics: Vec<Harmonic>,
    /// Oscillatory part sampled uniformly over one period, endpoints included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

impl TryFrom<FieldSpec> for ElectricField {
    type Error = Error;

    fn try_from(spec: FieldSpec) -> Result<Self> {
        match spec.table {
            Some(_) if !spec.harmonics.is_empty() => Err(Error::invalid(
                "field may have harmonics or a table, not both",
            )),
            Some(table) => ElectricField::tabulated(spec.mean, table),
            None => ElectricField::harmonic(spec.mean, spec.harmonics),
        }
    }
}

impl From<ElectricField> for FieldSpec {
    fn from(field: ElectricField) -> Self {
        match field.osc {
            Oscillation::Harmonics(h) => FieldSpec {
                mean: field.mean,
                harmonics: h,
                table: None,
            },
            Oscillation::Table { samples, .. } => FieldSpec {
                mean: field.mean,
                harmonics: Vec::new(),
                table: Some(samples),
            },
        }
    }
}

impl ElectricField {
    pub fn zero(dims: usize) -> Self {
        Self::constant(vec![0.0; dims])
    }

    pub fn constant(mean: Vec<f64>) -> Self {
        ElectricField {
            mean,
            osc: Oscillation::Harmonics(Vec::new()),
        }
    }

    pub fn harmonic(mean: Vec<f64>, harmonics: Vec<Harmonic>) -> Result<Self> {
        let dims = mean.len();
        check_dims(dims)?;
        for h in &harmonics {
            if h.k == 0 {
                return Err(Error::invalid("harmonic index must be >= 1"));
            }
            let ok = |v: &Vec<f64>| v.is_empty() || v.len() == dims;
            if !ok(&h.cos) || !ok(&h.sin) {
                return Err(Error::invalid("harmonic amplitude has wrong dimension"));
            }
        }
        let harmonics = harmonics
            .into_iter()
            .map(|mut h| {
                if h.cos.is_empty() {
                    h.cos = vec![0.0; dims];
                }
                if h.sin.is_empty() {
                    h.sin = vec![0.0; dims];
                }
                h
            })
            .collect();
        Ok(ElectricField {
            mean,
            osc: Oscillation::Harmonics(harmonics),
        })
    }

    /// `E(t) = E₀ + amplitude·cos(2πt)`.
    pub fn ac(mean: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        Self::harmonic(
            mean,
            vec![Harmonic {
                k: 1,
                cos: amplitude,
                sin: Vec::new(),
            }],
        )
    }

    /// Tabulated oscillatory part: `samples[i]` is the value at `t = i/M`.
    pub fn tabulated(mean: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        let dims = mean.len();
        check_dims(dims)?;
        if samples.len() < 3 {
            return Err(Error::invalid("field table needs at least 3 samples"));
        }
        if samples.iter().any(|row| row.len() != dims) {
            return Err(Error::invalid("field table row has wrong dimension"));
        }
        let m = samples.len() - 1;
        let h = 1.0 / m as f64;
        let scale = samples
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        for d in 0..dims {
            let mismatch = (samples[0][d] - samples[m][d]).abs();
            if mismatch > TABLE_TOLERANCE * scale {
                return Err(Error::invalid(format!(
                    "tabulated field is not periodic: endpoint mismatch {mismatch:.3e} on axis {d}"
                )));
            }
        }
        let mut cumulative = vec![vec![0.0; dims]; m + 1];
        for i in 0..m {
            for d in 0..dims {
                cumulative[i + 1][d] =
                    cumulative[i][d] + 0.5 * h * (samples[i][d] + samples[i + 1][d]);
            }
        }
        for d in 0..dims {
            if cumulative[m][d].abs() > TABLE_TOLERANCE * scale {
                return Err(Error::invalid(format!(
                    "tabulated oscillatory part has non-zero mean {:.3e} on axis {d}",
                    cumulative[m][d]
                )));
            }
        }
        Ok(ElectricField {
            mean,
            osc: Oscillation::Table {
                samples,
                cumulative,
            },
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Mean field `E₀ = ∫₀¹ E`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn is_constant(&self) -> bool {
        match &self.osc {
            Oscillation::Harmonics(h) => h.is_empty(),
            Oscillation::Table { samples, .. } => samples.iter().flatten().all(|v| *v == 0.0),
        }
    }

    /// Oscillatory part `E(t) − E₀` written into `out`.
    pub fn oscillation_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.osc {
            Oscillation::Harmonics(hs) => {
                for h in hs {
                    let w = 2.0 * PI * h.k as f64;
                    let (s, c) = (w * t).sin_cos();
                    for d in 0..out.len() {
                        out[d] += h.cos[d] * c + h.sin[d] * s;
                    }
                }
            }
            Oscillation::Table { samples, .. } => {
                let (i, frac) = table_cell(samples.len() - 1, t);
                for d in 0..out.len() {
                    out[d] = samples[i][d] + frac * (samples[i + 1][d] - samples[i][d]);
                }
            }
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.oscillation_into(t, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.eval_into(t, &mut out);
        out
    }

    /// Exact `∫_{t0}^{t1} E(u) du` of the field model (signed).
    pub fn integral_into(&self, t0: f64, t1: f64, out: &mut [f64]) {
        let dims = self.dims();
        let mut a1 = [0.0; 3];
        let mut a0 = [0.0; 3];
        self.antiderivative(t1, &mut a1[..dims]);
        self.antiderivative(t0, &mut a0[..dims]);
        for d in 0..dims {
            out[d] = self.mean[d] * (t1 - t0) + (a1[d] - a0[d]);
        }
    }

    pub fn integral(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.integral_into(t0, t1, &mut out);
        out
    }

    /// An antiderivative of the oscillatory part.
    fn antiderivative(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.osc {
            Oscillation::Harmonics(hs) => {
                for h in hs {
                    let w = 2.0 * PI * h.k as f64;
                    let (s, c) = (w * t).sin_cos();
                    for d in 0..out.len() {
                        out[d] += (h.cos[d] * s - h.sin[d] * c) / w;
                    }
                }
            }
            Oscillation::Table {
                samples,
                cumulative,
            } => {
                let m = samples.len() - 1;
                let h = 1.0 / m as f64;
                let periods = t.floor();
                let (i, frac) = table_cell(m, t);
                for d in 0..out.len() {
                    let slope = samples[i + 1][d] - samples[i][d];
                    out[d] = periods * cumulative[m][d]
                        + cumulative[i][d]
                        + h * (frac * samples[i][d] + 0.5 * frac * frac * slope);
                }
            }
        }
    }
}

fn check_dims(dims: usize) -> Result<()> {
    if (1..=3).contains(&dims) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "field dimension {dims} not in 1..=3"
        )))
    }
}

/// Cell index and fractional offset of `t` (reduced mod 1) on an `m`-interval mesh.
fn table_cell(m: usize, t: f64) -> (usize, f64) {
    let tau = t - t.floor();
    let pos = tau * m as f64;
    let i = (pos.floor() as usize).min(m - 1);
    (i, pos - i as f64)
}

/// Tabulated `a(t)`, `b(t)`, `c(t)` on `t_i = i/M`, `i = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeCoefficients {
    dims: usize,
    mesh: usize,
    mean: Vec<f64>,
    /// `E(t_i) − E₀`, flattened with stride `dims`.
    osc: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
}

/// Finite-difference residuals of the coefficient ODE system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    pub b: f64,
    pub c: f64,
    pub a: f64,
}

impl OdeResiduals {
    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.c)
    }
}

/// Node values at even points of a cumulative composite Simpson integration.
fn cumulative_simpson_even(h: f64, f: &[f64]) -> Vec<f64> {
    debug_assert!(f.len() % 2 == 1);
    let pairs = (f.len() - 1) / 2;
    let mut out = Vec::with_capacity(pairs + 1);
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..pairs {
        acc += h / 3.0 * (f[2 * j] + 4.0 * f[2 * j + 1] + f[2 * j + 2]);
        out.push(acc);
    }
    out
}

/// Split a flattened vector table into per-axis columns and back.
fn column(table: &[f64], dims: usize, d: usize) -> Vec<f64> {
    table.iter().skip(d).step_by(dims).copied().collect()
}

fn every_other(v: &[f64], dims: usize) -> Vec<f64> {
    v.chunks_exact(dims).step_by(2).flatten().copied().collect()
}

impl GaugeCoefficients {
    pub const MIN_MESH: usize = 64;

    pub fn compute(field: &ElectricField, mesh_size: usize) -> Result<Self> {
        if mesh_size < Self::MIN_MESH || mesh_size % 2 != 0 {
            return Err(Error::invalid(format!(
                "mesh size {mesh_size} must be even and >= {}",
                Self::MIN_MESH
            )));
        }
        let dims = field.dims();
        let m = mesh_size;
        let e0 = field.mean().to_vec();

        // b on a 4M mesh from the oscillation sampled on 8M.
        let fine = 8 * m;
        let hf = 1.0 / fine as f64;
        let mut osc_fine = vec![0.0; (fine + 1) * dims];
        for i in 0..=fine {
            field.oscillation_into(i as f64 * hf, &mut osc_fine[i * dims..(i + 1) * dims]);
        }
        let n4 = 4 * m;
        let mut b4 = vec![0.0; (n4 + 1) * dims];
        for d in 0..dims {
            let big_b = cumulative_simpson_even(hf, &column(&osc_fine, dims, d));
            // C = ∫₀¹ B, composite Simpson on the 4M mesh
            let h4 = 1.0 / n4 as f64;
            let integral_b = *cumulative_simpson_even(h4, &big_b).last().unwrap();
            for i in 0..=n4 {
                b4[i * dims + d] = -big_b[i] + integral_b;
            }
        }

        // c on a 2M mesh from b on 4M.
        let n2 = 2 * m;
        let h4 = 1.0 / n4 as f64;
        let mut c2 = vec![0.0; (n2 + 1) * dims];
        for d in 0..dims {
            let col = cumulative_simpson_even(h4, &column(&b4, dims, d));
            for i in 0..=n2 {
                c2[i * dims + d] = -col[i];
            }
        }
        let b2 = every_other(&b4, dims);

        // a on the stored mesh from b, c on 2M.
        let integrand: Vec<f64> = (0..=n2)
            .map(|i| {
                let b = &b2[i * dims..(i + 1) * dims];
                let c = &c2[i * dims..(i + 1) * dims];
                0.5 * b.iter().map(|v| v * v).sum::<f64>()
                    - e0.iter().zip(c).map(|(e, c)| e * c).sum::<f64>()
            })
            .collect();
        let a = cumulative_simpson_even(1.0 / n2 as f64, &integrand);
        let b = every_other(&b2, dims);
        let c = every_other(&c2, dims);
        let osc = every_other(&every_other(&every_other(&osc_fine, dims), dims), dims);

        Ok(GaugeCoefficients {
            dims,
            mesh: m,
            mean: e0,
            osc,
            b,
            c,
            a,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn mesh_size(&self) -> usize {
        self.mesh
    }

    pub fn mean_field(&self) -> &[f64] {
        &self.mean
    }

    pub fn node_time(&self, i: usize) -> f64 {
        i as f64 / self.mesh as f64
    }

    pub fn node_b(&self, i: usize) -> &[f64] {
        &self.b[i * self.dims..(i + 1) * self.dims]
    }

    pub fn node_c(&self, i: usize) -> &[f64] {
        &self.c[i * self.dims..(i + 1) * self.dims]
    }

    pub fn node_a(&self, i: usize) -> f64 {
        self.a[i]
    }

    fn slope_a(&self, i: usize) -> f64 {
        let b = self.node_b(i);
        let c = self.node_c(i);
        0.5 * b.iter().map(|v| v * v).sum::<f64>()
            - self.mean.iter().zip(c).map(|(e, c)| e * c).sum::<f64>()
    }

    /// `b(t)`, period-1.
    pub fn b_into(&self, t: f64, out: &mut [f64]) {
        let (i, u) = table_cell(self.mesh, t);
        let h = 1.0 / self.mesh as f64;
        for d in 0..self.dims {
            let f0 = self.b[i * self.dims + d];
            let f1 = self.b[(i + 1) * self.dims + d];
            let s0 = -self.osc[i * self.dims + d];
            let s1 = -self.osc[(i + 1) * self.dims + d];
            out[d] = hermite(u, h, f0, f1, s0, s1);
        }
    }

    /// `c(t)`, period-1.
    pub fn c_into(&self, t: f64, out: &mut [f64]) {
        let (i, u) = table_cell(self.mesh, t);
        let h = 1.0 / self.mesh as f64;
        for d in 0..self.dims {
            let f0 = self.c[i * self.dims + d];
            let f1 = self.c[(i + 1) * self.dims + d];
            let s0 = -self.b[i * self.dims + d];
            let s1 = -self.b[(i + 1) * self.dims + d];
            out[d] = hermite(u, h, f0, f1, s0, s1);
        }
    }

    /// `a(t)`; not periodic, `a(t+1) = a(t) + a(1)`.
    pub fn a(&self, t: f64) -> f64 {
        let (i, u) = table_cell(self.mesh, t);
        let h = 1.0 / self.mesh as f64;
        let periods = t.floor();
        periods * self.a[self.mesh]
            + hermite(
                u,
                h,
                self.a[i],
                self.a[i + 1],
                self.slope_a(i),
                self.slope_a(i + 1),
            )
    }

    pub fn b(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        self.b_into(t, &mut out);
        out
    }

    pub fn c(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        self.c_into(t, &mut out);
        out
    }

    /// `∫₀¹ b` by composite Simpson over the stored nodes.
    pub fn mean_b(&self) -> Vec<f64> {
        let h = 1.0 / self.mesh as f64;
        (0..self.dims)
            .map(|d| {
                *cumulative_simpson_even(h, &column(&self.b, self.dims, d))
                    .last()
                    .unwrap()
            })
            .collect()
    }

    /// Largest `|c(1) − c(0)|` component.
    pub fn c_period_defect(&self) -> f64 {
        (0..self.dims)
            .map(|d| (self.c[self.mesh * self.dims + d] - self.c[d]).abs())
            .fold(0.0, f64::max)
    }

    /// Node value with period extension; `a` picks up `a(1)` per period.
    fn extended(&self, table: &[f64], stride: usize, d: usize, j: isize, drift: f64) -> f64 {
        let m = self.mesh as isize;
        let periods = j.div_euclid(m);
        let i = j.rem_euclid(m) as usize;
        table[i * stride + d] + periods as f64 * drift
    }

    /// Max-norm residuals of the ODE system at the nodes, derivatives from the
    /// fourth-order five-point central difference on the stored tables.
    pub fn ode_residuals(&self) -> OdeResiduals {
        let h = 1.0 / self.mesh as f64;
        let dims = self.dims;
        let a_drift = self.a[self.mesh];
        let fd = |f: &dyn Fn(isize) -> f64, i: isize| {
            (f(i - 2) - 8.0 * f(i - 1) + 8.0 * f(i + 1) - f(i + 2)) / (12.0 * h)
        };
        let mut res = OdeResiduals {
            b: 0.0,
            c: 0.0,
            a: 0.0,
        };
        for i in 0..self.mesh {
            let ii = i as isize;
            for d in 0..dims {
                let db = fd(&|j| self.extended(&self.b, dims, d, j, 0.0), ii);
                res.b = res.b.max((db + self.osc[i * dims + d]).abs());
                let dc = fd(&|j| self.extended(&self.c, dims, d, j, 0.0), ii);
                res.c = res.c.max((dc + self.b[i * dims + d]).abs());
            }
            let da = fd(&|j| self.extended(&self.a, 1, 0, j, a_drift), ii);
            res.a = res.a.max((da - self.slope_a(i)).abs());
        }
        res
    }

    /// CSV table with columns `t, b1..bn, c1..cn, a`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for d in 1..=self.dims {
            let _ = write!(out, ",b{d}");
        }
        for d in 1..=self.dims {
            let _ = write!(out, ",c{d}");
        }
        out.push_str(",a\n");
        for i in 0..=self.mesh {
            out.push_str(&fmt_f64(self.node_time(i)));
            for v in self.node_b(i).iter().chain(self.node_c(i)) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&fmt_f64(self.a[i]));
            out.push('\n');
        }
        out
    }
}

fn hermite(u: f64, h: f64, f0: f64, f1: f64, s0: f64, s1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * f0 + h10 * h * s0 + h01 * f1 + h11 * h * s1
}
