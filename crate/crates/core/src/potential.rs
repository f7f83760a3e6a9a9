//! Time-periodic short-range potentials `V(t, x)` with analytic gradients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GaugeCoefficients;
use crate::grid::Grid;

pub trait Potential: Sync {
    fn dims(&self) -> usize;

    fn value(&self, t: f64, x: &[f64]) -> f64;

    /// `∂ₓV(t, x)` written into `out`.
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Decay exponent δ in `|V| ≤ C⟨x⟩^{−δ}`; infinite for Gaussian tails.
    fn decay_exponent(&self) -> f64;

    fn is_zero(&self) -> bool {
        false
    }

    /// `out[i] += weight · V(t, xᵢ + offset)` over every grid node.
    fn add_on_grid(&self, t: f64, grid: &Grid, offset: &[f64], weight: f64, out: &mut [f64]) {
        let mut y = [0.0; 3];
        grid.for_each_position(|i, x| {
            for d in 0..x.len() {
                y[d] = x[d] + offset[d];
            }
            out[i] += weight * self.value(t, &y[..x.len()]);
        });
    }

    /// Upper bound of `|V(t, ·)|` over the box `lo ≤ x ≤ hi`.
    fn bound_in_box(&self, _t: f64, _lo: &[f64], _hi: &[f64]) -> f64 {
        f64::INFINITY
    }
}

fn modulation(eps: f64, t: f64) -> f64 {
    1.0 + eps * (2.0 * PI * t).cos()
}

/// Euclidean distance from `z` to the box `[lo, hi]`.
fn box_gap(z: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&z, (&l, &h))| {
            let d = (l - z).max(z - h).max(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `A(1 + ε cos 2πt) exp(−|x − x_c|²/w²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    #[serde(default)]
    pub modulation: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl Bump {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitude * modulation(self.modulation, t) * (-r2 / (self.width * self.width)).exp()
    }

    fn add_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let v = self.value(t, x);
        let w2 = self.width * self.width;
        for d in 0..out.len() {
            out[d] += -2.0 * (x[d] - self.center[d]) / w2 * v;
        }
    }

    /// Separable evaluation: one exponential per axis node.
    fn add_on_grid(&self, t: f64, grid: &Grid, offset: &[f64], weight: f64, out: &mut [f64]) {
        let scale = weight * self.amplitude * modulation(self.modulation, t);
        if scale == 0.0 {
            return;
        }
        let w2 = self.width * self.width;
        let factors: Vec<Vec<f64>> = (0..grid.dims())
            .map(|d| {
                grid.coords(d)
                    .iter()
                    .map(|&x| {
                        let u = x + offset[d] - self.center[d];
                        (-u * u / w2).exp()
                    })
                    .collect()
            })
            .collect();
        match factors.len() {
            1 => {
                for (o, f) in out.iter_mut().zip(&factors[0]) {
                    *o += scale * f;
                }
            }
            2 => {
                let n1 = factors[1].len();
                for (i, f0) in factors[0].iter().enumerate() {
                    let row = &mut out[i * n1..(i + 1) * n1];
                    let s0 = scale * f0;
                    for (o, f1) in row.iter_mut().zip(&factors[1]) {
                        *o += s0 * f1;
                    }
                }
            }
            _ => {
                let (n1, n2) = (factors[1].len(), factors[2].len());
                for (i, f0) in factors[0].iter().enumerate() {
                    for (j, f1) in factors[1].iter().enumerate() {
                        let base = (i * n1 + j) * n2;
                        let s01 = scale * f0 * f1;
                        for (o, f2) in out[base..base + n2].iter_mut().zip(&factors[2]) {
                            *o += s01 * f2;
                        }
                    }
                }
            }
        }
    }

    fn bound(&self, t: f64, lo: &[f64], hi: &[f64]) -> f64 {
        let gap = box_gap(&self.center, lo, hi);
        (self.amplitude * modulation(self.modulation, t)).abs()
            * (-gap * gap / (self.width * self.width)).exp()
    }
}

/// Built-in potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialModel {
    Zero {
        dims: usize,
    },
    /// Modulated Gaussian.
    Gaussian(Bump),
    /// `A(1 + ε cos 2πt)(1 + |x|²)^{−δ/2}`.
    PowerLaw {
        dims: usize,
        amplitude: f64,
        #[serde(default)]
        modulation: f64,
        decay: f64,
    },
    /// Sum of modulated Gaussian bumps.
    Bumps {
        bumps: Vec<Bump>,
    },
}

impl PotentialModel {
    pub fn zero(dims: usize) -> Self {
        PotentialModel::Zero { dims }
    }

    pub fn gaussian(amplitude: f64, modulation: f64, center: Vec<f64>, width: f64) -> Self {
        PotentialModel::Gaussian(Bump {
            amplitude,
            modulation,
            center,
            width,
        })
    }

    pub fn power_law(dims: usize, amplitude: f64, modulation: f64, decay: f64) -> Self {
        PotentialModel::PowerLaw {
            dims,
            amplitude,
            modulation,
            decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_bump = |b: &Bump| {
            if !(1..=3).contains(&b.center.len()) {
                return Err(Error::invalid("bump centre dimension not in 1..=3"));
            }
            if !(b.width > 0.0) {
                return Err(Error::invalid("bump width must be positive"));
            }
            Ok(())
        };
        match self {
            PotentialModel::Zero { dims } if !(1..=3).contains(dims) => {
                Err(Error::invalid("potential dimension not in 1..=3"))
            }
            PotentialModel::Zero { .. } => Ok(()),
            PotentialModel::Gaussian(b) => check_bump(b),
            PotentialModel::PowerLaw { dims, decay, .. } => {
                if !(1..=3).contains(dims) {
                    Err(Error::invalid("potential dimension not in 1..=3"))
                } else if !(*decay > 0.0) {
                    Err(Error::invalid("decay exponent must be positive"))
                } else {
                    Ok(())
                }
            }
            PotentialModel::Bumps { bumps } => {
                let Some(first) = bumps.first() else {
                    return Err(Error::invalid("bump list is empty"));
                };
                for b in bumps {
                    check_bump(b)?;
                    if b.center.len() != first.center.len() {
                        return Err(Error::invalid("bumps differ in dimension"));
                    }
                }
                Ok(())
            }
        }
    }
}

impl Potential for PotentialModel {
    fn dims(&self) -> usize {
        match self {
            PotentialModel::Zero { dims } | PotentialModel::PowerLaw { dims, .. } => *dims,
            PotentialModel::Gaussian(b) => b.center.len(),
            PotentialModel::Bumps { bumps } => bumps.first().map_or(0, |b| b.center.len()),
        }
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            PotentialModel::Zero { .. } => 0.0,
            PotentialModel::Gaussian(b) => b.value(t, x),
            PotentialModel::PowerLaw {
                amplitude,
                modulation: eps,
                decay,
                ..
            } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amplitude * modulation(*eps, t) * (1.0 + r2).powf(-0.5 * decay)
            }
            PotentialModel::Bumps { bumps } => bumps.iter().map(|b| b.value(t, x)).sum(),
        }
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            PotentialModel::Zero { .. } => {}
            PotentialModel::Gaussian(b) => b.add_gradient(t, x, out),
            PotentialModel::PowerLaw { decay, .. } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let v = self.value(t, x);
                for d in 0..out.len() {
                    out[d] = -decay * x[d] * v / (1.0 + r2);
                }
            }
            PotentialModel::Bumps { bumps } => {
                for b in bumps {
                    b.add_gradient(t, x, out);
                }
            }
        }
    }

    fn add_on_grid(&self, t: f64, grid: &Grid, offset: &[f64], weight: f64, out: &mut [f64]) {
        match self {
            PotentialModel::Zero { .. } => {}
            PotentialModel::Gaussian(b) => b.add_on_grid(t, grid, offset, weight, out),
            PotentialModel::Bumps { bumps } => {
                for b in bumps {
                    b.add_on_grid(t, grid, offset, weight, out);
                }
            }
            PotentialModel::PowerLaw {
                amplitude,
                modulation: eps,
                decay,
                ..
            } => {
                let scale = weight * amplitude * modulation(*eps, t);
                let mut y = [0.0; 3];
                grid.for_each_position(|i, x| {
                    let mut r2 = 0.0;
                    for d in 0..x.len() {
                        y[d] = x[d] + offset[d];
                        r2 += y[d] * y[d];
                    }
                    out[i] += scale * (1.0 + r2).powf(-0.5 * decay);
                });
            }
        }
    }

    fn decay_exponent(&self) -> f64 {
        match self {
            PotentialModel::PowerLaw { decay, .. } => *decay,
            _ => f64::INFINITY,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            PotentialModel::Zero { .. } => true,
            PotentialModel::Gaussian(b) => b.amplitude == 0.0,
            PotentialModel::PowerLaw { amplitude, .. } => *amplitude == 0.0,
            PotentialModel::Bumps { bumps } => bumps.iter().all(|b| b.amplitude == 0.0),
        }
    }

    fn bound_in_box(&self, t: f64, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            PotentialModel::Zero { .. } => 0.0,
            PotentialModel::Gaussian(b) => b.bound(t, lo, hi),
            PotentialModel::PowerLaw {
                amplitude,
                modulation: eps,
                decay,
                ..
            } => {
                let gap = box_gap(&vec![0.0; lo.len()], lo, hi);
                (amplitude * modulation(*eps, t)).abs() * (1.0 + gap * gap).powf(-0.5 * decay)
            }
            PotentialModel::Bumps { bumps } => bumps.iter().map(|b| b.bound(t, lo, hi)).sum(),
        }
    }
}

/// Gauge-frame potential `V₁(t, x) = V(t, x + c(t))`.
pub struct GaugeShifted<'a> {
    inner: &'a dyn Potential,
    coeffs: &'a GaugeCoefficients,
}

impl<'a> GaugeShifted<'a> {
    pub fn new(inner: &'a dyn Potential, coeffs: &'a GaugeCoefficients) -> Result<Self> {
        if inner.dims() != coeffs.dims() {
            return Err(Error::GridMismatch(
                "potential and coefficients differ in dimension".into(),
            ));
        }
        Ok(GaugeShifted { inner, coeffs })
    }

    fn shifted(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let mut c = [0.0; 3];
        let dims = x.len();
        self.coeffs.c_into(t, &mut c[..dims]);
        for d in 0..dims {
            c[d] += x[d];
        }
        c
    }
}

impl Potential for GaugeShifted<'_> {
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let y = self.shifted(t, x);
        self.inner.value(t, &y[..x.len()])
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let y = self.shifted(t, x);
        self.inner.gradient(t, &y[..x.len()], out)
    }

    fn decay_exponent(&self) -> f64 {
        self.inner.decay_exponent()
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }

    fn add_on_grid(&self, t: f64, grid: &Grid, offset: &[f64], weight: f64, out: &mut [f64]) {
        let y = self.shifted(t, offset);
        self.inner
            .add_on_grid(t, grid, &y[..offset.len()], weight, out)
    }

    fn bound_in_box(&self, t: f64, lo: &[f64], hi: &[f64]) -> f64 {
        let a = self.shifted(t, lo);
        let b = self.shifted(t, hi);
        self.inner.bound_in_box(t, &a[..lo.len()], &b[..hi.len()])
    }
}

/// `V(t, x + X(t))` for an arbitrary path `X`.
pub struct Translated<'a, F> {
    inner: &'a dyn Potential,
    path: F,
}

impl<'a, F: Fn(f64, &mut [f64]) + Sync> Translated<'a, F> {
    /// `path(t, out)` writes `X(t)` into `out`.
    pub fn new(inner: &'a dyn Potential, path: F) -> Self {
        Translated { inner, path }
    }

    fn shifted(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        (self.path)(t, &mut y[..x.len()]);
        for d in 0..x.len() {
            y[d] += x[d];
        }
        y
    }
}

impl<F: Fn(f64, &mut [f64]) + Sync> Potential for Translated<'_, F> {
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let y = self.shifted(t, x);
        self.inner.value(t, &y[..x.len()])
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let y = self.shifted(t, x);
        self.inner.gradient(t, &y[..x.len()], out)
    }

    fn decay_exponent(&self) -> f64 {
        self.inner.decay_exponent()
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }

    fn add_on_grid(&self, t: f64, grid: &Grid, offset: &[f64], weight: f64, out: &mut [f64]) {
        let y = self.shifted(t, offset);
        self.inner
            .add_on_grid(t, grid, &y[..offset.len()], weight, out)
    }

    fn bound_in_box(&self, t: f64, lo: &[f64], hi: &[f64]) -> f64 {
        let a = self.shifted(t, lo);
        let b = self.shifted(t, hi);
        self.inner.bound_in_box(t, &a[..lo.len()], &b[..hi.len()])
    }
}
