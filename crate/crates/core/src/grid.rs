//! Uniform periodic grids, wavefunctions and the Gaussian probe family.
//!
//! Positions run over `x_i = -L + i Δx`, `i = 0..N`, with `Δx = 2L/N`. The
//! momentum lattice is `(π/L)·{-N/2, ..., N/2-1}` stored in FFT order.
//! Inner products conjugate the FIRST argument: `⟨a, b⟩ = Δxⁿ Σ conj(a) b`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Transform;

/// Width of the outer shell (in cells) used for boundary-mass diagnostics.
pub const BOUNDARY_SHELL: usize = 4;

/// Boundary mass allowed for freshly constructed packets.
pub const PACKET_BOUNDARY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Grid {
    half_extent: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    coords: Vec<Vec<f64>>,
    momenta: Vec<Vec<f64>>,
    transform: Transform,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.half_extent == other.half_extent && self.counts == other.counts
    }
}

/// Serializable shape of a grid, as written to file headers and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_extent: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(&self.half_extent, &self.counts).map(Arc::new)
    }
}

impl Grid {
    pub fn new(half_extent: &[f64], counts: &[usize]) -> Result<Self> {
        let dims = counts.len();
        if !(1..=3).contains(&dims) {
            return Err(Error::invalid(format!(
                "grid dimension {dims} not in 1..=3"
            )));
        }
        if half_extent.len() != dims {
            return Err(Error::invalid("half_extent and counts differ in length"));
        }
        for (&n, &l) in counts.iter().zip(half_extent) {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::invalid(format!(
                    "point count {n} must be a power of two >= 8"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("half extent {l} must be positive")));
            }
        }
        let spacing: Vec<f64> = counts
            .iter()
            .zip(half_extent)
            .map(|(&n, &l)| 2.0 * l / n as f64)
            .collect();
        let coords = counts
            .iter()
            .zip(half_extent)
            .zip(&spacing)
            .map(|((&n, &l), &dx)| (0..n).map(|i| -l + i as f64 * dx).collect())
            .collect();
        let momenta = counts
            .iter()
            .zip(half_extent)
            .map(|(&n, &l)| {
                (0..n)
                    .map(|i| {
                        let m = if i < n / 2 {
                            i as f64
                        } else {
                            i as f64 - n as f64
                        };
                        m * PI / l
                    })
                    .collect()
            })
            .collect();
        Ok(Grid {
            half_extent: half_extent.to_vec(),
            counts: counts.to_vec(),
            spacing,
            coords,
            momenta,
            transform: Transform::new(counts),
        })
    }

    pub fn cubic(dims: usize, half_extent: f64, count: usize) -> Result<Self> {
        Grid::new(&vec![half_extent; dims], &vec![count; dims])
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            half_extent: self.half_extent.clone(),
            counts: self.counts.clone(),
        }
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn half_extent(&self) -> &[f64] {
        &self.half_extent
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    /// Momentum lattice of one axis in FFT order.
    pub fn momenta(&self, axis: usize) -> &[f64] {
        &self.momenta[axis]
    }

    /// Largest representable momentum `π/Δx` on an axis.
    pub fn momentum_cutoff(&self, axis: usize) -> f64 {
        PI / self.spacing[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub(crate) fn transform(&self) -> &Transform {
        &self.transform
    }

    /// Visit every position node in row-major order.
    pub fn for_each_position<F: FnMut(usize, &[f64])>(&self, f: F) {
        for_each_node(&self.coords, f)
    }

    /// Visit every momentum node in FFT (storage) order.
    pub fn for_each_momentum<F: FnMut(usize, &[f64])>(&self, f: F) {
        for_each_node(&self.momenta, f)
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_position(|_, x| out.push(x.to_vec()));
        out
    }

    /// True when a flat index lies in the outer boundary shell.
    pub fn in_boundary_shell(&self, index: usize) -> bool {
        let mut rem = index;
        for axis in (0..self.dims()).rev() {
            let n = self.counts[axis];
            let i = rem % n;
            rem /= n;
            if i < BOUNDARY_SHELL || i >= n - BOUNDARY_SHELL {
                return true;
            }
        }
        false
    }
}

fn for_each_node<F: FnMut(usize, &[f64])>(axes: &[Vec<f64>], mut f: F) {
    let dims = axes.len();
    let mut idx = [0usize; 3];
    let mut point = [0.0f64; 3];
    for d in 0..dims {
        point[d] = axes[d][0];
    }
    let total: usize = axes.iter().map(|a| a.len()).product();
    for flat in 0..total {
        f(flat, &point[..dims]);
        // odometer increment, last axis fastest
        let mut d = dims;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                point[d] = axes[d][idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = axes[d][0];
        }
    }
}

/// Complex amplitudes on a grid, position representation.
#[derive(Debug, Clone)]
pub struct WaveState {
    grid: Arc<Grid>,
    amps: Vec<Complex64>,
}

impl WaveState {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        WaveState {
            grid,
            amps: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_amplitudes(grid: Arc<Grid>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} nodes",
                amps.len(),
                grid.len()
            )));
        }
        if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("non-finite amplitude"));
        }
        Ok(WaveState { grid, amps })
    }

    pub fn from_fn<F: FnMut(&[f64]) -> Complex64>(grid: Arc<Grid>, mut f: F) -> Self {
        let mut amps = Vec::with_capacity(grid.len());
        grid.for_each_position(|_, x| amps.push(f(x)));
        WaveState { grid, amps }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub(crate) fn same_grid(&self, other: &WaveState) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch("states live on different grids".into()))
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.cell_volume() * self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Probability mass in the outermost cell shell.
    pub fn boundary_mass(&self) -> f64 {
        let sum: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.in_boundary_shell(*i))
            .map(|(_, z)| z.norm_sqr())
            .sum();
        sum * self.grid.cell_volume()
    }

    pub fn check_boundary(&self, threshold: f64, time: f64) -> Result<()> {
        let mass = self.boundary_mass();
        if mass > threshold || !mass.is_finite() {
            Err(Error::BoundaryMass {
                mass,
                threshold,
                time,
            })
        } else {
            Ok(())
        }
    }

    pub fn scale(&mut self, factor: Complex64) {
        for z in &mut self.amps {
            *z *= factor;
        }
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n, 0.0));
        }
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: Complex64, other: &WaveState) -> Result<()> {
        self.same_grid(other)?;
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &WaveState) -> Result<WaveState> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// L² distance `‖self − other‖`.
    pub fn distance(&self, other: &WaveState) -> Result<f64> {
        self.same_grid(other)?;
        let sum: f64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((sum * self.grid.cell_volume()).sqrt())
    }

    pub fn to_momentum(&self) -> Vec<Complex64> {
        let mut data = self.amps.clone();
        self.grid.transform().forward(&mut data);
        data
    }

    pub fn from_momentum(grid: Arc<Grid>, mut data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch("momentum array length".into()));
        }
        grid.transform().inverse(&mut data);
        Ok(WaveState { grid, amps: data })
    }

    /// Norm computed from the momentum representation (Parseval).
    pub fn momentum_norm_sqr(&self) -> f64 {
        let hat = self.to_momentum();
        let n = self.grid.len() as f64;
        self.grid.cell_volume() / n * hat.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Multiply in momentum space by `m(k)`.
    pub fn apply_fourier_multiplier<F: Fn(&[f64]) -> Complex64>(&mut self, m: F) {
        let grid = Arc::clone(&self.grid);
        grid.transform().forward(&mut self.amps);
        let amps = &mut self.amps;
        grid.for_each_momentum(|i, k| amps[i] *= m(k));
        grid.transform().inverse(&mut self.amps);
    }

    /// Multiply in position space by `m(x)`.
    pub fn apply_position_multiplier<F: Fn(&[f64]) -> Complex64>(&mut self, m: F) {
        let grid = Arc::clone(&self.grid);
        let amps = &mut self.amps;
        grid.for_each_position(|i, x| amps[i] *= m(x));
    }

    /// Translation `ψ(x) ↦ ψ(x − d)`, i.e. `e^{−i d·p}`, as a Fourier phase.
    pub fn translate(&mut self, d: &[f64]) -> Result<()> {
        self.check_vector(d)?;
        if d.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let d = d.to_vec();
        self.apply_fourier_multiplier(|k| {
            let phase: f64 = k.iter().zip(&d).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, -phase)
        });
        Ok(())
    }

    pub(crate) fn check_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.grid.dims() {
            Err(Error::GridMismatch(format!(
                "vector of length {} on a {}-dimensional grid",
                v.len(),
                self.grid.dims()
            )))
        } else {
            Ok(())
        }
    }

    /// `⟨x_j⟩ / ⟨ψ, ψ⟩` per axis.
    pub fn expectation_x(&self) -> Vec<f64> {
        let dims = self.grid.dims();
        let mut acc = vec![0.0; dims];
        let mut total = 0.0;
        self.grid.for_each_position(|i, x| {
            let w = self.amps[i].norm_sqr();
            total += w;
            for d in 0..dims {
                acc[d] += w * x[d];
            }
        });
        acc.iter().map(|a| a / total).collect()
    }

    /// `⟨p_j⟩ / ⟨ψ, ψ⟩` per axis, by quadrature in momentum space.
    pub fn expectation_p(&self) -> Vec<f64> {
        let dims = self.grid.dims();
        let hat = self.to_momentum();
        let mut acc = vec![0.0; dims];
        let mut total = 0.0;
        self.grid.for_each_momentum(|i, k| {
            let w = hat[i].norm_sqr();
            total += w;
            for d in 0..dims {
                acc[d] += w * k[d];
            }
        });
        acc.iter().map(|a| a / total).collect()
    }

    /// `⟨p²⟩ / ⟨ψ, ψ⟩`.
    pub fn expectation_p2(&self) -> f64 {
        let hat = self.to_momentum();
        let mut acc = 0.0;
        let mut total = 0.0;
        self.grid.for_each_momentum(|i, k| {
            let w = hat[i].norm_sqr();
            total += w;
            acc += w * k.iter().map(|v| v * v).sum::<f64>();
        });
        acc / total
    }
}

/// Hermitian inner product, conjugate-linear in the first argument.
pub fn inner(a: &WaveState, b: &WaveState) -> Result<Complex64> {
    a.same_grid(b)?;
    let sum: Complex64 = a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum();
    Ok(sum * a.grid.cell_volume())
}

/// Gaussian wave packet parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub center: Vec<f64>,
    /// Position-space width per axis; the density has variance `sigma²`.
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub momentum: Vec<f64>,
}

impl WavePacketSpec {
    pub fn isotropic(center: Vec<f64>, sigma: f64, momentum: Vec<f64>) -> Self {
        let dims = center.len();
        WavePacketSpec {
            center,
            sigma: vec![sigma; dims],
            momentum,
        }
    }

    pub fn at_rest(center: Vec<f64>, sigma: f64) -> Self {
        let dims = center.len();
        Self::isotropic(center, sigma, vec![0.0; dims])
    }

    pub fn momentum_or_zero(&self) -> Vec<f64> {
        if self.momentum.is_empty() {
            vec![0.0; self.center.len()]
        } else {
            self.momentum.clone()
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, s) in out.center.iter_mut().zip(shift) {
            *c += s;
        }
        out
    }
}

/// Normalized Gaussian `∝ exp(−|x−x₀|²/(4σ²) + i k₀·x)`.
pub fn make_gaussian(grid: &Arc<Grid>, spec: &WavePacketSpec) -> Result<WaveState> {
    let dims = grid.dims();
    let k0 = spec.momentum_or_zero();
    if spec.center.len() != dims || spec.sigma.len() != dims || k0.len() != dims {
        return Err(Error::GridMismatch(format!(
            "packet spec does not match a {dims}-dimensional grid"
        )));
    }
    for axis in 0..dims {
        let sigma = spec.sigma[axis];
        if !(sigma >= 2.0 * grid.spacing(axis)) {
            return Err(Error::invalid(format!(
                "packet width {sigma} below 2Δx = {} on axis {axis}",
                2.0 * grid.spacing(axis)
            )));
        }
        if k0[axis].abs() >= grid.momentum_cutoff(axis) {
            return Err(Error::Cutoff {
                axis,
                cutoff: grid.momentum_cutoff(axis),
                required: k0[axis].abs(),
            });
        }
    }
    let mut state = WaveState::from_fn(Arc::clone(grid), |x| {
        let mut expo = 0.0;
        let mut phase = 0.0;
        for d in 0..dims {
            let u = x[d] - spec.center[d];
            expo -= u * u / (4.0 * spec.sigma[d] * spec.sigma[d]);
            phase += k0[d] * x[d];
        }
        Complex64::from_polar(expo.exp(), phase)
    });
    state.normalize();
    let mass = state.boundary_mass();
    if mass > PACKET_BOUNDARY_TOLERANCE {
        return Err(Error::invalid(format!(
            "packet boundary mass {mass:.3e} exceeds {PACKET_BOUNDARY_TOLERANCE:.0e}; packet too wide or off-centre for the grid"
        )));
    }
    Ok(state)
}

/// Multiply by `e^{i v·x}`.
pub fn boost(state: &WaveState, v: &[f64]) -> Result<WaveState> {
    state.check_vector(v)?;
    let mean = state.expectation_p();
    for (axis, (m, dv)) in mean.iter().zip(v).enumerate() {
        let cutoff = state.grid.momentum_cutoff(axis);
        if (m + dv).abs() >= cutoff {
            return Err(Error::Cutoff {
                axis,
                cutoff,
                required: (m + dv).abs(),
            });
        }
    }
    let mut out = state.clone();
    out.apply_position_multiplier(|x| {
        let phase: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, phase)
    });
    Ok(out)
}

/// Momentum operator `p_axis = −i ∂_axis` as a Fourier multiplier.
pub fn apply_p(state: &WaveState, axis: usize) -> Result<WaveState> {
    if axis >= state.grid.dims() {
        return Err(Error::invalid(format!("axis {axis} out of range")));
    }
    let mut out = state.clone();
    out.apply_fourier_multiplier(|k| Complex64::new(k[axis], 0.0));
    Ok(out)
}

/// Directional momentum `u·p`.
pub fn apply_p_along(state: &WaveState, u: &[f64]) -> Result<WaveState> {
    state.check_vector(u)?;
    let mut out = state.clone();
    out.apply_fourier_multiplier(|k| {
        Complex64::new(k.iter().zip(u).map(|(a, b)| a * b).sum(), 0.0)
    });
    Ok(out)
}

/// Band-limit a state: multiply its momentum amplitude by the smooth bump
/// `exp(1 − 1/(1 − r²))`, `r = |k − center|/radius`, then renormalize.
pub fn smooth_momentum_cutoff(state: &WaveState, center: &[f64], radius: f64) -> Result<WaveState> {
    state.check_vector(center)?;
    if !(radius > 0.0) {
        return Err(Error::invalid("cutoff radius must be positive"));
    }
    let norm = state.norm();
    let mut out = state.clone();
    out.apply_fourier_multiplier(|k| {
        let r2: f64 = k
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (radius * radius);
        if r2 >= 1.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new((1.0 - 1.0 / (1.0 - r2)).exp(), 0.0)
        }
    });
    let kept = out.norm();
    if kept == 0.0 {
        return Err(Error::invalid("cutoff removes the whole state"));
    }
    out.scale(Complex64::new(norm / kept, 0.0));
    Ok(out)
}
