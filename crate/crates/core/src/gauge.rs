//! The unitary `T(t) = e^{−ia(t)} e^{−ib(t)·x} e^{−ic(t)·p}`, the Stark
//! propagator in its four-factor form, and the exact free propagator
//! `U₀(t,s) = T(t) e^{−i(t−s)B₀} T*(s)` with `B₀ = ½p² − E₀·x`.
//!
//! Translation convention: `e^{−ic·p} ψ(x) = ψ(x − c)`, applied as the Fourier
//! phase `e^{−ic·k}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ElectricField, GaugeCoefficients};
use crate::grid::WaveState;

/// Boundary mass tolerated after an analytic propagation leg.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-6;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(state: &WaveState, dims: usize) -> Result<()> {
    if state.grid().dims() != dims {
        Err(Error::GridMismatch(format!(
            "state is {}-dimensional, coefficients are {dims}-dimensional",
            state.grid().dims()
        )))
    } else {
        Ok(())
    }
}

/// Apply `T(t)` (or `T*(t)` when `inverse`).
pub fn apply_gauge_t(
    state: &WaveState,
    t: f64,
    coeffs: &GaugeCoefficients,
    inverse: bool,
) -> Result<WaveState> {
    check_dims(state, coeffs.dims())?;
    let a = coeffs.a(t);
    let b = coeffs.b(t);
    let c = coeffs.c(t);
    let mut out = state.clone();
    if !inverse {
        out.translate(&c)?;
        out.apply_position_multiplier(|x| Complex64::from_polar(1.0, -a - dot(&b, x)));
    } else {
        out.apply_position_multiplier(|x| Complex64::from_polar(1.0, a + dot(&b, x)));
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        out.translate(&neg)?;
    }
    Ok(out)
}

/// `e^{−itB₀} = e^{−i(E₀²/6)t³} e^{itE₀·x} e^{−i(t²/2)E₀·p} e^{−itp²/2}`.
pub fn stark_propagate(state: &WaveState, t: f64, e0: &[f64]) -> Result<WaveState> {
    stark_propagate_with_threshold(state, t, e0, DEFAULT_BOUNDARY_THRESHOLD)
}

pub fn stark_propagate_with_threshold(
    state: &WaveState,
    t: f64,
    e0: &[f64],
    threshold: f64,
) -> Result<WaveState> {
    state.check_vector(e0)?;
    let mut out = state.clone();
    if t == 0.0 {
        return Ok(out);
    }
    let drift = 0.5 * t * t;
    out.apply_fourier_multiplier(|k| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        Complex64::from_polar(1.0, -0.5 * t * k2 - drift * dot(e0, k))
    });
    let e2: f64 = e0.iter().map(|v| v * v).sum();
    if e2 > 0.0 {
        let global = -e2 * t * t * t / 6.0;
        out.apply_position_multiplier(|x| Complex64::from_polar(1.0, global + t * dot(e0, x)));
    }
    out.check_boundary(threshold, t)?;
    Ok(out)
}

/// Exact free propagator `U₀(t, s)` for `H₀(t) = ½p² − E(t)·x`.
pub fn free_propagate(
    state: &WaveState,
    t: f64,
    s: f64,
    field: &ElectricField,
    coeffs: &GaugeCoefficients,
) -> Result<WaveState> {
    free_propagate_with_threshold(state, t, s, field, coeffs, DEFAULT_BOUNDARY_THRESHOLD)
}

pub fn free_propagate_with_threshold(
    state: &WaveState,
    t: f64,
    s: f64,
    field: &ElectricField,
    coeffs: &GaugeCoefficients,
    threshold: f64,
) -> Result<WaveState> {
    if field.dims() != coeffs.dims() || field.mean() != coeffs.mean_field() {
        return Err(Error::invalid(
            "coefficients were not computed for this field",
        ));
    }
    if t == s {
        return Ok(state.clone());
    }
    let back = apply_gauge_t(state, s, coeffs, true)?;
    let moved = stark_propagate_with_threshold(&back, t - s, field.mean(), threshold)?;
    let out = apply_gauge_t(&moved, t, coeffs, false)?;
    out.check_boundary(threshold, t)?;
    Ok(out)
}
