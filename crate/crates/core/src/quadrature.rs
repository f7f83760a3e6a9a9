//! Adaptive Gauss–Kronrod (7/15) quadrature for oracle integrals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_INTERVALS: usize = 2000;

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// `∫_a^b f` to absolute tolerance `tol`; returns (value, error estimate).
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    integrate_panels(f, &[a, b], tol)
}

/// Adaptive quadrature starting from the partition given by `breaks`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    tol: f64,
) -> Result<(f64, f64)> {
    if breaks.len() < 2 || breaks.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("finite limits required; use integrate_line"));
    }
    let mut parts: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .map(|w| {
            let (v, e) = kronrod(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::invalid("integrand not finite"));
        }
        if err <= tol || parts.len() >= MAX_INTERVALS {
            if err > tol {
                return Err(Error::invalid(format!(
                    "quadrature did not reach tolerance {tol:e} (estimate {err:e})"
                )));
            }
            return Ok((total, err));
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (a0, b0, _, _) = parts.swap_remove(i);
        let m = 0.5 * (a0 + b0);
        let (v1, e1) = kronrod(&mut f, a0, m);
        let (v2, e2) = kronrod(&mut f, m, b0);
        parts.push((a0, m, v1, e1));
        parts.push((m, b0, v2, e2));
    }
}

/// `∫_{−∞}^{∞} f` through `x = sinh v`, which turns algebraic tails
/// `|x|^{−δ}` into exponentials `e^{−(δ−1)|v|}`. Integrands must decay at
/// least like `|x|^{−1.1}`; `|v| ≤ 300` is kept.
pub fn integrate_line<F: FnMut(f64) -> f64>(mut f: F, tol: f64) -> Result<(f64, f64)> {
    let mut breaks = vec![-300.0, -40.0, -10.0];
    breaks.extend((-20..=20).map(|k| 0.5 * k as f64));
    breaks.extend([10.0, 40.0, 300.0]);
    breaks.dedup();
    integrate_panels(
        |v: f64| {
            let w = f(v.sinh()) * v.cosh();
            if w.is_finite() {
                w
            } else {
                0.0
            }
        },
        &breaks,
        tol,
    )
}
