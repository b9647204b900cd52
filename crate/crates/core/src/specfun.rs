//! Imaginary error function and the closed-form solution of `f'' = k / f`.
//!
//! The continuum limit of the Distflow recursion is `V'' = a / V` with
//! `V(0) = 1`, `V'(0) = 0`. Its solution is built from the base function
//! `f0(x) = exp(U(x)^2)`, where `U` inverts `u -> sqrt(2) * ∫_0^u exp(s^2) ds`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest |x| for which `erfi(x)` is finite in 64-bit floats.
pub const ERFI_MAX_ARG: f64 = 26.6;

/// Absolute residual target of [`u_inverse`], scaled by `max(1, x)`.
pub const U_INVERSE_TOL: f64 = 1e-13;

const U_INVERSE_MAX_ITER: usize = 200;

/// Imaginary error function `erfi(x) = (2/√π) ∫_0^x exp(v²) dv`.
///
/// Evaluated by its Maclaurin series. Every term has the sign of `x`, so
/// the summation has no cancellation at any argument and stays accurate up
/// to the overflow boundary.
pub fn erfi(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("erfi argument must be finite, got {x}")));
    }
    let ax = x.abs();
    if ax > ERFI_MAX_ARG {
        return Err(Error::Range(format!("erfi({x}) overflows a 64-bit float")));
    }
    let x2 = ax * ax;
    // term = ax^(2n+1) / n!
    let mut term = ax;
    let mut sum = ax;
    let mut n = 0.0f64;
    loop {
        n += 1.0;
        term *= x2 / n;
        let contrib = term / (2.0 * n + 1.0);
        sum += contrib;
        if n > x2 && contrib <= f64::EPSILON * 0.25 * sum {
            break;
        }
    }
    let value = FRAC_2_SQRT_PI * sum;
    if !value.is_finite() {
        return Err(Error::Range(format!("erfi({x}) overflows a 64-bit float")));
    }
    Ok(value.copysign(x))
}

/// `∫_0^x exp(u²) du`, i.e. `(√π / 2) · erfi(x)`.
pub fn exp_sq_integral(x: f64) -> Result<f64> {
    Ok(erfi(x)? / FRAC_2_SQRT_PI)
}

/// `U(x)` with `∫_0^U exp(u²) du = x / √2`.
pub fn u_inverse(x: f64) -> Result<f64> {
    u_inverse_with_tol(x, U_INVERSE_TOL)
}

/// [`u_inverse`] with an explicit residual tolerance.
pub fn u_inverse_with_tol(x: f64, tol: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("u_inverse requires finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let scale = (PI / 2.0).sqrt();
    let residual = |u: f64| -> Result<f64> { Ok(erfi(u)? * scale - x) };
    let target_tol = tol * x.max(1.0);

    // ∫_0^U e^{u²} du >= U gives U <= x/√2; g is convex and increasing on
    // [0, ∞), so Newton from the upper end approaches the root monotonically.
    let mut lo = 0.0;
    let mut hi = (x / SQRT_2).min(ERFI_MAX_ARG);
    let g_hi = residual(hi)?;
    if g_hi < 0.0 {
        return Err(Error::Range(format!("u_inverse({x}) exceeds the representable erfi range")));
    }
    if g_hi.abs() <= target_tol {
        return Ok(hi);
    }
    // For large x the residual is taken in log space, where exp(u²)
    // growth no longer throttles the Newton steps.
    let log_space = x > 1.0;
    let mut u = hi;
    let mut g = g_hi;
    for _ in 0..U_INVERSE_MAX_ITER {
        let slope = SQRT_2 * (u * u).exp();
        let step = if log_space {
            let value = g + x;
            (value / x).ln() / (slope / value)
        } else {
            g / slope
        };
        let mut next = u - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        u = next;
        g = residual(u)?;
        if g.abs() <= target_tol {
            // One more Newton step takes the quadratically converging
            // iterate to full precision, which callers that difference
            // f0 numerically depend on.
            let polished = u - g / (SQRT_2 * (u * u).exp());
            return Ok(if polished > lo && polished < hi { polished } else { u });
        }
        if g > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(u);
        }
    }
    Ok(u)
}

/// Base solution `f0(x) = exp(U(x)²)` of `f'' = 1/f`, `f(0) = 1`, `f'(0) = 0`.
pub fn f0(x: f64) -> Result<f64> {
    let u = u_inverse(x)?;
    let value = (u * u).exp();
    if !value.is_finite() {
        return Err(Error::Range(format!("f0({x}) overflows")));
    }
    Ok(value)
}

/// Inverse of [`f0`]: `√(π/2) · erfi(√ln y)` for `y >= 1`.
pub fn f0_inverse(y: f64) -> Result<f64> {
    if !(y >= 1.0) || !y.is_finite() {
        return Err(Error::domain(format!("f0_inverse requires finite y >= 1, got {y}")));
    }
    Ok((PI / 2.0).sqrt() * erfi(y.ln().sqrt())?)
}

/// Parameters of the exact solution `f(t) = γ · f0(α + β t)` of
/// `f'' = k / f` with `f(0) = y0`, `f'(0) = w0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSolutionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub y0: f64,
    pub w0: f64,
}

impl OdeSolutionParams {
    /// Evaluates `f(t)`. Valid wherever `α + β t >= 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let arg = self.alpha + self.beta * t;
        Ok(self.gamma * f0(arg)?)
    }
}

pub fn solve_ode(k: f64, y0: f64, w0: f64) -> Result<OdeSolutionParams> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("solve_ode requires k > 0, got {k}")));
    }
    if !(y0 > 0.0) || !y0.is_finite() {
        return Err(Error::domain(format!("solve_ode requires y0 > 0, got {y0}")));
    }
    if !(w0 >= 0.0) || !w0.is_finite() {
        return Err(Error::domain(format!("solve_ode requires w0 >= 0, got {w0}")));
    }
    let u0 = w0 / (2.0 * k).sqrt();
    let shift = (u0 * u0).exp();
    Ok(OdeSolutionParams {
        alpha: SQRT_2 * exp_sq_integral(u0)?,
        beta: k.sqrt() / y0 * shift,
        gamma: y0 / shift,
        k,
        y0,
        w0,
    })
}
