//! Maximal uniform arrival rates under both load-flow models.
//!
//! With equal arrival rate `λ` at every station, the queueing network is
//! stable iff the uniform allocation `p ≡ λ` lies strictly inside the
//! feasible power set. The boundary rate is
//!
//! * Linearized Distflow: `λ_N^L = ((1/(1-Δ))² - 1) / (r N (N+1))`, in closed form;
//! * Distflow: `λ_N^D = ā / (r N²)`, where `ā` solves `V_N(ā) = 1/(1-Δ)` for
//!   the uniform recursion with `k = a/N²`. We find `ā` by Newton's method
//!   started from the continuum-limit solution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powerflow::{
    check_delta, check_resistance, distflow_sensitivity, sensitivity_guarantee_bound, squared_budget, NetworkConfig,
};
use crate::specfun::{erfi, exp_sq_integral, f0, f0_inverse};

/// `ln(1/(1-Δ))` without cancellation for small `Δ`.
fn log_voltage_bound(delta: f64) -> f64 {
    -(-delta).ln_1p()
}

/// Closed-form Linearized Distflow threshold `λ_N^L`.
pub fn lambda_lin(cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    let n = cfg.n_stations as f64;
    Ok(cfg.budget() / (cfg.resistance * n * (n + 1.0)))
}

/// `λ_c^L = lim N² λ_N^L = ((1/(1-Δ))² - 1) / r`.
pub fn lambda_lin_critical(r: f64, delta: f64) -> Result<f64> {
    check_resistance(r)?;
    check_delta(delta)?;
    Ok(squared_budget(delta) / r)
}

/// `λ_c^D = lim N² λ_N^D = (π / 2r) · erfi²(√ln(1/(1-Δ)))`.
pub fn lambda_dist_critical(r: f64, delta: f64) -> Result<f64> {
    check_resistance(r)?;
    check_delta(delta)?;
    let e = erfi(log_voltage_bound(delta).sqrt())?;
    Ok(PI / (2.0 * r) * e * e)
}

/// `P(Δ) = λ_c^D / λ_c^L`.
pub fn ratio_p(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let integral = exp_sq_integral(log_voltage_bound(delta).sqrt())?;
    let q = 1.0 - delta;
    Ok(2.0 * q * q * integral * integral / (delta * (2.0 - delta)))
}

/// Continuum-limit voltage profile `V(t) = f0(t √a)`, `t ∈ [0, 1]`.
pub fn continuum_voltage(a: f64, t: f64) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("a must be finite and >= 0, got {a}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t must lie in [0, 1], got {t}")));
    }
    f0(t * a.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Stop once `|a_{j+1} - a_j| / a_j` falls below this.
    pub stop_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { stop_tol: 1e-10, max_iter: 50 }
    }
}

/// Record of a Newton solve for `ā`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub n: usize,
    /// Target substation voltage `1/(1-Δ)`.
    pub target: f64,
    pub a0: f64,
    /// `a_0, a_1, ..., a_final`.
    pub iterates: Vec<f64>,
    pub a_final: f64,
    /// `V_N(a_j) - target` for each iterate.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of steps halved to keep the iterate positive.
    pub damped_steps: usize,
    /// Whether every iterate stayed below `2N/(N-1)`, where positivity of
    /// the derivative sequence is guaranteed a priori.
    pub within_guarantee: bool,
}

/// Solves `V_N(a) = 1/(1-Δ)` for the uniform Distflow recursion.
pub fn newton_solve_a(n: usize, delta: f64, opts: NewtonOptions) -> Result<NewtonTrace> {
    check_delta(delta)?;
    newton_solve_target(n, 1.0 / (1.0 - delta), opts)
}

/// Solves `V_N(a) = target` directly. Useful when the target voltage is
/// known more precisely than `Δ`.
pub fn newton_solve_target(n: usize, target: f64, opts: NewtonOptions) -> Result<NewtonTrace> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(target > 1.0) || !target.is_finite() {
        return Err(Error::domain(format!("target voltage must be finite and > 1, got {target}")));
    }
    let nf = n as f64;
    let n2 = nf * nf;
    let guarantee = sensitivity_guarantee_bound(n);

    let fi = f0_inverse(target)?;
    let a0 = fi * fi;
    let mut trace = NewtonTrace {
        n,
        target,
        a0,
        iterates: vec![a0],
        a_final: a0,
        residuals: Vec::new(),
        iterations: 0,
        converged: false,
        damped_steps: 0,
        within_guarantee: a0 < guarantee,
    };

    let mut a = a0;
    loop {
        let (v, y) = distflow_sensitivity(a, n)?;
        trace.residuals.push(v - target);
        if trace.converged || trace.iterations >= opts.max_iter {
            break;
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Invariant(format!("dV_N/dk = {y} is not positive at a = {a}, N = {n}")));
        }
        let mut step = (v - target) / (y / n2);
        let mut next = a - step;
        while !(next > 0.0) {
            step *= 0.5;
            next = a - step;
            trace.damped_steps += 1;
        }
        let rel_change = (next - a).abs() / a;
        a = next;
        trace.iterates.push(a);
        trace.iterations += 1;
        trace.within_guarantee &= a < guarantee;
        if rel_change < opts.stop_tol {
            trace.converged = true;
        }
    }
    trace.a_final = a;
    if !trace.converged {
        return Err(Error::NewtonDiverged { trace: Box::new(trace) });
    }
    Ok(trace)
}

/// Runs the uniform recursion forward at `a`, then recovers `a` from the
/// resulting `V_N` by Newton's method.
pub fn newton_recovery(a: f64, n: usize, opts: NewtonOptions) -> Result<NewtonTrace> {
    let (target, _) = distflow_sensitivity(a, n)?;
    newton_solve_target(n, target, opts)
}

/// Distflow threshold `λ_N^D = ā / (r N²)`.
pub fn lambda_dist(cfg: &NetworkConfig) -> Result<f64> {
    lambda_dist_with(cfg, NewtonOptions::default())
}

pub fn lambda_dist_with(cfg: &NetworkConfig, opts: NewtonOptions) -> Result<f64> {
    cfg.validate()?;
    let trace = newton_solve_a(cfg.n_stations, cfg.delta, opts)?;
    let n = cfg.n_stations as f64;
    Ok(trace.a_final / (cfg.resistance * n * n))
}

/// One row of the discrete-vs-continuum comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n: usize,
    pub a: f64,
    pub v_discrete: f64,
    pub v_continuum: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

/// Compares `V_N` of the uniform recursion with the continuum value
/// `V(1) = f0(√a)` for each `N`.
pub fn convergence_report(a: f64, n_values: &[usize]) -> Result<Vec<ConvergenceReport>> {
    let v_continuum = continuum_voltage(a, 1.0)?;
    n_values
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::domain(format!("N must be at least 2, got {n}")));
            }
            let (v_discrete, _) = distflow_sensitivity(a, n)?;
            let abs_err = (v_continuum - v_discrete).abs();
            Ok(ConvergenceReport { n, a, v_discrete, v_continuum, abs_err, rel_err: abs_err / v_discrete })
        })
        .collect()
}
