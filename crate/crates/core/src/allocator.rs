//! State-dependent α-fair power allocation.
//!
//! Given `x_j` cars at station `j`, the allocation maximizes
//! `Σ_j x_j U_α(p_j / x_j)` over the feasible power set, with
//! `U_α(y) = y^{1-α} / (1-α)` for `α ≠ 1` and `ln y` for `α = 1`.
//! Stations without cars receive no power. The utility is strictly
//! increasing, so the voltage-drop constraint always binds at the optimum
//! and the first-order conditions read `x_j^α p_j^{-α} = μ g_j(p)`, where
//! `g` is the constraint gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powerflow::{distflow_end_voltage, gradient_unchecked, FlowModel, NetworkConfig, PowerAllocation};

/// Number of cars at each station, relabeled order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueState(pub Vec<u64>);

impl QueueState {
    pub fn new(x: Vec<u64>) -> Self {
        QueueState(x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_idle(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub alpha: f64,
}

impl FairnessSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("fairness alpha must be finite and > 0, got {alpha}")));
        }
        Ok(FairnessSpec { alpha })
    }

    pub fn proportional() -> Self {
        FairnessSpec { alpha: 1.0 }
    }

    pub fn is_proportional(&self) -> bool {
        self.alpha == 1.0
    }

    /// `U_α(y)`.
    pub fn utility(&self, y: f64) -> f64 {
        if self.is_proportional() {
            y.ln()
        } else {
            y.powf(1.0 - self.alpha) / (1.0 - self.alpha)
        }
    }
}

/// Objective `Σ_{x_j > 0} x_j U_α(p_j / x_j)`.
pub fn total_utility(x: &QueueState, p: &[f64], spec: FairnessSpec) -> f64 {
    x.0.iter()
        .zip(p)
        .filter(|(&xj, _)| xj > 0)
        .map(|(&xj, &pj)| xj as f64 * spec.utility(pj / xj as f64))
        .sum()
}

fn check_inputs(x: &QueueState, spec: FairnessSpec, cfg: &NetworkConfig) -> Result<()> {
    cfg.validate()?;
    FairnessSpec::new(spec.alpha)?;
    if x.len() != cfg.n_stations {
        return Err(Error::domain(format!(
            "queue state has {} stations, network has {}",
            x.len(),
            cfg.n_stations
        )));
    }
    Ok(())
}

/// `q_j = x_j g_j^{-1/α}`; the optimum is `p = s q` for a scalar `s > 0`.
fn kkt_direction(x: &QueueState, g: &[f64], alpha: f64) -> Vec<f64> {
    x.0.iter()
        .zip(g)
        .map(|(&xj, &gj)| {
            if xj == 0 {
                0.0
            } else if alpha == 1.0 {
                xj as f64 / gj
            } else {
                xj as f64 * gj.powf(-1.0 / alpha)
            }
        })
        .collect()
}

/// α-fair allocation under the Linearized Distflow constraint
/// `2r Σ_m (N - m) p_m <= (1/(1-Δ))² - 1`, in closed form.
pub fn alpha_fair_lindist(x: &QueueState, spec: FairnessSpec, cfg: &NetworkConfig) -> Result<PowerAllocation> {
    check_inputs(x, spec, cfg)?;
    let n = cfg.n_stations;
    if x.is_idle() {
        return Ok(PowerAllocation::zeros(n));
    }
    let weights: Vec<f64> = (0..n).map(|m| 2.0 * cfg.resistance * (n - m) as f64).collect();
    let q = kkt_direction(x, &weights, spec.alpha);
    let used: f64 = q.iter().zip(&weights).map(|(a, b)| a * b).sum();
    let scale = cfg.budget() / used;
    PowerAllocation::new(q.into_iter().map(|qj| qj * scale).collect())
}

/// Solver controls for [`alpha_fair_distflow`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistflowSolverOptions {
    /// Allowed constraint slack, in squared-voltage units.
    pub tol: f64,
    /// Relative change of `p` at which the gradient fixed point is accepted.
    pub fixed_point_tol: f64,
    pub max_fixed_point_iter: usize,
    pub max_scalar_iter: usize,
}

impl Default for DistflowSolverOptions {
    fn default() -> Self {
        DistflowSolverOptions { tol: 1e-9, fixed_point_tol: 1e-11, max_fixed_point_iter: 500, max_scalar_iter: 200 }
    }
}

/// α-fair allocation under the Distflow constraint `V_N(p)² <= (1/(1-Δ))²`.
///
/// Alternates two steps until `p` stops moving: freeze the constraint
/// gradient `g = ∇ W_{N,N}` at the current `p`, which fixes the KKT
/// direction `q`, then find the multiplier (equivalently the scale `s`
/// with `p = s q`) that makes the constraint bind. The scalar step uses
/// Newton's method safeguarded by bisection; `V_N(s q)` is increasing in
/// `s`. Starting from `p = 0` the first pass reproduces the Linearized
/// Distflow allocation.
pub fn alpha_fair_distflow(
    x: &QueueState,
    spec: FairnessSpec,
    cfg: &NetworkConfig,
    opts: DistflowSolverOptions,
) -> Result<PowerAllocation> {
    check_inputs(x, spec, cfg)?;
    let n = cfg.n_stations;
    if x.is_idle() {
        return Ok(PowerAllocation::zeros(n));
    }
    let r = cfg.resistance;
    let target = cfg.voltage_bound();
    // Slack tolerance translated from W = V² to V.
    let v_tol = (opts.tol / (2.0 * target)).max(4.0 * f64::EPSILON * target);

    // First pass: at p = 0 the gradient equals the linearized weights.
    // Distflow needs more headroom than the linearization, so the
    // linearized scale overshoots and serves as the bracket's upper end.
    let mut p = vec![0.0; n];
    let mut g: Vec<f64> = (0..n).map(|m| 2.0 * r * (n - m) as f64).collect();
    let mut q = kkt_direction(x, &g, spec.alpha);
    let lin_used: f64 = q.iter().zip(&g).map(|(a, b)| a * b).sum();
    let mut s_guess = cfg.budget() / lin_used;
    for _ in 0..opts.max_fixed_point_iter {
        let s = bind_scale(&q, r, target, v_tol, s_guess, opts.max_scalar_iter)?;
        let mut change = 0.0f64;
        let mut largest = 0.0f64;
        for (pj, qj) in p.iter_mut().zip(&q) {
            let next = s * qj;
            change = change.max((next - *pj).abs());
            largest = largest.max(next);
            *pj = next;
        }
        if change <= opts.fixed_point_tol * largest {
            return PowerAllocation::new(p);
        }
        let vn = distflow_end_voltage(&p, r);
        g = gradient_unchecked(&p, r);
        g.iter_mut().for_each(|d| *d *= 2.0 * vn);
        q = kkt_direction(x, &g, spec.alpha);
        // Rescale the guess so that s·q keeps the current total power.
        let q_total: f64 = q.iter().sum();
        s_guess = p.iter().sum::<f64>() / q_total;
    }
    Err(Error::Allocation(format!(
        "gradient fixed point did not settle within {} iterations for state {:?}",
        opts.max_fixed_point_iter, x.0
    )))
}

/// `V_N(s q)` and its derivative with respect to `s`.
fn scaled_end_voltage(q: &[f64], s: f64, r: f64) -> (f64, f64) {
    let (mut v_prev, mut v) = (1.0, 1.0 + r * s * q[0]);
    let (mut d_prev, mut d) = (0.0, r * q[0]);
    for &qj in &q[1..] {
        let pj = s * qj;
        let inv_v = 1.0 / v;
        let v_next = 2.0 * v - v_prev + r * pj * inv_v;
        let d_next = 2.0 * d - d_prev + r * qj * inv_v - r * pj * d * inv_v * inv_v;
        (v_prev, v) = (v, v_next);
        (d_prev, d) = (d, d_next);
    }
    (v, d)
}

/// Finds `s > 0` with `V_N(s q) = target`, starting from `guess`. Only
/// accepts a scale on the feasible side, `target - v_tol <= V_N <= target`.
fn bind_scale(q: &[f64], r: f64, target: f64, v_tol: f64, guess: f64, max_iter: usize) -> Result<f64> {
    let eval = |s: f64| {
        let (v, dv) = scaled_end_voltage(q, s, r);
        (v - target, dv)
    };
    let mut lo = 0.0;
    let mut hi = guess.max(f64::MIN_POSITIVE);
    let mut grows = 0;
    let mut at_hi = eval(hi);
    while at_hi.0 < 0.0 {
        lo = hi;
        hi *= 2.0;
        at_hi = eval(hi);
        grows += 1;
        if grows > 2000 {
            return Err(Error::Allocation("could not bracket the binding scale".into()));
        }
    }
    let (mut s, (mut f, mut df)) = (hi, at_hi);
    for _ in 0..max_iter {
        if f <= 0.0 && f >= -v_tol {
            return Ok(s);
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(lo);
        }
        let mut next = s - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        s = next;
        (f, df) = eval(s);
    }
    Err(Error::Allocation(format!("binding scale did not converge in {max_iter} iterations")))
}

/// Dispatches to the allocator of the given model with default options.
pub fn allocate(model: FlowModel, x: &QueueState, spec: FairnessSpec, cfg: &NetworkConfig) -> Result<PowerAllocation> {
    match model {
        FlowModel::LinDist => alpha_fair_lindist(x, spec, cfg),
        FlowModel::Distflow => alpha_fair_distflow(x, spec, cfg, DistflowSolverOptions::default()),
    }
}

/// Largest relative KKT residual `|x_j^α p_j^{-α} - μ g_j| / (x_j^α p_j^{-α})`
/// over occupied stations, with `μ` fitted by least squares in log space
/// (the geometric mean of the per-station ratios).
pub fn kkt_residual(x: &QueueState, p: &PowerAllocation, spec: FairnessSpec, cfg: &NetworkConfig, model: FlowModel) -> f64 {
    let n = cfg.n_stations;
    let p = p.as_slice();
    let g: Vec<f64> = match model {
        FlowModel::LinDist => (0..n).map(|m| 2.0 * cfg.resistance * (n - m) as f64).collect(),
        FlowModel::Distflow => {
            let vn = distflow_end_voltage(p, cfg.resistance);
            gradient_unchecked(p, cfg.resistance).into_iter().map(|d| 2.0 * vn * d).collect()
        }
    };
    let marginal: Vec<(f64, f64)> = x
        .0
        .iter()
        .zip(p)
        .zip(&g)
        .filter(|((&xj, _), _)| xj > 0)
        .map(|((&xj, &pj), &gj)| ((xj as f64 / pj).powf(spec.alpha), gj))
        .collect();
    if marginal.is_empty() {
        return 0.0;
    }
    let log_mu = marginal.iter().map(|(m, g)| (m / g).ln()).sum::<f64>() / marginal.len() as f64;
    let mu = log_mu.exp();
    marginal.iter().map(|(m, g)| (m - mu * g).abs() / m).fold(0.0, f64::max)
}
