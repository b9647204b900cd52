//! Load flow on a line feeder.
//!
//! Stations are indexed in relabeled order: `p[0]` is the station at the
//! far end of the line and `p[N - 1]` the one next to the substation.
//! Voltages run the same way, so `v[0]` is the far-end voltage and `v[N]`
//! the substation voltage. Under Distflow the far end is pinned to `1` and
//! the recursion runs towards the substation; the voltage-drop constraint
//! then bounds `v[N]` from above by `1 / (1 - Δ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Line feeder with `n_stations` identical edges of resistance `resistance`
/// and a maximal relative voltage drop `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_stations: usize,
    pub resistance: f64,
    pub delta: f64,
}

impl NetworkConfig {
    pub fn new(n_stations: usize, resistance: f64, delta: f64) -> Result<Self> {
        let cfg = NetworkConfig { n_stations, resistance, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stations == 0 {
            return Err(Error::domain("n_stations must be at least 1"));
        }
        check_resistance(self.resistance)?;
        check_delta(self.delta)
    }

    /// Substation-to-far-end voltage ratio at the maximal drop, `1 / (1 - Δ)`.
    pub fn voltage_bound(&self) -> f64 {
        1.0 / (1.0 - self.delta)
    }

    /// `(1 / (1 - Δ))²`.
    pub fn squared_voltage_bound(&self) -> f64 {
        let c = self.voltage_bound();
        c * c
    }

    /// Squared-voltage budget `(1/(1-Δ))² - 1`.
    pub fn budget(&self) -> f64 {
        squared_budget(self.delta)
    }
}

/// `(1/(1-Δ))² - 1 = Δ(2-Δ)/(1-Δ)²`, free of cancellation for small `Δ`.
pub(crate) fn squared_budget(delta: f64) -> f64 {
    let q = 1.0 - delta;
    delta * (2.0 - delta) / (q * q)
}

pub(crate) fn check_resistance(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("resistance must be finite and > 0, got {r}")));
    }
    Ok(())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::domain(format!("delta must lie in (0, 0.5], got {delta}")));
    }
    Ok(())
}

/// Which load-flow model defines the feasible power set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowModel {
    Distflow,
    LinDist,
}

impl fmt::Display for FlowModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowModel::Distflow => f.write_str("distflow"),
            FlowModel::LinDist => f.write_str("lindist"),
        }
    }
}

impl FromStr for FlowModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distflow" | "df" => Ok(FlowModel::Distflow),
            "lindist" | "lindistflow" | "linear" => Ok(FlowModel::LinDist),
            other => Err(Error::domain(format!("unknown flow model {other:?}"))),
        }
    }
}

/// Nonnegative active power per station, relabeled order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation(Vec<f64>);

impl PowerAllocation {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((j, &bad)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!("power p[{j}] = {bad} must be finite and >= 0")));
        }
        Ok(PowerAllocation(p))
    }

    pub fn zeros(n: usize) -> Self {
        PowerAllocation(vec![0.0; n])
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Builds an allocation from physical order, where `physical[i]` is the
    /// station `i + 1` edges away from the substation.
    pub fn from_physical_order(mut physical: Vec<f64>) -> Result<Self> {
        physical.reverse();
        Self::new(physical)
    }

    pub fn to_physical_order(&self) -> Vec<f64> {
        self.0.iter().rev().copied().collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl AsRef<[f64]> for PowerAllocation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Node voltages `v[0..=N]` together with the squared and cross products
/// `w_diag[j] = v[j]²` and `w_off[j] = v[j]·v[j+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageProfile {
    pub v: Vec<f64>,
    pub w_diag: Vec<f64>,
    pub w_off: Vec<f64>,
}

impl VoltageProfile {
    fn from_voltages(v: Vec<f64>) -> Self {
        let w_diag = v.iter().map(|x| x * x).collect();
        let w_off = v.windows(2).map(|w| w[0] * w[1]).collect();
        VoltageProfile { v, w_diag, w_off }
    }

    /// Voltage at the substation end, `v[N]`.
    pub fn end_voltage(&self) -> f64 {
        *self.v.last().expect("profile has at least one node")
    }
}

/// Distflow voltages for an arbitrary far-end voltage `v0`.
pub fn distflow_from_root(v0: f64, p: &PowerAllocation, r: f64) -> Result<VoltageProfile> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::domain(format!("v0 must be finite and > 0, got {v0}")));
    }
    check_resistance(r)?;
    let p = p.as_slice();
    let mut v = Vec::with_capacity(p.len() + 1);
    v.push(v0);
    if let Some(&p0) = p.first() {
        v.push(v0 + r * p0 / v0);
    }
    for j in 1..p.len() {
        let next = 2.0 * v[j] - v[j - 1] + r * p[j] / v[j];
        v.push(next);
    }

    let (w_diag, w_off) = w_recursion(v0, p, r);
    Ok(VoltageProfile { v, w_diag, w_off })
}

/// Squared/cross voltage products by the W-recursion:
/// `W_{j,j+1} = 2 W_{j,j} - W_{j-1,j} + r p_j` and `W_{j,j} = W_{j-1,j}² / W_{j-1,j-1}`.
fn w_recursion(v0: f64, p: &[f64], r: f64) -> (Vec<f64>, Vec<f64>) {
    let n = p.len();
    let mut diag = Vec::with_capacity(n + 1);
    let mut off = Vec::with_capacity(n);
    diag.push(v0 * v0);
    if n == 0 {
        return (diag, off);
    }
    off.push(v0 * v0 + r * p[0]);
    for j in 1..=n {
        let d = off[j - 1] * off[j - 1] / diag[j - 1];
        diag.push(d);
        if j < n {
            off.push(2.0 * d - off[j - 1] + r * p[j]);
        }
    }
    (diag, off)
}

/// Distflow voltages with the far end pinned at `1`.
pub fn distflow_voltages(p: &PowerAllocation, r: f64) -> Result<VoltageProfile> {
    distflow_from_root(1.0, p, r)
}

/// Distflow voltages from the double-sum representation
/// `V_j = 1 + Σ_{n<j} Σ_{i<=n} r p_i / V_i`.
///
/// Independent of the second-order recursion; used as its oracle.
pub fn distflow_double_sum(p: &PowerAllocation, r: f64) -> Result<VoltageProfile> {
    check_resistance(r)?;
    let p = p.as_slice();
    let mut v = Vec::with_capacity(p.len() + 1);
    // inner[n] = Σ_{i<=n} r p_i / V_i
    let mut inner: Vec<f64> = Vec::with_capacity(p.len());
    v.push(1.0);
    for j in 1..=p.len() {
        let i = j - 1;
        let prev = inner.last().copied().unwrap_or(0.0);
        inner.push(prev + r * p[i] / v[i]);
        let outer: f64 = inner.iter().sum();
        v.push(1.0 + outer);
    }
    Ok(VoltageProfile::from_voltages(v))
}

/// Linearized Distflow squared voltages with the substation end fixed at
/// `(1/(1-Δ))²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinDistProfile {
    /// `W^L_{j,j}` for `j = 0..=N`, by the first-difference recursion.
    pub w_diag: Vec<f64>,
    /// `Σ_m (N - m) p_m`, the collapsed form of the double sum.
    pub weighted_load: f64,
    /// `W^L_{0,0}` from the collapsed closed form.
    pub w00_closed_form: f64,
    /// `false` when `W^L_{0,0} < 1`, i.e. the drop bound is violated.
    /// A negative `W^L_{0,0}` has no physical meaning but is still reported.
    pub feasible: bool,
}

impl LinDistProfile {
    pub fn w00(&self) -> f64 {
        self.w_diag[0]
    }
}

pub fn lindist_squared_voltages(p: &PowerAllocation, r: f64, delta: f64) -> Result<LinDistProfile> {
    check_resistance(r)?;
    check_delta(delta)?;
    let p = p.as_slice();
    let n = p.len();
    let c = 1.0 / (1.0 - delta);
    let mut w_diag = vec![0.0; n + 1];
    w_diag[n] = c * c;
    // W_{j+1} - W_j = 2r Σ_{m <= N-1-j} p_m, unrolled from the substation end.
    let mut prefix = 0.0;
    let prefixes: Vec<f64> = p
        .iter()
        .map(|&pm| {
            prefix += pm;
            prefix
        })
        .collect();
    for j in (0..n).rev() {
        w_diag[j] = w_diag[j + 1] - 2.0 * r * prefixes[n - 1 - j];
    }
    let weighted_load: f64 = p.iter().enumerate().map(|(m, &pm)| (n - m) as f64 * pm).sum();
    let w00_closed_form = c * c - 2.0 * r * weighted_load;
    Ok(LinDistProfile {
        feasible: w_diag[0] >= 1.0,
        w_diag,
        weighted_load,
        w00_closed_form,
    })
}

/// Outcome of a feasibility check. `slack` is the constraint margin in
/// squared-voltage units and is nonnegative iff the allocation is feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub slack: f64,
}

pub fn feasible(p: &PowerAllocation, cfg: &NetworkConfig, model: FlowModel) -> Result<Feasibility> {
    cfg.validate()?;
    if p.len() != cfg.n_stations {
        return Err(Error::domain(format!(
            "allocation has {} entries, network has {} stations",
            p.len(),
            cfg.n_stations
        )));
    }
    let slack = match model {
        FlowModel::Distflow => {
            let vn = distflow_end_voltage(p.as_slice(), cfg.resistance);
            cfg.squared_voltage_bound() - vn * vn
        }
        FlowModel::LinDist => {
            let profile = lindist_squared_voltages(p, cfg.resistance, cfg.delta)?;
            profile.w00_closed_form - 1.0
        }
    };
    Ok(Feasibility { feasible: slack >= 0.0, slack })
}

/// `V_N` of the Distflow recursion with `V_0 = 1`, without allocating.
pub(crate) fn distflow_end_voltage(p: &[f64], r: f64) -> f64 {
    let Some(&p0) = p.first() else {
        return 1.0;
    };
    let mut prev = 1.0;
    let mut cur = 1.0 + r * p0;
    for &pj in &p[1..] {
        let next = 2.0 * cur - prev + r * pj / cur;
        prev = cur;
        cur = next;
    }
    cur
}

/// Upper end of the range of `a` on which the sensitivity sequence is
/// guaranteed positive, increasing and convex: `2n / (n - 1)`.
pub fn sensitivity_guarantee_bound(n: usize) -> f64 {
    if n <= 1 {
        f64::INFINITY
    } else {
        2.0 * n as f64 / (n as f64 - 1.0)
    }
}

/// Uniform-load Distflow sequences with `k = a / n²` and their derivatives
/// `Y_j = dV_j / dk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub a: f64,
    pub v: Vec<f64>,
    pub y: Vec<f64>,
}

fn check_sensitivity_args(a: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("a must be finite and >= 0, got {a}")));
    }
    let nf = n as f64;
    Ok(a / (nf * nf))
}

/// `(V_n, Y_n)` for the uniform-load recursion with `k = a / n²`.
///
/// `Y_n` is the derivative of `V_n` with respect to `k`; divide by `n²` for
/// the derivative with respect to `a`. The sequence is only guaranteed
/// positive for `a < 2n/(n-1)` (see [`sensitivity_guarantee_bound`]); larger
/// `a` is computed but callers must check the sign themselves.
pub fn distflow_sensitivity(a: f64, n: usize) -> Result<(f64, f64)> {
    let k = check_sensitivity_args(a, n)?;
    let (mut v_prev, mut v) = (1.0, 1.0 + k);
    let (mut y_prev, mut y) = (0.0, 1.0);
    for _ in 1..n {
        let v_next = 2.0 * v - v_prev + k / v;
        let y_next = 2.0 * y - y_prev + 1.0 / v - k * y / (v * v);
        (v_prev, v) = (v, v_next);
        (y_prev, y) = (y, y_next);
    }
    Ok((v, y))
}

/// Full sequences `V_0..V_n` and `Y_0..Y_n` of [`distflow_sensitivity`].
pub fn distflow_sensitivity_profile(a: f64, n: usize) -> Result<SensitivityProfile> {
    let k = check_sensitivity_args(a, n)?;
    let mut v = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    v.extend([1.0, 1.0 + k]);
    y.extend([0.0, 1.0]);
    for j in 1..n {
        v.push(2.0 * v[j] - v[j - 1] + k / v[j]);
        y.push(2.0 * y[j] - y[j - 1] + 1.0 / v[j] - k * y[j] / (v[j] * v[j]));
    }
    Ok(SensitivityProfile { a, v, y })
}

/// `∂V_N / ∂p_j` for every station, by forward sensitivity through the
/// Distflow recursion (`V_0 = 1`). Cost is `O(N²)`.
pub fn distflow_gradient(p: &PowerAllocation, r: f64) -> Result<Vec<f64>> {
    check_resistance(r)?;
    Ok(gradient_unchecked(p.as_slice(), r))
}

pub(crate) fn gradient_unchecked(p: &[f64], r: f64) -> Vec<f64> {
    let n = p.len();
    if n == 0 {
        return Vec::new();
    }
    // s[j] = ∂V_i/∂p_j for the current node i, s_prev for node i-1.
    let mut s_prev = vec![0.0; n];
    let mut s = vec![0.0; n];
    s[0] = r;
    let (mut v_prev, mut v) = (1.0, 1.0 + r * p[0]);
    for i in 1..n {
        let inv_v = 1.0 / v;
        let damp = r * p[i] * inv_v * inv_v;
        // Only j <= i carry a nonzero derivative at node i + 1.
        for j in 0..=i {
            let mut next = 2.0 * s[j] - s_prev[j] - damp * s[j];
            if j == i {
                next += r * inv_v;
            }
            s_prev[j] = s[j];
            s[j] = next;
        }
        let v_next = 2.0 * v - v_prev + r * p[i] * inv_v;
        v_prev = v;
        v = v_next;
    }
    s
}
