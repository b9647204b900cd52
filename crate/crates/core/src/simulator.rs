//! Continuous-time Markov chain simulation of the charging queues.
//!
//! Cars arrive at every station as independent Poisson processes of rate
//! `λ`. Each car needs an Exp(1) amount of energy and the cars at one
//! station share its power equally, so by memorylessness station `j`
//! completes a car at rate `p_j(X)`. The allocation `p(X)` is recomputed
//! after every event. Trajectories are generated with the next-event
//! (Gillespie) method.
//!
//! Randomness comes from ChaCha8, seeded with `seed + k` for replication `k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, FairnessSpec, QueueState};
use crate::error::{Error, Result};
use crate::powerflow::{FlowModel, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub network: NetworkConfig,
    pub fairness: FairnessSpec,
    pub model: FlowModel,
    /// Arrival rate `λ` at each station.
    pub arrival_rate: f64,
    /// Simulated time.
    pub horizon: f64,
    pub seed: u64,
    pub sample_interval: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        FairnessSpec::new(self.fairness.alpha)?;
        if !(self.arrival_rate >= 0.0) || !self.arrival_rate.is_finite() {
            return Err(Error::domain(format!("arrival rate must be finite and >= 0, got {}", self.arrival_rate)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be finite and > 0, got {}", self.horizon)));
        }
        if !(self.sample_interval > 0.0) || self.sample_interval > self.horizon {
            return Err(Error::domain(format!(
                "sample interval must lie in (0, horizon], got {}",
                self.sample_interval
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Sample times `0, Δt, 2Δt, ...` up to the horizon.
    pub time_grid: Vec<f64>,
    /// Total number of cars at each sample time.
    pub total_queue: Vec<u64>,
    /// Time-averaged number of cars per station.
    pub per_station_mean: Vec<f64>,
    pub arrivals: u64,
    pub departures: u64,
    /// Arrival and departure events processed.
    pub events: u64,
    /// Least-squares slope of `total_queue` against time over the last
    /// half of the horizon.
    pub drift_estimate: f64,
    pub max_total_queue: u64,
    pub final_state: Vec<u64>,
    /// Smallest constraint slack seen at any occupied state.
    pub min_slack: f64,
    /// Set when the allocator failed; the report then covers the
    /// trajectory up to the failure.
    pub aborted: Option<String>,
}

impl SimReport {
    pub fn mean_total_queue(&self) -> f64 {
        self.per_station_mean.iter().sum()
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let n = cfg.network.n_stations;
    let lambda = cfg.arrival_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut state = QueueState::new(vec![0; n]);
    let mut power = vec![0.0; n];
    let mut total_power = 0.0;
    let mut time = 0.0;
    let mut area = vec![0.0; n];

    let n_samples = (cfg.horizon / cfg.sample_interval).floor() as usize + 1;
    let mut time_grid = Vec::with_capacity(n_samples);
    let mut total_queue = Vec::with_capacity(n_samples);
    let (mut arrivals, mut departures) = (0u64, 0u64);
    let mut max_total = 0u64;
    let mut min_slack = f64::INFINITY;
    let mut aborted = None;

    loop {
        let total = state.total();
        let rate = n as f64 * lambda + total_power;
        let next_time = if rate > 0.0 {
            let u: f64 = rng.sample(Exp1);
            time + u / rate
        } else {
            f64::INFINITY
        };
        let stop = next_time.min(cfg.horizon);
        while time_grid.len() < n_samples {
            let t = time_grid.len() as f64 * cfg.sample_interval;
            if t > stop || (t == stop && stop < cfg.horizon) {
                break;
            }
            time_grid.push(t);
            total_queue.push(total);
        }
        for (a, &x) in area.iter_mut().zip(&state.0) {
            *a += x as f64 * (stop - time);
        }
        if next_time >= cfg.horizon {
            time = cfg.horizon;
            break;
        }
        time = next_time;

        let pick = rng.random::<f64>() * rate;
        let arrival_mass = n as f64 * lambda;
        if pick < arrival_mass {
            let j = ((pick / lambda) as usize).min(n - 1);
            state.0[j] += 1;
            arrivals += 1;
        } else {
            let mut acc = arrival_mass;
            let mut chosen = None;
            for (j, &pj) in power.iter().enumerate() {
                if pj > 0.0 {
                    acc += pj;
                    chosen = Some(j);
                    if pick < acc {
                        break;
                    }
                }
            }
            // Rounding can leave `pick` past the last bucket; it belongs there.
            let j = chosen.expect("departure drawn with zero service rate");
            state.0[j] -= 1;
            departures += 1;
        }
        max_total = max_total.max(state.total());

        match allocate(cfg.model, &state, cfg.fairness, &cfg.network) {
            Ok(p) => {
                if !state.is_idle() {
                    let slack = crate::powerflow::feasible(&p, &cfg.network, cfg.model)?.slack;
                    min_slack = min_slack.min(slack);
                }
                power = p.into_inner();
                total_power = power.iter().sum();
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }

    let elapsed = time.max(f64::MIN_POSITIVE);
    let drift_estimate = tail_slope(&time_grid, &total_queue, cfg.horizon / 2.0);
    Ok(SimReport {
        time_grid,
        total_queue,
        per_station_mean: area.iter().map(|a| a / elapsed).collect(),
        arrivals,
        departures,
        events: arrivals + departures,
        drift_estimate,
        max_total_queue: max_total,
        final_state: state.0,
        min_slack,
        aborted,
    })
}

/// Ordinary least-squares slope over samples with `t >= from`.
fn tail_slope(t: &[f64], y: &[u64], from: f64) -> f64 {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(ti, _)| **ti >= from).map(|(ti, yi)| (*ti, *yi as f64)).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (ti, yi)| (a + ti, b + yi));
    let (mt, my) = (st / m, sy / m);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(num, den), (ti, yi)| (num + (ti - mt) * (yi - my), den + (ti - mt) * (ti - mt)));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Classification {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Stable => "STABLE",
            Classification::Unstable => "UNSTABLE",
            Classification::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub replications: usize,
    /// Drift threshold as a fraction of the total arrival rate `N λ`.
    pub drift_fraction: f64,
    /// Queue cap per station for a replication to count as stable.
    pub queue_cap_per_station: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { replications: 5, drift_fraction: 0.05, queue_cap_per_station: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub multiplier: f64,
    pub arrival_rate: f64,
    pub classification: Classification,
    pub stable_votes: usize,
    pub unstable_votes: usize,
    pub reports: Vec<SimReport>,
}

/// Simulates `λ = m · λ_N` for each multiplier `m`, with `base.arrival_rate`
/// taken as `λ_N`, and classifies each by majority vote over replications.
///
/// A replication votes stable when its drift is below `ε = f · N · λ` and
/// its total queue never exceeded the cap; it votes unstable when its drift
/// exceeds `ε`.
pub fn stability_probe(base: &SimConfig, multipliers: &[f64], opts: ProbeOptions) -> Result<Vec<ProbeResult>> {
    base.validate()?;
    if let Some(m) = multipliers.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::domain(format!("multipliers must be > 0, got {m}")));
    }
    if opts.replications == 0 {
        return Err(Error::domain("at least one replication is required"));
    }
    let n = base.network.n_stations as f64;
    let jobs: Vec<(usize, u64)> =
        (0..multipliers.len()).flat_map(|i| (0..opts.replications as u64).map(move |k| (i, k))).collect();
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let cfg = SimConfig {
                arrival_rate: multipliers[i] * base.arrival_rate,
                seed: base.seed.wrapping_add(k),
                ..*base
            };
            simulate(&cfg)
        })
        .collect::<Result<_>>()?;

    let mut reports = reports.into_iter();
    Ok(multipliers
        .iter()
        .map(|&m| {
            let lambda = m * base.arrival_rate;
            let eps = opts.drift_fraction * n * lambda;
            let cap = opts.queue_cap_per_station * n;
            let batch: Vec<SimReport> = reports.by_ref().take(opts.replications).collect();
            let stable_votes = batch
                .iter()
                .filter(|r| r.aborted.is_none() && r.drift_estimate < eps && (r.max_total_queue as f64) < cap)
                .count();
            let unstable_votes = batch.iter().filter(|r| r.aborted.is_none() && r.drift_estimate > eps).count();
            let majority = opts.replications / 2 + 1;
            let classification = if stable_votes >= majority {
                Classification::Stable
            } else if unstable_votes >= majority {
                Classification::Unstable
            } else {
                Classification::Inconclusive
            };
            ProbeResult { multiplier: m, arrival_rate: lambda, classification, stable_votes, unstable_votes, reports: batch }
        })
        .collect())
}
