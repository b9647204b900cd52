use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use feeder_core::allocator::{allocate as allocate_power, FairnessSpec, QueueState};
use feeder_core::powerflow::{distflow_sensitivity, feasible, FlowModel, NetworkConfig};
use feeder_core::simulator::{stability_probe, ProbeOptions, SimConfig};
use feeder_core::stability::{
    convergence_report, lambda_dist, lambda_dist_critical, lambda_lin, lambda_lin_critical, newton_solve_target,
    ratio_p, NewtonOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit, fixed15, parameters, sig15, Csv, RunManifest};
use crate::{Context, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Lindist,
    Distflow,
}

impl From<ModelArg> for FlowModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lindist => FlowModel::LinDist,
            ModelArg::Distflow => FlowModel::Distflow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Lindist,
    Distflow,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdsArgs {
    /// Number of stations.
    #[arg(long)]
    n: usize,
    /// Line resistance between neighbouring stations.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Maximal relative voltage drop, in (0, 0.5].
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
    model: ModelChoice,
}

#[derive(Debug, Args, Serialize)]
pub struct NewtonArgs {
    /// Values of `a`, each in (0, 2).
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    a: Vec<f64>,
    /// Numbers of stations, each at least 2.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000,100000")]
    n: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct RatioArgs {
    /// Explicit voltage drops; overrides the grid.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    start: f64,
    #[arg(long, default_value_t = 0.5)]
    stop: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 0.05)]
    a: f64,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000,100000")]
    n: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Distflow)]
    model: ModelArg,
    /// Fairness parameter α > 0.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Arrival rates as multiples of the model's threshold.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    mult: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    replications: usize,
    /// Expected arrivals at threshold load; sets the horizon.
    #[arg(long, default_value_t = 200_000.0)]
    events: f64,
    /// Trajectory samples per run.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Also write `multiplier,replication,time,total_queue` here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AllocateArgs {
    /// Cars per station, far end first.
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Distflow)]
    model: ModelArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

fn finish<T: Serialize>(ctx: &Context, command: &str, args: &T, csv: Csv, seed: Option<u64>) -> Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        parameters: parameters(args),
        output_path: ctx.out.clone().unwrap_or_default(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
    };
    emit(&csv.into_string(), ctx.out.as_deref(), manifest)?;
    Ok(())
}

pub fn thresholds(ctx: &Context, args: ThresholdsArgs) -> Result<(), Failure> {
    let cfg = NetworkConfig::new(args.n, args.r, args.delta)?;
    let models = match args.model {
        ModelChoice::Lindist => vec![FlowModel::LinDist],
        ModelChoice::Distflow => vec![FlowModel::Distflow],
        ModelChoice::Both => vec![FlowModel::LinDist, FlowModel::Distflow],
    };
    let n2 = (args.n * args.n) as f64;
    let mut csv = Csv::new(&["model", "n", "r", "delta", "lambda_n", "scaled", "lambda_c"]);
    for model in models {
        let (lam, crit) = match model {
            FlowModel::LinDist => (lambda_lin(&cfg)?, lambda_lin_critical(args.r, args.delta)?),
            FlowModel::Distflow => (lambda_dist(&cfg)?, lambda_dist_critical(args.r, args.delta)?),
        };
        csv.row([
            model.to_string(),
            args.n.to_string(),
            sig15(args.r),
            sig15(args.delta),
            sig15(lam),
            sig15(n2 * lam),
            sig15(crit),
        ]);
    }
    finish(ctx, "thresholds", &args, csv, None)
}

pub fn newton(ctx: &Context, args: NewtonArgs) -> Result<(), Failure> {
    if let Some(a) = args.a.iter().find(|a| !(**a > 0.0 && **a < 2.0)) {
        return Err(Failure::validation(format!("a must lie in (0, 2), got {a}")));
    }
    if let Some(n) = args.n.iter().find(|n| **n < 2) {
        return Err(Failure::validation(format!("n must be at least 2, got {n}")));
    }
    let jobs: Vec<(f64, usize)> = args.a.iter().flat_map(|&a| args.n.iter().map(move |&n| (a, n))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(a, n)| {
            let (target, _) = distflow_sensitivity(a, n)?;
            let trace = newton_solve_target(n, target, NewtonOptions::default())?;
            Ok(vec![
                n.to_string(),
                sig15(a),
                fixed15(target),
                fixed15(trace.a0),
                fixed15(trace.a_final),
                trace.iterations.to_string(),
            ])
        })
        .collect::<Result<Vec<_>, feeder_core::Error>>()?;
    let mut csv = Csv::new(&["n", "a", "voltage_bound", "a0", "a_bar", "iterations"]);
    rows.into_iter().for_each(|r| csv.row(r));
    finish(ctx, "newton", &args, csv, None)
}

pub fn ratio(ctx: &Context, args: RatioArgs) -> Result<(), Failure> {
    let deltas = match &args.deltas {
        Some(d) => d.clone(),
        None => {
            if args.points < 2 {
                return Err(Failure::validation("--points must be at least 2"));
            }
            if !(args.start < args.stop) {
                return Err(Failure::validation("--start must be below --stop"));
            }
            let step = (args.stop - args.start) / (args.points - 1) as f64;
            let mut grid: Vec<f64> = (0..args.points).map(|i| args.start + step * i as f64).collect();
            grid[args.points - 1] = args.stop;
            grid
        }
    };
    let values = deltas.par_iter().map(|&d| ratio_p(d)).collect::<Result<Vec<_>, _>>()?;
    let mut csv = Csv::new(&["delta", "ratio"]);
    for (d, p) in deltas.iter().zip(values) {
        csv.row([sig15(*d), sig15(p)]);
    }
    finish(ctx, "ratio", &args, csv, None)
}

pub fn converge(ctx: &Context, args: ConvergeArgs) -> Result<(), Failure> {
    let reports = convergence_report(args.a, &args.n)?;
    let mut csv = Csv::new(&["n", "v_discrete", "v_continuum", "abs_err", "rel_err"]);
    for r in reports {
        csv.row([r.n.to_string(), sig15(r.v_discrete), sig15(r.v_continuum), sig15(r.abs_err), sig15(r.rel_err)]);
    }
    finish(ctx, "converge", &args, csv, None)
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<(), Failure> {
    let network = NetworkConfig::new(args.n, args.r, args.delta)?;
    let fairness = FairnessSpec::new(args.alpha)?;
    if !(args.events > 0.0) || !args.events.is_finite() {
        return Err(Failure::validation(format!("--events must be positive, got {}", args.events)));
    }
    if args.samples == 0 {
        return Err(Failure::validation("--samples must be at least 1"));
    }
    let model = FlowModel::from(args.model);
    let lam = match model {
        FlowModel::LinDist => lambda_lin(&network)?,
        FlowModel::Distflow => lambda_dist(&network)?,
    };
    let horizon = args.events / (args.n as f64 * lam);
    let base = SimConfig {
        network,
        fairness,
        model,
        arrival_rate: lam,
        horizon,
        seed: ctx.seed,
        sample_interval: horizon / args.samples as f64,
    };
    let opts = ProbeOptions { replications: args.replications, ..Default::default() };
    let results = stability_probe(&base, &args.mult, opts)?;

    let mut csv = Csv::new(&[
        "model",
        "n",
        "delta",
        "multiplier",
        "arrival_rate",
        "classification",
        "stable_votes",
        "unstable_votes",
        "mean_drift",
        "mean_queue",
    ]);
    let mut trajectory = Csv::new(&["multiplier", "replication", "time", "total_queue"]);
    let mut aborted = Vec::new();
    for res in &results {
        let count = res.reports.len() as f64;
        let drift = res.reports.iter().map(|r| r.drift_estimate).sum::<f64>() / count;
        let queue = res.reports.iter().map(|r| r.mean_total_queue()).sum::<f64>() / count;
        csv.row([
            model.to_string(),
            args.n.to_string(),
            sig15(args.delta),
            sig15(res.multiplier),
            sig15(res.arrival_rate),
            res.classification.to_string(),
            res.stable_votes.to_string(),
            res.unstable_votes.to_string(),
            sig15(drift),
            sig15(queue),
        ]);
        for (k, rep) in res.reports.iter().enumerate() {
            if let Some(reason) = &rep.aborted {
                aborted.push(format!("multiplier {}, replication {k}: {reason}", res.multiplier));
            }
            for (t, q) in rep.time_grid.iter().zip(&rep.total_queue) {
                trajectory.row([sig15(res.multiplier), k.to_string(), sig15(*t), q.to_string()]);
            }
        }
    }
    if let Some(path) = &args.trajectory {
        fs::write(path, trajectory.into_string())?;
    }
    finish(ctx, "simulate", &args, csv, Some(ctx.seed))?;
    if !aborted.is_empty() {
        return Err(Failure::aborted(format!("simulation aborted: {}", aborted.join("; "))));
    }
    Ok(())
}

pub fn allocate(ctx: &Context, args: AllocateArgs) -> Result<(), Failure> {
    let cfg = NetworkConfig::new(args.x.len(), args.r, args.delta)?;
    let spec = FairnessSpec::new(args.alpha)?;
    let model = FlowModel::from(args.model);
    let x = QueueState::new(args.x.clone());
    let p = allocate_power(model, &x, spec, &cfg)?;
    let slack = feasible(&p, &cfg, model)?.slack;
    let mut csv = Csv::new(&["index", "cars", "power", "slack"]);
    for (j, (xj, pj)) in args.x.iter().zip(p.as_slice()).enumerate() {
        csv.row([j.to_string(), xj.to_string(), sig15(*pj), sig15(slack)]);
    }
    finish(ctx, "allocate", &args, csv, None)
}
