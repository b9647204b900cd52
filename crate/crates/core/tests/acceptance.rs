//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::{brute_force_lindist, central_diff};
use feeder_core::allocator::{alpha_fair_distflow, alpha_fair_lindist, kkt_residual, FairnessSpec, QueueState};
use feeder_core::powerflow::*;
use feeder_core::simulator::{simulate, stability_probe, Classification, ProbeOptions, SimConfig};
use feeder_core::specfun::erfi;
use feeder_core::stability::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 12 {
            self.failures.push(what());
        }
    }
}

fn run(id: u32, name: &str, limit: Duration, body: fn(&mut Outcome)) -> bool {
    let start = Instant::now();
    let mut out = Outcome::new();
    body(&mut out);
    let elapsed = start.elapsed();
    out.check(elapsed < limit, || format!("runtime {elapsed:.2?} exceeds {limit:?}"));
    let pass = out.failures.is_empty();
    println!("criterion {id} [{name}]: {} ({elapsed:.2?})", if pass { "PASS" } else { "FAIL" });
    for f in &out.failures {
        println!("    {f}");
    }
    pass
}

fn ratio_reference_values(out: &mut Outcome) {
    for (delta, printed) in [(0.01, 0.9966), (0.05, 0.9828), (0.1, 0.9647), (0.2, 0.9248)] {
        let p = ratio_p(delta).unwrap();
        let rounded = (p * 1e4).round() / 1e4;
        out.check((rounded - printed).abs() < 5e-5, || format!("P({delta}) = {p}, expected {printed}"));
    }
}

fn ratio_shape(out: &mut Outcome) {
    let pts = 500;
    let mut prev = f64::INFINITY;
    for i in 0..pts {
        let delta = 0.001 + (0.5 - 0.001) * i as f64 / (pts - 1) as f64;
        let p = ratio_p(delta).unwrap();
        out.check(p < prev, || format!("P not decreasing at {delta}: {p} >= {prev}"));
        prev = p;
    }
    let small = ratio_p(1e-6).unwrap();
    out.check((small - 1.0).abs() < 1e-4, || format!("P(1e-6) = {small}"));
    let e = erfi(2f64.ln().sqrt()).unwrap();
    let half = ratio_p(0.5).unwrap();
    out.check((half - PI / 6.0 * e * e).abs() < 1e-4, || format!("P(0.5) = {half}"));
}

struct NewtonRow {
    n: usize,
    target: &'static str,
    a0: f64,
    iterations: usize,
}

const NEWTON_ROWS: [(f64, [NewtonRow; 5]); 3] = [
    (
        0.01,
        [
            NewtonRow { n: 10, target: "1.005495062463669", a0: 0.011000182805825, iterations: 3 },
            NewtonRow { n: 100, target: "1.005045760405502", a0: 0.010100001678824, iterations: 3 },
            NewtonRow { n: 1000, target: "1.005000834727210", a0: 0.010010000022962, iterations: 3 },
            NewtonRow { n: 10_000, target: "1.004996342221457", a0: 0.010001000055592, iterations: 8 },
            NewtonRow { n: 100_000, target: "1.004995909696177", a0: 0.010000133565834, iterations: 9 },
        ],
    ),
    (
        0.05,
        [
            NewtonRow { n: 10, target: "1.027377786724925", a0: 0.055004518819866, iterations: 3 },
            NewtonRow { n: 100, target: "1.025144992180518", a0: 0.050500041530882, iterations: 3 },
            NewtonRow { n: 1000, target: "1.024921824633206", a0: 0.050050000413244, iterations: 2 },
            NewtonRow { n: 10_000, target: "1.024899508844976", a0: 0.050005000058683, iterations: 2 },
            NewtonRow { n: 100_000, target: "1.024897282801763", a0: 0.050000511203957, iterations: 4 },
        ],
    ),
    (
        0.1,
        [
            NewtonRow { n: 10, target: "1.054517088899833", a0: 0.110017830743300, iterations: 3 },
            NewtonRow { n: 100, target: "1.050084740193820", a0: 0.101000164022137, iterations: 3 },
            NewtonRow { n: 1000, target: "1.049641947170216", a0: 0.100100001626823, iterations: 3 },
            NewtonRow { n: 10_000, target: "1.049597671662610", a0: 0.100010000152368, iterations: 4 },
            NewtonRow { n: 100_000, target: "1.049593246696348", a0: 0.100001005329048, iterations: 4 },
        ],
    ),
];

fn newton_tables(out: &mut Outcome) {
    for (a, rows) in &NEWTON_ROWS {
        for row in rows {
            let (v, _) = distflow_sensitivity(*a, row.n).unwrap();
            let printed = format!("{v:.15}");
            out.check(printed == row.target, || format!("a={a} N={}: V_N = {printed}, expected {}", row.n, row.target));

            let target: f64 = row.target.parse().unwrap();
            match newton_solve_target(row.n, target, NewtonOptions::default()) {
                Ok(trace) => {
                    let rel = ((trace.a_final - a) / a).abs();
                    out.check(rel < 1e-9, || format!("a={a} N={}: recovered {} (rel {rel:e})", row.n, trace.a_final));
                    out.check((trace.a0 - row.a0).abs() < 1e-12, || {
                        format!("a={a} N={}: a0 = {:.15}, expected {}", row.n, trace.a0, row.a0)
                    });
                    out.check(trace.iterations <= row.iterations + 3, || {
                        format!("a={a} N={}: {} iterations, expected <= {}", row.n, trace.iterations, row.iterations + 3)
                    });
                }
                Err(e) => out.check(false, || format!("a={a} N={}: {e}", row.n)),
            }
        }
    }
}

fn continuum_table(out: &mut Outcome) {
    // N, V_N, V(1), |V(1) - V_N|
    let rows = [
        (10usize, 1.02737778, 1.02489702, 0.00248075),
        (100, 1.02514499, 1.02489702, 0.00024188),
        (1000, 1.02492182, 1.02489702, 0.00002419),
        (10_000, 1.02489950, 1.02489702, 0.00000241),
        (100_000, 1.02489728, 1.02489702, 0.00000024),
    ];
    let ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let reports = convergence_report(0.05, &ns).unwrap();
    for (rep, &(n, vn, v1, err)) in reports.iter().zip(&rows) {
        out.check((rep.v_discrete - vn).abs() < 1e-8, || format!("N={n}: V_N = {:.10}, printed {vn}", rep.v_discrete));
        out.check((rep.v_continuum - v1).abs() < 1e-8, || format!("N={n}: V(1) = {:.10}, printed {v1}", rep.v_continuum));
        out.check((rep.abs_err - err).abs() < 1e-8, || format!("N={n}: abs_err = {:.10}, printed {err}", rep.abs_err));
    }
    for w in reports.windows(2) {
        let factor = w[0].abs_err / w[1].abs_err;
        out.check((8.0..=12.0).contains(&factor), || format!("N={}: decay factor {factor}", w[1].n));
    }
}

fn threshold_boundaries(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let r = rng.random_range(0.01..5.0);
        let delta = rng.random_range(1e-3..=0.5);
        let cfg = NetworkConfig::new(n, r, delta).unwrap();

        let lam = lambda_lin(&cfg).unwrap();
        let prof = lindist_squared_voltages(&PowerAllocation::uniform(n, lam).unwrap(), r, delta).unwrap();
        let gap = (prof.w00() - 1.0).abs();
        out.check(gap < 1e-10, || format!("LinDist N={n} r={r} Δ={delta}: |W00 - 1| = {gap:e}"));

        let lam = lambda_dist(&cfg).unwrap();
        let v = distflow_voltages(&PowerAllocation::uniform(n, lam).unwrap(), r).unwrap().end_voltage();
        let gap = (v - cfg.voltage_bound()).abs();
        out.check(gap < 1e-9, || format!("Distflow N={n} r={r} Δ={delta}: |V_N - c| = {gap:e}"));
    }
}

fn random_loads(rng: &mut ChaCha8Rng, n: usize, max: f64) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..max) })
        .collect()
}

fn end_voltage_from(v0: f64, p: &PowerAllocation, r: f64) -> f64 {
    distflow_from_root(v0, p, r).unwrap().end_voltage()
}

fn property_suites(out: &mut Outcome) {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // Voltages are nondecreasing toward the root.
    for _ in 0..CASES {
        let n = rng.random_range(1..=60);
        let p = PowerAllocation::new(random_loads(&mut rng, n, 0.05)).unwrap();
        let v = distflow_voltages(&p, rng.random_range(0.1..3.0)).unwrap().v;
        out.check(v.windows(2).all(|w| w[1] >= w[0]), || format!("monotonicity: {v:?}"));
    }

    // Double-sum representation equals the recursion.
    for _ in 0..CASES {
        let n = rng.random_range(1..=30);
        let p = PowerAllocation::new(random_loads(&mut rng, n, 0.01)).unwrap();
        let r = rng.random_range(0.1..2.0);
        let a = distflow_voltages(&p, r).unwrap().v;
        let b = distflow_double_sum(&p, r).unwrap().v;
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y).fold(0.0, f64::max);
        out.check(worst <= 1e-12, || format!("double sum: relative gap {worst:e}"));
    }

    // Slope of every voltage with respect to the far-end voltage lies in
    // [0, 1] whenever V_N <= 2 V_0.
    let mut checked = 0;
    while checked < CASES {
        let n = rng.random_range(1..=40);
        let p = PowerAllocation::new(random_loads(&mut rng, n, 0.05)).unwrap();
        let r = rng.random_range(0.1..2.0);
        let v0 = rng.random_range(0.5..2.0);
        let h = 1e-6;
        let base = distflow_from_root(v0, &p, r).unwrap().v;
        if *base.last().unwrap() > 2.0 * v0 {
            continue;
        }
        checked += 1;
        let bumped = distflow_from_root(v0 + h, &p, r).unwrap().v;
        for (j, (x, y)) in base.iter().zip(&bumped).enumerate() {
            let slope = (y - x) / h;
            out.check((-1e-6..=1.0 + 1e-6).contains(&slope), || format!("slope at j={j}: {slope}"));
        }
    }

    // A far-end voltage x >= (1-Δ)c reaching V_N = c exists iff the run
    // from (1-Δ)c ends at or below c.
    for _ in 0..CASES {
        let n = rng.random_range(1..=20);
        let delta = rng.random_range(0.01..=0.5);
        let r = rng.random_range(0.1..2.0);
        let c = if rng.random_bool(0.5) { 1.0 / (1.0 - delta) } else { rng.random_range(0.5..2.0) };
        let budget = (1.0f64 / (1.0 - delta)).powi(2) - 1.0;
        let p = PowerAllocation::new(random_loads(&mut rng, n, 1.5 * budget / (r * n as f64))).unwrap();
        let lo = (1.0 - delta) * c;
        let predicted = end_voltage_from(lo, &p, r) <= c;

        // Independent search: V_N(x) >= x, so any solution lies in [lo, c].
        let grid = 64;
        let hit = (0..=grid).map(|i| lo + (c - lo) * i as f64 / grid as f64).find(|&x| end_voltage_from(x, &p, r) <= c);
        let found = match hit {
            None => None,
            Some(start) => {
                let (mut a, mut b) = (start, c);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if end_voltage_from(mid, &p, r) <= c {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                Some(a)
            }
        };
        out.check(found.is_some() == predicted, || format!("equivalence: predicted {predicted}, search {found:?}"));
        if let Some(x) = found {
            let resid = (end_voltage_from(x, &p, r) - c).abs();
            out.check(x >= lo && resid < 1e-12, || format!("equivalence: x={x} residual {resid:e}"));
        }
        if c == 1.0 / (1.0 - delta) {
            let cfg = NetworkConfig::new(n, r, delta).unwrap();
            let f = feasible(&p, &cfg, FlowModel::Distflow).unwrap();
            out.check(f.feasible == predicted, || "equivalence: feasibility flag disagrees".to_string());
        }
    }

    // W entries are products of voltages.
    for _ in 0..CASES {
        let n = rng.random_range(1..=40);
        let p = PowerAllocation::new(random_loads(&mut rng, n, 0.05)).unwrap();
        let prof = distflow_from_root(rng.random_range(0.5..2.0), &p, rng.random_range(0.1..2.0)).unwrap();
        let diag = prof.w_diag.iter().enumerate().all(|(j, w)| (w - prof.v[j] * prof.v[j]).abs() <= 1e-12 * w);
        let off = prof.w_off.iter().enumerate().all(|(j, w)| (w - prof.v[j] * prof.v[j + 1]).abs() <= 1e-12 * w);
        out.check(diag && off, || "W/V consistency violated".to_string());
    }

    // Feasible sets are bounded.
    for _ in 0..CASES {
        let n = rng.random_range(1..=40);
        let delta = rng.random_range(0.01..=0.5);
        let r = rng.random_range(0.1..3.0);
        let cfg = NetworkConfig::new(n, r, delta).unwrap();
        let c2 = cfg.squared_voltage_bound();
        let mut raw = random_loads(&mut rng, n, 1.0);
        raw[rng.random_range(0..n)] += 0.1;
        // Scale close to either boundary so the bound is actually probed.
        let lin_scale = (c2 - 1.0) / (2.0 * r * raw.iter().enumerate().map(|(m, p)| (n - m) as f64 * p).sum::<f64>());
        let s = lin_scale * rng.random_range(0.5..1.2);
        let p = PowerAllocation::new(raw.iter().map(|x| x * s).collect()).unwrap();
        if feasible(&p, &cfg, FlowModel::LinDist).unwrap().feasible {
            let nested: f64 = (0..n).map(|j| p.as_slice()[..n - j].iter().sum::<f64>()).sum();
            out.check(nested <= (c2 - 1.0) / (2.0 * r) * (1.0 + 1e-12), || format!("LinDist bound: {nested}"));
        }
        if feasible(&p, &cfg, FlowModel::Distflow).unwrap().feasible {
            out.check(p.total() <= c2 / r, || format!("Distflow bound: {}", p.total()));
        }
    }

    // Y is positive, increasing and convex for 0 <= a < 2.
    for _ in 0..CASES {
        let a = rng.random_range(0.0..2.0);
        let n = rng.random_range(2..=300);
        let y = distflow_sensitivity_profile(a, n).unwrap().y;
        let ok = y[1..].iter().all(|&v| v > 0.0)
            && y.windows(2).all(|w| w[1] > w[0])
            && y.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-12 * w[2]);
        out.check(ok, || format!("Y shape at a={a}, N={n}"));
    }

    // Y_N is the derivative of V_N with respect to k = a/N².
    for _ in 0..CASES {
        let a = rng.random_range(0.01..1.9);
        let n = rng.random_range(2..=300);
        let n2 = (n * n) as f64;
        let (_, y) = distflow_sensitivity(a, n).unwrap();
        let k = a / n2;
        let fd = central_diff(&|kk| distflow_sensitivity(kk * n2, n).unwrap().0, k, 1e-4 * k);
        out.check((y - fd).abs() <= 1e-4 * y, || format!("Y vs finite difference at a={a}, N={n}: {y} vs {fd}"));
    }
}

fn random_fair_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (QueueState, FairnessSpec, NetworkConfig) {
    let n = rng.random_range(1..=max_n);
    let mut x: Vec<u64> = (0..n).map(|_| rng.random_range(0..8)).collect();
    if x.iter().all(|&v| v == 0) {
        x[rng.random_range(0..n)] = 1;
    }
    let spec = FairnessSpec::new(rng.random_range(0.3..4.0)).unwrap();
    let cfg = NetworkConfig::new(n, rng.random_range(0.1..3.0), rng.random_range(0.01..=0.5)).unwrap();
    (QueueState::new(x), spec, cfg)
}

fn allocator_correctness(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let (x, spec, cfg) = random_fair_instance(&mut rng, 4);
        let p = alpha_fair_lindist(&x, spec, &cfg).unwrap();
        let brute = brute_force_lindist(&x, spec, &cfg);
        let scale = p.as_slice().iter().cloned().fold(0.0, f64::max);
        let gap = p.as_slice().iter().zip(&brute).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max);
        out.check(gap < 1e-4, || format!("LinDist vs brute force: gap {gap:e} for {x:?}, α={}", spec.alpha));
    }
    for _ in 0..200 {
        let (x, spec, cfg) = random_fair_instance(&mut rng, 50);
        match alpha_fair_distflow(&x, spec, &cfg, Default::default()) {
            Ok(p) => {
                let res = kkt_residual(&x, &p, spec, &cfg, FlowModel::Distflow);
                let slack = feasible(&p, &cfg, FlowModel::Distflow).unwrap().slack;
                out.check(res < 1e-6, || format!("Distflow KKT residual {res:e}"));
                out.check(slack.abs() < 1e-9, || format!("Distflow slack {slack:e}"));
            }
            Err(e) => out.check(false, || format!("Distflow allocator failed: {e}")),
        }
    }
}

fn simulation_bracketing(out: &mut Outcome) {
    for n in [3usize, 5] {
        for model in [FlowModel::LinDist, FlowModel::Distflow] {
            let network = NetworkConfig::new(n, 1.0, 0.1).unwrap();
            let lam = match model {
                FlowModel::LinDist => lambda_lin(&network).unwrap(),
                FlowModel::Distflow => lambda_dist(&network).unwrap(),
            };
            let horizon = 2e5 / (n as f64 * lam);
            let base = SimConfig {
                network,
                fairness: FairnessSpec::proportional(),
                model,
                arrival_rate: lam,
                horizon,
                seed: 1000 + n as u64,
                sample_interval: horizon / 1000.0,
            };
            let results = stability_probe(&base, &[0.5, 2.0], ProbeOptions::default()).unwrap();
            let (low, high) = (&results[0], &results[1]);
            out.check(low.stable_votes >= 4, || {
                format!("{model} N={n}: {} of 5 stable at 0.5 λ ({})", low.stable_votes, low.classification)
            });
            out.check(high.unstable_votes >= 4 && high.classification == Classification::Unstable, || {
                format!("{model} N={n}: {} of 5 unstable at 2 λ", high.unstable_votes)
            });
            for rep in low.reports.iter().chain(&high.reports) {
                out.check(rep.events >= 100_000, || format!("{model} N={n}: only {} events", rep.events));
            }
        }
    }
}

fn single_station(out: &mut Outcome) {
    let network = NetworkConfig::new(1, 1.0, 0.1).unwrap();
    let p_star = network.budget() / (2.0 * network.resistance);
    let rep = simulate(&SimConfig {
        network,
        fairness: FairnessSpec::proportional(),
        model: FlowModel::LinDist,
        arrival_rate: 0.5 * p_star,
        horizon: 1e5 / p_star,
        seed: 3,
        sample_interval: 1.0 / p_star,
    })
    .unwrap();
    let mean = rep.per_station_mean[0];
    out.check((mean - 1.0).abs() <= 0.25, || format!("mean queue {mean}, expected 1 ± 0.25"));
}

type Criterion = (u32, &'static str, u64, fn(&mut Outcome));

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "ratio reference values", 1, ratio_reference_values),
        (2, "ratio monotonicity and endpoints", 1, ratio_shape),
        (3, "Newton tables", 30, newton_tables),
        (4, "continuum convergence table", 30, continuum_table),
        (5, "threshold boundaries", 60, threshold_boundaries),
        (6, "property suites", 60, property_suites),
        (7, "allocator correctness", 120, allocator_correctness),
        (8, "simulation stability bracketing", 300, simulation_bracketing),
        (9, "single-station queue", 120, single_station),
    ];
    let mut failed = 0;
    for (id, name, secs, body) in criteria {
        if !run(id, name, Duration::from_secs(secs), body) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
