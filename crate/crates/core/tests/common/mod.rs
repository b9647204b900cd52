//! Independent oracles shared by the integration suites. None of these
//! call into the code paths they are used to check.

#![allow(dead_code)]

use feeder_core::allocator::{total_utility, FairnessSpec, QueueState};
use feeder_core::powerflow::{distflow_double_sum, NetworkConfig, PowerAllocation};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `∫_0^x exp(u²) du` by quadrature.
pub fn exp_sq_integral_quad(x: f64) -> f64 {
    let scale = (x * x).exp().max(1.0) * x.abs().max(1e-300);
    integrate(&|u: f64| (u * u).exp(), 0.0, x, 1e-15 * scale)
}

/// `erfi(x)` by quadrature.
pub fn erfi_quad(x: f64) -> f64 {
    2.0 / std::f64::consts::PI.sqrt() * exp_sq_integral_quad(x)
}

/// Central finite difference.
pub fn central_diff(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Maximizes a smooth function over the probability simplex in `k`
/// coordinates: a coarse grid scan followed by compass search with
/// shrinking step. Returns the best weights.
pub fn maximize_on_simplex(k: usize, objective: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    assert!(k >= 1);
    if k == 1 {
        return vec![1.0];
    }
    let eval = |free: &[f64]| -> Option<f64> {
        let rest = 1.0 - free.iter().sum::<f64>();
        if free.iter().any(|&t| t <= 0.0) || rest <= 0.0 {
            return None;
        }
        let mut theta = free.to_vec();
        theta.push(rest);
        Some(objective(&theta))
    };

    // Coarse grid over the first k-1 coordinates.
    let steps = match k {
        2 => 400,
        3 => 60,
        _ => 24,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx = vec![1usize; k - 1];
    loop {
        let free: Vec<f64> = idx.iter().map(|&i| i as f64 / steps as f64).collect();
        if let Some(val) = eval(&free) {
            if best.as_ref().is_none_or(|(_, b)| val > *b) {
                best = Some((free, val));
            }
        }
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < steps {
                break;
            }
            idx[d] = 1;
            d += 1;
            if d == k - 1 {
                break;
            }
        }
        if d == k - 1 {
            break;
        }
    }
    let (mut point, mut value) = best.expect("grid contains interior points");

    // Compass search, including the diagonal moves that trade mass between
    // pairs of coordinates so it can follow the simplex faces.
    let mut h = 1.0 / steps as f64;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..k - 1 {
        let mut e = vec![0.0; k - 1];
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(e.iter().map(|x| -x).collect());
        for j in i + 1..k - 1 {
            let mut d = vec![0.0; k - 1];
            d[i] = 1.0;
            d[j] = -1.0;
            dirs.push(d.clone());
            dirs.push(d.iter().map(|x| -x).collect());
        }
    }
    while h > 1e-13 {
        let mut improved = false;
        for d in &dirs {
            let trial: Vec<f64> = point.iter().zip(d).map(|(p, di)| p + h * di).collect();
            if let Some(val) = eval(&trial) {
                if val > value {
                    point = trial;
                    value = val;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    let rest = 1.0 - point.iter().sum::<f64>();
    point.push(rest);
    point
}

/// Brute-force α-fair allocation under the linearized constraint:
/// parametrize the binding face as `p_m = B θ_m / w_m`.
pub fn brute_force_lindist(x: &QueueState, spec: FairnessSpec, cfg: &NetworkConfig) -> Vec<f64> {
    let n = cfg.n_stations;
    let active: Vec<usize> = (0..n).filter(|&j| x.0[j] > 0).collect();
    let budget = (1.0 / (1.0 - cfg.delta)).powi(2) - 1.0;
    let weight = |m: usize| 2.0 * cfg.resistance * (n - m) as f64;
    let build = |theta: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; n];
        for (t, &j) in theta.iter().zip(&active) {
            p[j] = budget * t / weight(j);
        }
        p
    };
    let theta = maximize_on_simplex(active.len(), &|theta| total_utility(x, &build(theta), spec));
    build(&theta)
}

/// Brute-force α-fair allocation under the Distflow constraint: every
/// direction on the simplex is scaled to the boundary by bisection on the
/// double-sum voltage representation.
pub fn brute_force_distflow(x: &QueueState, spec: FairnessSpec, cfg: &NetworkConfig) -> Vec<f64> {
    let n = cfg.n_stations;
    let active: Vec<usize> = (0..n).filter(|&j| x.0[j] > 0).collect();
    let c = 1.0 / (1.0 - cfg.delta);
    let end_voltage = |p: &[f64]| {
        let prof = distflow_double_sum(&PowerAllocation::new(p.to_vec()).unwrap(), cfg.resistance).unwrap();
        *prof.v.last().unwrap()
    };
    let build = |theta: &[f64]| -> Vec<f64> {
        let dir = |s: f64| {
            let mut p = vec![0.0; n];
            for (t, &j) in theta.iter().zip(&active) {
                p[j] = s * t;
            }
            p
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while end_voltage(&dir(hi)) < c {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if end_voltage(&dir(mid)) < c {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        dir(lo)
    };
    let theta = maximize_on_simplex(active.len(), &|theta| total_utility(x, &build(theta), spec));
    build(&theta)
}
