//! Independent oracles shared by the integration suites. None of these
//! call into the code paths they are used to check.

#![allow(dead_code)]

use covq::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive 2^n enumeration of `(P_F, P_M)` for the stationary-start LLR
/// test with ties going to H0. Sequence probabilities are products along
/// the path of the general 2x2 chain.
pub fn brute_force_errors(params: &ModelParams, n: usize, threshold: f64) -> (f64, f64) {
    let p = params.p();
    let q = params.q();
    // rows are equal: P[i][j] = (p, 1-p)[j]; stationary law is the row
    let h0 = [[p, 1.0 - p], [p, 1.0 - p]];
    let h1 = [[q, 1.0 - q], [q, 1.0 - q]];
    let pi0 = [p, 1.0 - p];
    let pi1 = [q, 1.0 - q];

    let (mut p_f, mut p_m) = (0.0, 0.0);
    for mask in 0u32..(1 << n) {
        let bit = |j: usize| ((mask >> j) & 1) as usize;
        let mut prob0 = pi0[bit(0)];
        let mut prob1 = pi1[bit(0)];
        let mut ln0 = pi0[bit(0)].ln();
        let mut ln1 = pi1[bit(0)].ln();
        for j in 1..n {
            let (a, b) = (bit(j - 1), bit(j));
            prob0 *= h0[a][b];
            prob1 *= h1[a][b];
            ln0 += h0[a][b].ln();
            ln1 += h1[a][b].ln();
        }
        let says_h0 = ln0 - ln1 >= threshold;
        if says_h0 {
            p_m += prob1;
        } else {
            p_f += prob0;
        }
    }
    (p_f, p_m)
}

/// Chernoff information between Bernoulli(1-p) and Bernoulli(1-q) by a
/// coarse grid followed by successive zoomed grids, with the objective
/// evaluated naively.
pub fn chernoff_information(p: f64, q: f64) -> (f64, f64) {
    let f =
        |u: f64| (p.powf(u) * q.powf(1.0 - u) + (1.0 - p).powf(u) * (1.0 - q).powf(1.0 - u)).ln();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best_u = 0.5;
    let points = 1000;
    while hi - lo > 1e-12 {
        let step = (hi - lo) / points as f64;
        let mut best = f64::INFINITY;
        for k in 0..=points {
            let u = lo + k as f64 * step;
            let val = f(u);
            if val < best {
                best = val;
                best_u = u;
            }
        }
        lo = (best_u - 2.0 * step).max(0.0);
        hi = (best_u + 2.0 * step).min(1.0);
    }
    (best_u, -f(best_u))
}

/// Observation sequence drawn from a 2-state chain directly (stationary
/// start), bypassing the event simulator.
pub fn sample_chain(m: [[f64; 2]; 2], pi: [f64; 2], n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
    let mut out = Vec::with_capacity(n);
    let mut state = if rng.random::<f64>() < pi[0] { 0u8 } else { 1 };
    out.push(state);
    for _ in 1..n {
        state = if rng.random::<f64>() < m[state as usize][0] {
            0
        } else {
            1
        };
        out.push(state);
    }
    out
}

/// Deterministic pseudo-random parameter grid over
/// `lambda_w in [0.05, 0.9]`, `lambda_b in [0.01, 1 - lambda_w - 0.05]`, `mu = 1`.
pub fn acceptance_grid(points: usize, seed: u64) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let lw = rng.random_range(0.05..0.9);
            let lb_hi = 1.0 - lw - 0.05;
            let lb = rng.random_range(0.01..lb_hi);
            ModelParams::new(lw, lb, 1.0).unwrap()
        })
        .collect()
}

/// Central first difference.
pub fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central second difference.
pub fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Richardson extrapolation of an O(h^2) estimate from steps `h` and `h / ratio`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64) -> f64 {
    let r2 = ratio * ratio;
    (r2 * fine - coarse) / (r2 - 1.0)
}

pub fn rel_err(x: f64, target: f64) -> f64 {
    ((x - target) / target).abs()
}
