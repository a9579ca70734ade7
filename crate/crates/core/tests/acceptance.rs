//! Acceptance criteria AC1..AC11. Each test prints one `PASS`/`FAIL` line
//! (visible with `--nocapture`) and then asserts the criterion.

mod common;

use common::*;
use covq::covert::{max_covert_rate, scaling_table, CovertnessSpec, KFunction};
use covq::detect::{exact_error_probabilities, monte_carlo_error};
use covq::experiment::{persist, run_campaign, CampaignConfig};
use covq::exponent::{
    i_err_closed, i_err_numeric, i_err_taylor, q_derivative_facts, q_of_lambda_b, tilted_mass,
    tilted_mass_minus_one, v_closed_form, DEFAULT_TOL,
};
use covq::sim::{empirical_transition_frequencies, simulate_sequence};
use covq::{Hypothesis, ModelParams, RngSeed};

fn report(id: &str, ok: bool, detail: String) {
    println!("{id} {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed: {detail}");
}

fn params(lw: f64, lb: f64, mu: f64) -> ModelParams {
    ModelParams::new(lw, lb, mu).unwrap()
}

#[test]
fn ac01_closed_form_matches_numeric_minimizer() {
    let mut worst_v = 0.0f64;
    let mut worst_i = 0.0f64;
    for pr in acceptance_grid(100, 1) {
        let v = v_closed_form(&pr).unwrap();
        let num = i_err_numeric(&pr, DEFAULT_TOL).unwrap();
        worst_v = worst_v.max((v - num.v).abs());
        worst_i = worst_i.max((i_err_closed(&pr) - num.i_err).abs());
    }
    report(
        "AC1",
        worst_v < 1e-8 && worst_i < 1e-10,
        format!(
            "max |dv| = {worst_v:.3e} (< 1e-8), max |dI| = {worst_i:.3e} (< 1e-10) over 100 points"
        ),
    );
}

#[test]
fn ac02_chernoff_information_oracle() {
    let mut worst = 0.0f64;
    for pr in acceptance_grid(100, 2) {
        let (_, oracle) = chernoff_information(pr.p(), pr.q());
        worst = worst.max((i_err_closed(&pr) - oracle).abs());
    }
    report(
        "AC2",
        worst < 1e-9,
        format!("max |I_closed - I_oracle| = {worst:.3e} (< 1e-9)"),
    );
}

#[test]
fn ac03_small_rate_limits_and_derivatives() {
    let mut failures = Vec::new();
    let mut check = |what: String, ok: bool| {
        if !ok {
            failures.push(what);
        }
    };
    for lw in [0.1, 0.3, 0.6] {
        let facts = q_derivative_facts(lw).unwrap();
        let pr = |lb: f64| params(lw, lb, 1.0);

        let v_small = v_closed_form(&pr(lw * 1e-5)).unwrap();
        check(
            format!("v limit lw={lw}: {v_small}"),
            (v_small - 0.5).abs() < 1e-3,
        );

        let q = |lb: f64| q_of_lambda_b(lw, lb);
        check(format!("q(0) lw={lw}"), rel_err(q(0.0), facts.q0) < 1e-3);
        for (name, est, target) in [
            ("q'", [d1(q, 0.0, 1e-3), d1(q, 0.0, 1e-4)], facts.q1),
            ("q''", [d2(q, 0.0, 1e-3), d2(q, 0.0, 1e-4)], facts.q2),
        ] {
            let rich = richardson(est[0], est[1], 10.0);
            check(
                format!("{name}(0) lw={lw}: {est:?} rich {rich} vs {target}"),
                est.iter().all(|&e| rel_err(e, target) < 1e-3) && rel_err(rich, target) < 1e-3,
            );
        }

        check(
            format!("F(0) lw={lw}"),
            rel_err(tilted_mass(lw, 0.0), facts.f0) < 1e-3,
        );
        let fm1 = |lb: f64| tilted_mass_minus_one(lw, lb);
        let f1 = [d1(fm1, 0.0, 1e-3), d1(fm1, 0.0, 1e-4)];
        check(
            format!("F'(0) lw={lw}: {f1:?}"),
            f1.iter().all(|e| e.abs() <= 1e-3 * facts.f2.abs()),
        );
        let f2 = [d2(fm1, 0.0, 1e-3), d2(fm1, 0.0, 1e-4)];
        let rich = richardson(f2[0], f2[1], 10.0);
        check(
            format!("F''(0) lw={lw}: {f2:?} rich {rich} vs {}", facts.f2),
            f2.iter().all(|&e| rel_err(e, facts.f2) < 1e-3) && rel_err(rich, facts.f2) < 1e-3,
        );
    }
    let detail = if failures.is_empty() {
        "v(0+) = 1/2, q', q'', F, F', F'' match finite differences for lw in {0.1, 0.3, 0.6}".into()
    } else {
        failures.join("; ")
    };
    report("AC3", failures.is_empty(), detail);
}

#[test]
fn ac04_taylor_approximation() {
    let mut ratios = Vec::new();
    for lw in [0.1, 0.3, 0.6] {
        let pr = params(lw, 1e-3, 1.0);
        ratios.push(i_err_taylor(&pr) / i_err_closed(&pr));
    }
    let small_ok = ratios.iter().all(|r| (0.995..=1.005).contains(r));
    let pr = params(0.3, 0.2, 1.0);
    let large = i_err_taylor(&pr) / i_err_closed(&pr);
    let large_ok = (large - 1.503625).abs() < 1e-6;
    report(
        "AC4",
        small_ok && large_ok,
        format!("Taylor/closed at lb=1e-3: {ratios:.6?} (need [0.995, 1.005]); at (0.3, 0.2): {large:.6} (regression 1.503625)"),
    );
}

#[test]
fn ac05_exact_errors_match_enumeration() {
    let grid = acceptance_grid(20, 5);
    let mut worst = 0.0f64;
    for pr in &grid {
        for n in 1..=12 {
            let exact = exact_error_probabilities(pr, n, 0.0).unwrap();
            let (bf_f, bf_m) = brute_force_errors(pr, n, 0.0);
            worst = worst
                .max((exact.p_f - bf_f).abs())
                .max((exact.p_m - bf_m).abs());
        }
    }
    report(
        "AC5",
        worst < 1e-12,
        format!("max |exact - enumeration| = {worst:.3e} over 20 triples, n <= 12"),
    );
}

#[test]
fn ac06_simulator_fidelity() {
    let pr = params(0.5, 0.5, 1.0);
    let n = 1_000_000;
    let mut worst = 0.0f64;
    let mut fractions = Vec::new();
    for (i, hyp) in Hypothesis::ALL.into_iter().enumerate() {
        let obs = simulate_sequence(&pr, hyp, n, RngSeed::new(606, i as u64)).unwrap();
        let target_idle = pr.idle_probability(hyp);
        fractions.push(obs.busy_fraction());
        worst = worst.max((obs.busy_fraction() - (1.0 - target_idle)).abs());
        let freq = empirical_transition_frequencies(&obs).unwrap();
        for row in freq {
            worst = worst.max((row[0] - target_idle).abs());
        }
    }
    report(
        "AC6",
        worst < 0.005,
        format!(
            "busy fractions {fractions:.4?} (targets 1/3, 1/2); max deviation {worst:.4} (< 0.005)"
        ),
    );
}

#[test]
fn ac07_monte_carlo_matches_exact() {
    let pr = params(0.3, 0.2, 1.0);
    let trials = 100_000;
    let mut worst_z = 0.0f64;
    for (i, n) in [12usize, 50, 200].into_iter().enumerate() {
        let exact = exact_error_probabilities(&pr, n, 0.0).unwrap();
        let mc = monte_carlo_error(&pr, n, 0.0, trials, RngSeed::new(707, i as u64)).unwrap();
        for (est, truth) in [(mc.probs.p_f, exact.p_f), (mc.probs.p_m, exact.p_m)] {
            let se = (truth * (1.0 - truth) / trials as f64).sqrt();
            worst_z = worst_z.max((est - truth).abs() / se);
        }
    }
    report(
        "AC7",
        worst_z < 4.0,
        format!("max |MC - exact| = {worst_z:.2} SE (< 4) at n in {{12, 50, 200}}"),
    );
}

#[test]
fn ac08_fitted_decay_rate() {
    let pr = params(0.3, 0.2, 1.0);
    let cfg = CampaignConfig {
        params: pr,
        n_grid: (1..=20).map(|k| 100 * k).collect(),
        trials_per_point: 1,
        threshold: 0.0,
        master_seed: RngSeed::new(808, 0),
        use_exact_when_feasible: true,
        threads: None,
    };
    let res = run_campaign(&cfg).unwrap();
    let i = i_err_closed(&pr);
    let (se, sf, sm) = (
        res.fitted_slope_e.unwrap(),
        res.fitted_slope_f.unwrap(),
        res.fitted_slope_m.unwrap(),
    );
    let off = (se + i).abs() / i;
    let gap = (sf - sm).abs() / sf.abs().max(sm.abs());
    report(
        "AC8",
        off < 0.10 && gap < 0.15,
        format!(
            "slope_e {se:.6} vs -I {:.6}: {:.1}% off (< 10%); f/m gap {:.1}% (< 15%)",
            -i,
            off * 100.0,
            gap * 100.0
        ),
    );
}

#[test]
fn ac09_covert_bound() {
    let lw = 0.5;
    let eps = 0.1;
    let k = KFunction::Constant { k0: 1.0 };
    let mut worst_boundary = 0.0f64;
    for n in [10u64, 100, 1000, 10_000, 100_000, 1_000_000] {
        let spec = CovertnessSpec::new(eps, n, k).unwrap();
        let b = max_covert_rate(lw, &spec).unwrap().rate();
        let pr = params(lw, b, 1.0);
        let lhs = (-i_err_taylor(&pr) * n as f64).exp();
        worst_boundary = worst_boundary.max((lhs - (1.0 - eps)).abs());
    }
    let table = scaling_table(lw, eps, k, &[1_000, 10_000, 100_000, 1_000_000]).unwrap();
    let c0 = table[0].bound_times_sqrt_n;
    let worst_sqrt = table
        .iter()
        .map(|r| (r.bound_times_sqrt_n - c0).abs() / c0)
        .fold(0.0, f64::max);
    let spec = CovertnessSpec::new(eps, 1000, k).unwrap();
    let worked = max_covert_rate(0.3, &spec).unwrap().rate();
    report(
        "AC9",
        worst_boundary < 1e-12 && worst_sqrt < 1e-12 && (worked - 0.020672).abs() < 1e-6,
        format!(
            "boundary residual {worst_boundary:.2e}, sqrt(N) spread {worst_sqrt:.2e} (< 1e-12); bound(0.3, 0.1, 1000) = {worked:.7}"
        ),
    );
}

#[test]
fn ac10_scale_invariance() {
    let mut worst = 0.0f64;
    for pr in acceptance_grid(20, 10) {
        let base_i = i_err_closed(&pr);
        let base_p = exact_error_probabilities(&pr, 50, 0.0).unwrap().p_e;
        for c in [0.1, 3.0, 10.0] {
            let s = params(c * pr.lambda_w(), c * pr.lambda_b(), c * pr.mu());
            worst = worst.max((i_err_closed(&s) - base_i).abs());
            worst = worst.max((exact_error_probabilities(&s, 50, 0.0).unwrap().p_e - base_p).abs());
        }
    }
    report(
        "AC10",
        worst < 1e-12,
        format!("max change under rate scaling c in {{0.1, 3, 10}}: {worst:.2e} (< 1e-12)"),
    );
}

#[test]
fn ac11_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in [1usize, 4, 8] {
        let cfg = CampaignConfig {
            params: params(0.3, 0.2, 1.0),
            n_grid: vec![20, 40, 80],
            trials_per_point: 20_000,
            threshold: 0.0,
            master_seed: RngSeed::new(1111, 3),
            use_exact_when_feasible: false,
            threads: Some(threads),
        };
        let path = dir.path().join(format!("run{threads}.json"));
        persist(&run_campaign(&cfg).unwrap(), &path).unwrap();
        let json = std::fs::read(&path).unwrap();
        let csv = std::fs::read(path.with_extension("csv")).unwrap();
        files.push((json, csv));
    }
    let identical = files.windows(2).all(|w| w[0] == w[1]);
    report(
        "AC11",
        identical,
        "persisted JSON and CSV byte-identical at 1, 4 and 8 threads".into(),
    );
}
