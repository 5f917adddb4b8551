//! Acceptance suite: one PASS/FAIL line per criterion.
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`.

mod common;

use std::time::{Duration, Instant};

use common::close;
use common::dividends::random_dividend_case;
use common::kernels::{g_bar_by_quadrature, g_by_quadrature};
use common::mean_variance::{example_pools, moments};
use common::scale::{
    derivative_chain_errors, laplace_of_w, off_lattice_points, random_laplace_case, random_smooth_case, FD_STEP,
};
use hashpower_core::dividends::{evaluate_allocation, optimal_barrier, value_function};
use hashpower_core::mc::{simulate_dividends, simulate_ruin, SimConfig};
use hashpower_core::mean_variance::{efficient_frontier_point, feasible_variance, frontier_curve, mv_best_pool};
use hashpower_core::network::{average_miner, run_study, single_pool_value, NetworkConfig};
use hashpower_core::scale::{g_double_integral_kernel, g_integral_kernel};
use hashpower_core::{
    phi_solo_lambertw, pool_terms, Allocation, CompoundPoissonModel, MinerProfile, PoolOffer, ScaleEvaluator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = 6.0;
const REWARD: f64 = 3.125;
const COST: f64 = 14.42;
const WEALTH: f64 = 3.939;
const MC_PATHS: usize = 100_000;
const Z_MAX: f64 = 3.0;

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: String) {
    let timed = elapsed <= limit;
    let verdict = if pass && timed { "PASS" } else { "FAIL" };
    println!(
        "{verdict} [{id:>2}] {name}: {detail} ({:.3} s, limit {} s)",
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
    assert!(timed, "criterion {id} ({name}) exceeded its runtime limit");
}

fn solo() -> CompoundPoissonModel {
    CompoundPoissonModel::single(LAMBDA, REWARD, COST).unwrap()
}

#[test]
fn c01_ruin_anchor_wealth() {
    let start = Instant::now();
    let x = solo().initial_wealth_for_ruin(0.5).unwrap();
    let elapsed = start.elapsed();
    let exact_margin = CompoundPoissonModel::single(LAMBDA, REWARD, LAMBDA * REWARD / 1.3)
        .unwrap()
        .initial_wealth_for_ruin(0.5)
        .unwrap();
    println!("info [ 1] with c = 18.75/1.3 the same wealth is {exact_margin:.6}");
    report(
        1,
        "wealth for ruin probability 0.5",
        (x - WEALTH).abs() <= 1e-3,
        elapsed,
        Duration::from_millis(1),
        format!("x = {x:.6}, target {WEALTH} +- 1e-3"),
    );
}

#[test]
fn c02_lambert_matches_bisection() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rate = rng.random_range(1.0..10.0);
        let reward = rng.random_range(0.5..5.0);
        let margin = rng.random_range(0.01..0.5);
        let q = rng.random_range(0.0..=1.0);
        let cost = rate * reward / (1.0 + margin);
        let lambert = phi_solo_lambertw(rate, reward, cost, q).unwrap();
        let bisection = CompoundPoissonModel::single(rate, reward, cost)
            .unwrap()
            .phi(q)
            .unwrap();
        worst = worst.max((lambert - bisection).abs());
    }
    report(
        2,
        "Lambert W vs bisection",
        worst <= 1e-10,
        start.elapsed(),
        Duration::from_secs(1),
        format!("worst |diff| = {worst:.2e} over 100 models"),
    );
}

#[test]
fn c03_laplace_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (ev, theta) = random_laplace_case(&mut rng);
        let (num, exact) = laplace_of_w(&ev, theta).unwrap();
        worst = worst.max(((num - exact) / exact).abs());
    }
    report(
        3,
        "Laplace transform of W",
        worst <= 1e-5,
        start.elapsed(),
        Duration::from_secs(30),
        format!("worst relative error {worst:.2e} over 20 cases"),
    );
}

#[test]
fn c04_kernels_match_quadrature() {
    let start = Instant::now();
    let (mut worst_g, mut worst_gbar) = (0.0f64, 0.0f64);
    let mut pass = true;
    for &x in &[0.5, 2.0, 10.0, 30.0] {
        for j in 0..=25 {
            let (k, q) = (g_integral_kernel(x, j), g_by_quadrature(x, j));
            pass &= close(k, q, 1e-10, 1e-300);
            worst_g = worst_g.max(((k - q) / q).abs());
            let (k, q) = (g_double_integral_kernel(x, j), g_bar_by_quadrature(x, j));
            pass &= close(k, q, 1e-9, 1e-300);
            worst_gbar = worst_gbar.max(((k - q) / q).abs());
        }
    }
    report(
        4,
        "G and Gbar kernels vs quadrature",
        pass,
        start.elapsed(),
        Duration::from_secs(10),
        format!("worst relative errors {worst_g:.2e} (G, tol 1e-10), {worst_gbar:.2e} (Gbar, tol 1e-9)"),
    );
}

#[test]
fn c05_derivative_chain() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_z, mut worst_zbar) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let (ev, limit) = random_smooth_case(&mut rng);
        let xs = off_lattice_points(ev.model(), &mut rng, limit, 50, 5.0 * FD_STEP);
        let (ez, ezb) = derivative_chain_errors(&ev, &xs);
        worst_z = worst_z.max(ez);
        worst_zbar = worst_zbar.max(ezb);
    }
    report(
        5,
        "Z' = qW and Zbar' = Z",
        worst_z <= 1e-5 && worst_zbar <= 1e-5,
        start.elapsed(),
        Duration::from_secs(10),
        format!("worst relative errors {worst_z:.2e}, {worst_zbar:.2e} over 5 x 50 points"),
    );
}

fn table_ranking_holds(q: f64) -> bool {
    let miner = MinerProfile::new(LAMBDA, COST, WEALTH).unwrap();
    let pools: Vec<_> = [(0.0, 1.0), (0.005, 0.99), (0.01, 0.85), (0.1, 0.75)]
        .iter()
        .map(|&(f, d)| pool_terms(PoolOffer::new(f, d).unwrap(), LAMBDA, REWARD).unwrap())
        .collect();
    let v: Vec<f64> = (0..4)
        .map(|k| {
            evaluate_allocation(&miner, &pools, &Allocation::vertex(4, k), q, 40)
                .unwrap()
                .value
        })
        .collect();
    // pool 2 > solo > pool 1 > pool 3
    v[2] > v[0] && v[0] > v[1] && v[1] > v[3]
}

#[test]
fn c06_dividends_match_simulation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = Vec::new();
    let ev = ScaleEvaluator::new(solo(), 0.1).unwrap();
    let a = optimal_barrier(&ev).unwrap();
    cases.push((ev, WEALTH, a));
    while cases.len() < 10 {
        let (ev, a_star) = random_dividend_case(&mut rng);
        let a = a_star * rng.random_range(0.5..1.5);
        let x = a * rng.random_range(0.1..1.3);
        cases.push((ev, x, a));
    }
    let mut worst = 0.0f64;
    for (i, (ev, x, a)) in cases.iter().enumerate() {
        let v = value_function(ev, *x, *a).unwrap();
        let mc = simulate_dividends(ev.model(), *x, *a, ev.q(), &SimConfig::new(MC_PATHS, 600 + i as u64)).unwrap();
        let z = mc.z_score(v);
        println!(
            "info [ 6] case {i}: q = {:.3}, x = {x:.4}, a = {a:.4}, V = {v:.6}, MC = {:.6} +- {:.6}, z = {z:+.2}",
            ev.q(),
            mc.mean,
            mc.std_error
        );
        worst = worst.max(z.abs());
    }
    let elapsed = start.elapsed();

    let holds: Vec<f64> = (1..=50)
        .map(|k| k as f64 / 100.0)
        .filter(|&q| table_ranking_holds(q))
        .collect();
    match (holds.first(), holds.last()) {
        (Some(lo), Some(hi)) => println!(
            "info [ 6] ranking pool 2 > solo > pool 1 > pool 3 at x = {WEALTH}, c = {COST}: holds at {} of 50 grid rates, q in [{lo:.2}, {hi:.2}]",
            holds.len()
        ),
        _ => println!("info [ 6] ranking pool 2 > solo > pool 1 > pool 3 holds for no q in 0.01..0.50"),
    }
    report(
        6,
        "dividend value vs Monte Carlo",
        worst <= Z_MAX,
        elapsed,
        Duration::from_secs(300),
        format!("worst |z| = {worst:.2} over 10 cases at {MC_PATHS} paths"),
    );
}

#[test]
fn c07_barrier_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let (ev, a_star) = random_dividend_case(&mut rng);
        let x = a_star.max(0.5) * rng.random_range(0.1..1.5);
        let best = value_function(&ev, x, a_star).unwrap();
        for i in 0..50 {
            let a = 2.0 * a_star.max(0.5) * i as f64 / 49.0;
            worst = worst.max(value_function(&ev, x, a).unwrap() - best);
        }
    }
    report(
        7,
        "optimal barrier beats a 50-point grid",
        worst <= 1e-8,
        start.elapsed(),
        Duration::from_secs(60),
        format!("max V(x; a) - V(x; a*) = {worst:.2e} over 10 models"),
    );
}

#[test]
fn c08_mean_variance_anchors() {
    let start = Instant::now();
    let pools = example_pools();
    let risk_neutral = mv_best_pool(&pools, 0.0).unwrap();
    let averse = mv_best_pool(&pools, 1.0).unwrap();
    let curve = frontier_curve(&pools, 50).unwrap();
    let (first, last) = (&curve[0], &curve[curve.len() - 1]);
    let p3 = &pools[3];
    let low_end = close(first.variance_rate, p3.variance_rate(), 1e-12, 0.0)
        && close(first.expected_rate, p3.mean_rate(), 1e-12, 0.0);
    let high_end = close(last.variance_rate, 58.59375, 1e-12, 0.0) && close(last.expected_rate, 18.75, 1e-12, 0.0);

    let (lo, hi) = feasible_variance(&pools).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tested = 0;
    let mut worst = f64::NEG_INFINITY;
    while tested < 10_000 {
        let raw: Vec<f64> = (0..pools.len()).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let (v, m) = moments(&pools, &w);
        if v < lo || v > hi {
            continue;
        }
        let best = efficient_frontier_point(&pools, v).unwrap().expected_rate;
        worst = worst.max(m - best);
        tested += 1;
    }
    report(
        8,
        "mean-variance anchors and frontier dominance",
        risk_neutral == 0 && averse == 3 && low_end && high_end && worst <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        format!(
            "best pool {risk_neutral} at gamma 0, {averse} at gamma 1; endpoints ({:.3}, {:.3}) and ({:.3}, {:.3}); worst random excess {worst:.2e}",
            first.variance_rate, first.expected_rate, last.variance_rate, last.expected_rate
        ),
    );
}

#[test]
fn c09_ruin_matches_simulation() {
    let start = Instant::now();
    let model = solo();
    let est = simulate_ruin(&model, WEALTH, &SimConfig::new(MC_PATHS, 9)).unwrap();
    let z = est.z_score(0.5);
    report(
        9,
        "ruin probability vs Monte Carlo",
        z.abs() <= Z_MAX,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "MC {:.5} +- {:.5} vs 0.5 (analytic {:.5}), z = {z:+.2}",
            est.mean,
            est.std_error,
            model.ruin_probability(WEALTH)
        ),
    );
}

#[test]
fn c10_network_study() {
    let start = Instant::now();
    let config = NetworkConfig::default();
    let report_a = run_study(&config).unwrap();
    let report_b = run_study(&config).unwrap();
    let elapsed = start.elapsed() / 2;

    let avg = average_miner(&config).unwrap();
    let mut worst_cal = 0.0f64;
    for p in &report_a.pools {
        let v = single_pool_value(&avg, &config, p.fee, p.difficulty_reduction).unwrap();
        worst_cal = worst_cal.max(((v - report_a.target_value) / report_a.target_value).abs());
    }
    let worst_sum = report_a
        .criteria
        .iter()
        .map(|c| (c.shares.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let identical = serde_json::to_vec(&report_a).unwrap() == serde_json::to_vec(&report_b).unwrap();
    for c in &report_a.criteria {
        println!(
            "info [10] {}: hhi {:.4}, nakamoto {}",
            c.criterion.name(),
            c.hhi,
            c.nakamoto
        );
    }
    report(
        10,
        "network study",
        report_a.criteria.len() == 3 && worst_cal <= 1e-6 && worst_sum <= 1e-9 && identical,
        elapsed,
        Duration::from_secs(600),
        format!("calibration error {worst_cal:.2e}, share sum error {worst_sum:.2e}, repeat identical: {identical}"),
    );
}
