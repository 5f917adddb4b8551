use super::{integrate, random_model};
use hashpower_core::{CompoundPoissonModel, ScaleEvaluator};
use rand::Rng;

/// `∫_0^X W(x) e^{-θx} dx` with `X` chosen so the neglected tail, bounded by
/// `e^{-(θ-φ)X} / ((θ-φ) ψ'(φ))`, is below `1e-9` of the full integral.
pub fn laplace_of_w(ev: &ScaleEvaluator, theta: f64) -> Option<(f64, f64)> {
    let model = ev.model();
    let q = ev.q();
    let phi = ev.phi_q();
    let exact = 1.0 / (model.laplace_exponent(theta) - q);
    let h = 1e-6 * phi.max(1e-3);
    let slope = (model.laplace_exponent(phi + h) - model.laplace_exponent(phi - h)) / (2.0 * h);
    let gap = theta - phi;
    let upper = ((1.0 / (gap * slope * exact * 1e-9)).ln() / gap).max(1.0);
    if ev.required_depth(upper) > ev.max_depth() {
        return None;
    }
    // W jumps in slope at every lattice point; split there
    let mut knots = vec![0.0];
    let jumps: Vec<f64> = model.atoms().iter().map(|a| a.jump).collect();
    let mut frontier = vec![0.0];
    while let Some(p) = frontier.pop() {
        for b in &jumps {
            let k = p + b;
            if k < upper && !knots.iter().any(|x: &f64| (x - k).abs() < 1e-12) {
                knots.push(k);
                frontier.push(k);
            }
        }
    }
    knots.push(upper);
    knots.sort_by(f64::total_cmp);
    let total: f64 = knots
        .windows(2)
        .map(|w| integrate(|x| ev.w(x).unwrap() * (-theta * x).exp(), w[0], w[1], 1e-12, 1e-16))
        .sum();
    Some((total, exact))
}

pub fn random_laplace_case(rng: &mut impl Rng) -> (ScaleEvaluator, f64) {
    loop {
        let atoms = rng.random_range(1..=3);
        let model = random_model(rng, atoms, (0.5, 3.0), (5.0, 10.0), (0.3, 1.0));
        let q = rng.random_range(0.01..0.5);
        let ev = ScaleEvaluator::new(model, q).unwrap();
        let theta = ev.phi_q() + rng.random_range(0.1..1.0);
        if laplace_of_w(&ev, theta).is_some() {
            return (ev, theta);
        }
    }
}

// fourth-order central difference
fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

pub const FD_STEP: f64 = 1e-3;

/// Off-lattice points in `(0, limit)` at least `margin` away from any
/// lattice point `Σ i_k b_k`, where the scale functions are smooth.
pub fn off_lattice_points(
    model: &CompoundPoissonModel,
    rng: &mut impl Rng,
    limit: f64,
    n: usize,
    margin: f64,
) -> Vec<f64> {
    let jumps: Vec<f64> = model.atoms().iter().map(|a| a.jump).collect();
    let mut lattice = vec![0.0];
    let mut i = 0;
    while i < lattice.len() {
        let p = lattice[i];
        for b in &jumps {
            let k = p + b;
            if k < limit + 1.0 && !lattice.iter().any(|x: &f64| (x - k).abs() < 1e-12) {
                lattice.push(k);
            }
        }
        i += 1;
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.random_range(margin..limit);
        if lattice.iter().all(|p| (x - p).abs() > margin) {
            out.push(x);
        }
    }
    out
}

/// Worst relative errors of `Z' = qW` and `Z̄' = Z` over `xs`.
pub fn derivative_chain_errors(ev: &ScaleEvaluator, xs: &[f64]) -> (f64, f64) {
    let q = ev.q();
    let mut worst = (0.0f64, 0.0f64);
    for &x in xs {
        let dz = derivative(|y| ev.z(y).unwrap(), x, FD_STEP);
        let qw = q * ev.w(x).unwrap();
        let dzb = derivative(|y| ev.z_bar(y).unwrap(), x, FD_STEP);
        let z = ev.z(x).unwrap();
        worst.0 = worst.0.max((dz - qw).abs() / qw.abs());
        worst.1 = worst.1.max((dzb - z).abs() / z.abs());
    }
    worst
}

/// Random model, discount rate and evaluation range on which the series
/// loses at most six digits to cancellation.
pub fn random_smooth_case(rng: &mut impl Rng) -> (ScaleEvaluator, f64) {
    loop {
        let atoms = rng.random_range(1..=3);
        let model = random_model(rng, atoms, (1.0, 5.0), (1.0, 4.0), (0.05, 0.5));
        let q = rng.random_range(0.05..0.5);
        let ev = ScaleEvaluator::new(model, q).unwrap();
        let limit = (20.0 * ev.model().min_jump()).min(30.0);
        let w = ev.w_detailed(limit).unwrap();
        if ev.required_depth(limit + 1.0) <= ev.max_depth() && w.magnitude / w.value < 1e6 {
            return (ev, limit);
        }
    }
}
