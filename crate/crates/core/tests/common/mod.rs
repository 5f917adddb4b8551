#![allow(dead_code)]

pub mod dividends;
pub mod kernels;
pub mod mean_variance;
pub mod scale;

use hashpower_core::{Atom, CompoundPoissonModel};
use rand::Rng;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature: bisects the worst interval until the
/// summed error estimate meets `max(abs_tol, rel_tol |I|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    // sum small to large
    let mut values: Vec<f64> = parts.iter().map(|p| p.2 .0).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    values.iter().sum()
}

/// Profitable model with `n_atoms` rewards in `jumps`, total rate in
/// `rates` and a profit margin in `margins`: `c = μ E[B] / (1 + margin)`.
pub fn random_model(
    rng: &mut impl Rng,
    n_atoms: usize,
    rates: (f64, f64),
    jumps: (f64, f64),
    margins: (f64, f64),
) -> CompoundPoissonModel {
    let raw: Vec<f64> = (0..n_atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let atoms: Vec<Atom> = raw
        .iter()
        .map(|p| Atom {
            prob: p / total,
            jump: rng.random_range(jumps.0..jumps.1),
        })
        .collect();
    let mu = rng.random_range(rates.0..rates.1);
    let mean_jump: f64 = atoms.iter().map(|a| a.prob * a.jump).sum();
    let margin = rng.random_range(margins.0..margins.1);
    CompoundPoissonModel::new(mu * mean_jump / (1.0 + margin), mu, atoms).unwrap()
}

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= abs.max(rel * b.abs())
}
