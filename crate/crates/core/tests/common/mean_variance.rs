use hashpower_core::PoolTerms;

pub fn example_pools() -> Vec<PoolTerms> {
    [(6.0, 3.125), (6.06, 3.08), (7.06, 2.62), (8.0, 2.1)]
        .iter()
        .map(|&(l, b)| PoolTerms::new(l, b).unwrap())
        .collect()
}

pub fn moments(pools: &[PoolTerms], w: &[f64]) -> (f64, f64) {
    pools.iter().zip(w).fold((0.0, 0.0), |(v, m), (p, w)| {
        (v + w * p.variance_rate(), m + w * p.mean_rate())
    })
}

/// Best mean rate at variance `sigma2` by brute force: every pair `(i, j)`
/// takes the weights solved from the two constraints while the remaining
/// pools run over a grid of the given step.
pub fn grid_best_mean(pools: &[PoolTerms], sigma2: f64, step: f64) -> f64 {
    let n = pools.len();
    let steps = (1.0 / step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            scan(pools, (i, j), &others, steps, step, (1.0, sigma2, 0.0), &mut best);
        }
    }
    best
}

// `left` = (weight, variance, mean) not yet assigned / accumulated
fn scan(
    pools: &[PoolTerms],
    pair: (usize, usize),
    others: &[usize],
    steps: usize,
    step: f64,
    left: (f64, f64, f64),
    best: &mut f64,
) {
    let (weight, variance, mean) = left;
    match others.split_first() {
        None => {
            let (pi, pj) = (&pools[pair.0], &pools[pair.1]);
            let (vi, vj) = (pi.variance_rate(), pj.variance_rate());
            if vi == vj {
                return;
            }
            let wi = (variance - weight * vj) / (vi - vj);
            let wj = weight - wi;
            if wi >= -1e-12 && wj >= -1e-12 {
                *best = best.max(mean + wi * pi.mean_rate() + wj * pj.mean_rate());
            }
        }
        Some((&k, rest)) => {
            let max = (weight / step + 1e-9).floor() as usize;
            for c in 0..=max.min(steps) {
                let w = c as f64 * step;
                let p = &pools[k];
                scan(
                    pools,
                    pair,
                    rest,
                    steps,
                    step,
                    (weight - w, variance - w * p.variance_rate(), mean + w * p.mean_rate()),
                    best,
                );
            }
        }
    }
}
