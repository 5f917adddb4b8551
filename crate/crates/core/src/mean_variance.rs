//! Mean-variance criteria: the risk-aversion objective with its vertex
//! argmax, and the efficient frontier under a variance budget.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, CompoundPoissonModel, PoolTerms};

/// `E(X_t) = x - c t + t μ Σ p_k b_k`.
pub fn expected_wealth(model: &CompoundPoissonModel, x: f64, t: f64) -> f64 {
    x + t * (model.reward_rate() - model.drift())
}

/// `Var(X_t) = t μ Σ p_k b_k²`.
pub fn wealth_variance(model: &CompoundPoissonModel, t: f64) -> f64 {
    t * model.reward_variance_rate()
}

/// `E(X_T) - γ Var(X_T)`.
pub fn mv_objective(model: &CompoundPoissonModel, x: f64, horizon: f64, gamma: f64) -> f64 {
    expected_wealth(model, x, horizon) - gamma * wealth_variance(model, horizon)
}

fn mv_score(p: &PoolTerms, gamma: f64) -> f64 {
    p.share_rate * (p.share_reward - gamma * p.share_reward * p.share_reward)
}

/// Pool maximizing `λ_k (b_k - γ b_k²)`; the lowest index wins ties.
pub fn mv_best_pool(pools: &[PoolTerms], gamma: f64) -> Result<usize> {
    if pools.is_empty() {
        return Err(Error::invalid("at least one pool is required"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "risk aversion must be finite and >= 0 (got {gamma})"
        )));
    }
    let mut best = 0;
    let mut best_score = mv_score(&pools[0], gamma);
    for (k, p) in pools.iter().enumerate().skip(1) {
        let s = mv_score(p, gamma);
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    Ok(best)
}

/// A point on the efficient frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub variance_rate: f64,
    pub expected_rate: f64,
    pub allocation: Allocation,
    /// Pools mixed on this point, lower index first; equal at a vertex.
    pub segment: (usize, usize),
}

impl FrontierPoint {
    /// Weights of the two segment pools, in segment order.
    pub fn segment_weights(&self) -> (f64, f64) {
        let (i, j) = self.segment;
        let w = self.allocation.weights();
        if i == j {
            (w[i], 0.0)
        } else {
            (w[i], w[j])
        }
    }
}

/// Variance and mean rates of each pool plus the indices of the upper
/// concave envelope, sorted by increasing variance.
struct Frontier {
    variance: Vec<f64>,
    mean: Vec<f64>,
    hull: Vec<usize>,
}

fn check_frontier_order(pools: &[PoolTerms]) -> Result<()> {
    if pools.is_empty() {
        return Err(Error::invalid("at least one pool is required"));
    }
    for terms in pools {
        terms.validate()?;
    }
    for (k, pair) in pools.windows(2).enumerate() {
        if pair[1].mean_rate() > pair[0].mean_rate() || pair[1].variance_rate() > pair[0].variance_rate() {
            return Err(Error::invalid(format!(
                "pools must have nonincreasing mean and variance rates; pool {} breaks the order",
                k + 1
            )));
        }
    }
    Ok(())
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

impl Frontier {
    fn new(pools: &[PoolTerms]) -> Result<Self> {
        check_frontier_order(pools)?;
        Ok(Self::unordered(pools))
    }

    fn unordered(pools: &[PoolTerms]) -> Self {
        let variance: Vec<f64> = pools.iter().map(PoolTerms::variance_rate).collect();
        let mean: Vec<f64> = pools.iter().map(PoolTerms::mean_rate).collect();

        let mut order: Vec<usize> = (0..pools.len()).collect();
        order.sort_by(|&a, &b| {
            variance[a]
                .total_cmp(&variance[b])
                .then(mean[b].total_cmp(&mean[a]))
                .then(a.cmp(&b))
        });
        // only the best pool survives at each variance level
        order.dedup_by(|b, a| variance[*a] == variance[*b]);

        let pt = |k: usize| (variance[k], mean[k]);
        let mut hull: Vec<usize> = Vec::with_capacity(order.len());
        for &k in &order {
            while hull.len() >= 2 && cross(pt(hull[hull.len() - 2]), pt(hull[hull.len() - 1]), pt(k)) > 0.0 {
                hull.pop();
            }
            hull.push(k);
        }
        Frontier { variance, mean, hull }
    }

    fn bounds(&self) -> (f64, f64) {
        (self.variance[self.hull[0]], self.variance[*self.hull.last().unwrap()])
    }

    fn point(&self, sigma2: f64) -> Result<FrontierPoint> {
        let (min, max) = self.bounds();
        if !(sigma2 >= min && sigma2 <= max) {
            return Err(Error::InfeasibleVariance { sigma2, min, max });
        }
        let n = self.variance.len();
        let vertex = |k: usize| FrontierPoint {
            variance_rate: self.variance[k],
            expected_rate: self.mean[k],
            allocation: Allocation::vertex(n, k),
            segment: (k, k),
        };
        if let Some(&k) = self.hull.iter().find(|&&k| self.variance[k] == sigma2) {
            return Ok(vertex(k));
        }
        let s = self
            .hull
            .windows(2)
            .position(|seg| self.variance[seg[1]] > sigma2)
            .expect("sigma2 lies strictly inside the hull range");
        let (lo, hi) = (self.hull[s], self.hull[s + 1]);
        let w_hi = (sigma2 - self.variance[lo]) / (self.variance[hi] - self.variance[lo]);
        let mut weights = vec![0.0; n];
        weights[hi] = w_hi;
        weights[lo] = 1.0 - w_hi;
        let allocation = Allocation::new(weights)?;
        let w = allocation.weights();
        Ok(FrontierPoint {
            variance_rate: w[lo] * self.variance[lo] + w[hi] * self.variance[hi],
            expected_rate: w[lo] * self.mean[lo] + w[hi] * self.mean[hi],
            segment: (lo.min(hi), lo.max(hi)),
            allocation,
        })
    }
}

/// Feasible variance rates `[min_k λ_k b_k², max_k λ_k b_k²]`.
pub fn feasible_variance(pools: &[PoolTerms]) -> Result<(f64, f64)> {
    Ok(Frontier::new(pools)?.bounds())
}

/// Largest expected reward rate among allocations with variance rate
/// exactly `sigma2`.
///
/// Pools must have nonincreasing `λ_k b_k` and `λ_k b_k²`. The optimum lies
/// on the upper concave envelope of the points `(λ_k b_k², λ_k b_k)`, so it
/// mixes at most two pools.
pub fn efficient_frontier_point(pools: &[PoolTerms], sigma2: f64) -> Result<FrontierPoint> {
    Frontier::new(pools)?.point(sigma2)
}

/// Frontier point for pools in arbitrary order, with `sigma2` clamped into
/// the feasible interval.
pub(crate) fn frontier_point_clamped(pools: &[PoolTerms], sigma2: f64) -> Result<FrontierPoint> {
    if pools.is_empty() {
        return Err(Error::invalid("at least one pool is required"));
    }
    let frontier = Frontier::unordered(pools);
    let (min, max) = frontier.bounds();
    frontier.point(sigma2.clamp(min, max))
}

/// Frontier on an even grid of `n_points` variance rates spanning the
/// feasible interval. A degenerate interval yields a single point.
pub fn frontier_curve(pools: &[PoolTerms], n_points: usize) -> Result<Vec<FrontierPoint>> {
    if n_points < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 frontier points (got {n_points})"
        )));
    }
    let frontier = Frontier::new(pools)?;
    let (min, max) = frontier.bounds();
    if min == max {
        return Ok(vec![frontier.point(min)?]);
    }
    let step = (max - min) / (n_points - 1) as f64;
    (0..n_points)
        .map(|i| {
            let sigma2 = if i + 1 == n_points { max } else { min + step * i as f64 };
            frontier.point(sigma2)
        })
        .collect()
}

/// CSV with header `sigma2,expected_rate,pool_i,pool_j,w_i,w_j`.
pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut out = String::from("sigma2,expected_rate,pool_i,pool_j,w_i,w_j\n");
    for p in points {
        let (w_i, w_j) = p.segment_weights();
        writeln!(
            out,
            "{:?},{:?},{},{},{:?},{:?}",
            p.variance_rate, p.expected_rate, p.segment.0, p.segment.1, w_i, w_j
        )
        .expect("writing to a String cannot fail");
    }
    out
}
