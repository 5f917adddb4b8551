//! Expected discounted dividends under a barrier strategy, the optimal
//! barrier, and the search for the hashpower split that maximizes them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, validate_pool_order, Allocation, MinerProfile, PoolTerms};
use crate::scale::{ScaleEvaluator, DEFAULT_MAX_DEPTH};

const BARRIER_TOL: f64 = 1e-10;
const BARRIER_MAX_ITER: usize = 200;
// PSO weights below this are treated as zero so that negligible pools do not
// enter the active set.
const PSO_WEIGHT_FLOOR: f64 = 1e-9;

fn require_positive_q(ev: &ScaleEvaluator) -> Result<f64> {
    let q = ev.q();
    if q > 0.0 {
        Ok(q)
    } else {
        Err(Error::NonPositiveDiscount(q))
    }
}

/// `κ(y) = Z̄(y) - Z(y)/φ(q) + ψ'(0)/q`.
///
/// The constant enters with the sign of `ψ'(0)`: with it `κ + Z/φ` vanishes
/// exactly at the barrier solving `Z̄(a) = -ψ'(0)/q`, where `V'(a-) = 1`.
pub fn kappa(ev: &ScaleEvaluator, y: f64) -> Result<f64> {
    let q = require_positive_q(ev)?;
    let phi = ev.phi_q();
    Ok(ev.z_bar(y)? - ev.z(y)? / phi + ev.model().psi_prime_zero() / q)
}

/// Expected discounted dividends until ruin from wealth `x` when everything
/// above the barrier `a` is paid out.
///
/// For `x <= a`: `V(x; a) = -κ(a - x) + Z(a - x)/Z(a) · κ(a)`. For `x > a`
/// the excess is paid at once: `V(x; a) = x - a + V(a; a)`.
pub fn value_function(ev: &ScaleEvaluator, x: f64, a: f64) -> Result<f64> {
    require_positive_q(ev)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("wealth must be finite and >= 0 (got {x})")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("barrier must be finite and >= 0 (got {a})")));
    }
    if x > a {
        return Ok(x - a + value_function(ev, a, a)?);
    }
    let gap = a - x;
    Ok(-kappa(ev, gap)? + ev.z(gap)? / ev.z(a)? * kappa(ev, a)?)
}

/// Barrier solving `Z̄(a) = -ψ'(0)/q`; zero when that target is not
/// positive.
///
/// `Z̄` is increasing and convex with `Z̄' = Z`, so Newton steps from the
/// upper end of the bracket are safe; a bisection step is taken whenever
/// Newton would leave the bracket.
pub fn optimal_barrier(ev: &ScaleEvaluator) -> Result<f64> {
    let q = require_positive_q(ev)?;
    let target = -ev.model().psi_prime_zero() / q;
    if target <= 0.0 {
        return Ok(0.0);
    }
    let bracket_err = |e: Error| e.context("bracketing the optimal barrier");
    // Z̄(a) >= a, so the root never exceeds the target itself.
    let mut lo = 0.0;
    let mut hi = ev.model().min_jump().min(target);
    loop {
        if ev.z_bar(hi).map_err(bracket_err)? >= target {
            break;
        }
        lo = hi;
        if hi >= target {
            break;
        }
        hi = (2.0 * hi).min(target);
    }
    let mut a = hi;
    for _ in 0..BARRIER_MAX_ITER {
        let f = ev.z_bar(a).map_err(bracket_err)? - target;
        if f == 0.0 {
            return Ok(a);
        }
        if f > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        if hi - lo <= BARRIER_TOL {
            break;
        }
        let slope = ev.z(a).map_err(bracket_err)?;
        let newton = a - f / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - a).abs() <= 0.1 * BARRIER_TOL {
            a = next;
            break;
        }
        a = next;
    }
    Ok(a)
}

/// Optimal barrier and the dividend value it achieves from one wealth level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierValue {
    pub barrier: f64,
    pub value: f64,
    pub phi_q: f64,
    pub psi_prime0: f64,
}

pub fn optimal_value(ev: &ScaleEvaluator, x: f64) -> Result<BarrierValue> {
    let barrier = optimal_barrier(ev)?;
    let value = value_function(ev, x, barrier)?;
    Ok(BarrierValue {
        barrier,
        value,
        phi_q: ev.phi_q(),
        psi_prime0: ev.model().psi_prime_zero(),
    })
}

/// Outcome of valuing one allocation at its own optimal barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub allocation: Allocation,
    pub barrier: f64,
    pub value: f64,
    pub phi_q: f64,
    pub psi_prime0: f64,
    pub active_pools: Vec<usize>,
}

impl ValueReport {
    pub fn new(allocation: Allocation, bv: BarrierValue) -> Self {
        ValueReport {
            active_pools: allocation.support(),
            allocation,
            barrier: bv.barrier,
            value: bv.value,
            phi_q: bv.phi_q,
            psi_prime0: bv.psi_prime0,
        }
    }
}

/// `V(x; a*_w)` for the miner's own initial wealth.
pub fn evaluate_allocation(
    miner: &MinerProfile,
    pools: &[PoolTerms],
    allocation: &Allocation,
    q: f64,
    max_depth: usize,
) -> Result<ValueReport> {
    let model = build_model(miner, pools, allocation)?;
    let ev = ScaleEvaluator::with_max_depth(model, q, max_depth)?;
    let bv = optimal_value(&ev, miner.initial_wealth)?;
    Ok(ValueReport::new(allocation.clone(), bv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoOptions {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for PsoOptions {
    fn default() -> Self {
        PsoOptions {
            particles: 40,
            iterations: 200,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Largest number of pools combined in one allocation.
    pub max_active: usize,
    /// Minimal relative gain for a larger active set to replace the incumbent.
    pub rel_tol: f64,
    /// Golden-section tolerance on the pair weight.
    pub pair_tol: f64,
    pub max_depth: usize,
    pub pso: PsoOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_active: 4,
            rel_tol: 1e-6,
            pair_tol: 1e-6,
            max_depth: DEFAULT_MAX_DEPTH,
            pso: PsoOptions::default(),
        }
    }
}

/// Best allocation found for one support size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub active: usize,
    pub best: ValueReport,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSearch {
    pub best: ValueReport,
    /// Every single-pool allocation, in pool order.
    pub single_pools: Vec<ValueReport>,
    pub stages: Vec<StageRecord>,
}

// Higher value wins; exact ties go to the lexicographically smaller support.
fn better(candidate: &ValueReport, incumbent: &ValueReport) -> bool {
    candidate.value > incumbent.value
        || (candidate.value == incumbent.value && candidate.active_pools < incumbent.active_pools)
}

fn best_of(reports: impl IntoIterator<Item = ValueReport>) -> Option<ValueReport> {
    reports.into_iter().fold(None, |best, r| match best {
        Some(b) if !better(&r, &b) => Some(b),
        _ => Some(r),
    })
}

fn improves(candidate: &ValueReport, incumbent: &ValueReport, rel_tol: f64) -> bool {
    candidate.value > incumbent.value + rel_tol * incumbent.value.abs().max(f64::MIN_POSITIVE)
}

struct Objective<'a> {
    miner: &'a MinerProfile,
    pools: &'a [PoolTerms],
    q: f64,
    max_depth: usize,
}

impl Objective<'_> {
    fn eval(&self, allocation: Allocation) -> Result<ValueReport> {
        evaluate_allocation(self.miner, self.pools, &allocation, self.q, self.max_depth)
    }

    fn on_support(&self, support: &[usize], weights: &[f64]) -> Result<ValueReport> {
        let mut full = vec![0.0; self.pools.len()];
        for (&k, &w) in support.iter().zip(weights) {
            full[k] = w;
        }
        self.eval(Allocation::new(full)?)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

// Golden-section maximization of V along w e_i + (1 - w) e_j; endpoints are
// the single-pool values already known.
fn best_on_pair(obj: &Objective, i: usize, j: usize, tol: f64) -> Result<(ValueReport, usize)> {
    let f = |w: f64| obj.on_support(&[i, j], &[w, 1.0 - w]);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evals = 2;
    while hi - lo > tol {
        if f1.value >= f2.value {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evals += 1;
    }
    let best = if better(&f2, &f1) { f2 } else { f1 };
    Ok((best, evals))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut w: Vec<f64> = exps.iter().map(|e| e / total).collect();
    w.iter_mut().for_each(|x| {
        if *x < PSO_WEIGHT_FLOOR {
            *x = 0.0
        }
    });
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Particle swarm over unconstrained logits; the softmax keeps every particle
/// on the simplex of `support`. `seed_weights` becomes particle 0.
fn pso_on_support(
    obj: &Objective,
    support: &[usize],
    seed_weights: &[f64],
    opts: &PsoOptions,
    stream: u64,
) -> Result<(ValueReport, usize)> {
    let dim = support.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let n = opts.particles.max(1);
    let v_max = 4.0;

    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            if p == 0 {
                seed_weights
                    .iter()
                    .map(|w| if *w > 0.0 { w.ln() } else { -25.0 })
                    .collect()
            } else {
                (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
            }
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let evaluate = |pos: &[Vec<f64>]| -> Result<Vec<ValueReport>> {
        pos.par_iter().map(|p| obj.on_support(support, &softmax(p))).collect()
    };

    let mut values = evaluate(&positions)?;
    let mut evals = n;
    let mut personal_best = positions.clone();
    let mut personal_val = values.clone();
    let mut global = 0;
    for p in 1..n {
        if better(&personal_val[p], &personal_val[global]) {
            global = p;
        }
    }

    for _ in 0..opts.iterations {
        let g = personal_best[global].clone();
        for p in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = opts.inertia * velocities[p][d]
                    + opts.cognitive * r1 * (personal_best[p][d] - positions[p][d])
                    + opts.social * r2 * (g[d] - positions[p][d]);
                velocities[p][d] = v.clamp(-v_max, v_max);
                positions[p][d] = (positions[p][d] + velocities[p][d]).clamp(-30.0, 30.0);
            }
        }
        values = evaluate(&positions)?;
        evals += n;
        for p in 0..n {
            if better(&values[p], &personal_val[p]) {
                personal_val[p] = values[p].clone();
                personal_best[p] = positions[p].clone();
            }
        }
        for p in 0..n {
            if better(&personal_val[p], &personal_val[global]) {
                global = p;
            }
        }
    }
    Ok((personal_val[global].clone(), evals))
}

/// Bottom-up search for the allocation maximizing `V(x; a*_w)`.
///
/// Single pools first, then the best split of every pair by golden-section
/// search, then particle swarms on supports grown one pool at a time from
/// the best support so far. Growth stops once a larger support fails to beat
/// the incumbent by `rel_tol`, or at `max_active` pools.
pub fn optimize_allocation(
    miner: &MinerProfile,
    pools: &[PoolTerms],
    q: f64,
    options: &OptimizerOptions,
) -> Result<AllocationSearch> {
    validate_pool_order(pools)?;
    search_allocation(miner, pools, q, options)
}

/// The search itself, for pool lists whose order is not the share-rate
/// convention; nothing in the search depends on it.
pub(crate) fn search_allocation(
    miner: &MinerProfile,
    pools: &[PoolTerms],
    q: f64,
    options: &OptimizerOptions,
) -> Result<AllocationSearch> {
    if pools.is_empty() {
        return Err(Error::invalid("at least one pool is required"));
    }
    for terms in pools {
        terms.validate()?;
    }
    if !(q > 0.0) {
        return Err(Error::NonPositiveDiscount(q));
    }
    let obj = Objective {
        miner,
        pools,
        q,
        max_depth: options.max_depth,
    };
    let n = pools.len();

    let single_pools: Vec<ValueReport> = (0..n)
        .into_par_iter()
        .map(|k| obj.eval(Allocation::vertex(n, k)))
        .collect::<Result<_>>()?;
    let mut incumbent = best_of(single_pools.iter().cloned()).expect("at least one pool");
    let mut stages = vec![StageRecord {
        active: 1,
        best: incumbent.clone(),
        evaluations: n,
    }];

    if n < 2 || options.max_active < 2 {
        return Ok(AllocationSearch {
            best: incumbent,
            single_pools,
            stages,
        });
    }

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pair_results: Vec<(ValueReport, usize)> = pairs
        .par_iter()
        .map(|&(i, j)| best_on_pair(&obj, i, j, options.pair_tol))
        .collect::<Result<_>>()?;
    let evaluations = pair_results.iter().map(|(_, e)| e).sum();
    let best_pair = best_of(pair_results.into_iter().map(|(r, _)| r)).expect("pairs exist");
    stages.push(StageRecord {
        active: 2,
        best: best_pair.clone(),
        evaluations,
    });
    if !improves(&best_pair, &incumbent, options.rel_tol) {
        return Ok(AllocationSearch {
            best: incumbent,
            single_pools,
            stages,
        });
    }
    incumbent = best_pair;
    let mut base_support = incumbent.active_pools.clone();

    for k in 3..=options.max_active.min(n) {
        let candidates: Vec<Vec<usize>> = (0..n)
            .filter(|m| !base_support.contains(m))
            .map(|m| {
                let mut s = base_support.clone();
                s.push(m);
                s.sort_unstable();
                s
            })
            .collect();
        let mut stage_best: Option<ValueReport> = None;
        let mut evaluations = 0;
        for support in &candidates {
            let seed: Vec<f64> = support.iter().map(|&p| incumbent.allocation.weights()[p]).collect();
            let stream = support
                .iter()
                .fold(k as u64, |acc, &p| acc.wrapping_mul(1_000_003).wrapping_add(p as u64));
            let (r, e) = pso_on_support(&obj, support, &seed, &options.pso, stream)?;
            evaluations += e;
            stage_best = match stage_best {
                Some(b) if !better(&r, &b) => Some(b),
                _ => Some(r),
            };
        }
        let Some(stage_best) = stage_best else { break };
        stages.push(StageRecord {
            active: k,
            best: stage_best.clone(),
            evaluations,
        });
        if !improves(&stage_best, &incumbent, options.rel_tol) {
            break;
        }
        incumbent = stage_best;
        base_support = incumbent.active_pools.clone();
    }

    Ok(AllocationSearch {
        best: incumbent,
        single_pools,
        stages,
    })
}
