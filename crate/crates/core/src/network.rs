//! Network-level study: a population of miners spreads its hashpower over
//! solo mining and PPS pools whose difficulty reductions are calibrated so
//! that the average miner is indifferent between them.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dividends::{optimal_value, search_allocation, OptimizerOptions, PsoOptions};
use crate::error::{Error, Result};
use crate::mean_variance::{frontier_point_clamped, mv_best_pool};
use crate::model::{pool_terms, Allocation, CompoundPoissonModel, MinerProfile, PoolOffer, PoolTerms};
use crate::scale::{ScaleEvaluator, DEFAULT_MAX_DEPTH};

const CALIBRATION_VALUE_TOL: f64 = 1e-8;
const CALIBRATION_MIN_DELTA: f64 = 1e-6;
const CALIBRATION_MAX_ITER: usize = 200;
const AVERAGE_MINER_RUIN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_miners: usize,
    pub n_pools: usize,
    /// Network-wide block rate `λ`.
    pub total_block_rate: f64,
    pub block_reward: f64,
    /// Range of the profit margins `η_l`; miner costs are `λ_l b / (1 + η_l)`.
    pub profit_margin_range: [f64; 2],
    /// Beta parameters of the miners' target ruin probabilities.
    pub ruin_beta_params: [f64; 2],
    pub gamma_range: [f64; 2],
    pub fee_range: [f64; 2],
    /// Profit margin of the average miner used for calibration.
    pub avg_margin: f64,
    pub q: f64,
    pub seed: u64,
    /// Largest number of destinations mixed under the dividend criterion.
    pub max_active: usize,
    pub max_depth: usize,
    pub pso: PsoOptions,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_miners: 25,
            n_pools: 10,
            total_block_rate: 6.0,
            block_reward: 3.125,
            profit_margin_range: [0.04, 0.1],
            ruin_beta_params: [1.5, 1.5],
            gamma_range: [0.0, 1.0],
            fee_range: [0.0, 0.04],
            avg_margin: 0.17,
            q: 0.1,
            seed: 2024,
            max_active: 3,
            max_depth: DEFAULT_MAX_DEPTH,
            pso: PsoOptions::default(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(Error::invalid(format!(
            "{name} must be an interval inside [{lo}, {hi}] (got [{}, {}])",
            r[0], r[1]
        )));
    }
    Ok(())
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_miners == 0 {
            return Err(Error::invalid("n_miners must be at least 1"));
        }
        if !(self.total_block_rate > 0.0 && self.total_block_rate.is_finite()) {
            return Err(Error::invalid("total_block_rate must be positive"));
        }
        if !(self.block_reward > 0.0 && self.block_reward.is_finite()) {
            return Err(Error::invalid("block_reward must be positive"));
        }
        check_range(
            "profit_margin_range",
            self.profit_margin_range,
            f64::MIN_POSITIVE,
            f64::MAX,
        )?;
        check_range("gamma_range", self.gamma_range, 0.0, f64::MAX)?;
        check_range("fee_range", self.fee_range, 0.0, 1.0 - f64::EPSILON)?;
        if !(self.ruin_beta_params.iter().all(|p| *p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("ruin_beta_params must be positive"));
        }
        if !(self.avg_margin > 0.0 && self.avg_margin.is_finite()) {
            return Err(Error::invalid("avg_margin must be positive"));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::NonPositiveDiscount(self.q));
        }
        if self.max_active == 0 {
            return Err(Error::invalid("max_active must be at least 1"));
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_active: self.max_active,
            max_depth: self.max_depth,
            pso: self.pso,
            ..OptimizerOptions::default()
        }
    }
}

fn uniform(range: [f64; 2]) -> Result<Uniform<f64>> {
    Uniform::new_inclusive(range[0], range[1]).map_err(|e| Error::invalid(format!("bad range: {e}")))
}

/// Draws the miner population: Dirichlet(1, …, 1) shares of the block rate,
/// margins, target ruin probabilities (which fix the initial wealth through
/// each miner's solo model) and risk aversions.
pub fn sample_miners(config: &NetworkConfig, rng: &mut impl Rng) -> Result<Vec<MinerProfile>> {
    config.validate()?;
    let m = config.n_miners;
    let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let margin = uniform(config.profit_margin_range)?;
    let beta = Beta::new(config.ruin_beta_params[0], config.ruin_beta_params[1])
        .map_err(|e| Error::invalid(format!("bad beta parameters: {e}")))?;
    let gamma = uniform(config.gamma_range)?;
    let b = config.block_reward;

    raw.iter()
        .map(|e| {
            let rate = config.total_block_rate * e / total;
            let eta = margin.sample(rng);
            let ruin: f64 = beta.sample(rng);
            let gamma = gamma.sample(rng);
            let cost = rate * b / (1.0 + eta);
            let solo = CompoundPoissonModel::single(rate, b, cost)?;
            let wealth = solo.initial_wealth_for_ruin(ruin)?;
            MinerProfile::new(rate, cost, wealth)?
                .with_risk_aversion(gamma)?
                .with_target_ruin_prob(ruin)
        })
        .collect()
}

/// Block rate `λ/m`, cost `λ̄ b/(1 + margin)` and the wealth giving ruin
/// probability 1/2.
pub fn average_miner(config: &NetworkConfig) -> Result<MinerProfile> {
    config.validate()?;
    let rate = config.total_block_rate / config.n_miners as f64;
    let cost = rate * config.block_reward / (1.0 + config.avg_margin);
    let solo = CompoundPoissonModel::single(rate, config.block_reward, cost)?;
    let wealth = solo.initial_wealth_for_ruin(AVERAGE_MINER_RUIN)?;
    MinerProfile::new(rate, cost, wealth)?.with_target_ruin_prob(AVERAGE_MINER_RUIN)
}

/// Optimal dividend value of `miner` mining only in a pool with the given
/// fee and difficulty reduction (solo when `fee = 0`, `delta = 1`).
pub fn single_pool_value(miner: &MinerProfile, config: &NetworkConfig, fee: f64, delta: f64) -> Result<f64> {
    let terms = pool_terms(PoolOffer::new(fee, delta)?, miner.block_rate, config.block_reward)?;
    let model = CompoundPoissonModel::single(terms.share_rate, terms.share_reward, miner.cost_rate)?;
    let ev = ScaleEvaluator::with_max_depth(model, config.q, config.max_depth)?;
    Ok(optimal_value(&ev, miner.initial_wealth)?.value)
}

/// Difficulty reduction of each pool making the average miner's optimal
/// value in that pool equal to its solo value.
///
/// A zero fee gives `δ = 1`. Otherwise `δ` is halved from 1 until the value
/// reaches the target and then bisected until the value is within `1e-8`.
pub fn calibrate_difficulties(fees: &[f64], config: &NetworkConfig) -> Result<Vec<f64>> {
    let avg = average_miner(config)?;
    let target = single_pool_value(&avg, config, 0.0, 1.0)?;
    fees.par_iter()
        .enumerate()
        .map(|(k, &fee)| calibrate_one(&avg, config, k, fee, target))
        .collect()
}

fn calibrate_one(avg: &MinerProfile, config: &NetworkConfig, pool: usize, fee: f64, target: f64) -> Result<f64> {
    if fee == 0.0 {
        return Ok(1.0);
    }
    let value = |delta: f64| single_pool_value(avg, config, fee, delta);
    let high_value = value(1.0)?;
    let mut hi = 1.0;
    let mut lo = 0.5;
    let mut best_seen = high_value;
    let failed = |low: f64| Error::Calibration {
        pool,
        fee,
        target,
        low: high_value.min(low),
        high: high_value.max(low),
    };
    loop {
        let v = match value(lo) {
            Ok(v) => v,
            Err(_) => return Err(failed(best_seen)),
        };
        best_seen = v;
        if v >= target {
            break;
        }
        if lo < CALIBRATION_MIN_DELTA {
            return Err(failed(best_seen));
        }
        hi = lo;
        lo *= 0.5;
    }
    // value decreases in delta on [lo, hi]: v(lo) >= target > v(hi)
    for _ in 0..CALIBRATION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let v = value(mid)?;
        if (v - target).abs() <= CALIBRATION_VALUE_TOL {
            return Ok(mid);
        }
        if v >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    MvUtility,
    MvFrontier,
    Dividends,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::MvUtility, Criterion::MvFrontier, Criterion::Dividends];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::MvUtility => "mv_utility",
            Criterion::MvFrontier => "mv_frontier",
            Criterion::Dividends => "dividends",
        }
    }
}

/// A pool offer with its identifier; id 0 is solo mining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: usize,
    pub fee: f64,
    pub difficulty_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: Criterion,
    /// Hashpower share of each destination, indexed by pool id.
    pub shares: Vec<f64>,
    /// Herfindahl-Hirschman index of `shares`.
    pub hhi: f64,
    /// Fewest destinations jointly holding more than half the hashpower.
    pub nakamoto: usize,
    /// Per-miner weights, indexed by pool id.
    pub allocations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub notes: Vec<String>,
    pub config: NetworkConfig,
    pub average_miner: MinerProfile,
    pub target_value: f64,
    pub pools: Vec<PoolEntry>,
    pub miners: Vec<MinerProfile>,
    pub criteria: Vec<CriterionReport>,
}

impl NetworkReport {
    /// CSV with header `criterion,pool_id,share`.
    pub fn shares_csv(&self) -> String {
        let mut out = String::from("criterion,pool_id,share\n");
        for c in &self.criteria {
            for (id, s) in c.shares.iter().enumerate() {
                writeln!(out, "{},{},{:?}", c.criterion.name(), id, s).expect("writing to a String cannot fail");
            }
        }
        out
    }
}

pub fn herfindahl(shares: &[f64]) -> f64 {
    shares.iter().map(|s| s * s).sum()
}

pub fn nakamoto_coefficient(shares: &[f64]) -> usize {
    let mut sorted = shares.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        acc += s;
        if acc > 0.5 {
            return k + 1;
        }
    }
    sorted.len()
}

/// Solo plus the pools, ordered by decreasing difficulty reduction (ties by
/// id), which is the share-rate convention of the allocation search.
fn destinations(pools: &[PoolEntry]) -> Vec<PoolEntry> {
    let mut all = vec![PoolEntry {
        id: 0,
        fee: 0.0,
        difficulty_reduction: 1.0,
    }];
    all.extend_from_slice(pools);
    all.sort_by(|a, b| {
        b.difficulty_reduction
            .total_cmp(&a.difficulty_reduction)
            .then(a.id.cmp(&b.id))
    });
    all
}

fn allocate_miner(
    miner: &MinerProfile,
    dest: &[PoolEntry],
    criterion: Criterion,
    config: &NetworkConfig,
) -> Result<Allocation> {
    let terms: Vec<PoolTerms> = dest
        .iter()
        .map(|p| {
            pool_terms(
                PoolOffer::new(p.fee, p.difficulty_reduction)?,
                miner.block_rate,
                config.block_reward,
            )
        })
        .collect::<Result<_>>()?;
    match criterion {
        Criterion::MvUtility => {
            let gamma = miner.risk_aversion.unwrap_or(0.0);
            Ok(Allocation::vertex(terms.len(), mv_best_pool(&terms, gamma)?))
        }
        Criterion::MvFrontier => {
            let beta = miner.target_ruin_prob.unwrap_or(1.0);
            let sigma2 = beta * miner.block_rate * config.block_reward * config.block_reward;
            Ok(frontier_point_clamped(&terms, sigma2)?.allocation)
        }
        Criterion::Dividends => Ok(search_allocation(miner, &terms, config.q, &config.optimizer())?
            .best
            .allocation),
    }
}

/// Allocates every miner under `criterion` and aggregates hashpower shares by
/// pool id (0 = solo, `k` = `pools[k - 1]`).
pub fn allocate_all(
    miners: &[MinerProfile],
    pools: &[PoolEntry],
    criterion: Criterion,
    config: &NetworkConfig,
) -> Result<CriterionReport> {
    let dest = destinations(pools);
    let n_ids = pools.len() + 1;
    let allocations: Vec<Vec<f64>> = miners
        .par_iter()
        .enumerate()
        .map(|(l, miner)| {
            let alloc = allocate_miner(miner, &dest, criterion, config)
                .map_err(|e| e.context(format!("miner {l}, criterion {}", criterion.name())))?;
            let mut by_id = vec![0.0; n_ids];
            for (p, w) in dest.iter().zip(alloc.weights()) {
                by_id[p.id] = *w;
            }
            Ok(by_id)
        })
        .collect::<Result<_>>()?;

    let mut shares = vec![0.0; n_ids];
    for (miner, w) in miners.iter().zip(&allocations) {
        for (s, wk) in shares.iter_mut().zip(w) {
            *s += wk * miner.block_rate / config.total_block_rate;
        }
    }
    Ok(CriterionReport {
        criterion,
        hhi: herfindahl(&shares),
        nakamoto: nakamoto_coefficient(&shares),
        shares,
        allocations,
    })
}

/// Samples miners and fees, calibrates the pools and allocates the network
/// under every criterion. A pure function of `config`.
pub fn run_study(config: &NetworkConfig) -> Result<NetworkReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let miners = sample_miners(config, &mut rng)?;
    let fee = uniform(config.fee_range)?;
    let fees: Vec<f64> = (0..config.n_pools).map(|_| fee.sample(&mut rng)).collect();
    let deltas = calibrate_difficulties(&fees, config)?;
    let pools: Vec<PoolEntry> = fees
        .iter()
        .zip(&deltas)
        .enumerate()
        .map(|(k, (&fee, &delta))| PoolEntry {
            id: k + 1,
            fee,
            difficulty_reduction: delta,
        })
        .collect();
    let average = average_miner(config)?;
    let target_value = single_pool_value(&average, config, 0.0, 1.0)?;
    let criteria = Criterion::ALL
        .iter()
        .map(|&c| allocate_all(&miners, &pools, c, config))
        .collect::<Result<_>>()?;
    Ok(NetworkReport {
        notes: vec![
            "pool difficulty reductions equalize the average miner's optimal dividend value with its solo value".into(),
            "mv_frontier: each miner targets variance rate beta * (solo variance rate), clamped to its feasible interval".into(),
            "hhi and nakamoto are concentration summaries of the shares".into(),
        ],
        config: config.clone(),
        average_miner: average,
        target_value,
        pools,
        miners,
        criteria,
    })
}
