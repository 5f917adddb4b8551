//! Monte Carlo cross-checks of the analytic ruin, moment and dividend
//! formulas on the reference solo miner and a two-destination mix.

use serde::{Deserialize, Serialize};

use crate::dividends::{optimal_barrier, value_function};
use crate::error::Result;
use crate::mc::{simulate_dividends, simulate_moments, simulate_ruin, SimConfig};
use crate::mean_variance::{expected_wealth, wealth_variance};
use crate::model::{build_model, pool_terms, Allocation, CompoundPoissonModel, MinerProfile, PoolOffer};
use crate::scale::ScaleEvaluator;

pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;

const BLOCK_RATE: f64 = 6.0;
const BLOCK_REWARD: f64 = 3.125;
const COST_RATE: f64 = 14.42;
const WEALTH: f64 = 3.939;
const DISCOUNT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    pub fn paths(self) -> usize {
        match self {
            Level::Quick => 10_000,
            Level::Full => 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub analytic: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub level: Level,
    pub n_paths: usize,
    pub seed: u64,
    pub z_threshold: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(name: &str, analytic: f64, estimate: f64, std_error: f64, threshold: f64) -> Check {
    let diff = estimate - analytic;
    let z = if diff == 0.0 { 0.0 } else { diff / std_error };
    Check {
        name: name.to_string(),
        analytic,
        estimate,
        std_error,
        z,
        pass: z.abs() <= threshold,
    }
}

fn dividend_check(name: &str, model: CompoundPoissonModel, cfg: &SimConfig, threshold: f64) -> Result<Check> {
    let ev = ScaleEvaluator::new(model, DISCOUNT)?;
    let a = optimal_barrier(&ev)?;
    let v = value_function(&ev, WEALTH, a)?;
    let mc = simulate_dividends(ev.model(), WEALTH, a, DISCOUNT, cfg)?;
    Ok(check(name, v, mc.mean, mc.std_error, threshold))
}

/// Runs every check with `level.paths()` paths each; a check passes when
/// its z-score is at most `z_threshold` in absolute value.
pub fn run_validation(level: Level, seed: u64, z_threshold: f64) -> Result<ValidationReport> {
    let n_paths = level.paths();
    let cfg = SimConfig::new(n_paths, seed);
    let solo = CompoundPoissonModel::single(BLOCK_RATE, BLOCK_REWARD, COST_RATE)?;
    let mut checks = Vec::new();

    let ruin = simulate_ruin(&solo, WEALTH, &cfg)?;
    checks.push(check(
        "ruin_probability",
        solo.ruin_probability(WEALTH),
        ruin.mean,
        ruin.std_error,
        z_threshold,
    ));

    let moments = simulate_moments(&solo, WEALTH, 1.0, &cfg)?;
    checks.push(check(
        "wealth_mean",
        expected_wealth(&solo, WEALTH, 1.0),
        moments.mean,
        moments.mean_std_error,
        z_threshold,
    ));
    checks.push(check(
        "wealth_variance",
        wealth_variance(&solo, 1.0),
        moments.variance,
        moments.variance_std_error,
        z_threshold,
    ));

    checks.push(dividend_check("dividends_solo", solo, &cfg, z_threshold)?);

    let miner = MinerProfile::new(BLOCK_RATE, COST_RATE, WEALTH)?;
    let pools = [
        pool_terms(PoolOffer::solo(), BLOCK_RATE, BLOCK_REWARD)?,
        pool_terms(PoolOffer::new(0.01, 0.85)?, BLOCK_RATE, BLOCK_REWARD)?,
    ];
    let mix = build_model(&miner, &pools, &Allocation::new(vec![0.5, 0.5])?)?;
    checks.push(dividend_check("dividends_mix", mix, &cfg, z_threshold)?);

    Ok(ValidationReport {
        level,
        n_paths,
        seed,
        z_threshold,
        checks,
    })
}
