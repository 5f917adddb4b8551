//! Monte Carlo simulation of the surplus process, used as an independent
//! check of the analytic ruin, moment and dividend formulas.
//!
//! Paths are simulated exactly: between rewards the surplus falls linearly,
//! so the ruin time is found without a time grid. Path `i` draws from its own
//! ChaCha stream (`seed`, stream `i`), and results are reduced in path order,
//! so estimates do not depend on the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CompoundPoissonModel;
use crate::scale::CompensatedSum;

/// Discount truncation: paths stop once `e^{-q t}` drops below this.
pub const DISCOUNT_TRUNCATION: f64 = 1e-8;
const RUIN_HORIZON_PHI_MULTIPLE: f64 = 50.0;
const RUIN_HORIZON_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Simulation horizon; `None` picks the per-estimator default.
    #[serde(default)]
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Pair each path with its mirror `u -> 1 - u`. An odd path count is
    /// rounded up to whole pairs.
    #[serde(default)]
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        SimConfig {
            n_paths,
            horizon: None,
            seed,
            antithetic: false,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("horizon must be positive and finite (got {h})")));
            }
        }
        Ok(())
    }

    fn units(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl Estimate {
    /// `(mean - reference) / std_error`; infinite when the error is zero and
    /// the mean misses.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub mean_std_error: f64,
    pub variance: f64,
    pub variance_std_error: f64,
    pub n_paths: usize,
}

/// Uniform draws in `(0, 1)`, optionally mirrored.
struct Uniforms {
    rng: ChaCha8Rng,
    mirror: bool,
}

impl Uniforms {
    fn new(seed: u64, stream: u64, mirror: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Uniforms { rng, mirror }
    }

    fn next(&mut self) -> f64 {
        let u = ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        if self.mirror {
            1.0 - u
        } else {
            u
        }
    }
}

/// Inter-arrival times and reward sizes of one model.
struct Sampler {
    intensity: f64,
    drift: f64,
    jumps: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(model: &CompoundPoissonModel) -> Self {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(model.atoms().len());
        for a in model.atoms() {
            acc += a.prob;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("model has atoms") = 1.0;
        Sampler {
            intensity: model.total_intensity(),
            drift: model.drift(),
            jumps: model.atoms().iter().map(|a| a.jump).collect(),
            cumulative,
        }
    }

    fn wait(&self, u: &mut Uniforms) -> f64 {
        -u.next().ln() / self.intensity
    }

    fn jump(&self, u: &mut Uniforms) -> f64 {
        if self.jumps.len() == 1 {
            // keep the draw count identical across models
            u.next();
            return self.jumps[0];
        }
        let v = u.next();
        let k = self.cumulative.partition_point(|&c| c < v);
        self.jumps[k.min(self.jumps.len() - 1)]
    }
}

/// One value per path, in path order; a mirrored path follows its partner.
fn run_paths<F>(config: &SimConfig, path: F) -> Vec<f64>
where
    F: Fn(&mut Uniforms) -> f64 + Sync,
{
    let per_unit: Vec<[f64; 2]> = (0..config.units() as u64)
        .into_par_iter()
        .map(|i| {
            let a = path(&mut Uniforms::new(config.seed, i, false));
            let b = if config.antithetic {
                path(&mut Uniforms::new(config.seed, i, true))
            } else {
                f64::NAN
            };
            [a, b]
        })
        .collect();
    if config.antithetic {
        per_unit.into_iter().flatten().collect()
    } else {
        per_unit.into_iter().map(|[a, _]| a).collect()
    }
}

/// Independent sampling units: single paths, or path pairs averaged.
fn unit_values(values: &[f64], antithetic: bool) -> Vec<f64> {
    if antithetic {
        values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        values.to_vec()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Mean of the units and the standard error of that mean.
fn mean_and_error(units: &[f64]) -> (f64, f64) {
    let n = units.len();
    let m = mean(units);
    if n < 2 {
        return (m, 0.0);
    }
    let ss: CompensatedSum = units.iter().map(|v| (v - m) * (v - m)).collect();
    (m, (ss.value() / (n - 1) as f64 / n as f64).sqrt())
}

fn estimate(values: &[f64], antithetic: bool) -> Estimate {
    let (mean, std_error) = mean_and_error(&unit_values(values, antithetic));
    Estimate {
        mean,
        std_error,
        n_paths: values.len(),
    }
}

fn check_wealth(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("wealth must be finite (got {x})")))
    }
}

/// Discounted dividends paid under the barrier strategy at `a`, until ruin
/// or the horizon (default `-ln(1e-8)/q`).
///
/// Wealth above `a` is paid at once; afterwards each reward that lifts the
/// surplus above `a` pays the overshoot.
pub fn simulate_dividends(
    model: &CompoundPoissonModel,
    x: f64,
    a: f64,
    q: f64,
    config: &SimConfig,
) -> Result<Estimate> {
    config.validate()?;
    check_wealth(x)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::NonPositiveDiscount(q));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("barrier must be finite and >= 0 (got {a})")));
    }
    let horizon = config.horizon.unwrap_or(-DISCOUNT_TRUNCATION.ln() / q);
    let sampler = Sampler::new(model);
    let values = run_paths(config, |u| {
        if x < 0.0 {
            return 0.0;
        }
        let mut paid = CompensatedSum::default();
        let mut surplus = x;
        if surplus > a {
            paid.add(surplus - a);
            surplus = a;
        }
        let mut t = 0.0;
        loop {
            let wait = sampler.wait(u);
            // the surplus reaches zero before the next reward
            if wait * sampler.drift >= surplus || t + wait > horizon {
                break;
            }
            t += wait;
            surplus += sampler.jump(u) - wait * sampler.drift;
            if surplus > a {
                paid.add((surplus - a) * (-q * t).exp());
                surplus = a;
            }
        }
        paid.value()
    });
    Ok(estimate(&values, config.antithetic))
}

/// Default ruin horizon: `50/φ(0)`, capped at `1e6`.
pub fn default_ruin_horizon(model: &CompoundPoissonModel) -> f64 {
    let phi0 = model.phi(0.0).unwrap_or(0.0);
    if phi0 > 0.0 {
        (RUIN_HORIZON_PHI_MULTIPLE / phi0).min(RUIN_HORIZON_CAP)
    } else {
        RUIN_HORIZON_CAP
    }
}

/// Fraction of paths whose surplus becomes negative before the horizon.
pub fn simulate_ruin(model: &CompoundPoissonModel, x: f64, config: &SimConfig) -> Result<Estimate> {
    config.validate()?;
    check_wealth(x)?;
    let horizon = config.horizon.unwrap_or_else(|| default_ruin_horizon(model));
    let sampler = Sampler::new(model);
    let values = run_paths(config, |u| {
        if x <= 0.0 {
            return 1.0;
        }
        let mut surplus = x;
        let mut t = 0.0;
        loop {
            let wait = sampler.wait(u);
            let ruin_at = t + surplus / sampler.drift;
            if ruin_at <= t + wait {
                return if ruin_at <= horizon { 1.0 } else { 0.0 };
            }
            if t + wait > horizon {
                return 0.0;
            }
            t += wait;
            surplus += sampler.jump(u) - wait * sampler.drift;
        }
    });
    Ok(estimate(&values, config.antithetic))
}

/// Sample mean and variance of the unstopped surplus `X_t`.
pub fn simulate_moments(model: &CompoundPoissonModel, x: f64, t: f64, config: &SimConfig) -> Result<MomentEstimate> {
    config.validate()?;
    check_wealth(x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time must be finite and >= 0 (got {t})")));
    }
    let sampler = Sampler::new(model);
    let values = run_paths(config, |u| {
        let mut rewards = CompensatedSum::default();
        let mut clock = 0.0;
        loop {
            clock += sampler.wait(u);
            if clock > t {
                break;
            }
            rewards.add(sampler.jump(u));
        }
        x - sampler.drift * t + rewards.value()
    });
    let n = values.len();
    let (mean, mean_std_error) = mean_and_error(&unit_values(&values, config.antithetic));
    let m = self::mean(&values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    let (avg_sq, sq_error) = mean_and_error(&unit_values(&sq, config.antithetic));
    let bessel = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    Ok(MomentEstimate {
        mean,
        mean_std_error,
        variance: avg_sq * bessel,
        variance_std_error: sq_error * bessel,
        n_paths: n,
    })
}
