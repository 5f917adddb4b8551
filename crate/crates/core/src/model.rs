//! Miner, pool and surplus-process types together with the analytic
//! backbone of the compound-Poisson surplus: Laplace exponent, its
//! right-inverse and the ruin probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambert::lambert_w0;

const PHI_TOL: f64 = 1e-12;
const PHI_MAX_ITER: usize = 200;
const SIMPLEX_TOL: f64 = 1e-12;

fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite (got {value})")))
    }
}

/// A miner's block-finding intensity, operational cost and preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerProfile {
    /// Blocks per unit time.
    pub block_rate: f64,
    /// Currency per unit time.
    pub cost_rate: f64,
    pub initial_wealth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_aversion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ruin_prob: Option<f64>,
}

impl MinerProfile {
    pub fn new(block_rate: f64, cost_rate: f64, initial_wealth: f64) -> Result<Self> {
        let miner = MinerProfile {
            block_rate,
            cost_rate,
            initial_wealth,
            risk_aversion: None,
            target_ruin_prob: None,
        };
        miner.validate()?;
        Ok(miner)
    }

    pub fn with_risk_aversion(mut self, gamma: f64) -> Result<Self> {
        self.risk_aversion = Some(gamma);
        self.validate()?;
        Ok(self)
    }

    pub fn with_target_ruin_prob(mut self, beta: f64) -> Result<Self> {
        self.target_ruin_prob = Some(beta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("block_rate", self.block_rate)?;
        check_finite("cost_rate", self.cost_rate)?;
        check_finite("initial_wealth", self.initial_wealth)?;
        if self.block_rate <= 0.0 {
            return Err(Error::invalid("block_rate must be positive"));
        }
        if self.cost_rate <= 0.0 {
            return Err(Error::invalid("cost_rate must be positive"));
        }
        if self.initial_wealth < 0.0 {
            return Err(Error::invalid("initial_wealth must be nonnegative"));
        }
        if let Some(gamma) = self.risk_aversion {
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::invalid(format!("risk_aversion must be >= 0 (got {gamma})")));
            }
        }
        if let Some(beta) = self.target_ruin_prob {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid(format!(
                    "target_ruin_prob must lie in (0, 1) (got {beta})"
                )));
            }
        }
        Ok(())
    }
}

/// A Pay-per-Share contract: manager fee and share difficulty reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolOffer {
    pub fee: f64,
    pub difficulty_reduction: f64,
}

impl PoolOffer {
    pub fn new(fee: f64, difficulty_reduction: f64) -> Result<Self> {
        let offer = PoolOffer {
            fee,
            difficulty_reduction,
        };
        offer.validate()?;
        Ok(offer)
    }

    /// Mining alone: no fee, shares are blocks.
    pub fn solo() -> Self {
        PoolOffer {
            fee: 0.0,
            difficulty_reduction: 1.0,
        }
    }

    pub fn is_solo(&self) -> bool {
        self.fee == 0.0 && self.difficulty_reduction == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fee >= 0.0 && self.fee < 1.0) {
            return Err(Error::invalid(format!("fee must lie in [0, 1) (got {})", self.fee)));
        }
        let d = self.difficulty_reduction;
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::invalid(format!(
                "difficulty_reduction must lie in (0, 1] (got {d})"
            )));
        }
        Ok(())
    }
}

/// Share rate and per-share reward a pool offers one particular miner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolTerms {
    pub share_rate: f64,
    pub share_reward: f64,
}

impl PoolTerms {
    pub fn new(share_rate: f64, share_reward: f64) -> Result<Self> {
        let terms = PoolTerms {
            share_rate,
            share_reward,
        };
        terms.validate()?;
        Ok(terms)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.share_rate > 0.0 && self.share_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "share_rate must be positive (got {})",
                self.share_rate
            )));
        }
        if !(self.share_reward > 0.0 && self.share_reward.is_finite()) {
            return Err(Error::invalid(format!(
                "share_reward must be positive (got {})",
                self.share_reward
            )));
        }
        Ok(())
    }

    /// Expected reward per unit time, `λ_k b_k`.
    pub fn mean_rate(&self) -> f64 {
        self.share_rate * self.share_reward
    }

    /// Reward variance per unit time, `λ_k b_k²`.
    pub fn variance_rate(&self) -> f64 {
        self.share_rate * self.share_reward * self.share_reward
    }
}

/// Converts a PPS offer into the terms seen by a miner with block rate
/// `miner_block_rate`: share rate `λ/δ`, share reward `δ b (1 - f)`.
pub fn pool_terms(offer: PoolOffer, miner_block_rate: f64, block_reward: f64) -> Result<PoolTerms> {
    offer.validate()?;
    if !(miner_block_rate > 0.0 && miner_block_rate.is_finite()) {
        return Err(Error::invalid("miner block rate must be positive"));
    }
    if !(block_reward > 0.0 && block_reward.is_finite()) {
        return Err(Error::invalid("block reward must be positive"));
    }
    let delta = offer.difficulty_reduction;
    PoolTerms::new(miner_block_rate / delta, delta * block_reward * (1.0 - offer.fee))
}

/// Checks the pool ordering convention: share rates nondecreasing and share
/// rewards nonincreasing along the list (solo first).
///
/// Equal neighbours are accepted so that duplicated pools can be offered.
pub fn validate_pool_order(pools: &[PoolTerms]) -> Result<()> {
    if pools.is_empty() {
        return Err(Error::invalid("at least one pool is required"));
    }
    for terms in pools {
        terms.validate()?;
    }
    for (k, pair) in pools.windows(2).enumerate() {
        if pair[1].share_rate < pair[0].share_rate || pair[1].share_reward > pair[0].share_reward {
            return Err(Error::invalid(format!(
                "pools must be sorted by ascending share rate and descending share reward; \
                 pool {} ({}, {}) breaks the order after pool {} ({}, {})",
                k + 1,
                pair[1].share_rate,
                pair[1].share_reward,
                k,
                pair[0].share_rate,
                pair[0].share_reward
            )));
        }
    }
    Ok(())
}

/// Distribution of hashpower over pools; index 0 is solo mining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Allocation {
    weights: Vec<f64>,
}

impl Allocation {
    /// Renormalizes `weights` onto the unit simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("allocation needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("allocation weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("allocation weights are all zero"));
        }
        let mut weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let drift: f64 = weights.iter().sum::<f64>() - 1.0;
        if drift.abs() > SIMPLEX_TOL {
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Allocation { weights })
    }

    /// All hashpower on pool `k` out of `len` destinations.
    pub fn vertex(len: usize, k: usize) -> Self {
        assert!(k < len, "vertex index {k} out of range for {len} pools");
        let mut weights = vec![0.0; len];
        weights[k] = 1.0;
        Allocation { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

impl TryFrom<Vec<f64>> for Allocation {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Allocation::new(weights)
    }
}

impl From<Allocation> for Vec<f64> {
    fn from(a: Allocation) -> Self {
        a.weights
    }
}

/// One reward size and the probability that a reward has that size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    pub jump: f64,
}

/// Surplus `X_t = x - c t + Σ B_i` with Poisson(μ) arrivals and a finite
/// discrete jump law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompoundPoissonModel {
    drift: f64,
    total_intensity: f64,
    atoms: Vec<Atom>,
    min_jump: f64,
}

impl CompoundPoissonModel {
    /// Builds a model, dropping zero-probability atoms and merging atoms of
    /// equal size. Atoms are stored by descending jump size.
    pub fn new(drift: f64, total_intensity: f64, atoms: Vec<Atom>) -> Result<Self> {
        check_finite("drift", drift)?;
        if drift <= 0.0 {
            return Err(Error::invalid("drift (cost rate) must be positive"));
        }
        if !(total_intensity > 0.0 && total_intensity.is_finite()) {
            return Err(Error::invalid("total intensity must be positive"));
        }
        if atoms
            .iter()
            .any(|a| !(a.prob >= 0.0) || !a.prob.is_finite() || !(a.jump > 0.0) || !a.jump.is_finite())
        {
            return Err(Error::invalid(
                "atoms need nonnegative probabilities and positive jump sizes",
            ));
        }
        let mut active: Vec<Atom> = atoms.into_iter().filter(|a| a.prob > 0.0).collect();
        if active.is_empty() {
            return Err(Error::invalid("model has no atom with positive probability"));
        }
        active.sort_by(|x, y| y.jump.total_cmp(&x.jump));
        let mut merged: Vec<Atom> = Vec::with_capacity(active.len());
        for atom in active {
            match merged.last_mut() {
                Some(last) if last.jump == atom.jump => last.prob += atom.prob,
                _ => merged.push(atom),
            }
        }
        let total: f64 = merged.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("atom probabilities sum to {total}, not 1")));
        }
        merged.iter_mut().for_each(|a| a.prob /= total);
        let min_jump = merged.last().map(|a| a.jump).unwrap_or(f64::NAN);
        Ok(CompoundPoissonModel {
            drift,
            total_intensity,
            atoms: merged,
            min_jump,
        })
    }

    /// Single reward size: solo mining or mining in one pool.
    pub fn single(rate: f64, reward: f64, cost_rate: f64) -> Result<Self> {
        Self::new(
            cost_rate,
            rate,
            vec![Atom {
                prob: 1.0,
                jump: reward,
            }],
        )
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Smallest active jump size `b*`.
    pub fn min_jump(&self) -> f64 {
        self.min_jump
    }

    /// Expected reward per unit time, `μ Σ p_k b_k`.
    pub fn reward_rate(&self) -> f64 {
        self.total_intensity * self.atoms.iter().map(|a| a.prob * a.jump).sum::<f64>()
    }

    /// `μ Σ p_k b_k²`.
    pub fn reward_variance_rate(&self) -> f64 {
        self.total_intensity * self.atoms.iter().map(|a| a.prob * a.jump * a.jump).sum::<f64>()
    }

    /// `ψ(θ) = cθ + μ(Σ p_k e^{-b_k θ} - 1)`; exactly zero at θ = 0.
    pub fn laplace_exponent(&self, theta: f64) -> f64 {
        let jumps: f64 = self.atoms.iter().map(|a| a.prob * (-a.jump * theta).exp_m1()).sum();
        self.drift * theta + self.total_intensity * jumps
    }

    fn laplace_exponent_derivative(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .atoms
            .iter()
            .map(|a| a.prob * a.jump * (-a.jump * theta).exp())
            .sum();
        self.drift - self.total_intensity * jumps
    }

    /// `ψ'(0) = c - μ Σ p_k b_k`; negative iff the net profit condition holds.
    pub fn psi_prime_zero(&self) -> f64 {
        self.drift - self.reward_rate()
    }

    /// Expected rewards strictly exceed costs.
    pub fn net_profit_condition(&self) -> bool {
        self.reward_rate() > self.drift
    }

    /// Largest nonnegative root of `ψ(θ) = q`, by bisection.
    pub fn phi(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::invalid(format!("discount rate must be >= 0 (got {q})")));
        }
        Ok(self.phi_unchecked(q))
    }

    pub(crate) fn phi_unchecked(&self, q: f64) -> f64 {
        let lower = if self.psi_prime_zero() >= 0.0 {
            if q == 0.0 {
                return 0.0;
            }
            0.0
        } else {
            self.argmin_psi()
        };
        let mut lo = lower;
        let mut hi = (self.total_intensity + q) / self.drift + 1.0;
        for _ in 0..PHI_MAX_ITER {
            if hi - lo <= PHI_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.laplace_exponent(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    // ψ is convex; locate the zero of ψ' when ψ'(0) < 0.
    fn argmin_psi(&self) -> f64 {
        let mut lo = 0.0;
        let mut hi = 1.0 / self.min_jump;
        while self.laplace_exponent_derivative(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..PHI_MAX_ITER {
            if hi - lo <= PHI_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.laplace_exponent_derivative(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Probability of eventual ruin from wealth `x`: `exp(-φ(0) x)`.
    pub fn ruin_probability(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        (-self.phi_unchecked(0.0) * x).exp()
    }

    /// Initial wealth whose ruin probability equals `beta`: `-ln β / φ(0)`.
    pub fn initial_wealth_for_ruin(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!(
                "ruin probability must lie in (0, 1) (got {beta})"
            )));
        }
        let phi0 = self.phi_unchecked(0.0);
        if phi0 <= 0.0 {
            return Err(Error::RuinCertain);
        }
        Ok(-beta.ln() / phi0)
    }
}

/// `φ(q)` for a single reward size through the principal Lambert-W branch:
/// `φ(q) = (q + λ)/c + W0(-(λb/c) e^{-(q+λ)b/c}) / b`.
///
/// The argument lies in `[-1/e, 0)`; the principal branch returns the
/// largest root of `ψ(θ) = q`, the other real branch the smaller one.
pub fn phi_solo_lambertw(rate: f64, reward: f64, cost_rate: f64, q: f64) -> Result<f64> {
    if !(rate > 0.0 && reward > 0.0 && cost_rate > 0.0) {
        return Err(Error::invalid("rate, reward and cost rate must be positive"));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::invalid(format!("discount rate must be >= 0 (got {q})")));
    }
    let s = (q + rate) / cost_rate;
    let z = -(rate * reward / cost_rate) * (-s * reward).exp();
    let w = lambert_w0(z).ok_or_else(|| Error::invalid(format!("Lambert-W argument {z} below -1/e")))?;
    Ok((s + w / reward).max(0.0))
}

/// Assembles the surplus process of a miner splitting hashpower according
/// to `allocation`: intensities `μ_k = λ_k w_k`, atoms `(μ_k/μ, b_k)`.
pub fn build_model(miner: &MinerProfile, pools: &[PoolTerms], allocation: &Allocation) -> Result<CompoundPoissonModel> {
    miner.validate()?;
    if pools.len() != allocation.len() {
        return Err(Error::invalid(format!(
            "{} pools but {} allocation weights",
            pools.len(),
            allocation.len()
        )));
    }
    let rates: Vec<f64> = pools
        .iter()
        .zip(allocation.weights())
        .map(|(p, w)| p.share_rate * w)
        .collect();
    let mu: f64 = rates.iter().sum();
    if mu <= 0.0 {
        return Err(Error::invalid("allocation puts no weight on any pool"));
    }
    let atoms = pools
        .iter()
        .zip(&rates)
        .map(|(p, r)| Atom {
            prob: r / mu,
            jump: p.share_reward,
        })
        .collect();
    CompoundPoissonModel::new(miner.cost_rate, mu, atoms)
}
