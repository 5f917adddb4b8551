use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hashpower_core::{pool_terms, CompoundPoissonModel, MinerProfile, PoolOffer, PoolTerms};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerSpec {
    pub block_rate: f64,
    pub cost_rate: f64,
    /// Falls back to the wealth matching `target_ruin_prob` when mining solo.
    #[serde(default)]
    pub initial_wealth: Option<f64>,
    #[serde(default)]
    pub target_ruin_prob: Option<f64>,
    #[serde(default)]
    pub risk_aversion: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfferSpec {
    pub fee: f64,
    pub difficulty_reduction: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermsSpec {
    pub share_rate: f64,
    pub share_reward: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoolSpec {
    Offer(OfferSpec),
    Terms(TermsSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub miner: MinerSpec,
    pub block_reward: f64,
    #[serde(default)]
    pub pools: Vec<PoolSpec>,
    #[serde(default)]
    pub q: Option<f64>,
    /// Do not prepend solo mining to `pools`.
    #[serde(default)]
    pub no_solo: bool,
}

/// One destination as offered, for tables.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Destination {
    pub terms: PoolTerms,
    pub fee: Option<f64>,
    pub difficulty_reduction: Option<f64>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))
    }

    pub fn destinations(&self) -> Result<Vec<Destination>> {
        let mut specs = Vec::with_capacity(self.pools.len() + 1);
        if !self.no_solo {
            specs.push(PoolSpec::Offer(OfferSpec {
                fee: 0.0,
                difficulty_reduction: 1.0,
            }));
        }
        specs.extend_from_slice(&self.pools);
        if specs.is_empty() {
            bail!("scenario has no pools and solo mining is disabled");
        }
        specs
            .iter()
            .map(|spec| {
                Ok(match *spec {
                    PoolSpec::Offer(o) => Destination {
                        terms: pool_terms(
                            PoolOffer::new(o.fee, o.difficulty_reduction)?,
                            self.miner.block_rate,
                            self.block_reward,
                        )?,
                        fee: Some(o.fee),
                        difficulty_reduction: Some(o.difficulty_reduction),
                    },
                    PoolSpec::Terms(t) => Destination {
                        terms: PoolTerms::new(t.share_rate, t.share_reward)?,
                        fee: None,
                        difficulty_reduction: None,
                    },
                })
            })
            .collect()
    }

    pub fn terms(&self) -> Result<Vec<PoolTerms>> {
        Ok(self.destinations()?.into_iter().map(|d| d.terms).collect())
    }

    pub fn solo_model(&self) -> Result<CompoundPoissonModel> {
        Ok(CompoundPoissonModel::single(
            self.miner.block_rate,
            self.block_reward,
            self.miner.cost_rate,
        )?)
    }

    /// `override_x`, else the stated wealth, else the solo wealth for the
    /// target ruin probability.
    pub fn wealth(&self, override_x: Option<f64>) -> Result<f64> {
        if let Some(x) = override_x.or(self.miner.initial_wealth) {
            return Ok(x);
        }
        match self.miner.target_ruin_prob {
            Some(beta) => Ok(self.solo_model()?.initial_wealth_for_ruin(beta)?),
            None => bail!("no wealth given: pass --x or set initial_wealth or target_ruin_prob"),
        }
    }

    pub fn discount(&self, override_q: Option<f64>) -> Result<f64> {
        match override_q.or(self.q) {
            Some(q) => Ok(q),
            None => bail!("no discount rate given: pass --q or set q in the scenario"),
        }
    }

    pub fn miner(&self, override_x: Option<f64>) -> Result<MinerProfile> {
        let mut m = MinerProfile::new(self.miner.block_rate, self.miner.cost_rate, self.wealth(override_x)?)?;
        m.risk_aversion = self.miner.risk_aversion;
        m.target_ruin_prob = self.miner.target_ruin_prob;
        m.validate()?;
        Ok(m)
    }
}
