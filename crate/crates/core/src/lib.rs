//! Hashpower allocation for Proof-of-Work miners across Pay-per-Share pools.
//!
//! The surplus of a miner is a compound-Poisson process drifting down at the
//! operational cost rate. Two families of criteria pick the split of
//! hashpower over pools: mean-variance ([`mean_variance`]) and expected
//! discounted dividends under an optimal barrier ([`dividends`]), the latter
//! built on exact series for the process's scale functions ([`scale`]).
//! [`mc`] is an independent simulator used to check the analytic side and
//! [`network`] runs the decentralization study over a population of miners.

pub mod dividends;
pub mod error;
pub mod lambert;
pub mod mc;
pub mod mean_variance;
pub mod model;
pub mod network;
pub mod scale;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    build_model, phi_solo_lambertw, pool_terms, validate_pool_order, Allocation, Atom, CompoundPoissonModel,
    MinerProfile, PoolOffer, PoolTerms,
};
pub use scale::ScaleEvaluator;
