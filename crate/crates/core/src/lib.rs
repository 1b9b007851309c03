//! Allocation scores for multivariate probabilistic forecasts of resource need.
//!
//! A forecast is a set of marginal distributions, one per location. Given a
//! fixed supply `K`, the forecast's Bayes act allocates each location its
//! quantile at a common level. The allocation score is the loss of that act
//! on the realized need minus the loss of the best allocation in hindsight.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64` for everyday use.
//!
//! ```
//! use allocscore::{allocation_score, Forecast, Marginal, Outcome, LossParams, SolverConfig};
//!
//! let f = Forecast::unlabeled(vec![
//!     Marginal::exponential(1.0).unwrap(),
//!     Marginal::exponential(4.0).unwrap(),
//! ])
//! .unwrap();
//! let y = Outcome::new(vec![0.0, 6.0]).unwrap();
//! let r = allocation_score(&f, &y, 5.0, LossParams::default(), &SolverConfig::default()).unwrap();
//! assert!((r.allocation_score - 1.0).abs() < 1e-9);
//! ```

// Validation is written as `!(x > 0)` so that NaN fails it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod dist;
pub mod lab;
pub mod scalar;
pub mod score;
pub mod special;

pub use alloc::{
    allocation_loss, expected_allocation_loss, oracle_loss, solve_allocation, AllocError, Allocation, LossParams,
    MultiForecast, Outcome, SolverConfig,
};
pub use dist::{DistError, MarginalDistribution, PointMass, ProbLevel, QuantileSet, TailFamily, HUB_LEVELS};
pub use lab::{mc_propriety, posthoc_impropriety_demo, ImproprietyReport, ProprietyResult, Verdict};
pub use scalar::Scalar;
pub use score::{
    allocation_score, integrated_allocation_score, mean_wis, quantile_score, score_fixed_allocation,
    standardized_ranks, wis, wis_decomposition, LocationRecord, RankEntry, RankTable, ScoreError, ScoreReport,
    WeightKind, WeightSpec, WisComponents,
};

pub type Marginal = MarginalDistribution<f64>;
pub type Forecast = MultiForecast<f64>;
pub type Quantiles = QuantileSet<f64>;
pub type Level = ProbLevel<f64>;
pub type Report = ScoreReport<f64>;
pub type Weights = WeightSpec<f64>;
