//! Monte Carlo experiments on the scoring rule's theoretical properties.
//!
//! Draws are reproducible: uniforms come from a counter-based generator
//! keyed by `(seed, draw, location)` and are pushed through each marginal's
//! quantile function. Paired differences are reduced by pairwise summation
//! in index order.

use serde::Serialize;

use crate::alloc::{
    allocation_loss, expected_allocation_loss, oracle_loss, solve_allocation, Allocation, LossParams, MultiForecast,
    Outcome, SolverConfig,
};
use crate::dist::{MarginalDistribution, ProbLevel, QuantileSet, TailFamily, HUB_LEVELS};
use crate::scalar::{pairwise_sum, Scalar};
use crate::score::ScoreError;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in the open interval (0, 1) for a given `(seed, draw, location)`.
pub fn counter_uniform(seed: u64, draw: u64, location: u64) -> f64 {
    let h = mix64(mix64(mix64(seed) ^ draw) ^ location.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One joint draw of need from `forecast`; marginals are sampled independently.
pub fn sample_outcome<T: Scalar>(forecast: &MultiForecast<T>, seed: u64, draw: u64) -> Result<Outcome<T>, ScoreError> {
    let values = forecast
        .marginals()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let u = ProbLevel::new(T::lit(counter_uniform(seed, draw, i as u64)))
                .map_err(crate::alloc::AllocError::from)?;
            Ok(d.quantile(u).map_err(crate::alloc::AllocError::from)?.max(T::zero()))
        })
        .collect::<Result<Vec<T>, ScoreError>>()?;
    Ok(Outcome::new(values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated,
}

/// Paired comparison of the forecast generating the data against a competitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProprietyResult<T> {
    pub mean_self: T,
    pub mean_other: T,
    /// Standard error of the per-draw paired difference.
    pub se: T,
    pub n_draws: usize,
    pub seed: u64,
    pub verdict: Verdict,
}

struct PairedStats<T> {
    mean_a: T,
    mean_b: T,
    se: T,
}

fn paired<T: Scalar>(a: &[T], b: &[T]) -> PairedStats<T> {
    let n = T::lit(a.len() as f64);
    let diffs: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean_d = pairwise_sum(&diffs) / n;
    let sq: Vec<T> = diffs.iter().map(|&d| (d - mean_d) * (d - mean_d)).collect();
    let var = if a.len() > 1 { pairwise_sum(&sq) / (n - T::one()) } else { T::zero() };
    PairedStats { mean_a: pairwise_sum(a) / n, mean_b: pairwise_sum(b) / n, se: (var / n).sqrt() }
}

fn scores_under<T: Scalar>(
    truth: &MultiForecast<T>,
    allocations: &[&Allocation<T>],
    constraint: T,
    n: usize,
    seed: u64,
    loss: LossParams<T>,
) -> Result<Vec<Vec<T>>, ScoreError> {
    let mut out = vec![Vec::with_capacity(n); allocations.len()];
    for draw in 0..n {
        let y = sample_outcome(truth, seed, draw as u64)?;
        let oracle = oracle_loss(&y, constraint, loss);
        for (col, x) in out.iter_mut().zip(allocations) {
            col.push((allocation_loss(x, &y, loss)? - oracle).max(T::zero()));
        }
    }
    Ok(out)
}

fn check_draws(n: usize) -> Result<(), ScoreError> {
    if n == 0 {
        return Err(crate::alloc::AllocError::InvalidInput("at least one draw is required".into()).into());
    }
    Ok(())
}

/// Estimates `E_F[S(F, Y)]` and `E_F[S(G, Y)]` from `n` common draws `Y ~ F`.
///
/// The verdict is consistent with propriety when the self score is no worse
/// than the competitor's plus three standard errors of the paired difference.
pub fn mc_propriety<T: Scalar>(
    truth: &MultiForecast<T>,
    other: &MultiForecast<T>,
    constraint: T,
    n: usize,
    seed: u64,
    loss: LossParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<ProprietyResult<T>, ScoreError> {
    check_draws(n)?;
    if truth.len() != other.len() {
        return Err(ScoreError::DimensionMismatch { expected: truth.len(), got: other.len() });
    }
    let x_self = solve_allocation(truth, constraint, cfg)?;
    let x_other = solve_allocation(other, constraint, cfg)?;
    let cols = scores_under(truth, &[&x_self, &x_other], constraint, n, seed, loss)?;
    let stats = paired(&cols[0], &cols[1]);
    let verdict =
        if stats.mean_a <= stats.mean_b + T::lit(3.0) * stats.se { Verdict::Consistent } else { Verdict::Violated };
    Ok(ProprietyResult { mean_self: stats.mean_a, mean_other: stats.mean_b, se: stats.se, n_draws: n, seed, verdict })
}

/// Allocation of `F` compared with the allocation of the distribution rebuilt
/// from `F`'s quantiles at the hub levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImproprietyReport<T> {
    pub constraint: T,
    pub levels: Vec<T>,
    pub shared_level_true: T,
    pub shared_level_reconstructed: T,
    pub allocation_true: Vec<T>,
    pub allocation_reconstructed: Vec<T>,
    /// Largest per-location absolute difference between the two allocations.
    pub max_allocation_gap: T,
    /// Whether `F`'s shared level lies beyond the outermost supplied level.
    pub level_in_extrapolated_tail: bool,
    /// Monte Carlo mean of `S_A(F, Y)`, `Y ~ F`.
    pub mean_score_true: T,
    /// Monte Carlo mean of `S_A(G, Y)` for the rebuilt `G`, `Y ~ F`.
    pub mean_score_reconstructed: T,
    /// `mean_score_reconstructed - mean_score_true`.
    pub score_gap: T,
    /// Exact `E_F[S_A(G, Y)] - E_F[S_A(F, Y)]` from closed-form expected
    /// shortages; nonnegative because `F`'s allocation is its Bayes act.
    pub expected_score_gap: T,
    pub se: T,
    pub n_draws: usize,
    pub seed: u64,
}

/// Rebuilds each marginal of `truth` from its quantiles at `levels` with
/// normal tails.
pub fn reconstruct_forecast<T: Scalar>(truth: &MultiForecast<T>, levels: &[T]) -> Result<MultiForecast<T>, ScoreError> {
    let marginals = truth
        .marginals()
        .iter()
        .map(|d| {
            let q = QuantileSet::from_distribution(d, levels).map_err(crate::alloc::AllocError::from)?;
            MarginalDistribution::from_quantiles(&q, TailFamily::Normal)
                .map_err(|e| crate::alloc::AllocError::from(e).into())
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(MultiForecast::new(truth.locations().to_vec(), marginals)?)
}

/// Scores `F` against the distribution a post hoc analysis would rebuild
/// from `F`'s 23 hub-level quantiles, under outcomes drawn from `F`.
pub fn posthoc_impropriety_demo<T: Scalar>(
    truth: &MultiForecast<T>,
    constraint: T,
    n: usize,
    seed: u64,
    loss: LossParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<ImproprietyReport<T>, ScoreError> {
    let levels: Vec<T> = HUB_LEVELS.iter().map(|&l| T::lit(l)).collect();
    posthoc_impropriety_at_levels(truth, &levels, constraint, n, seed, loss, cfg)
}

/// [`posthoc_impropriety_demo`] with an explicit level set.
pub fn posthoc_impropriety_at_levels<T: Scalar>(
    truth: &MultiForecast<T>,
    levels: &[T],
    constraint: T,
    n: usize,
    seed: u64,
    loss: LossParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<ImproprietyReport<T>, ScoreError> {
    check_draws(n)?;
    let rebuilt = reconstruct_forecast(truth, levels)?;
    let x_true = solve_allocation(truth, constraint, cfg)?;
    let x_rec = solve_allocation(&rebuilt, constraint, cfg)?;
    let gap = x_true.amounts().iter().zip(x_rec.amounts()).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
    let level = |x: &Allocation<T>| x.shared_level().map(|l| l.value()).unwrap_or_else(T::nan);
    let tau = level(&x_true);
    let (first, last) = (levels[0], levels[levels.len() - 1]);
    let cols = scores_under(truth, &[&x_true, &x_rec], constraint, n, seed, loss)?;
    let stats = paired(&cols[1], &cols[0]);
    let expected_gap = expected_allocation_loss(truth, &x_rec, loss)? - expected_allocation_loss(truth, &x_true, loss)?;
    Ok(ImproprietyReport {
        constraint,
        levels: levels.to_vec(),
        shared_level_true: tau,
        shared_level_reconstructed: level(&x_rec),
        allocation_true: x_true.amounts().to_vec(),
        allocation_reconstructed: x_rec.amounts().to_vec(),
        max_allocation_gap: gap,
        level_in_extrapolated_tail: tau < first || tau > last,
        mean_score_true: stats.mean_b,
        mean_score_reconstructed: stats.mean_a,
        score_gap: stats.mean_a - stats.mean_b,
        expected_score_gap: expected_gap,
        se: stats.se,
        n_draws: n,
        seed,
    })
}
