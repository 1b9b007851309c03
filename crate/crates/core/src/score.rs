//! Allocation scores, integrated allocation scores and quantile-based
//! comparison metrics.

use std::cmp::Ordering;

use thiserror::Error;

use crate::alloc::{
    allocation_loss_terms, oracle_loss, solve_allocation, AllocError, Allocation, LossParams, MultiForecast, Outcome,
    SolverConfig,
};
use crate::dist::{ProbLevel, QuantileSet};
use crate::scalar::Scalar;
use crate::special::norm_pdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("invalid weighting: {0}")]
    InvalidWeight(String),
    #[error("levels do not form symmetric pairs around the median")]
    AsymmetricLevels,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationRecord<T> {
    pub location: String,
    pub allocated: T,
    pub observed: T,
    pub unmet: T,
}

/// Score of one allocation against one outcome at one constraint level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport<T> {
    /// Realized loss `L Σ (y_i - x_i)+`.
    pub raw_score: T,
    pub oracle_loss: T,
    /// `raw_score - oracle_loss`; avoidable loss, zero at best.
    pub allocation_score: T,
    pub shared_level: Option<ProbLevel<T>>,
    pub per_location: Vec<LocationRecord<T>>,
    pub constraint: T,
    pub per_unit_loss: T,
}

fn report<T: Scalar>(
    locations: &[String],
    x: &Allocation<T>,
    y: &Outcome<T>,
    loss: LossParams<T>,
) -> Result<ScoreReport<T>, ScoreError> {
    if locations.len() != x.len() {
        return Err(ScoreError::DimensionMismatch { expected: x.len(), got: locations.len() });
    }
    let terms = allocation_loss_terms(x, y, loss)?;
    let oracle = oracle_loss(y, x.constraint(), loss);
    let mut raw: T = terms.iter().copied().sum();
    // Σ x = K holds only up to rounding, which can put raw a hair below the
    // oracle bound.
    let slack = loss.per_unit_loss() * T::lit(1e-6) * x.constraint();
    if raw < oracle && oracle - raw <= slack {
        raw = oracle;
    }
    let per_location = locations
        .iter()
        .zip(x.amounts())
        .zip(y.values())
        .zip(&terms)
        .map(|(((loc, &a), &o), &t)| LocationRecord {
            location: loc.clone(),
            allocated: a,
            observed: o,
            unmet: t / loss.per_unit_loss(),
        })
        .collect();
    Ok(ScoreReport {
        raw_score: raw,
        oracle_loss: oracle,
        allocation_score: raw - oracle,
        shared_level: x.shared_level(),
        per_location,
        constraint: x.constraint(),
        per_unit_loss: loss.per_unit_loss(),
    })
}

/// Scores the Bayes allocation of `forecast` under constraint `K` against `y`.
pub fn allocation_score<T: Scalar>(
    forecast: &MultiForecast<T>,
    y: &Outcome<T>,
    constraint: T,
    loss: LossParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<ScoreReport<T>, ScoreError> {
    if forecast.len() != y.len() {
        return Err(ScoreError::DimensionMismatch { expected: forecast.len(), got: y.len() });
    }
    let x = solve_allocation(forecast, constraint, cfg)?;
    report(forecast.locations(), &x, y, loss)
}

/// Scores an allocation that was not derived from a forecast, such as a
/// population-proportional benchmark.
pub fn score_fixed_allocation<T: Scalar>(
    locations: &[String],
    x: &Allocation<T>,
    y: &Outcome<T>,
    constraint: T,
    loss: LossParams<T>,
) -> Result<ScoreReport<T>, ScoreError> {
    if (x.constraint() - constraint).abs() > T::lit(1e-6) * constraint {
        return Err(AllocError::InfeasibleAllocation(format!(
            "allocation was built for K = {}, scored at K = {constraint}",
            x.constraint()
        ))
        .into());
    }
    let mut r = report(locations, x, y, loss)?;
    r.shared_level = None;
    Ok(r)
}

/// Distribution of the constraint level `K` for the integrated score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind<T> {
    Uniform { k_min: T, k_max: T },
    TruncNormal { center: T, sd: T, lower: T, upper: T },
    PointMass { k: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec<T> {
    pub kind: WeightKind<T>,
    pub grid_step: T,
}

impl<T: Scalar> WeightSpec<T> {
    pub fn new(kind: WeightKind<T>, grid_step: T) -> Result<Self, ScoreError> {
        let bad = |m: &str| Err(ScoreError::InvalidWeight(m.into()));
        if !(grid_step > T::zero() && grid_step.is_finite()) {
            return bad("grid step must be positive");
        }
        match kind {
            WeightKind::Uniform { k_min, k_max } => {
                if !(k_min > T::zero() && k_min < k_max && k_max.is_finite()) {
                    return bad("uniform weighting needs 0 < k_min < k_max");
                }
            }
            WeightKind::TruncNormal { center, sd, lower, upper } => {
                if !(sd > T::zero() && lower > T::zero() && lower < upper && center.is_finite() && upper.is_finite()) {
                    return bad("truncated normal weighting needs sd > 0 and 0 < lower < upper");
                }
            }
            WeightKind::PointMass { k } => {
                if !(k > T::zero() && k.is_finite()) {
                    return bad("point mass must sit at a positive K");
                }
            }
        }
        Ok(Self { kind, grid_step })
    }

    /// Grid of `(K, weight)` pairs with weights summing to one.
    pub fn grid(&self) -> Vec<(T, T)> {
        let span = |lo: T, hi: T| -> Vec<T> {
            let n = ((hi - lo) / self.grid_step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
            (0..=n).map(|i| lo + self.grid_step * T::lit(i as f64)).collect()
        };
        let (ks, raw): (Vec<T>, Vec<T>) = match self.kind {
            WeightKind::PointMass { k } => (vec![k], vec![T::one()]),
            WeightKind::Uniform { k_min, k_max } => {
                let ks = span(k_min, k_max);
                let w = vec![T::one(); ks.len()];
                (ks, w)
            }
            WeightKind::TruncNormal { center, sd, lower, upper } => {
                let ks = span(lower, upper);
                let w = ks.iter().map(|&k| norm_pdf((k - center) / sd)).collect();
                (ks, w)
            }
        };
        let total: T = raw.iter().copied().sum();
        ks.into_iter().zip(raw).map(|(k, w)| (k, w / total)).collect()
    }
}

/// Weighted average of allocation scores over the constraint grid of `w`.
pub fn integrated_allocation_score<T: Scalar>(
    forecast: &MultiForecast<T>,
    y: &Outcome<T>,
    w: &WeightSpec<T>,
    loss: LossParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<T, ScoreError> {
    if let WeightKind::PointMass { k } = w.kind {
        return Ok(allocation_score(forecast, y, k, loss, cfg)?.allocation_score);
    }
    let mut acc = T::zero();
    for (k, wk) in w.grid() {
        acc = acc + wk * allocation_score(forecast, y, k, loss, cfg)?.allocation_score;
    }
    Ok(acc)
}

/// Pinball loss `2 (1{y <= q} - τ)(q - y)`.
pub fn quantile_score<T: Scalar>(q: T, tau: ProbLevel<T>, y: T) -> T {
    let ind = if y <= q { T::one() } else { T::zero() };
    T::two() * (ind - tau.value()) * (q - y)
}

/// Equal-weight mean of the quantile scores across the supplied levels.
pub fn wis<T: Scalar>(q: &QuantileSet<T>, y: T) -> T {
    let sum: T = q.levels().iter().zip(q.values()).map(|(&l, &v)| quantile_score(v, ProbLevel(l), y)).sum();
    sum / T::lit(q.len() as f64)
}

/// Mean of per-location [`wis`].
pub fn mean_wis<T: Scalar>(forecasts: &[QuantileSet<T>], y: &Outcome<T>) -> Result<T, ScoreError> {
    if forecasts.len() != y.len() {
        return Err(ScoreError::DimensionMismatch { expected: forecasts.len(), got: y.len() });
    }
    if forecasts.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = forecasts.iter().zip(y.values()).map(|(q, &yi)| wis(q, yi)).sum();
    Ok(sum / T::lit(forecasts.len() as f64))
}

/// Split of [`wis`] into interval width and penalties for outcomes outside
/// each interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WisComponents<T> {
    pub dispersion: T,
    /// Penalty for outcomes above the upper interval ends.
    pub underprediction: T,
    /// Penalty for outcomes below the lower interval ends.
    pub overprediction: T,
}

impl<T: Scalar> WisComponents<T> {
    pub fn total(&self) -> T {
        self.dispersion + self.underprediction + self.overprediction
    }
}

/// Decomposes [`wis`] over symmetric level pairs `(α/2, 1 - α/2)` and an
/// optional median. For each pair with quantiles `l <= u` the two quantile
/// scores sum to `α (u - l) + 2 (l - y)+ + 2 (y - u)+`.
pub fn wis_decomposition<T: Scalar>(q: &QuantileSet<T>, y: T) -> Result<WisComponents<T>, ScoreError> {
    let n = q.len();
    let (levels, values) = (q.levels(), q.values());
    let tol = T::lit(1e-9).max(T::lit(8.0) * T::epsilon());
    for k in 0..n.div_ceil(2) {
        if (levels[k] + levels[n - 1 - k] - T::one()).abs() > tol {
            return Err(ScoreError::AsymmetricLevels);
        }
    }
    let mut c = WisComponents { dispersion: T::zero(), underprediction: T::zero(), overprediction: T::zero() };
    for k in 0..n / 2 {
        let alpha = T::two() * levels[k];
        let (l, u) = (values[k], values[n - 1 - k]);
        c.dispersion = c.dispersion + alpha * (u - l);
        c.overprediction = c.overprediction + T::two() * (l - y).max(T::zero());
        c.underprediction = c.underprediction + T::two() * (y - u).max(T::zero());
    }
    if n % 2 == 1 {
        let m = values[n / 2];
        c.overprediction = c.overprediction + (m - y).max(T::zero());
        c.underprediction = c.underprediction + (y - m).max(T::zero());
    }
    let scale = T::lit(n as f64);
    c.dispersion = c.dispersion / scale;
    c.overprediction = c.overprediction / scale;
    c.underprediction = c.underprediction / scale;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry<T> {
    pub model: String,
    pub score: T,
    pub standardized_rank: T,
}

/// Models ordered as supplied, each with its standardized rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable<T> {
    pub entries: Vec<RankEntry<T>>,
}

/// Maps rank `r` (1 best, lower score better) among `M` models to
/// `(M - r) / (M - 1)`; tied models all take the best rank of the tie.
pub fn standardized_ranks<T: Scalar>(scores: &[(String, T)]) -> RankTable<T> {
    let m = scores.len();
    let mut sorted: Vec<T> = scores.iter().map(|(_, s)| *s).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let entries = scores
        .iter()
        .map(|(model, s)| {
            let better = sorted.partition_point(|v| v < s);
            let rank = if m <= 1 { T::one() } else { T::lit((m - 1 - better) as f64) / T::lit((m - 1) as f64) };
            RankEntry { model: model.clone(), score: *s, standardized_rank: rank }
        })
        .collect();
    RankTable { entries }
}
