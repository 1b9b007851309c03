//! Resource allocation under a multivariate need forecast.
//!
//! The expected-loss minimizing allocation of `K` units sends each location
//! its marginal quantile at one shared probability level; [`solve_allocation`]
//! finds that level by bisection on the clamped quantile sum.

use std::collections::HashSet;

use thiserror::Error;

use crate::dist::{DistError, MarginalDistribution, ProbLevel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("dimension mismatch: expected {expected} locations, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("bisection did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("resource constraint {0} exceeds the total attainable allocation")]
    InfeasibleConstraint(f64),
    #[error("allocation is infeasible: {0}")]
    InfeasibleAllocation(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// A forecast of need across an ordered set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiForecast<T> {
    locations: Vec<String>,
    marginals: Vec<MarginalDistribution<T>>,
}

impl<T: Scalar> MultiForecast<T> {
    pub fn new(locations: Vec<String>, marginals: Vec<MarginalDistribution<T>>) -> Result<Self, AllocError> {
        if locations.is_empty() {
            return Err(AllocError::InvalidInput("a forecast needs at least one location".into()));
        }
        if locations.len() != marginals.len() {
            return Err(AllocError::DimensionMismatch { expected: locations.len(), got: marginals.len() });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = locations.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(AllocError::InvalidInput(format!("duplicate location {dup:?}")));
        }
        Ok(Self { locations, marginals })
    }

    /// Builds a forecast with locations named `"1"`, `"2"`, ...
    pub fn unlabeled(marginals: Vec<MarginalDistribution<T>>) -> Result<Self, AllocError> {
        let locations = (1..=marginals.len()).map(|i| i.to_string()).collect();
        Self::new(locations, marginals)
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn marginals(&self) -> &[MarginalDistribution<T>] {
        &self.marginals
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }
}

/// Realized need, aligned with a forecast's locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    values: Vec<T>,
}

impl<T: Scalar> Outcome<T> {
    pub fn new(values: Vec<T>) -> Result<Self, AllocError> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
            return Err(AllocError::InvalidInput(format!("observed need must be finite and nonnegative, got {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }
}

/// Nonnegative amounts per location summing to the constraint `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    amounts: Vec<T>,
    constraint: T,
    shared_level: Option<ProbLevel<T>>,
}

impl<T: Scalar> Allocation<T> {
    /// Validates nonnegativity and `|sum - K| <= 1e-6 K`.
    pub fn new(amounts: Vec<T>, constraint: T) -> Result<Self, AllocError> {
        check_constraint(constraint)?;
        if let Some(a) = amounts.iter().find(|a| !(a.is_finite() && **a >= T::zero())) {
            return Err(AllocError::InfeasibleAllocation(format!("amount {a} is negative or not finite")));
        }
        let total: T = amounts.iter().copied().sum();
        if (total - constraint).abs() > T::lit(1e-6) * constraint {
            return Err(AllocError::InfeasibleAllocation(format!(
                "amounts sum to {total}, constraint is {constraint}"
            )));
        }
        Ok(Self { amounts, constraint, shared_level: None })
    }

    pub fn amounts(&self) -> &[T] {
        &self.amounts
    }

    pub fn constraint(&self) -> T {
        self.constraint
    }

    /// Probability level at which the solver took every marginal quantile.
    pub fn shared_level(&self) -> Option<ProbLevel<T>> {
        self.shared_level
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }
}

/// Loss per unit of unmet need, uniform across locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams<T> {
    per_unit_loss: T,
}

impl<T: Scalar> LossParams<T> {
    pub fn new(per_unit_loss: T) -> Result<Self, AllocError> {
        if per_unit_loss > T::zero() && per_unit_loss.is_finite() {
            Ok(Self { per_unit_loss })
        } else {
            Err(AllocError::InvalidInput(format!("per-unit loss must be positive, got {per_unit_loss}")))
        }
    }

    pub fn per_unit_loss(&self) -> T {
        self.per_unit_loss
    }
}

impl<T: Scalar> Default for LossParams<T> {
    fn default() -> Self {
        Self { per_unit_loss: T::one() }
    }
}

/// Bisection stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Stop once `hi < (1 + rel_tol) * lo`.
    pub rel_tol: T,
    /// Stop once `hi - lo < abs_tol`; covers brackets pinned at zero.
    pub abs_tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), AllocError> {
        if self.rel_tol > T::zero() && self.abs_tol > T::zero() && self.max_iter > 0 {
            Ok(())
        } else {
            Err(AllocError::InvalidInput("solver tolerances and iteration cap must be positive".into()))
        }
    }
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { rel_tol: T::lit(1e-9), abs_tol: T::lit(1e-12), max_iter: 200 }
    }
}

fn check_constraint<T: Scalar>(k: T) -> Result<(), AllocError> {
    if k > T::zero() && k.is_finite() {
        Ok(())
    } else {
        Err(AllocError::InvalidInput(format!("resource constraint must be positive and finite, got {k}")))
    }
}

fn check_aligned(expected: usize, got: usize) -> Result<(), AllocError> {
    if expected == got {
        Ok(())
    } else {
        Err(AllocError::DimensionMismatch { expected, got })
    }
}

/// Per-location losses `L * max(0, y_i - x_i)`.
pub fn allocation_loss_terms<T: Scalar>(
    x: &Allocation<T>,
    y: &Outcome<T>,
    loss: LossParams<T>,
) -> Result<Vec<T>, AllocError> {
    check_aligned(x.len(), y.len())?;
    Ok(x.amounts().iter().zip(y.values()).map(|(&xi, &yi)| loss.per_unit_loss() * (yi - xi).max(T::zero())).collect())
}

/// Realized loss of an allocation: total unmet need scaled by `L`.
pub fn allocation_loss<T: Scalar>(x: &Allocation<T>, y: &Outcome<T>, loss: LossParams<T>) -> Result<T, AllocError> {
    Ok(allocation_loss_terms(x, y, loss)?.into_iter().sum())
}

/// Expected loss of an allocation under a forecast.
pub fn expected_allocation_loss<T: Scalar>(
    forecast: &MultiForecast<T>,
    x: &Allocation<T>,
    loss: LossParams<T>,
) -> Result<T, AllocError> {
    expected_loss_of_amounts(forecast, x.amounts(), loss)
}

/// Same as [`expected_allocation_loss`] for raw amounts, without feasibility checks.
pub fn expected_loss_of_amounts<T: Scalar>(
    forecast: &MultiForecast<T>,
    amounts: &[T],
    loss: LossParams<T>,
) -> Result<T, AllocError> {
    check_aligned(forecast.len(), amounts.len())?;
    let mut total = T::zero();
    for (d, &xi) in forecast.marginals().iter().zip(amounts) {
        total = total + d.expected_shortage(xi)?;
    }
    Ok(loss.per_unit_loss() * total)
}

/// Unavoidable loss of an allocator that knows `y` in advance.
pub fn oracle_loss<T: Scalar>(y: &Outcome<T>, constraint: T, loss: LossParams<T>) -> T {
    loss.per_unit_loss() * (y.total() - constraint).max(T::zero())
}

fn clamped_quantiles<T: Scalar>(forecast: &MultiForecast<T>, tau: T) -> Result<Vec<T>, AllocError> {
    let level = ProbLevel::new(tau)?;
    forecast.marginals().iter().map(|d| Ok(d.quantile(level)?.max(T::zero()))).collect()
}

fn clamped_upper_quantiles<T: Scalar>(forecast: &MultiForecast<T>, log_exceedance: T) -> Result<Vec<T>, AllocError> {
    forecast.marginals().iter().map(|d| Ok(d.upper_quantile(log_exceedance)?.max(T::zero()))).collect()
}

fn total<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum()
}

// Amounts between the bracket ends summing to `constraint`: each location
// moves from `short` toward `over` in proportion to its own change.
fn blend<T: Scalar>(short: &[T], over: &[T], constraint: T) -> Vec<T> {
    let (s_lo, s_hi) = (total(short), total(over));
    let share = if s_hi > s_lo { ((constraint - s_lo) / (s_hi - s_lo)).max(T::zero()).min(T::one()) } else { T::one() };
    short.iter().zip(over).map(|(&a, &b)| a + share * (b - a).max(T::zero())).collect()
}

/// Bayes allocation of `constraint` units under `forecast`.
///
/// Bisects on the shared level τ over the clamped quantile sum
/// `Σ max(0, q_i(τ))`, starting from `[0, max_i F_i(K)]`. At convergence the
/// amounts at the bracket ends straddle `K`; the residual is split between
/// them in proportion to each location's change across the bracket, so a
/// quantile that jumps at τ (a point mass) absorbs the shortfall and the
/// amounts sum to `K`.
///
/// When `K` needs a level above `1 - 1e-12` (or a few ulps below 1 in
/// single precision) the search continues on the log
/// of the exceedance probability `1 - τ`, which stays representable far
/// into the upper tails; the reported shared level then rounds to 1.
pub fn solve_allocation<T: Scalar>(
    forecast: &MultiForecast<T>,
    constraint: T,
    cfg: &SolverConfig<T>,
) -> Result<Allocation<T>, AllocError> {
    check_constraint(constraint)?;
    cfg.validate()?;

    let at_zero = clamped_quantiles(forecast, T::zero())?;
    if total(&at_zero) >= constraint {
        // Even the infimum of support over-covers K: scale it down.
        let s = total(&at_zero);
        let amounts = at_zero.iter().map(|&a| a * constraint / s).collect();
        return Ok(finish(amounts, constraint, T::zero()));
    }

    // In single precision `1 - 1e-12` rounds to 1; keep the cap representable.
    let cap = T::one() - T::lit(1e-12).max(T::lit(4.0) * T::epsilon());
    let mut hi = forecast.marginals().iter().map(|d| d.cdf(constraint)).fold(T::zero(), T::max).min(cap);
    let mut upper = clamped_quantiles(forecast, hi)?;
    while total(&upper) < constraint {
        if hi >= cap {
            return solve_in_upper_tail(forecast, constraint, cfg, T::one() - cap, upper);
        }
        hi = ((T::one() + hi) * T::half()).min(cap);
        upper = clamped_quantiles(forecast, hi)?;
    }

    let mut lo = T::zero();
    let mut lower = at_zero;
    let mut iter = 0;
    loop {
        if hi < (T::one() + cfg.rel_tol) * lo || hi - lo < cfg.abs_tol {
            break;
        }
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if iter == cfg.max_iter {
            return Err(AllocError::NoConvergence(cfg.max_iter));
        }
        iter += 1;
        let at_mid = clamped_quantiles(forecast, mid)?;
        if total(&at_mid) >= constraint {
            hi = mid;
            upper = at_mid;
        } else {
            lo = mid;
            lower = at_mid;
        }
    }
    Ok(finish(blend(&lower, &upper, constraint), constraint, hi))
}

// Total allocation decreases in the log exceedance probability `ln(1 - τ)`.
fn solve_in_upper_tail<T: Scalar>(
    forecast: &MultiForecast<T>,
    constraint: T,
    cfg: &SolverConfig<T>,
    max_exceedance: T,
    mut short: Vec<T>,
) -> Result<Allocation<T>, AllocError> {
    let mut hi = max_exceedance.ln();
    let mut lo = hi * T::two();
    let mut over = clamped_upper_quantiles(forecast, lo)?;
    while !(total(&over) >= constraint) {
        if !lo.is_finite() || lo < -T::max_value().sqrt() {
            return Err(AllocError::InfeasibleConstraint(constraint.to_f64().unwrap_or(f64::NAN)));
        }
        hi = lo;
        short = over;
        lo = lo * T::two();
        over = clamped_upper_quantiles(forecast, lo)?;
    }
    let mut iter = 0;
    loop {
        if hi - lo <= cfg.rel_tol * lo.abs() {
            break;
        }
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if iter == cfg.max_iter {
            return Err(AllocError::NoConvergence(cfg.max_iter));
        }
        iter += 1;
        let at_mid = clamped_upper_quantiles(forecast, mid)?;
        if total(&at_mid) >= constraint {
            lo = mid;
            over = at_mid;
        } else {
            hi = mid;
            short = at_mid;
        }
    }
    Ok(finish(blend(&short, &over, constraint), constraint, T::one() - lo.exp()))
}

fn finish<T: Scalar>(amounts: Vec<T>, constraint: T, level: T) -> Allocation<T> {
    Allocation { amounts, constraint, shared_level: Some(ProbLevel(level)) }
}
