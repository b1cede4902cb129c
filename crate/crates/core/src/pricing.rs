//! Plain and Esscher importance-sampled Monte Carlo estimators for put
//! payoffs, with the variance-ratio comparison and the theta sweep.
//!
//! Both estimators average per-path terms computed on independent
//! substreams of one seed. Terms are collected in path order and summed
//! sequentially, so results do not depend on the number of workers.

use crate::exec::map_indexed;
use crate::ldp::SignedDiscreteMeasure;
use crate::model::ModelSpec;
use crate::optimize::{solve, OptimError, OptimalMeasure, PayoffKind, PayoffSpec};
use crate::simulate::{
    simulate_p, simulate_p_theta, EsscherPlan, Path, PathGrid, PathStream, SimError,
};
use std::time::Instant;
use thiserror::Error;

/// Mixed into the root seed of the importance-sampled run of [`compare`].
pub const IS_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("plan support does not match the payoff's monitoring dates")]
    SupportMismatch,
    #[error("grid monitoring dates do not match the payoff's")]
    GridMismatch,
    #[error("at least two paths are required, got {0}")]
    TooFewPaths(usize),
    #[error("likelihood weight of path {index} is {weight}; weights must be finite and positive")]
    BadWeight { index: usize, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Plain,
    Importance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub price: f64,
    pub std_error: f64,
    /// Sample variance of the per-path terms.
    pub variance: f64,
    pub n_paths: usize,
    /// Wall-clock seconds spent simulating and aggregating.
    pub elapsed: f64,
    pub kind: EstimatorKind,
}

impl EstimatorResult {
    /// Mean, unbiased sample variance and standard error of `terms`,
    /// accumulated in index order.
    pub fn from_terms(terms: &[f64], elapsed: f64, kind: EstimatorKind) -> Self {
        let n = terms.len();
        let price = terms.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            terms.iter().map(|t| (t - price) * (t - price)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            price,
            std_error: (variance / n as f64).sqrt(),
            variance,
            n_paths: n,
            elapsed,
            kind,
        }
    }
}

/// One row of a plain-versus-importance comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strike: f64,
    pub maturity: f64,
    /// Importance-sampled price and standard error.
    pub price: f64,
    pub std_error: f64,
    /// Plain variance over importance-sampled variance.
    pub var_ratio: f64,
    /// `var_ratio` divided by the ratio of simulation times.
    pub adj_ratio: f64,
    /// Importance-sampling wall-clock seconds.
    pub time_s: f64,
    /// Seconds spent in the optimizer, excluded from `adj_ratio`.
    pub solver_time_s: f64,
    pub plain: EstimatorResult,
    pub importance: EstimatorResult,
    pub optimum: OptimalMeasure,
}

/// `(K - S0 exp(X_T))+`.
pub fn payoff_european_put(path: &Path, strike: f64, s0: f64) -> f64 {
    (strike - s0 * path.x_terminal().exp()).max(0.0)
}

/// `(K - (S0 / n) sum_j exp(X_{t_j}))+` over the path's monitoring dates.
pub fn payoff_asian_put(path: &Path, strike: f64, s0: f64) -> f64 {
    let n = path.x_monitor.len() as f64;
    let mean = path.x_monitor.iter().map(|x| x.exp()).sum::<f64>() / n;
    (strike - s0 * mean).max(0.0)
}

pub fn payoff_value(payoff: &PayoffSpec, path: &Path, s0: f64) -> f64 {
    match payoff.kind() {
        PayoffKind::EuropeanPut => payoff_european_put(path, payoff.strike(), s0),
        PayoffKind::AsianPut => payoff_asian_put(path, payoff.strike(), s0),
    }
}

/// Euler grid with `n_steps` steps for `payoff`.
pub fn grid_for(payoff: &PayoffSpec, n_steps: usize) -> Result<PathGrid, PricingError> {
    Ok(PathGrid::new(payoff.monitoring(), n_steps)?)
}

fn check_grid(payoff: &PayoffSpec, grid: &PathGrid) -> Result<(), PricingError> {
    if grid.monitoring() == &payoff.monitoring() {
        Ok(())
    } else {
        Err(PricingError::GridMismatch)
    }
}

/// Per-path payoffs under the original measure.
pub fn plain_terms(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>, PricingError> {
    check_grid(payoff, grid)?;
    let s0 = model.params().s0;
    Ok(map_indexed(n_paths, |i| {
        let path = simulate_p(model, grid, &mut PathStream::new(seed, i));
        payoff_value(payoff, &path, s0)
    }))
}

/// Per-path terms `exp(Phi + Psi V0 - sum_j theta_j X_{t_j}) * payoff` under
/// the tilted measure.
pub fn is_terms(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    plan: &EsscherPlan,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>, PricingError> {
    check_grid(payoff, grid)?;
    if plan.measure().support() != &payoff.monitoring() {
        return Err(PricingError::SupportMismatch);
    }
    let s0 = model.params().s0;
    let log_norm = plan.log_normalizer(model.params().v0);
    let weights = plan.measure().weights();
    let identity = plan.is_identity();
    map_indexed(n_paths, |i| {
        let path = simulate_p_theta(model, plan, grid, &mut PathStream::new(seed, i))?;
        let value = payoff_value(payoff, &path, s0);
        if identity {
            return Ok(value);
        }
        let tilt: f64 = weights
            .iter()
            .zip(&path.x_monitor)
            .map(|(t, x)| t * x)
            .sum();
        let weight = (log_norm - tilt).exp();
        if !(weight.is_finite() && weight > 0.0) {
            return Err(PricingError::BadWeight {
                index: i as usize,
                weight,
            });
        }
        Ok(weight * value)
    })
    .into_iter()
    .collect()
}

pub fn mc_price_plain(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult, PricingError> {
    if n_paths < 2 {
        return Err(PricingError::TooFewPaths(n_paths));
    }
    let start = Instant::now();
    let terms = plain_terms(model, payoff, grid, n_paths, seed)?;
    let mut result = EstimatorResult::from_terms(&terms, 0.0, EstimatorKind::Plain);
    result.elapsed = start.elapsed().as_secs_f64();
    Ok(result)
}

pub fn mc_price_is(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    plan: &EsscherPlan,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult, PricingError> {
    if n_paths < 2 {
        return Err(PricingError::TooFewPaths(n_paths));
    }
    let start = Instant::now();
    let terms = is_terms(model, payoff, plan, grid, n_paths, seed)?;
    let mut result = EstimatorResult::from_terms(&terms, 0.0, EstimatorKind::Importance);
    result.elapsed = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Solves for the optimal measure, then runs the plain estimator on `seed`
/// and the importance-sampled one on `seed ^ IS_SEED_SALT`.
pub fn compare(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ComparisonRow, PricingError> {
    let grid = grid_for(payoff, n_steps)?;
    let start = Instant::now();
    let optimum = solve(model, payoff)?;
    let plan = EsscherPlan::build(model, optimum.measure.clone(), &grid)?;
    let solver_time_s = start.elapsed().as_secs_f64();

    let plain = mc_price_plain(model, payoff, &grid, n_paths, seed)?;
    let importance = mc_price_is(model, payoff, &plan, &grid, n_paths, seed ^ IS_SEED_SALT)?;
    let var_ratio = plain.variance / importance.variance;
    let adj_ratio = var_ratio / (importance.elapsed / plain.elapsed);
    Ok(ComparisonRow {
        strike: payoff.strike(),
        maturity: payoff.maturity(),
        price: importance.price,
        std_error: importance.std_error,
        var_ratio,
        adj_ratio,
        time_s: importance.elapsed,
        solver_time_s,
        plain,
        importance,
        optimum,
    })
}

/// One point of a theta sweep; `result` is `None` when the tilt is
/// infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub result: Option<EstimatorResult>,
}

impl SweepPoint {
    pub fn feasible(&self) -> bool {
        self.result.is_some()
    }

    pub fn variance(&self) -> Option<f64> {
        self.result.map(|r| r.variance)
    }
}

/// Importance-sampled variance for a single atom `theta` at the last
/// monitoring date, for every `theta` in `thetas`. All points share `seed`.
pub fn theta_sweep(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    thetas: &[f64],
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>, PricingError> {
    let grid = grid_for(payoff, n_steps)?;
    thetas
        .iter()
        .map(|&theta| {
            let measure = SignedDiscreteMeasure::terminal_atom(payoff.monitoring(), theta);
            let plan = match EsscherPlan::build(model, measure, &grid) {
                Ok(plan) => plan,
                Err(SimError::InfeasiblePlan { .. } | SimError::JumpTilt { .. }) => {
                    return Ok(SweepPoint {
                        theta,
                        result: None,
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let result = mc_price_is(model, payoff, &plan, &grid, n_paths, seed)?;
            Ok(SweepPoint {
                theta,
                result: Some(result),
            })
        })
        .collect()
}

/// Feasible point of minimal variance.
pub fn sweep_minimizer(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points
        .iter()
        .filter(|p| p.feasible())
        .min_by(|a, b| a.variance().unwrap().total_cmp(&b.variance().unwrap()))
}
