//! Asymptotic variance proxy `H_hat(theta) + int_0^T h(theta([t, T])) dt` and
//! the dichotomy solvers for its minimizer, for European and discretely
//! monitored Asian puts.

use crate::ldp::{LdpError, Partition, SignedDiscreteMeasure};
use crate::model::{ModelError, ModelSpec};
use thiserror::Error;

/// Residual tolerance of every solver.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Iteration cap of every bisection.
pub const MAX_BISECTIONS: usize = 200;
/// Relative margin from the bracket endpoints.
const BRACKET_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error("invalid payoff: {0}")]
    InvalidPayoff(&'static str),
    #[error("measure is infeasible: {0}")]
    Infeasible(String),
    #[error("solver failed: {reason} (bracket [{lo}, {hi}], residuals {f_lo} / {f_hi}, {iterations} iterations)")]
    SolverFailure {
        reason: &'static str,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
        iterations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    EuropeanPut,
    AsianPut,
}

/// Put payoff: `(K - S_T)+` or `(K - (1/n) sum_j S_{t_j})+` with
/// `t_j = j T / n`. Calls are deliberately not representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSpec {
    kind: PayoffKind,
    strike: f64,
    maturity: f64,
    n_monitor: usize,
}

impl PayoffSpec {
    pub fn european_put(strike: f64, maturity: f64) -> Result<Self, OptimError> {
        Self::checked(PayoffKind::EuropeanPut, strike, maturity, 1)
    }

    pub fn asian_put(strike: f64, maturity: f64, n_monitor: usize) -> Result<Self, OptimError> {
        Self::checked(PayoffKind::AsianPut, strike, maturity, n_monitor)
    }

    fn checked(
        kind: PayoffKind,
        strike: f64,
        maturity: f64,
        n_monitor: usize,
    ) -> Result<Self, OptimError> {
        if !(strike.is_finite() && strike >= 0.0) {
            return Err(OptimError::InvalidPayoff(
                "strike must be finite and non-negative",
            ));
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(OptimError::InvalidPayoff(
                "maturity must be finite and positive",
            ));
        }
        if n_monitor == 0 {
            return Err(OptimError::InvalidPayoff(
                "at least one monitoring date is required",
            ));
        }
        Ok(Self {
            kind,
            strike,
            maturity,
            n_monitor,
        })
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn n_monitor(&self) -> usize {
        self.n_monitor
    }

    pub fn with_strike(&self, strike: f64) -> Result<Self, OptimError> {
        Self::checked(self.kind, strike, self.maturity, self.n_monitor)
    }

    pub fn with_maturity(&self, maturity: f64) -> Result<Self, OptimError> {
        Self::checked(self.kind, self.strike, maturity, self.n_monitor)
    }

    pub fn monitoring(&self) -> Partition {
        Partition::uniform(self.maturity, self.n_monitor).expect("validated payoff")
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalMeasure {
    pub measure: SignedDiscreteMeasure,
    pub objective_value: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when `Theta_1` is within 1% of `u_minus` or `-Theta_1` within 1%
    /// of `u_plus`.
    pub near_domain_boundary: bool,
}

impl OptimalMeasure {
    /// `Theta_1`, the total mass.
    pub fn total_mass(&self) -> f64 {
        self.measure.total_mass()
    }
}

/// `H_hat(theta) = log(K / (1 - sum theta)) - sum_m theta_m log(-theta_m n K / S0 / (1 - sum theta))`
/// for `n = theta.len()` atoms.
pub fn h_hat_discrete_average(theta: &[f64], strike: f64, s0: f64) -> Result<f64, OptimError> {
    if theta.is_empty() {
        return Err(OptimError::Infeasible("empty measure".into()));
    }
    if let Some(t) = theta.iter().find(|t| !(**t < 0.0)) {
        return Err(OptimError::Infeasible(format!(
            "atom {t} is not strictly negative"
        )));
    }
    let n = theta.len() as f64;
    let total: f64 = theta.iter().sum();
    let denom = 1.0 - total;
    if !(denom > 0.0) {
        return Err(OptimError::Infeasible(format!(
            "1 - sum(theta) = {denom} is not positive"
        )));
    }
    let scale = n * strike / s0 / denom;
    let tilt: f64 = theta.iter().map(|&t| t * (-t * scale).ln()).sum();
    Ok((strike / denom).ln() - tilt)
}

/// European objective `H_hat(theta) + T h(theta)` for an atom `theta` at `T`.
pub fn objective_european(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    theta: f64,
) -> Result<f64, OptimError> {
    let s0 = model.params().s0;
    let h_hat = h_hat_discrete_average(&[theta], payoff.strike(), s0)?;
    Ok(h_hat + payoff.maturity() * model.h(theta)?)
}

/// `d/dtheta` of [`objective_european`]:
/// `log((1 - theta) S0 / (-theta K)) + T h'(theta)`.
pub fn objective_european_derivative(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    theta: f64,
) -> Result<f64, OptimError> {
    let s0 = model.params().s0;
    if !(theta < 0.0) {
        return Err(OptimError::Infeasible(format!(
            "theta = {theta} is not strictly negative"
        )));
    }
    Ok(((1.0 - theta) * s0 / (-theta * payoff.strike())).ln()
        + payoff.maturity() * model.h_prime(theta)?)
}

/// Open feasible bracket `(max(u_minus, -alpha), 0)` with the endpoints
/// pulled inwards.
pub fn feasible_bracket(model: &ModelSpec) -> Result<(f64, f64), OptimError> {
    let dom = model.domain()?;
    let lo = dom.u_minus * (1.0 - BRACKET_MARGIN);
    Ok((lo, -1e-12))
}

fn boundary_flag(model: &ModelSpec, total_mass: f64) -> Result<bool, ModelError> {
    let dom = model.domain()?;
    Ok(total_mass.abs() >= 0.99 * dom.u_minus.abs() || -total_mass >= 0.99 * dom.u_plus)
}

struct Bisection {
    root: f64,
    residual: f64,
    iterations: usize,
}

/// Bisection for a function that is positive at `hi` and negative (or
/// undefined) towards `lo`. `f` returns `None` where it cannot be evaluated;
/// such points are treated as lying on the `lo` side.
fn bisect_decreasing_towards_lo<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
) -> Result<Bisection, OptimError>
where
    F: FnMut(f64) -> Result<Option<f64>, OptimError>,
{
    let f_hi = f(hi)?.ok_or(OptimError::SolverFailure {
        reason: "residual undefined at the upper bracket end",
        lo,
        hi,
        f_lo: f64::NAN,
        f_hi: f64::NAN,
        iterations: 0,
    })?;
    let f_lo = f(lo)?.unwrap_or(f64::NEG_INFINITY);
    if !(f_hi > 0.0 && f_lo < 0.0) {
        return Err(OptimError::SolverFailure {
            reason: "no sign change in bracket",
            lo,
            hi,
            f_lo,
            f_hi,
            iterations: 0,
        });
    }
    let (lo0, hi0) = (lo, hi);
    let mut best = (hi, f_hi);
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let value = f(mid)?;
        match value {
            Some(v) => {
                if v.abs() < best.1.abs() {
                    best = (mid, v);
                }
                if v == 0.0 {
                    break;
                }
                if v > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            None => lo = mid,
        }
    }
    if best.1.abs() < RESIDUAL_TOL {
        return Ok(Bisection {
            root: best.0,
            residual: best.1.abs(),
            iterations,
        });
    }
    Err(OptimError::SolverFailure {
        reason: "residual above tolerance after bisection",
        lo: lo0,
        hi: hi0,
        f_lo,
        f_hi,
        iterations,
    })
}

/// Minimizer of [`objective_european`] by bisection on its derivative.
pub fn solve_european_theta(
    model: &ModelSpec,
    payoff: &PayoffSpec,
) -> Result<OptimalMeasure, OptimError> {
    if payoff.kind() != PayoffKind::EuropeanPut {
        return Err(OptimError::InvalidPayoff(
            "European solver needs a European payoff",
        ));
    }
    if !(payoff.strike() > 0.0) {
        return Err(OptimError::InvalidPayoff(
            "strike must be positive for the variance proxy",
        ));
    }
    let (lo, hi) = feasible_bracket(model)?;
    let sol = bisect_decreasing_towards_lo(
        |th| Ok(Some(objective_european_derivative(model, payoff, th)?)),
        lo,
        hi,
    )?;
    let measure = SignedDiscreteMeasure::terminal_atom(payoff.monitoring(), sol.root);
    Ok(OptimalMeasure {
        objective_value: objective_european(model, payoff, sol.root)?,
        iterations: sol.iterations,
        residual: sol.residual,
        near_domain_boundary: boundary_flag(model, sol.root)?,
        measure,
    })
}

/// Asian objective in the tail-sum variables `Theta_1..Theta_n`; `+inf` when
/// the point is infeasible.
pub fn objective_asian(model: &ModelSpec, payoff: &PayoffSpec, cumulative: &[f64]) -> f64 {
    objective_asian_checked(model, payoff, cumulative).unwrap_or(f64::INFINITY)
}

fn objective_asian_checked(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    cumulative: &[f64],
) -> Result<f64, OptimError> {
    let n = payoff.n_monitor();
    if cumulative.len() != n {
        return Err(OptimError::Infeasible(format!(
            "expected {n} tail sums, got {}",
            cumulative.len()
        )));
    }
    let s0 = model.params().s0;
    let k = payoff.strike();
    let theta1 = cumulative[0];
    let denom = 1.0 - theta1;
    if !(denom > 0.0) {
        return Err(OptimError::Infeasible("Theta_1 >= 1".into()));
    }
    let scale = n as f64 * k / s0 / denom;
    let mut value = (k / denom).ln();
    let dt = payoff.maturity() / n as f64;
    for m in 0..n {
        let atom = cumulative[m] - cumulative.get(m + 1).copied().unwrap_or(0.0);
        if !(atom < 0.0) {
            return Err(OptimError::Infeasible(format!(
                "atom {m} = {atom} is not negative"
            )));
        }
        value -= atom * (-atom * scale).ln();
        value += dt * model.h(cumulative[m])?;
    }
    Ok(value)
}

/// Residuals of the stationarity system of [`objective_asian`], one per
/// `Theta_j`, in log form:
///
/// * `j = 1`: `log(1 - Theta_1) - log(n K / S0) + (T/n) h'(Theta_1) - log(-(Theta_1 - Theta_2))`
/// * `j >= 2`: `(T/n) h'(Theta_j) - log(-(Theta_j - Theta_{j+1})) + log(-(Theta_{j-1} - Theta_j))`
pub fn asian_stationarity_residuals(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    cumulative: &[f64],
) -> Result<Vec<f64>, OptimError> {
    let n = payoff.n_monitor();
    if cumulative.len() != n {
        return Err(OptimError::Infeasible(format!(
            "expected {n} tail sums, got {}",
            cumulative.len()
        )));
    }
    let c = payoff.maturity() / n as f64;
    let s0 = model.params().s0;
    let atom = |m: usize| cumulative[m] - cumulative.get(m + 1).copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(n);
    out.push(
        (1.0 - cumulative[0]).ln() - (n as f64 * payoff.strike() / s0).ln()
            + c * model.h_prime(cumulative[0])?
            - (-atom(0)).ln(),
    );
    for j in 1..n {
        out.push(c * model.h_prime(cumulative[j])? - (-atom(j)).ln() + (-atom(j - 1)).ln());
    }
    Ok(out)
}

/// Backward chain from `Theta_n`: `theta_{j-1} = theta_j exp(-(T/n) h'(Theta_j))`.
/// Returns `None` as soon as a tail sum leaves `J`.
fn backward_chain(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    theta_n: f64,
) -> Result<Option<Vec<f64>>, OptimError> {
    let n = payoff.n_monitor();
    let c = payoff.maturity() / n as f64;
    let dom = model.domain()?;
    let mut cumulative = vec![0.0; n];
    cumulative[n - 1] = theta_n;
    let mut atom = theta_n;
    for j in (1..n).rev() {
        let slope = model.h_prime(cumulative[j])?;
        atom *= (-c * slope).exp();
        let next = cumulative[j] + atom;
        if !(next > dom.u_minus) || !atom.is_finite() {
            return Ok(None);
        }
        cumulative[j - 1] = next;
    }
    Ok(Some(cumulative))
}

/// `(1 - Theta_1) exp((T/n) h'(Theta_1)) S0 / (n K) - (Theta_2 - Theta_1)`,
/// with `Theta_2 = 0` when `n = 1`.
fn chain_residual(
    model: &ModelSpec,
    payoff: &PayoffSpec,
    cumulative: &[f64],
) -> Result<f64, OptimError> {
    let n = payoff.n_monitor();
    let c = payoff.maturity() / n as f64;
    let s0 = model.params().s0;
    let theta1 = cumulative[0];
    let theta2 = cumulative.get(1).copied().unwrap_or(0.0);
    Ok(
        (1.0 - theta1) * (c * model.h_prime(theta1)?).exp() * s0 / (n as f64 * payoff.strike())
            - (theta2 - theta1),
    )
}

/// Minimizer of [`objective_asian`]: outer bisection on `Theta_n`, inner
/// backward chain, residual from the first stationarity equation.
pub fn solve_asian_thetas(
    model: &ModelSpec,
    payoff: &PayoffSpec,
) -> Result<OptimalMeasure, OptimError> {
    if !(payoff.strike() > 0.0) {
        return Err(OptimError::InvalidPayoff(
            "strike must be positive for the variance proxy",
        ));
    }
    let (lo, hi) = feasible_bracket(model)?;
    let sol = bisect_decreasing_towards_lo(
        |tn| match backward_chain(model, payoff, tn)? {
            Some(chain) => Ok(Some(chain_residual(model, payoff, &chain)?)),
            None => Ok(None),
        },
        lo,
        hi,
    )?;
    let chain = backward_chain(model, payoff, sol.root)?.ok_or(OptimError::SolverFailure {
        reason: "chain left J at the root",
        lo,
        hi,
        f_lo: f64::NAN,
        f_hi: f64::NAN,
        iterations: sol.iterations,
    })?;
    let objective_value = objective_asian_checked(model, payoff, &chain)?;
    let measure = SignedDiscreteMeasure::from_cumulative(payoff.monitoring(), chain)?;
    if let Some(i) = measure.weights().iter().position(|w| !(*w < 0.0)) {
        return Err(OptimError::Infeasible(format!(
            "solved atom {i} is not negative"
        )));
    }
    Ok(OptimalMeasure {
        near_domain_boundary: boundary_flag(model, measure.total_mass())?,
        measure,
        objective_value,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Dispatches on the payoff kind.
pub fn solve(model: &ModelSpec, payoff: &PayoffSpec) -> Result<OptimalMeasure, OptimError> {
    match payoff.kind() {
        PayoffKind::EuropeanPut => solve_european_theta(model, payoff),
        PayoffKind::AsianPut => solve_asian_thetas(model, payoff),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::g_epsilon_limit;
    use crate::model::{heston_preset, jump_preset};
    use approx::assert_abs_diff_eq;

    fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..iters {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn h_hat_cases() {
        // n = 1, K = S0 = 1, theta = -1: log(1/2) + log(1/2)
        assert_abs_diff_eq!(
            h_hat_discrete_average(&[-1.0], 1.0, 1.0).unwrap(),
            -2.0 * 2f64.ln(),
            epsilon = 1e-15
        );
        let near_zero = h_hat_discrete_average(&[-1e-12], 1.3, 1.0).unwrap();
        assert_abs_diff_eq!(near_zero, 1.3f64.ln(), epsilon = 1e-9);
        let a = h_hat_discrete_average(&[-0.2, -0.5], 1.0, 1.0).unwrap();
        let b = h_hat_discrete_average(&[-0.5, -0.2], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        assert!(h_hat_discrete_average(&[0.0], 1.0, 1.0).is_err());
        assert!(h_hat_discrete_average(&[-0.1, 0.2], 1.0, 1.0).is_err());
    }

    #[test]
    fn european_objective_limit_at_zero() {
        let m = heston_preset();
        let p = PayoffSpec::european_put(1.2, 1.5).unwrap();
        assert_abs_diff_eq!(
            objective_european(&m, &p, -1e-12).unwrap(),
            1.2f64.ln(),
            epsilon = 1e-9
        );
        let (lo, _) = feasible_bracket(&m).unwrap();
        assert!(objective_european(&m, &p, lo * 1.1).is_err());
        assert!(objective_european(&m, &p, 0.1).is_err());
    }

    #[test]
    fn european_derivative_matches_finite_difference() {
        let m = jump_preset();
        let p = PayoffSpec::european_put(0.8, 1.0).unwrap();
        for th in [-1.5, -0.6, -0.2] {
            let s = 1e-6;
            let fd = (objective_european(&m, &p, th + s).unwrap()
                - objective_european(&m, &p, th - s).unwrap())
                / (2.0 * s);
            assert_abs_diff_eq!(
                objective_european_derivative(&m, &p, th).unwrap(),
                fd,
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn jump_model_optimal_theta() {
        let m = jump_preset();
        let p = PayoffSpec::european_put(1.0, 1.5).unwrap();
        let sol = solve_european_theta(&m, &p).unwrap();
        assert!(
            (sol.total_mass() + 0.312).abs() < 0.005,
            "{}",
            sol.total_mass()
        );
        assert!(sol.residual < RESIDUAL_TOL);
    }

    #[test]
    fn european_solver_beats_grid() {
        for m in [heston_preset(), jump_preset()] {
            let p = PayoffSpec::european_put(1.0, 1.5).unwrap();
            let sol = solve_european_theta(&m, &p).unwrap();
            let th = sol.total_mass();
            let dom = m.domain().unwrap();
            assert!(th < 0.0 && th > dom.u_minus);
            let (lo, hi) = feasible_bracket(&m).unwrap();
            for i in 0..=20 {
                let g = lo + (hi - lo) * i as f64 / 20.0;
                assert!(sol.objective_value <= objective_european(&m, &p, g).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn optimal_theta_moves_towards_zero_for_deep_itm() {
        let m = heston_preset();
        let atm = solve_european_theta(&m, &PayoffSpec::european_put(1.0, 1.5).unwrap()).unwrap();
        let itm = solve_european_theta(&m, &PayoffSpec::european_put(10.0, 1.5).unwrap()).unwrap();
        assert!(itm.total_mass().abs() < atm.total_mass().abs());
        assert!(itm.total_mass() < 0.0);
    }

    #[test]
    fn asian_objective_variable_change() {
        let m = heston_preset();
        let p = PayoffSpec::asian_put(1.0, 1.5, 3).unwrap();
        let cum = [-0.9, -0.5, -0.2];
        let meas = SignedDiscreteMeasure::from_cumulative(p.monitoring(), cum.to_vec()).unwrap();
        let direct = h_hat_discrete_average(meas.weights(), 1.0, 1.0).unwrap()
            + g_epsilon_limit(&m, &meas).unwrap();
        assert_abs_diff_eq!(objective_asian(&m, &p, &cum), direct, epsilon = 1e-12);
        assert_eq!(objective_asian(&m, &p, &[-0.2, -0.5, -0.9]), f64::INFINITY);
    }

    #[test]
    fn asian_objective_two_dates_by_hand() {
        let m = heston_preset();
        let p = PayoffSpec::asian_put(1.1, 1.0, 2).unwrap();
        let (c1, c2) = (-0.6f64, -0.25f64);
        let (t1, t2) = (c1 - c2, c2);
        let d = 1.0 - c1;
        let by_hand =
            (1.1 / d).ln() - t1 * (-t1 * 2.0 * 1.1 / d).ln() - t2 * (-t2 * 2.0 * 1.1 / d).ln()
                + 0.5 * (m.h(c1).unwrap() + m.h(c2).unwrap());
        assert_abs_diff_eq!(objective_asian(&m, &p, &[c1, c2]), by_hand, epsilon = 1e-14);
    }

    #[test]
    fn single_date_asian_matches_european() {
        for m in [heston_preset(), jump_preset()] {
            let e = PayoffSpec::european_put(1.0, 1.5).unwrap();
            let a = PayoffSpec::asian_put(1.0, 1.5, 1).unwrap();
            assert_abs_diff_eq!(
                objective_asian(&m, &a, &[-0.4]),
                objective_european(&m, &e, -0.4).unwrap(),
                epsilon = 1e-14
            );
            let se = solve_european_theta(&m, &e).unwrap();
            let sa = solve_asian_thetas(&m, &a).unwrap();
            assert_abs_diff_eq!(se.total_mass(), sa.total_mass(), epsilon = 1e-9);
        }
    }

    #[test]
    fn stationarity_matches_objective_gradient() {
        let m = heston_preset();
        let p = PayoffSpec::asian_put(0.9, 1.5, 3).unwrap();
        let cum = [-1.1, -0.7, -0.3];
        let res = asian_stationarity_residuals(&m, &p, &cum).unwrap();
        for j in 0..3 {
            let s = 1e-6;
            let mut up = cum;
            let mut dn = cum;
            up[j] += s;
            dn[j] -= s;
            let fd = (objective_asian(&m, &p, &up) - objective_asian(&m, &p, &dn)) / (2.0 * s);
            assert_abs_diff_eq!(res[j], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn asian_two_dates_matches_nested_golden_section() {
        let m = heston_preset();
        let p = PayoffSpec::asian_put(1.0, 1.5, 2).unwrap();
        let sol = solve_asian_thetas(&m, &p).unwrap();
        let dom = m.domain().unwrap();
        // inner: Theta_2 in (Theta_1, 0) given Theta_1
        let inner = |c1: f64| {
            let c2 = golden(|c2| objective_asian(&m, &p, &[c1, c2]), c1, 0.0, 120);
            (c2, objective_asian(&m, &p, &[c1, c2]))
        };
        let c1 = golden(|c1| inner(c1).1, dom.u_minus + 1e-9, 0.0, 120);
        let c2 = inner(c1).0;
        let got = sol.measure.cumulative();
        assert_abs_diff_eq!(got[0], c1, epsilon = 1e-6);
        assert_abs_diff_eq!(got[1], c2, epsilon = 1e-6);
    }

    #[test]
    fn asian_solver_postconditions_large_n() {
        let m = heston_preset();
        let p = PayoffSpec::asian_put(1.0, 1.5, 200).unwrap();
        let sol = solve_asian_thetas(&m, &p).unwrap();
        assert!(sol.residual < RESIDUAL_TOL);
        let res = asian_stationarity_residuals(&m, &p, sol.measure.cumulative()).unwrap();
        let worst = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        assert!(worst < 1e-8, "worst stationarity residual {worst}");
        assert!(sol.measure.weights().iter().all(|w| *w < 0.0));
        let dom = m.domain().unwrap();
        assert!(sol.total_mass() > dom.u_minus && sol.total_mass() < 0.0);
        assert!(1.0 - sol.total_mass() > 0.0);
    }

    #[test]
    fn solvers_reject_wrong_payloads() {
        let m = heston_preset();
        let a = PayoffSpec::asian_put(1.0, 1.0, 4).unwrap();
        assert!(matches!(
            solve_european_theta(&m, &a),
            Err(OptimError::InvalidPayoff(_))
        ));
        assert!(PayoffSpec::european_put(-1.0, 1.0).is_err());
        assert!(PayoffSpec::asian_put(1.0, 1.0, 0).is_err());
    }
}
