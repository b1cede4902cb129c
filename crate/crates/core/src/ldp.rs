//! Large-deviations quantities built on the limiting cumulant `h`: the
//! finite-partition cumulant `Lambda_tau`, the Legendre transform `h*`, the
//! discrete rate function and the scaling-limit checks.

use crate::model::{DomainJ, ModelError, ModelSpec};
use thiserror::Error;

const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("partition must be non-empty, finite and strictly increasing from t > 0")]
    InvalidPartition,
    #[error("expected {expected} values on the partition, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("measure is infeasible: Theta_{index} = {value} lies outside J")]
    Infeasible { index: usize, value: f64 },
}

/// Anything that behaves like a limiting cumulant: convex, essentially smooth
/// on an interval.
pub trait LimitingCumulant {
    fn domain(&self) -> Result<DomainJ, ModelError>;
    fn h(&self, u: f64) -> Result<f64, ModelError>;
    fn h_prime(&self, u: f64) -> Result<f64, ModelError>;
}

impl LimitingCumulant for ModelSpec {
    fn domain(&self) -> Result<DomainJ, ModelError> {
        ModelSpec::domain(self)
    }

    fn h(&self, u: f64) -> Result<f64, ModelError> {
        ModelSpec::h(self, u)
    }

    fn h_prime(&self, u: f64) -> Result<f64, ModelError> {
        ModelSpec::h_prime(self, u)
    }
}

/// Value of `f64` extended by `+inf`, kept as an explicit tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PositiveInfinity,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PositiveInfinity => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Monitoring dates `0 < t_1 < ... < t_n = T` (with implicit `t_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self, LdpError> {
        let ok = !times.is_empty()
            && times.iter().all(|t| t.is_finite())
            && times[0] > 0.0
            && times.windows(2).all(|w| w[1] > w[0]);
        if ok {
            Ok(Self { times })
        } else {
            Err(LdpError::InvalidPartition)
        }
    }

    /// `t_j = j T / n`, `j = 1..=n`.
    pub fn uniform(maturity: f64, n: usize) -> Result<Self, LdpError> {
        if n == 0 || !(maturity > 0.0) {
            return Err(LdpError::InvalidPartition);
        }
        let times = (1..=n).map(|j| maturity * j as f64 / n as f64).collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().expect("non-empty partition")
    }

    /// `t_j - t_{j-1}` for `j = 1..=n`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let dt = t - prev;
                prev = t;
                dt
            })
            .collect()
    }
}

/// Signed measure with atoms `theta_j` on a partition, together with the
/// tail sums `Theta_j = sum_{k >= j} theta_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDiscreteMeasure {
    support: Partition,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SignedDiscreteMeasure {
    pub fn from_weights(support: Partition, weights: Vec<f64>) -> Result<Self, LdpError> {
        if weights.len() != support.len() {
            return Err(LdpError::LengthMismatch {
                expected: support.len(),
                got: weights.len(),
            });
        }
        let mut cumulative = vec![0.0; weights.len()];
        let mut acc = 0.0;
        for j in (0..weights.len()).rev() {
            acc += weights[j];
            cumulative[j] = acc;
        }
        Ok(Self {
            support,
            weights,
            cumulative,
        })
    }

    /// Builds the measure from `Theta_1..Theta_n`; atoms are
    /// `theta_j = Theta_j - Theta_{j+1}` with `Theta_{n+1} = 0`.
    pub fn from_cumulative(support: Partition, cumulative: Vec<f64>) -> Result<Self, LdpError> {
        if cumulative.len() != support.len() {
            return Err(LdpError::LengthMismatch {
                expected: support.len(),
                got: cumulative.len(),
            });
        }
        let n = cumulative.len();
        let weights = (0..n)
            .map(|j| cumulative[j] - cumulative.get(j + 1).copied().unwrap_or(0.0))
            .collect();
        Ok(Self {
            support,
            weights,
            cumulative,
        })
    }

    /// Zero measure on the given support.
    pub fn zero(support: Partition) -> Self {
        let n = support.len();
        Self {
            support,
            weights: vec![0.0; n],
            cumulative: vec![0.0; n],
        }
    }

    /// Single atom at the last date of `support`.
    pub fn terminal_atom(support: Partition, theta: f64) -> Self {
        let n = support.len();
        let mut weights = vec![0.0; n];
        weights[n - 1] = theta;
        Self {
            support,
            weights,
            cumulative: vec![theta; n],
        }
    }

    pub fn support(&self) -> &Partition {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative[0]
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// First index whose tail sum leaves `J`, if any.
    pub fn first_infeasible<C: LimitingCumulant + ?Sized>(
        &self,
        model: &C,
    ) -> Result<Option<usize>, ModelError> {
        let dom = model.domain()?;
        Ok(self.cumulative.iter().position(|&c| !dom.contains(c)))
    }

    pub fn is_feasible<C: LimitingCumulant + ?Sized>(&self, model: &C) -> Result<bool, ModelError> {
        Ok(self.first_infeasible(model)?.is_none())
    }
}

/// Values `x_{t_1}..x_{t_n}` of a path on a partition, with `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    partition: Partition,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(partition: Partition, values: Vec<f64>) -> Result<Self, LdpError> {
        if values.len() != partition.len() {
            return Err(LdpError::LengthMismatch {
                expected: partition.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LdpError::InvalidPartition);
        }
        Ok(Self { partition, values })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `x_j - x_{j-1}` for `j = 1..=n`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|&x| {
                let dx = x - prev;
                prev = x;
                dx
            })
            .collect()
    }
}

/// `Lambda_tau(theta) = sum_j (t_j - t_{j-1}) h(Theta_j)` when every tail sum
/// lies in `J`, `+inf` otherwise.
pub fn lambda_tau<C: LimitingCumulant + ?Sized>(
    model: &C,
    theta: &SignedDiscreteMeasure,
) -> Result<ExtendedReal, ModelError> {
    if theta.first_infeasible(model)?.is_some() {
        return Ok(ExtendedReal::PositiveInfinity);
    }
    let mut total = 0.0;
    for (dt, &c) in theta.support().increments().iter().zip(theta.cumulative()) {
        total += dt * model.h(c)?;
    }
    Ok(ExtendedReal::Finite(total))
}

/// `lim_{eps -> 0} G_eps(theta) = int_0^T h(theta([t, T])) dt` for a discrete
/// measure, which is the piecewise-constant sum over the partition.
pub fn g_epsilon_limit<C: LimitingCumulant + ?Sized>(
    model: &C,
    theta: &SignedDiscreteMeasure,
) -> Result<f64, LdpError> {
    if let Some(index) = theta.first_infeasible(model)? {
        return Err(LdpError::Infeasible {
            index,
            value: theta.cumulative()[index],
        });
    }
    match lambda_tau(model, theta)? {
        ExtendedReal::Finite(v) => Ok(v),
        ExtendedReal::PositiveInfinity => unreachable!("feasibility checked above"),
    }
}

/// Result of the Legendre transform at one slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendrePoint {
    pub value: f64,
    /// Maximizer of `theta y - h(theta)` over `J`.
    pub argmax: f64,
}

/// `h*(y) = sup_{theta in J} (theta y - h(theta))`.
///
/// The maximizer solves `h'(theta) = y`; `h'` is increasing so it is found
/// by bisection inside `J`. When `y` is outside the range of `h'` the best
/// endpoint is used instead.
pub fn legendre_h_star<C: LimitingCumulant + ?Sized>(
    model: &C,
    y: f64,
) -> Result<LegendrePoint, ModelError> {
    let dom = model.domain()?;
    let objective = |th: f64| -> Result<f64, ModelError> { Ok(th * y - model.h(th)?) };

    let mut lo = dom.u_minus;
    let mut hi = dom.u_plus;
    let slope_lo = model.h_prime(lo)?;
    let slope_hi = model.h_prime(hi)?;
    if y <= slope_lo || y >= slope_hi {
        let (a, b) = (objective(dom.u_minus)?, objective(dom.u_plus)?);
        let (value, argmax) = if a >= b {
            (a, dom.u_minus)
        } else {
            (b, dom.u_plus)
        };
        return Ok(LegendrePoint { value, argmax });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.h_prime(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let argmax = 0.5 * (lo + hi);
    Ok(LegendrePoint {
        value: objective(argmax)?,
        argmax,
    })
}

/// Finite-partition rate function
/// `Lambda*_tau(x) = sup_{Theta in J^n} sum_j Theta_j dx_j - dt_j h(Theta_j)`,
/// evaluated through its separable form `sum_j dt_j h*(dx_j / dt_j)`.
pub fn rate_function_discrete<C: LimitingCumulant + ?Sized>(
    model: &C,
    x: &DiscretePath,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (dt, dx) in x.partition().increments().iter().zip(x.increments()) {
        total += dt * legendre_h_star(model, dx / dt)?.value;
    }
    Ok(total)
}

/// Errors of the long-time limits at one `(u, eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub u: f64,
    pub eps: f64,
    /// `|psi(dt/eps, u, 0) - w(u)|`.
    pub psi_error: f64,
    /// `|eps phi(dt/eps, u, 0) - dt h(u)|`.
    pub phi_error: f64,
    /// `dt h(u)`, the limit of the scaled `phi`.
    pub phi_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub horizon: f64,
    pub rows: Vec<ScalingRow>,
    /// One flag per `u`: both errors are non-increasing along the `eps` grid.
    pub monotone: Vec<(f64, bool)>,
}

impl ScalingReport {
    pub fn all_monotone(&self) -> bool {
        self.monotone.iter().all(|&(_, ok)| ok)
    }
}

/// Absolute error level below which two errors are considered equal.
const NOISE_FLOOR: f64 = 1e-13;

/// Checks `psi(dt/eps, u, 0) -> w(u)` and `eps phi(dt/eps, u, 0) -> dt h(u)`
/// on a grid of `u` and a decreasing grid of `eps`.
pub fn verify_scaling_limits(
    model: &ModelSpec,
    u_grid: &[f64],
    eps_grid: &[f64],
    horizon: f64,
) -> Result<ScalingReport, ModelError> {
    let mut rows = Vec::with_capacity(u_grid.len() * eps_grid.len());
    let mut monotone = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let w = model.stable_equilibrium(u)?;
        let limit = horizon * model.h(u)?;
        let mut prev: Option<(f64, f64)> = None;
        let mut ok = true;
        for &eps in eps_grid {
            let r = model.riccati(horizon / eps, u, 0.0)?;
            let row = ScalingRow {
                u,
                eps,
                psi_error: (r.psi - w).abs(),
                phi_error: (eps * r.phi - limit).abs(),
                phi_limit: limit,
            };
            if let Some((pe, fe)) = prev {
                ok &= row.psi_error <= pe.max(NOISE_FLOOR) && row.phi_error <= fe.max(NOISE_FLOOR);
            }
            prev = Some((row.psi_error, row.phi_error));
            rows.push(row);
        }
        monotone.push((u, ok));
    }
    Ok(ScalingReport {
        horizon,
        rows,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{heston_preset, jump_preset};
    use approx::assert_abs_diff_eq;

    fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        for _ in 0..300 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - phi * (b - a);
            d = a + phi * (b - a);
        }
        let x = 0.5 * (a + b);
        (x, f(x))
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![0.0, 1.0]).is_err());
        assert!(Partition::new(vec![0.5, 0.5]).is_err());
        let p = Partition::uniform(1.5, 3).unwrap();
        assert_eq!(p.maturity(), 1.5);
        assert_abs_diff_eq!(p.increments()[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cumulative_sums() {
        let p = Partition::uniform(1.0, 3).unwrap();
        let m = SignedDiscreteMeasure::from_weights(p.clone(), vec![-0.1, -0.2, -0.3]).unwrap();
        assert_abs_diff_eq!(m.cumulative()[0], -0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative()[1], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative()[2], -0.3, epsilon = 1e-15);
        let back = SignedDiscreteMeasure::from_cumulative(p, m.cumulative().to_vec()).unwrap();
        for (a, b) in back.weights().iter().zip(m.weights()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn lambda_tau_cases() {
        let model = heston_preset();
        let p = Partition::uniform(2.0, 2).unwrap();
        let zero = SignedDiscreteMeasure::zero(p.clone());
        assert!(lambda_tau(&model, &zero).unwrap().to_f64().abs() < 1e-15);
        let one = SignedDiscreteMeasure::terminal_atom(p.clone(), 1.0);
        assert!(lambda_tau(&model, &one).unwrap().to_f64().abs() < 1e-12);
        let out = SignedDiscreteMeasure::from_weights(p, vec![-20.0, 0.5]).unwrap();
        assert_eq!(
            lambda_tau(&model, &out).unwrap(),
            ExtendedReal::PositiveInfinity
        );
        assert!(g_epsilon_limit(&model, &out).is_err());
    }

    #[test]
    fn g_limit_single_atom_and_uniform() {
        let model = jump_preset();
        let p = Partition::uniform(1.5, 1).unwrap();
        let m = SignedDiscreteMeasure::terminal_atom(p, -0.3);
        assert_abs_diff_eq!(
            g_epsilon_limit(&model, &m).unwrap(),
            1.5 * model.h(-0.3).unwrap(),
            epsilon = 1e-15
        );

        let p = Partition::uniform(2.0, 4).unwrap();
        let m = SignedDiscreteMeasure::from_weights(p, vec![-0.1, -0.2, 0.05, -0.4]).unwrap();
        let by_hand = 0.5
            * (model.h(-0.65).unwrap()
                + model.h(-0.55).unwrap()
                + model.h(-0.35).unwrap()
                + model.h(-0.4).unwrap());
        assert_abs_diff_eq!(
            g_epsilon_limit(&model, &m).unwrap(),
            by_hand,
            epsilon = 1e-14
        );
    }

    #[test]
    fn legendre_duality_identities() {
        let model = heston_preset();
        for th in [-2.0, -0.457, 0.0, 0.5, 3.0] {
            let y = model.h_prime(th).unwrap();
            let lp = legendre_h_star(&model, y).unwrap();
            assert_abs_diff_eq!(lp.argmax, th, epsilon = 1e-9);
            assert_abs_diff_eq!(lp.value, th * y - model.h(th).unwrap(), epsilon = 1e-12);
        }
        let y0 = model.h_prime(0.0).unwrap();
        assert!(legendre_h_star(&model, y0).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn legendre_at_zero_is_minus_min_h() {
        for model in [heston_preset(), jump_preset()] {
            let d = model.domain().unwrap();
            let (_, min_h) = golden_min(|u| model.h(u).unwrap(), d.u_minus + 1e-9, d.u_plus - 1e-9);
            let hs = legendre_h_star(&model, 0.0).unwrap().value;
            assert!(hs >= 0.0);
            assert_abs_diff_eq!(hs, -min_h, epsilon = 1e-12);
        }
    }

    #[test]
    fn rate_function_special_paths() {
        let model = heston_preset();
        let p = Partition::uniform(3.0, 3).unwrap();
        let x = DiscretePath::new(p.clone(), vec![0.0; 3]).unwrap();
        let hs0 = legendre_h_star(&model, 0.0).unwrap().value;
        assert_abs_diff_eq!(
            rate_function_discrete(&model, &x).unwrap(),
            3.0 * hs0,
            epsilon = 1e-12
        );

        let th = -0.8;
        let slope = model.h_prime(th).unwrap();
        let p1 = Partition::uniform(2.0, 1).unwrap();
        let x = DiscretePath::new(p1, vec![2.0 * slope]).unwrap();
        assert_abs_diff_eq!(
            rate_function_discrete(&model, &x).unwrap(),
            2.0 * (th * slope - model.h(th).unwrap()),
            epsilon = 1e-12
        );

        // zero of the rate function at the law-of-large-numbers path
        let s0 = model.h_prime(0.0).unwrap();
        let x = DiscretePath::new(p, vec![s0, 2.0 * s0, 3.0 * s0]).unwrap();
        assert!(rate_function_discrete(&model, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scaling_limits_at_origin_and_half() {
        let model = heston_preset();
        let report = verify_scaling_limits(&model, &[0.0, 0.5], &[1e-1, 1e-2, 1e-3], 1.0).unwrap();
        for row in report.rows.iter().filter(|r| r.u == 0.0) {
            assert!(row.psi_error < 1e-14 && row.phi_error < 1e-12);
        }
        let r = report
            .rows
            .iter()
            .find(|r| r.u == 0.5 && r.eps == 1e-3)
            .unwrap();
        assert!(r.phi_error < 1e-2 * r.phi_limit.abs() + 1e-6);
        let e1 = report
            .rows
            .iter()
            .find(|r| r.u == 0.5 && r.eps == 1e-1)
            .unwrap();
        assert!(r.phi_error < e1.phi_error);
        assert!(report.all_monotone());
    }
}
