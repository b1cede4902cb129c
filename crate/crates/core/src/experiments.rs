//! Parameter grids of the reference experiments, number formatting for the
//! CSV outputs, and a quick self-check suite.

use crate::exec::map_indexed;
use crate::ldp::{legendre_h_star, LimitingCumulant};
use crate::model::{
    heston_preset, jump_preset, DomainJ, HestonParams, JumpParams, ModelError, ModelSpec,
};
use crate::optimize::{objective_european_derivative, solve, PayoffKind, PayoffSpec};
use crate::pricing::{compare, grid_for, ComparisonRow, PricingError};
use crate::simulate::{simulate_p, simulate_p_theta, EsscherPlan, PathStream};

/// Euler steps used by every reference experiment.
pub const REFERENCE_STEPS: usize = 200;
/// Paths per estimator in every reference experiment.
pub const REFERENCE_PATHS: usize = 10_000;

/// Which payoff parameter a table varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Swept {
    Maturity,
    Strike,
}

impl Swept {
    pub fn column(&self) -> &'static str {
        match self {
            Swept::Maturity => "T",
            Swept::Strike => "K",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub id: u32,
    pub title: &'static str,
    pub model: ModelSpec,
    pub kind: PayoffKind,
    pub swept: Swept,
    /// Strike when the maturity is swept.
    pub strike: f64,
    /// Maturity when the strike is swept.
    pub maturity: f64,
    pub n_monitor: usize,
    pub values: Vec<f64>,
}

impl TableSpec {
    pub fn payoff(&self, value: f64) -> Result<PayoffSpec, PricingError> {
        let (k, t) = match self.swept {
            Swept::Maturity => (self.strike, value),
            Swept::Strike => (value, self.maturity),
        };
        let payoff = match self.kind {
            PayoffKind::EuropeanPut => PayoffSpec::european_put(k, t)?,
            PayoffKind::AsianPut => PayoffSpec::asian_put(k, t, self.n_monitor)?,
        };
        Ok(payoff)
    }

    /// Same grid on another model.
    pub fn with_model(&self, model: ModelSpec) -> Self {
        Self {
            model,
            ..self.clone()
        }
    }
}

const MATURITIES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 3.0];
const STRIKES: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];

/// Table definitions 1 to 7: Heston European puts (1-3), a Heston Asian put
/// (4) and European puts with jumps (5-7).
pub fn table(id: u32) -> Option<TableSpec> {
    let euro = |title, model, swept, strike, maturity, values: &[f64]| TableSpec {
        id,
        title,
        model,
        kind: PayoffKind::EuropeanPut,
        swept,
        strike,
        maturity,
        n_monitor: 1,
        values: values.to_vec(),
    };
    let spec = match id {
        1 => euro(
            "Heston European put, K = 1",
            heston_preset(),
            Swept::Maturity,
            1.0,
            f64::NAN,
            &MATURITIES,
        ),
        2 => euro(
            "Heston European put, T = 1",
            heston_preset(),
            Swept::Strike,
            f64::NAN,
            1.0,
            &STRIKES[1..],
        ),
        3 => euro(
            "Heston European put, T = 3",
            heston_preset(),
            Swept::Strike,
            f64::NAN,
            3.0,
            &STRIKES,
        ),
        4 => TableSpec {
            id,
            title: "Heston Asian put, T = 1.5, 200 dates",
            model: heston_preset(),
            kind: PayoffKind::AsianPut,
            swept: Swept::Strike,
            strike: f64::NAN,
            maturity: 1.5,
            n_monitor: 200,
            values: vec![0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3],
        },
        5 => euro(
            "Heston with jumps European put, K = 1",
            jump_table_model(),
            Swept::Maturity,
            1.0,
            f64::NAN,
            &MATURITIES,
        ),
        6 => euro(
            "Heston with jumps European put, T = 1",
            jump_table_model(),
            Swept::Strike,
            f64::NAN,
            1.0,
            &STRIKES,
        ),
        7 => euro(
            "Heston with jumps European put, T = 3",
            jump_table_model(),
            Swept::Strike,
            f64::NAN,
            3.0,
            &STRIKES,
        ),
        _ => return None,
    };
    Some(spec)
}

pub const TABLE_IDS: [u32; 7] = [1, 2, 3, 4, 5, 6, 7];

/// Runs every row of `spec`; each row uses the same `seed`.
pub fn run_table(
    spec: &TableSpec,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>, PricingError> {
    spec.values
        .iter()
        .map(|&value| compare(&spec.model, &spec.payoff(value)?, n_steps, n_paths, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigSpec {
    pub id: u32,
    pub title: &'static str,
    pub model: ModelSpec,
    pub payoff: PayoffSpec,
    pub thetas: Vec<f64>,
}

/// `theta` from -1 to 0 in steps of 0.02, ending exactly at 0.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=50).map(|i| -((50 - i) as f64) * 0.02 + 0.0).collect()
}

/// Jump model of the jump tables: the jump experiment's parameters with
/// `mu = V0 = 0.04`, the variance level under which those tables were
/// produced.
pub fn jump_table_model() -> ModelSpec {
    let p = HestonParams {
        mu: 0.04,
        v0: 0.04,
        ..*jump_preset().params()
    };
    ModelSpec::new(p, jump_preset().jumps().copied()).expect("valid preset")
}

/// Diffusive model with the jump experiment's Heston parameters.
pub fn fig1_model() -> ModelSpec {
    ModelSpec::heston(*jump_preset().params()).expect("valid preset")
}

/// Figure definitions: 1 is the diffusive sweep, 2 the sweep with jumps;
/// both price an at-the-money European put with `T = 1.5`.
pub fn fig(id: u32) -> Option<FigSpec> {
    let payoff = PayoffSpec::european_put(1.0, 1.5).expect("valid preset");
    let (title, model) = match id {
        1 => ("Estimator variance against theta, Heston", fig1_model()),
        2 => (
            "Estimator variance against theta, Heston with jumps",
            jump_preset(),
        ),
        _ => return None,
    };
    Some(FigSpec {
        id,
        title,
        model,
        payoff,
        thetas: default_theta_grid(),
    })
}

pub const FIG_IDS: [u32; 2] = [1, 2];

/// Formats `x` with `digits` significant digits in the style of C's `%g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Deliberate defects for exercising the self-check suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Adds a constant to `h'`.
    HPrimeOffset(f64),
}

struct Faulty<'a> {
    model: &'a ModelSpec,
    fault: Option<Fault>,
}

impl LimitingCumulant for Faulty<'_> {
    fn domain(&self) -> Result<DomainJ, ModelError> {
        self.model.domain()
    }

    fn h(&self, u: f64) -> Result<f64, ModelError> {
        self.model.h(u)
    }

    fn h_prime(&self, u: f64) -> Result<f64, ModelError> {
        let d = self.model.h_prime(u)?;
        Ok(match self.fault {
            Some(Fault::HPrimeOffset(c)) => d + c,
            None => d,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Runs the self-checks on the configured parameters. An inadmissible
/// configuration yields a single failed check.
pub fn validation_suite(
    heston: HestonParams,
    jumps: Option<JumpParams>,
    fault: Option<Fault>,
) -> Vec<Check> {
    let model = match ModelSpec::new(heston, jumps) {
        Ok(m) => m,
        Err(e) => return vec![check("admissibility", false, e.to_string())],
    };
    let mut out = vec![check(
        "admissibility",
        true,
        "chi(0) < 0 and chi(1) < 0".into(),
    )];
    let p = *model.params();
    let fmt = |e: f64| format!("max error {e:.3e}");
    let errored = |name: &str, e: ModelError| check(name, false, e.to_string());

    match (model.h(0.0), model.h(1.0)) {
        (Ok(a), Ok(b)) => {
            let e = a.abs().max(b.abs());
            out.push(check("h(0) = h(1) = 0", e < 1e-12, fmt(e)));
        }
        (Err(e), _) | (_, Err(e)) => out.push(errored("h(0) = h(1) = 0", e)),
    }
    match model.gamma(0.0) {
        Ok(g) => out.push(check(
            "gamma(0) = lambda",
            (g - p.lambda).abs() < 1e-12,
            fmt((g - p.lambda).abs()),
        )),
        Err(e) => out.push(errored("gamma(0) = lambda", e)),
    }

    let dom = match model.domain() {
        Ok(d) => d,
        Err(e) => {
            out.push(errored("domain", e));
            return out;
        }
    };
    let us = dom.interior_grid(9, 0.05);

    let initial = us.iter().all(|&u| {
        [-0.5, 0.0, 0.1].iter().all(|&w| {
            model
                .riccati(0.0, u, w)
                .is_ok_and(|r| r.psi == w && r.phi == 0.0)
        })
    });
    out.push(check(
        "psi(0, u, w) = w, phi(0, u, w) = 0",
        initial,
        "exact".into(),
    ));

    let mut semiflow = 0.0_f64;
    for &u in &us {
        for &(t, s) in &[(0.3, 0.4), (1.0, 0.5), (2.0, 1.5)] {
            if let (Ok(a), Ok(b)) = (model.riccati(t + s, u, 0.0), model.riccati(s, u, 0.0)) {
                if let Ok(c) = model.riccati(t, u, b.psi) {
                    semiflow = semiflow
                        .max((a.psi - c.psi).abs())
                        .max((a.phi - b.phi - c.phi).abs());
                }
            }
        }
    }
    out.push(check("Riccati semiflow", semiflow < 1e-9, fmt(semiflow)));

    let mut ode = 0.0_f64;
    for &u in &us {
        let (phi, psi) = rk4(&model, 2.0, u, 2000);
        match model.riccati(2.0, u, 0.0) {
            Ok(r) => ode = ode.max((r.phi - phi).abs()).max((r.psi - psi).abs()),
            Err(_) => ode = f64::INFINITY,
        }
    }
    out.push(check("closed form against RK4", ode < 1e-6, fmt(ode)));

    let faulty = Faulty {
        model: &model,
        fault,
    };
    let mut duality = 0.0_f64;
    for &u in dom.interior_grid(7, 0.1).iter() {
        let y = match model.h_prime(u) {
            Ok(y) => y,
            Err(e) => {
                out.push(errored("Legendre duality", e));
                return out;
            }
        };
        let exact = u * y - model.h(u).unwrap_or(f64::NAN);
        match legendre_h_star(&faulty, y) {
            Ok(lp) => duality = duality.max((lp.value - exact).abs()),
            Err(_) => duality = f64::INFINITY,
        }
    }
    out.push(check(
        "Legendre duality h*(h'(u)) = u h'(u) - h(u)",
        duality < 1e-8,
        fmt(duality),
    ));

    let Ok(payoff) = PayoffSpec::european_put(p.s0, 1.0) else {
        return out;
    };
    let optimum = match solve(&model, &payoff) {
        Ok(o) => {
            let stationary = objective_european_derivative(&model, &payoff, o.total_mass())
                .map_or(f64::INFINITY, f64::abs);
            out.push(check(
                "European optimizer stationarity",
                stationary < 1e-8,
                format!(
                    "theta* = {:.6}, |derivative| = {stationary:.3e}",
                    o.total_mass()
                ),
            ));
            Some(o)
        }
        Err(e) => {
            out.push(check(
                "European optimizer stationarity",
                false,
                e.to_string(),
            ));
            None
        }
    };

    let Ok(grid) = grid_for(&payoff, 50) else {
        return out;
    };
    if let Ok(plan) = EsscherPlan::identity(&model, &grid) {
        let same = (0..50).all(|i| {
            let a = simulate_p(&model, &grid, &mut PathStream::new(17, i));
            simulate_p_theta(&model, &plan, &grid, &mut PathStream::new(17, i))
                .is_ok_and(|b| a == b)
        });
        out.push(check(
            "identity tilt reproduces the original paths",
            same,
            "50 paths, bitwise".into(),
        ));
    }

    let n = 20_000;
    let theta = optimum.as_ref().map_or(0.0, |o| o.total_mass());
    let draws = map_indexed(n, |i| {
        let path = simulate_p(&model, &grid, &mut PathStream::new(23, i));
        (path.x_terminal().exp(), (theta * path.x_terminal()).exp())
    });
    let (m1, se1) = mean_se(draws.iter().map(|d| d.0));
    out.push(check(
        "martingale E[exp(X_T)] = 1",
        (m1 - 1.0).abs() < 4.0 * se1,
        format!("mean {m1:.5}, 4 SE {:.2e}", 4.0 * se1),
    ));
    if let Some(o) = optimum {
        if let Ok(plan) = EsscherPlan::build(&model, o.measure.clone(), &grid) {
            let target = plan.log_normalizer(p.v0).exp();
            let (m2, se2) = mean_se(draws.iter().map(|d| d.1));
            out.push(check(
                "tilt normalizer E[exp(theta* X_T)]",
                (m2 - target).abs() < 4.0 * se2,
                format!("mean {m2:.5} against {target:.5}, 4 SE {:.2e}", 4.0 * se2),
            ));
        }
    }
    out
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn rk4(model: &ModelSpec, t: f64, u: f64, steps: usize) -> (f64, f64) {
    let dt = t / steps as f64;
    let (mut phi, mut psi) = (0.0, 0.0);
    let f = |w: f64| model.f_eval(u, w).unwrap_or(f64::NAN);
    let r = |w: f64| model.r_eval(u, w);
    for _ in 0..steps {
        let k1 = r(psi);
        let k2 = r(psi + 0.5 * dt * k1);
        let k3 = r(psi + 0.5 * dt * k2);
        let k4 = r(psi + dt * k3);
        phi += dt / 6.0
            * (f(psi)
                + 2.0 * f(psi + 0.5 * dt * k1)
                + 2.0 * f(psi + 0.5 * dt * k2)
                + f(psi + dt * k3));
        psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    (phi, psi)
}
