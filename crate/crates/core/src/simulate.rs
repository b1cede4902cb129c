//! Full-truncation Euler paths of `(X, V)` under the original measure and
//! under the Esscher-tilted measure induced by a signed discrete measure.
//!
//! Under the tilted measure the dynamics stay affine with time-inhomogeneous
//! coefficients driven by `Psi(tau_t - t, Theta_j, ..., Theta_n)`, where
//! `tau_t` is the first monitoring date at or after `t`. With jumps, the jump
//! intensity becomes `r alpha / (alpha + theta)` and sizes become
//! `-Exp(alpha + theta)`.

use crate::exec::map_indexed;
use crate::ldp::{LdpError, Partition, SignedDiscreteMeasure};
use crate::model::{JumpParams, ModelError, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use thiserror::Error;

/// Relative tolerance for a monitoring date to count as a grid node.
const NODE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("monitoring date {time} does not fall on the Euler grid")]
    OffGrid { time: f64 },
    #[error("measure support does not match the grid's monitoring dates")]
    SupportMismatch,
    #[error("plan was built for {expected} Euler steps, grid has {got}")]
    StepMismatch { expected: usize, got: usize },
    #[error("infeasible plan at monitoring date {index}: {source}")]
    InfeasiblePlan { index: usize, source: ModelError },
    #[error("jump law cannot be tilted by theta = {theta}: alpha + theta must be positive (alpha = {alpha})")]
    JumpTilt { theta: f64, alpha: f64 },
    #[error("tilted jump sampling supports a single monitoring date, got {n}")]
    JumpsWithMultipleDates { n: usize },
}

/// Uniform Euler grid on `[0, T]` whose nodes include every monitoring date.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    maturity: f64,
    n_steps: usize,
    dt: f64,
    monitoring: Partition,
    monitor_idx: Vec<usize>,
}

impl PathGrid {
    pub fn new(monitoring: Partition, n_steps: usize) -> Result<Self, SimError> {
        if n_steps < monitoring.len() {
            return Err(SimError::InvalidGrid(
                "fewer Euler steps than monitoring dates",
            ));
        }
        let maturity = monitoring.maturity();
        let dt = maturity / n_steps as f64;
        let monitor_idx = monitoring
            .times()
            .iter()
            .map(|&t| {
                let idx = (t / dt).round() as usize;
                if (idx as f64 * dt - t).abs() <= NODE_TOL * maturity && idx >= 1 {
                    Ok(idx)
                } else {
                    Err(SimError::OffGrid { time: t })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            maturity,
            n_steps,
            dt,
            monitoring,
            monitor_idx,
        })
    }

    /// `n_monitor` equally spaced dates ending at `maturity`.
    pub fn uniform(maturity: f64, n_steps: usize, n_monitor: usize) -> Result<Self, SimError> {
        Self::new(Partition::uniform(maturity, n_monitor)?, n_steps)
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn monitoring(&self) -> &Partition {
        &self.monitoring
    }

    pub fn monitor_idx(&self) -> &[usize] {
        &self.monitor_idx
    }

    /// Grid node reached by a jump at `time`: the first node at or after it.
    fn jump_node(&self, time: f64) -> usize {
        ((time / self.dt).ceil() as usize).clamp(1, self.n_steps)
    }
}

/// Tilted-measure coefficients for one signed measure on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EsscherPlan {
    measure: SignedDiscreteMeasure,
    /// `w_j = Psi(t_{j+1} - t_j, Theta_{j+1}, ..., Theta_n)`, zero for the
    /// last date.
    terminal_w: Vec<f64>,
    phi_at_zero: f64,
    psi_at_zero: f64,
    identity: bool,
    n_steps: usize,
    /// `(Theta_{tau_t}, Psi(tau_t - t_k, ...))` for every Euler step `k`.
    steps: Vec<(f64, f64)>,
    negative_lambda_steps: usize,
    jump_theta: Option<f64>,
}

impl EsscherPlan {
    pub fn build(
        model: &ModelSpec,
        measure: SignedDiscreteMeasure,
        grid: &PathGrid,
    ) -> Result<Self, SimError> {
        let support = measure.support();
        let same_support = support.len() == grid.monitoring.len()
            && support
                .times()
                .iter()
                .zip(grid.monitoring.times())
                .all(|(a, b)| (a - b).abs() <= NODE_TOL * grid.maturity);
        if !same_support {
            return Err(SimError::SupportMismatch);
        }
        let n = support.len();
        let jump_theta = match model.jumps() {
            Some(_) if n > 1 && !measure.is_zero() => {
                return Err(SimError::JumpsWithMultipleDates { n })
            }
            Some(j) => {
                let theta = measure.total_mass();
                if !(j.alpha() + theta > 0.0) {
                    return Err(SimError::JumpTilt {
                        theta,
                        alpha: j.alpha(),
                    });
                }
                Some(theta)
            }
            None => None,
        };
        if measure.is_zero() {
            return Ok(Self {
                measure,
                terminal_w: vec![0.0; n],
                phi_at_zero: 0.0,
                psi_at_zero: 0.0,
                identity: true,
                n_steps: grid.n_steps,
                steps: vec![(0.0, 0.0); grid.n_steps],
                negative_lambda_steps: 0,
                jump_theta: jump_theta.map(|_| 0.0),
            });
        }
        let cumulative = measure.cumulative();
        let increments = support.increments();
        let mut terminal_w = vec![0.0; n];
        let mut w = 0.0;
        let mut phi = 0.0;
        for j in (0..n).rev() {
            terminal_w[j] = w;
            let r = model
                .riccati(increments[j], cumulative[j], w)
                .map_err(|source| SimError::InfeasiblePlan { index: j, source })?;
            phi += r.phi;
            w = r.psi;
        }

        let p = model.params();
        let mut steps = Vec::with_capacity(grid.n_steps);
        let mut negative_lambda_steps = 0;
        let mut j = 0;
        for k in 0..grid.n_steps {
            while grid.monitor_idx[j] < k + 1 {
                j += 1;
            }
            let s = (grid.monitor_idx[j] - k) as f64 * grid.dt;
            let theta = cumulative[j];
            let psi = model
                .psi(s, theta, terminal_w[j])
                .map_err(|source| SimError::InfeasiblePlan { index: j, source })?;
            if tilted_lambda(p.lambda, p.zeta, p.rho, theta, psi) <= 0.0 {
                negative_lambda_steps += 1;
            }
            steps.push((theta, psi));
        }

        Ok(Self {
            measure,
            terminal_w,
            phi_at_zero: phi,
            psi_at_zero: w,
            identity: false,
            n_steps: grid.n_steps,
            steps,
            negative_lambda_steps,
            jump_theta,
        })
    }

    /// Plan of the zero measure: the original measure.
    pub fn identity(model: &ModelSpec, grid: &PathGrid) -> Result<Self, SimError> {
        Self::build(
            model,
            SignedDiscreteMeasure::zero(grid.monitoring.clone()),
            grid,
        )
    }

    pub fn measure(&self) -> &SignedDiscreteMeasure {
        &self.measure
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `Psi(s, Theta_j, ..., Theta_n)` for `s` in `(0, t_j - t_{j-1}]`
    /// (zero-based `j`).
    pub fn psi_at(&self, model: &ModelSpec, j: usize, s: f64) -> Result<f64, ModelError> {
        if self.identity {
            return Ok(0.0);
        }
        model.psi(s, self.measure.cumulative()[j], self.terminal_w[j])
    }

    pub fn phi_at_zero(&self) -> f64 {
        self.phi_at_zero
    }

    pub fn psi_at_zero(&self) -> f64 {
        self.psi_at_zero
    }

    /// `log E[exp(sum_j theta_j X_{t_j})] = Phi(t_1, ...) + Psi(t_1, ...) V_0`.
    pub fn log_normalizer(&self, v0: f64) -> f64 {
        if self.identity {
            0.0
        } else {
            self.phi_at_zero + self.psi_at_zero * v0
        }
    }

    /// `(Theta_{tau_t}, Psi(tau_t - t_k, ...))` used by Euler step `k`.
    pub fn step_coefficients(&self, k: usize) -> (f64, f64) {
        self.steps[k]
    }

    /// `lambda_tilde` at Euler step `k`.
    pub fn lambda_tilde(&self, model: &ModelSpec, k: usize) -> f64 {
        let p = model.params();
        let (theta, psi) = self.steps[k];
        tilted_lambda(p.lambda, p.zeta, p.rho, theta, psi)
    }

    /// `mu_tilde = lambda mu / lambda_tilde` at Euler step `k`. Only for
    /// reporting; the Euler step never divides by `lambda_tilde`.
    pub fn mu_tilde(&self, model: &ModelSpec, k: usize) -> f64 {
        let p = model.params();
        p.lambda * p.mu / self.lambda_tilde(model, k)
    }

    /// Number of Euler steps with `lambda_tilde <= 0`.
    pub fn negative_lambda_steps(&self) -> usize {
        self.negative_lambda_steps
    }

    /// Tilt applied to the jump law, when the model has jumps.
    pub fn jump_theta(&self) -> Option<f64> {
        self.jump_theta
    }
}

fn tilted_lambda(lambda: f64, zeta: f64, rho: f64, theta: f64, psi: f64) -> f64 {
    lambda - zeta * theta * rho - zeta * zeta * psi
}

/// Counter-based random stream: one root seed, one substream per path.
#[derive(Debug, Clone)]
pub struct PathStream {
    rng: ChaCha8Rng,
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Strictly positive standard exponential draw.
    pub fn standard_exponential(&mut self) -> f64 {
        loop {
            let e: f64 = self.rng.sample(Exp1);
            if e > 0.0 {
                return e;
            }
        }
    }

    /// Poisson count by inversion of the cumulative distribution.
    pub fn poisson(&mut self, mean: f64) -> usize {
        if !(mean > 0.0) {
            return 0;
        }
        let u = self.uniform();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0;
        while u >= cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Compound Poisson jumps on `[0, horizon)` under the measure tilted by
/// `theta`: intensity `r alpha / (alpha + theta)`, sizes `-Exp(alpha + theta)`.
/// Sorted by time.
pub fn sample_jumps(
    params: &JumpParams,
    theta: f64,
    horizon: f64,
    stream: &mut PathStream,
) -> Result<Vec<Jump>, SimError> {
    let size_rate = params.alpha() + theta;
    if !(size_rate > 0.0) {
        return Err(SimError::JumpTilt {
            theta,
            alpha: params.alpha(),
        });
    }
    // keep theta = 0 bitwise equal to the untransformed law
    let intensity = if theta == 0.0 {
        params.rate()
    } else {
        params.rate() * params.alpha() / size_rate
    };
    let count = stream.poisson(intensity * horizon);
    let mut jumps: Vec<Jump> = (0..count)
        .map(|_| {
            let time = stream.uniform() * horizon;
            let size = -stream.standard_exponential() / size_rate;
            Jump { time, size }
        })
        .collect();
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(jumps)
}

/// One simulated path on a [`PathGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Log-price at every node, `x[0] = 0`.
    pub x: Vec<f64>,
    /// Truncated variance `max(V, 0)` at every node.
    pub v: Vec<f64>,
    /// `x` at the monitoring dates.
    pub x_monitor: Vec<f64>,
    /// Jumps, when the model has them.
    pub jump_log: Option<Vec<Jump>>,
}

impl Path {
    pub fn x_terminal(&self) -> f64 {
        *self.x.last().expect("non-empty path")
    }
}

/// Euler path under the original measure.
pub fn simulate_p(model: &ModelSpec, grid: &PathGrid, stream: &mut PathStream) -> Path {
    let jumps = model
        .jumps()
        .map(|j| sample_jumps(j, 0.0, grid.maturity, stream).expect("untilted jump law is valid"));
    euler(model, grid, stream, |_| (0.0, 0.0), jumps)
}

/// Euler path under the tilted measure described by `plan`.
pub fn simulate_p_theta(
    model: &ModelSpec,
    plan: &EsscherPlan,
    grid: &PathGrid,
    stream: &mut PathStream,
) -> Result<Path, SimError> {
    if plan.n_steps != grid.n_steps {
        return Err(SimError::StepMismatch {
            expected: plan.n_steps,
            got: grid.n_steps,
        });
    }
    let jumps = match model.jumps() {
        Some(j) => Some(sample_jumps(
            j,
            plan.jump_theta.unwrap_or(0.0),
            grid.maturity,
            stream,
        )?),
        None => None,
    };
    Ok(euler(model, grid, stream, |k| plan.steps[k], jumps))
}

/// `n_paths` paths on substreams `0..n_paths` of `seed`, under the original
/// measure when `plan` is `None`.
pub fn simulate_batch(
    model: &ModelSpec,
    plan: Option<&EsscherPlan>,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Path>, SimError> {
    if let Some(plan) = plan {
        if plan.n_steps != grid.n_steps {
            return Err(SimError::StepMismatch {
                expected: plan.n_steps,
                got: grid.n_steps,
            });
        }
    }
    map_indexed(n_paths, |i| {
        let mut stream = PathStream::new(seed, i);
        match plan {
            Some(plan) => simulate_p_theta(model, plan, grid, &mut stream),
            None => Ok(simulate_p(model, grid, &mut stream)),
        }
    })
    .into_iter()
    .collect()
}

fn euler<F>(
    model: &ModelSpec,
    grid: &PathGrid,
    stream: &mut PathStream,
    coefficients: F,
    jumps: Option<Vec<Jump>>,
) -> Path
where
    F: Fn(usize) -> (f64, f64),
{
    let p = model.params();
    let delta = model.delta();
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let lambda_mu = p.lambda * p.mu;

    let mut x = Vec::with_capacity(grid.n_steps + 1);
    let mut v = Vec::with_capacity(grid.n_steps + 1);
    let (mut x_k, mut v_raw) = (0.0_f64, p.v0);
    x.push(x_k);
    v.push(v_raw.max(0.0));

    let jump_list = jumps.as_deref().unwrap_or(&[]);
    let mut next_jump = 0;
    for k in 0..grid.n_steps {
        let (theta, psi) = coefficients(k);
        let v_plus = v_raw.max(0.0);
        let vol = v_plus.sqrt();
        let z1 = stream.standard_normal();
        let z2 = stream.standard_normal();
        let dw1 = sqrt_dt * z1;
        let dw2 = sqrt_dt * (p.rho * z1 + rho_bar * z2);
        let lambda_tilde = tilted_lambda(p.lambda, p.zeta, p.rho, theta, psi);

        let mut jump = 0.0;
        while next_jump < jump_list.len() && grid.jump_node(jump_list[next_jump].time) == k + 1 {
            jump += jump_list[next_jump].size;
            next_jump += 1;
        }
        x_k += (delta + (theta + p.zeta * p.rho * psi - 0.5) * v_plus) * dt + vol * dw1 + jump;
        v_raw += (lambda_mu - lambda_tilde * v_plus) * dt + p.zeta * vol * dw2;
        x.push(x_k);
        v.push(v_raw.max(0.0));
    }
    let x_monitor = grid.monitor_idx.iter().map(|&i| x[i]).collect();
    Path {
        x,
        v,
        x_monitor,
        jump_log: jumps,
    }
}
