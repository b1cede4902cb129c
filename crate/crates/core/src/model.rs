//! Closed-form Laplace-transform machinery for the Heston model, optionally
//! extended with negative exponential jumps in the log-price.
//!
//! For both variants the joint Laplace transform of `(X_t, V_t)` is
//! exponentially affine,
//!
//! ```text
//! E[exp(u X_t + w V_t)] = exp(phi(t, u, w) + psi(t, u, w) V_0 + u X_0),
//! ```
//!
//! where `phi` and `psi` solve the generalized Riccati system
//! `d/dt phi = F(u, psi)`, `d/dt psi = R(u, psi)`. Everything here is a pure
//! function of immutable parameters.

use thiserror::Error;

/// Relative slack under which a negative radicand of `gamma` is treated as
/// rounding noise and clamped to zero.
const RADICAND_CLAMP: f64 = 1e-14;

/// Distance kept from the jump-transform pole `-alpha` when clipping `J`.
pub const POLE_GUARD: f64 = 1e-9;

/// Above this value of `gamma t / 2` the hyperbolic functions are evaluated
/// through their exponentially scaled forms.
const LARGE_ARGUMENT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("model is not admissible: chi(0) = {chi0}, chi(1) = {chi1}, both must be negative")]
    Inadmissible { chi0: f64, chi1: f64 },
    #[error("|rho| = 1 makes the domain of h degenerate and is not supported")]
    DegenerateCorrelation,
    #[error("u = {u} lies outside the domain J = [{lower}, {upper}]")]
    OutsideDomain { u: f64, lower: f64, upper: f64 },
    #[error("u = {u} is at or beyond the jump-transform pole -alpha = {pole}")]
    JumpPole { u: f64, pole: f64 },
    #[error(
        "Riccati solution for u = {u}, w = {w} explodes at t = {blow_up_time} (requested t = {t})"
    )]
    BlowUp {
        t: f64,
        u: f64,
        w: f64,
        blow_up_time: f64,
    },
}

/// Diffusive Heston parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    /// Mean-reversion speed of the variance.
    pub lambda: f64,
    /// Long-run variance level.
    pub mu: f64,
    /// Volatility of variance.
    pub zeta: f64,
    /// Correlation between the two Brownian drivers.
    pub rho: f64,
    /// Initial variance.
    pub v0: f64,
    /// Initial spot.
    pub s0: f64,
}

impl HestonParams {
    pub fn new(
        lambda: f64,
        mu: f64,
        zeta: f64,
        rho: f64,
        v0: f64,
        s0: f64,
    ) -> Result<Self, ModelError> {
        let params = Self {
            lambda,
            mu,
            zeta,
            rho,
            v0,
            s0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("zeta", self.zeta)?;
        positive("v0", self.v0)?;
        positive("s0", self.s0)?;
        if !self.rho.is_finite() || self.rho.abs() > 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must lie in [-1, 1]",
            });
        }
        let chi0 = -self.lambda;
        let chi1 = self.zeta * self.rho - self.lambda;
        if !(chi0 < 0.0 && chi1 < 0.0) {
            return Err(ModelError::Inadmissible { chi0, chi1 });
        }
        Ok(())
    }

    fn radicand(&self, u: f64) -> (f64, f64) {
        let a = self.lambda / self.zeta - self.rho * u;
        let c = u - 0.5;
        (a * a + 0.25 - c * c, a * a + 0.25 + c * c)
    }

    /// `gamma(u) = zeta * sqrt((lambda/zeta - rho u)^2 + 1/4 - (u - 1/2)^2)`.
    pub fn gamma(&self, u: f64) -> Result<f64, ModelError> {
        let (rad, scale) = self.radicand(u);
        if rad >= 0.0 {
            Ok(self.zeta * rad.sqrt())
        } else if rad >= -RADICAND_CLAMP * scale.max(1.0) {
            Ok(0.0)
        } else {
            let (lower, upper) = self.radicand_roots();
            Err(ModelError::OutsideDomain { u, lower, upper })
        }
    }

    /// Roots of the radicand of `gamma`; `(-inf, inf)` when `|rho| = 1`.
    fn radicand_roots(&self) -> (f64, f64) {
        let a = 1.0 - self.rho * self.rho;
        let k = self.lambda / self.zeta;
        let b = 0.5 - k * self.rho;
        if a <= 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let disc = (b * b + k * k * a).sqrt();
        let upper = (b + disc) / a;
        // product of the roots is -k^2 / a; avoids cancellation in b - disc
        let lower = -(k * k) / (a * upper);
        (lower, upper)
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

/// Compound Poisson jumps with `Neg-Exp(alpha)` sizes at rate `r`.
///
/// The compensating drift `delta = r / (alpha + 1)` that makes `exp(X)` a
/// martingale is derived, never supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpParams {
    r: f64,
    alpha: f64,
    delta: f64,
}

impl JumpParams {
    pub fn new(r: f64, alpha: f64) -> Result<Self, ModelError> {
        positive("r", r)?;
        positive("alpha", alpha)?;
        Ok(Self {
            r,
            alpha,
            delta: r / (alpha + 1.0),
        })
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Jump contribution to the cumulant of `X`:
    /// `r u (u - 1) / ((alpha + 1)(alpha + u))`.
    pub fn kappa_tilde(&self, u: f64) -> Result<f64, ModelError> {
        self.check_pole(u)?;
        Ok(self.r * u * (u - 1.0) / ((self.alpha + 1.0) * (self.alpha + u)))
    }

    /// Derivative of [`JumpParams::kappa_tilde`].
    pub fn kappa_tilde_prime(&self, u: f64) -> Result<f64, ModelError> {
        self.check_pole(u)?;
        let s = self.alpha + u;
        Ok(self.r * (u * u + 2.0 * self.alpha * u - self.alpha) / ((self.alpha + 1.0) * s * s))
    }

    fn check_pole(&self, u: f64) -> Result<(), ModelError> {
        if u + self.alpha > 0.0 {
            Ok(())
        } else {
            Err(ModelError::JumpPole {
                u,
                pole: -self.alpha,
            })
        }
    }
}

/// Effective domain `J = [u_minus, u_plus]` of the limiting cumulant `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainJ {
    pub u_minus: f64,
    pub u_plus: f64,
}

impl DomainJ {
    pub fn contains(&self, u: f64) -> bool {
        u >= self.u_minus && u <= self.u_plus
    }

    pub fn width(&self) -> f64 {
        self.u_plus - self.u_minus
    }

    /// Point at fraction `frac` of the way from `u_minus` to `u_plus`.
    pub fn lerp(&self, frac: f64) -> f64 {
        self.u_minus + frac * self.width()
    }

    /// `m` equally spaced points strictly inside `J`, keeping a relative
    /// margin `margin` from either endpoint.
    pub fn interior_grid(&self, m: usize, margin: f64) -> Vec<f64> {
        if m == 1 {
            return vec![self.lerp(0.5)];
        }
        (0..m)
            .map(|i| self.lerp(margin + (1.0 - 2.0 * margin) * i as f64 / (m - 1) as f64))
            .collect()
    }
}

/// `(phi, psi)` at one `(t, u, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiValue {
    pub phi: f64,
    pub psi: f64,
}

struct RiccatiParts {
    psi: f64,
    d: f64,
    x: f64,
}

/// Heston model, with or without jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    heston: HestonParams,
    jumps: Option<JumpParams>,
}

impl ModelSpec {
    pub fn new(heston: HestonParams, jumps: Option<JumpParams>) -> Result<Self, ModelError> {
        heston.validate()?;
        if heston.rho.abs() >= 1.0 {
            return Err(ModelError::DegenerateCorrelation);
        }
        Ok(Self { heston, jumps })
    }

    pub fn heston(heston: HestonParams) -> Result<Self, ModelError> {
        Self::new(heston, None)
    }

    pub fn with_jumps(heston: HestonParams, jumps: JumpParams) -> Result<Self, ModelError> {
        Self::new(heston, Some(jumps))
    }

    pub fn params(&self) -> &HestonParams {
        &self.heston
    }

    pub fn jumps(&self) -> Option<&JumpParams> {
        self.jumps.as_ref()
    }

    /// Drift compensator of the log-price; zero without jumps.
    pub fn delta(&self) -> f64 {
        self.jumps.map_or(0.0, |j| j.delta())
    }

    /// `chi(u) = d/dw R(u, w) at w = 0`.
    pub fn chi(&self, u: f64) -> f64 {
        self.heston.zeta * self.heston.rho * u - self.heston.lambda
    }

    fn kappa(&self, u: f64) -> Result<f64, ModelError> {
        self.jumps.map_or(Ok(0.0), |j| j.kappa_tilde(u))
    }

    fn kappa_prime(&self, u: f64) -> Result<f64, ModelError> {
        self.jumps.map_or(Ok(0.0), |j| j.kappa_tilde_prime(u))
    }

    pub fn f_eval(&self, u: f64, w: f64) -> Result<f64, ModelError> {
        Ok(self.heston.lambda * self.heston.mu * w + self.kappa(u)?)
    }

    pub fn r_eval(&self, u: f64, w: f64) -> f64 {
        let p = &self.heston;
        0.5 * p.zeta * p.zeta * w * w + p.zeta * p.rho * u * w - p.lambda * w + 0.5 * (u * u - u)
    }

    pub fn gamma(&self, u: f64) -> Result<f64, ModelError> {
        self.heston.gamma(u)
    }

    /// Domain of `h`. With jumps the lower end is clipped to stay
    /// [`POLE_GUARD`] above `-alpha`.
    pub fn domain(&self) -> Result<DomainJ, ModelError> {
        if self.heston.rho.abs() >= 1.0 {
            return Err(ModelError::DegenerateCorrelation);
        }
        let (mut u_minus, u_plus) = self.heston.radicand_roots();
        if let Some(j) = &self.jumps {
            u_minus = u_minus.max(-j.alpha() + POLE_GUARD);
        }
        Ok(DomainJ { u_minus, u_plus })
    }

    fn check_domain(&self, u: f64) -> Result<f64, ModelError> {
        let g = self.gamma(u)?;
        if let Some(j) = &self.jumps {
            j.check_pole(u)?;
        }
        Ok(g)
    }

    /// Stable root `w(u)` of `R(u, .)`, the long-time limit of `psi`.
    pub fn stable_equilibrium(&self, u: f64) -> Result<f64, ModelError> {
        let g = self.gamma(u)?;
        Ok(self.equilibrium_centre(u) - g / (self.heston.zeta * self.heston.zeta))
    }

    /// Unstable root of `R(u, .)`; the upper edge of the basin of attraction.
    pub fn unstable_equilibrium(&self, u: f64) -> Result<f64, ModelError> {
        let g = self.gamma(u)?;
        Ok(self.equilibrium_centre(u) + g / (self.heston.zeta * self.heston.zeta))
    }

    fn equilibrium_centre(&self, u: f64) -> f64 {
        let p = &self.heston;
        (p.lambda / p.zeta - p.rho * u) / p.zeta
    }

    /// Closed-form solution of the Riccati system.
    pub fn riccati(&self, t: f64, u: f64, w: f64) -> Result<RiccatiValue, ModelError> {
        let g = self.check_domain(u)?;
        if t == 0.0 {
            return Ok(RiccatiValue { phi: 0.0, psi: w });
        }
        let parts = self.riccati_parts(g, t, u, w)?;
        let p = &self.heston;
        let x = parts.x;
        let ln_cosh = x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2;
        let k = p.lambda / p.zeta;
        let phi = p.mu * k * (k - p.rho * u) * t
            - 2.0 * p.mu * p.lambda / (p.zeta * p.zeta) * (ln_cosh + parts.d.ln())
            + t * self.kappa(u)?;
        Ok(RiccatiValue {
            phi,
            psi: parts.psi,
        })
    }

    /// `psi` alone; skips the logarithms needed for `phi`.
    pub fn psi(&self, t: f64, u: f64, w: f64) -> Result<f64, ModelError> {
        let g = self.check_domain(u)?;
        if t == 0.0 {
            return Ok(w);
        }
        Ok(self.riccati_parts(g, t, u, w)?.psi)
    }

    fn riccati_parts(&self, g: f64, t: f64, u: f64, w: f64) -> Result<RiccatiParts, ModelError> {
        let p = &self.heston;
        let z2 = p.zeta * p.zeta;
        let a = p.lambda - p.zeta * p.rho * u - z2 * w;
        let x = 0.5 * g * t;
        // d = 1 + eta tanh(x), written so that gamma = 0 is a regular point
        let (d, g_tanh) = if x > LARGE_ARGUMENT {
            let eta = a / g;
            let e = (-2.0 * x).exp();
            (((1.0 + eta) + (1.0 - eta) * e) / (1.0 + e), g * x.tanh())
        } else {
            let tanh_over_g = if g > 0.0 { x.tanh() / g } else { 0.5 * t };
            (1.0 + a * tanh_over_g, g * g * tanh_over_g)
        };
        if !(d > 0.0) {
            return Err(ModelError::BlowUp {
                t,
                u,
                w,
                blow_up_time: blow_up_time(g, a),
            });
        }
        Ok(RiccatiParts {
            psi: self.equilibrium_centre(u) - (g_tanh + a) / (z2 * d),
            d,
            x,
        })
    }

    pub fn phi(&self, t: f64, u: f64, w: f64) -> Result<f64, ModelError> {
        self.riccati(t, u, w).map(|r| r.phi)
    }

    /// Limiting cumulant `h(u) = F(u, w(u))`.
    pub fn h(&self, u: f64) -> Result<f64, ModelError> {
        let g = self.check_domain(u)?;
        let p = &self.heston;
        let k = p.lambda / p.zeta;
        Ok(p.mu * k * (k - p.rho * u) - p.mu * p.lambda / (p.zeta * p.zeta) * g + self.kappa(u)?)
    }

    /// Derivative of `h`; `+inf` / `-inf` at the endpoints where `gamma`
    /// vanishes.
    pub fn h_prime(&self, u: f64) -> Result<f64, ModelError> {
        let g = self.check_domain(u)?;
        let p = &self.heston;
        let k = p.lambda / p.zeta;
        let n = -p.rho * (k - p.rho * u) - (u - 0.5);
        let diffusive = if g > 0.0 {
            -p.mu * p.lambda * p.rho / p.zeta - p.mu * p.lambda * n / g
        } else if n > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        Ok(diffusive + self.kappa_prime(u)?)
    }
}

fn blow_up_time(g: f64, a: f64) -> f64 {
    if g > 0.0 {
        let eta = a / g;
        if eta < -1.0 {
            2.0 / g * (-1.0 / eta).atanh()
        } else {
            f64::INFINITY
        }
    } else if a < 0.0 {
        -2.0 / a
    } else {
        f64::INFINITY
    }
}

/// Heston parameters of the diffusive experiments.
pub fn heston_preset() -> ModelSpec {
    ModelSpec::heston(HestonParams::new(1.15, 0.04, 0.2, -0.4, 0.04, 1.0).expect("valid preset"))
        .expect("valid preset")
}

/// Heston-with-jumps parameters of the jump experiments.
pub fn jump_preset() -> ModelSpec {
    ModelSpec::with_jumps(
        HestonParams::new(1.1, 0.7, 0.3, -0.5, 1.3, 1.0).expect("valid preset"),
        JumpParams::new(2.0, 3.0).expect("valid preset"),
    )
    .expect("valid preset")
}
