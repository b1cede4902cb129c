//! JSON configuration, command-line overrides, and their resolution into
//! model and payoff parameters.

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use esscher_core::model::{heston_preset, HestonParams, JumpParams, ModelSpec};
use esscher_core::optimize::{PayoffKind, PayoffSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub payoff: PayoffConfig,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub zeta: Option<f64>,
    pub rho: Option<f64>,
    pub v0: Option<f64>,
    pub s0: Option<f64>,
    pub jumps: Option<JumpConfig>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    /// `false` removes the jumps of a preset.
    pub enabled: Option<bool>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: Option<Kind>,
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
    pub n_monitor: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    European,
    Asian,
}

/// Flags shared by every subcommand. Each one overrides the configuration
/// field of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Paths per estimator.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Euler steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Full-precision numbers instead of 6 significant digits.
    #[arg(long)]
    pub raw: bool,
    /// Worker threads (defaults to one per core).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Leave wall-clock columns empty so that output is byte-stable.
    #[arg(long)]
    pub no_timing: bool,

    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub zeta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub v0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub s0: Option<f64>,
    /// Jump intensity; enables jumps.
    #[arg(long, allow_negative_numbers = true)]
    pub jump_rate: Option<f64>,
    /// Exponential rate of the jump sizes; enables jumps.
    #[arg(long, allow_negative_numbers = true)]
    pub jump_alpha: Option<f64>,
    /// Remove jumps.
    #[arg(long, conflicts_with_all = ["jump_rate", "jump_alpha"])]
    pub no_jumps: bool,

    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long, allow_negative_numbers = true)]
    pub strike: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub maturity: Option<f64>,
    /// Monitoring dates of an Asian payoff.
    #[arg(long)]
    pub n_monitor: Option<usize>,
}

/// Raw model parameters before admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSettings {
    pub lambda: f64,
    pub mu: f64,
    pub zeta: f64,
    pub rho: f64,
    pub v0: f64,
    pub s0: f64,
    pub jumps: Option<JumpSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpSettings {
    pub r: f64,
    pub alpha: f64,
}

impl ModelSettings {
    pub fn from_model(model: &ModelSpec) -> Self {
        let p = model.params();
        Self {
            lambda: p.lambda,
            mu: p.mu,
            zeta: p.zeta,
            rho: p.rho,
            v0: p.v0,
            s0: p.s0,
            jumps: model.jumps().map(|j| JumpSettings {
                r: j.rate(),
                alpha: j.alpha(),
            }),
        }
    }

    pub fn heston(&self) -> HestonParams {
        HestonParams {
            lambda: self.lambda,
            mu: self.mu,
            zeta: self.zeta,
            rho: self.rho,
            v0: self.v0,
            s0: self.s0,
        }
    }

    pub fn jump_params(&self) -> Result<Option<JumpParams>, esscher_core::ModelError> {
        self.jumps
            .map(|j| JumpParams::new(j.r, j.alpha))
            .transpose()
    }

    pub fn build(&self) -> Result<ModelSpec, esscher_core::ModelError> {
        ModelSpec::new(self.heston(), self.jump_params()?)
    }

    fn apply(&mut self, cfg: &ModelConfig, args: &CommonArgs) {
        let fields = [
            (&mut self.lambda, cfg.lambda, args.lambda),
            (&mut self.mu, cfg.mu, args.mu),
            (&mut self.zeta, cfg.zeta, args.zeta),
            (&mut self.rho, cfg.rho, args.rho),
            (&mut self.v0, cfg.v0, args.v0),
            (&mut self.s0, cfg.s0, args.s0),
        ];
        for (slot, from_file, from_flag) in fields {
            if let Some(v) = from_flag.or(from_file) {
                *slot = v;
            }
        }
        let jc = cfg.jumps.clone().unwrap_or_default();
        let on = if args.no_jumps {
            false
        } else if args.jump_rate.is_some() || args.jump_alpha.is_some() {
            true
        } else if let Some(enabled) = jc.enabled {
            enabled
        } else {
            self.jumps.is_some() || jc.r.is_some() || jc.alpha.is_some()
        };
        let base = self.jumps.unwrap_or(JumpSettings { r: 2.0, alpha: 3.0 });
        self.jumps = on.then(|| JumpSettings {
            r: args.jump_rate.or(jc.r).unwrap_or(base.r),
            alpha: args.jump_alpha.or(jc.alpha).unwrap_or(base.alpha),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffSettings {
    pub kind: Kind,
    pub strike: f64,
    pub maturity: f64,
    pub n_monitor: usize,
}

impl PayoffSettings {
    pub fn build(&self) -> Result<PayoffSpec, esscher_core::OptimError> {
        match self.kind {
            Kind::European => PayoffSpec::european_put(self.strike, self.maturity),
            Kind::Asian => PayoffSpec::asian_put(self.strike, self.maturity, self.n_monitor),
        }
    }

    pub fn from_payoff(p: &PayoffSpec) -> Self {
        Self {
            kind: match p.kind() {
                PayoffKind::EuropeanPut => Kind::European,
                PayoffKind::AsianPut => Kind::Asian,
            },
            strike: p.strike(),
            maturity: p.maturity(),
            n_monitor: p.n_monitor(),
        }
    }
}

/// Fully resolved run settings; echoed as a CSV comment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub experiment: String,
    pub model: ModelSettings,
    pub payoff: PayoffSettings,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 42;

pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
}

/// Layers the configuration file and then the flags over preset values.
pub fn resolve(
    experiment: String,
    preset_model: &ModelSpec,
    preset_payoff: PayoffSettings,
    file: &ConfigFile,
    args: &CommonArgs,
) -> Settings {
    let mut model = ModelSettings::from_model(preset_model);
    model.apply(&file.model, args);
    let pc = &file.payoff;
    let payoff = PayoffSettings {
        kind: args.kind.or(pc.kind).unwrap_or(preset_payoff.kind),
        strike: args.strike.or(pc.strike).unwrap_or(preset_payoff.strike),
        maturity: args
            .maturity
            .or(pc.maturity)
            .unwrap_or(preset_payoff.maturity),
        n_monitor: args
            .n_monitor
            .or(pc.n_monitor)
            .unwrap_or(preset_payoff.n_monitor),
    };
    Settings {
        experiment,
        model,
        payoff,
        n_paths: args
            .paths
            .or(file.n_paths)
            .unwrap_or(esscher_core::experiments::REFERENCE_PATHS),
        n_steps: args
            .steps
            .or(file.n_steps)
            .unwrap_or(esscher_core::experiments::REFERENCE_STEPS),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
    }
}

/// Default model and payoff for `price` and `sweep`.
pub fn default_custom() -> (ModelSpec, PayoffSettings) {
    (
        heston_preset(),
        PayoffSettings {
            kind: Kind::European,
            strike: 1.0,
            maturity: 1.0,
            n_monitor: 1,
        },
    )
}

/// `"table3"` -> `("table", 3)`.
pub fn parse_experiment(name: &str) -> Result<(&str, u32)> {
    for prefix in ["table", "fig"] {
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(id) = rest.parse() {
                return Ok((prefix, id));
            }
        }
    }
    if name == "custom" {
        return Ok(("custom", 0));
    }
    bail!("unknown experiment `{name}`")
}
