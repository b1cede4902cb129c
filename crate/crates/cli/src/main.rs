mod config;
mod output;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use config::{CommonArgs, ConfigFile, PayoffSettings, Settings};
use esscher_core::experiments::{self, Fault, FIG_IDS, TABLE_IDS};
use esscher_core::model::{heston_preset, jump_preset};
use esscher_core::optimize::OptimError;
use esscher_core::pricing::{self, grid_for, PricingError};
use esscher_core::simulate::{EsscherPlan, SimError};
use esscher_core::{solve, ModelSpec};
use output::Report;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

/// Esscher importance sampling for put options under the Heston model.
#[derive(Debug, Parser)]
#[command(name = "esscher", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plain against importance-sampled estimator over a reference grid.
    Table {
        /// Table number, 1 to 7; defaults to the config's `experiment`.
        #[arg(long)]
        id: Option<u32>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimator variance against theta for a reference figure.
    Fig {
        /// Figure number, 1 or 2; defaults to the config's `experiment`.
        #[arg(long)]
        id: Option<u32>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Prices one payoff.
    Price {
        #[arg(long, value_enum, default_value_t = Estimator::Importance)]
        estimator: Estimator,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimator variance against theta for the configured payoff.
    Sweep {
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        theta_min: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta_max: f64,
        #[arg(long, default_value_t = 0.02)]
        theta_step: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Runs the self-check suite.
    Validate {
        /// Injects a defect, e.g. `h-prime-offset=0.05`.
        #[arg(long, value_parser = parse_fault)]
        fault: Option<Fault>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Plain,
    Importance,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    match name {
        "h-prime-offset" => value
            .parse()
            .map(Fault::HPrimeOffset)
            .map_err(|e| format!("bad offset: {e}")),
        _ => Err(format!("unknown fault `{name}`")),
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<PricingError> for Failure {
    fn from(e: PricingError) -> Self {
        let code = match &e {
            PricingError::Optim(OptimError::SolverFailure { .. })
            | PricingError::BadWeight { .. } => EXIT_SOLVER,
            PricingError::TooFewPaths(_) => EXIT_USAGE,
            _ => EXIT_INFEASIBLE,
        };
        Self::new(code, e)
    }
}

impl From<OptimError> for Failure {
    fn from(e: OptimError) -> Self {
        PricingError::from(e).into()
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        PricingError::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::new(EXIT_USAGE, e)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Table { id, common } => {
            let file = prepare(&common)?;
            let id = experiment_id(id, &file, "table")?;
            run_table(id, &file, &common)
        }
        Command::Fig { id, common } => {
            let file = prepare(&common)?;
            let id = experiment_id(id, &file, "fig")?;
            run_fig(id, &file, &common)
        }
        Command::Price { estimator, common } => {
            let file = prepare(&common)?;
            run_price(estimator, &file, &common)
        }
        Command::Sweep {
            theta_min,
            theta_max,
            theta_step,
            common,
        } => {
            let file = prepare(&common)?;
            let thetas = theta_grid(theta_min, theta_max, theta_step)?;
            run_sweep(thetas, &file, &common)
        }
        Command::Validate { fault, common } => {
            let file = prepare(&common)?;
            run_validate(fault, &file, &common)
        }
    }
}

fn prepare(common: &CommonArgs) -> Result<ConfigFile, Failure> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")
            .map_err(usage)?;
    }
    config::load(common.config.as_deref()).map_err(usage)
}

fn experiment_id(flag: Option<u32>, file: &ConfigFile, kind: &str) -> Result<u32, Failure> {
    if let Some(id) = flag {
        return Ok(id);
    }
    let name = file.experiment.as_deref().ok_or_else(|| {
        usage(anyhow!(
            "--id is required unless the config names an experiment"
        ))
    })?;
    match config::parse_experiment(name).map_err(usage)? {
        (k, id) if k == kind => Ok(id),
        _ => Err(usage(anyhow!("config experiment `{name}` is not a {kind}"))),
    }
}

fn build_model(settings: &Settings) -> Result<ModelSpec, Failure> {
    settings.model.build().map_err(|e| {
        Failure::new(EXIT_INFEASIBLE, e).context_msg("model parameters are not admissible")
    })
}

impl Failure {
    fn context_msg(self, msg: &'static str) -> Self {
        Self {
            code: self.code,
            error: self.error.context(msg),
        }
    }
}

fn run_table(id: u32, file: &ConfigFile, common: &CommonArgs) -> Outcome {
    let spec = experiments::table(id)
        .ok_or_else(|| usage(anyhow!("table id must be one of {TABLE_IDS:?}, got {id}")))?;
    let first = spec.payoff(spec.values[0])?;
    let settings = config::resolve(
        format!("table{id}"),
        &spec.model,
        PayoffSettings::from_payoff(&first),
        file,
        common,
    );
    let spec = spec.with_model(build_model(&settings)?);
    let rows = experiments::run_table(&spec, settings.n_steps, settings.n_paths, settings.seed)?;

    let mut report = Report::new(common.raw, common.no_timing);
    report.preamble(&settings, spec.title);
    report.comment(&format!("K_or_T: {}", spec.swept.column()));
    for (value, row) in spec.values.iter().zip(&rows) {
        report.row_metadata(spec.swept.column(), *value, row);
    }
    report.header(&[
        "K_or_T",
        "price",
        "std_error",
        "var_ratio",
        "adj_ratio",
        "time_s",
    ]);
    for (value, row) in spec.values.iter().zip(&rows) {
        let cells = [
            report.num(*value),
            report.num(row.price),
            report.num(row.std_error),
            report.num(row.var_ratio),
            report.timing(row.adj_ratio),
            report.timing(row.time_s),
        ];
        report.record(&cells);
    }
    report.write(common.out.as_deref()).map_err(usage)
}

fn run_fig(id: u32, file: &ConfigFile, common: &CommonArgs) -> Outcome {
    let spec = experiments::fig(id)
        .ok_or_else(|| usage(anyhow!("figure id must be one of {FIG_IDS:?}, got {id}")))?;
    let settings = config::resolve(
        format!("fig{id}"),
        &spec.model,
        PayoffSettings::from_payoff(&spec.payoff),
        file,
        common,
    );
    sweep_report(&settings, spec.thetas, spec.title, common)
}

fn run_sweep(thetas: Vec<f64>, file: &ConfigFile, common: &CommonArgs) -> Outcome {
    let (model, payoff) = custom_preset(file);
    let settings = config::resolve("custom".into(), &model, payoff, file, common);
    sweep_report(
        &settings,
        thetas,
        "Estimator variance against theta",
        common,
    )
}

fn custom_preset(file: &ConfigFile) -> (ModelSpec, PayoffSettings) {
    let (mut model, payoff) = config::default_custom();
    // a config that switches jumps on starts from the jump preset
    if file
        .model
        .jumps
        .as_ref()
        .is_some_and(|j| j.enabled != Some(false))
    {
        model = jump_preset();
    }
    (model, payoff)
}

fn sweep_report(
    settings: &Settings,
    thetas: Vec<f64>,
    title: &str,
    common: &CommonArgs,
) -> Outcome {
    let model = build_model(settings)?;
    let payoff = settings.payoff.build()?;
    let optimum = solve(&model, &payoff);
    let points = pricing::theta_sweep(
        &model,
        &payoff,
        &thetas,
        settings.n_steps,
        settings.n_paths,
        settings.seed,
    )?;

    let mut report = Report::new(common.raw, common.no_timing);
    report.preamble(settings, title);
    match &optimum {
        Ok(o) => {
            report.comment(&format!("theta_star: {}", report.num(o.total_mass())));
            report.comment(&format!("solver_residual: {}", report.num(o.residual)));
        }
        Err(e) => report.comment(&format!("theta_star: unavailable ({e})")),
    }
    if let Some(min) = pricing::sweep_minimizer(&points) {
        report.comment(&format!("sweep_minimum: {}", report.num(min.theta)));
    }
    for p in points.iter().filter(|p| !p.feasible()) {
        report.comment(&format!(
            "skipped theta={} (infeasible)",
            report.num(p.theta)
        ));
    }
    report.header(&["theta", "variance"]);
    for p in &points {
        if let Some(v) = p.variance() {
            let cells = [report.num(p.theta), report.num(v)];
            report.record(&cells);
        }
    }
    report.write(common.out.as_deref()).map_err(usage)
}

fn run_price(estimator: Estimator, file: &ConfigFile, common: &CommonArgs) -> Outcome {
    let (model, payoff) = custom_preset(file);
    let settings = config::resolve("custom".into(), &model, payoff, file, common);
    let model = build_model(&settings)?;
    let payoff = settings.payoff.build()?;
    let grid = grid_for(&payoff, settings.n_steps)?;

    let mut report = Report::new(common.raw, common.no_timing);
    report.preamble(&settings, "Single price");
    let (result, theta) = match estimator {
        Estimator::Plain => (
            pricing::mc_price_plain(&model, &payoff, &grid, settings.n_paths, settings.seed)?,
            None,
        ),
        Estimator::Importance => {
            let optimum = solve(&model, &payoff)?;
            report.comment(&format!(
                "solver_residual: {}",
                report.num(optimum.residual)
            ));
            if optimum.near_domain_boundary {
                report.comment("warning: theta* is close to the edge of the domain");
            }
            let plan = EsscherPlan::build(&model, optimum.measure.clone(), &grid)?;
            let r = pricing::mc_price_is(
                &model,
                &payoff,
                &plan,
                &grid,
                settings.n_paths,
                settings.seed,
            )?;
            (r, Some(optimum.total_mass()))
        }
    };
    report.header(&[
        "estimator",
        "price",
        "std_error",
        "variance",
        "theta_star",
        "time_s",
    ]);
    let cells = [
        match estimator {
            Estimator::Plain => "plain".to_string(),
            Estimator::Importance => "importance".to_string(),
        },
        report.num(result.price),
        report.num(result.std_error),
        report.num(result.variance),
        theta.map_or(String::new(), |t| report.num(t)),
        report.timing(result.elapsed),
    ];
    report.record(&cells);
    report.write(common.out.as_deref()).map_err(usage)
}

fn run_validate(fault: Option<Fault>, file: &ConfigFile, common: &CommonArgs) -> Outcome {
    let customized = common.config.is_some() || overrides_model(common);
    let targets: Vec<(String, Settings)> = if customized {
        let (model, payoff) = custom_preset(file);
        vec![(
            "configured model".into(),
            config::resolve("custom".into(), &model, payoff, file, common),
        )]
    } else {
        [
            ("Heston preset", heston_preset()),
            ("Heston with jumps preset", jump_preset()),
        ]
        .into_iter()
        .map(|(name, m)| {
            let (_, payoff) = config::default_custom();
            (
                name.to_string(),
                config::resolve("custom".into(), &m, payoff, file, common),
            )
        })
        .collect()
    };

    let mut text = String::new();
    let mut failed = 0;
    for (name, settings) in &targets {
        text.push_str(&format!("== {name}\n"));
        let jumps = settings.model.jump_params();
        let checks = match jumps {
            Ok(j) => experiments::validation_suite(settings.model.heston(), j, fault),
            Err(e) => vec![experiments::Check {
                name: "admissibility".into(),
                passed: false,
                detail: e.to_string(),
            }],
        };
        for c in &checks {
            text.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
            failed += usize::from(!c.passed);
        }
    }
    text.push_str(&format!("{failed} check(s) failed\n"));
    output::emit(&text, common.out.as_deref()).map_err(usage)?;
    if failed > 0 {
        return Err(Failure::new(
            EXIT_VALIDATION,
            anyhow!("{failed} validation check(s) failed"),
        ));
    }
    Ok(())
}

fn overrides_model(c: &CommonArgs) -> bool {
    [
        c.lambda,
        c.mu,
        c.zeta,
        c.rho,
        c.v0,
        c.s0,
        c.jump_rate,
        c.jump_alpha,
    ]
    .iter()
    .any(Option::is_some)
        || c.no_jumps
}

fn theta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0 && min <= max && min.is_finite() && max.is_finite()) {
        return Err(usage(anyhow!(
            "theta grid needs finite min <= max and a positive step"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    // anchored at `max` so that a grid ending at 0 contains 0 exactly
    Ok((0..=n).map(|i| max - (n - i) as f64 * step + 0.0).collect())
}
