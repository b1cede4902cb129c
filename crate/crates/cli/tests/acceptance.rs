//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails at the end if any criterion failed. Lines marked INFO are reported
//! for context and do not count.

use std::process::Command;
use std::time::Instant;

use esscher_core::experiments::{
    fig, fig1_model, table, TableSpec, REFERENCE_PATHS, REFERENCE_STEPS, TABLE_IDS,
};
use esscher_core::ldp::{rate_function_discrete, verify_scaling_limits, DiscretePath, Partition};
use esscher_core::model::{heston_preset, jump_preset, ModelSpec};
use esscher_core::optimize::{solve, PayoffSpec};
use esscher_core::pricing::{
    compare, grid_for, mc_price_is, mc_price_plain, sweep_minimizer, theta_sweep, ComparisonRow,
};
use esscher_core::simulate::{simulate_batch, EsscherPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;
const STAT_PATHS: usize = 100_000;

#[derive(Default)]
struct Ledger {
    failed: Vec<String>,
    total: usize,
}

impl Ledger {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        self.total += 1;
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failed.push(name.to_string());
        }
    }

    fn info(&self, name: &str, detail: String) {
        println!("INFO {name}: {detail}");
    }
}

fn models() -> [(&'static str, ModelSpec); 2] {
    [("Heston", heston_preset()), ("jumps", jump_preset())]
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn analytic_identities(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut zeros = 0.0_f64;
    let mut gamma = 0.0_f64;
    let mut initial = true;
    let mut semiflow = 0.0_f64;
    for (_, m) in models() {
        zeros = zeros
            .max(m.h(0.0).unwrap().abs())
            .max(m.h(1.0).unwrap().abs());
        gamma = gamma.max((m.gamma(0.0).unwrap() - m.params().lambda).abs());
        let dom = m.domain().unwrap();
        for u in dom.interior_grid(10, 0.05) {
            for w in [-1.0, 0.0, m.stable_equilibrium(u).unwrap()] {
                let r = m.riccati(0.0, u, w).unwrap();
                initial &= r.psi == w && r.phi == 0.0;
            }
            for t in linspace(0.1, 2.0, 10) {
                for s in linspace(0.1, 2.0, 10) {
                    let a = m.riccati(s, u, 0.0).unwrap();
                    let b = m.riccati(t, u, a.psi).unwrap();
                    let whole = m.riccati(t + s, u, 0.0).unwrap();
                    semiflow = semiflow
                        .max((whole.psi - b.psi).abs())
                        .max((whole.phi - a.phi - b.phi).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ledger.record(
        "h(0) = h(1) = 0, both models",
        zeros < 1e-12,
        format!("max |h| {zeros:.3e}"),
    );
    ledger.record(
        "gamma(0) = lambda",
        gamma == 0.0,
        format!("max error {gamma:.3e}"),
    );
    ledger.record(
        "psi(0,u,w) = w and phi(0,u,w) = 0 exactly",
        initial,
        format!("{initial}"),
    );
    ledger.record(
        "Riccati semiflow on 10x10x10 grid",
        semiflow < 1e-9,
        format!("max residual {semiflow:.3e}"),
    );
    ledger.record(
        "analytic identities runtime < 1 s",
        elapsed < 1.0,
        format!("{elapsed:.3} s"),
    );
}

/// Classical RK4 on `(phi, psi)` from `(0, 0)`, sampled at each whole
/// multiple of `report_every`.
fn rk4_trajectory(
    m: &ModelSpec,
    u: f64,
    horizon: f64,
    steps: usize,
    report_every: usize,
) -> Vec<(f64, f64, f64)> {
    let dt = horizon / steps as f64;
    let f = |w: f64| m.f_eval(u, w).unwrap();
    let r = |w: f64| m.r_eval(u, w);
    let (mut phi, mut psi) = (0.0, 0.0);
    let mut out = Vec::new();
    for i in 1..=steps {
        let k1 = r(psi);
        let k2 = r(psi + 0.5 * dt * k1);
        let k3 = r(psi + 0.5 * dt * k2);
        let k4 = r(psi + dt * k3);
        let l =
            f(psi) + 2.0 * f(psi + 0.5 * dt * k1) + 2.0 * f(psi + 0.5 * dt * k2) + f(psi + dt * k3);
        phi += dt / 6.0 * l;
        psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if i % report_every == 0 {
            out.push((i as f64 * dt, phi, psi));
        }
    }
    out
}

fn ode_oracle(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut err = 0.0_f64;
    for (_, m) in models() {
        for u in m.domain().unwrap().interior_grid(25, 0.02) {
            for (t, phi, psi) in rk4_trajectory(&m, u, 5.0, 20_000, 400) {
                let r = m.riccati(t, u, 0.0).unwrap();
                err = err.max((r.phi - phi).abs()).max((r.psi - psi).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ledger.record(
        "closed form against RK4, t in [0,5], 25 u, both models",
        err < 1e-6,
        format!("max error {err:.3e}"),
    );
    ledger.record(
        "ODE oracle runtime < 10 s",
        elapsed < 10.0,
        format!("{elapsed:.3} s"),
    );
}

fn scaling_limit(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut within = true;
    let mut monotone = true;
    for (_, m) in models() {
        let us = m.domain().unwrap().interior_grid(10, 0.05);
        let report = verify_scaling_limits(&m, &us, &[1e-1, 1e-2, 1e-3], 1.0).unwrap();
        monotone &= report.all_monotone();
        for row in report.rows.iter().filter(|r| r.eps == 1e-3) {
            let h = row.phi_limit;
            within &= row.phi_error < 0.01 * h.abs() + 1e-6;
            worst = worst.max(row.phi_error / (h.abs() + 1e-6));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ledger.record(
        "scaling limit at eps = 1e-3 within 1% + 1e-6",
        within,
        format!("worst relative error {worst:.3e}"),
    );
    ledger.record(
        "scaling errors decrease along eps",
        monotone,
        format!("{monotone}"),
    );
    ledger.record(
        "scaling limit runtime < 5 s",
        elapsed < 5.0,
        format!("{elapsed:.3} s"),
    );
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Sup over `J^n` of `sum_j theta_j dx_j - dt_j h(theta_j)`: full scan of a
/// 200^n grid followed by coordinate-wise golden-section polishing.
fn brute_force_rate(m: &ModelSpec, dts: &[f64], dxs: &[f64]) -> f64 {
    const G: usize = 200;
    let dom = m.domain().unwrap();
    let nodes: Vec<f64> = (0..G)
        .map(|i| dom.lerp((i as f64 + 0.5) / G as f64))
        .collect();
    let hs: Vec<f64> = nodes.iter().map(|&u| m.h(u).unwrap()).collect();
    let n = dts.len();
    let term = |j: usize, i: usize| nodes[i] * dxs[j] - dts[j] * hs[i];
    let mut best = (f64::NEG_INFINITY, vec![0; n]);
    let mut idx = vec![0usize; n];
    loop {
        let v: f64 = (0..n).map(|j| term(j, idx[j])).sum();
        if v > best.0 {
            best = (v, idx.clone());
        }
        let mut j = 0;
        while j < n {
            idx[j] += 1;
            if idx[j] < G {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == n {
            break;
        }
    }
    let mut theta: Vec<f64> = best.1.iter().map(|&i| nodes[i]).collect();
    let objective = |th: &[f64]| {
        (0..n)
            .map(|j| th[j] * dxs[j] - dts[j] * m.h(th[j]).unwrap())
            .sum::<f64>()
    };
    for _ in 0..3 {
        for j in 0..n {
            let i = best.1[j];
            let lo = if i == 0 {
                dom.lerp(1e-12)
            } else {
                nodes[i - 1]
            };
            let hi = if i + 1 == G {
                dom.lerp(1.0 - 1e-12)
            } else {
                nodes[i + 1]
            };
            let mut probe = theta.clone();
            theta[j] = golden_max(
                |x| {
                    probe[j] = x;
                    objective(&probe)
                },
                lo,
                hi,
            );
        }
    }
    objective(&theta)
}

fn rate_function_oracle(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let m = if k % 2 == 0 {
            heston_preset()
        } else {
            jump_preset()
        };
        let dom = m.domain().unwrap();
        let n = rng.random_range(1..=3usize);
        let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let part = Partition::new(times).unwrap();
        let dts = part.increments();
        // slopes attained by h' somewhere inside J, so that the supremum is interior
        let dxs: Vec<f64> = dts
            .iter()
            .map(|dt| dt * m.h_prime(dom.lerp(rng.random_range(0.1..0.9))).unwrap())
            .collect();
        let mut values = Vec::with_capacity(dxs.len());
        let mut acc = 0.0;
        for dx in &dxs {
            acc += dx;
            values.push(acc);
        }
        let path = DiscretePath::new(part, values).unwrap();
        let ours = rate_function_discrete(&m, &path).unwrap();
        let brute = brute_force_rate(&m, &dts, &dxs);
        worst = worst.max((ours - brute).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    ledger.record(
        "rate function against brute-force sup, 100 instances",
        worst < 1e-6,
        format!("max error {worst:.3e}"),
    );
    ledger.record(
        "rate-function oracle runtime < 60 s",
        elapsed < 60.0,
        format!("{elapsed:.3} s"),
    );
}

fn optimal_theta(ledger: &mut Ledger) {
    let payoff = PayoffSpec::european_put(1.0, 1.5).unwrap();
    for (name, m, target) in [
        ("theta* Heston, K=1, T=1.5", heston_preset(), -0.457),
        ("theta* jumps, K=1, T=1.5", jump_preset(), -0.312),
    ] {
        let th = solve(&m, &payoff).unwrap().total_mass();
        ledger.record(
            name,
            (th - target).abs() <= 0.005,
            format!("{th:.5} against {target}"),
        );
    }
    let th = solve(&fig1_model(), &payoff).unwrap().total_mass();
    ledger.record(
        "theta* diffusive model with the jump set's parameters",
        (th + 0.457).abs() <= 0.005,
        format!("{th:.5} against -0.457"),
    );
}

fn row_of(id: u32, value: f64) -> (TableSpec, ComparisonRow, f64) {
    let spec = table(id).unwrap();
    let payoff = spec.payoff(value).unwrap();
    let start = Instant::now();
    let row = compare(&spec.model, &payoff, REFERENCE_STEPS, REFERENCE_PATHS, SEED).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    (spec, row, elapsed)
}

fn price_reproduction(ledger: &mut Ledger) {
    for (id, value, price, se) in [
        (1, 1.0, 0.0780, 5.59e-4),
        (3, 0.25, 7.1e-5, 1.84e-5),
        (4, 1.0, 0.0558, 0.00043),
        (5, 1.0, 0.215, 1.61e-3),
    ] {
        let (spec, row, elapsed) = row_of(id, value);
        let tol = 4.0 * (row.std_error.powi(2) + se * se).sqrt();
        let col = spec.swept.column();
        ledger.record(
            &format!("table {id} {col}={value} price"),
            (row.price - price).abs() < tol,
            format!(
                "{:.4e} (SE {:.3e}) against {price:e}, tolerance {tol:.3e}",
                row.price, row.std_error
            ),
        );
        ledger.record(
            &format!("table {id} {col}={value} runtime <= 30 s"),
            elapsed <= 30.0,
            format!("{elapsed:.3} s"),
        );
    }
    let spec = table(5).unwrap().with_model(jump_preset());
    let row = compare(
        &spec.model,
        &spec.payoff(1.0).unwrap(),
        REFERENCE_STEPS,
        REFERENCE_PATHS,
        SEED,
    )
    .unwrap();
    ledger.info(
        "table 5 T=1 with mu = V0 = 0.7/1.3 as stated for the jump set",
        format!(
            "price {:.4} (SE {:.3e}) against 0.215",
            row.price, row.std_error
        ),
    );
}

/// Published variance ratios, in table order.
const PUBLISHED_RATIOS: [(u32, &[f64]); 7] = [
    (1, &[2.46, 3.12, 3.92, 4.21, 4.19]),
    (2, &[26.6, 6.53, 3.96, 4.20, 5.84, 8.45]),
    (3, &[92.0, 16.1, 6.67, 4.24, 3.61, 3.47, 3.89]),
    (4, &[16.9, 5.77, 4.36, 3.48, 3.49, 3.69, 4.27, 5.30]),
    (5, &[3.28, 3.20, 2.95, 2.61, 2.40]),
    (6, &[11.6, 5.42, 3.76, 2.93, 2.65, 2.43, 2.57]),
    (7, &[5.19, 3.32, 2.68, 2.39, 2.20, 2.09, 1.97]),
];

fn published_ratio(id: u32, value: f64) -> f64 {
    let spec = table(id).unwrap();
    let i = spec.values.iter().position(|&v| v == value).unwrap();
    PUBLISHED_RATIOS.iter().find(|(t, _)| *t == id).unwrap().1[i]
}

fn variance_ratios(ledger: &mut Ledger) {
    for (id, value) in [(1, 1.0), (2, 0.5), (3, 0.25), (4, 1.0), (5, 1.0)] {
        let (spec, row, _) = row_of(id, value);
        let published = published_ratio(id, value);
        let (lo, hi) = (0.6 * published, 1.8 * published);
        ledger.record(
            &format!("table {id} {}={value} variance ratio", spec.swept.column()),
            (lo..=hi).contains(&row.var_ratio),
            format!(
                "{:.4} against {published}, accept [{lo:.3}, {hi:.3}]",
                row.var_ratio
            ),
        );
    }

    let mut outside = Vec::new();
    let mut count = 0;
    for id in TABLE_IDS {
        let spec = table(id).unwrap();
        for &value in &spec.values {
            let row = compare(
                &spec.model,
                &spec.payoff(value).unwrap(),
                REFERENCE_STEPS,
                REFERENCE_PATHS,
                SEED,
            )
            .unwrap();
            let ratio = row.var_ratio / published_ratio(id, value);
            count += 1;
            if !(0.6..=1.8).contains(&ratio) {
                outside.push(format!(
                    "table {id} {}={value} at {ratio:.3}x",
                    spec.swept.column()
                ));
            }
        }
    }
    ledger.info(
        "variance ratios of all table rows within [0.6x, 1.8x]",
        format!(
            "{} of {count}; outside: {}",
            count - outside.len(),
            if outside.is_empty() {
                "none".into()
            } else {
                outside.join(", ")
            }
        ),
    );
}

fn theta_sweeps(ledger: &mut Ledger) {
    for (id, target) in [(1, -0.457), (2, -0.312)] {
        let spec = fig(id).unwrap();
        let points = theta_sweep(
            &spec.model,
            &spec.payoff,
            &spec.thetas,
            REFERENCE_STEPS,
            REFERENCE_PATHS,
            SEED,
        )
        .unwrap();
        let best = sweep_minimizer(&points).unwrap().theta;
        ledger.record(
            &format!("fig {id} sweep minimum within 0.1 of {target}"),
            (best - target).abs() <= 0.1,
            format!("minimum at {best:.2}"),
        );
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn statistical_self_tests(ledger: &mut Ledger) {
    let payoff = PayoffSpec::european_put(1.0, 1.0).unwrap();
    let grid = grid_for(&payoff, REFERENCE_STEPS).unwrap();
    for (name, m) in models() {
        let plain = simulate_batch(&m, None, &grid, STAT_PATHS, SEED).unwrap();
        let (mean, se) = mean_se(
            &plain
                .iter()
                .map(|p| p.x_terminal().exp())
                .collect::<Vec<_>>(),
        );
        ledger.record(
            &format!("martingale under P, {name}"),
            (mean - 1.0).abs() < 4.0 * se,
            format!("{mean:.5} +- {se:.2e}"),
        );

        let opt = solve(&m, &payoff).unwrap();
        let theta = opt.total_mass();
        let plan = EsscherPlan::build(&m, opt.measure, &grid).unwrap();
        let log_norm = plan.log_normalizer(m.params().v0);
        let tilted = simulate_batch(&m, Some(&plan), &grid, STAT_PATHS, SEED + 1).unwrap();
        let pulled: Vec<f64> = tilted
            .iter()
            .map(|p| (log_norm + (1.0 - theta) * p.x_terminal()).exp())
            .collect();
        let (mean, se) = mean_se(&pulled);
        ledger.record(
            &format!("martingale under P_theta pulled back, {name}"),
            (mean - 1.0).abs() < 4.0 * se,
            format!("{mean:.5} +- {se:.2e}"),
        );

        let (mean, se) = mean_se(
            &plain
                .iter()
                .map(|p| (theta * p.x_terminal()).exp())
                .collect::<Vec<_>>(),
        );
        let target = log_norm.exp();
        ledger.record(
            &format!("normalization constant against E[exp(theta* X_T)], {name}"),
            (mean - target).abs() < 4.0 * se,
            format!("{mean:.5} +- {se:.2e} against {target:.5}"),
        );
    }

    let mut worst = 0.0_f64;
    let mut rows = 0;
    for id in TABLE_IDS {
        let spec = table(id).unwrap();
        for &value in &spec.values {
            let payoff = spec.payoff(value).unwrap();
            let grid = grid_for(&payoff, REFERENCE_STEPS).unwrap();
            let plan = EsscherPlan::build(
                &spec.model,
                solve(&spec.model, &payoff).unwrap().measure,
                &grid,
            )
            .unwrap();
            let plain = mc_price_plain(&spec.model, &payoff, &grid, STAT_PATHS, SEED).unwrap();
            let is = mc_price_is(&spec.model, &payoff, &plan, &grid, STAT_PATHS, SEED + 1).unwrap();
            let combined = (plain.std_error.powi(2) + is.std_error.powi(2)).sqrt();
            if combined > 0.0 {
                worst = worst.max((plain.price - is.price).abs() / combined);
            }
            rows += 1;
        }
    }
    ledger.record(
        "IS against plain within 4 combined SE on every table row",
        worst < 4.0,
        format!("{rows} rows, worst {worst:.2} SE"),
    );
}

fn run_cli(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_esscher"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect()
}

fn determinism(ledger: &mut Ledger) {
    let base = ["table", "--id", "1", "--seed", "42", "--no-timing"];
    let a = run_cli(&base);
    let b = run_cli(&base);
    ledger.record(
        "table --id 1 --seed 42 twice, byte-identical",
        a == b,
        format!("{} bytes", a.len()),
    );

    let one = run_cli(&[&base[..], &["--threads", "1"]].concat());
    let four = run_cli(&[&base[..], &["--threads", "4"]].concat());
    ledger.record(
        "worker count 1 against 4, byte-identical",
        one == four && one == a,
        format!("{} bytes", one.len()),
    );

    let timed_a = run_cli(&base[..5]);
    let timed_b = run_cli(&base[..5]);
    ledger.record(
        "timed runs identical apart from the wall-clock columns",
        strip_timing(&timed_a) == strip_timing(&timed_b)
            && strip_timing(&timed_a) == strip_timing(&a),
        format!("{} data lines", strip_timing(&timed_a).len()),
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger::default();
    analytic_identities(&mut ledger);
    ode_oracle(&mut ledger);
    scaling_limit(&mut ledger);
    rate_function_oracle(&mut ledger);
    optimal_theta(&mut ledger);
    price_reproduction(&mut ledger);
    variance_ratios(&mut ledger);
    theta_sweeps(&mut ledger);
    statistical_self_tests(&mut ledger);
    determinism(&mut ledger);
    println!(
        "{} of {} criteria passed",
        ledger.total - ledger.failed.len(),
        ledger.total
    );
    assert!(
        ledger.failed.is_empty(),
        "failed criteria: {:?}",
        ledger.failed
    );
}
