//! CSV assembly: `#` metadata lines, a header and records.

use crate::config::Settings;
use anyhow::{Context, Result};
use esscher_core::experiments::format_sig;
use esscher_core::pricing::ComparisonRow;
use std::io::Write;
use std::path::Path;

pub const SIGNIFICANT_DIGITS: usize = 6;

pub struct Report {
    raw: bool,
    no_timing: bool,
    text: String,
}

impl Report {
    pub fn new(raw: bool, no_timing: bool) -> Self {
        Self {
            raw,
            no_timing,
            text: String::new(),
        }
    }

    pub fn num(&self, x: f64) -> String {
        if self.raw {
            format!("{x:?}")
        } else {
            format_sig(x, SIGNIFICANT_DIGITS)
        }
    }

    /// Wall-clock quantity; empty under `--no-timing`.
    pub fn timing(&self, x: f64) -> String {
        if self.no_timing {
            String::new()
        } else {
            self.num(x)
        }
    }

    pub fn comment(&mut self, line: &str) {
        self.text.push_str("# ");
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn preamble(&mut self, settings: &Settings, title: &str) {
        self.comment(&format!("esscher v{}", env!("CARGO_PKG_VERSION")));
        self.comment(&format!("experiment: {} ({title})", settings.experiment));
        let echo = serde_json::to_string(settings).expect("settings serialize");
        self.comment(&format!("config: {echo}"));
    }

    pub fn row_metadata(&mut self, column: &str, value: f64, row: &ComparisonRow) {
        let o = &row.optimum;
        let mut line = format!(
            "{column}={}: theta_star={} solver_residual={} plain_price={} plain_std_error={}",
            self.num(value),
            self.num(o.total_mass()),
            self.num(o.residual),
            self.num(row.plain.price),
            self.num(row.plain.std_error),
        );
        if o.near_domain_boundary {
            line.push_str(" near_domain_boundary=true");
        }
        if !self.no_timing {
            line.push_str(&format!(" solver_time_s={}", self.num(row.solver_time_s)));
        }
        self.comment(&line);
    }

    pub fn header(&mut self, columns: &[&str]) {
        self.text.push_str(&columns.join(","));
        self.text.push('\n');
    }

    pub fn record(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, out: Option<&Path>) -> Result<()> {
        emit(&self.text, out)
    }
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .context("cannot write to stdout")
        }
    }
}
