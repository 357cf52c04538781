//! Fixed-step simulation of plant, filters and estimator, trace recording
//! and CSV export.

mod config;
mod dt;
mod robot;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub use config::{parse_value, scenario_description, Scenario, Value, SCENARIO_NAMES};

use crate::error::{DremError, Result};

/// Version written into the CSV header comment.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Classical four-stage Runge–Kutta step for `ẋ = f(t, x)`.
pub fn rk4_step<F>(mut f: F, x: &[f64], t: f64, h: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    (0..n).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// [`rk4_step`] that rejects non-finite results, reporting the step index.
pub fn rk4_step_checked<F>(f: F, x: &[f64], t: f64, h: f64, step: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let next = rk4_step(f, x, t, h);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(DremError::NonFinite { step, t })
    }
}

/// Scalar summary printed by the CLI.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub final_eta_tilde: Option<f64>,
    pub final_tracking_error: Option<f64>,
    /// `∫Δ²` for CT runs, `ΣΔ²` for DT runs.
    pub excitation: Option<f64>,
    pub singular_events: usize,
}

/// Time-indexed record of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub columns: Vec<String>,
    /// Columns that need the true parameters and are unavailable in practice.
    pub oracle_columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub summary: Summary,
}

impl Trace {
    pub fn new(scenario: &str, columns: Vec<String>, oracle_columns: Vec<String>) -> Self {
        Self {
            scenario: scenario.to_string(),
            columns,
            oracle_columns,
            rows: Vec::new(),
            warnings: Vec::new(),
            summary: Summary::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match schema");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Copy of one column; panics on an unknown name.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self
            .column_index(name)
            .unwrap_or_else(|| panic!("no column {name} in {} trace", self.scenario));
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# drem-trace schema={} scenario={} oracle-only={}",
            CSV_SCHEMA_VERSION,
            self.scenario,
            self.oracle_columns.join(";")
        );
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(',');
                }
                first = false;
                let _ = write!(s, "{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Writes the header comment, the column row and one line per sample.
pub fn export_csv(trace: &Trace, path: &Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trace.to_csv_string().as_bytes())?;
    f.flush()
}

/// Runs a configured scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    match scenario.name() {
        "robot2dof-drem" => robot::run_drem(scenario),
        "robot2dof-overparam" => robot::run_overparam(scenario),
        "solar" => dt::run_solar(scenario),
        "appc-indirect" => dt::run_appc_indirect(scenario),
        "appc-direct" => dt::run_appc_direct(scenario),
        other => Err(DremError::Unknown(other.to_string())),
    }
}

/// Alias for continuous-time scenarios.
pub fn run_ct_scenario(scenario: &Scenario) -> Result<Trace> {
    match scenario.name() {
        "robot2dof-drem" | "robot2dof-overparam" => run_scenario(scenario),
        other => Err(DremError::Config(format!("{other} is not a continuous-time scenario"))),
    }
}

/// Alias for discrete-time scenarios.
pub fn run_dt_scenario(scenario: &Scenario) -> Result<Trace> {
    match scenario.name() {
        "solar" | "appc-indirect" | "appc-direct" => run_scenario(scenario),
        other => Err(DremError::Config(format!("{other} is not a discrete-time scenario"))),
    }
}
