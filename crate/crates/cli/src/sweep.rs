//! Parameter sweeps over a named model.

use std::fmt::Write as _;

use bdt_core::dispersion::{dispersion_closed_form, dispersion_infinite, Truncation};
use bdt_core::models::{BuiltModel, ModelSpec};
use bdt_core::oracle::dispersion_renewal_reward;
use bdt_core::sim::{simulate, SimConfig};
use bdt_core::stationary::rates_and_cdfs;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::report::num;

pub const CSV_HEADER: &str = "sweep_value,D_closed,D_oracle,D_sim,D_sim_stderr,lambda_bar,varpi";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: Scale,
}

impl Grid {
    pub fn linear(min: f64, max: f64, points: usize) -> Self {
        Self {
            min,
            max,
            points,
            scale: Scale::Linear,
        }
    }

    pub fn log(min: f64, max: f64, points: usize) -> Self {
        Self {
            min,
            max,
            points,
            scale: Scale::Log,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(CliError::Usage(format!(
                "a grid needs at least 2 points (got {})",
                self.points
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(CliError::Usage(format!(
                "grid bounds must be finite with min < max (got {} .. {})",
                self.min, self.max
            )));
        }
        if self.scale == Scale::Log && self.min <= 0.0 {
            return Err(CliError::Usage("a log grid needs min > 0".into()));
        }
        Ok(())
    }

    /// Grid values; both endpoints are hit exactly.
    pub fn values(&self) -> Vec<f64> {
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i + 1 == self.points {
                    return self.max;
                }
                let t = i as f64 / last;
                match self.scale {
                    Scale::Linear => self.min + (self.max - self.min) * t,
                    Scale::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * t).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outputs {
    pub closed_form: bool,
    pub oracle: bool,
    pub simulation: bool,
    pub breakdown: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            closed_form: true,
            oracle: true,
            simulation: false,
            breakdown: false,
        }
    }
}

impl Outputs {
    /// Parses a comma list such as `closed_form,oracle,simulation`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut out = Outputs {
            closed_form: false,
            oracle: false,
            simulation: false,
            breakdown: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "closed_form" | "closed" => out.closed_form = true,
                "oracle" => out.oracle = true,
                "simulation" | "sim" => out.simulation = true,
                "breakdown" => out.breakdown = true,
                other => return Err(CliError::Usage(format!("unknown output `{other}`"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub model: ModelSpec,
    pub variable: String,
    pub grid: Grid,
    pub outputs: Outputs,
    /// Template for the per-point simulation; each point gets its own seed.
    pub sim: Option<SimConfig>,
    pub truncation: Truncation,
}

impl SweepSpec {
    pub fn new(model: ModelSpec, variable: &str, grid: Grid) -> Self {
        Self {
            model,
            variable: variable.to_string(),
            grid,
            outputs: Outputs::default(),
            sim: None,
            truncation: Truncation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let (required, optional) = ModelSpec::accepted_params(&self.model.name)?;
        if !required.contains(&self.variable.as_str()) && !optional.contains(&self.variable.as_str()) {
            return Err(bdt_core::Error::UnknownParam {
                model: self.model.name.clone(),
                param: self.variable.clone(),
            }
            .into());
        }
        if self.model.params.contains_key(&self.variable) {
            return Err(CliError::Usage(format!("`{}` is both fixed and swept", self.variable)));
        }
        if self.outputs.simulation && self.sim.is_none() {
            return Err(CliError::Usage(
                "simulation output requested without a simulation config".into(),
            ));
        }
        Ok(())
    }
}

/// Seed for grid point `index`: one ChaCha8 stream per point.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: Option<f64>,
    pub d_closed: Option<f64>,
    pub d_oracle: Option<f64>,
    pub d_sim: Option<f64>,
    pub d_sim_stderr: Option<f64>,
    pub lambda_bar: f64,
    pub varpi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<Vec<f64>>,
}

fn evaluate(spec: &SweepSpec, index: usize, value: f64) -> std::result::Result<SweepRow, bdt_core::Error> {
    let point = spec.model.clone().with(&spec.variable, value);
    let out = spec.outputs;
    let mut row = SweepRow {
        index,
        value: Some(value),
        d_closed: None,
        d_oracle: None,
        d_sim: None,
        d_sim_stderr: None,
        lambda_bar: 0.0,
        varpi: 0.0,
        breakdown: None,
    };
    match point.build()? {
        BuiltModel::Finite(m) => {
            let rates = rates_and_cdfs(&m)?;
            row.lambda_bar = rates.thinned_rate;
            row.varpi = rates.counted_fraction;
            if out.closed_form || out.breakdown {
                let closed = dispersion_closed_form(&m)?;
                row.d_closed = out.closed_form.then_some(closed.d);
                row.breakdown = out.breakdown.then_some(closed.r);
            }
            if out.oracle {
                row.d_oracle = Some(dispersion_renewal_reward(&m)?);
            }
            if let (true, Some(template)) = (out.simulation, spec.sim) {
                let config = SimConfig {
                    seed: point_seed(template.seed, index),
                    ..template
                };
                let est = simulate(&m, &config)?;
                row.d_sim = Some(est.d_hat);
                row.d_sim_stderr = Some(est.std_err);
            }
        }
        BuiltModel::Infinite(m) => {
            if out.simulation {
                return Err(bdt_core::Error::InvalidConfig(
                    "simulation needs a finite state space".into(),
                ));
            }
            // No oracle for infinite chains; that column stays empty.
            let d = dispersion_infinite(&m.with_truncation(spec.truncation))?;
            row.lambda_bar = d.thinned_rate;
            row.varpi = d.counted_fraction;
            row.d_closed = out.closed_form.then_some(d.d);
            row.breakdown = out.breakdown.then_some(d.r);
        }
    }
    Ok(row)
}

/// Evaluates every grid point in parallel; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let values = spec.grid.values();
    let mut rows = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            evaluate(spec, i, v).map_err(|source| CliError::Point {
                variable: spec.variable.clone(),
                value: v,
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.index);
    Ok(rows)
}

fn field(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            field(r.value),
            field(r.d_closed),
            field(r.d_oracle),
            field(r.d_sim),
            field(r.d_sim_stderr),
            num(r.lambda_bar),
            num(r.varpi)
        );
    }
    s
}

pub fn rows_to_text(variable: &str, rows: &[SweepRow]) -> String {
    let cell = |x: Option<f64>| x.map(|v| format!("{v:.10}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:>14} {:>14} {:>14} {:>14} {:>12} {:>14} {:>10}\n",
        variable, "D_closed", "D_oracle", "D_sim", "stderr", "lambda_bar", "varpi"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>14} {:>14} {:>14} {:>14} {:>12} {:>14.8} {:>10.6}",
            r.value.map(|v| format!("{v:.6}")).unwrap_or_default(),
            cell(r.d_closed),
            cell(r.d_oracle),
            cell(r.d_sim),
            r.d_sim_stderr.map(|v| format!("{v:.2e}")).unwrap_or_else(|| "-".into()),
            r.lambda_bar,
            r.varpi
        );
    }
    s
}

/// `{"spec": .., "rows": [..]}`
pub fn rows_to_json(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let doc = serde_json::json!({ "spec": spec, "rows": rows });
    serde_json::to_string_pretty(&doc).expect("sweep rows serialize") + "\n"
}
