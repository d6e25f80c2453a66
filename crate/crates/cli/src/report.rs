//! `compute` and `simulate` reports.

use std::fmt::Write as _;

use bdt_core::dispersion::{dispersion_closed_form, dispersion_infinite};
use bdt_core::models::{BuiltModel, ModelKind, ModelSpec};
use bdt_core::oracle::dispersion_renewal_reward;
use bdt_core::sim::{simulate, SimConfig, SimEstimate};
use bdt_core::stationary::rates_and_cdfs;
use bdt_core::BDModel;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct TruncationInfo {
    pub states_used: usize,
    pub tail_bound: f64,
}

/// Everything `compute` prints. For explicit models the model fields sit
/// at the top level, so the JSON form is itself a valid model file.
#[derive(Debug, Clone, Serialize)]
pub struct ComputeReport {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub model: Option<BDModel>,
    pub d_closed: f64,
    pub d_oracle: Option<f64>,
    pub difference: Option<f64>,
    pub lambda_bar: f64,
    pub varpi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationInfo>,
}

pub fn compute(model: &BuiltModel, spec: Option<&ModelSpec>, breakdown: bool) -> Result<ComputeReport> {
    let (name, params) = match spec {
        Some(s) => (Some(s.name.clone()), Some(s.params.clone())),
        None => (None, None),
    };
    match model {
        BuiltModel::Finite(m) => {
            let closed = dispersion_closed_form(m)?;
            let oracle = dispersion_renewal_reward(m)?;
            let rates = rates_and_cdfs(m)?;
            Ok(ComputeReport {
                kind: ModelKind::Finite,
                name,
                params,
                model: Some(m.clone()),
                d_closed: closed.d,
                d_oracle: Some(oracle),
                difference: Some(closed.d - oracle),
                lambda_bar: rates.thinned_rate,
                varpi: rates.counted_fraction,
                breakdown: breakdown.then_some(closed.r),
                truncation: None,
            })
        }
        BuiltModel::Infinite(m) => {
            let out = dispersion_infinite(m)?;
            Ok(ComputeReport {
                kind: ModelKind::Infinite,
                name,
                params,
                model: None,
                d_closed: out.d,
                d_oracle: None,
                difference: None,
                lambda_bar: out.thinned_rate,
                varpi: out.counted_fraction,
                breakdown: breakdown.then_some(out.r),
                truncation: Some(TruncationInfo {
                    states_used: out.states_used,
                    tail_bound: out.tail_bound,
                }),
            })
        }
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

impl ComputeReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(name) = &self.name {
            let params: Vec<String> = self.params.iter().flatten().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(s, "model            {name} {}", params.join(" "));
        }
        if let Some(m) = &self.model {
            let _ = writeln!(s, "states           0..{}", m.j());
        }
        let _ = writeln!(s, "D (closed form)  {}", self.d_closed);
        let _ = writeln!(s, "D (oracle)       {}", opt(self.d_oracle));
        let _ = writeln!(s, "difference       {}", opt(self.difference));
        let _ = writeln!(s, "lambda_bar       {}", self.lambda_bar);
        let _ = writeln!(s, "varpi            {}", self.varpi);
        if let Some(t) = &self.truncation {
            let _ = writeln!(s, "terms summed     {}", t.states_used);
            let _ = writeln!(s, "tail bound       {:e}", t.tail_bound);
        }
        if let Some(r) = &self.breakdown {
            let _ = writeln!(s, "\n  k  R_k");
            for (k, v) in r.iter().enumerate() {
                let _ = writeln!(s, "{k:>3}  {v:e}");
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let row = crate::sweep::SweepRow {
            index: 0,
            value: None,
            d_closed: Some(self.d_closed),
            d_oracle: self.d_oracle,
            d_sim: None,
            d_sim_stderr: None,
            lambda_bar: self.lambda_bar,
            varpi: self.varpi,
            breakdown: None,
        };
        crate::sweep::rows_to_csv(&[row])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(flatten)]
    pub model: BDModel,
    pub config: SimConfig,
    pub estimate: SimEstimate,
    /// Closed-form value for comparison; disagreement is reported, not an error.
    pub d_closed: f64,
    pub lambda_bar: f64,
    pub varpi: f64,
}

pub fn run_simulation(model: &BuiltModel, spec: Option<&ModelSpec>, config: &SimConfig) -> Result<SimulateReport> {
    let BuiltModel::Finite(m) = model else {
        return Err(CliError::Model(bdt_core::Error::InvalidConfig(
            "simulation needs a finite state space".into(),
        )));
    };
    let estimate = simulate(m, config)?;
    let rates = rates_and_cdfs(m)?;
    Ok(SimulateReport {
        name: spec.map(|s| s.name.clone()),
        params: spec.map(|s| s.params.clone()),
        model: m.clone(),
        config: *config,
        estimate,
        d_closed: dispersion_closed_form(m)?.d,
        lambda_bar: rates.thinned_rate,
        varpi: rates.counted_fraction,
    })
}

impl SimulateReport {
    pub fn to_text(&self) -> String {
        let e = &self.estimate;
        let mut s = String::new();
        let _ = writeln!(s, "seed             {}", e.seed);
        let _ = writeln!(s, "D (simulated)    {} +- {}", e.d_hat, e.std_err);
        let _ = writeln!(s, "D (closed form)  {}", self.d_closed);
        let z = (e.d_hat - self.d_closed) / e.std_err;
        let _ = writeln!(s, "z                {z:.3}");
        let _ = writeln!(s, "rate             {} +- {}", e.mean_rate_hat, e.rate_std_err);
        let _ = writeln!(s, "replications     {}", e.cycles_or_batches);
        if let Some(d) = &e.diagnostics {
            let _ = writeln!(s, "warmup           {}", d.warmup);
            let _ = writeln!(s, "batch length     {}", d.batch_length);
            let _ = writeln!(s, "lag-1 autocorr   {:.4}", d.lag1_autocorrelation);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let row = crate::sweep::SweepRow {
            index: 0,
            value: None,
            d_closed: Some(self.d_closed),
            d_oracle: None,
            d_sim: Some(self.estimate.d_hat),
            d_sim_stderr: Some(self.estimate.std_err),
            lambda_bar: self.lambda_bar,
            varpi: self.varpi,
            breakdown: None,
        };
        crate::sweep::rows_to_csv(&[row])
    }
}
