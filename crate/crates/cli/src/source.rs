//! Where a model comes from: a named constructor with parameters, or a JSON file.

use std::path::PathBuf;

use bdt_core::dispersion::Truncation;
use bdt_core::models::{BuiltModel, ModelSpec};
use bdt_core::BDModel;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub enum ModelSource {
    Named(ModelSpec),
    File(PathBuf),
}

/// Parses one `key=value` pair.
pub fn parse_param(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("parameter `{s}` is not of the form key=value")))?;
    let value: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("parameter `{k}`: `{v}` is not a number")))?;
    Ok((k.trim().to_string(), value))
}

pub fn spec_from_args(name: &str, params: &[String]) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(name);
    for p in params {
        let (k, v) = parse_param(p)?;
        if spec.params.insert(k.clone(), v).is_some() {
            return Err(CliError::Usage(format!("parameter `{k}` given twice")));
        }
    }
    Ok(spec)
}

impl ModelSource {
    pub fn from_args(model: Option<&str>, file: Option<&PathBuf>, params: &[String]) -> Result<Self> {
        match (model, file) {
            (Some(name), None) => Ok(ModelSource::Named(spec_from_args(name, params)?)),
            (None, Some(path)) if params.is_empty() => Ok(ModelSource::File(path.clone())),
            (None, Some(_)) => Err(CliError::Usage("--param only applies to --model".into())),
            _ => Err(CliError::Usage("give exactly one of --model or --file".into())),
        }
    }

    /// Reads and validates the model. Infinite models get `truncation`.
    pub fn load(&self, truncation: Truncation) -> Result<(BuiltModel, Option<ModelSpec>)> {
        let (built, spec) = match self {
            ModelSource::Named(spec) => (spec.build()?, Some(spec.clone())),
            ModelSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
                parse_model_document(&text)?
            }
        };
        let built = match built {
            BuiltModel::Infinite(m) => BuiltModel::Infinite(m.with_truncation(truncation)),
            finite => finite,
        };
        Ok((built, spec))
    }
}

/// Accepts an explicit model (`{"J": .., "lambda": ..}`) or a named one
/// (`{"name": .., "params": {..}}`). Extra fields are ignored, so report
/// JSON written by `compute` parses back.
pub fn parse_model_document(text: &str) -> Result<(BuiltModel, Option<ModelSpec>)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bdt_core::Error::Parse(e.to_string()))?;
    if value.get("J").is_some() {
        return Ok((BuiltModel::Finite(BDModel::from_json_str(text)?), None));
    }
    if value.get("name").is_some() {
        let spec: ModelSpec = serde_json::from_value(value).map_err(|e| bdt_core::Error::Parse(e.to_string()))?;
        return Ok((spec.build()?, Some(spec)));
    }
    Err(bdt_core::Error::Parse("expected an object with `J` (explicit model) or `name` (named model)".into()).into())
}
