//! Finite birth-death model with per-state, per-direction thinning.
//!
//! Every vector is stored over the full index range `0..=J`; the boundary
//! conventions `lambda[J] = 0`, `mu[0] = 0`, `q_minus[0] = 0` and
//! `q_plus[J] = 0` are materialized as stored zeros so formulas can index
//! uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An irreducible birth-death chain on `{0, .., J}` together with the
/// retention probabilities of births (`q_plus`) and deaths (`q_minus`).
///
/// A `BDModel` can only be obtained through [`BDModel::new`] (or the JSON
/// parser, which calls it), so every instance satisfies the invariants
/// checked by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct BDModel {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    q_plus: Vec<f64>,
    q_minus: Vec<f64>,
}

/// Wire form of a model: `{"J": .., "lambda": [..], "mu": [..], "q_plus": [..], "q_minus": [..]}`.
///
/// Unknown fields are ignored, so documents that embed a model alongside
/// other data (such as `bdt compute --format json` output) parse back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    #[serde(rename = "J")]
    pub j: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub q_minus: Vec<f64>,
}

impl TryFrom<ModelJson> for BDModel {
    type Error = Error;

    fn try_from(raw: ModelJson) -> Result<Self> {
        let expected = raw.j + 1;
        for (field, v) in [
            ("lambda", &raw.lambda),
            ("mu", &raw.mu),
            ("q_plus", &raw.q_plus),
            ("q_minus", &raw.q_minus),
        ] {
            if v.len() != expected {
                return Err(Error::LengthMismatch {
                    field,
                    expected,
                    got: v.len(),
                });
            }
        }
        BDModel::new(raw.lambda, raw.mu, raw.q_plus, raw.q_minus)
    }
}

impl From<BDModel> for ModelJson {
    fn from(m: BDModel) -> Self {
        ModelJson {
            j: m.j(),
            lambda: m.lambda,
            mu: m.mu,
            q_plus: m.q_plus,
            q_minus: m.q_minus,
        }
    }
}

/// Which events a complete pure counting process retains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Births,
    Deaths,
}

impl BDModel {
    /// Builds a model; `J` is inferred as `lambda.len() - 1`.
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, q_plus: Vec<f64>, q_minus: Vec<f64>) -> Result<Self> {
        validate(&lambda, &mu, &q_plus, &q_minus)?;
        Ok(Self {
            lambda,
            mu,
            q_plus,
            q_minus,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| {
            // try_from errors surface as custom serde messages; recover the
            // structured error when the document itself was well formed.
            match serde_json::from_str::<ModelJson>(s) {
                Ok(raw) => BDModel::try_from(raw).err().unwrap_or(Error::Parse(e.to_string())),
                Err(_) => Error::Parse(e.to_string()),
            }
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("model serialization is infallible")
    }

    /// Largest state index.
    pub fn j(&self) -> usize {
        self.lambda.len() - 1
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn q_plus(&self) -> &[f64] {
        &self.q_plus
    }

    pub fn q_minus(&self) -> &[f64] {
        &self.q_minus
    }

    /// Same rates, different thinning.
    pub fn with_thinning(&self, q_plus: Vec<f64>, q_minus: Vec<f64>) -> Result<Self> {
        Self::new(self.lambda.clone(), self.mu.clone(), q_plus, q_minus)
    }

    /// Same rates with complete pure birth- or death-counting.
    pub fn complete_counting(&self, direction: Direction) -> Result<Self> {
        let n = self.lambda.len();
        let j = n - 1;
        let (qp, qm) = match direction {
            Direction::Births => ((0..n).map(|i| if i < j { 1.0 } else { 0.0 }).collect(), vec![0.0; n]),
            Direction::Deaths => (vec![0.0; n], (0..n).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect()),
        };
        self.with_thinning(qp, qm)
    }

    /// All rates multiplied by `c > 0`; thinning unchanged.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.lambda.iter().map(|x| x * c).collect(),
            self.mu.iter().map(|x| x * c).collect(),
            self.q_plus.clone(),
            self.q_minus.clone(),
        )
    }

    /// Total holding rate `lambda[i] + mu[i]`.
    pub fn total_rate(&self, i: usize) -> f64 {
        self.lambda[i] + self.mu[i]
    }
}

/// Checks every model invariant; the error names the first violation found.
///
/// Boundary-rate violations are reported before thinning problems.
pub fn validate(lambda: &[f64], mu: &[f64], q_plus: &[f64], q_minus: &[f64]) -> Result<()> {
    if lambda.len() < 2 {
        return Err(Error::EmptyStateSpace(lambda.len().saturating_sub(1)));
    }
    let n = lambda.len();
    let j = n - 1;
    for (field, v) in [("mu", mu), ("q_plus", q_plus), ("q_minus", q_minus)] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                field,
                expected: n,
                got: v.len(),
            });
        }
    }

    for (field, v) in [("lambda", lambda), ("mu", mu)] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::NonFiniteRate { field, index, value });
        }
    }
    if lambda[j] != 0.0 {
        return Err(Error::BoundaryRateNonzero {
            field: "lambda",
            index: j,
            value: lambda[j],
        });
    }
    if mu[0] != 0.0 {
        return Err(Error::BoundaryRateNonzero {
            field: "mu",
            index: 0,
            value: mu[0],
        });
    }
    if let Some(index) = (0..j).find(|&i| lambda[i] <= 0.0) {
        return Err(Error::NonPositiveInteriorRate {
            field: "lambda",
            index,
            value: lambda[index],
        });
    }
    if let Some(index) = (1..=j).find(|&i| mu[i] <= 0.0) {
        return Err(Error::NonPositiveInteriorRate {
            field: "mu",
            index,
            value: mu[index],
        });
    }

    for (field, v) in [("q_plus", q_plus), ("q_minus", q_minus)] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(Error::ProbabilityOutOfRange { field, index, value });
        }
    }
    if q_plus[j] != 0.0 {
        return Err(Error::ProbabilityOutOfRange {
            field: "q_plus",
            index: j,
            value: q_plus[j],
        });
    }
    if q_minus[0] != 0.0 {
        return Err(Error::ProbabilityOutOfRange {
            field: "q_minus",
            index: 0,
            value: q_minus[0],
        });
    }
    if q_plus.iter().chain(q_minus).all(|&q| q == 0.0) {
        return Err(Error::AllThinningZero);
    }
    Ok(())
}
