//! Named constructors for the standard example systems.
//!
//! Every model is also addressable by name with a map of numeric
//! parameters through [`ModelSpec`], which is how the CLI builds them.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dispersion::{InfiniteBDModel, StateRates, TailHint};
use crate::error::{Error, Result};
use crate::model::BDModel;

/// Names accepted by [`ModelSpec::build`].
pub const MODEL_NAMES: [&str; 6] = [
    "mmsk_reneging",
    "billabong",
    "mm1k",
    "mm1_busy_cycle",
    "mms_output",
    "mm1_two_sided",
];

#[derive(Debug, Clone)]
pub enum BuiltModel {
    Finite(BDModel),
    Infinite(InfiniteBDModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Finite,
    Infinite,
}

/// A named model with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

fn out_of_range(param: &str, value: f64, reason: &str) -> Error {
    Error::ParamOutOfRange {
        param: param.to_string(),
        value,
        reason: reason.to_string(),
    }
}

fn positive(param: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(out_of_range(param, value, "must be positive and finite"))
    }
}

fn in_unit_interval(param: &str, value: f64, allow_zero: bool) -> Result<f64> {
    let ok = if allow_zero {
        (0.0..=1.0).contains(&value)
    } else {
        value > 0.0 && value <= 1.0
    };
    if ok {
        Ok(value)
    } else {
        Err(out_of_range(
            param,
            value,
            if allow_zero {
                "must lie in [0, 1]"
            } else {
                "must lie in (0, 1]"
            },
        ))
    }
}

fn load(param: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(out_of_range(param, value, "must lie in (0, 1)"))
    }
}

fn count(param: &str, value: f64, min: usize) -> Result<usize> {
    if value.fract() == 0.0 && value >= min as f64 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(out_of_range(param, value, &format!("must be an integer >= {min}")))
    }
}

impl ModelSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn kind(&self) -> Result<ModelKind> {
        match self.name.as_str() {
            "mmsk_reneging" | "billabong" | "mm1k" => Ok(ModelKind::Finite),
            "mm1_busy_cycle" | "mms_output" | "mm1_two_sided" => Ok(ModelKind::Infinite),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    /// Parameters a model accepts; the first group is required, the second optional.
    pub fn accepted_params(name: &str) -> Result<(&'static [&'static str], &'static [&'static str])> {
        Ok(match name {
            "mmsk_reneging" => (&["K", "s"], &["lambda", "rho", "mu", "gamma"]),
            "billabong" => (&["J", "lambda"], &["mu"]),
            "mm1k" => (&["K", "lambda"], &["mu"]),
            "mm1_busy_cycle" => (&["rho"], &[]),
            "mms_output" => (&["s", "rho"], &["q"]),
            "mm1_two_sided" => (&["rho", "q_plus", "q_minus"], &[]),
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| Error::MissingParam {
            model: self.name.clone(),
            param: key.to_string(),
        })
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn build(&self) -> Result<BuiltModel> {
        let (required, optional) = Self::accepted_params(&self.name)?;
        if let Some(unknown) = self
            .params
            .keys()
            .find(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
        {
            return Err(Error::UnknownParam {
                model: self.name.clone(),
                param: unknown.clone(),
            });
        }
        match self.name.as_str() {
            "mmsk_reneging" => {
                let k = count("K", self.get("K")?, 1)?;
                let s = count("s", self.get("s")?, 1)?;
                let mu = self.get_or("mu", 1.0);
                let lambda = match (self.params.get("lambda"), self.params.get("rho")) {
                    (Some(&l), None) => l,
                    (None, Some(&rho)) => rho * s as f64 * mu,
                    (Some(_), Some(&rho)) => {
                        return Err(out_of_range("rho", rho, "give either lambda or rho, not both"))
                    }
                    (None, None) => {
                        return Err(Error::MissingParam {
                            model: self.name.clone(),
                            param: "lambda".into(),
                        })
                    }
                };
                mmsk_reneging(k, s, lambda, mu, self.get_or("gamma", 0.0)).map(BuiltModel::Finite)
            }
            "billabong" => billabong(
                count("J", self.get("J")?, 2)?,
                self.get("lambda")?,
                self.get_or("mu", 1.0),
            )
            .map(BuiltModel::Finite),
            "mm1k" => mm1k(
                count("K", self.get("K")?, 1)?,
                self.get("lambda")?,
                self.get_or("mu", 1.0),
            )
            .map(BuiltModel::Finite),
            "mm1_busy_cycle" => mm1_busy_cycle(self.get("rho")?).map(BuiltModel::Infinite),
            "mms_output" => mms_output(count("s", self.get("s")?, 1)?, self.get("rho")?, self.get_or("q", 1.0))
                .map(BuiltModel::Infinite),
            "mm1_two_sided" => {
                mm1_two_sided(self.get("rho")?, self.get("q_plus")?, self.get("q_minus")?).map(BuiltModel::Infinite)
            }
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// M/M/s/K with exponential abandonment at rate `gamma` per waiting
/// customer; only service completions are counted.
pub fn mmsk_reneging(k: usize, s: usize, lambda: f64, mu: f64, gamma: f64) -> Result<BDModel> {
    if k < 1 {
        return Err(out_of_range("K", k as f64, "must be >= 1"));
    }
    if s < 1 || s > k {
        return Err(out_of_range("s", s as f64, "must satisfy 1 <= s <= K"));
    }
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(out_of_range("gamma", gamma, "must be >= 0 and finite"));
    }
    let n = k + 1;
    let lam = (0..n).map(|i| if i < k { lambda } else { 0.0 }).collect();
    let death: Vec<f64> = (0..n)
        .map(|i| mu * i.min(s) as f64 + gamma * i.saturating_sub(s) as f64)
        .collect();
    let qm = (0..n)
        .map(|i| if i == 0 { 0.0 } else { mu * i.min(s) as f64 / death[i] })
        .collect();
    BDModel::new(lam, death, vec![0.0; n], qm)
}

/// Finite population of `J` individuals visiting an infinite-server pool;
/// an arrival finding `i` others present is counted with probability `i / (i + 1)`.
///
/// Needs `J >= 2`: with a single individual no arrival ever finds company.
pub fn billabong(j: usize, lambda: f64, mu: f64) -> Result<BDModel> {
    if j < 2 {
        return Err(out_of_range("J", j as f64, "must be >= 2"));
    }
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    let n = j + 1;
    BDModel::new(
        (0..n).map(|i| (j - i) as f64 * lambda).collect(),
        (0..n).map(|i| i as f64 * mu).collect(),
        (0..n)
            .map(|i| if i < j { i as f64 / (i as f64 + 1.0) } else { 0.0 })
            .collect(),
        vec![0.0; n],
    )
}

/// M/M/1/K departures (complete death counting).
pub fn mm1k(k: usize, lambda: f64, mu: f64) -> Result<BDModel> {
    if k < 1 {
        return Err(out_of_range("K", k as f64, "must be >= 1"));
    }
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    let n = k + 1;
    BDModel::new(
        (0..n).map(|i| if i < k { lambda } else { 0.0 }).collect(),
        (0..n).map(|i| if i > 0 { mu } else { 0.0 }).collect(),
        vec![0.0; n],
        (0..n).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect(),
    )
}

/// M/M/1 (service rate 1) counting only the departures that empty the
/// system, i.e. the renewal process of busy-cycle ends.
pub fn mm1_busy_cycle(rho: f64) -> Result<InfiniteBDModel> {
    load("rho", rho)?;
    Ok(InfiniteBDModel::new(move |i| StateRates {
        birth: rho,
        death: if i == 0 { 0.0 } else { 1.0 },
        q_plus: 0.0,
        q_minus: if i == 1 { 1.0 } else { 0.0 },
    })
    .with_tail_hint(TailHint::Geometric { ratio: rho }))
}

/// Departures of a stable M/M/s queue (unit service rate), each kept with probability `q`.
pub fn mms_output(s: usize, rho: f64, q: f64) -> Result<InfiniteBDModel> {
    if s < 1 {
        return Err(out_of_range("s", s as f64, "must be >= 1"));
    }
    load("rho", rho)?;
    in_unit_interval("q", q, false)?;
    let arrival = rho * s as f64;
    Ok(InfiniteBDModel::new(move |i| StateRates {
        birth: arrival,
        death: i.min(s) as f64,
        q_plus: 0.0,
        q_minus: if i == 0 { 0.0 } else { q },
    })
    .with_tail_hint(TailHint::Geometric { ratio: rho }))
}

/// M/M/1 (service rate 1) with arrivals kept w.p. `q_plus` and departures w.p. `q_minus`.
pub fn mm1_two_sided(rho: f64, q_plus: f64, q_minus: f64) -> Result<InfiniteBDModel> {
    load("rho", rho)?;
    in_unit_interval("q_plus", q_plus, false)?;
    in_unit_interval("q_minus", q_minus, false)?;
    Ok(InfiniteBDModel::new(move |i| StateRates {
        birth: rho,
        death: if i == 0 { 0.0 } else { 1.0 },
        q_plus,
        q_minus: if i == 0 { 0.0 } else { q_minus },
    })
    .with_tail_hint(TailHint::Geometric { ratio: rho }))
}

/// Draws a valid model on `{0..=j}` with rates log-uniform in
/// `[rate_lo, rate_hi]` and each retention probability zero with
/// probability `zero_prob`, else uniform on `[0, 1]`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, j: usize, rate_lo: f64, rate_hi: f64, zero_prob: f64) -> BDModel {
    assert!(j >= 1 && rate_lo > 0.0 && rate_hi >= rate_lo);
    let (a, b) = (rate_lo.ln(), rate_hi.ln());
    let n = j + 1;
    let rate = |rng: &mut R| (a + (b - a) * rng.random::<f64>()).exp();
    let lambda: Vec<f64> = (0..n).map(|i| if i < j { rate(rng) } else { 0.0 }).collect();
    let mu: Vec<f64> = (0..n).map(|i| if i > 0 { rate(rng) } else { 0.0 }).collect();
    let q = |rng: &mut R, boundary: bool| {
        if boundary || rng.random::<f64>() < zero_prob {
            0.0
        } else {
            rng.random::<f64>()
        }
    };
    loop {
        let qp: Vec<f64> = (0..n).map(|i| q(rng, i == j)).collect();
        let qm: Vec<f64> = (0..n).map(|i| q(rng, i == 0)).collect();
        if let Ok(m) = BDModel::new(lambda.clone(), mu.clone(), qp, qm) {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reneging_without_abandonment_counts_every_death() {
        let m = mmsk_reneging(20, 10, 9.0, 1.0, 0.0).unwrap();
        assert!(m.q_minus()[1..].iter().all(|&q| q == 1.0));
        assert!(m.q_plus().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn reneging_uncounted_fraction_is_abandonment_share() {
        let (s, gamma, mu) = (3, 0.7, 1.3);
        let m = mmsk_reneging(8, s, 2.0, mu, gamma).unwrap();
        for i in 1..=8 {
            let total = m.mu()[i];
            let q = m.q_minus()[i];
            assert!((q * total + (1.0 - q) * total - total).abs() < 1e-15);
            let expect = gamma * i.saturating_sub(s) as f64 / total;
            assert!((1.0 - q - expect).abs() < 1e-15, "state {i}");
        }
    }

    #[test]
    fn billabong_thinning() {
        let m = billabong(5, 0.4, 1.0).unwrap();
        assert_eq!(m.q_plus()[0], 0.0);
        assert_eq!(m.q_plus()[3], 0.75);
        assert_eq!(m.q_plus()[5], 0.0);
        assert_eq!(m.lambda()[1], 4.0 * 0.4);
        assert_eq!(m.mu()[2], 2.0);
        assert_eq!(billabong(1, 1.0, 1.0).unwrap_err().kind(), "ParamOutOfRange");
    }

    #[test]
    fn spec_builds_named_models() {
        let m = ModelSpec::new("mm1k").with("K", 1.0).with("lambda", 1.0);
        assert!(matches!(m.build().unwrap(), BuiltModel::Finite(_)));
        let m = ModelSpec::new("mmsk_reneging")
            .with("K", 20.0)
            .with("s", 10.0)
            .with("rho", 0.9);
        let BuiltModel::Finite(f) = m.build().unwrap() else {
            panic!()
        };
        assert!((f.lambda()[0] - 9.0).abs() < 1e-15);
        let m = ModelSpec::new("mm1_busy_cycle").with("rho", 0.5);
        assert!(matches!(m.build().unwrap(), BuiltModel::Infinite(_)));

        assert_eq!(ModelSpec::new("nope").build().unwrap_err().kind(), "UnknownModel");
        assert_eq!(
            ModelSpec::new("mm1k").with("K", 3.0).build().unwrap_err().kind(),
            "MissingParam"
        );
        let e = ModelSpec::new("mm1k")
            .with("K", 3.0)
            .with("lambda", 1.0)
            .with("zeta", 1.0)
            .build();
        assert_eq!(e.unwrap_err().kind(), "UnknownParam");
        let e = ModelSpec::new("mm1k").with("K", 2.5).with("lambda", 1.0).build();
        assert_eq!(e.unwrap_err().kind(), "ParamOutOfRange");
        let e = ModelSpec::new("mm1_busy_cycle").with("rho", 1.0).build();
        assert_eq!(e.unwrap_err().kind(), "ParamOutOfRange");
    }

    #[test]
    fn random_models_are_valid_and_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for j in 1..20 {
            let m = random_model(&mut a, j, 0.1, 10.0, 0.5);
            assert_eq!(m.j(), j);
            assert_eq!(m, random_model(&mut b, j, 0.1, 10.0, 0.5));
        }
    }
}
