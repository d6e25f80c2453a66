//! Stationary distribution, event rates and the two cumulative
//! distributions `P_k` and `Lambda_k` that every dispersion formula uses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BDModel;

/// Weights above this are folded back towards 1.
const RESCALE_ABOVE: f64 = 1e200;

/// Relative tolerance of the runtime check that both thinned-rate
/// expressions agree.
const RATE_IDENTITY_TOL: f64 = 1e-10;

/// Stationary probabilities and their cumulative sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// `P_k = sum_{i<=k} pi_i`.
    pub cdf: Vec<f64>,
    /// `1 - P_k`, summed from the top so it keeps relative accuracy in the tail.
    pub cdf_upper: Vec<f64>,
}

/// All stationary quantities of a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySummary {
    pub pi: Vec<f64>,
    pub cdf: Vec<f64>,
    pub cdf_upper: Vec<f64>,
    /// Long-run rate of all births and deaths.
    pub raw_rate: f64,
    /// Long-run rate of counted events.
    pub thinned_rate: f64,
    /// Counted-event flow through states `0..=k`; the last entry is the thinned rate.
    pub partial_rates: Vec<f64>,
    /// `Lambda_k = partial_rates[k] / thinned_rate`.
    pub lambda_cdf: Vec<f64>,
    /// `1 - Lambda_k`, summed from the top.
    pub lambda_upper: Vec<f64>,
    /// Fraction of all events that are counted.
    pub counted_fraction: f64,
}

/// Unnormalized stationary weights built by the product recurrence
/// `w_i = w_{i-1} * lambda_{i-1} / mu_i`, folded back whenever they grow
/// past `RESCALE_ABOVE`.
#[derive(Debug, Clone, Default)]
pub(crate) struct ProductWeights {
    pub(crate) w: Vec<f64>,
    pub(crate) sum: f64,
}

impl ProductWeights {
    pub(crate) fn new() -> Self {
        Self { w: vec![1.0], sum: 1.0 }
    }

    /// Appends the next state given the ratio `lambda_{i-1} / mu_i`.
    pub(crate) fn push_ratio(&mut self, ratio: f64) -> Result<()> {
        let state = self.w.len();
        let last = *self.w.last().expect("weights start non-empty");
        let mut next = last * ratio;
        if !next.is_finite() || next > RESCALE_ABOVE {
            let scale = 1.0 / last;
            self.rescale(scale);
            next = ratio;
            if !next.is_finite() {
                return Err(Error::NumericOverflow { state });
            }
        }
        self.w.push(next);
        self.sum += next;
        Ok(())
    }

    fn rescale(&mut self, scale: f64) {
        for x in &mut self.w {
            *x *= scale;
        }
        self.sum *= scale;
    }

    pub(crate) fn last(&self) -> f64 {
        *self.w.last().expect("weights start non-empty")
    }

    pub(crate) fn into_distribution(self) -> Result<StationaryDistribution> {
        let total: f64 = self.w.iter().sum();
        let pi: Vec<f64> = self.w.iter().map(|x| x / total).collect();
        if let Some(state) = pi.iter().position(|&p| !(p >= f64::MIN_POSITIVE) || !p.is_finite()) {
            return Err(Error::NumericOverflow { state });
        }
        let (cdf, cdf_upper) = cumulative(&pi);
        Ok(StationaryDistribution { pi, cdf, cdf_upper })
    }
}

/// Forward running sums and strictly-upper tail sums of `x`.
pub(crate) fn cumulative(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut acc = 0.0;
    let fwd = x
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    let mut upper = vec![0.0; x.len()];
    let mut tail = 0.0;
    for k in (0..x.len()).rev() {
        upper[k] = tail;
        tail += x[k];
    }
    (fwd, upper)
}

/// `a - b` for two cumulative distribution values, each given by its
/// forward sum and its upper tail; uses whichever pair is smaller.
pub(crate) fn cdf_gap(a: f64, a_upper: f64, b: f64, b_upper: f64) -> f64 {
    if a.max(b) <= a_upper.max(b_upper) {
        a - b
    } else {
        b_upper - a_upper
    }
}

/// Stationary distribution via the normalized product recurrence.
pub fn stationary_distribution(model: &BDModel) -> Result<StationaryDistribution> {
    let (lambda, mu) = (model.lambda(), model.mu());
    let mut weights = ProductWeights::new();
    for i in 1..=model.j() {
        weights.push_ratio(lambda[i - 1] / mu[i])?;
    }
    weights.into_distribution()
}

pub(crate) struct FlowSums {
    pub thinned_rate: f64,
    pub partial_rates: Vec<f64>,
    pub lambda_cdf: Vec<f64>,
    pub lambda_upper: Vec<f64>,
}

/// Counted-flow sums from the birth side only:
/// `c_i = pi_i lambda_i (q+_i + q-_{i+1})`, `partial_k = pi_k lambda_k q+_k + sum_{i<k} c_i`.
///
/// `q_minus_next[i]` is `q-_{i+1}`.
pub(crate) fn flow_sums(pi: &[f64], lambda: &[f64], q_plus: &[f64], q_minus_next: &[f64]) -> FlowSums {
    let n = pi.len();
    let contrib: Vec<f64> = (0..n)
        .map(|i| pi[i] * lambda[i] * (q_plus[i] + q_minus_next[i]))
        .collect();
    let thinned_rate: f64 = contrib.iter().sum();
    let (below, upper) = cumulative(&contrib);

    let mut partial_rates = vec![0.0; n];
    let mut lambda_cdf = vec![0.0; n];
    let mut lambda_upper = vec![0.0; n];
    for k in 0..n {
        let before = if k == 0 { 0.0 } else { below[k - 1] };
        let up = pi[k] * lambda[k] * q_plus[k];
        let down = pi[k] * lambda[k] * q_minus_next[k];
        partial_rates[k] = up + before;
        lambda_cdf[k] = partial_rates[k] / thinned_rate;
        lambda_upper[k] = (down + upper[k]) / thinned_rate;
    }
    FlowSums {
        thinned_rate,
        partial_rates,
        lambda_cdf,
        lambda_upper,
    }
}

/// Every stationary quantity of `model`.
///
/// The thinned rate is computed both as the direct sum over births and
/// deaths and, via partial balance, as a sum over births alone; a
/// disagreement beyond `1e-10` relative is reported as
/// [`Error::InternalIdentityViolated`].
pub fn rates_and_cdfs(model: &BDModel) -> Result<StationarySummary> {
    let dist = stationary_distribution(model)?;
    let (lambda, mu, qp, qm) = (model.lambda(), model.mu(), model.q_plus(), model.q_minus());
    let n = lambda.len();
    let pi = &dist.pi;

    let raw_rate = 2.0 * pi.iter().zip(lambda).map(|(p, l)| p * l).sum::<f64>();
    let direct: f64 = (0..n).map(|i| pi[i] * (lambda[i] * qp[i] + mu[i] * qm[i])).sum();

    let q_minus_next: Vec<f64> = (0..n).map(|i| if i + 1 < n { qm[i + 1] } else { 0.0 }).collect();
    let flow = flow_sums(pi, lambda, qp, &q_minus_next);
    if (direct - flow.thinned_rate).abs() > RATE_IDENTITY_TOL * flow.thinned_rate {
        return Err(Error::InternalIdentityViolated {
            identity: "thinned rate: direct sum = birth-side sum",
            lhs: direct,
            rhs: flow.thinned_rate,
        });
    }

    Ok(StationarySummary {
        counted_fraction: flow.thinned_rate / raw_rate,
        pi: dist.pi,
        cdf: dist.cdf,
        cdf_upper: dist.cdf_upper,
        raw_rate,
        thinned_rate: flow.thinned_rate,
        partial_rates: flow.partial_rates,
        lambda_cdf: flow.lambda_cdf,
        lambda_upper: flow.lambda_upper,
    })
}

impl StationarySummary {
    /// `P_k - Lambda_k`, evaluated on the side of the distributions with less cancellation.
    pub fn cdf_gap(&self, k: usize) -> f64 {
        cdf_gap(self.cdf[k], self.cdf_upper[k], self.lambda_cdf[k], self.lambda_upper[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(lambda: &[f64], mu: &[f64], qp: &[f64], qm: &[f64]) -> BDModel {
        BDModel::new(lambda.to_vec(), mu.to_vec(), qp.to_vec(), qm.to_vec()).unwrap()
    }

    #[test]
    fn uniform_when_ratios_are_one() {
        let m = model(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
        let d = stationary_distribution(&m).unwrap();
        for p in &d.pi {
            assert_relative_eq!(*p, 1.0 / 3.0, max_relative = 1e-15);
        }
        assert_relative_eq!(d.cdf[2], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn two_state_chain() {
        let m = model(&[1.0, 0.0], &[0.0, 2.0], &[1.0, 0.0], &[0.0, 0.0]);
        let d = stationary_distribution(&m).unwrap();
        assert_relative_eq!(d.pi[0], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(d.pi[1], 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(d.cdf_upper[0], 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(d.cdf_upper[1], 0.0);
    }

    #[test]
    fn single_counted_transition_type() {
        let m = model(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[0.0, 1.0]);
        let s = rates_and_cdfs(&m).unwrap();
        assert_relative_eq!(s.thinned_rate, 0.5, max_relative = 1e-15);
        assert_eq!(s.lambda_cdf[0], 0.0);
        assert_relative_eq!(s.lambda_cdf[1], 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.raw_rate, 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.counted_fraction, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn everything_counted() {
        let m = model(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]);
        let s = rates_and_cdfs(&m).unwrap();
        assert_relative_eq!(s.thinned_rate, 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.lambda_cdf[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(s.lambda_cdf[1], 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.counted_fraction, 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.cdf_gap(0), 0.0);
    }

    #[test]
    fn extreme_ratios_do_not_overflow() {
        // 400 states with lambda/mu = 100: raw products reach 1e800.
        let j = 400;
        let lambda: Vec<f64> = (0..=j).map(|i| if i < j { 100.0 } else { 0.0 }).collect();
        let mu: Vec<f64> = (0..=j).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect();
        let qm: Vec<f64> = (0..=j).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect();
        let m = BDModel::new(lambda, mu, vec![0.0; j + 1], qm).unwrap();
        // pi_0 underflows: the chain lives at the top.
        assert_eq!(stationary_distribution(&m).unwrap_err().kind(), "NumericOverflow");

        let j = 120;
        let lambda: Vec<f64> = (0..=j).map(|i| if i < j { 100.0 } else { 0.0 }).collect();
        let mu: Vec<f64> = (0..=j).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect();
        let qm: Vec<f64> = (0..=j).map(|i| if i > 0 { 1.0 } else { 0.0 }).collect();
        let m = BDModel::new(lambda, mu, vec![0.0; j + 1], qm).unwrap();
        let d = stationary_distribution(&m).unwrap();
        assert_relative_eq!(d.pi.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        for i in 1..=j {
            assert_relative_eq!(d.pi[i] * 1.0, d.pi[i - 1] * 100.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cdf_gap_prefers_small_side() {
        // Near the top: 1 - P and 1 - Lambda carry the information.
        let g = cdf_gap(1.0 - 1e-14, 1e-14, 1.0 - 3e-14, 3e-14);
        assert_relative_eq!(g, 2e-14, max_relative = 1e-12);
        assert_eq!(cdf_gap(0.25, 0.75, 0.125, 0.875), 0.125);
    }
}
