//! Formal index of dispersion on a countably infinite state space,
//! evaluated by truncating the `R_k` series.
//!
//! No claim is made that the truncated value equals the true asymptotic
//! index; the result carries the diagnostics needed to judge it.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::r_terms;
use crate::error::{Error, Result};
use crate::stationary::{cdf_gap, flow_sums, ProductWeights, StationarySummary};

/// Number of trailing term ratios inspected by the divergence check.
const STABILITY_WINDOW: usize = 100;
const STABILITY_RATIO: f64 = 1.0 - 1e-6;
/// Number of trailing `R_k` used for the geometric tail extrapolation.
const TAIL_FIT_TERMS: usize = 10;

/// Birth rate, death rate and retention probabilities of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRates {
    pub birth: f64,
    pub death: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub tail_tol: f64,
    pub max_states: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            tail_tol: 1e-10,
            max_states: 1_000_000,
        }
    }
}

/// Known asymptotic shape of the `R_k` tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TailHint {
    /// `R_{k+1} / R_k -> ratio` as `k` grows.
    Geometric { ratio: f64 },
}

type RateFn = dyn Fn(usize) -> StateRates + Send + Sync;

/// A birth-death model on `{0, 1, 2, ..}` given by a rate function.
#[derive(Clone)]
pub struct InfiniteBDModel {
    rates: Arc<RateFn>,
    pub truncation: Truncation,
    pub tail_hint: Option<TailHint>,
}

impl fmt::Debug for InfiniteBDModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InfiniteBDModel")
            .field("state_0", &(self.rates)(0))
            .field("truncation", &self.truncation)
            .field("tail_hint", &self.tail_hint)
            .finish()
    }
}

/// Result of a truncated evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfiniteDispersion {
    pub d: f64,
    /// Number of `R_k` terms summed (`K`).
    pub states_used: usize,
    /// Estimate of `|sum_{k>=K} R_k|` from a geometric extrapolation of the last terms.
    pub tail_bound: f64,
    /// The summed terms `R_0 .. R_{K-1}`.
    pub r: Vec<f64>,
    /// States `0..states_generated` carried in the stationary computation.
    pub states_generated: usize,
    pub thinned_rate: f64,
    pub counted_fraction: f64,
}

/// Stationary quantities of an infinite model over the states kept by the
/// truncation engine, together with their rates.
#[derive(Debug, Clone)]
pub struct TruncatedStationary {
    pub rates: Vec<StateRates>,
    /// Retention probability of a death from the first discarded state.
    pub q_minus_beyond: f64,
    pub summary: StationarySummary,
}

impl InfiniteBDModel {
    pub fn new(rates: impl Fn(usize) -> StateRates + Send + Sync + 'static) -> Self {
        Self {
            rates: Arc::new(rates),
            truncation: Truncation::default(),
            tail_hint: None,
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_tail_hint(mut self, hint: TailHint) -> Self {
        self.tail_hint = Some(hint);
        self
    }

    pub fn rates(&self, state: usize) -> StateRates {
        (self.rates)(state)
    }

    fn checked_rates(&self, state: usize) -> Result<StateRates> {
        let r = self.rates(state);
        let bad = |reason: &str| {
            Err(Error::InvalidInfiniteModel {
                state,
                reason: reason.to_string(),
            })
        };
        if !(r.birth > 0.0 && r.birth.is_finite()) {
            return bad("birth rate must be positive and finite");
        }
        if state == 0 {
            if r.death != 0.0 {
                return bad("death rate of state 0 must be 0");
            }
            if r.q_minus != 0.0 {
                return bad("q_minus of state 0 must be 0");
            }
        } else if !(r.death > 0.0 && r.death.is_finite()) {
            return bad("death rate must be positive and finite");
        }
        if !(0.0..=1.0).contains(&r.q_plus) || !(0.0..=1.0).contains(&r.q_minus) {
            return bad("retention probabilities must lie in [0, 1]");
        }
        Ok(r)
    }

    /// Generates states until the stationary mass beyond the last one is
    /// negligible, then returns the stationary quantities on those states.
    ///
    /// Stops when the geometric estimate of the remaining unnormalized mass
    /// drops below `min(tail_tol, 1e-6) * 1e-8` of the total.
    pub fn stationary(&self) -> Result<TruncatedStationary> {
        let Truncation { tail_tol, max_states } = self.truncation;
        if !(tail_tol > 0.0) || max_states < 2 {
            return Err(Error::InvalidConfig(format!(
                "truncation needs tail_tol > 0 and max_states >= 2 (got {tail_tol}, {max_states})"
            )));
        }
        let mass_tol = tail_tol.min(1e-6) * 1e-8;

        let mut rates = vec![self.checked_rates(0)?];
        let mut weights = ProductWeights::new();
        let mut recent = VecDeque::with_capacity(STABILITY_WINDOW);
        loop {
            let state = rates.len();
            if state >= max_states {
                let diverging = recent.len() == STABILITY_WINDOW && recent.iter().all(|&r| r >= STABILITY_RATIO);
                return Err(if diverging {
                    Error::StabilityCheckFailed {
                        window: STABILITY_WINDOW,
                    }
                } else {
                    Error::TruncationNotConverged { max_states }
                });
            }
            let next = self.checked_rates(state)?;
            let ratio = rates[state - 1].birth / next.death;
            weights.push_ratio(ratio)?;
            rates.push(next);
            if recent.len() == STABILITY_WINDOW {
                recent.pop_front();
            }
            recent.push_back(ratio);

            if ratio < 1.0 {
                let last = weights.last();
                let remaining = last + last * ratio / (1.0 - ratio);
                if remaining < mass_tol * weights.sum {
                    break;
                }
            }
        }

        let n = rates.len();
        let q_minus_beyond = self.checked_rates(n)?.q_minus;
        let dist = weights.into_distribution()?;
        let lambda: Vec<f64> = rates.iter().map(|r| r.birth).collect();
        let q_plus: Vec<f64> = rates.iter().map(|r| r.q_plus).collect();
        let q_minus_next: Vec<f64> = (0..n)
            .map(|i| {
                if i + 1 < n {
                    rates[i + 1].q_minus
                } else {
                    q_minus_beyond
                }
            })
            .collect();
        let flow = flow_sums(&dist.pi, &lambda, &q_plus, &q_minus_next);
        if !(flow.thinned_rate > 0.0) {
            return Err(Error::AllThinningZero);
        }
        let raw_rate = 2.0 * dist.pi.iter().zip(&lambda).map(|(p, l)| p * l).sum::<f64>();

        Ok(TruncatedStationary {
            summary: StationarySummary {
                counted_fraction: flow.thinned_rate / raw_rate,
                pi: dist.pi,
                cdf: dist.cdf,
                cdf_upper: dist.cdf_upper,
                raw_rate,
                thinned_rate: flow.thinned_rate,
                partial_rates: flow.partial_rates,
                lambda_cdf: flow.lambda_cdf,
                lambda_upper: flow.lambda_upper,
            },
            rates,
            q_minus_beyond,
        })
    }
}

/// Truncated evaluation of `1 + 2 sum_k R_k` for an infinite model.
///
/// The sum stops at the first `K` with `1 - P_K < tol`, `|1 - Lambda_K| < tol`
/// and `|R_K| < tol * max(1, |sum_{k<K} R_k|)`, where `tol` is the model's
/// `tail_tol`; `R_K` itself is not included.
pub fn dispersion_infinite(model: &InfiniteBDModel) -> Result<InfiniteDispersion> {
    let tol = model.truncation.tail_tol;
    let t = model.stationary()?;
    let s = &t.summary;
    let n = t.rates.len();
    let lambda: Vec<f64> = t.rates.iter().map(|r| r.birth).collect();
    let q_plus: Vec<f64> = t.rates.iter().map(|r| r.q_plus).collect();
    let q_minus_next = |k: usize| {
        if k + 1 < n {
            t.rates[k + 1].q_minus
        } else {
            t.q_minus_beyond
        }
    };
    let gap = |k: usize| cdf_gap(s.cdf[k], s.cdf_upper[k], s.lambda_cdf[k], s.lambda_upper[k]);

    let all = r_terms(n - 1, s.thinned_rate, gap, &s.pi, &lambda, &q_plus, q_minus_next);

    let mut partial: f64 = 0.0;
    let mut stop = None;
    for (k, &r_k) in all.iter().enumerate() {
        if s.cdf_upper[k] < tol && s.lambda_upper[k].abs() < tol && r_k.abs() < tol * partial.abs().max(1.0) {
            stop = Some(k);
            break;
        }
        partial += r_k;
    }
    let k_stop = stop.ok_or(Error::TruncationNotConverged {
        max_states: model.truncation.max_states,
    })?;

    let r_stop = all[k_stop].abs();
    let ratio = match model.tail_hint {
        Some(TailHint::Geometric { ratio }) => ratio,
        None => {
            let m = k_stop.min(TAIL_FIT_TERMS);
            if m == 0 {
                f64::NAN
            } else {
                (r_stop / all[k_stop - m].abs()).powf(1.0 / m as f64)
            }
        }
    };
    let tail_bound = if r_stop == 0.0 {
        0.0
    } else if ratio.is_finite() && ratio < 1.0 {
        r_stop / (1.0 - ratio)
    } else {
        f64::INFINITY
    };

    let r = all[..k_stop].to_vec();
    Ok(InfiniteDispersion {
        d: 1.0 + 2.0 * partial,
        states_used: k_stop,
        tail_bound,
        r,
        states_generated: n,
        thinned_rate: s.thinned_rate,
        counted_fraction: s.counted_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mm1(rho: f64, qp: f64, qm: f64) -> InfiniteBDModel {
        InfiniteBDModel::new(move |i| StateRates {
            birth: rho,
            death: if i == 0 { 0.0 } else { 1.0 },
            q_plus: qp,
            q_minus: if i == 0 { 0.0 } else { qm },
        })
    }

    #[test]
    fn geometric_stationary_tail() {
        let rho = 0.6;
        let t = mm1(rho, 1.0, 1.0).stationary().unwrap();
        for (k, p) in t.summary.pi.iter().enumerate().take(60) {
            assert_relative_eq!(*p, (1.0 - rho) * rho.powi(k as i32), max_relative = 1e-12);
        }
        assert_relative_eq!(t.summary.thinned_rate, 2.0 * rho, max_relative = 1e-12);
    }

    #[test]
    fn two_sided_constant_thinning() {
        let (qp, qm) = (0.3, 0.8);
        let r = dispersion_infinite(&mm1(0.5, qp, qm)).unwrap();
        assert_relative_eq!(r.d, 1.0 + 2.0 * qp * qm / (qp + qm), max_relative = 1e-9);
        assert!(r.tail_bound < 1e-8);
    }

    #[test]
    fn divergent_model_is_flagged() {
        let m = mm1(1.5, 1.0, 1.0).with_truncation(Truncation {
            tail_tol: 1e-10,
            max_states: 5_000,
        });
        assert_eq!(dispersion_infinite(&m).unwrap_err().kind(), "StabilityCheckFailed");
    }

    #[test]
    fn slow_model_runs_out_of_states() {
        let m = mm1(0.999, 1.0, 1.0).with_truncation(Truncation {
            tail_tol: 1e-10,
            max_states: 500,
        });
        assert_eq!(dispersion_infinite(&m).unwrap_err().kind(), "TruncationNotConverged");
    }

    #[test]
    fn bad_rate_function_rejected() {
        let m = InfiniteBDModel::new(|i| StateRates {
            birth: 1.0,
            death: 1.0,
            q_plus: 0.5,
            q_minus: if i == 0 { 0.0 } else { 1.0 },
        });
        assert_eq!(m.stationary().unwrap_err().kind(), "InvalidInfiniteModel");
        let m = InfiniteBDModel::new(|i| StateRates {
            birth: 0.5,
            death: if i == 0 { 0.0 } else { 1.0 },
            q_plus: 0.0,
            q_minus: 0.0,
        });
        assert_eq!(m.stationary().unwrap_err(), Error::AllThinningZero);
    }
}
