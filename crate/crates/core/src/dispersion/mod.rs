//! Closed-form asymptotic index of dispersion.
//!
//! For a finite chain the index is `D = 1 + 2 sum_{k<J} R_k` with
//!
//! ```text
//! R_k = (P_k - Lambda_k) * ( thinned_rate * (P_k - Lambda_k) / (pi_k lambda_k) + q+_k - q-_{k+1} )
//! ```
//!
//! The same terms summed over a truncated countable state space give the
//! formal infinite-state value, see [`infinite`].

pub mod infinite;

use serde::Serialize;

use crate::error::Result;
use crate::model::{BDModel, Direction};
use crate::stationary::{cdf_gap, cumulative, rates_and_cdfs, stationary_distribution};

pub use infinite::{dispersion_infinite, InfiniteBDModel, InfiniteDispersion, StateRates, TailHint, Truncation};

/// The per-state terms `R_k` (`k = 0..J-1`) and the resulting index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RTermBreakdown {
    pub r: Vec<f64>,
    pub d: f64,
}

impl RTermBreakdown {
    fn from_terms(r: Vec<f64>) -> Self {
        let d = 1.0 + 2.0 * r.iter().sum::<f64>();
        Self { r, d }
    }
}

/// `R_k` for every `k` in `0..count`.
///
/// `gap[k]` is `P_k - Lambda_k` and `q_minus_next[k]` is `q-_{k+1}`.
pub(crate) fn r_terms(
    count: usize,
    thinned_rate: f64,
    gap: impl Fn(usize) -> f64,
    pi: &[f64],
    lambda: &[f64],
    q_plus: &[f64],
    q_minus_next: impl Fn(usize) -> f64,
) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let g = gap(k);
            g * (thinned_rate * g / (pi[k] * lambda[k]) + q_plus[k] - q_minus_next(k))
        })
        .collect()
}

/// Index of dispersion of the thinned count of a finite model.
pub fn dispersion_closed_form(model: &BDModel) -> Result<RTermBreakdown> {
    let s = rates_and_cdfs(model)?;
    let j = model.j();
    let qm = model.q_minus();
    let r = r_terms(
        j,
        s.thinned_rate,
        |k| s.cdf_gap(k),
        &s.pi,
        model.lambda(),
        model.q_plus(),
        |k| qm[k + 1],
    );
    Ok(RTermBreakdown::from_terms(r))
}

/// Index of dispersion when every birth (or every death) and nothing else
/// is counted. The thinning vectors of `model` are ignored.
///
/// The answer does not depend on `direction`: only `pi` and `lambda`
/// enter, through `Lambda-_k = sum_{i<k} pi_i lambda_i / rate` and
/// `Lambda+_k = sum_{i<=k} pi_i lambda_i / rate`.
pub fn dispersion_complete_counting(model: &BDModel, direction: Direction) -> Result<f64> {
    let counting = model.complete_counting(direction)?;
    let dist = stationary_distribution(&counting)?;
    let j = counting.j();
    let lambda = counting.lambda();
    let pi = &dist.pi;

    let flow: Vec<f64> = (0..=j).map(|i| pi[i] * lambda[i]).collect();
    let rate: f64 = flow.iter().sum();
    let (below_incl, above) = cumulative(&flow);

    let sum: f64 = (0..j)
        .map(|k| {
            let minus = if k == 0 { 0.0 } else { below_incl[k - 1] } / rate;
            let minus_upper = (flow[k] + above[k]) / rate;
            let plus = below_incl[k] / rate;
            let plus_upper = above[k] / rate;
            let g_minus = cdf_gap(dist.cdf[k], dist.cdf_upper[k], minus, minus_upper);
            let g_plus = cdf_gap(dist.cdf[k], dist.cdf_upper[k], plus, plus_upper);
            g_minus * g_plus / flow[k]
        })
        .sum();
    Ok(1.0 + 2.0 * rate * sum)
}
