//! Cross-validation suite behind `bdt verify`.

use std::fmt::Write as _;

use bdt_core::dispersion::{dispersion_closed_form, dispersion_complete_counting, dispersion_infinite, Truncation};
use bdt_core::models::{mm1_busy_cycle, mm1_two_sided, mm1k, mms_output, random_model};
use bdt_core::oracle::{dispersion_renewal_reward, inverse_residual_exact};
use bdt_core::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random models per randomized check.
    pub models: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 1, models: 100 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

type Outcome = bdt_core::Result<(f64, String)>;

fn check(name: &'static str, tolerance: f64, f: impl FnOnce() -> Outcome) -> CheckResult {
    match f() {
        Ok((worst, detail)) => CheckResult {
            name,
            passed: worst < tolerance,
            worst,
            tolerance,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            worst: f64::NAN,
            tolerance,
            detail: format!("error: {e}"),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn models(seed: u64, n: usize, jmax: usize, lo: f64, hi: f64) -> Vec<bdt_core::BDModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let j = rng.random_range(1..=jmax);
            random_model(&mut rng, j, lo, hi, 0.4)
        })
        .collect()
}

fn worst_of(values: impl Iterator<Item = bdt_core::Result<f64>>) -> bdt_core::Result<f64> {
    values.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}

fn infinite_d(m: bdt_core::dispersion::InfiniteBDModel) -> bdt_core::Result<f64> {
    let tight = Truncation {
        tail_tol: 1e-12,
        ..Truncation::default()
    };
    Ok(dispersion_infinite(&m.with_truncation(tight))?.d)
}

pub fn run_verify(opts: VerifyOptions) -> Vec<CheckResult> {
    let n = opts.models;
    vec![
        check("inverse identity (exact)", 1e-9, || {
            let ms = models(opts.seed, n, 100, 0.05, 20.0);
            let worst = ms
                .par_iter()
                .map(|m| {
                    let r = inverse_residual_exact(m);
                    r.inverse_times_w.max(r.w_times_inverse)
                })
                .reduce(|| 0.0, f64::max);
            Ok((worst, format!("{n} models, J <= 100, rates in [0.05, 20]")))
        }),
        check("closed form vs oracle", 1e-9, || {
            let ms = models(opts.seed.wrapping_add(1), n, 50, 0.1, 10.0);
            let worst = worst_of(ms.iter().map(|m| {
                let d = dispersion_closed_form(m)?.d;
                Ok(rel(dispersion_renewal_reward(m)?, d))
            }))?;
            Ok((worst, format!("{n} models, J <= 50, relative")))
        }),
        check("birth vs death counting", 1e-12, || {
            let ms = models(opts.seed.wrapping_add(2), n, 50, 0.1, 10.0);
            let worst = worst_of(ms.iter().map(|m| {
                let births = dispersion_closed_form(&m.complete_counting(Direction::Births)?)?.d;
                let deaths = dispersion_closed_form(&m.complete_counting(Direction::Deaths)?)?.d;
                let short = dispersion_complete_counting(m, Direction::Deaths)?;
                Ok(rel(births, deaths).max(rel(short, deaths)))
            }))?;
            Ok((worst, format!("{n} rate sets, relative")))
        }),
        check("M/M/1 busy cycles", 1e-6, || {
            let rho = (2.0 - 2f64.sqrt()) / 2.0;
            let a = (infinite_d(mm1_busy_cycle(0.5)?)? - 1.0).abs();
            let b = (infinite_d(mm1_busy_cycle(rho)?)? - (4.0 * 2f64.sqrt() - 5.0)).abs();
            Ok((a.max(b), "rho = 0.5 and (2 - sqrt 2)/2".into()))
        }),
        check("M/M/s departures", 1e-12, || {
            let mut worst = 0.0f64;
            for s in [1, 5, 10] {
                for rho in [0.3, 0.7, 0.95] {
                    worst = worst.max((dispersion_infinite(&mms_output(s, rho, 1.0)?)?.d - 1.0).abs());
                }
            }
            Ok((worst, "s in {1, 5, 10}, rho in {0.3, 0.7, 0.95}".into()))
        }),
        check("two-sided constant thinning", 1e-8, || {
            let mut worst = 0.0f64;
            for (qp, qm, rho) in [(0.2, 0.7, 0.3), (1.0, 1.0, 0.5), (0.5, 0.1, 0.8)] {
                let want = 1.0 + 2.0 * qp * qm / (qp + qm);
                worst = worst.max((infinite_d(mm1_two_sided(rho, qp, qm)?)? - want).abs());
            }
            Ok((worst, "harmonic-mean formula".into()))
        }),
        check("Erlang cycle", 1e-14, || {
            Ok((
                (dispersion_closed_form(&mm1k(1, 1.0, 1.0)?)?.d - 0.5).abs(),
                "M/M/1/1, D = 1/2".into(),
            ))
        }),
        check("balanced M/M/1/K", 0.01, || {
            let d = dispersion_complete_counting(&mm1k(500, 1.0, 1.0)?, Direction::Deaths)?;
            Ok(((d - 2.0 / 3.0).abs(), format!("K = 500, D = {d:.6}")))
        }),
    ]
}

pub fn results_to_text(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(
            s,
            "{}  {:<28} worst {:<10.3e} tol {:<8.0e} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(s, "{} checks, {failed} failed", results.len());
    s
}
