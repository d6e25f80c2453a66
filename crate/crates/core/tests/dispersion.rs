use approx::assert_relative_eq;
use bdt_core::dispersion::{dispersion_closed_form, dispersion_complete_counting, dispersion_infinite, Truncation};
use bdt_core::models::{mm1_busy_cycle, mm1_two_sided, mm1k, mms_output, random_model};
use bdt_core::oracle::dispersion_renewal_reward;
use bdt_core::{BDModel, Direction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(seed: u64, j: usize) -> BDModel {
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), j, 0.1, 10.0, 0.4)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Squared coefficient of variation of an M/M/1 (service rate 1) busy
/// cycle: idle Exp(rho) plus a busy period with variance (1+rho)/(1-rho)^3.
fn busy_cycle_scv(rho: f64) -> f64 {
    let mean = 1.0 / (rho * (1.0 - rho));
    let var = 1.0 / (rho * rho) + (1.0 + rho) / (1.0 - rho).powi(3);
    var / (mean * mean)
}

#[test]
fn random_j25_matches_oracle() {
    for seed in 0..10 {
        let m = model(seed, 25);
        let d = dispersion_closed_form(&m).unwrap().d;
        assert!(rel(dispersion_renewal_reward(&m).unwrap(), d) < 1e-9);
    }
}

#[test]
fn breakdown_sums_to_index() {
    let m = model(3, 12);
    let b = dispersion_closed_form(&m).unwrap();
    assert_eq!(b.r.len(), 12);
    assert_eq!(b.d, 1.0 + 2.0 * b.r.iter().sum::<f64>());
}

#[test]
fn complete_counting_examples() {
    let erlang = BDModel::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
    assert_relative_eq!(
        dispersion_complete_counting(&erlang, Direction::Deaths).unwrap(),
        0.5,
        max_relative = 1e-14
    );
    let big = mm1k(500, 1.0, 1.0).unwrap();
    let d = dispersion_complete_counting(&big, Direction::Deaths).unwrap();
    assert!((d - 2.0 / 3.0).abs() < 0.01, "{d}");
}

#[test]
fn busy_cycle_renewal() {
    let at = |rho: f64| {
        let m = mm1_busy_cycle(rho).unwrap().with_truncation(Truncation {
            tail_tol: 1e-12,
            max_states: 1_000_000,
        });
        dispersion_infinite(&m).unwrap().d
    };
    assert!((at(0.5) - 1.0).abs() < 1e-8);
    let rho = (2.0 - 2f64.sqrt()) / 2.0;
    assert!((at(rho) - (4.0 * 2f64.sqrt() - 5.0)).abs() < 1e-6);
    for i in 1..20 {
        let rho = 0.05 * i as f64;
        assert!((at(rho) - busy_cycle_scv(rho)).abs() < 1e-6, "rho {rho}");
    }
}

#[test]
fn mms_departures_term_by_term() {
    for s in [1, 5, 10] {
        for rho in [0.3, 0.7, 0.95] {
            let out = dispersion_infinite(&mms_output(s, rho, 1.0).unwrap()).unwrap();
            assert!(out.r.iter().all(|r| r.abs() < 1e-14), "s={s} rho={rho}");
            assert!((out.d - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn two_sided_harmonic_mean() {
    for qp in [0.2, 0.5, 1.0] {
        for qm in [0.1, 0.6, 1.0] {
            let d = dispersion_infinite(&mm1_two_sided(0.6, qp, qm).unwrap()).unwrap().d;
            assert!((d - (1.0 + 2.0 * qp * qm / (qp + qm))).abs() < 1e-8);
        }
    }
    let d = dispersion_infinite(&mm1_two_sided(0.4, 0.3, 0.3).unwrap()).unwrap().d;
    assert!((d - 1.3).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closed_form_equals_oracle(seed in any::<u64>(), j in 1usize..=50) {
        let m = model(seed, j);
        let d = dispersion_closed_form(&m).unwrap().d;
        prop_assert!(d > 0.0);
        prop_assert!(rel(dispersion_renewal_reward(&m).unwrap(), d) < 1e-9);
    }

    #[test]
    fn rescaling_invariance(seed in any::<u64>(), j in 1usize..=40, c in 1e-3f64..1e3) {
        let m = model(seed, j);
        let a = dispersion_closed_form(&m).unwrap().d;
        let b = dispersion_closed_form(&m.rescaled(c).unwrap()).unwrap().d;
        prop_assert!(rel(b, a) < 1e-12);
    }

    #[test]
    fn complete_counting_consistency(seed in any::<u64>(), j in 1usize..=40) {
        let m = model(seed, j);
        let deaths = m.complete_counting(Direction::Deaths).unwrap();
        let births = m.complete_counting(Direction::Births).unwrap();
        let short = dispersion_complete_counting(&m, Direction::Deaths).unwrap();
        prop_assert_eq!(short, dispersion_complete_counting(&m, Direction::Births).unwrap());
        prop_assert!(rel(dispersion_closed_form(&deaths).unwrap().d, short) < 1e-12);
        prop_assert!(rel(dispersion_closed_form(&births).unwrap().d, short) < 1e-12);
    }
}
