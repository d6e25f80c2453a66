use bdt_core::dispersion::dispersion_closed_form;
use bdt_core::models::{mm1k, random_model};
use bdt_core::oracle::solve_moments;
use bdt_core::sim::*;
use bdt_core::stationary::{rates_and_cdfs, stationary_distribution};
use bdt_core::BDModel;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_917;

fn erlang() -> BDModel {
    BDModel::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap()
}

fn within(est: &SimEstimate, truth: f64, sigmas: f64) -> bool {
    (est.d_hat - truth).abs() <= sigmas * est.std_err
}

#[test]
fn same_seed_same_bits() {
    let m = mm1k(5, 0.8, 1.0).unwrap();
    for cfg in [SimConfig::regenerative(3, 20_000), SimConfig::batch_means(3, 5e4, 20)] {
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &cfg).unwrap();
        assert_eq!(a.d_hat.to_bits(), b.d_hat.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
        let c = simulate(&m, &SimConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.d_hat, c.d_hat);
    }
}

#[test]
fn erlang_regenerative() {
    let est = simulate(&erlang(), &SimConfig::regenerative(SEED, 1_000_000)).unwrap();
    assert!(within(&est, 0.5, 3.0), "{est:?}");
    assert!(est.std_err < 2e-3);
    assert_eq!(est.cycles_or_batches, 1_000_000);
}

#[test]
fn single_counted_transition_gives_cycle_scv() {
    // Counting only exits from 0 makes Y = 1 on every cycle.
    let base = mm1k(6, 0.7, 1.0).unwrap();
    let mut qp = vec![0.0; 7];
    qp[0] = 1.0;
    let m = BDModel::new(base.lambda().to_vec(), base.mu().to_vec(), qp, vec![0.0; 7]).unwrap();
    let ms = solve_moments(&m).unwrap();
    let scv = (ms.ex2 - ms.ex * ms.ex) / (ms.ex * ms.ex);
    assert!((dispersion_closed_form(&m).unwrap().d - scv).abs() < 1e-12);
    let est = simulate(&m, &SimConfig::regenerative(SEED, 200_000)).unwrap();
    assert!(within(&est, scv, 3.0), "{est:?} vs {scv}");
}

#[test]
fn cycle_flow_balances() {
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(9), 7, 0.2, 5.0, 0.3);
    for rec in sample_cycles(&m, 1, 500) {
        assert!(rec.x > 0.0);
        for j in 0..m.j() {
            assert_eq!(rec.births[j], rec.deaths[j + 1]);
        }
        assert_eq!(rec.births[0], rec.deaths[1]);
        assert!(rec.births[0] >= 1);
    }
}

#[test]
fn occupancy_matches_stationary() {
    let m = mm1k(8, 0.9, 1.0).unwrap();
    let pi = stationary_distribution(&m).unwrap().pi;
    let occ = estimate_occupancy(&m, &SimConfig::batch_means(SEED, 2e5, 50)).unwrap();
    for (i, p) in pi.iter().enumerate() {
        assert!((occ.fraction[i] - p).abs() <= 5.0 * occ.std_err[i], "state {i}");
    }
}

#[test]
fn batch_means_mm1k() {
    let m = mm1k(20, 0.9, 1.0).unwrap();
    let truth = dispersion_closed_form(&m).unwrap().d;
    let est = simulate(&m, &SimConfig::batch_means(SEED, 1e6, 100)).unwrap();
    assert!(within(&est, truth, 3.0), "{est:?} vs {truth}");
    let diag = est.diagnostics.unwrap();
    assert!(diag.warmup >= 5e4 && diag.batch_length > 0.0);
    let rate = rates_and_cdfs(&m).unwrap().thinned_rate;
    assert!((est.mean_rate_hat - rate).abs() <= 3.0 * est.rate_std_err);
}

#[test]
fn start_state_does_not_matter() {
    let m = mm1k(10, 1.2, 1.0).unwrap();
    let truth = dispersion_closed_form(&m).unwrap().d;
    let zero = simulate(&m, &SimConfig::batch_means(SEED, 4e5, 40)).unwrap();
    let stat = simulate(
        &m,
        &SimConfig::batch_means(SEED + 1, 4e5, 40).with_initial_state(InitialState::Stationary),
    )
    .unwrap();
    let full = simulate(
        &m,
        &SimConfig::batch_means(SEED + 2, 4e5, 40).with_initial_state(InitialState::Fixed(10)),
    )
    .unwrap();
    for e in [&zero, &stat, &full] {
        assert!(within(e, truth, 3.5), "{e:?} vs {truth}");
    }
    let gap = (zero.d_hat - stat.d_hat).abs();
    assert!(gap <= 3.0 * (zero.std_err.powi(2) + stat.std_err.powi(2)).sqrt());
}

#[test]
fn regenerative_and_batch_agree() {
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(7), 5, 0.5, 2.0, 0.3);
    let truth = dispersion_closed_form(&m).unwrap().d;
    let regen = simulate(&m, &SimConfig::regenerative(SEED, 200_000)).unwrap();
    let ex = solve_moments(&m).unwrap().ex;
    let batch = simulate(&m, &SimConfig::batch_means(SEED, 200_000.0 * ex, 50)).unwrap();
    assert!(within(&regen, truth, 3.0) && within(&batch, truth, 3.0));
    let rm = regen.raw_moments.unwrap();
    assert!((rm.x - ex).abs() < 0.02 * ex);
}

#[test]
fn bad_configs() {
    let m = erlang();
    for cfg in [
        SimConfig::regenerative(1, 10),
        SimConfig::batch_means(1, -1.0, 20),
        SimConfig::batch_means(1, f64::NAN, 20),
        SimConfig::batch_means(1, 1e4, 3),
        SimConfig::batch_means(1, 5.0, 10),
        SimConfig::regenerative(1, 1000).with_initial_state(InitialState::Fixed(4)),
    ] {
        assert_eq!(simulate(&m, &cfg).unwrap_err().kind(), "InvalidConfig", "{cfg:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimates_are_finite(seed in any::<u64>(), j in 1usize..8) {
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(seed), j, 0.2, 5.0, 0.4);
        let est = simulate(&m, &SimConfig::regenerative(seed, 2_000)).unwrap();
        prop_assert!(est.d_hat.is_finite() && est.d_hat >= 0.0);
        prop_assert!(est.std_err.is_finite() && est.std_err >= 0.0);
    }
}
