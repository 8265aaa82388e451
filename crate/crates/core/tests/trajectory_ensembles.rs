use std::f64::consts::PI;

use dicke_twist::density::DensityMatrix;
use dicke_twist::master_equation::{build_twisting, integrate, IntegrateOptions};
use dicke_twist::nojump_analytic::{nojump_probability, Time, TwistParams};
use dicke_twist::spin_algebra::*;
use dicke_twist::trajectories::*;

/// Round-off floor for grid points where every trajectory agrees exactly and
/// the standard error vanishes.
const ZERO_SPREAD_FLOOR: f64 = 1e-9;

fn unraveling_matches_master_equation(s: u32, count: usize, seed: u64) {
    let spin = SpinQuantum::new(s).unwrap();
    let gamma = 0.1;
    let mut base = TrajectoryConfig::new(spin, 1.0, gamma, PI, PI / 800.0);
    base.seed = seed;
    base.record_stride = 50;
    let records = run_ensemble(&ensemble_configs(&base, count)).unwrap();
    let times: Vec<f64> = records[0].snapshots.iter().map(|x| x.time).collect();
    assert_eq!(times.len(), 17);

    let top = rotate_basis(&SpinState::basis_state(spin, Basis::Z, spin.s()).unwrap(), Basis::X);
    let model = build_twisting(1.0, gamma, spin).unwrap();
    let reference = integrate(&model, &DensityMatrix::from_pure(&top), &times, &IntegrateOptions::default()).unwrap();

    for which in [CollectiveOp::Sz, CollectiveOp::Sx] {
        let mut op = collective_operator(spin, which, Basis::X);
        if which == CollectiveOp::Sx {
            op = op.squared();
        }
        let estimates = observable_statistics(&records, &op).unwrap();
        for (est, rho) in estimates.iter().zip(&reference.states) {
            let exact = rho.expectation(&op).unwrap().re;
            let diff = (est.mean - exact).abs();
            assert!(
                diff <= 3.0 * est.standard_error + ZERO_SPREAD_FLOOR,
                "S={s} {which:?} t={}: {} vs {exact} (se {})",
                est.time,
                est.mean,
                est.standard_error
            );
        }
    }

    // the averaged density matrices carry the same information
    let averaged = average_records(&records).unwrap();
    for rho in &averaged {
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }
}

#[test]
fn ensemble_reproduces_master_equation_at_spin_four() {
    unraveling_matches_master_equation(4, 2000, 4);
}

#[test]
fn ensemble_reproduces_master_equation_at_spin_six() {
    unraveling_matches_master_equation(6, 2000, 11);
}

#[test]
fn closed_ensemble_is_the_pure_state() {
    let spin = SpinQuantum::new(5).unwrap();
    let mut base = TrajectoryConfig::new(spin, 1.0, 0.0, PI, PI / 40.0);
    base.record_stride = 5;
    let averaged = ensemble_average(&ensemble_configs(&base, 20)).unwrap();
    assert!(averaged.iter().all(|rho| (rho.purity() - 1.0).abs() < 1e-12));
}

#[test]
fn jump_free_fraction_follows_nojump_probability() {
    let spin = SpinQuantum::new(10).unwrap();
    let gamma = 0.1;
    let mut base = TrajectoryConfig::new(spin, 1.0, gamma, PI / 2.0, PI / 2000.0);
    base.seed = 31;
    base.record_stride = 1000;
    let n = 2000;
    let records = run_ensemble(&ensemble_configs(&base, n)).unwrap();
    let quiet = records.iter().filter(|r| r.jump_times.is_empty()).count() as f64 / n as f64;
    let p = nojump_probability(spin, &TwistParams::new(1.0, gamma).unwrap(), Time::LambdaT(PI / 2.0)).unwrap();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((quiet - p).abs() <= 3.0 * sigma, "{quiet} vs {p} (σ {sigma})");
}

fn long_runs(count: usize, seed: u64) -> Vec<TrajectoryRecord> {
    let spin = SpinQuantum::new(10).unwrap();
    let mut base = TrajectoryConfig::new(spin, 1.0, 0.5, 80.0, 4e-4);
    base.seed = seed;
    base.record_stride = 250;
    run_ensemble(&ensemble_configs(&base, count)).unwrap()
}

#[test]
fn settled_cycles_are_two_alternating_kittens() {
    let records = long_runs(200, 7);
    let mut settled = 0;
    for r in &records {
        let Some(cycle) = r.cycle else { continue };
        settled += 1;
        let spin = r.config.spin;
        let m = cycle.m as i64;
        let (plus, minus) = (r.final_overlaps[spin.index_of(m)], r.final_overlaps[spin.index_of(-m)]);
        assert!((plus - 0.5).abs() < 1e-6 && (minus - 0.5).abs() < 1e-6, "m={m}: {plus} {minus}");
        assert!(alternates_sign(&r.jumps, cycle.settle_time));
        // after settling the pair never loses its hold on the state
        for snap in r.snapshots.iter().filter(|x| x.time >= cycle.settle_time) {
            assert!(pair_populations(&snap.state)[cycle.m as usize] > SETTLE_POPULATION);
        }
        let window = (r.config.t_final - cycle.settle_time).min(20.0);
        if let Some(est) = detect_cycle(r, window) {
            assert_eq!(est.m, cycle.m);
        }
    }
    assert!(settled > 100, "{settled}");
}

#[test]
fn cycle_histogram_follows_top_column_weights() {
    let records = long_runs(400, 3);
    let stats = cycle_statistics(&records).unwrap();
    assert_eq!(stats.unsettled, 0);
    let test = stats.chi_square().unwrap();
    assert!(test.p_value > 0.01, "{test:?}");
    for rate in stats.rates.iter().filter(|r| r.jumps >= 200) {
        let expected = 2.0 * 0.5 * (rate.m * rate.m) as f64;
        assert!((rate.rate / expected - 1.0).abs() < 0.1, "{rate:?}");
    }
}
