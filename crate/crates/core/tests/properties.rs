//! Cross-module invariants checked through the public API.

use std::f64::consts::PI;

use gemc_core::analysis::{self, PeriodEstimate, SteadyWindow};
use gemc_core::ee::{coulomb_kernel, ellipse_from_pair, matrix_element_sq};
use gemc_core::ensemble::{init_from_fermi_dirac, Ensemble, Move};
use gemc_core::physics::{dirac_energy, sample_eph_final_state, EphRateModel};
use gemc_core::{EphChannel, KGrid, PhononParams, ScreeningParams, UnitSystem, Wavevector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn units() -> UnitSystem {
    UnitSystem::default()
}

fn small_ensemble(seed: u64) -> Ensemble {
    let grid = KGrid::new(3.8, 120).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_from_fermi_dirac(grid, 300.0, 0.15, 5_000, &units(), &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eph_rates_sum_and_acoustic_linearity(eps in 0.0f64..2.0) {
        let u = units();
        let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
        let r = model.rates(eps);
        prop_assert!(r.components().iter().all(|&g| g >= 0.0));
        let sum: f64 = r.components().iter().sum();
        prop_assert!((r.total - sum).abs() <= 1e-12 * sum.max(1.0));
        let r2 = model.rates(2.0 * eps);
        prop_assert!((r2.gamma_ac - 2.0 * r.gamma_ac).abs() <= 1e-12 * r2.gamma_ac.max(1e-300));
    }

    #[test]
    fn eph_final_states_conserve_energy(kx in -1.5f64..1.5, ky in -1.5f64..1.5, seed in any::<u64>()) {
        let u = units();
        let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
        let k = Wavevector::new(kx, ky);
        let eps = dirac_energy(k, &u);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ch in EphChannel::ALL {
            if model.rates(eps).get(ch) == 0.0 {
                continue;
            }
            let target = model.final_energy(eps, ch).unwrap();
            let kp = sample_eph_final_state(k, ch, &model, &u, &mut rng).unwrap();
            prop_assert!((dirac_energy(kp, &u) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_invariants(x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, x2 in -3.0f64..3.0, y2 in -3.0f64..3.0) {
        let (k1, k2) = (Wavevector::new(x1, y1), Wavevector::new(x2, y2));
        let g = ellipse_from_pair(k1, k2);
        prop_assert!((2.0 * g.a - (k1.norm() + k2.norm())).abs() < 1e-12);
        prop_assert!((2.0 * g.c - (k1 + k2).norm()).abs() < 1e-12);
        prop_assert!(g.a >= g.c && g.c >= 0.0 && g.b >= 0.0);
        prop_assert!((g.b * g.b - (g.a * g.a - g.c * g.c)).abs() < 1e-9 * g.a * g.a.max(1.0));
    }

    #[test]
    fn matrix_element_exchange_symmetry(x in -50.0f64..50.0, y in -50.0f64..50.0) {
        prop_assert_eq!(matrix_element_sq(x, y), matrix_element_sq(y, x));
        prop_assert!(matrix_element_sq(x, y) >= 0.0);
    }

    #[test]
    fn kernel_is_periodic_in_beta(x1 in -1.0f64..1.0, y1 in -1.0f64..1.0, x2 in -1.0f64..1.0, y2 in -1.0f64..1.0, beta in 0.0f64..(2.0 * PI)) {
        let s = ScreeningParams::new(1.0, 0.15, &units()).unwrap();
        let (k1, k2) = (Wavevector::new(x1, y1), Wavevector::new(x2, y2));
        let a = coulomb_kernel(k1, k2, beta, &s);
        let b = coulomb_kernel(k1, k2, beta + 2.0 * PI, &s);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
    }

    #[test]
    fn random_transitions_conserve_particles(seed in any::<u64>()) {
        let mut e = small_ensemble(seed);
        let n = e.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..2_000 {
            let p = rng.random_range(0..e.len());
            let k = Wavevector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (k_stored, cell) = e.locate(k).unwrap();
            e.apply_transition(&[Move { particle: p, k_stored, cell }]);
        }
        prop_assert_eq!(e.occ.total(), n);
        prop_assert!(e.check_consistency().is_ok());
    }

    #[test]
    fn drift_keeps_cells_consistent(ex in -8.0f64..8.0, ey in -8.0f64..8.0, steps in 1usize..200, threshold in 1u64..4) {
        let u = units();
        let mut e = small_ensemble(1);
        let before: Vec<Wavevector> = (0..e.len()).map(|p| e.physical(p)).collect();
        let obs0 = e.observables(&u);
        for s in 0..steps {
            e.apply_drift([ex, ey], 0.0025, &u, threshold, s as f64 * 0.0025).unwrap();
        }
        prop_assert!(e.check_consistency().is_ok());
        let t = steps as f64 * 0.0025;
        let dk = Wavevector::new(u.kdot_per_kv_per_cm() * ex * t, u.kdot_per_kv_per_cm() * ey * t);
        for (p, k0) in before.iter().enumerate().step_by(97) {
            prop_assert!((e.physical(p) - *k0 - dk).norm() < 1e-10);
        }
        prop_assert_eq!(e.observables(&u).density, obs0.density);
    }

    #[test]
    fn period_recovered_from_noisy_sine(period in 0.06f64..0.24, seed in any::<u64>()) {
        // SNR 5 in amplitude over noise standard deviation, at least 10 periods.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.0025).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&x| {
                let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
                let noise = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
                460.0 + 5.0 * (2.0 * PI * x / period + 0.3).sin() + noise
            })
            .collect();
        let est = analysis::extract_period(&t, &y, &SteadyWindow::fit_default()).unwrap();
        match est {
            PeriodEstimate::Period { period: p, .. } => prop_assert!((p / period - 1.0).abs() < 0.005, "{p} vs {period}"),
            PeriodEstimate::NoDominantPeriod { p_value } => prop_assert!(false, "no period, p = {p_value}"),
        }
    }
}
