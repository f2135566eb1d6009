//! Dirac-cone kinematics, equilibrium distributions and electron–phonon
//! scattering.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::units::{self, UnitSystem};
use crate::wavevector::Wavevector;

/// Conduction-band energy ħ v_F |k|, eV.
#[inline]
pub fn dirac_energy(k: Wavevector, units: &UnitSystem) -> f64 {
    units.hbar_vf() * k.norm()
}

/// Group velocity v_F k/|k| in nm/ps; the zero vector at k = 0.
#[inline]
pub fn group_velocity(k: Wavevector, units: &UnitSystem) -> Wavevector {
    let norm = k.norm();
    if norm == 0.0 {
        Wavevector::ZERO
    } else {
        k * (units.v_f / norm)
    }
}

/// Fermi–Dirac occupation at energy `eps` (eV), temperature `t` (K) and
/// Fermi energy `eps_f` (eV).
pub fn fermi_dirac(eps: f64, t: f64, eps_f: f64, units: &UnitSystem) -> f64 {
    debug_assert!(t > 0.0);
    let x = (eps - eps_f) / (units.k_b * t);
    // exp overflows to inf for large x which yields 0, as it should.
    1.0 / (1.0 + x.exp())
}

/// Bose–Einstein occupation of a mode of energy `hw` (eV) at `t` (K).
pub fn bose_occupation(hw: f64, t: f64, units: &UnitSystem) -> f64 {
    debug_assert!(hw > 0.0 && t > 0.0);
    1.0 / (hw / (units.k_b * t)).exp_m1()
}

/// Electron–phonon material parameters, stored in internal units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhononParams {
    /// Acoustic deformation potential, eV.
    pub d_ac: f64,
    /// Areal mass density, eV·ps²/nm⁴.
    pub rho_m: f64,
    /// Sound velocity, nm/ps.
    pub v_p: f64,
    /// Effective optical phonon energy, eV.
    pub hw_o: f64,
    /// Optical deformation potential, eV/nm.
    pub d_o: f64,
    /// Intervalley K-phonon energy, eV.
    pub hw_k: f64,
    /// Intervalley deformation potential, eV/nm.
    pub d_k: f64,
    /// Lattice temperature, K.
    pub temperature: f64,
}

impl PhononParams {
    /// Suspended-graphene values at temperature `t`.
    pub fn graphene(t: f64) -> Self {
        Self::from_lab_units(6.8, 7.6e-8, 2.13e4, 164.6, 1.0e9, 124.0, 3.5e8, t)
    }

    /// Builds the parameter set from the customary laboratory units:
    /// eV, g/cm², m/s, meV, eV/cm, meV, eV/cm, K.
    #[allow(clippy::too_many_arguments)]
    pub fn from_lab_units(
        d_ac_ev: f64,
        rho_g_per_cm2: f64,
        v_sound_m_per_s: f64,
        hw_o_mev: f64,
        d_o_ev_per_cm: f64,
        hw_k_mev: f64,
        d_k_ev_per_cm: f64,
        t: f64,
    ) -> Self {
        Self {
            d_ac: d_ac_ev,
            rho_m: units::areal_density_from_g_per_cm2(rho_g_per_cm2),
            v_p: units::speed_from_m_per_s(v_sound_m_per_s),
            hw_o: hw_o_mev * 1e-3,
            d_o: units::deformation_from_ev_per_cm(d_o_ev_per_cm),
            hw_k: hw_k_mev * 1e-3,
            d_k: units::deformation_from_ev_per_cm(d_k_ev_per_cm),
            temperature: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_ac", self.d_ac),
            ("rho_m", self.rho_m),
            ("v_p", self.v_p),
            ("hw_o", self.hw_o),
            ("d_o", self.d_o),
            ("hw_k", self.hw_k),
            ("d_k", self.d_k),
            ("temperature", self.temperature),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "phonon parameter {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// The five electron–phonon channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EphChannel {
    Acoustic,
    OpticalEmission,
    OpticalAbsorption,
    IntervalleyEmission,
    IntervalleyAbsorption,
}

impl EphChannel {
    pub const ALL: [EphChannel; 5] = [
        EphChannel::Acoustic,
        EphChannel::OpticalEmission,
        EphChannel::OpticalAbsorption,
        EphChannel::IntervalleyEmission,
        EphChannel::IntervalleyAbsorption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EphChannel::Acoustic => "ac",
            EphChannel::OpticalEmission => "o_em",
            EphChannel::OpticalAbsorption => "o_ab",
            EphChannel::IntervalleyEmission => "k_em",
            EphChannel::IntervalleyAbsorption => "k_ab",
        }
    }
}

/// Partial scattering rates in 1/ps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EphRateSet {
    pub gamma_ac: f64,
    pub gamma_o_em: f64,
    pub gamma_o_ab: f64,
    pub gamma_k_em: f64,
    pub gamma_k_ab: f64,
    pub total: f64,
}

impl EphRateSet {
    pub fn get(&self, channel: EphChannel) -> f64 {
        match channel {
            EphChannel::Acoustic => self.gamma_ac,
            EphChannel::OpticalEmission => self.gamma_o_em,
            EphChannel::OpticalAbsorption => self.gamma_o_ab,
            EphChannel::IntervalleyEmission => self.gamma_k_em,
            EphChannel::IntervalleyAbsorption => self.gamma_k_ab,
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [
            self.gamma_ac,
            self.gamma_o_em,
            self.gamma_o_ab,
            self.gamma_k_em,
            self.gamma_k_ab,
        ]
    }
}

/// Energy-independent prefactors of the phonon rates, precomputed once per
/// run because they are needed at every free flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EphRateModel {
    ac_slope: f64,
    o_coeff: f64,
    k_coeff: f64,
    n_o: f64,
    n_k: f64,
    hw_o: f64,
    hw_k: f64,
}

impl EphRateModel {
    pub fn new(p: &PhononParams, units: &UnitSystem) -> Self {
        let hbar = units.hbar;
        let vf2 = units.v_f * units.v_f;
        let kt = units.k_b * p.temperature;
        let ac_slope = p.d_ac * p.d_ac * kt / (4.0 * hbar.powi(3) * vf2 * p.rho_m * p.v_p * p.v_p);
        let omega_o = p.hw_o / hbar;
        let omega_k = p.hw_k / hbar;
        let o_coeff = p.d_o * p.d_o / (p.rho_m * omega_o * hbar * hbar * vf2);
        let k_coeff = p.d_k * p.d_k / (p.rho_m * omega_k * hbar * hbar * vf2);
        Self {
            ac_slope,
            o_coeff,
            k_coeff,
            n_o: bose_occupation(p.hw_o, p.temperature, units),
            n_k: bose_occupation(p.hw_k, p.temperature, units),
            hw_o: p.hw_o,
            hw_k: p.hw_k,
        }
    }

    #[inline]
    pub fn rates(&self, eps: f64) -> EphRateSet {
        let gamma_ac = self.ac_slope * eps;
        let gamma_o_em = if eps > self.hw_o {
            self.o_coeff * (eps - self.hw_o) * (self.n_o + 1.0)
        } else {
            0.0
        };
        let gamma_o_ab = self.o_coeff * (eps + self.hw_o) * self.n_o;
        let gamma_k_em = if eps > self.hw_k {
            self.k_coeff * (eps - self.hw_k) * (self.n_k + 1.0)
        } else {
            0.0
        };
        let gamma_k_ab = self.k_coeff * (eps + self.hw_k) * self.n_k;
        EphRateSet {
            gamma_ac,
            gamma_o_em,
            gamma_o_ab,
            gamma_k_em,
            gamma_k_ab,
            total: gamma_ac + gamma_o_em + gamma_o_ab + gamma_k_em + gamma_k_ab,
        }
    }

    /// Energy after a transition in `channel`, or `None` below an emission
    /// threshold.
    #[inline]
    pub fn final_energy(&self, eps: f64, channel: EphChannel) -> Option<f64> {
        match channel {
            EphChannel::Acoustic => Some(eps),
            EphChannel::OpticalAbsorption => Some(eps + self.hw_o),
            EphChannel::IntervalleyAbsorption => Some(eps + self.hw_k),
            EphChannel::OpticalEmission => (eps >= self.hw_o).then_some(eps - self.hw_o),
            EphChannel::IntervalleyEmission => (eps >= self.hw_k).then_some(eps - self.hw_k),
        }
    }
}

/// Scattering rates of all channels at energy `eps`.
pub fn eph_rates(eps: f64, p: &PhononParams, units: &UnitSystem) -> EphRateSet {
    EphRateModel::new(p, units).rates(eps)
}

/// Angular law of the scattering angle between incoming and outgoing
/// wavevectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngularLaw {
    /// Density ∝ (1 + cos θ)/2.
    Forward,
    /// Density ∝ (1 − cos θ)/2.
    Backward,
    Isotropic,
}

impl AngularLaw {
    pub fn for_channel(channel: EphChannel) -> Self {
        match channel {
            EphChannel::Acoustic => AngularLaw::Forward,
            EphChannel::IntervalleyEmission | EphChannel::IntervalleyAbsorption => {
                AngularLaw::Backward
            }
            EphChannel::OpticalEmission | EphChannel::OpticalAbsorption => AngularLaw::Isotropic,
        }
    }

    /// Normalised density on [−π, π].
    pub fn density(self, theta: f64) -> f64 {
        match self {
            AngularLaw::Forward => (1.0 + theta.cos()) / (2.0 * PI),
            AngularLaw::Backward => (1.0 - theta.cos()) / (2.0 * PI),
            AngularLaw::Isotropic => 1.0 / (2.0 * PI),
        }
    }

    /// Cumulative distribution on [−π, π].
    pub fn cdf(self, theta: f64) -> f64 {
        let u = theta + PI;
        match self {
            AngularLaw::Forward => (u + theta.sin()) / (2.0 * PI),
            AngularLaw::Backward => (u - theta.sin()) / (2.0 * PI),
            AngularLaw::Isotropic => u / (2.0 * PI),
        }
    }

    /// Draws θ ∈ [−π, π). The (1 ± cos θ)/2 laws use rejection against their
    /// maximum density 1/π.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        loop {
            let theta = PI * (2.0 * rng.random::<f64>() - 1.0);
            let accept = match self {
                AngularLaw::Isotropic => return theta,
                AngularLaw::Forward => 0.5 * (1.0 + theta.cos()),
                AngularLaw::Backward => 0.5 * (1.0 - theta.cos()),
            };
            if rng.random::<f64>() < accept {
                return theta;
            }
        }
    }
}

/// Proposes the post-collision wavevector for an electron–phonon event.
///
/// The magnitude follows from energy bookkeeping of the channel and the
/// direction is the incoming one rotated by a scattering angle drawn from the
/// channel's angular law. At k = 0 the +x axis serves as reference direction.
pub fn sample_eph_final_state<R: Rng + ?Sized>(
    k: Wavevector,
    channel: EphChannel,
    model: &EphRateModel,
    units: &UnitSystem,
    rng: &mut R,
) -> Result<Wavevector> {
    let norm = k.norm();
    let eps = units.hbar_vf() * norm;
    let eps_final = model
        .final_energy(eps, channel)
        .ok_or(Error::EmissionBelowThreshold {
            energy: eps,
            phonon: match channel {
                EphChannel::OpticalEmission => model.hw_o,
                _ => model.hw_k,
            },
        })?;
    let k_final = eps_final / units.hbar_vf();
    let direction = if norm > 0.0 {
        k * (1.0 / norm)
    } else {
        Wavevector::new(1.0, 0.0)
    };
    let theta = AngularLaw::for_channel(channel).sample(rng);
    Ok(direction.rotated(theta) * k_final)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn units() -> UnitSystem {
        UnitSystem::default()
    }

    #[test]
    fn dirac_energy_examples() {
        let u = units();
        assert_eq!(dirac_energy(Wavevector::ZERO, &u), 0.0);
        // |k| = ε_F/(ħ v_F) with ε_F = 0.15 eV.
        let k: f64 = 0.15 / 0.6582119514;
        assert!((k - 0.2279).abs() < 1e-4);
        assert!((dirac_energy(Wavevector::new(k, 0.0), &u) - 0.15).abs() < 1e-14);
        // Isotropy.
        let e1 = dirac_energy(Wavevector::new(0.3, 0.4), &u);
        let e2 = dirac_energy(Wavevector::new(-0.5, 0.0), &u);
        assert!((e1 - e2).abs() < 1e-15);
    }

    #[test]
    fn density_at_0_12_ev_is_about_1_06e12() {
        // g_s g_v k_F²/(4π) with k_F from ε_F = 0.12 eV.
        let kf = 0.12 / units().hbar_vf();
        let rho = 4.0 * kf * kf / (4.0 * PI) * crate::units::PER_NM2_TO_PER_CM2;
        assert!((rho / 1.06e12 - 1.0).abs() < 0.005, "{rho}");
    }

    #[test]
    fn group_velocity_examples() {
        let u = units();
        assert_eq!(
            group_velocity(Wavevector::new(1.0, 0.0), &u),
            Wavevector::new(1000.0, 0.0)
        );
        let v = group_velocity(Wavevector::new(0.3, 0.4), &u);
        assert!((v.kx - 600.0).abs() < 1e-10 && (v.ky - 800.0).abs() < 1e-10);
        assert_eq!(group_velocity(Wavevector::ZERO, &u), Wavevector::ZERO);
    }

    #[test]
    fn fermi_dirac_examples() {
        let u = units();
        assert_eq!(fermi_dirac(0.15, 300.0, 0.15, &u), 0.5);
        assert_eq!(fermi_dirac(1e6, 300.0, 0.15, &u), 0.0);
        assert!(fermi_dirac(0.0, 300.0, 5.0, &u) > 1.0 - 1e-12);
        let kt = u.k_b * 300.0;
        let expected = 1.0 / (1.0 + std::f64::consts::E);
        assert!((fermi_dirac(0.15 + kt, 300.0, 0.15, &u) - expected).abs() < 1e-12);
        assert!((expected - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn bose_examples() {
        let u = units();
        let kt = u.k_b * 300.0;
        assert!((bose_occupation(kt * 2f64.ln(), 300.0, &u) - 1.0).abs() < 1e-12);
        // Direct arithmetic with k_B T = 25.852 meV.
        assert!((bose_occupation(0.1646, 300.0, &u) / 1.7202e-3 - 1.0).abs() < 1e-3);
        assert!((bose_occupation(0.124, 300.0, &u) / 8.327e-3 - 1.0).abs() < 1e-3);
    }

    /// Independent SI-unit evaluation of the acoustic rate.
    fn acoustic_rate_si(eps_ev: f64, t: f64) -> f64 {
        let q = 1.602176634e-19;
        let hbar = 6.582119514e-16 * q;
        let d = 6.8 * q;
        let kt = 8.617333e-5 * t * q;
        let rho = 7.6e-8 * 1e-3 / 1e-4;
        let vf = 1.0e6;
        let vp = 2.13e4;
        d * d * kt * eps_ev * q / (4.0 * hbar.powi(3) * vf * vf * rho * vp * vp)
    }

    #[test]
    fn acoustic_rate_matches_si_arithmetic() {
        let u = units();
        let p = PhononParams::graphene(300.0);
        let r = eph_rates(0.15, &p, &u);
        let si = acoustic_rate_si(0.15, 300.0);
        assert!((si / 7.3e10 - 1.0).abs() < 0.01, "{si}");
        // 1/ps vs 1/s.
        assert!((r.gamma_ac * 1e12 / si - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rates_at_zero_energy() {
        let r = eph_rates(0.0, &PhononParams::graphene(300.0), &units());
        assert_eq!(r.gamma_ac, 0.0);
        assert_eq!(r.gamma_o_em, 0.0);
        assert_eq!(r.gamma_k_em, 0.0);
        assert!(r.gamma_o_ab > 0.0 && r.gamma_k_ab > 0.0);
    }

    #[test]
    fn thresholds_at_0_15_ev() {
        let r = eph_rates(0.15, &PhononParams::graphene(300.0), &units());
        assert_eq!(r.gamma_o_em, 0.0);
        assert!(r.gamma_k_em > 0.0);
    }

    #[test]
    fn optical_absorption_final_magnitude() {
        let u = units();
        let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Wavevector::new(0.15 / u.hbar_vf(), 0.0);
        let kp =
            sample_eph_final_state(k, EphChannel::OpticalAbsorption, &model, &u, &mut rng).unwrap();
        assert!((kp.norm() - 0.3146 / 0.6582119514).abs() < 1e-12);
        assert!((kp.norm() - 0.478).abs() < 1e-3);
    }

    #[test]
    fn acoustic_is_elastic_and_emission_below_threshold_errors() {
        let u = units();
        let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = Wavevector::new(0.1, -0.2);
        let kp = sample_eph_final_state(k, EphChannel::Acoustic, &model, &u, &mut rng).unwrap();
        assert!((kp.norm() - k.norm()).abs() < 1e-15);
        assert!(matches!(
            sample_eph_final_state(k, EphChannel::OpticalEmission, &model, &u, &mut rng),
            Err(Error::EmissionBelowThreshold { .. })
        ));
    }

    fn ks_statistic(mut samples: Vec<f64>, law: AngularLaw) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = law.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn angular_sampling_matches_analytic_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for law in [
            AngularLaw::Forward,
            AngularLaw::Backward,
            AngularLaw::Isotropic,
        ] {
            let samples: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
            let d = ks_statistic(samples.clone(), law);
            assert!(d < 0.002, "{law:?}: KS {d}");

            // χ² against 50 equal-width bins.
            let bins = 50;
            let mut counts = vec![0usize; bins];
            for &t in &samples {
                let b = (((t + PI) / (2.0 * PI)) * bins as f64) as usize;
                counts[b.min(bins - 1)] += 1;
            }
            let chi2: f64 = counts
                .iter()
                .enumerate()
                .map(|(b, &c)| {
                    let lo = -PI + 2.0 * PI * b as f64 / bins as f64;
                    let hi = lo + 2.0 * PI / bins as f64;
                    let expected = (law.cdf(hi) - law.cdf(lo)) * samples.len() as f64;
                    (c as f64 - expected).powi(2) / expected
                })
                .sum();
            // 49 degrees of freedom; 99.9th percentile is about 85.4.
            assert!(chi2 < 85.4, "{law:?}: chi2 {chi2}");
        }
    }

    #[test]
    fn final_state_rotation_follows_law() {
        let u = units();
        let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = Wavevector::new(-0.2, 0.3);
        let n = 200_000;
        let mean_cos: f64 = (0..n)
            .map(|_| {
                let kp = sample_eph_final_state(
                    k,
                    EphChannel::IntervalleyAbsorption,
                    &model,
                    &u,
                    &mut rng,
                )
                .unwrap();
                k.dot(kp) / (k.norm() * kp.norm())
            })
            .sum::<f64>()
            / n as f64;
        // E[cos θ] = −1/2 for the (1 − cos θ)/2 law.
        assert!((mean_cos + 0.5).abs() < 0.01, "{mean_cos}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rates_nonnegative_and_summed(eps in 0.0f64..3.0) {
                let r = eph_rates(eps, &PhononParams::graphene(300.0), &units());
                let comps = r.components();
                prop_assert!(comps.iter().all(|&c| c >= 0.0));
                let sum: f64 = comps.iter().sum();
                prop_assert!((sum - r.total).abs() <= 1e-15 * r.total.max(1.0));
            }

            #[test]
            fn acoustic_linear(eps in 0.0f64..3.0) {
                let p = PhononParams::graphene(300.0);
                let u = units();
                let a = eph_rates(eps, &p, &u).gamma_ac;
                let b = eph_rates(2.0 * eps, &p, &u).gamma_ac;
                prop_assert!((b - 2.0 * a).abs() <= 1e-14 * b.max(1e-300));
            }

            #[test]
            fn optical_emission_vanishes_below_threshold(eps in 0.0f64..0.1646) {
                let r = eph_rates(eps, &PhononParams::graphene(300.0), &units());
                prop_assert_eq!(r.gamma_o_em, 0.0);
            }

            #[test]
            fn energy_bookkeeping(kx in -2.0f64..2.0, ky in -2.0f64..2.0, seed in 0u64..1000, ch in 0usize..5) {
                let u = units();
                let model = EphRateModel::new(&PhononParams::graphene(300.0), &u);
                let channel = EphChannel::ALL[ch];
                let k = Wavevector::new(kx, ky);
                let eps = dirac_energy(k, &u);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match model.final_energy(eps, channel) {
                    Some(target) => {
                        let kp = sample_eph_final_state(k, channel, &model, &u, &mut rng).unwrap();
                        prop_assert!((dirac_energy(kp, &u) - target).abs() < 1e-12);
                    }
                    None => prop_assert!(sample_eph_final_state(k, channel, &model, &u, &mut rng).is_err()),
                }
            }
        }

        #[test]
        fn optical_emission_continuous_at_threshold() {
            let p = PhononParams::graphene(300.0);
            let r = eph_rates(p.hw_o + 1e-12, &p, &units());
            assert!(r.gamma_o_em < 1e-9);
        }
    }
}
