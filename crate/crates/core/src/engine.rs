//! Drift–collision time stepping.
//!
//! Each macro step first translates the grid by the field-driven shift, then
//! runs a continuous-time null-collision loop for every particle over the
//! step, visiting particles in a fresh random order.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{EeMode, SimConfig};
use crate::ee::{self, BetaMesh, EeKernel, ScreeningParams};
use crate::ensemble::{self, Ensemble, KGrid, Move, Observables};
use crate::error::{Error, Result};
use crate::physics::{sample_eph_final_state, EphChannel, EphRateModel, EphRateSet};
use crate::units::UnitSystem;

/// A real scattering mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Phonon(EphChannel),
    ElectronElectron,
}

impl Mechanism {
    pub const ALL: [Mechanism; 6] = [
        Mechanism::Phonon(EphChannel::Acoustic),
        Mechanism::Phonon(EphChannel::OpticalEmission),
        Mechanism::Phonon(EphChannel::OpticalAbsorption),
        Mechanism::Phonon(EphChannel::IntervalleyEmission),
        Mechanism::Phonon(EphChannel::IntervalleyAbsorption),
        Mechanism::ElectronElectron,
    ];

    pub fn index(self) -> usize {
        match self {
            Mechanism::Phonon(EphChannel::Acoustic) => 0,
            Mechanism::Phonon(EphChannel::OpticalEmission) => 1,
            Mechanism::Phonon(EphChannel::OpticalAbsorption) => 2,
            Mechanism::Phonon(EphChannel::IntervalleyEmission) => 3,
            Mechanism::Phonon(EphChannel::IntervalleyAbsorption) => 4,
            Mechanism::ElectronElectron => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Phonon(c) => c.name(),
            Mechanism::ElectronElectron => "ee",
        }
    }
}

/// Outcome counts of one mechanism.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MechanismCounts {
    pub attempted: u64,
    pub accepted: u64,
    pub pauli_rejected: u64,
    pub degenerate_rejected: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventCounters {
    /// Indexed by [`Mechanism::index`].
    pub mechanisms: [MechanismCounts; 6],
    /// Candidate events drawn from the bounded rate (real plus null).
    pub candidates: u64,
    pub null_events: u64,
    pub ee_rate_evaluations: u64,
    /// Partner pairs integrated over all e–e rate evaluations.
    pub ee_partner_terms: u64,
    /// Placements that left a cell above the normalisation M.
    pub overfull_events: u64,
}

impl EventCounters {
    pub fn get(&self, m: Mechanism) -> &MechanismCounts {
        &self.mechanisms[m.index()]
    }

    fn get_mut(&mut self, m: Mechanism) -> &mut MechanismCounts {
        &mut self.mechanisms[m.index()]
    }

    pub fn real_events(&self) -> u64 {
        self.mechanisms.iter().map(|c| c.attempted).sum()
    }
}

/// Wall-clock seconds spent per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub total: f64,
    pub init: f64,
    pub drift: f64,
    /// Collision loop time outside e–e rate evaluation and e–e events.
    pub eph: f64,
    pub ee_rate: f64,
    pub ee_events: f64,
    pub record: f64,
}

/// Observables on the recording grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub density: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, obs: &Observables) {
        self.t.push(t);
        self.mean_energy.push(obs.mean_energy);
        self.vx.push(obs.mean_velocity.kx);
        self.vy.push(obs.mean_velocity.ky);
        self.density.push(obs.density);
    }

    /// Column by CSV name.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        match name {
            "t_ps" => Some(&self.t),
            "mean_energy_eV" => Some(&self.mean_energy),
            "vx_nm_per_ps" => Some(&self.vx),
            "vy_nm_per_ps" => Some(&self.vy),
            "density_per_cm2" => Some(&self.density),
            _ => None,
        }
    }
}

/// Occupancy snapshot in CSV form.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time_ps: f64,
    pub csv: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: SimConfig,
    pub series: TimeSeries,
    pub snapshots: Vec<Snapshot>,
    pub counters: EventCounters,
    pub timings: PhaseTimings,
    pub n_particles: usize,
    pub normalization: u32,
    pub density_per_cm2: f64,
    /// e–e prefactor actually used, calibration included (ps⁻¹·nm).
    pub c_ee: f64,
    pub grid_dk: f64,
}

/// Categorical draw over the five phonon channels and the e–e rate.
pub fn select_mechanism<R: Rng + ?Sized>(
    rates: &EphRateSet,
    lambda_ee: f64,
    rng: &mut R,
) -> Mechanism {
    let total = rates.total + lambda_ee;
    debug_assert!(total > 0.0);
    let mut u = rng.random::<f64>() * total;
    for (i, r) in rates.components().into_iter().enumerate() {
        if u < r {
            return Mechanism::ALL[i];
        }
        u -= r;
    }
    if lambda_ee > 0.0 {
        return Mechanism::ElectronElectron;
    }
    // Rounding left u just above the phonon total: take the last nonzero one.
    let last = rates
        .components()
        .iter()
        .rposition(|&r| r > 0.0)
        .unwrap_or(0);
    Mechanism::ALL[last]
}

/// Free-flight time from the bounded rate.
#[inline]
fn flight_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

pub struct Simulation {
    config: SimConfig,
    units: UnitSystem,
    phonons: Option<EphRateModel>,
    kernel: Option<EeKernel>,
    ensemble: Ensemble,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    step: usize,
    counters: EventCounters,
    timings: PhaseTimings,
    series: TimeSeries,
    snapshots: Vec<Snapshot>,
    pending_snapshots: Vec<f64>,
}

impl Simulation {
    /// Validates the configuration and initialises the ensemble from the
    /// Fermi–Dirac distribution.
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let units = UnitSystem::with_fermi_velocity(config.fermi_velocity_nm_per_ps);
        let grid = KGrid::new(config.k_max_per_nm, config.cells_per_axis)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ensemble = ensemble::init_from_fermi_dirac(
            grid,
            config.temperature_k,
            config.fermi_energy_ev,
            config.target_particles,
            &units,
            &mut rng,
        )?;
        let mut sim = Self::assemble(config, units, ensemble, rng)?;
        sim.timings.init = start.elapsed().as_secs_f64();
        Ok(sim)
    }

    /// Starts from a prepared ensemble; grid settings of the configuration
    /// are ignored in favour of the ensemble's own grid.
    pub fn with_ensemble(config: SimConfig, ensemble: Ensemble) -> Result<Self> {
        config.validate()?;
        let units = UnitSystem::with_fermi_velocity(config.fermi_velocity_nm_per_ps);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::assemble(config, units, ensemble, rng)
    }

    fn assemble(
        config: SimConfig,
        units: UnitSystem,
        ensemble: Ensemble,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let phonons = config
            .eph_enabled
            .then(|| EphRateModel::new(&config.phonon_params(), &units));
        let kernel = match config.ee_mode {
            EeMode::Off => None,
            _ => {
                if ensemble.len() < 2 {
                    return Err(Error::TooFewParticles(ensemble.len()));
                }
                let screening = ScreeningParams::new(config.kappa, config.fermi_energy_ev, &units)?;
                Some(EeKernel::new(
                    screening,
                    BetaMesh::new(config.beta_intervals)?,
                    &units,
                    ensemble.grid.dk,
                    config.ee_calibration,
                ))
            }
        };
        let mut pending: Vec<f64> = config.snapshot_times_ps.clone();
        pending.sort_by(f64::total_cmp);
        pending.dedup();
        let order = (0..ensemble.len()).collect();
        let mut sim = Self {
            config,
            units,
            phonons,
            kernel,
            ensemble,
            rng,
            order,
            step: 0,
            counters: EventCounters::default(),
            timings: PhaseTimings::default(),
            series: TimeSeries::default(),
            snapshots: Vec::new(),
            pending_snapshots: pending,
        };
        sim.record()?;
        Ok(sim)
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time_ps(&self) -> f64 {
        self.step as f64 * self.config.dt_ps()
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps()
    }

    /// One macro step: drift, collisions, bookkeeping.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.config.dt_ps();
        let t0 = self.time_ps();

        let start = Instant::now();
        self.ensemble.apply_drift(
            self.config.field_kv_per_cm,
            dt,
            &self.units,
            self.config.rebase_threshold_cells,
            t0,
        )?;
        self.timings.drift += start.elapsed().as_secs_f64();

        let start = Instant::now();
        let ee_before = self.timings.ee_rate + self.timings.ee_events;
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let result = order
            .iter()
            .try_for_each(|&p| self.collision_loop(p, dt, t0));
        self.order = order;
        result?;
        let ee_spent = self.timings.ee_rate + self.timings.ee_events - ee_before;
        self.timings.eph += start.elapsed().as_secs_f64() - ee_spent;

        assert_eq!(
            self.ensemble.occ.total() as usize,
            self.ensemble.len(),
            "particle count drifted from occupancy total"
        );
        self.counters.overfull_events = self.ensemble.occ.overfull_events();
        self.step += 1;
        self.record()
    }

    fn record(&mut self) -> Result<()> {
        let start = Instant::now();
        if self.step.is_multiple_of(self.config.record_every) {
            let obs = self.ensemble.observables(&self.units);
            self.series.push(self.time_ps(), &obs);
        }
        let t = self.time_ps();
        let half = 0.5 * self.config.dt_ps();
        while let Some(&ts) = self.pending_snapshots.first() {
            if ts > t + half {
                break;
            }
            let mut buf = Vec::new();
            self.ensemble.write_snapshot(&mut buf)?;
            self.snapshots.push(Snapshot {
                time_ps: ts,
                csv: String::from_utf8(buf).expect("snapshot CSV is ASCII"),
            });
            self.pending_snapshots.remove(0);
        }
        self.timings.record += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// λ_ee at the current state of particle `p`.
    fn ee_rate(&mut self, p: usize) -> Result<f64> {
        let Some(kernel) = &self.kernel else {
            return Ok(0.0);
        };
        let start = Instant::now();
        let k1 = self.ensemble.physical(p);
        let est = match self.config.ee_mode {
            EeMode::FullSum => ee::lambda_ee_fullsum(
                k1,
                &self.ensemble.occ,
                &self.ensemble.grid,
                &self.ensemble.shift,
                kernel,
            ),
            EeMode::Sampled => ee::lambda_ee_sampled(
                k1,
                Some(p),
                &self.ensemble.particles,
                &self.ensemble.shift,
                self.ensemble.occ.m(),
                self.config.partner_samples,
                kernel,
                &mut self.rng,
            )?,
            EeMode::Off => unreachable!("kernel exists only with e-e enabled"),
        };
        self.counters.ee_rate_evaluations += 1;
        self.counters.ee_partner_terms += est.partner_terms;
        self.timings.ee_rate += start.elapsed().as_secs_f64();
        Ok(est.rate)
    }

    /// Null-collision loop of particle `p` over a window of length `dt`.
    fn collision_loop(&mut self, p: usize, dt: f64, t0: f64) -> Result<()> {
        let inv_alpha = 1.0 / self.config.alpha;
        let mut t = 0.0;
        loop {
            let rates = match &self.phonons {
                Some(model) => model.rates(self.units.hbar_vf() * self.ensemble.physical(p).norm()),
                None => EphRateSet::default(),
            };
            let lambda = self.ee_rate(p)?;
            let gamma = rates.total + lambda;
            if gamma <= 0.0 {
                return Ok(());
            }
            t += flight_time(self.config.alpha * gamma, &mut self.rng);
            if t > dt {
                return Ok(());
            }
            self.counters.candidates += 1;
            if self.rng.random::<f64>() >= inv_alpha {
                self.counters.null_events += 1;
                continue;
            }
            match select_mechanism(&rates, lambda, &mut self.rng) {
                Mechanism::Phonon(channel) => self.execute_eph(p, channel, t0 + t)?,
                Mechanism::ElectronElectron => {
                    let start = Instant::now();
                    let r = self.execute_ee(p, t0 + t);
                    self.timings.ee_events += start.elapsed().as_secs_f64();
                    r?
                }
            }
        }
    }

    fn escape(&self, particle: usize, time_ps: f64, k: crate::Wavevector) -> Error {
        Error::DomainEscape {
            particle,
            time_ps,
            kx: k.kx,
            ky: k.ky,
        }
    }

    fn execute_eph(&mut self, p: usize, channel: EphChannel, time: f64) -> Result<()> {
        let mech = Mechanism::Phonon(channel);
        self.counters.get_mut(mech).attempted += 1;
        let model = self
            .phonons
            .as_ref()
            .expect("phonon channel selected with phonons off");
        let k = self.ensemble.physical(p);
        let k_new = sample_eph_final_state(k, channel, model, &self.units, &mut self.rng)?;
        let (stored, dest) = self
            .ensemble
            .locate(k_new)
            .ok_or_else(|| self.escape(p, time, k_new))?;
        let src = self.ensemble.particles.cell(p);
        if self.config.pauli_enabled
            && !ensemble::pauli_accept_single(src, dest, &self.ensemble.occ, &mut self.rng)
        {
            self.counters.get_mut(mech).pauli_rejected += 1;
            return Ok(());
        }
        self.ensemble.apply_transition(&[Move {
            particle: p,
            k_stored: stored,
            cell: dest,
        }]);
        self.counters.get_mut(mech).accepted += 1;
        Ok(())
    }

    fn execute_ee(&mut self, p: usize, time: f64) -> Result<()> {
        let mech = Mechanism::ElectronElectron;
        self.counters.get_mut(mech).attempted += 1;
        let partner = ee::draw_partner(self.ensemble.len(), Some(p), &mut self.rng);
        let k1 = self.ensemble.physical(p);
        let k2 = self.ensemble.physical(partner);
        let g = ee::ellipse_from_pair(k1, k2);
        if g.is_degenerate() {
            self.counters.get_mut(mech).degenerate_rejected += 1;
            return Ok(());
        }
        let beta = self.rng.random::<f64>() * std::f64::consts::TAU;
        let (k1n, k2n) = ee::final_pair(&g, k1, k2, beta);
        let (s1, d1) = self
            .ensemble
            .locate(k1n)
            .ok_or_else(|| self.escape(p, time, k1n))?;
        let (s2, d2) = self
            .ensemble
            .locate(k2n)
            .ok_or_else(|| self.escape(partner, time, k2n))?;
        let src1 = self.ensemble.particles.cell(p);
        let src2 = self.ensemble.particles.cell(partner);
        if self.config.pauli_enabled
            && !ensemble::pauli_accept_pair(src1, src2, d1, d2, &self.ensemble.occ, &mut self.rng)
        {
            self.counters.get_mut(mech).pauli_rejected += 1;
            return Ok(());
        }
        self.ensemble.apply_transition(&[
            Move {
                particle: p,
                k_stored: s1,
                cell: d1,
            },
            Move {
                particle: partner,
                k_stored: s2,
                cell: d2,
            },
        ]);
        self.counters.get_mut(mech).accepted += 1;
        Ok(())
    }

    /// Steps to t_max and packages the results.
    pub fn run(mut self) -> Result<RunOutput> {
        let start = Instant::now();
        while !self.is_finished() {
            self.step()?;
        }
        self.timings.total = self.timings.init + start.elapsed().as_secs_f64();
        Ok(RunOutput {
            n_particles: self.ensemble.len(),
            normalization: self.ensemble.occ.m(),
            density_per_cm2: self.ensemble.density,
            c_ee: self.kernel.as_ref().map_or(0.0, |k| k.c_ee),
            grid_dk: self.ensemble.grid.dk,
            config: self.config,
            series: self.series,
            snapshots: self.snapshots,
            counters: self.counters,
            timings: self.timings,
        })
    }
}

/// Runs one configuration to completion.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    Simulation::new(config.clone())?.run()
}

/// One row of a cost comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub n_particles: usize,
    pub ee_mode: EeMode,
    pub partner_samples: usize,
    pub timings: PhaseTimings,
    pub ee_rate_evaluations: u64,
    pub ee_partner_terms: u64,
}

impl CostRow {
    pub fn from_output(out: &RunOutput) -> Self {
        Self {
            n_particles: out.n_particles,
            ee_mode: out.config.ee_mode,
            partner_samples: out.config.partner_samples,
            timings: out.timings,
            ee_rate_evaluations: out.counters.ee_rate_evaluations,
            ee_partner_terms: out.counters.ee_partner_terms,
        }
    }

    /// Mean partner terms per e–e rate evaluation.
    pub fn terms_per_evaluation(&self) -> f64 {
        if self.ee_rate_evaluations == 0 {
            0.0
        } else {
            self.ee_partner_terms as f64 / self.ee_rate_evaluations as f64
        }
    }
}

/// Runs each configuration and tabulates wall-clock costs. The configurations
/// should differ only in particle count and e–e method.
pub fn runtime_benchmark(configs: &[SimConfig]) -> Result<Vec<CostRow>> {
    if let Some(first) = configs.first() {
        for c in &configs[1..] {
            let diff = first.physics_differences(c);
            if !diff.is_empty() {
                return Err(Error::Config(format!(
                    "benchmark configurations differ in physical keys: {}",
                    diff.join(", ")
                )));
            }
        }
    }
    configs
        .iter()
        .map(|c| run(c).map(|o| CostRow::from_output(&o)))
        .collect()
}

/// Plain-text cost table, one row per run.
pub fn format_cost_table(rows: &[CostRow]) -> String {
    let mut out = String::from(
        "n_particles  ee_mode  n_s  total_s  drift_s  eph_s  ee_rate_s  ee_events_s  terms_per_eval\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:>11}  {:>7}  {:>3}  {:>7.2}  {:>7.2}  {:>5.2}  {:>9.2}  {:>11.2}  {:>14.1}\n",
            r.n_particles,
            r.ee_mode,
            r.partner_samples,
            r.timings.total,
            r.timings.drift,
            r.timings.eph,
            r.timings.ee_rate,
            r.timings.ee_events,
            r.terms_per_evaluation(),
        ));
    }
    out
}
