//! Occupancy-limited momentum grid with a co-moving drift shift.
//!
//! Particles are stored in a frame that rides with the grid: drift never
//! touches them, it only advances [`ShiftState::k_shift`]. When the shift has
//! accumulated whole cells, the occupancy array is index-shifted so that the
//! occupied region stays centred in the array. That rebase only changes an
//! integer offset; stored coordinates are left untouched, so physical
//! wavevectors are independent of when (or whether) rebasing happens.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::physics::{dirac_energy, fermi_dirac, group_velocity};
use crate::units::{UnitSystem, G_S, G_V, PER_NM2_TO_PER_CM2};
use crate::wavevector::Wavevector;

/// Uniform grid over [−k_max, k_max]² with `n` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KGrid {
    pub k_max: f64,
    pub n: usize,
    pub dk: f64,
}

impl KGrid {
    pub fn new(k_max: f64, n: usize) -> Result<Self> {
        if !(k_max.is_finite() && k_max > 0.0) {
            return Err(Error::Config(format!(
                "k_max must be positive, got {k_max}"
            )));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "cells per axis must be even and at least 2, got {n}"
            )));
        }
        Ok(Self {
            k_max,
            n,
            dk: 2.0 * k_max / n as f64,
        })
    }

    /// Centre coordinate of cell `i` along one axis.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        -self.k_max + (i as f64 + 0.5) * self.dk
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> Wavevector {
        Wavevector::new(self.center(i), self.center(j))
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.n * self.n
    }

    /// Row-major flat index with `i` along k_x.
    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        (idx / self.n, idx % self.n)
    }

    /// Unbounded floor index of a coordinate along one axis.
    #[inline]
    fn floor_index(&self, x: f64) -> i64 {
        ((x + self.k_max) / self.dk).floor() as i64
    }
}

/// Cell containing a grid-relative wavevector. Interior boundaries belong to
/// the cell whose lower edge they are; the outer edge k_max is clamped into
/// the last cell. Returns `None` outside the domain.
pub fn cell_of(k_rel: Wavevector, grid: &KGrid) -> Option<(usize, usize)> {
    let axis = |x: f64| -> Option<usize> {
        if !(x >= -grid.k_max && x <= grid.k_max) {
            return None;
        }
        Some((grid.floor_index(x).max(0) as usize).min(grid.n - 1))
    };
    Some((axis(k_rel.kx)?, axis(k_rel.ky)?))
}

/// Accumulated drift of the co-moving grid.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShiftState {
    /// Total drift since t = 0, nm⁻¹.
    pub k_shift: Wavevector,
    /// Whole cells the occupancy array has been index-shifted, per axis.
    pub rebase: [i64; 2],
}

impl ShiftState {
    #[inline]
    pub fn physical(&self, k_stored: Wavevector) -> Wavevector {
        k_stored + self.k_shift
    }

    #[inline]
    pub fn stored(&self, k_phys: Wavevector) -> Wavevector {
        k_phys - self.k_shift
    }

    /// Grid-relative coordinate of a stored wavevector, i.e. its position
    /// within Ω_k in the frame of the rebased array.
    pub fn grid_relative(&self, k_stored: Wavevector, grid: &KGrid) -> Wavevector {
        k_stored
            + Wavevector::new(
                self.rebase[0] as f64 * grid.dk,
                self.rebase[1] as f64 * grid.dk,
            )
    }

    /// Flat array cell of a stored wavevector, `None` if it lies outside the
    /// array.
    #[inline]
    pub fn cell_of_stored(&self, k_stored: Wavevector, grid: &KGrid) -> Option<usize> {
        let n = grid.n as i64;
        let i = grid.floor_index(k_stored.kx) + self.rebase[0];
        let j = grid.floor_index(k_stored.ky) + self.rebase[1];
        if (0..n).contains(&i) && (0..n).contains(&j) {
            Some(grid.flat(i as usize, j as usize))
        } else {
            None
        }
    }

    /// Physical wavevector at the centre of array cell (i, j).
    #[inline]
    pub fn cell_center_physical(&self, grid: &KGrid, i: usize, j: usize) -> Wavevector {
        Wavevector::new(
            grid.center(i) - self.rebase[0] as f64 * grid.dk + self.k_shift.kx,
            grid.center(j) - self.rebase[1] as f64 * grid.dk + self.k_shift.ky,
        )
    }
}

/// Fractional part of k_shift,x/Δk.
pub fn subcell_phase(shift: &ShiftState, grid: &KGrid) -> f64 {
    let phase = (shift.k_shift.kx / grid.dk).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs.
    if phase >= 1.0 {
        0.0
    } else {
        phase
    }
}

/// Integer per-cell particle counts normalised by the initial maximum `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyField {
    counts: Vec<u32>,
    m: u32,
    n: usize,
    overfull_events: u64,
}

impl OccupancyField {
    pub fn new(counts: Vec<u32>, n: usize, m: u32) -> Self {
        assert_eq!(counts.len(), n * n);
        assert!(m > 0, "normalisation must be positive");
        Self {
            counts,
            m,
            n,
            overfull_events: 0,
        }
    }

    pub fn zeros(n: usize, m: u32) -> Self {
        Self::new(vec![0; n * n], n, m)
    }

    #[inline]
    pub fn m(&self) -> u32 {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn count(&self, idx: usize) -> u32 {
        self.counts[idx]
    }

    /// Occupation fraction occ/M of a cell.
    #[inline]
    pub fn fraction(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 / self.m as f64
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Number of placements that left a cell above M.
    pub fn overfull_events(&self) -> u64 {
        self.overfull_events
    }

    #[inline]
    fn increment(&mut self, idx: usize) {
        self.counts[idx] += 1;
        if self.counts[idx] > self.m {
            self.overfull_events += 1;
        }
    }

    #[inline]
    fn decrement(&mut self, idx: usize) {
        let c = &mut self.counts[idx];
        assert!(*c > 0, "occupancy of cell {idx} would become negative");
        *c -= 1;
    }

    /// Shifts the array contents by `d` cells along `axis` (0 = k_x).
    /// Fails without modifying anything if occupied cells would fall off.
    fn shift_cells(&mut self, axis: usize, d: i64) -> bool {
        let n = self.n;
        if d == 0 {
            return true;
        }
        if d.unsigned_abs() as usize >= n {
            return self.counts.iter().all(|&c| c == 0);
        }
        let s = d.unsigned_abs() as usize;
        let lost = |i: usize, j: usize| self.counts[i * n + j] != 0;
        let would_lose = match (axis, d > 0) {
            (0, true) => (n - s..n).any(|i| (0..n).any(|j| lost(i, j))),
            (0, false) => (0..s).any(|i| (0..n).any(|j| lost(i, j))),
            (_, true) => (0..n).any(|i| (n - s..n).any(|j| lost(i, j))),
            (_, false) => (0..n).any(|i| (0..s).any(|j| lost(i, j))),
        };
        if would_lose {
            return false;
        }
        if axis == 0 {
            if d > 0 {
                self.counts.copy_within(0..(n - s) * n, s * n);
                self.counts[..s * n].fill(0);
            } else {
                self.counts.copy_within(s * n.., 0);
                self.counts[(n - s) * n..].fill(0);
            }
        } else {
            for row in self.counts.chunks_mut(n) {
                if d > 0 {
                    row.copy_within(0..n - s, s);
                    row[..s].fill(0);
                } else {
                    row.copy_within(s.., 0);
                    row[n - s..].fill(0);
                }
            }
        }
        true
    }
}

/// Stored wavevectors of all simulated particles plus their array cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleStore {
    k: Vec<Wavevector>,
    cell: Vec<u32>,
}

impl ParticleStore {
    pub fn new(k: Vec<Wavevector>, cell: Vec<u32>) -> Self {
        assert_eq!(k.len(), cell.len());
        Self { k, cell }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.k.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    #[inline]
    pub fn stored(&self, p: usize) -> Wavevector {
        self.k[p]
    }

    #[inline]
    pub fn cell(&self, p: usize) -> usize {
        self.cell[p] as usize
    }

    pub fn stored_all(&self) -> &[Wavevector] {
        &self.k
    }

    pub fn cells(&self) -> &[u32] {
        &self.cell
    }
}

/// A pending particle move: new stored wavevector and its array cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Move {
    pub particle: usize,
    pub k_stored: Wavevector,
    pub cell: usize,
}

/// Applies accepted moves: decrement source cells, increment destinations,
/// update particle records. The total count is unchanged.
pub fn apply_transition(particles: &mut ParticleStore, occ: &mut OccupancyField, moves: &[Move]) {
    for mv in moves {
        let src = particles.cell[mv.particle] as usize;
        occ.decrement(src);
        occ.increment(mv.cell);
        particles.k[mv.particle] = mv.k_stored;
        particles.cell[mv.particle] = mv.cell as u32;
    }
}

/// Draws η ∈ (0, 1]; a zero fraction then always passes and a unit fraction
/// always fails.
#[inline]
fn eta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Single-particle Pauli test: accept with probability 1 − f_eff of the
/// destination, not counting the mover itself when it stays in its cell.
pub fn pauli_accept_single<R: Rng + ?Sized>(
    source: usize,
    dest: usize,
    occ: &OccupancyField,
    rng: &mut R,
) -> bool {
    let eff = occ.count(dest) as f64 - (dest == source) as u8 as f64;
    let f_eff = eff / occ.m() as f64;
    f_eff < eta(rng)
}

/// Two-particle Pauli test. Both movers are removed from their source cells
/// before testing, and the second destination sees the first placement when
/// both land in the same cell.
pub fn pauli_accept_pair<R: Rng + ?Sized>(
    src1: usize,
    src2: usize,
    dest1: usize,
    dest2: usize,
    occ: &OccupancyField,
    rng: &mut R,
) -> bool {
    let m = occ.m() as f64;
    let base = |d: usize| occ.count(d) as f64 - (src1 == d) as u8 as f64 - (src2 == d) as u8 as f64;
    let eff1 = base(dest1);
    let eff2 = base(dest2) + (dest1 == dest2) as u8 as f64;
    if eff1 / m >= eta(rng) {
        return false;
    }
    eff2 / m < eta(rng)
}

/// Ensemble-averaged observables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observables {
    /// Areal density, cm⁻².
    pub density: f64,
    /// Mean energy, eV.
    pub mean_energy: f64,
    /// Mean velocity, nm/ps.
    pub mean_velocity: Wavevector,
}

/// The full mutable state of the momentum-space ensemble.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub grid: KGrid,
    pub occ: OccupancyField,
    pub particles: ParticleStore,
    pub shift: ShiftState,
    /// Density fixed from the t = 0 normalisation, cm⁻².
    pub density: f64,
}

impl Ensemble {
    /// Builds an ensemble from explicit stored wavevectors and normalisation.
    pub fn from_particles(grid: KGrid, k_stored: Vec<Wavevector>, m: u32) -> Result<Self> {
        let shift = ShiftState::default();
        let mut occ = OccupancyField::zeros(grid.n, m);
        let mut cells = Vec::with_capacity(k_stored.len());
        for (p, &k) in k_stored.iter().enumerate() {
            let cell = shift.cell_of_stored(k, &grid).ok_or(Error::DomainEscape {
                particle: p,
                time_ps: 0.0,
                kx: k.kx,
                ky: k.ky,
            })?;
            occ.increment(cell);
            cells.push(cell as u32);
        }
        let density = initial_density(&occ, &grid);
        Ok(Self {
            grid,
            occ,
            particles: ParticleStore::new(k_stored, cells),
            shift,
            density,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    #[inline]
    pub fn physical(&self, p: usize) -> Wavevector {
        self.shift.physical(self.particles.stored(p))
    }

    /// Maps a proposed physical wavevector to (stored wavevector, array cell).
    #[inline]
    pub fn locate(&self, k_phys: Wavevector) -> Option<(Wavevector, usize)> {
        let stored = self.shift.stored(k_phys);
        self.shift
            .cell_of_stored(stored, &self.grid)
            .map(|cell| (stored, cell))
    }

    /// Advances the co-moving shift by the field-driven Δk over `dt` and
    /// rebases the array once the whole-cell part has moved by at least
    /// `rebase_threshold` cells. Positive E_x drifts toward positive k_x.
    pub fn apply_drift(
        &mut self,
        field_kv_per_cm: [f64; 2],
        dt_ps: f64,
        units: &UnitSystem,
        rebase_threshold: u64,
        time_ps: f64,
    ) -> Result<()> {
        let rate = units.kdot_per_kv_per_cm();
        self.shift.k_shift.kx += rate * field_kv_per_cm[0] * dt_ps;
        self.shift.k_shift.ky += rate * field_kv_per_cm[1] * dt_ps;
        let shift = [self.shift.k_shift.kx, self.shift.k_shift.ky];
        for axis in 0..2 {
            let target = (shift[axis] / self.grid.dk).floor() as i64;
            let d = target - self.shift.rebase[axis];
            if d != 0 && d.unsigned_abs() >= rebase_threshold {
                self.rebase(axis, d, time_ps)?;
            }
        }
        Ok(())
    }

    /// Index-shifts the occupancy array by `d` cells along `axis`.
    pub fn rebase(&mut self, axis: usize, d: i64, time_ps: f64) -> Result<()> {
        if !self.occ.shift_cells(axis, d) {
            return Err(Error::RebaseEscape { time_ps });
        }
        self.shift.rebase[axis] += d;
        let n = self.grid.n as i64;
        let step = if axis == 0 { d * n } else { d };
        for c in self.particles.cell.iter_mut() {
            *c = (*c as i64 + step) as u32;
        }
        Ok(())
    }

    pub fn apply_transition(&mut self, moves: &[Move]) {
        apply_transition(&mut self.particles, &mut self.occ, moves);
    }

    pub fn observables(&self, units: &UnitSystem) -> Observables {
        observables(&self.particles, &self.shift, units, self.density)
    }

    /// Snapshot of f = occ/M as CSV: header row of physical k_x centres,
    /// first column of physical k_y centres.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.grid.n;
        write!(w, "ky\\kx")?;
        for i in 0..n {
            write!(
                w,
                ",{}",
                self.shift.cell_center_physical(&self.grid, i, 0).kx
            )?;
        }
        writeln!(w)?;
        for j in 0..n {
            write!(
                w,
                "{}",
                self.shift.cell_center_physical(&self.grid, 0, j).ky
            )?;
            for i in 0..n {
                write!(w, ",{}", self.occ.fraction(self.grid.flat(i, j)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Debug check of the cell cache and count conservation.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let mut counts = vec![0u32; self.grid.cell_count()];
        for p in 0..self.len() {
            let k = self.particles.stored(p);
            let cell = self.shift.cell_of_stored(k, &self.grid);
            if cell != Some(self.particles.cell(p)) {
                return Err(format!(
                    "particle {p}: cached cell {} but indexing gives {cell:?}",
                    self.particles.cell(p)
                ));
            }
            counts[self.particles.cell(p)] += 1;
        }
        if counts != self.occ.counts() {
            return Err("occupancy does not match particle cells".into());
        }
        Ok(())
    }
}

fn initial_density(occ: &OccupancyField, grid: &KGrid) -> f64 {
    let sum_f = occ.total() as f64 / occ.m() as f64;
    G_S * G_V / (4.0 * std::f64::consts::PI.powi(2))
        * sum_f
        * grid.dk
        * grid.dk
        * PER_NM2_TO_PER_CM2
}

/// Initial ensemble: cell occupancies from rounding N_p0·f/Σf at the cell
/// centres, M = max occupancy, particles uniform within their cells.
pub fn init_from_fermi_dirac<R: Rng + ?Sized>(
    grid: KGrid,
    temperature: f64,
    eps_f: f64,
    target: usize,
    units: &UnitSystem,
    rng: &mut R,
) -> Result<Ensemble> {
    if target == 0 {
        return Err(Error::Config(
            "target particle count must be at least 1".into(),
        ));
    }
    let n = grid.n;
    let weights: Vec<f64> = (0..grid.cell_count())
        .map(|idx| {
            let (i, j) = grid.unflat(idx);
            fermi_dirac(
                dirac_energy(grid.cell_center(i, j), units),
                temperature,
                eps_f,
                units,
            )
        })
        .collect();
    let norm: f64 = weights.iter().sum();
    let counts: Vec<u32> = weights
        .iter()
        .map(|w| (target as f64 * w / norm).round() as u32)
        .collect();
    let m = counts.iter().copied().max().unwrap_or(0);
    if m == 0 {
        return Err(Error::EmptyInitialOccupancy);
    }
    let shift = ShiftState::default();
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    let mut k = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total);
    for (idx, &c) in counts.iter().enumerate() {
        let (i, j) = grid.unflat(idx);
        for _ in 0..c {
            let kp = loop {
                let kp = Wavevector::new(
                    -grid.k_max + (i as f64 + rng.random::<f64>()) * grid.dk,
                    -grid.k_max + (j as f64 + rng.random::<f64>()) * grid.dk,
                );
                if shift.cell_of_stored(kp, &grid) == Some(idx) {
                    break kp;
                }
            };
            k.push(kp);
            cells.push(idx as u32);
        }
    }
    let occ = OccupancyField::new(counts, n, m);
    let density = initial_density(&occ, &grid);
    Ok(Ensemble {
        grid,
        occ,
        particles: ParticleStore::new(k, cells),
        shift,
        density,
    })
}

/// Particle averages of energy and group velocity at the physical
/// wavevectors; the density is passed through from initialisation.
pub fn observables(
    particles: &ParticleStore,
    shift: &ShiftState,
    units: &UnitSystem,
    density: f64,
) -> Observables {
    let n = particles.len();
    assert!(n > 0, "observables of an empty ensemble");
    let mut sum_norm = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for &k in particles.stored_all() {
        let kp = shift.physical(k);
        let norm = kp.norm();
        sum_norm += norm;
        if norm > 0.0 {
            vx += kp.kx / norm;
            vy += kp.ky / norm;
        }
    }
    let inv = 1.0 / n as f64;
    Observables {
        density,
        mean_energy: units.hbar_vf() * sum_norm * inv,
        mean_velocity: Wavevector::new(units.v_f * vx * inv, units.v_f * vy * inv),
    }
}

/// Reference (slow) observables built from the public kinematics functions.
pub fn observables_reference(ensemble: &Ensemble, units: &UnitSystem) -> Observables {
    let n = ensemble.len() as f64;
    let mut e = 0.0;
    let mut v = Wavevector::ZERO;
    for p in 0..ensemble.len() {
        let k = ensemble.physical(p);
        e += dirac_energy(k, units);
        v += group_velocity(k, units);
    }
    Observables {
        density: ensemble.density,
        mean_energy: e / n,
        mean_velocity: v * (1.0 / n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn units() -> UnitSystem {
        UnitSystem::default()
    }

    fn baseline_grid() -> KGrid {
        KGrid::new(3.8, 120).unwrap()
    }

    #[test]
    fn grid_rejects_odd_or_tiny() {
        assert!(KGrid::new(1.0, 3).is_err());
        assert!(KGrid::new(1.0, 0).is_err());
        assert!(KGrid::new(-1.0, 4).is_err());
    }

    #[test]
    fn cell_of_examples() {
        let g = baseline_grid();
        let first = Wavevector::new(-g.k_max + g.dk / 2.0, -g.k_max + g.dk / 2.0);
        assert_eq!(cell_of(first, &g), Some((0, 0)));
        let last = Wavevector::new(g.k_max - 1e-9, g.k_max - 1e-9);
        assert_eq!(cell_of(last, &g), Some((119, 119)));
        assert_eq!(
            cell_of(Wavevector::new(g.k_max, g.k_max), &g),
            Some((119, 119))
        );
        assert_eq!(cell_of(Wavevector::new(g.k_max + 1e-9, 0.0), &g), None);

        // Interior boundary at k = 0 between cells 1 and 2 of a 4-cell grid:
        // floor assigns it to the cell whose lower edge it is.
        let g4 = KGrid::new(1.0, 4).unwrap();
        assert_eq!(cell_of(Wavevector::new(0.0, -0.5), &g4), Some((2, 1)));
    }

    #[test]
    fn subcell_phase_examples() {
        let g = baseline_grid();
        let mut s = ShiftState::default();
        assert_eq!(subcell_phase(&s, &g), 0.0);
        s.k_shift.kx = 1.5 * g.dk;
        assert!((subcell_phase(&s, &g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn drift_increment_matches_arithmetic() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e =
            init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 10_000, &u, &mut rng).unwrap();
        e.apply_drift([3.0, 0.0], 0.0025, &u, 1, 0.0).unwrap();
        // eE dt/ħ with eE = 3e-4 eV/nm.
        let expected = 3.0e-4 / 6.582119514e-4 * 0.0025;
        assert!((e.shift.k_shift.kx - expected).abs() < 1e-15);
        assert!((expected - 1.1394e-3).abs() < 1e-7);
        assert_eq!(e.shift.k_shift.ky, 0.0);
    }

    #[test]
    fn zero_field_changes_nothing() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e =
            init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 10_000, &u, &mut rng).unwrap();
        let before = e.clone();
        e.apply_drift([0.0, 0.0], 0.0025, &u, 1, 0.0).unwrap();
        assert_eq!(e.shift, before.shift);
        assert_eq!(e.occ, before.occ);
        assert_eq!(e.particles, before.particles);
    }

    #[test]
    fn forced_rebase_preserves_physical_wavevectors() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut e =
            init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 20_000, &u, &mut rng).unwrap();
        e.shift.k_shift = Wavevector::new(1.3 * e.grid.dk, -0.7 * e.grid.dk);
        let before: Vec<_> = (0..e.len()).map(|p| e.physical(p)).collect();
        e.rebase(0, 1, 0.0).unwrap();
        e.rebase(1, -1, 0.0).unwrap();
        e.check_consistency().unwrap();
        let max_dev = (0..e.len())
            .map(|p| (e.physical(p) - before[p]).norm())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-12);
    }

    #[test]
    fn rebase_that_loses_particles_fails() {
        let g = KGrid::new(1.0, 4).unwrap();
        let mut e = Ensemble::from_particles(g, vec![Wavevector::new(0.9, 0.0)], 1).unwrap();
        assert!(matches!(
            e.rebase(0, 1, 1.0),
            Err(Error::RebaseEscape { .. })
        ));
        e.rebase(0, -1, 1.0).unwrap();
        e.check_consistency().unwrap();
    }

    #[test]
    fn zero_temperature_limit_is_a_sharp_disk() {
        let u = units();
        let g = baseline_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = init_from_fermi_dirac(g, 1e-3, 0.15, 100_000, &u, &mut rng).unwrap();
        let inside: Vec<usize> = (0..g.cell_count())
            .filter(|&idx| {
                let (i, j) = g.unflat(idx);
                dirac_energy(g.cell_center(i, j), &u) < 0.15
            })
            .collect();
        let expected = (100_000.0 / inside.len() as f64).round() as u32;
        for idx in 0..g.cell_count() {
            if inside.contains(&idx) {
                assert_eq!(e.occ.count(idx), expected);
            } else {
                assert_eq!(e.occ.count(idx), 0);
            }
        }
        assert_eq!(e.occ.m(), expected);
    }

    #[test]
    fn doubling_target_doubles_counts() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 50_000, &u, &mut rng).unwrap();
        let b = init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 100_000, &u, &mut rng).unwrap();
        // Each cell rounds independently: |2 round(x) − round(2x)| ≤ 1.
        let cells = a.occ.occupied_cells().max(b.occ.occupied_cells()) as f64;
        assert!(((b.len() as f64) - 2.0 * a.len() as f64).abs() <= cells);
        assert!((b.occ.m() as i64 - 2 * a.occ.m() as i64).abs() <= 1);
    }

    #[test]
    fn too_small_target_is_a_configuration_error() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 1, &u, &mut rng);
        assert!(matches!(r, Err(Error::EmptyInitialOccupancy)));
    }

    #[test]
    fn initial_particles_sit_in_their_cells() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 30_000, &u, &mut rng).unwrap();
        e.check_consistency().unwrap();
        assert_eq!(e.occ.total() as usize, e.len());
        assert_eq!(e.occ.m(), *e.occ.counts().iter().max().unwrap());
    }

    /// Midpoint quadrature of ε f and f on a fine sub-grid of Ω_k.
    fn continuum_mean_energy_and_density(eps_f: f64, t: f64) -> (f64, f64) {
        let u = units();
        let (k_max, n) = (3.8, 2400);
        let h = 2.0 * k_max / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let kx = -k_max + (i as f64 + 0.5) * h;
            for j in 0..n {
                let ky = -k_max + (j as f64 + 0.5) * h;
                let e = u.hbar_vf() * (kx * kx + ky * ky).sqrt();
                let f = fermi_dirac(e, t, eps_f, &u);
                num += e * f;
                den += f;
            }
        }
        let density = 4.0 / (4.0 * std::f64::consts::PI.powi(2)) * den * h * h * PER_NM2_TO_PER_CM2;
        (num / den, density)
    }

    #[test]
    fn baseline_initial_state_matches_continuum() {
        let u = units();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = init_from_fermi_dirac(baseline_grid(), 300.0, 0.15, 100_000, &u, &mut rng).unwrap();
        let obs = e.observables(&u);
        let (mean_e, density) = continuum_mean_energy_and_density(0.15, 300.0);
        // Occupancies weighted by cell-centre energies reproduce the continuum.
        let g = baseline_grid();
        let (mut num, mut den) = (0.0, 0.0);
        for (idx, &c) in e.occ.counts().iter().enumerate() {
            let (i, j) = g.unflat(idx);
            num += c as f64 * dirac_energy(g.cell_center(i, j), &u);
            den += c as f64;
        }
        assert!(
            (num / den / mean_e - 1.0).abs() < 0.005,
            "{} vs {}",
            num / den,
            mean_e
        );
        // In-cell sampling of a convex ε(k) raises the particle average by about 0.7%.
        let excess = obs.mean_energy / mean_e - 1.0;
        assert!(
            excess > 0.0 && excess < 0.01,
            "{} vs {}",
            obs.mean_energy,
            mean_e
        );
        // The thermal tail lifts the density about 10% above the T = 0 disk k_F²/π.
        let k_f = 0.15 / u.hbar_vf();
        let n0 = k_f * k_f / std::f64::consts::PI * PER_NM2_TO_PER_CM2;
        assert!(
            obs.density > 1.05 * n0 && obs.density < 1.15 * n0,
            "{} vs {n0}",
            obs.density
        );
        assert!(
            (obs.density / density - 1.0).abs() < 0.02,
            "{} vs {density}",
            obs.density
        );
    }

    #[test]
    fn observables_examples() {
        let u = units();
        let g = baseline_grid();
        let k = 0.3;
        let e = Ensemble::from_particles(g, vec![Wavevector::new(k, 0.0); 5], 5).unwrap();
        let obs = e.observables(&u);
        assert!((obs.mean_velocity.kx - 1000.0).abs() < 1e-9);
        assert!(obs.mean_velocity.ky.abs() < 1e-12);
        assert!((obs.mean_energy - u.hbar_vf() * k).abs() < 1e-12);

        let pts = vec![
            Wavevector::new(0.2, 0.1),
            Wavevector::new(-0.2, -0.1),
            Wavevector::new(0.05, -0.3),
            Wavevector::new(-0.05, 0.3),
        ];
        let e = Ensemble::from_particles(g, pts, 1).unwrap();
        let obs = e.observables(&u);
        assert!(obs.mean_velocity.norm() < 1e-10);
        let reference = observables_reference(&e, &u);
        assert!((reference.mean_energy - obs.mean_energy).abs() < 1e-14);
    }

    #[test]
    fn pauli_single_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut occ = OccupancyField::zeros(4, 4);
        // Destination empty.
        assert!((0..10_000).all(|_| pauli_accept_single(0, 5, &occ, &mut rng)));
        occ.counts[5] = 4;
        assert!((0..10_000).all(|_| !pauli_accept_single(0, 5, &occ, &mut rng)));
        // Same cell: the mover does not block itself.
        occ.counts[5] = 1;
        assert!((0..10_000).all(|_| pauli_accept_single(5, 5, &occ, &mut rng)));
    }

    fn bernoulli_within_3_sigma(hits: usize, trials: usize, p: f64) -> bool {
        let mean = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        (mean - p).abs() <= 3.0 * sigma + 1e-12
    }

    #[test]
    fn pauli_single_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 8;
        for occ_eff in [0u32, 2, 4, 6, 8] {
            let mut occ = OccupancyField::zeros(4, m);
            occ.counts[3] = occ_eff;
            let trials = 1_000_000;
            let hits = (0..trials)
                .filter(|_| pauli_accept_single(0, 3, &occ, &mut rng))
                .count();
            let p = 1.0 - occ_eff as f64 / m as f64;
            assert!(
                bernoulli_within_3_sigma(hits, trials, p),
                "occ {occ_eff}: {hits}"
            );
        }
    }

    #[test]
    fn pauli_pair_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut occ = OccupancyField::zeros(4, 4);
        assert!((0..10_000).all(|_| pauli_accept_pair(0, 1, 2, 3, &occ, &mut rng)));
        // Same destination with M − 1 already there: the second test sees M.
        occ.counts[6] = 3;
        assert!((0..10_000).all(|_| !pauli_accept_pair(0, 1, 6, 6, &occ, &mut rng)));

        // Self-scattering-like: both stay in their own cells.
        let mut occ = OccupancyField::zeros(4, 10);
        occ.counts[2] = 6;
        occ.counts[9] = 3;
        let p = (1.0 - 5.0 / 10.0) * (1.0 - 2.0 / 10.0);
        let trials = 1_000_000;
        let hits = (0..trials)
            .filter(|_| pauli_accept_pair(2, 9, 2, 9, &occ, &mut rng))
            .count();
        assert!(bernoulli_within_3_sigma(hits, trials, p), "{hits}");
    }

    #[test]
    fn transitions_conserve_counts() {
        let g = KGrid::new(1.0, 4).unwrap();
        let pts = vec![Wavevector::new(-0.9, -0.9), Wavevector::new(0.9, 0.9)];
        let mut e = Ensemble::from_particles(g, pts, 1).unwrap();
        let before = e.occ.clone();
        // Move within the same cell.
        let (k, c) = e.locate(Wavevector::new(-0.8, -0.8)).unwrap();
        e.apply_transition(&[Move {
            particle: 0,
            k_stored: k,
            cell: c,
        }]);
        assert_eq!(e.occ.counts(), before.counts());
        // Exchange cells.
        let (ka, ca) = e.locate(Wavevector::new(0.8, 0.8)).unwrap();
        let (kb, cb) = e.locate(Wavevector::new(-0.8, -0.8)).unwrap();
        e.apply_transition(&[
            Move {
                particle: 0,
                k_stored: ka,
                cell: ca,
            },
            Move {
                particle: 1,
                k_stored: kb,
                cell: cb,
            },
        ]);
        assert_eq!(e.occ.counts(), before.counts());
        e.check_consistency().unwrap();
    }

    #[test]
    #[should_panic(expected = "negative")]
    fn decrement_below_zero_aborts() {
        let mut occ = OccupancyField::zeros(2, 1);
        occ.decrement(0);
    }

    #[test]
    fn random_transition_fuzz_conserves_total() {
        let u = units();
        let g = KGrid::new(1.0, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut e = init_from_fermi_dirac(g, 300.0, 0.15, 5_000, &u, &mut rng).unwrap();
        let total = e.occ.total();
        for _ in 0..1_000_000 {
            let p = rng.random_range(0..e.len());
            let target = Wavevector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if let Some((k, c)) = e.locate(target) {
                e.apply_transition(&[Move {
                    particle: p,
                    k_stored: k,
                    cell: c,
                }]);
            }
        }
        assert_eq!(e.occ.total(), total);
        e.check_consistency().unwrap();
    }

    #[test]
    fn snapshot_layout() {
        let g = KGrid::new(1.0, 4).unwrap();
        let e = Ensemble::from_particles(g, vec![Wavevector::new(0.1, -0.6)], 2).unwrap();
        let mut buf = Vec::new();
        e.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "ky\\kx,-0.75,-0.25,0.25,0.75");
        // Particle is in cell i = 2, j = 0 with f = 1/2.
        assert_eq!(lines[1], "-0.75,0,0,0.5,0");
    }
}
