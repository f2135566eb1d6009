//! Screened Coulomb electron–electron scattering.
//!
//! For a pair (k1, k2) the final states allowed by momentum and linear
//! dispersion energy conservation lie on an ellipse with foci at the origin
//! and at k1 + k2. The proposal rate integrates the antisymmetrised, screened
//! matrix element along that ellipse and over partner states, either as a
//! sum over all occupied grid cells or as an average over sampled partners.

use std::f64::consts::PI;

use rand::Rng;

use crate::ensemble::{KGrid, OccupancyField, ParticleStore, ShiftState};
use crate::error::{Error, Result};
use crate::units::{UnitSystem, G_S, G_V};
use crate::wavevector::Wavevector;

/// Static RPA screening of the Coulomb interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreeningParams {
    pub kappa: f64,
    pub eps_f: f64,
    pub k_f: f64,
    pub r_s: f64,
    pub c_eps: f64,
}

impl ScreeningParams {
    pub fn new(kappa: f64, eps_f: f64, units: &UnitSystem) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Config(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if !(eps_f.is_finite() && eps_f > 0.0) {
            return Err(Error::Config(format!(
                "Fermi energy must be positive, got {eps_f}"
            )));
        }
        let g = G_S * G_V;
        let k_f = eps_f / units.hbar_vf();
        let r_s = units.e2_coulomb / (kappa * units.hbar_vf()) * (4.0 / g).sqrt();
        let c_eps = 0.5 * r_s * k_f * g.powf(1.5);
        Ok(Self {
            kappa,
            eps_f,
            k_f,
            r_s,
            c_eps,
        })
    }
}

/// Static polarisation normalised to its long-wavelength value.
pub fn polarization(q: f64, k_f: f64) -> f64 {
    let two_kf = 2.0 * k_f;
    if q < two_kf {
        1.0
    } else {
        let x = two_kf / q;
        1.0 + PI * q / (8.0 * k_f) - (1.0 - x * x).sqrt() / 2.0 - q / (4.0 * k_f) * x.asin()
    }
}

/// ε(q)·q = q + C_ε Π(q), nm⁻¹.
#[inline]
pub fn screened_denominator(q: f64, s: &ScreeningParams) -> f64 {
    q + s.c_eps * polarization(q, s.k_f)
}

/// Conservation ellipse of a pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseGeom {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub center: Wavevector,
    /// Orientation of k1 + k2; zero when the total momentum vanishes.
    pub axis_angle: f64,
    axis: Wavevector,
}

impl EllipseGeom {
    /// Co-directed collinear pairs collapse the ellipse onto a segment.
    pub fn is_degenerate(&self) -> bool {
        self.a == 0.0 || self.b <= 1e-12 * self.a
    }

    #[inline]
    fn point(&self, cos_b: f64, sin_b: f64) -> Wavevector {
        let (u, v) = (self.axis, Wavevector::new(-self.axis.ky, self.axis.kx));
        let (x, y) = (self.a * cos_b, self.b * sin_b);
        self.center + u * x + v * y
    }

    #[inline]
    fn line_element(&self, cos_b: f64, sin_b: f64) -> f64 {
        (self.a * self.a * sin_b * sin_b + self.b * self.b * cos_b * cos_b).sqrt()
    }
}

pub fn ellipse_from_pair(k1: Wavevector, k2: Wavevector) -> EllipseGeom {
    let (n1, n2) = (k1.norm(), k2.norm());
    let total = k1 + k2;
    let two_c = total.norm();
    let a = 0.5 * (n1 + n2);
    let c = 0.5 * two_c;
    // a² − c² = (|k1||k2| − k1·k2)/2, free of cancellation between a and c.
    let b = (0.5 * (n1 * n2 - k1.dot(k2))).max(0.0).sqrt();
    let axis = if two_c > 0.0 {
        total * (1.0 / two_c)
    } else {
        Wavevector::new(1.0, 0.0)
    };
    EllipseGeom {
        a,
        b,
        c,
        center: total * 0.5,
        axis_angle: axis.ky.atan2(axis.kx),
        axis,
    }
}

/// Post-collision pair at ellipse parameter β.
pub fn final_pair(
    g: &EllipseGeom,
    k1: Wavevector,
    k2: Wavevector,
    beta: f64,
) -> (Wavevector, Wavevector) {
    let (s, c) = beta.sin_cos();
    let k1p = g.point(c, s);
    (k1p, (k1 + k2) - k1p)
}

/// Uniform mesh on [0, 2π] for the trapezoid rule along the ellipse.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaMesh {
    m_beta: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl BetaMesh {
    pub fn new(m_beta: usize) -> Result<Self> {
        if m_beta == 0 {
            return Err(Error::Config(
                "beta mesh needs at least one interval".into(),
            ));
        }
        let d = 2.0 * PI / m_beta as f64;
        let (sin, cos) = (0..m_beta).map(|l| (l as f64 * d).sin_cos()).unzip();
        Ok(Self { m_beta, cos, sin })
    }

    pub fn m_beta(&self) -> usize {
        self.m_beta
    }

    pub fn d_beta(&self) -> f64 {
        2.0 * PI / self.m_beta as f64
    }

    /// Node β_l for l = 0..=m_beta.
    pub fn node(&self, l: usize) -> f64 {
        l as f64 * self.d_beta()
    }
}

#[inline]
fn one_plus_cos(u: Wavevector, nu: f64, v: Wavevector, nv: f64) -> f64 {
    let d = nu * nv;
    if d > 0.0 {
        1.0 + u.dot(v) / d
    } else {
        1.0
    }
}

/// |M̃|² = Ṽ² + Ṽ'² − ṼṼ'.
#[inline]
pub fn matrix_element_sq(v: f64, v_prime: f64) -> f64 {
    v * v + v_prime * v_prime - v * v_prime
}

/// Pair-invariant data reused across the β nodes.
struct PairFrame {
    k1: Wavevector,
    k2: Wavevector,
    n1: f64,
    n2: f64,
    g: EllipseGeom,
}

impl PairFrame {
    #[inline]
    fn new(k1: Wavevector, k2: Wavevector) -> Self {
        Self {
            k1,
            k2,
            n1: k1.norm(),
            n2: k2.norm(),
            g: ellipse_from_pair(k1, k2),
        }
    }

    /// Integrand 𝓜(β): squared screened matrix element times line element.
    #[inline]
    fn integrand(&self, cos_b: f64, sin_b: f64, s: &ScreeningParams) -> f64 {
        let k1p = self.g.point(cos_b, sin_b);
        let k2p = (self.k1 + self.k2) - k1p;
        let (n1p, n2p) = (k1p.norm(), k2p.norm());
        let q = (self.k1 - k1p).norm();
        let qp = (self.k1 - k2p).norm();
        let v = one_plus_cos(self.k1, self.n1, k1p, n1p) * one_plus_cos(self.k2, self.n2, k2p, n2p)
            / screened_denominator(q, s);
        let vp = one_plus_cos(self.k1, self.n1, k2p, n2p)
            * one_plus_cos(self.k2, self.n2, k1p, n1p)
            / screened_denominator(qp, s);
        matrix_element_sq(v, vp) * self.g.line_element(cos_b, sin_b)
    }
}

/// Integrand 𝓜(β; k1, k2) of the ellipse integral.
pub fn coulomb_kernel(k1: Wavevector, k2: Wavevector, beta: f64, s: &ScreeningParams) -> f64 {
    let (sb, cb) = beta.sin_cos();
    PairFrame::new(k1, k2).integrand(cb, sb, s)
}

/// Σ_{l=1}^{m} [𝓜(β_{l−1}) + 𝓜(β_l)] for one pair. The integrand is
/// 2π-periodic so the sum equals twice the sum over the first m nodes.
pub fn trapezoid_sum(k1: Wavevector, k2: Wavevector, mesh: &BetaMesh, s: &ScreeningParams) -> f64 {
    let frame = PairFrame::new(k1, k2);
    let mut acc = 0.0;
    for l in 0..mesh.m_beta {
        acc += frame.integrand(mesh.cos[l], mesh.sin[l], s);
    }
    2.0 * acc
}

/// e⁴(Δk)²Δβ/(128π ħ² v_F) with e² = e²/(4πε₀κ), ps⁻¹·nm⁻¹ per unit
/// kernel sum.
pub fn ee_prefactor(units: &UnitSystem, kappa: f64, dk: f64, mesh: &BetaMesh) -> f64 {
    let e2 = units.e2_coulomb / kappa;
    e2 * e2 * dk * dk * mesh.d_beta() / (128.0 * PI * units.hbar * units.hbar * units.v_f)
}

/// Everything needed to evaluate the e–e proposal rate of one query.
#[derive(Clone, Debug)]
pub struct EeKernel {
    pub screening: ScreeningParams,
    pub mesh: BetaMesh,
    /// Prefactor including the calibration factor.
    pub c_ee: f64,
}

impl EeKernel {
    pub fn new(
        screening: ScreeningParams,
        mesh: BetaMesh,
        units: &UnitSystem,
        dk: f64,
        calibration: f64,
    ) -> Self {
        let c_ee = calibration * ee_prefactor(units, screening.kappa, dk, &mesh);
        Self {
            screening,
            mesh,
            c_ee,
        }
    }

    #[inline]
    pub fn pair_sum(&self, k1: Wavevector, k2: Wavevector) -> f64 {
        trapezoid_sum(k1, k2, &self.mesh, &self.screening)
    }
}

/// A rate together with the number of partner terms it took.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub partner_terms: u64,
}

/// Rate from the sum over all occupied cells, partners at physical cell
/// centres.
pub fn lambda_ee_fullsum(
    k1: Wavevector,
    occ: &OccupancyField,
    grid: &KGrid,
    shift: &ShiftState,
    kernel: &EeKernel,
) -> RateEstimate {
    let mut acc = 0.0;
    let mut terms = 0;
    for (idx, &count) in occ.counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        let (i, j) = grid.unflat(idx);
        let k2 = shift.cell_center_physical(grid, i, j);
        acc += count as f64 * kernel.pair_sum(k1, k2);
        terms += 1;
    }
    RateEstimate {
        rate: kernel.c_ee * acc / occ.m() as f64,
        partner_terms: terms,
    }
}

/// Uniform partner index in 0..n excluding `exclude`.
#[inline]
pub fn draw_partner<R: Rng + ?Sized>(n: usize, exclude: Option<usize>, rng: &mut R) -> usize {
    match exclude {
        Some(p) => {
            let j = rng.random_range(0..n - 1);
            if j >= p {
                j + 1
            } else {
                j
            }
        }
        None => rng.random_range(0..n),
    }
}

/// Rate from N_s partners drawn uniformly (with replacement) from the
/// ensemble, excluding particle `exclude`. Partners enter at their physical
/// wavevectors.
#[allow(clippy::too_many_arguments)]
pub fn lambda_ee_sampled<R: Rng + ?Sized>(
    k1: Wavevector,
    exclude: Option<usize>,
    particles: &ParticleStore,
    shift: &ShiftState,
    m: u32,
    n_s: usize,
    kernel: &EeKernel,
    rng: &mut R,
) -> Result<RateEstimate> {
    let n_p = particles.len();
    let pool = n_p - exclude.is_some() as usize;
    if n_p < 2 || pool == 0 {
        return Err(Error::TooFewParticles(n_p));
    }
    if n_s == 0 {
        return Err(Error::Config(
            "partner sample count must be at least 1".into(),
        ));
    }
    let mut acc = 0.0;
    for _ in 0..n_s {
        let j = draw_partner(n_p, exclude, rng);
        acc += kernel.pair_sum(k1, shift.physical(particles.stored(j)));
    }
    Ok(RateEstimate {
        rate: n_p as f64 / m as f64 * kernel.c_ee * acc / n_s as f64,
        partner_terms: n_s as u64,
    })
}

/// Exact expectation of the sampled estimator: every admissible partner once.
pub fn lambda_ee_exhaustive(
    k1: Wavevector,
    exclude: Option<usize>,
    particles: &ParticleStore,
    shift: &ShiftState,
    m: u32,
    kernel: &EeKernel,
) -> Result<f64> {
    let n_p = particles.len();
    if n_p < 2 {
        return Err(Error::TooFewParticles(n_p));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for j in (0..n_p).filter(|&j| Some(j) != exclude) {
        acc += kernel.pair_sum(k1, shift.physical(particles.stored(j)));
        count += 1;
    }
    Ok(n_p as f64 / m as f64 * kernel.c_ee * acc / count as f64)
}
