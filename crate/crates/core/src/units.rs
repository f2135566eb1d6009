//! Internal unit system: energy in eV, length in nm, time in ps.

/// Reduced Planck constant, eV·ps.
pub const HBAR: f64 = 6.582119514e-4;
/// Boltzmann constant, eV/K.
pub const K_B: f64 = 8.617333e-5;
/// e²/(4πε₀), eV·nm.
pub const E2_COULOMB: f64 = 1.4399645;
/// Default Fermi velocity, 10⁶ m/s in nm/ps.
pub const FERMI_VELOCITY: f64 = 1000.0;
/// Spin degeneracy.
pub const G_S: f64 = 2.0;
/// Valley degeneracy.
pub const G_V: f64 = 2.0;

/// Force on an electron per kV/cm of field, eV/nm.
pub const EV_PER_NM_PER_KV_PER_CM: f64 = 1.0e-4;
/// nm⁻² to cm⁻².
pub const PER_NM2_TO_PER_CM2: f64 = 1.0e14;
/// eV to J.
pub const EV_TO_J: f64 = 1.602176634e-19;
/// Mass of 1 eV·ps²/nm² in kg (1 J = 1 kg·m²/s²).
pub const KG_PER_EV_PS2_PER_NM2: f64 = EV_TO_J * 1.0e-24 / 1.0e-18;

/// Fixed constants plus the (configurable) Fermi velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSystem {
    pub hbar: f64,
    pub e2_coulomb: f64,
    pub k_b: f64,
    pub v_f: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::with_fermi_velocity(FERMI_VELOCITY)
    }
}

impl UnitSystem {
    pub fn with_fermi_velocity(v_f: f64) -> Self {
        assert!(v_f > 0.0, "Fermi velocity must be positive");
        Self {
            hbar: HBAR,
            e2_coulomb: E2_COULOMB,
            k_b: K_B,
            v_f,
        }
    }

    /// ħ v_F in eV·nm.
    #[inline]
    pub fn hbar_vf(&self) -> f64 {
        self.hbar * self.v_f
    }

    /// Rate of change of k (nm⁻¹/ps) produced by a field in kV/cm.
    #[inline]
    pub fn kdot_per_kv_per_cm(&self) -> f64 {
        EV_PER_NM_PER_KV_PER_CM / self.hbar
    }
}

/// Areal mass density g/cm² → eV·ps²/nm⁴.
pub fn areal_density_from_g_per_cm2(rho: f64) -> f64 {
    // g/cm² → kg/m²: ×10; kg/m² → kg/nm²: ×1e-18.
    rho * 10.0 * 1.0e-18 / KG_PER_EV_PS2_PER_NM2
}

/// Speed m/s → nm/ps.
pub fn speed_from_m_per_s(v: f64) -> f64 {
    v * 1.0e-3
}

/// Deformation potential eV/cm → eV/nm.
pub fn deformation_from_ev_per_cm(d: f64) -> f64 {
    d * 1.0e-7
}
