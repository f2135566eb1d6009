//! Run configuration as flat `key = value` text with units in the key names.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::physics::PhononParams;

/// How the e–e proposal rate is obtained, if at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EeMode {
    Off,
    FullSum,
    Sampled,
}

impl EeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EeMode::Off => "off",
            EeMode::FullSum => "fullsum",
            EeMode::Sampled => "sampled",
        }
    }
}

impl fmt::Display for EeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(EeMode::Off),
            "fullsum" | "full-sum" | "full_sum" => Ok(EeMode::FullSum),
            "sampled" | "sampled-partner" | "sampled_partner" => Ok(EeMode::Sampled),
            other => Err(format!("expected off, fullsum or sampled, got `{other}`")),
        }
    }
}

/// Complete description of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub temperature_k: f64,
    pub fermi_energy_ev: f64,
    /// Applied field (x, y), kV/cm.
    pub field_kv_per_cm: [f64; 2],
    pub k_max_per_nm: f64,
    pub cells_per_axis: usize,
    pub dt_fs: f64,
    pub t_max_ps: f64,
    pub target_particles: usize,
    pub ee_mode: EeMode,
    pub partner_samples: usize,
    pub beta_intervals: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Recording stride in macro steps.
    pub record_every: usize,
    pub snapshot_times_ps: Vec<f64>,
    pub kappa: f64,
    /// Dimensionless multiplier on the e–e prefactor.
    pub ee_calibration: f64,
    pub fermi_velocity_nm_per_ps: f64,
    pub eph_enabled: bool,
    pub pauli_enabled: bool,
    /// Whole cells of accumulated drift before the occupancy array is
    /// index-shifted.
    pub rebase_threshold_cells: u64,
    pub phonon_deformation_ac_ev: f64,
    pub phonon_mass_density_g_per_cm2: f64,
    pub phonon_sound_velocity_m_per_s: f64,
    pub phonon_optical_energy_mev: f64,
    pub phonon_optical_deformation_ev_per_cm: f64,
    pub phonon_intervalley_energy_mev: f64,
    pub phonon_intervalley_deformation_ev_per_cm: f64,
}

impl Default for SimConfig {
    /// The baseline setup: 300 K, 3 kV/cm along x, ε_F = 0.15 eV, 120² cells
    /// on ±3.8 nm⁻¹, 2.5 fs steps to 5 ps, sampled partners with N_s = 1.
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            fermi_energy_ev: 0.15,
            field_kv_per_cm: [3.0, 0.0],
            k_max_per_nm: 3.8,
            cells_per_axis: 120,
            dt_fs: 2.5,
            t_max_ps: 5.0,
            target_particles: 100_000,
            ee_mode: EeMode::Sampled,
            partner_samples: 1,
            beta_intervals: 10,
            alpha: 1.1,
            seed: 1,
            record_every: 1,
            snapshot_times_ps: Vec::new(),
            kappa: 1.0,
            ee_calibration: 1.0,
            fermi_velocity_nm_per_ps: 1000.0,
            eph_enabled: true,
            pauli_enabled: true,
            rebase_threshold_cells: 1,
            phonon_deformation_ac_ev: 6.8,
            phonon_mass_density_g_per_cm2: 7.6e-8,
            phonon_sound_velocity_m_per_s: 2.13e4,
            phonon_optical_energy_mev: 164.6,
            phonon_optical_deformation_ev_per_cm: 1.0e9,
            phonon_intervalley_energy_mev: 124.0,
            phonon_intervalley_deformation_ev_per_cm: 3.5e8,
        }
    }
}

/// Keys a configuration file must set explicitly.
pub const REQUIRED_KEYS: &[&str] = &[
    "temperature_k",
    "fermi_energy_ev",
    "field_kv_per_cm_x",
    "field_kv_per_cm_y",
    "k_max_per_nm",
    "cells_per_axis",
    "dt_fs",
    "t_max_ps",
    "target_particles",
    "ee_mode",
];

/// Keys that describe the method or the statistics rather than the physical
/// problem; runs differing only in these are comparable.
pub const METHOD_KEYS: &[&str] = &[
    "target_particles",
    "ee_mode",
    "partner_samples",
    "beta_intervals",
    "alpha",
    "seed",
    "record_every",
    "snapshot_times_ps",
    "rebase_threshold_cells",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| Error::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected true or false".into(),
        }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl SimConfig {
    /// All keys in canonical order.
    pub fn keys() -> &'static [&'static str] {
        &[
            "temperature_k",
            "fermi_energy_ev",
            "field_kv_per_cm_x",
            "field_kv_per_cm_y",
            "k_max_per_nm",
            "cells_per_axis",
            "dt_fs",
            "t_max_ps",
            "target_particles",
            "ee_mode",
            "partner_samples",
            "beta_intervals",
            "alpha",
            "seed",
            "record_every",
            "snapshot_times_ps",
            "kappa",
            "ee_calibration",
            "fermi_velocity_nm_per_ps",
            "eph_enabled",
            "pauli_enabled",
            "rebase_threshold_cells",
            "phonon_deformation_ac_ev",
            "phonon_mass_density_g_per_cm2",
            "phonon_sound_velocity_m_per_s",
            "phonon_optical_energy_mev",
            "phonon_optical_deformation_ev_per_cm",
            "phonon_intervalley_energy_mev",
            "phonon_intervalley_deformation_ev_per_cm",
        ]
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "temperature_k" => self.temperature_k = parse_num(key, v)?,
            "fermi_energy_ev" => self.fermi_energy_ev = parse_num(key, v)?,
            "field_kv_per_cm_x" => self.field_kv_per_cm[0] = parse_num(key, v)?,
            "field_kv_per_cm_y" => self.field_kv_per_cm[1] = parse_num(key, v)?,
            "k_max_per_nm" => self.k_max_per_nm = parse_num(key, v)?,
            "cells_per_axis" => self.cells_per_axis = parse_num(key, v)?,
            "dt_fs" => self.dt_fs = parse_num(key, v)?,
            "t_max_ps" => self.t_max_ps = parse_num(key, v)?,
            "target_particles" => self.target_particles = parse_count(key, v)?,
            "ee_mode" => {
                self.ee_mode = v.parse().map_err(|reason| Error::BadValue {
                    key: key.into(),
                    value: v.into(),
                    reason,
                })?
            }
            "partner_samples" => self.partner_samples = parse_num(key, v)?,
            "beta_intervals" => self.beta_intervals = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "record_every" => self.record_every = parse_num(key, v)?,
            "snapshot_times_ps" => self.snapshot_times_ps = parse_list(key, v)?,
            "kappa" => self.kappa = parse_num(key, v)?,
            "ee_calibration" => self.ee_calibration = parse_num(key, v)?,
            "fermi_velocity_nm_per_ps" => self.fermi_velocity_nm_per_ps = parse_num(key, v)?,
            "eph_enabled" => self.eph_enabled = parse_bool(key, v)?,
            "pauli_enabled" => self.pauli_enabled = parse_bool(key, v)?,
            "rebase_threshold_cells" => self.rebase_threshold_cells = parse_num(key, v)?,
            "phonon_deformation_ac_ev" => self.phonon_deformation_ac_ev = parse_num(key, v)?,
            "phonon_mass_density_g_per_cm2" => {
                self.phonon_mass_density_g_per_cm2 = parse_num(key, v)?
            }
            "phonon_sound_velocity_m_per_s" => {
                self.phonon_sound_velocity_m_per_s = parse_num(key, v)?
            }
            "phonon_optical_energy_mev" => self.phonon_optical_energy_mev = parse_num(key, v)?,
            "phonon_optical_deformation_ev_per_cm" => {
                self.phonon_optical_deformation_ev_per_cm = parse_num(key, v)?
            }
            "phonon_intervalley_energy_mev" => {
                self.phonon_intervalley_energy_mev = parse_num(key, v)?
            }
            "phonon_intervalley_deformation_ev_per_cm" => {
                self.phonon_intervalley_deformation_ev_per_cm = parse_num(key, v)?
            }
            other => return Err(Error::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Text value of one key, formatted so that it parses back exactly.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "temperature_k" => self.temperature_k.to_string(),
            "fermi_energy_ev" => self.fermi_energy_ev.to_string(),
            "field_kv_per_cm_x" => self.field_kv_per_cm[0].to_string(),
            "field_kv_per_cm_y" => self.field_kv_per_cm[1].to_string(),
            "k_max_per_nm" => self.k_max_per_nm.to_string(),
            "cells_per_axis" => self.cells_per_axis.to_string(),
            "dt_fs" => self.dt_fs.to_string(),
            "t_max_ps" => self.t_max_ps.to_string(),
            "target_particles" => self.target_particles.to_string(),
            "ee_mode" => self.ee_mode.to_string(),
            "partner_samples" => self.partner_samples.to_string(),
            "beta_intervals" => self.beta_intervals.to_string(),
            "alpha" => self.alpha.to_string(),
            "seed" => self.seed.to_string(),
            "record_every" => self.record_every.to_string(),
            "snapshot_times_ps" => self
                .snapshot_times_ps
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "kappa" => self.kappa.to_string(),
            "ee_calibration" => self.ee_calibration.to_string(),
            "fermi_velocity_nm_per_ps" => self.fermi_velocity_nm_per_ps.to_string(),
            "eph_enabled" => self.eph_enabled.to_string(),
            "pauli_enabled" => self.pauli_enabled.to_string(),
            "rebase_threshold_cells" => self.rebase_threshold_cells.to_string(),
            "phonon_deformation_ac_ev" => self.phonon_deformation_ac_ev.to_string(),
            "phonon_mass_density_g_per_cm2" => self.phonon_mass_density_g_per_cm2.to_string(),
            "phonon_sound_velocity_m_per_s" => self.phonon_sound_velocity_m_per_s.to_string(),
            "phonon_optical_energy_mev" => self.phonon_optical_energy_mev.to_string(),
            "phonon_optical_deformation_ev_per_cm" => {
                self.phonon_optical_deformation_ev_per_cm.to_string()
            }
            "phonon_intervalley_energy_mev" => self.phonon_intervalley_energy_mev.to_string(),
            "phonon_intervalley_deformation_ev_per_cm" => {
                self.phonon_intervalley_deformation_ev_per_cm.to_string()
            }
            _ => return None,
        })
    }

    /// Parses a configuration file. Every key in [`REQUIRED_KEYS`] must be
    /// present; other keys default to the baseline.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let pairs = parse_kv_lines(text)?;
        let mut cfg = Self::default();
        for key in REQUIRED_KEYS {
            if !pairs.iter().any(|(k, _)| k == key) {
                return Err(Error::MissingKey((*key).into()));
            }
        }
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` text containing every key.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for key in Self::keys() {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("canonical key"));
            out.push('\n');
        }
        out
    }

    /// Keys whose values differ, ignoring [`METHOD_KEYS`].
    pub fn physics_differences(&self, other: &Self) -> Vec<String> {
        Self::keys()
            .iter()
            .filter(|k| !METHOD_KEYS.contains(k))
            .filter(|k| self.get(k) != other.get(k))
            .map(|k| k.to_string())
            .collect()
    }

    pub fn dt_ps(&self) -> f64 {
        self.dt_fs * 1e-3
    }

    /// Number of macro steps covering [0, t_max].
    pub fn steps(&self) -> usize {
        (self.t_max_ps / self.dt_ps()).round() as usize
    }

    pub fn phonon_params(&self) -> PhononParams {
        PhononParams::from_lab_units(
            self.phonon_deformation_ac_ev,
            self.phonon_mass_density_g_per_cm2,
            self.phonon_sound_velocity_m_per_s,
            self.phonon_optical_energy_mev,
            self.phonon_optical_deformation_ev_per_cm,
            self.phonon_intervalley_energy_mev,
            self.phonon_intervalley_deformation_ev_per_cm,
            self.temperature_k,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let positive = [
            ("temperature_k", self.temperature_k),
            ("fermi_energy_ev", self.fermi_energy_ev),
            ("k_max_per_nm", self.k_max_per_nm),
            ("dt_fs", self.dt_fs),
            ("kappa", self.kappa),
            ("fermi_velocity_nm_per_ps", self.fermi_velocity_nm_per_ps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !self.field_kv_per_cm.iter().all(|f| f.is_finite()) {
            return bad("field components must be finite");
        }
        if !(self.ee_calibration.is_finite() && self.ee_calibration >= 0.0) {
            return bad("ee_calibration must be non-negative");
        }
        if self.cells_per_axis < 2 || !self.cells_per_axis.is_multiple_of(2) {
            return bad(&format!(
                "cells_per_axis must be even and at least 2, got {}",
                self.cells_per_axis
            ));
        }
        if !(self.t_max_ps.is_finite() && self.t_max_ps >= self.dt_ps()) {
            return bad("t_max_ps must be at least one time step");
        }
        let steps = self.t_max_ps / self.dt_ps();
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return bad("t_max_ps must be an integer number of time steps");
        }
        if self.target_particles == 0 {
            return bad("target_particles must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return bad(&format!("alpha must exceed 1, got {}", self.alpha));
        }
        if self.partner_samples == 0 {
            return bad("partner_samples must be at least 1");
        }
        if self.beta_intervals == 0 {
            return bad("beta_intervals must be at least 1");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if self.rebase_threshold_cells == 0 {
            return bad("rebase_threshold_cells must be at least 1");
        }
        for &t in &self.snapshot_times_ps {
            if !(t.is_finite() && (0.0..=self.t_max_ps).contains(&t)) {
                return bad(&format!("snapshot time {t} ps lies outside [0, t_max]"));
            }
        }
        self.phonon_params().validate()
    }
}

/// Target counts accept scientific notation such as `1e5`.
fn parse_count(key: &str, value: &str) -> Result<usize> {
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = parse_num(key, value)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(Error::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected a non-negative integer".into(),
        })
    }
}

/// Splits `key = value` lines; `#` starts a comment. Duplicate keys are an
/// error.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            what: "configuration".into(),
            reason: format!("line {} has no `=`: {raw}", n + 1),
        })?;
        let k = k.trim().to_string();
        if out.iter().any(|(e, _)| *e == k) {
            return Err(Error::Parse {
                what: "configuration".into(),
                reason: format!("key `{k}` set twice"),
            });
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn minimal() -> String {
        REQUIRED_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", SimConfig::default().get(k).unwrap()))
            .collect()
    }

    #[test]
    fn baseline_defaults() {
        let c = SimConfig::default();
        assert_eq!(c.steps(), 2000);
        assert_eq!(c.alpha, 1.1);
        assert_eq!(c.beta_intervals, 10);
        c.validate().unwrap();
    }

    #[test]
    fn minimal_file_parses_to_baseline() {
        assert_eq!(
            SimConfig::from_kv_text(&minimal()).unwrap(),
            SimConfig::default()
        );
    }

    #[test]
    fn missing_key_is_named() {
        let text: String = minimal()
            .lines()
            .filter(|l| !l.starts_with("dt_fs"))
            .map(|l| format!("{l}\n"))
            .collect();
        match SimConfig::from_kv_text(&text) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "dt_fs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let mut c = SimConfig::default();
        assert!(matches!(c.set("field_x", "3"), Err(Error::UnknownKey(_))));
        assert!(matches!(
            c.set("dt_fs", "fast"),
            Err(Error::BadValue { .. })
        ));
        assert!(matches!(
            c.set("ee_mode", "maybe"),
            Err(Error::BadValue { .. })
        ));
        assert!(SimConfig::from_kv_text("temperature_k 300").is_err());
        c.set("target_particles", "1e5").unwrap();
        assert_eq!(c.target_particles, 100_000);
    }

    #[test]
    fn validation_rejects_bad_values() {
        for (k, v) in [
            ("alpha", "1.0"),
            ("cells_per_axis", "121"),
            ("dt_fs", "0"),
            ("t_max_ps", "0.001"),
            ("t_max_ps", "5.0001"),
            ("snapshot_times_ps", "6"),
            ("target_particles", "0"),
        ] {
            let mut c = SimConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k} = {v}");
        }
    }

    #[test]
    fn comments_and_duplicates() {
        let text = format!("# baseline\n{}alpha = 1.2 # tighter\n", minimal());
        assert_eq!(SimConfig::from_kv_text(&text).unwrap().alpha, 1.2);
        let dup = format!("{}alpha = 1.2\nalpha = 1.3\n", minimal());
        assert!(SimConfig::from_kv_text(&dup).is_err());
    }

    #[test]
    fn physics_differences_ignore_method_keys() {
        let a = SimConfig::default();
        let mut b = a.clone();
        b.ee_mode = EeMode::FullSum;
        b.partner_samples = 10;
        b.target_particles = 10_000;
        b.seed = 7;
        assert!(a.physics_differences(&b).is_empty());
        b.field_kv_per_cm[0] = 6.0;
        assert_eq!(
            a.physics_differences(&b),
            vec!["field_kv_per_cm_x".to_string()]
        );
    }

    proptest! {
        #[test]
        fn text_round_trip(
            t in 1.0f64..1000.0,
            ef in 0.01f64..1.0,
            ex in -20.0f64..20.0,
            seed in any::<u64>(),
            cal in 0.0f64..10.0,
            snaps in proptest::collection::vec(0.0f64..5.0, 0..4),
            mode in 0usize..3,
        ) {
            let mut c = SimConfig::default();
            c.temperature_k = t;
            c.fermi_energy_ev = ef;
            c.field_kv_per_cm[0] = ex;
            c.seed = seed;
            c.ee_calibration = cal;
            c.snapshot_times_ps = snaps;
            c.ee_mode = [EeMode::Off, EeMode::FullSum, EeMode::Sampled][mode];
            let back = SimConfig::from_kv_text(&c.to_kv_text()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
