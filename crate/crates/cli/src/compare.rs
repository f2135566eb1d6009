use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use gemc_core::analysis::{self, SteadyWindow};

use crate::analyze::load_run;

pub fn cmd_compare(dirs: &[PathBuf], window: &str) -> Result<()> {
    if dirs.len() < 2 {
        bail!("compare needs at least two run directories");
    }
    let w = SteadyWindow::parse(window)?;
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    for (d, r) in dirs.iter().zip(&runs).skip(1) {
        let diff = runs[0].config.physics_differences(&r.config);
        if !diff.is_empty() {
            bail!(
                "{} and {} differ in physical settings: {}",
                dirs[0].display(),
                d.display(),
                diff.join(", ")
            );
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "window [{}, {}] ps", w.t_lo, w.t_hi);
    let _ = writeln!(
        out,
        "{:<10}{:>5}{:>10}{:>12}{:>26}{:>24}{:>24}",
        "method",
        "N_s",
        "N_p",
        "runtime_s",
        "<eps> +- RMS (eV)",
        "v_d +- RMS (nm/ps)",
        "<v_y> +- RMS (nm/ps)"
    );
    for r in &runs {
        let s = &r.series;
        let e = analysis::window_stats(&s.t, &s.mean_energy, &w)?;
        let vx = analysis::window_stats(&s.t, &s.vx, &w)?;
        let vy = analysis::window_stats(&s.t, &s.vy, &w)?;
        let n_s = match r.config.ee_mode {
            gemc_core::EeMode::Sampled => r.config.partner_samples.to_string(),
            _ => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<10}{:>5}{:>10}{:>12}{:>26}{:>24}{:>24}",
            r.config.ee_mode.as_str(),
            n_s,
            r.info.get("run.n_particles").map_or("?", String::as_str),
            r.info
                .get("run.wall_clock_s")
                .and_then(|v| v.parse::<f64>().ok())
                .map_or("?".into(), |v| format!("{v:.1}")),
            format!("{:.6} +- {:.3e}", e.mean, e.rms),
            format!("{:.3} +- {:.3}", vx.mean, vx.rms),
            format!("{:.3} +- {:.3}", vy.mean, vy.rms),
        );
    }
    print!("{out}");
    Ok(())
}
