use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gemc_core::analysis::{self, PeriodEstimate, SteadyWindow};
use gemc_core::{io, SimConfig, TimeSeries, UnitSystem};

pub struct LoadedRun {
    pub config: SimConfig,
    pub info: std::collections::BTreeMap<String, String>,
    pub series: TimeSeries,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let meta_path = dir.join("metadata.txt");
    let meta = fs::read_to_string(&meta_path)
        .with_context(|| format!("cannot read {}", meta_path.display()))?;
    let (config, info) =
        io::parse_metadata(&meta).with_context(|| format!("malformed {}", meta_path.display()))?;
    let ts_path = dir.join("timeseries.csv");
    let series = io::read_timeseries_file(&ts_path)
        .with_context(|| format!("malformed {}", ts_path.display()))?;
    Ok(LoadedRun {
        config,
        info,
        series,
    })
}

fn grid_dk(run: &LoadedRun) -> f64 {
    run.info
        .get("run.grid_dk_per_nm")
        .and_then(|v| v.parse().ok())
        .unwrap_or(2.0 * run.config.k_max_per_nm / run.config.cells_per_axis as f64)
}

pub fn cmd_analyze(
    dir: &Path,
    window: &str,
    fit_window: &str,
    harmonics: usize,
    out: Option<&Path>,
) -> Result<()> {
    let run = load_run(dir)?;
    let w = SteadyWindow::parse(window)?;
    let fw = SteadyWindow::parse(fit_window)?;
    let s = &run.series;
    let mut report = String::new();

    let _ = writeln!(report, "run: {}", dir.display());
    let _ = writeln!(
        report,
        "window [{}, {}] ps, {} particles, ee_mode {}, N_s {}",
        w.t_lo,
        w.t_hi,
        run.info.get("run.n_particles").map_or("?", String::as_str),
        run.config.ee_mode,
        run.config.partner_samples
    );
    let _ = writeln!(
        report,
        "{:<22}{:>16}{:>14}{:>14}",
        "observable", "mean", "RMS", "SE"
    );
    for (name, col) in [
        ("<eps> (eV)", &s.mean_energy),
        ("v_d (nm/ps)", &s.vx),
        ("<v_y> (nm/ps)", &s.vy),
    ] {
        let st = analysis::window_stats(&s.t, col, &w)?;
        let _ = writeln!(
            report,
            "{name:<22}{:>16.6}{:>14.4e}{:>14.4e}",
            st.mean, st.rms, st.se
        );
    }

    let units = UnitSystem::with_fermi_velocity(run.config.fermi_velocity_nm_per_ps);
    let ex = run.config.field_kv_per_cm[0];
    let mut corrected_cols: Vec<(String, Vec<f64>)> = Vec::new();
    if ex != 0.0 {
        let t_grid = analysis::grid_period(grid_dk(&run), ex, &units)?;
        let _ = writeln!(report, "\nfit window [{}, {}] ps", fw.t_lo, fw.t_hi);
        let _ = writeln!(report, "T_grid = {t_grid:.5} ps");
        match analysis::extract_period(&s.t, &s.vx, &fw)? {
            PeriodEstimate::Period {
                period, p_value, ..
            } => {
                let _ = writeln!(
                    report,
                    "T_obs  = {period:.5} ps (relative deviation {:+.3e}, peak p < {p_value:.1e})",
                    period / t_grid - 1.0
                );
            }
            PeriodEstimate::NoDominantPeriod { p_value } => {
                let _ = writeln!(
                    report,
                    "T_obs  = none (no dominant period, p = {p_value:.3})"
                );
            }
        }
        let omega = 2.0 * std::f64::consts::PI / t_grid;
        let raw = analysis::window_stats(&s.t, &s.vx, &fw)?;
        let _ = writeln!(
            report,
            "raw v_d: mean {:.6} nm/ps, RMS {:.4e}, SE {:.4e}",
            raw.mean, raw.rms, raw.se
        );
        let _ = writeln!(
            report,
            "{:>3}{:>16}{:>14}{:>14}{:>12}",
            "H", "mean_corr", "RMS_corr", "delta", "Z"
        );
        for h in 1..=harmonics {
            let fit = analysis::harmonic_fit(&s.t, &s.vx, &fw, omega, h)?;
            let corr = analysis::subtract_harmonics(&s.t, &s.vx, &fit);
            let st = analysis::window_stats(&s.t, &corr, &fw)?;
            let z = analysis::mean_shift_z(&s.t, &s.vx, &corr, &fw)?;
            let _ = writeln!(
                report,
                "{h:>3}{:>16.6}{:>14.4e}{:>14.4e}{:>12.4e}",
                st.mean, st.rms, z.delta, z.z
            );
            corrected_cols.push((format!("vx_corr_h{h}"), corr));
        }
    } else {
        let _ = writeln!(
            report,
            "\nno field along x: grid period and harmonic subtraction skipped"
        );
    }

    let out_dir: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let mut name = dir
                .file_name()
                .context("run directory has no name")?
                .to_os_string();
            name.push("-analysis");
            dir.with_file_name(name)
        }
    };
    if out_dir == dir {
        bail!("analysis output must not go into the run directory");
    }
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("stats.txt"), &report)?;
    let mut csv = String::from("t_ps,vx_nm_per_ps");
    for (name, _) in &corrected_cols {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for i in 0..s.len() {
        let _ = write!(csv, "{},{}", s.t[i], s.vx[i]);
        for (_, col) in &corrected_cols {
            let _ = write!(csv, ",{}", col[i]);
        }
        csv.push('\n');
    }
    fs::write(out_dir.join("corrected.csv"), csv)?;
    print!("{report}");
    Ok(())
}
