//! File formats of a run directory.
//!
//! * `timeseries.csv`: `t_ps,mean_energy_eV,vx_nm_per_ps,vy_nm_per_ps,density_per_cm2`
//! * `snapshot_<t>.csv`: occupation fractions on the grid
//! * `metadata.txt`: the resolved configuration followed by `run.*` entries
//! * `counters.txt`: event counters and phase timings

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::config::{parse_kv_lines, SimConfig};
use crate::engine::{EventCounters, Mechanism, PhaseTimings, RunOutput, TimeSeries};
use crate::error::{Error, Result};

pub const TIMESERIES_HEADER: &str = "t_ps,mean_energy_eV,vx_nm_per_ps,vy_nm_per_ps,density_per_cm2";
/// Prefix of the run information entries in `metadata.txt`.
pub const RUN_PREFIX: &str = "run.";

pub fn write_timeseries<W: Write>(series: &TimeSeries, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for i in 0..series.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            series.t[i], series.mean_energy[i], series.vx[i], series.vy[i], series.density[i]
        )?;
    }
    Ok(())
}

fn parse_err(reason: String) -> Error {
    Error::Parse {
        what: "time series CSV".into(),
        reason,
    }
}

pub fn read_timeseries<R: Read>(r: R) -> Result<TimeSeries> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("empty file".into()))??;
    if header.trim() != TIMESERIES_HEADER {
        return Err(parse_err(format!("unexpected header `{}`", header.trim())));
    }
    let mut s = TimeSeries::default();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("line {}: {e}", n + 2)))?;
        if vals.len() != 5 {
            return Err(parse_err(format!(
                "line {}: expected 5 fields, got {}",
                n + 2,
                vals.len()
            )));
        }
        if let Some(&last) = s.t.last() {
            if vals[0] <= last {
                return Err(parse_err(format!("line {}: time is not increasing", n + 2)));
            }
        }
        s.t.push(vals[0]);
        s.mean_energy.push(vals[1]);
        s.vx.push(vals[2]);
        s.vy.push(vals[3]);
        s.density.push(vals[4]);
    }
    if s.is_empty() {
        return Err(parse_err("no samples".into()));
    }
    Ok(s)
}

pub fn read_timeseries_file(path: &Path) -> Result<TimeSeries> {
    read_timeseries(fs::File::open(path)?)
}

/// `run.*` entries describing the outcome of a run.
pub fn run_info(out: &RunOutput) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(format!("{RUN_PREFIX}{k}"), v);
    };
    put("n_particles", out.n_particles.to_string());
    put("normalization_m", out.normalization.to_string());
    put("density_per_cm2", out.density_per_cm2.to_string());
    put("grid_dk_per_nm", out.grid_dk.to_string());
    put("c_ee_per_ps_nm", out.c_ee.to_string());
    put("ee_calibration", out.config.ee_calibration.to_string());
    put("samples", out.series.len().to_string());
    put("execution", "serial".into());
    put("wall_clock_s", out.timings.total.to_string());
    put("time_init_s", out.timings.init.to_string());
    put("time_drift_s", out.timings.drift.to_string());
    put("time_eph_s", out.timings.eph.to_string());
    put("time_ee_rate_s", out.timings.ee_rate.to_string());
    put("time_ee_events_s", out.timings.ee_events.to_string());
    put("time_record_s", out.timings.record.to_string());
    m
}

pub fn metadata_text(out: &RunOutput) -> String {
    let mut s = out.config.to_kv_text();
    for (k, v) in run_info(out) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Splits metadata into the configuration and the `run.*` entries.
pub fn parse_metadata(text: &str) -> Result<(SimConfig, BTreeMap<String, String>)> {
    let pairs = parse_kv_lines(text)?;
    let (run, cfg): (Vec<_>, Vec<_>) = pairs
        .into_iter()
        .partition(|(k, _)| k.starts_with(RUN_PREFIX));
    let cfg_text: String = cfg.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let config = SimConfig::from_kv_text(&cfg_text)?;
    Ok((config, run.into_iter().collect()))
}

pub fn counters_text(c: &EventCounters, t: &PhaseTimings) -> String {
    let mut s = String::new();
    for m in Mechanism::ALL {
        let k = c.get(m);
        let name = m.name();
        let _ = writeln!(s, "{name}.attempted = {}", k.attempted);
        let _ = writeln!(s, "{name}.accepted = {}", k.accepted);
        let _ = writeln!(s, "{name}.pauli_rejected = {}", k.pauli_rejected);
        let _ = writeln!(s, "{name}.degenerate_rejected = {}", k.degenerate_rejected);
    }
    let _ = writeln!(s, "candidates = {}", c.candidates);
    let _ = writeln!(s, "null_events = {}", c.null_events);
    let _ = writeln!(s, "ee_rate_evaluations = {}", c.ee_rate_evaluations);
    let _ = writeln!(s, "ee_partner_terms = {}", c.ee_partner_terms);
    let _ = writeln!(s, "overfull_events = {}", c.overfull_events);
    let _ = writeln!(s, "wall_clock_s = {}", t.total);
    s
}

/// File name of a snapshot at time `t` ps.
pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

/// Writes every output file of a run into `dir`, which must not exist yet.
pub fn write_run_dir(out: &RunOutput, dir: &Path) -> Result<()> {
    if dir.exists() {
        return Err(Error::Config(format!(
            "run directory {} already exists",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut ts = Vec::new();
    write_timeseries(&out.series, &mut ts)?;
    fs::write(dir.join("timeseries.csv"), ts)?;
    for snap in &out.snapshots {
        fs::write(dir.join(snapshot_name(snap.time_ps)), &snap.csv)?;
    }
    fs::write(
        dir.join("counters.txt"),
        counters_text(&out.counters, &out.timings),
    )?;
    fs::write(dir.join("metadata.txt"), metadata_text(out))?;
    Ok(())
}
