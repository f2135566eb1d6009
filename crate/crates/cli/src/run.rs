use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use gemc_core::engine::{self, CostRow};
use gemc_core::{io, SimConfig};

use crate::ConfigArgs;

/// Largest number of configurations a sweep may expand to.
pub const SWEEP_CAP: usize = 64;

fn split_kv(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .with_context(|| format!("expected KEY=VALUE, got `{s}`"))
}

/// Base configuration with overrides applied, expanded over the sweep axes.
pub fn resolve_configs(args: &ConfigArgs) -> Result<Vec<SimConfig>> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let mut base = SimConfig::from_kv_text(&text)
        .with_context(|| format!("invalid config {}", args.config.display()))?;
    for o in &args.overrides {
        let (k, v) = split_kv(o)?;
        base.set(k, v)
            .with_context(|| format!("bad override `{o}`"))?;
    }
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    let mut configs = vec![base];
    for s in &args.sweeps {
        let (k, vs) = split_kv(s)?;
        let values: Vec<&str> = vs
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            bail!("sweep `{s}` has no values");
        }
        if configs.len() * values.len() > SWEEP_CAP {
            bail!("sweep expands to more than {SWEEP_CAP} runs");
        }
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for c in &configs {
            for v in &values {
                let mut c = c.clone();
                c.set(k, v)
                    .with_context(|| format!("bad sweep value `{k}={v}`"))?;
                next.push(c);
            }
        }
        configs = next;
    }
    for c in &configs {
        c.validate().context("resolved configuration is invalid")?;
    }
    Ok(configs)
}

fn run_dir_name(seed: u64, index: Option<usize>) -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    match index {
        Some(i) => format!("run-{secs}-seed{seed}-{i:02}"),
        None => format!("run-{secs}-seed{seed}"),
    }
}

/// A fresh directory name under `out`, bumping a suffix on collision.
fn unique_dir(out: &Path, name: String) -> PathBuf {
    let mut dir = out.join(&name);
    let mut n = 1;
    while dir.exists() {
        dir = out.join(format!("{name}.{n}"));
        n += 1;
    }
    dir
}

pub fn cmd_run(args: &ConfigArgs, out: &Path) -> Result<()> {
    let configs = resolve_configs(args)?;
    let sweep = configs.len() > 1;
    for (i, cfg) in configs.iter().enumerate() {
        let dir = unique_dir(out, run_dir_name(cfg.seed, sweep.then_some(i)));
        eprintln!(
            "running {} ({} particles, ee_mode {}, {} steps)",
            dir.display(),
            cfg.target_particles,
            cfg.ee_mode,
            cfg.steps()
        );
        let result = engine::run(cfg).context("simulation failed")?;
        io::write_run_dir(&result, &dir)?;
        println!(
            "{}  {} particles  {:.1} s",
            dir.display(),
            result.n_particles,
            result.timings.total
        );
    }
    Ok(())
}

pub fn cmd_bench(args: &ConfigArgs) -> Result<()> {
    let configs = resolve_configs(args)?;
    let mut rows: Vec<CostRow> = Vec::new();
    for cfg in &configs {
        eprintln!(
            "benchmarking {} particles, ee_mode {}, N_s {}",
            cfg.target_particles, cfg.ee_mode, cfg.partner_samples
        );
        rows.extend(engine::runtime_benchmark(std::slice::from_ref(cfg))?);
    }
    print!("{}", engine::format_cost_table(&rows));
    Ok(())
}
