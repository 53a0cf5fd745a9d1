use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use netspc_core::moments::{self, CacheStatus};
use netspc_core::sim::{self, ControllerKind, Metrics};
use netspc_core::ProtocolKind;

use crate::config::{self, Config, GridPoint};
use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const MANIFEST: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";

/// Command-line overrides applied before the config is resolved.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub protocol: Option<ProtocolKind>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub baselines: Vec<ControllerKind>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: Config) -> Config {
        if let Some(v) = self.paths {
            cfg.simulation.paths = v;
        }
        if let Some(v) = self.steps {
            cfg.simulation.steps = v;
        }
        if let Some(v) = self.mu {
            cfg.mu = v;
        }
        if let Some(v) = self.seed {
            cfg.simulation.seed = v;
        }
        if let Some(v) = self.protocol {
            cfg.protocol = v;
            if let Some(g) = cfg.grid.as_mut() {
                g.protocols = vec![v];
            }
        }
        for b in &self.baselines {
            if *b != ControllerKind::Proposed && !cfg.baselines.contains(b) {
                cfg.baselines.push(*b);
            }
        }
        cfg
    }
}

/// Provenance of a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: String,
    pub config_hash: String,
    pub out_dir: String,
    pub simulation_seed: u64,
    pub moment_seed: u64,
    /// `<grid label>/<controller>` → moment cache key.
    pub cache_keys: BTreeMap<String, String>,
}

/// Contents of `<out>/<label>/<controller>/metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointResult {
    pub controller: ControllerKind,
    pub protocol: ProtocolKind,
    pub p: f64,
    pub noise_scale: f64,
    pub cache_key: String,
    pub metrics: Metrics,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_resolved(path: &Path, overrides: &Overrides) -> Result<Config, CliError> {
    overrides.apply(config::load(path)?).resolve()
}

pub fn cmd_moments(config_path: &Path, overrides: &Overrides, cache_dir: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = load_resolved(config_path, overrides)?;
    let points = cfg.grid_points()?;
    let controllers = cfg.controllers();
    writeln!(out, "{:<22} {:<22} {:>8} {:>9} {:>13} {:>6}  key", "point", "controller", "samples", "exact", "min_eig_L", "cache")?;
    for pt in &points {
        for &kind in &controllers {
            let inputs = pt.scenario.moment_inputs(kind).map_err(CliError::from_prepare)?;
            let key = inputs.cache_key();
            let (set, status) = moments::load_or_compute(&inputs, Some(cache_dir)).map_err(CliError::from_prepare)?;
            let status = match status {
                CacheStatus::Hit => "hit",
                CacheStatus::Miss => "miss",
                CacheStatus::Disabled => "off",
            };
            let exact = if set.channel.exact { "exact" } else { "mc" };
            writeln!(
                out,
                "{:<22} {:<22} {:>8} {:>9} {:>13.4e} {:>6}  {}",
                pt.label(),
                kind.as_str(),
                set.channel.samples,
                exact,
                set.min_eig_l,
                status,
                &key[..16]
            )?;
            if set.channel.exact && inputs.p_design == 1.0 {
                writeln!(out, "{:<22} {:<22} deterministic channel: moments in closed form", "", "")?;
            }
        }
    }
    Ok(())
}

struct Job<'a> {
    point: &'a GridPoint,
    kind: ControllerKind,
}

pub fn cmd_run(config_path: &Path, overrides: &Overrides, cache_dir: &Path, out_dir: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = load_resolved(config_path, overrides)?;
    let canonical = config::to_canonical_json(&cfg);
    let points = cfg.grid_points()?;
    let controllers = cfg.controllers();
    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join(RESOLVED_CONFIG), canonical.as_bytes())?;

    let jobs: Vec<Job> = points.iter().flat_map(|point| controllers.iter().map(move |&kind| Job { point, kind })).collect();
    let results: Vec<Result<PointResult, CliError>> = jobs
        .par_iter()
        .map(|job| {
            let sc = &job.point.scenario;
            let prep = sim::prepare(sc, job.kind, Some(cache_dir)).map_err(CliError::from_prepare)?;
            let cache_key = sc.moment_inputs(job.kind).map_err(CliError::from_prepare)?.cache_key();
            let traces = sim::run_closed_loop(sc, &prep).map_err(CliError::Solver)?;
            let result = PointResult {
                controller: job.kind,
                protocol: job.point.protocol,
                p: job.point.p,
                noise_scale: job.point.noise_scale,
                cache_key,
                metrics: sim::metrics(&traces),
            };
            let dir = out_dir.join(job.point.label()).join(job.kind.as_str());
            let mut json = serde_json::to_string_pretty(&result).expect("result serializes");
            json.push('\n');
            write_atomic(&dir.join("metrics.json"), json.as_bytes())?;
            let mut buf = Vec::new();
            sim::write_trace_csv(&mut buf, &traces).map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
            write_atomic(&dir.join("trace.csv"), &buf)?;
            buf.clear();
            sim::write_series_csv(&mut buf, &traces).map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
            write_atomic(&dir.join("series.csv"), &buf)?;
            Ok(result)
        })
        .collect();

    let mut done = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    let manifest = RunManifest {
        config_path: config_path.display().to_string(),
        config_hash: config::content_hash(canonical.as_bytes()),
        out_dir: out_dir.display().to_string(),
        simulation_seed: cfg.simulation.seed,
        moment_seed: cfg.moments.seed,
        cache_keys: jobs.iter().zip(&done).map(|(j, r)| (format!("{}/{}", j.point.label(), j.kind.as_str()), r.cache_key.clone())).collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&out_dir.join(MANIFEST), json.as_bytes())?;
    print_table(&done, out)?;
    Ok(())
}

fn print_table(results: &[PointResult], out: &mut impl Write) -> Result<(), CliError> {
    writeln!(
        out,
        "{:<5} {:>5} {:>6} {:<22} {:>12} {:>10} {:>9} {:>12} {:>10}",
        "proto", "p", "scale", "controller", "msb", "energy", "sparse%", "avg_cost", "vs_prop%"
    )?;
    for r in results {
        let proposed = results
            .iter()
            .find(|o| o.controller == ControllerKind::Proposed && o.protocol == r.protocol && o.p == r.p && o.noise_scale == r.noise_scale)
            .map(|o| o.metrics.avg_cost);
        let diff = proposed.map_or(String::from("-"), |c| format!("{:.2}", pct_diff(r.metrics.avg_cost, c)));
        writeln!(
            out,
            "{:<5} {:>5} {:>6} {:<22} {:>12.4} {:>10.4} {:>9.2} {:>12.4} {:>10}",
            r.protocol.as_str(),
            r.p,
            r.noise_scale,
            r.controller.as_str(),
            r.metrics.msb,
            r.metrics.actuator_energy,
            r.metrics.sparsity_pct,
            r.metrics.avg_cost,
            diff
        )?;
    }
    Ok(())
}

/// Percentage by which `cost` exceeds the proposed controller's cost.
fn pct_diff(cost: f64, proposed: f64) -> f64 {
    100.0 * (cost - proposed) / proposed
}

/// Consolidate a run directory into one CSV per figure.
pub fn cmd_report(dir: &Path, out: &mut impl Write) -> Result<Vec<PathBuf>, CliError> {
    let cfg_path = dir.join(RESOLVED_CONFIG);
    if !cfg_path.is_file() {
        return Err(CliError::Report(format!("{} is not a run directory (no {RESOLVED_CONFIG})", dir.display())));
    }
    let cfg = config::load(&cfg_path)?;
    let points = cfg.grid_points()?;
    let controllers = cfg.controllers();
    let mut missing = Vec::new();
    let mut rows: Vec<PointResult> = Vec::new();
    for pt in &points {
        for kind in &controllers {
            let f = dir.join(pt.label()).join(kind.as_str()).join("metrics.json");
            match fs::read_to_string(&f) {
                Ok(text) => rows.push(serde_json::from_str(&text).map_err(|e| CliError::Report(format!("{}: {e}", f.display())))?),
                Err(_) => missing.push(format!("{}/{}", pt.label(), kind.as_str())),
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Report(format!("missing grid cells: {}", missing.join(", "))));
    }

    let report = dir.join(REPORT_DIR);
    let proposed: Vec<&PointResult> = rows.iter().filter(|r| r.controller == ControllerKind::Proposed).collect();
    let mut written = Vec::new();
    let mut table = |name: &str, col: &str, get: &dyn Fn(&Metrics) -> f64| -> Result<(), CliError> {
        let mut s = format!("protocol,p,noise_scale,{col}\n");
        for r in &proposed {
            s += &format!("{},{},{},{}\n", r.protocol.as_str(), r.p, r.noise_scale, get(&r.metrics));
        }
        let path = report.join(name);
        write_atomic(&path, s.as_bytes())?;
        written.push(path);
        Ok(())
    };
    table("msb.csv", "msb", &|m| m.msb)?;
    table("energy.csv", "actuator_energy", &|m| m.actuator_energy)?;
    table("sparsity.csv", "sparsity_pct", &|m| m.sparsity_pct)?;

    let mut s = String::from("protocol,p,noise_scale,controller,avg_cost,proposed_avg_cost,pct_diff\n");
    for r in rows.iter().filter(|r| r.controller != ControllerKind::Proposed) {
        let base = proposed
            .iter()
            .find(|o| o.protocol == r.protocol && o.p == r.p && o.noise_scale == r.noise_scale)
            .expect("proposed runs at every cell");
        s += &format!(
            "{},{},{},{},{},{},{}\n",
            r.protocol.as_str(),
            r.p,
            r.noise_scale,
            r.controller.as_str(),
            r.metrics.avg_cost,
            base.metrics.avg_cost,
            pct_diff(r.metrics.avg_cost, base.metrics.avg_cost)
        );
    }
    let path = report.join("cost.csv");
    write_atomic(&path, s.as_bytes())?;
    written.push(path);
    for p in &written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(written)
}
