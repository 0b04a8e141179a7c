//! Batch experiments: sweeps over one generator parameter, every heuristic
//! cell run on the same instances, success counts and relative performance.
//!
//! Output is deterministic for a given configuration. Records are merged in
//! (sweep point, run, heuristic, strategy) order regardless of scheduling and
//! wall-clock time never reaches the CSV files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{build_comm_sets, check};
use crate::generator::{generate, GenParams};
use crate::heuristics::{run_heuristic_with, Heuristic, HeuristicOptions, Strategy};
use crate::objectives::{evaluate, CostVector, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Experiment {
    /// Processor count.
    E1,
    /// Application count.
    E2,
    /// Application size.
    E3,
    /// Communication-to-computation ratio.
    E4,
    /// Differing operators between two applications.
    E5,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [Experiment::E1, Experiment::E2, Experiment::E3, Experiment::E4, Experiment::E5];

    pub fn code(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::E3 => "e3",
            Experiment::E4 => "e4",
            Experiment::E5 => "e5",
        }
    }

    fn axis(self) -> &'static str {
        match self {
            Experiment::E1 => "processors",
            Experiment::E2 => "applications",
            Experiment::E3 => "operators per application",
            Experiment::E4 => "CCR",
            Experiment::E5 => "differing operators",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown experiment '{s}' (expected e1..e5)"))
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("records do not cover the same runs for every heuristic cell")]
    MismatchedRuns,
    #[error("no records to report")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub which: Experiment,
    pub runs: usize,
    pub base: GenParams,
    pub seed: u64,
    pub heuristics: Vec<Heuristic>,
    pub strategies: Vec<Strategy>,
    pub reuse_enabled: bool,
    /// Overrides the default sweep grid.
    pub points: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(which: Experiment) -> Self {
        let base = match which {
            Experiment::E5 => GenParams { n_apps: 2, n_procs: 10, ..GenParams::default() },
            _ => GenParams::default(),
        };
        ExperimentConfig {
            which,
            runs: 50,
            base,
            seed: 0,
            heuristics: Heuristic::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            reuse_enabled: true,
            points: None,
        }
    }

    pub fn sweep_points(&self) -> Vec<f64> {
        if let Some(p) = &self.points {
            return p.clone();
        }
        match self.which {
            Experiment::E1 => std::iter::once(1.0).chain((5..=70).step_by(5).map(f64::from)).collect(),
            Experiment::E2 => (1..=15).map(f64::from).collect(),
            Experiment::E3 => (10..=80).step_by(10).map(f64::from).collect(),
            Experiment::E4 => [10.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0].to_vec(),
            Experiment::E5 => (0..=self.base.max_ops_per_app).step_by(2).map(|d| d as f64).collect(),
        }
    }

    pub fn params_at(&self, point: f64) -> GenParams {
        let mut p = self.base.clone();
        let n = point.round().max(0.0) as usize;
        match self.which {
            Experiment::E1 => p.n_procs = n,
            Experiment::E2 => p.n_apps = n,
            Experiment::E3 => p.max_ops_per_app = n,
            Experiment::E4 => p.ccr = Some(point),
            Experiment::E5 => {
                p.n_apps = 2;
                p.similarity = Some(n);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        if self.sweep_points().is_empty() {
            return bad("sweep grid is empty");
        }
        if self.heuristics.is_empty() || self.strategies.is_empty() {
            return bad("at least one heuristic and one strategy are required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sweep: f64,
    pub run: usize,
    pub heuristic: Heuristic,
    pub strategy: Strategy,
    pub success: bool,
    pub cost: Option<CostVector>,
    pub failure: Option<String>,
    /// Informational only.
    pub wall_ms: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the instance shared by every heuristic cell of one run.
pub fn instance_seed(seed: u64, point: f64, run: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ point.to_bits()) ^ run as u64)
}

fn run_point(cfg: &ExperimentConfig, point: f64, run: usize) -> Vec<RunRecord> {
    let seed = instance_seed(cfg.seed, point, run);
    let cells = cfg.heuristics.iter().flat_map(|&h| cfg.strategies.iter().map(move |&s| (h, s)));
    let record = |h, s, cost: Option<CostVector>, failure: Option<String>, wall_ms| RunRecord {
        sweep: point,
        run,
        heuristic: h,
        strategy: s,
        success: cost.is_some(),
        cost,
        failure,
        wall_ms,
    };
    let inst = match generate(&cfg.params_at(point), seed) {
        Ok(i) => i,
        Err(e) => return cells.map(|(h, s)| record(h, s, None, Some(format!("generation: {e}")), 0.0)).collect(),
    };
    let opts = HeuristicOptions { reuse: cfg.reuse_enabled };
    cells
        .map(|(h, s)| {
            let t = Instant::now();
            let out = run_heuristic_with(&inst, h, s, seed, opts);
            let wall_ms = t.elapsed().as_secs_f64() * 1e3;
            match out {
                Ok(m) => match check(&inst, &m) {
                    Ok(rep) if rep.feasible => {
                        let sets = build_comm_sets(&inst, &m).expect("checked mapping resolves");
                        record(h, s, Some(evaluate(&inst, &m, &sets)), None, wall_ms)
                    }
                    _ => record(h, s, None, Some("returned mapping failed verification".into()), wall_ms),
                },
                Err(f) => record(h, s, None, Some(f.reason), wall_ms),
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(f64, usize)> =
        cfg.sweep_points().into_iter().flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let nested: Vec<Vec<RunRecord>> = jobs.par_iter().map(|&(p, r)| run_point(cfg, p, r)).collect();
    Ok(nested.into_iter().flatten().collect())
}

/// Mean over runs of `cost_best(r) / cost_h(r)`, counting 0 for a failed run;
/// the best is taken over every record given for that run. Proc-Power is
/// the cost. A run where both costs are 0 contributes 1.
pub fn relative_performance(
    records: &[RunRecord],
    heuristic: Heuristic,
    strategy: Strategy,
) -> Result<f64, HarnessError> {
    relative_performance_by(records, heuristic, strategy, Objective::ProcPower)
}

pub fn relative_performance_by(
    records: &[RunRecord],
    heuristic: Heuristic,
    strategy: Strategy,
    objective: Objective,
) -> Result<f64, HarnessError> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut runs_of: BTreeMap<(Heuristic, Strategy), BTreeSet<usize>> = BTreeMap::new();
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for r in records {
        runs_of.entry((r.heuristic, r.strategy)).or_default().insert(r.run);
        if let Some(c) = &r.cost {
            let v = c.get(objective);
            let b = best.entry(r.run).or_insert(v);
            *b = b.min(v);
        }
    }
    let mine = runs_of.get(&(heuristic, strategy)).ok_or(HarnessError::MismatchedRuns)?;
    if runs_of.values().any(|s| s != mine) {
        return Err(HarnessError::MismatchedRuns);
    }
    let mut total = 0.0;
    for r in records.iter().filter(|r| r.heuristic == heuristic && r.strategy == strategy) {
        if let Some(c) = &r.cost {
            let (b, v) = (best[&r.run], c.get(objective));
            total += if v == 0.0 { 1.0 } else { b / v };
        }
    }
    Ok(total / mine.len() as f64)
}

fn fmt_point(p: f64) -> String {
    if p.fract() == 0.0 && p.abs() < 1e15 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

/// CSV text: one row per (sweep point, heuristic, strategy), relative
/// performance computed among the heuristics sharing a strategy.
pub fn success_csv(records: &[RunRecord]) -> Result<String, HarnessError> {
    use std::collections::BTreeMap;
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut points: Vec<f64> = Vec::new();
    for r in records {
        if !points.contains(&r.sweep) {
            points.push(r.sweep);
        }
    }
    let mut out = String::from("sweep,heuristic,strategy,runs,successes,relative_performance\n");
    for p in points {
        let at: Vec<&RunRecord> = records.iter().filter(|r| r.sweep == p).collect();
        let mut cells: BTreeMap<(Strategy, Heuristic), (usize, usize)> = BTreeMap::new();
        for r in &at {
            let e = cells.entry((r.strategy, r.heuristic)).or_default();
            e.0 += 1;
            e.1 += usize::from(r.success);
        }
        let mut rows: Vec<(Heuristic, Strategy, usize, usize)> =
            cells.iter().map(|(&(s, h), &(n, k))| (h, s, n, k)).collect();
        rows.sort();
        for (h, s, n, k) in rows {
            let group: Vec<RunRecord> = at.iter().filter(|r| r.strategy == s).map(|r| (*r).clone()).collect();
            let rel = relative_performance(&group, h, s)?;
            writeln!(out, "{},{},{},{},{},{:.6}", fmt_point(p), h.code(), s.code(), n, k, rel).expect("string write");
        }
    }
    Ok(out)
}

fn plot_script(which: Experiment, column: usize, ylabel: &str, out_name: &str) -> String {
    let csv = format!("{}_success.csv", which.code());
    let mut s = String::new();
    writeln!(s, "# Reads {csv}; regenerated on every experiment run.").unwrap();
    writeln!(s, "set datafile separator ','").unwrap();
    writeln!(s, "set terminal pngcairo size 1200,900").unwrap();
    writeln!(s, "set output '{out_name}'").unwrap();
    writeln!(s, "set key outside right").unwrap();
    writeln!(s, "set xlabel '{}'", which.axis()).unwrap();
    writeln!(s, "set ylabel '{ylabel}'").unwrap();
    writeln!(s, "set multiplot layout 2,2").unwrap();
    for st in Strategy::ALL {
        writeln!(s, "set title 'strategy {}'", st.code()).unwrap();
        let parts: Vec<String> = Heuristic::ALL
            .iter()
            .map(|h| {
                format!(
                    "'{csv}' skip 1 using 1:((strcol(2) eq '{}' && strcol(3) eq '{}') ? ${column} : 1/0) with linespoints title '{}'",
                    h.code(),
                    st.code(),
                    h.name()
                )
            })
            .collect();
        writeln!(s, "plot {}", parts.join(", \\\n     ")).unwrap();
    }
    writeln!(s, "unset multiplot").unwrap();
    s
}

/// Writes `<exp>_success.csv`, `<exp>_success.gp` and `<exp>_relperf.gp`
/// into `dir`; returns the written paths.
pub fn emit_report(which: Experiment, records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let code = which.code();
    let files = [
        (format!("{code}_success.csv"), success_csv(records)?),
        (format!("{code}_success.gp"), plot_script(which, 5, "successful runs", &format!("{code}_success.png"))),
        (format!("{code}_relperf.gp"), plot_script(which, 6, "relative performance", &format!("{code}_relperf.png"))),
    ];
    let mut out = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
        out.push(path);
    }
    Ok(out)
}
