use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opmap::feasibility::check;
use opmap::generator::{generate, GenParams};
use opmap::harness::{emit_report, run_experiment, Experiment, ExperimentConfig};
use opmap::heuristics::{run_heuristic_with, Heuristic, HeuristicOptions, Strategy};
use opmap::ilp_export::{build_model, emit_lp, IlpObjective};
use opmap::model::{validate_instance, Instance, Mapping};
use opmap::objectives::Objective;
use opmap::oracle::{exact_solve, OracleError, OracleLimits};

#[derive(Parser)]
#[command(name = "opmap", version, about = "Map operator trees onto heterogeneous processors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random instance.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        apps: usize,
        #[arg(long = "max-ops", default_value_t = 50)]
        max_ops: usize,
        #[arg(long, default_value_t = 30)]
        procs: usize,
        #[arg(long, default_value_t = 10)]
        objects: usize,
        /// Identical processors and links.
        #[arg(long)]
        hom: bool,
        #[arg(long)]
        ccr: Option<f64>,
        /// Two applications differing in this many operators.
        #[arg(long)]
        similarity: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a mapping. Exit status 0 feasible, 1 infeasible, 2 invalid input.
    Check {
        instance: PathBuf,
        mapping: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one heuristic with one processor-selection strategy.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        heuristic: Heuristic,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "no-reuse")]
        no_reuse: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the integer linear program in LP format.
    ExportLp {
        instance: PathBuf,
        #[arg(long, default_value = "proc-power")]
        objective: IlpObjective,
        /// Permit the processor-count objective, which is an extension.
        #[arg(long = "allow-proc-nb")]
        allow_proc_nb: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustive search for an optimal mapping of a tiny instance.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value = "proc-power")]
        objective: Objective,
        #[arg(long = "max-states", default_value_t = 10_000_000)]
        max_states: u64,
        #[arg(long = "no-reuse")]
        no_reuse: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a parameter sweep and write CSV and plot scripts.
    Experiment {
        #[arg(long)]
        which: Experiment,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "no-reuse")]
        no_reuse: bool,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        #[arg(long, value_delimiter = ',')]
        heuristics: Option<Vec<Heuristic>>,
        /// Sweep values replacing the default grid.
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<f64>>,
        #[arg(long)]
        apps: Option<usize>,
        #[arg(long = "max-ops")]
        max_ops: Option<usize>,
        #[arg(long)]
        procs: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Fails with exit status 2.
struct Invalid(String);

impl<E: std::fmt::Display> From<E> for Invalid {
    fn from(e: E) -> Self {
        Invalid(e.to_string())
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Invalid> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Invalid(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_instance(path: &Path) -> Result<Instance, Invalid> {
    let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
    let inst = Instance::from_json(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
    let v = validate_instance(&inst);
    if !v.is_ok() {
        let msgs: Vec<String> = v.violations.iter().map(|x| format!("{}: {}", x.entity, x.message)).collect();
        return Err(Invalid(format!("{}: invalid instance: {}", path.display(), msgs.join("; "))));
    }
    Ok(inst)
}

fn run(cmd: Cmd) -> Result<ExitCode, Invalid> {
    match cmd {
        Cmd::Generate { seed, apps, max_ops, procs, objects, hom, ccr, similarity, output } => {
            let params = GenParams {
                n_apps: apps,
                max_ops_per_app: max_ops,
                n_procs: procs,
                n_object_types: objects,
                homogeneous: hom,
                ccr,
                similarity,
                ..GenParams::default()
            };
            let inst = generate(&params, seed)?;
            emit(output.as_deref(), &format!("{}\n", inst.to_json()))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { instance, mapping, report } => {
            let inst = load_instance(&instance)?;
            let text = std::fs::read_to_string(&mapping).map_err(|e| Invalid(format!("{}: {e}", mapping.display())))?;
            let m = Mapping::from_json(&text)?;
            let rep = check(&inst, &m)?;
            emit(report.as_deref(), &json(&rep))?;
            if rep.feasible {
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &rep.violations {
                    eprintln!("violated {:?} at {}: {} > {}", v.constraint, v.entity, v.load, v.capacity);
                }
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Solve { instance, heuristic, strategy, seed, no_reuse, output } => {
            let inst = load_instance(&instance)?;
            match run_heuristic_with(&inst, heuristic, strategy, seed, HeuristicOptions { reuse: !no_reuse }) {
                Ok(m) => {
                    emit(output.as_deref(), &json(&m.to_file()))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(f) => {
                    print!("{}", json(&f));
                    eprintln!("{f}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Cmd::ExportLp { instance, objective, allow_proc_nb, output } => {
            if objective == IlpObjective::ProcNb && !allow_proc_nb {
                return Err(Invalid("the proc-nb objective is an extension; pass --allow-proc-nb".into()));
            }
            let inst = load_instance(&instance)?;
            emit(output.as_deref(), &emit_lp(&build_model(&inst, objective)))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { instance, objective, max_states, no_reuse, output } => {
            let inst = load_instance(&instance)?;
            let limits = OracleLimits { objective, max_states, reuse: !no_reuse, ..OracleLimits::default() };
            match exact_solve(&inst, &limits) {
                Ok(sol) => {
                    eprintln!("optimum {} = {} ({} mappings explored)", objective.name(), sol.cost.get(objective), sol.explored);
                    emit(output.as_deref(), &json(&sol.mapping.to_file()))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(e @ OracleError::Infeasible { .. }) => {
                    eprintln!("{e}");
                    Ok(ExitCode::from(1))
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Experiment {
            which,
            runs,
            seed,
            no_reuse,
            strategies,
            heuristics,
            points,
            apps,
            max_ops,
            procs,
            output,
        } => {
            let mut cfg = ExperimentConfig::new(which);
            cfg.runs = runs;
            cfg.seed = seed;
            cfg.reuse_enabled = !no_reuse;
            cfg.points = points;
            if let Some(s) = strategies {
                cfg.strategies = s;
            }
            if let Some(h) = heuristics {
                cfg.heuristics = h;
            }
            if let Some(a) = apps {
                cfg.base.n_apps = a;
            }
            if let Some(n) = max_ops {
                cfg.base.max_ops_per_app = n;
            }
            if let Some(p) = procs {
                cfg.base.n_procs = p;
            }
            let records = run_experiment(&cfg)?;
            for path in emit_report(which, &records, &output)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
