//! `ebt`: run the EBT schemes, convergence studies and measure distances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ebt_core::ebt::{run, write_snapshot, RunManifest, StepConfig, Variant};
use ebt_core::experiments::{convergence_study, halving_list, CouplesSolver, StudyConfig};
use ebt_core::measures::io::read_measure;
use ebt_core::measures::{
    flat_exact_lp_norm, flat_sandwich, rho_distance, tv_distance, w1_exact_1d, w1_exact_lp,
    w1_sinkhorn_norm, AtomicMeasure, GroundNorm, RhoSolver, SinkhornConfig, DEFAULT_LP_CAP,
};
use ebt_core::model::{parse_key_values, problem_by_name, Problem, ProblemOverrides};

/// Output directory used when neither a flag, a config file nor
/// `EBT_OUT_DIR` names one.
const DEFAULT_OUT_DIR: &str = "ebt-out";

#[derive(Parser)]
#[command(name = "ebt", version, about = "Escalator boxcar train simulations and flat-metric error studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme to time T and write the final measures.
    Simulate(RunArgs),
    /// Tabulate errors and orders over halving steps.
    Convergence(ConvergenceArgs),
    /// Distance between two measure files.
    Distance(DistanceArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// example1 or example2.
    #[arg(long)]
    problem: Option<String>,
    /// simplified or original.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    dt: Option<f64>,
    /// Integrator steps per macro step.
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Minimal marriage age.
    #[arg(long)]
    a0: Option<f64>,
    /// Couples metric solver.
    #[arg(long, value_enum)]
    metric: Option<CouplesArg>,
    /// Output directory (default: `EBT_OUT_DIR`, then `ebt-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measure file format for `simulate`.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Largest step of the halving list.
    #[arg(long, default_value_t = 0.1)]
    dt0: f64,
    /// Number of rows.
    #[arg(long, default_value_t = 8)]
    rows: usize,
    /// Cap on concurrently running rows.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Flat)]
    metric: Metric,
    #[arg(long, value_enum, default_value_t = Solver::Exact)]
    solver: Solver,
    #[arg(long, value_enum, default_value_t = NormArg::Euclidean)]
    norm: NormArg,
    /// Print the bracket `C_K·ρ ≤ flat ≤ ρ` for supports of diameter K.
    #[arg(long, value_name = "K")]
    sandwich: Option<f64>,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CouplesArg {
    Grid,
    GridSinkhorn,
    Sinkhorn,
    ExactLp,
}

impl From<CouplesArg> for CouplesSolver {
    fn from(c: CouplesArg) -> Self {
        match c {
            CouplesArg::Grid => CouplesSolver::Grid,
            CouplesArg::GridSinkhorn => CouplesSolver::GridSinkhorn,
            CouplesArg::Sinkhorn => CouplesSolver::Sinkhorn,
            CouplesArg::ExactLp => CouplesSolver::ExactLp,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Flat,
    Rho,
    Tv,
    W1,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Exact,
    Sinkhorn,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    Euclidean,
    Manhattan,
}

impl From<NormArg> for GroundNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Euclidean => GroundNorm::Euclidean,
            NormArg::Manhattan => GroundNorm::Manhattan,
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug)]
struct RunConfig {
    problem: Problem,
    variant: Variant,
    dt: f64,
    substeps: usize,
    couples: CouplesSolver,
    out: PathBuf,
}

impl RunConfig {
    /// Merges flags over the config file over built-in defaults.
    fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                parse_key_values(&text)?
            }
            None => BTreeMap::new(),
        };
        let name = args.problem.clone().or_else(|| file.get("problem").cloned()).unwrap_or_else(|| "example1".into());
        let mut problem = problem_by_name(&name).ok_or_else(|| anyhow!("unknown problem {name:?}; use example1 or example2"))?;
        let flags = ProblemOverrides {
            gamma: args.gamma,
            a0: args.a0,
            t_end: args.t_end,
            ..Default::default()
        };
        ProblemOverrides::from_map(&file)?.merged(flags).apply(&mut problem)?;

        let variant = match (args.variant, file.get("variant")) {
            (Some(v), _) => v,
            (None, Some(s)) => s.parse().map_err(|e: String| anyhow!(e))?,
            (None, None) => Variant::Simplified,
        };
        let dt = pick(args.dt, &file, "dt")?.unwrap_or(0.1);
        let substeps = pick(args.substeps.map(|s| s as f64), &file, "substeps")?.unwrap_or(8.0);
        for (key, v) in [("dt", dt), ("substeps", substeps)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{key} must be positive, got {v}");
            }
        }
        if substeps.fract() != 0.0 {
            bail!("substeps must be an integer, got {substeps}");
        }
        let couples = match (args.metric, file.get("metric")) {
            (Some(m), _) => m.into(),
            (None, Some(s)) => CouplesArg::from_str(s, true).map_err(|e| anyhow!(e))?.into(),
            (None, None) => CouplesSolver::Grid,
        };
        let out = args
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .or_else(|| std::env::var_os("EBT_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(Self {
            problem,
            variant,
            dt,
            substeps: substeps as usize,
            couples,
            out,
        })
    }

    fn step(&self) -> StepConfig {
        StepConfig::new(self.dt).with_substeps(self.substeps)
    }
}

fn pick(flag: Option<f64>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| v.parse::<f64>().with_context(|| format!("key {key:?}: cannot parse {v:?} as a number")))
        .transpose()
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let step = cfg.step();
    let t_end = cfg.problem.t_end;
    let output = run(&cfg.problem, cfg.variant, &step, t_end)?;
    let manifest = RunManifest::new(&cfg.problem, cfg.variant, &step, t_end, output.stats);
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    write_snapshot(&output.state, &manifest, &cfg.out, ext)?;
    let (m, f, c) = ebt_core::ebt::to_measures(&output.state);
    println!("t = {}", output.state.t);
    println!("male     {:.12e}", m.total_mass());
    println!("female   {:.12e}", f.total_mass());
    println!("couples  {:.12e}", c.total_mass());
    println!("written to {}", cfg.out.display());
    Ok(())
}

fn convergence(args: &ConvergenceArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    if args.rows == 0 {
        bail!("rows must be positive");
    }
    let mut study = StudyConfig::for_problem(&cfg.problem);
    study.variant = cfg.variant;
    study.substeps = cfg.substeps;
    study.metric.couples = cfg.couples;
    let dts = halving_list(args.dt0, args.rows);
    let table = match args.jobs {
        Some(0) => bail!("jobs must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| convergence_study(&cfg.problem, &dts, &study))?,
        None => convergence_study(&cfg.problem, &dts, &study)?,
    };
    table.write(&cfg.out)?;
    print!("{}", table.to_text());
    println!("written to {}", cfg.out.display());
    Ok(())
}

fn distance(args: &DistanceArgs) -> Result<()> {
    let load = |p: &Path| read_measure(p).with_context(|| format!("reading {}", p.display()));
    let (a, b) = (load(&args.a)?, load(&args.b)?);
    if a.dim() != b.dim() {
        bail!("dimension mismatch: {} vs {}", a.dim(), b.dim());
    }
    let norm = args.norm.into();
    let rho_solver = match args.solver {
        Solver::Sinkhorn => RhoSolver::Sinkhorn(SinkhornConfig::default()),
        Solver::Exact if a.dim() == 1 => RhoSolver::Exact1d,
        Solver::Exact => RhoSolver::ExactLp,
    };
    if let Some(k) = args.sandwich {
        let (lo, hi) = flat_sandwich(&a, &b, k, rho_solver, norm)?;
        println!("flat in [{lo:.12e}, {hi:.12e}]  (K = {k}, solver {})", solver_name(rho_solver));
    }
    let (value, solver) = match args.metric {
        Metric::Flat => (flat_exact_lp_norm(&a, &b, norm)?, "lp".to_string()),
        Metric::Rho => (rho_distance(&a, &b, rho_solver, norm)?, solver_name(rho_solver)),
        Metric::Tv => (tv_distance(&a, &b)?, "direct".to_string()),
        Metric::W1 => (w1(&a, &b, rho_solver, norm)?, solver_name(rho_solver)),
    };
    let metric = args.metric.to_possible_value().expect("no skipped variants");
    println!("{} {value:.12e}  (solver {solver})", metric.get_name());
    Ok(())
}

/// W₁ between the measures, which must have equal mass.
fn w1(a: &AtomicMeasure, b: &AtomicMeasure, solver: RhoSolver, norm: GroundNorm) -> Result<f64> {
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-9 * ma.max(mb).max(1.0) {
        bail!("w1 needs equal masses, got {ma} and {mb}; use --metric rho");
    }
    if ma == 0.0 {
        return Ok(0.0);
    }
    let (p, q) = (a.without_zero_atoms().normalize()?, b.without_zero_atoms().normalize()?);
    let w = match solver {
        RhoSolver::Exact1d => w1_exact_1d(&p, &q)?,
        RhoSolver::ExactLp => w1_exact_lp(&p, &q, norm, DEFAULT_LP_CAP)?.0,
        RhoSolver::Sinkhorn(cfg) => w1_sinkhorn_norm(&p, &q, norm, &cfg)?,
    };
    Ok(ma * w)
}

fn solver_name(s: RhoSolver) -> String {
    match s {
        RhoSolver::Exact1d => "exact-1d".into(),
        RhoSolver::ExactLp => "exact-lp".into(),
        RhoSolver::Sinkhorn(_) => "sinkhorn".into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Convergence(a) => convergence(a),
        Command::Distance(a) => distance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nproblem = example2\ndt = 0.05\nsubsteps = 4\nout = here\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            dt: Some(0.025),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.problem.name, "example2");
        assert_eq!(cfg.dt, 0.025);
        assert_eq!(cfg.substeps, 4);
        assert_eq!(cfg.out, PathBuf::from("here"));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |args: RunArgs| RunConfig::resolve(&args).is_err();
        assert!(bad(RunArgs { dt: Some(-1.0), ..Default::default() }));
        assert!(bad(RunArgs { problem: Some("example9".into()), ..Default::default() }));
        assert!(bad(RunArgs { gamma: Some(0.0), ..Default::default() }));
    }
}
