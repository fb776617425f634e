use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sbl_core::algorithms::{run, Algorithm, AlgorithmConfig, RunSummary, TerminationStatus};
use sbl_core::denoise1d::{
    closed_form_gamma, empirical_rate, theoretical_rate, trajectory, DenoiseScalarProblem,
    ScalarScheme,
};
use sbl_core::harness::{emit_panels, run_matrix, write_outputs, ExperimentSpec};
use sbl_core::io::{read_matrix, read_vector};
use sbl_core::{HyperparamVector, ProblemInstance, SblError};

const DEFAULT_OUTPUT_DIR: &str = "sbl-output";

#[derive(Parser)]
#[command(name = "sbl", version, about = "Sparse Bayesian learning hyperparameter estimation")]
struct Cli {
    /// Seed for generated data (overrides the experiment spec when given).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Output format for tables and summaries written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate γ for one problem read from files.
    Solve(SolveArgs),
    /// Print a scalar denoising trajectory.
    Denoise1d(Denoise1dArgs),
    /// Theoretical vs empirical convergence order and rate of the scalar schemes.
    Rates(RatesArgs),
    /// Run an experiment grid and write traces plus manifest.json.
    Experiment(ExperimentArgs),
    /// Reshape an experiment directory into per-panel CSV files.
    EmitPlotData(EmitArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Dictionary F (binary, or CSV by extension).
    #[arg(long)]
    dict: PathBuf,
    /// Observation y.
    #[arg(long)]
    obs: PathBuf,
    /// Noise precision β.
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value = "amq")]
    alg: String,
    #[arg(long, default_value_t = AlgorithmConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = AlgorithmConfig::default().epsilon)]
    eps: f64,
    #[arg(long, default_value_t = AlgorithmConfig::default().eta0)]
    eta0: f64,
    /// Relative γ-change stopping tolerance.
    #[arg(long, default_value_t = AlgorithmConfig::default().rel_tol)]
    tol: f64,
    #[arg(long, default_value_t = AlgorithmConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = AlgorithmConfig::default().prune_tol)]
    prune_tol: f64,
    /// Initial γ (defaults to all ones).
    #[arg(long)]
    gamma0: Option<PathBuf>,
    /// Directory for trace.csv and summary.json.
    #[arg(long, env = "SBL_OUTPUT_DIR", default_value = DEFAULT_OUTPUT_DIR)]
    out: PathBuf,
    /// Include wall-clock times in the trace.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct Denoise1dArgs {
    #[arg(long, default_value = "em")]
    alg: String,
    /// y²
    #[arg(long)]
    y_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
}

#[derive(Args)]
struct RatesArgs {
    /// Ratios r = y²/b.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,2,4,20")]
    r_list: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in spec: denoising, fourier, tau_sweep, eeg_analog, sar_analog.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, env = "SBL_OUTPUT_DIR", default_value = DEFAULT_OUTPUT_DIR)]
    out: PathBuf,
    /// Override the number of repetitions.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Override the iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct EmitArgs {
    /// Experiment output directory (containing manifest.json).
    dir: PathBuf,
    /// Emit only this panel.
    #[arg(long)]
    panel: Option<String>,
    /// Destination (defaults to DIR/panels).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<SblError> for Failure {
    fn from(e: SblError) -> Self {
        let code = match e {
            SblError::Numerical(_) | SblError::WindowTooShort { .. } => 2,
            SblError::Input(_) | SblError::Io(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
    format: Format,
}

impl Ctx {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn solve(ctx: &Ctx, args: &SolveArgs) -> Result<(), Failure> {
    let f = read_matrix(&args.dict)?;
    let y = read_vector(&args.obs)?;
    if y.len() != f.nrows() {
        return Err(input_error(format!(
            "{}: observation has length {} but {} has {} rows",
            args.obs.display(),
            y.len(),
            args.dict.display(),
            f.nrows()
        )));
    }
    let problem = ProblemInstance::new(f, y, args.beta)?;
    let gamma0 = match &args.gamma0 {
        Some(path) => {
            let g = read_vector(path)?;
            if g.len() != problem.cols() {
                return Err(input_error(format!(
                    "{}: gamma0 has length {} but the dictionary has {} columns",
                    path.display(),
                    g.len(),
                    problem.cols()
                )));
            }
            HyperparamVector::new(g.as_slice().to_vec())
                .map_err(|e| input_error(format!("{}: {e}", path.display())))?
        }
        None => HyperparamVector::ones(problem.cols()),
    };
    let config = AlgorithmConfig {
        algorithm: args.alg.parse::<Algorithm>()?,
        tau: args.tau,
        epsilon: args.eps,
        eta0: args.eta0,
        max_iters: args.max_iters,
        rel_tol: args.tol,
        prune_tol: args.prune_tol,
    };
    ctx.progress(&format!(
        "solving {}x{} problem with {}",
        problem.rows(),
        problem.cols(),
        config.algorithm
    ));
    let out = run(&problem, &gamma0, &config)?;
    let summary = out.summary(&config);

    fs::create_dir_all(&args.out).map_err(|e| input_error(format!("{}: {e}", args.out.display())))?;
    write_file(&args.out.join("trace.csv"), &out.trace.to_csv(args.timing))?;
    write_file(&args.out.join("summary.json"), &(summary.to_json() + "\n"))?;

    print_summary(ctx.format, &summary);
    if summary.status.terminated_normally() {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!(
                "run ended with status {} after {} iterations (trace kept in {})",
                summary.status,
                summary.iterations,
                args.out.display()
            ),
        })
    }
}

fn print_summary(format: Format, s: &RunSummary) {
    match format {
        Format::Json => println!("{}", s.to_json()),
        Format::Csv => {
            println!("status,iterations,objective,active_count");
            let obj = s.final_objective.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            println!("{},{},{},{}", s.status, s.iterations, obj, s.active_count);
        }
    }
}

fn denoise1d(args: &Denoise1dArgs) -> Result<(), Failure> {
    let alg: ScalarScheme = args.alg.parse()?;
    let problem = DenoiseScalarProblem::new(args.y_sq, args.b)?;
    if !(args.gamma0 > 0.0) {
        return Err(input_error("gamma0 must be positive"));
    }
    let target = closed_form_gamma(&problem);
    let mut out = String::from("iter,gamma,error\n");
    for (k, g) in trajectory(alg, &problem, args.gamma0, args.iters).iter().enumerate() {
        let _ = writeln!(out, "{k},{g},{}", (g - target).abs());
    }
    print!("{out}");
    Ok(())
}

fn rates(ctx: &Ctx, args: &RatesArgs) -> Result<(), Failure> {
    if args.r_list.iter().any(|r| !(*r > 0.0)) {
        return Err(input_error("all r values must be positive"));
    }
    if !(args.gamma0 > 0.0) {
        return Err(input_error("gamma0 must be positive"));
    }
    let mut rows = Vec::new();
    for &r in &args.r_list {
        let problem = DenoiseScalarProblem::from_ratio(r, args.b)?;
        for alg in ScalarScheme::ALL {
            let theory = theoretical_rate(alg, &problem);
            let est = match empirical_rate(alg, &problem, args.gamma0, args.iters) {
                Ok(e) => Some(e),
                Err(e) => {
                    ctx.progress(&format!("{alg} r={r}: {e}"));
                    None
                }
            };
            rows.push((alg, r, theory, est));
        }
    }
    match ctx.format {
        Format::Csv => {
            let mut out = String::from("alg,r,p_theory,zeta_theory,p_est,zeta_est,regime\n");
            for (alg, r, t, e) in &rows {
                let (p, z) = e.map_or(("NA".into(), "NA".into()), |e| {
                    (e.order.to_string(), e.rate.to_string())
                });
                let _ = writeln!(out, "{alg},{r},{},{},{p},{z},{}", t.order, t.rate, t.regime);
            }
            print!("{out}");
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(alg, r, t, e)| {
                    serde_json::json!({
                        "alg": alg.as_str(),
                        "r": r,
                        "p_theory": t.order,
                        "zeta_theory": t.rate,
                        "p_est": e.map(|e| e.order),
                        "zeta_est": e.map(|e| e.rate),
                        "regime": t.regime.as_str(),
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).unwrap());
        }
    }
    Ok(())
}

fn experiment(ctx: &Ctx, args: &ExperimentArgs) -> Result<(), Failure> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentSpec::from_file(path)?,
        (None, Some(name)) => ExperimentSpec::preset(name)?,
        (None, None) => return Err(input_error("either --config or --preset is required")),
    };
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    if let Some(r) = args.repetitions {
        spec.repetitions = r;
    }
    if let Some(k) = args.max_iters {
        spec.config.max_iters = k;
    }
    spec.validate()?;
    ctx.progress(&format!(
        "running '{}' ({}x{} {}) on {} thread(s)",
        spec.name,
        spec.m,
        spec.n,
        spec.dictionary.as_str(),
        args.jobs
    ));
    let result = run_matrix(&spec, args.jobs)?;
    let manifest = write_outputs(&result, &args.out)?;
    let mut abnormal = 0;
    for cell in &manifest.cells {
        if cell.status != TerminationStatus::Converged && cell.status != TerminationStatus::MaxIters {
            abnormal += 1;
            ctx.progress(&format!("warning: {} ended with {}", cell.file, cell.status));
        }
    }
    ctx.progress(&format!(
        "wrote {} cells to {} ({} abnormal)",
        manifest.cells.len(),
        args.out.display(),
        abnormal
    ));
    Ok(())
}

fn emit(ctx: &Ctx, args: &EmitArgs) -> Result<(), Failure> {
    let out = args.out.clone().unwrap_or_else(|| args.dir.join("panels"));
    let reports = emit_panels(&args.dir, &out, args.panel.as_deref())?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
        ctx.progress(&format!("{} ({} series)", r.path.display(), r.series.len()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        format: cli.format,
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(&ctx, a),
        Command::Denoise1d(a) => denoise1d(a),
        Command::Rates(a) => rates(&ctx, a),
        Command::Experiment(a) => experiment(&ctx, a),
        Command::EmitPlotData(a) => emit(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
