//! `looped-icl`: generate tasks, run the looped transformer, verify it against
//! gradient descent, and run the condition-number sweep.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use looped_icl::experiment::{
    mean_series, read_records_csv, run_experiment, write_plot_csv, write_records_csv,
    write_summary_csv, ExperimentConfig, NORM_ERR_FLOOR,
};
use looped_icl::io::{report_to_json, task_from_json, task_to_json};
use looped_icl::task::make_task_seeded;
use looped_icl::verify::{
    attention_oracle_report, check_bound, check_equivalence, AttentionOracleReport, BoundReport,
    EquivalenceReport, EQUIVALENCE_RTOL,
};
use looped_icl::{
    AttentionEngine, Error, LoopConfig, RandomSource, RealMatrix, RealVector, TaskInstance,
};
use serde::Serialize;

/// Worker-count override for the experiment runner.
const WORKERS_ENV: &str = "LOOPED_ICL_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "looped-icl",
    version,
    about = "Linear looped transformers doing gradient descent in context"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random task and write it as JSON.
    Gen(GenArgs),
    /// Run the looped transformer on one task.
    Run(RunArgs),
    /// Check attention, GD equivalence and the error bound over many seeds.
    Verify(VerifyArgs),
    /// Run the sample-size sweep and write per-iteration CSV.
    Experiment(ExperimentArgs),
    /// Reduce experiment CSV to per-n mean curves.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Task file written by `gen`; otherwise a task is generated from --n/--d/--seed.
    #[arg(long, conflicts_with_all = ["n", "d"])]
    task: Option<PathBuf>,
    #[arg(long, requires = "d")]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    d: Option<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'T', long = "loops", default_value_t = 200)]
    loops: usize,
    /// Step size, or "auto" for 1/L.
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(short = 'T', long = "loops", default_value_t = 200)]
    loops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "auto")]
    eta: String,
    /// Verify the built-in n=2, d=1 instance instead of random tasks.
    #[arg(long)]
    hand: bool,
    /// Flip a sign in the closed-form attention; verification must then fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
    /// Write all reports as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Comma-separated sample sizes.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [16, 32, 64, 128])]
    n_values: Vec<usize>,
    #[arg(short = 'T', long = "loops", default_value_t = 200)]
    loops: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    /// CSV written by `experiment`.
    #[arg(long, short = 'i')]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Verification(String),
    Usage(String),
    Io(String),
    Malformed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Malformed(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Usage(m) => write!(f, "invalid arguments: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Malformed(m) => write!(f, "malformed input: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) => CliError::Malformed(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn parse_schedule(eta: &str, loops: usize) -> CliResult<LoopConfig> {
    if eta == "auto" {
        return Ok(LoopConfig::inverse_smoothness(loops));
    }
    match eta.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(LoopConfig::constant(loops, v)),
        _ => Err(CliError::Usage(format!(
            "--eta must be \"auto\" or a positive number, got {eta:?}"
        ))),
    }
}

fn workers() -> CliResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

fn cmd_gen(args: GenArgs) -> CliResult {
    let task = make_task_seeded(args.n, args.d, args.alpha, args.seed)?;
    fs::write(&args.out, task_to_json(&task)).map_err(io_err(&args.out))?;
    println!(
        "wrote task n={} d={} seed={} to {}",
        task.n(),
        task.d(),
        task.seed(),
        args.out.display()
    );
    Ok(())
}

fn load_task(path: &Path) -> CliResult<TaskInstance> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    task_from_json(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> CliResult {
    let task = match (&args.task, args.n, args.d) {
        (Some(path), _, _) => load_task(path)?,
        (None, Some(n), Some(d)) => make_task_seeded(n, d, args.alpha, args.seed)?,
        _ => return Err(CliError::Usage("pass --task or both --n and --d".into())),
    };
    let config = parse_schedule(&args.eta, args.loops)?;
    let trajectory = looped_icl::looped_tf::run_loops(&task, &config)?;

    if let Some(path) = &args.out {
        let mut out = create(path)?;
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            let q_cols: Vec<String> = (1..=task.d()).map(|j| format!("q_{j}")).collect();
            writeln!(out, "t,emp_err,norm_log_err,{}", q_cols.join(","))?;
            let theta_err_sq = |q: &RealVector| {
                q.scale(-1.0 / task.alpha())
                    .sub(task.theta_star())
                    .map(|e| e.iter().map(|v| v * v).sum::<f64>())
            };
            let initial = theta_err_sq(&trajectory.q_states[0]).expect("dims match");
            for (t, q) in trajectory.q_states.iter().enumerate() {
                let ratio = theta_err_sq(q).expect("dims match") / initial;
                let qs: Vec<String> = q.iter().map(|v| format!("{v:?}")).collect();
                writeln!(
                    out,
                    "{t},{:?},{:?},{}",
                    trajectory.per_step_errors[t],
                    ratio.max(NORM_ERR_FLOOR).ln(),
                    qs.join(",")
                )?;
            }
            out.flush()
        };
        write(&mut out).map_err(io_err(path))?;
    }
    let final_error = trajectory.per_step_errors[trajectory.per_step_errors.len() - 1];
    println!("final prediction error: {final_error:.16e}");
    Ok(())
}

fn hand_task() -> TaskInstance {
    let x = RealMatrix::from_rows(&[&[1.0], &[2.0]]).expect("finite");
    TaskInstance::from_parts(x, RealVector::new(vec![1.0]).expect("finite"), 2.0, 0)
        .expect("valid hand task")
}

#[derive(Serialize)]
struct VerifyBatch {
    attention: Vec<AttentionOracleReport>,
    equivalence: Vec<EquivalenceReport>,
    bound: Vec<BoundReport>,
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let mut config = parse_schedule(&args.eta, args.loops)?;
    if args.inject_fault {
        config = config.with_engine(AttentionEngine::FaultInjected);
    }
    let trials = if args.hand { 1 } else { args.trials };
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }

    let mut batch = VerifyBatch {
        attention: Vec::new(),
        equivalence: Vec::new(),
        bound: Vec::new(),
    };
    let mut first_failure = None;
    for trial in 0..trials {
        let seed = args.seed.wrapping_add(trial as u64);
        let task = if args.hand {
            hand_task()
        } else {
            make_task_seeded(args.n, args.d, args.alpha, seed)?
        };
        let attention =
            attention_oracle_report(task.n(), task.d(), 1, &mut RandomSource::new(seed))?;
        let equivalence = check_equivalence(&task, &config, EQUIVALENCE_RTOL)?;
        let bound = check_bound(&task, args.loops)?;
        let passed = attention.passed && equivalence.passed && bound.passed;
        println!(
            "trial={trial} seed={} status={} attention_gap={:e} max_state_gap={:e} output_gap={:e} min_margin={:e}",
            task.seed(),
            if passed { "PASS" } else { "FAIL" },
            attention.max_gap,
            equivalence.max_state_gap,
            equivalence.output_gap,
            bound.min_margin
        );
        if !passed && first_failure.is_none() {
            first_failure = Some(task.seed());
        }
        batch.attention.push(attention);
        batch.equivalence.push(equivalence);
        batch.bound.push(bound);
    }
    if let Some(path) = &args.report {
        fs::write(path, report_to_json("verify-batch", &batch)).map_err(io_err(path))?;
    }
    match first_failure {
        Some(seed) => Err(CliError::Verification(format!("first failing seed {seed}"))),
        None => {
            println!("all {trials} trials passed");
            Ok(())
        }
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult {
    let config = ExperimentConfig {
        d: args.d,
        n_values: args.n_values,
        loops: args.loops,
        trials: args.trials,
        base_seed: args.seed,
        alpha: args.alpha,
    };
    config.validate()?;
    let output = run_experiment(&config, workers()?)?;

    let mut out = create(&args.out)?;
    write_records_csv(&output.records, &mut out).map_err(io_err(&args.out))?;
    let summary = summary_path(&args.out);
    write_summary_csv(&output.sizes, create(&summary)?).map_err(io_err(&summary))?;

    println!(
        "{:>6} {:>8} {:>12} {:>22} {:>22} {:>10}",
        "n", "trials", "mean_kappa", "mean_final_emp_err", "mean_final_bound", "slope"
    );
    for s in &output.sizes {
        println!(
            "{:>6} {:>8} {:>12.4} {:>22.6e} {:>22.6e} {:>10.4}",
            s.n, s.trials, s.mean_kappa, s.mean_final_emp_err, s.mean_final_bound, s.slope
        );
    }
    println!(
        "wrote {} records to {} and summary to {}",
        output.records.len(),
        args.out.display(),
        summary.display()
    );

    match output.bound_violations() {
        0 => Ok(()),
        v => Err(CliError::Verification(format!(
            "{v} records exceed the theoretical bound"
        ))),
    }
}

fn cmd_plot_data(args: PlotDataArgs) -> CliResult {
    let file = File::open(&args.input).map_err(io_err(&args.input))?;
    let records = read_records_csv(file)
        .map_err(|e| CliError::Malformed(format!("{}: {e}", args.input.display())))?;
    let points = mean_series(&records);
    write_plot_csv(&points, create(&args.out)?).map_err(io_err(&args.out))?;
    println!("wrote {} points to {}", points.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::PlotData(a) => cmd_plot_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
