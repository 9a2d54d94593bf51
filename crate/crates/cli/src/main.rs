//! `tiebreaker`: optimal tie-breaker designs from the command line.

mod parse;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tiebreaker::design::three_level_max_delta;
use tiebreaker::solve_continuous::{delta_grid, optimal_design_canonical, three_level_delta, write_sweep_csv};
use tiebreaker::solve_discrete::write_subject_probabilities;
use tiebreaker::{
    build_design, optimal_design, optimal_design_discrete, simulate_variance, tradeoff_sweep, xz_max, Constraints,
    CriterionSpec, DesignFunction, DesignKind, DiscreteInstance, Distribution, Error, Gain, OptimalDesignResult,
    SimConfig,
};

#[derive(Parser)]
#[command(name = "tiebreaker", version, about = "Optimal tie-breaker designs for the two-line regression model")]
struct Cli {
    /// Worker threads for sweeps and simulations (default: all cores).
    #[arg(long, global = true, env = "TIEBREAKER_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Largest attainable short-term gain E_p(xz) for a treatment fraction.
    Bounds(Source),
    /// Optimal design for one constraint pair.
    Solve(SolveArgs),
    /// Trade-off curves over an evenly spaced delta grid, as CSV.
    Sweep(SweepArgs),
    /// Optimal design on an observed sample, with optional per-subject probabilities.
    Discrete(DiscreteArgs),
    /// Monte Carlo check of n Var(beta_3 hat) against its predicted value.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Source {
    /// uniform, weibull[:shape[,scale]] or gaussian[:sd].
    #[arg(long, conflicts_with = "data")]
    dist: Option<String>,

    /// Running-variable values, one per line (or a single CSV column).
    #[arg(long)]
    data: Option<PathBuf>,

    /// Target E_p(z), in (-1, 1).
    #[arg(long, allow_negative_numbers = true)]
    z: f64,
}

#[derive(Args)]
#[group(id = "gain", multiple = false)]
struct GainArgs {
    /// Normalized gain xz / xz_max, in [0, 1].
    #[arg(long, group = "gain", allow_negative_numbers = true)]
    delta: Option<f64>,

    /// Raw gain E_p(xz).
    #[arg(long, group = "gain", allow_negative_numbers = true)]
    xz: Option<f64>,
}

impl GainArgs {
    fn gain(&self) -> Option<Gain> {
        self.delta.map(Gain::Delta).or(self.xz.map(Gain::Xz))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    /// Two-level (monotone) or three-strata (unrestricted) design.
    Canonical,
    /// Mixture of the two extremal designs.
    Blend,
}

#[derive(Args)]
struct Common {
    /// eff, d or custom:<expr> over z, xz, x2z, ex2.
    #[arg(long, default_value = "eff")]
    criterion: String,

    /// Restrict to nondecreasing designs.
    #[arg(long)]
    monotone: bool,

    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    gain: GainArgs,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "canonical")]
    form: Form,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Number of delta values from 0 to 1.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value = "eff")]
    criterion: String,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiscreteArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    z: f64,
    #[command(flatten)]
    gain: GainArgs,
    #[command(flatten)]
    common: Common,
    /// Express the monotone optimum with a single jump.
    #[arg(long)]
    canonical: bool,
    /// Write `x,p` for every subject to this CSV file.
    #[arg(long)]
    probabilities: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Named {
    Optimal,
    ThreeLevel,
    Rdd,
    Rct,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    gain: GainArgs,
    #[command(flatten)]
    common: Common,
    /// Design to simulate.
    #[arg(long, value_enum, default_value = "optimal", conflicts_with = "design_file")]
    design: Named,
    /// Simulate a design read from JSON (a `solve` report or a bare design).
    #[arg(long)]
    design_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 2_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
}

/// Failure carrying its exit code and error payload.
struct Failure {
    exit: u8,
    payload: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (exit, code, context) = match &e {
            Error::Infeasible { z_tilde, xz, xz_max, .. } => (
                2,
                "infeasible",
                json!({
                    "z_tilde": z_tilde,
                    "xz": xz,
                    "xz_max": xz_max,
                    "feasible_set": {"z_tilde": [-1.0, 1.0], "xz": [0.0, xz_max]},
                }),
            ),
            Error::ThreeLevelInfeasible { delta, max } => {
                (2, "infeasible", json!({"delta": delta, "delta_max": max}))
            }
            Error::Io(io) => (3, "file", json!({"kind": io.kind().to_string()})),
            Error::Parse { line, .. } => (3, "file", json!({"line": line})),
            Error::Invalid(_) => (1, "invalid", Value::Null),
            Error::Degenerate(_) => (1, "degenerate", Value::Null),
            Error::Singular(_) => (1, "singular", Value::Null),
            Error::Consistency(_) => (1, "consistency", Value::Null),
            Error::Bracket { trace, .. } => (1, "bracket", json!({ "trace": trace })),
        };
        Failure {
            exit,
            payload: json!({"code": code, "message": message, "context": context}),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn file_error(path: &Path, e: io::Error) -> Failure {
    let mut f = Failure::from(e);
    f.payload["context"]["path"] = json!(path.display().to_string());
    f
}

type Outcome = Result<(), Failure>;

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| file_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(value: &Value, path: Option<&Path>) -> Outcome {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load(source: &Source) -> Result<(Distribution, Option<Vec<f64>>), Failure> {
    parse::distribution(source.dist.as_deref(), source.data.as_deref()).map_err(|e| match (e, &source.data) {
        (Error::Io(io), Some(p)) => file_error(p, io),
        (e, _) => e.into(),
    })
}

fn constraints(dist: &Distribution, z: f64, gain: &GainArgs) -> Result<Constraints, Failure> {
    let Some(g) = gain.gain() else {
        return Err(Error::Invalid("one of --delta or --xz is required".into()).into());
    };
    Ok(Constraints::resolve(dist, z, g)?)
}

fn report(dist: &Distribution, r: &OptimalDesignResult) -> Value {
    let mut v = serde_json::to_value(r).expect("results serialize");
    v["distribution"] = json!(dist.to_string());
    v["centering_shift"] = json!(dist.centering_shift());
    v
}

fn bounds(args: &Source) -> Outcome {
    let (dist, _) = load(args)?;
    if !(args.z > -1.0 && args.z < 1.0) {
        return Err(Error::Infeasible {
            message: format!("z_tilde = {} outside (-1, 1)", args.z),
            z_tilde: args.z,
            xz: f64::NAN,
            xz_max: f64::NAN,
        }
        .into());
    }
    emit_json(&json!({"xz_max": xz_max(&dist, args.z)}), None)
}

fn solve(args: &SolveArgs) -> Outcome {
    let (dist, _) = load(&args.source)?;
    let c = constraints(&dist, args.source.z, &args.gain)?;
    let spec = parse::criterion(&args.common.criterion)?;
    let r = match args.form {
        Form::Canonical => optimal_design_canonical(&dist, &c, &spec, args.common.monotone)?,
        Form::Blend => optimal_design(&dist, &c, &spec, args.common.monotone)?,
    };
    emit_json(&report(&dist, &r), args.common.output.as_deref())
}

fn sweep(args: &SweepArgs) -> Outcome {
    if args.grid < 2 {
        return Err(Error::Invalid(format!("--grid {} must be at least 2", args.grid)).into());
    }
    let (dist, _) = load(&args.source)?;
    let spec = parse::criterion(&args.criterion)?;
    let records = tradeoff_sweep(&dist, args.source.z, &delta_grid(args.grid), &spec)?;
    let mut out = open_output(args.output.as_deref())?;
    write_sweep_csv(&records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn discrete(args: &DiscreteArgs) -> Outcome {
    let source = Source {
        dist: None,
        data: Some(args.data.clone()),
        z: args.z,
    };
    let (dist, sample) = load(&source)?;
    let sample = sample.expect("data source keeps the sample");
    let inst = DiscreteInstance::from_distribution(dist.clone())?;
    let c = constraints(&dist, args.z, &args.gain)?;
    let spec = parse::criterion(&args.common.criterion)?;
    let r = optimal_design_discrete(&inst, &c, &spec, args.common.monotone, args.canonical)?;
    if let Some(path) = &args.probabilities {
        let file = File::create(path).map_err(|e| file_error(path, e))?;
        let mut out = BufWriter::new(file);
        write_subject_probabilities(&sample, &dist, &r.design, &mut out).map_err(|e| file_error(path, e))?;
        out.flush().map_err(|e| file_error(path, e))?;
    }
    let mut v = report(&dist, &r);
    v["n_subjects"] = json!(sample.len());
    v["n_support"] = json!(inst.len());
    emit_json(&v, args.common.output.as_deref())
}

fn read_design(path: &Path) -> Result<DesignFunction, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::from(Error::Parse { line: e.line(), message: e.to_string() }))?;
    let inner = value.get("design").cloned().unwrap_or(value);
    serde_json::from_value(inner)
        .map_err(|e| Failure::from(Error::Parse { line: 0, message: format!("not a design: {e}") }))
}

fn verify(args: &VerifyArgs) -> Outcome {
    let (dist, _) = load(&args.source)?;
    let z = args.source.z;
    let (name, design) = if let Some(path) = &args.design_file {
        (path.display().to_string(), read_design(path)?)
    } else {
        match args.design {
            Named::Optimal => {
                let c = constraints(&dist, z, &args.gain)?;
                let spec: CriterionSpec = parse::criterion(&args.common.criterion)?;
                let r = optimal_design(&dist, &c, &spec, args.common.monotone)?;
                ("optimal".into(), r.design)
            }
            Named::ThreeLevel => {
                let c = constraints(&dist, z, &args.gain)?;
                let delta = three_level_delta(&dist, z, c.xz).ok_or(Error::ThreeLevelInfeasible {
                    delta: f64::NAN,
                    max: three_level_max_delta(z),
                })?;
                let p = build_design(DesignKind::ThreeLevel { z_tilde: z, delta }, &dist)?;
                ("three_level".into(), p)
            }
            Named::Rdd => ("rdd".into(), build_design(DesignKind::GeneralizedRdd { z_tilde: z }, &dist)?),
            Named::Rct => (
                "rct".into(),
                build_design(DesignKind::Constant { theta: (1.0 + z) / 2.0 }, &dist)?,
            ),
        }
    };
    let cfg = SimConfig {
        n: args.n,
        reps: args.reps,
        seed: args.seed,
        noise_sd: args.noise_sd,
        ..SimConfig::default()
    };
    let r = simulate_variance(&dist, &design, &cfg)?;
    let mut v = serde_json::to_value(&r).expect("reports serialize");
    v["design_name"] = json!(name);
    v["distribution"] = json!(dist.to_string());
    if let Some(w) = &r.warning {
        eprintln!("warning: {w}");
    }
    emit_json(&v, args.common.output.as_deref())
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::from(Error::Invalid(format!("cannot start {n} threads: {e}"))))?;
    }
    match &cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Discrete(a) => discrete(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let payload = json!({"code": "usage", "message": e.to_string().trim_end(), "context": Value::Null});
            eprintln!("{payload}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.payload);
            ExitCode::from(f.exit)
        }
    }
}
