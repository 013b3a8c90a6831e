//! `sparselq` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 solve or
//! synthesis failure (a JSON error body is printed on stderr).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sparselq::driver::{SynthesisParams, SynthesisStatus};
use sparselq::harness::{self, table_grid};
use sparselq::io::{self, GeneratorSpec};
use sparselq::model::{self, CyclicSpec, DecayingSpec};
use sparselq::{densela, Matrix, PlantModel};

#[derive(Parser)]
#[command(name = "sparselq", version, about = "Sparse state-feedback synthesis for LTI plants")]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded plant (B = Q = R = I) as plant JSON.
    Gen(GenArgs),
    /// Dense LQR baseline of a plant.
    Lqr(PlantArg),
    /// Run the sparse synthesis loop and emit the result JSON.
    Synth(SynthArgs),
    /// Sweep the l1 weight and emit one CSV row per value.
    Sweep(SweepArgs),
    /// Closed-loop stability, cost and cardinality of a given gain.
    Eval(EvalArgs),
    /// Log-magnitude gray-scale image of a matrix (PGM + CSV).
    Spectrum(SpectrumArgs),
    /// Single-entry secant-condition gain bounds of a cyclic plant.
    Secant(PlantArg),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Decaying,
    Cyclic,
}

#[derive(Args)]
struct GenArgs {
    #[arg(required_unless_present = "spec", conflicts_with = "spec")]
    family: Option<Family>,
    /// Generator spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 5.0)]
    alpha_a: f64,
    #[arg(long, default_value_t = 0.5077)]
    beta_a: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlantArg {
    /// Plant JSON file.
    #[arg(long)]
    plant: PathBuf,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 1e-5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    beta: f64,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps1: f64,
    #[arg(long, default_value_t = 5e-5)]
    eps2: f64,
    /// Cardinality threshold.
    #[arg(long, default_value_t = densela::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = sparselq::backend::DEFAULT_ACCURACY)]
    solver_accuracy: f64,
}

impl ParamArgs {
    fn params(&self, alpha1: f64) -> SynthesisParams {
        SynthesisParams {
            alpha1,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            eps1: self.eps1,
            eps2: self.eps2,
            tau: self.tau,
            max_iters: self.max_iters,
            solver_accuracy: self.solver_accuracy,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    plant: PathBuf,
    #[arg(long, default_value_t = 0.005, allow_negative_numbers = true)]
    alpha1: f64,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    plant: PathBuf,
    /// Comma-separated l1 weights; defaults to the 0.001..10 table grid.
    #[arg(long, value_delimiter = ',')]
    alpha1: Vec<f64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    plant: PathBuf,
    /// Gain as a headerless row-major CSV.
    #[arg(long)]
    gain: PathBuf,
    #[arg(long, default_value_t = densela::DEFAULT_TAU)]
    tau: f64,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Matrix as a headerless row-major CSV.
    #[arg(long, conflicts_with = "plant", required_unless_present = "plant")]
    matrix: Option<PathBuf>,
    /// Use the A matrix of this plant.
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Lowest log10 magnitude shown (gray level 0).
    #[arg(long, default_value_t = harness::DEFAULT_FLOOR, allow_negative_numbers = true)]
    floor: f64,
}

enum Failure {
    Input(String),
    Solve { kind: &'static str, message: String },
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Outcome {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Input(e.to_string()))
        }
    }
}

fn emit_json(out: &Option<PathBuf>, value: &impl Serialize) -> Outcome {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    emit(out, s.as_bytes())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_plant(path: &Path) -> Result<PlantModel, Failure> {
    io::plant_from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_matrix(path: &Path) -> Result<Matrix, Failure> {
    let f = fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    io::read_matrix_csv(f).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn gen(args: &GenArgs, out: &Option<PathBuf>) -> Outcome {
    let spec = match (&args.spec, args.family) {
        (Some(path), _) => io::generator_from_json(&read(path)?).map_err(Failure::input)?,
        (None, Some(Family::Decaying)) => GeneratorSpec::Decaying(DecayingSpec {
            n: args.n,
            alpha_a: args.alpha_a,
            beta_a: args.beta_a,
            seed: args.seed,
        }),
        (None, Some(Family::Cyclic)) => GeneratorSpec::Cyclic(CyclicSpec {
            n: args.n,
            seed: args.seed,
        }),
        (None, None) => unreachable!("clap enforces a family or --spec"),
    };
    let a = match spec {
        GeneratorSpec::Decaying(s) => model::gen_decaying(&s),
        GeneratorSpec::Cyclic(s) => model::gen_cyclic(&s),
    }
    .map_err(Failure::input)?;
    let plant = PlantModel::with_identity_weights(a).map_err(Failure::input)?;
    let mut s = io::plant_to_json(&plant);
    s.push('\n');
    emit(out, s.as_bytes())
}

fn lqr(args: &PlantArg, out: &Option<PathBuf>) -> Outcome {
    let plant = load_plant(&args.plant)?;
    let sol = densela::lqr_gain(&plant).map_err(|e| Failure::Solve {
        kind: "care",
        message: e.to_string(),
    })?;
    emit_json(
        out,
        &json!({
            "schema": "sparselq.lqr/1",
            "K0": io::to_rows(&sol.k),
            "X0": io::to_rows(&sol.x),
            "J_lqr": sol.cost,
            "care_residual": sol.care_residual,
        }),
    )
}

fn synth(args: &SynthArgs, out: &Option<PathBuf>) -> Outcome {
    let plant = load_plant(&args.plant)?;
    let params = args.params.params(args.alpha1);
    params.validate().map_err(Failure::input)?;
    let result = sparselq::synthesize(&plant, &params).map_err(|e| Failure::Solve {
        kind: "synthesis",
        message: e.to_string(),
    })?;
    let mut s = result.to_json(&params);
    s.push('\n');
    emit(out, s.as_bytes())?;
    if result.status == SynthesisStatus::StalledInfeasible {
        return Err(Failure::Solve {
            kind: "stalled",
            message: format!(
                "solver failed {} times in a row; last feasible iterate written",
                sparselq::driver::MAX_CONSECUTIVE_FAILURES
            ),
        });
    }
    Ok(())
}

fn sweep(args: &SweepArgs, out: &Option<PathBuf>) -> Outcome {
    let plant = load_plant(&args.plant)?;
    let grid = if args.alpha1.is_empty() {
        table_grid()
    } else {
        args.alpha1.clone()
    };
    let base = args.params.params(grid[0]);
    base.validate().map_err(Failure::input)?;
    let rows = harness::sweep(&plant, &base, &grid, args.workers).map_err(Failure::input)?;
    let mut buf = Vec::new();
    harness::write_sweep_csv(&rows, &mut buf).map_err(Failure::input)?;
    emit(out, &buf)
}

fn eval(args: &EvalArgs, out: &Option<PathBuf>) -> Outcome {
    let plant = load_plant(&args.plant)?;
    let k = load_matrix(&args.gain)?;
    if k.shape() != (plant.m(), plant.n()) {
        return Err(Failure::Input(format!(
            "gain is {}x{}, plant needs {}x{}",
            k.nrows(),
            k.ncols(),
            plant.m(),
            plant.n()
        )));
    }
    if args.tau.is_nan() || args.tau < 0.0 {
        return Err(Failure::Input("--tau must be >= 0".into()));
    }
    let ev = sparselq::evaluate_gain(&plant, &k, args.tau);
    emit_json(out, &json!({ "schema": "sparselq.eval/1", "evaluation": ev }))
}

fn spectrum(args: &SpectrumArgs, out: &Option<PathBuf>) -> Outcome {
    let Some(prefix) = out else {
        return Err(Failure::Input("spectrum needs --out PREFIX (writes PREFIX.pgm and PREFIX.csv)".into()));
    };
    let m = match (&args.matrix, &args.plant) {
        (Some(path), _) => load_matrix(path)?,
        (None, Some(path)) => load_plant(path)?.a().clone(),
        (None, None) => unreachable!("clap enforces --matrix or --plant"),
    };
    let spec = harness::emit_spectrum(&m, args.floor).map_err(Failure::input)?;
    let pgm = prefix.with_extension("pgm");
    let csv = prefix.with_extension("csv");
    emit(&Some(pgm), &spec.to_pgm())?;
    let mut buf = Vec::new();
    spec.write_log_csv(&mut buf).map_err(Failure::input)?;
    emit(&Some(csv), &buf)
}

fn secant(args: &PlantArg, out: &Option<PathBuf>) -> Outcome {
    let plant = load_plant(&args.plant)?;
    let bounds = model::secant_bounds(plant.a()).map_err(Failure::input)?;
    emit_json(
        out,
        &json!({
            "schema": "sparselq.secant/1",
            "ratio": model::secant_ratio(plant.a()),
            "open_loop_satisfies": model::satisfies_secant(plant.a()),
            "bounds": bounds,
        }),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = &cli.out;
    let result = match &cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Lqr(a) => lqr(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Spectrum(a) => spectrum(a, out),
        Command::Secant(a) => secant(a, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solve { kind, message }) => {
            eprintln!(
                "{}",
                json!({ "schema": "sparselq.error/1", "kind": kind, "message": message })
            );
            ExitCode::from(3)
        }
    }
}
