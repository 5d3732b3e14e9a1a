//! Command-line front end: instance generation, solving, message dumps,
//! local-compatibility reports and the equivalence suite.
//!
//! Exit codes: 0 on success (a verified solution, a holding check), 1 when
//! the solver gives up or hits a contradiction or a check is violated, and
//! 2 on bad input.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tokenprop::equivalence::{
    check_bp_vs_wptp_ksat, check_ptp_vs_sp_3col, check_sdbp_vs_ptp_3col, check_sdbp_vs_wptp_general,
    check_sp_star_vs_sp, check_wptp_vs_spstar_ksat, run_suite, CheckConfig, GeneralOutcome, NegativeControl,
    SuiteConfig, TheoremId, Verdict,
};
use tokenprop::gen::{gen_random_csp, gen_random_ksat, gen_random_qcol, random_assignment, Generated};
use tokenprop::io::{graph_to_json, parse_instance, write_dimacs, write_edge_list, Format};
use tokenprop::solver::{solve, Algorithm, DecimationTarget, SolveConfig, SolveStatus};
use tokenprop::trace::{trace, Engine, TraceConfig};
use tokenprop::{compatibility_report, DegreePolicy, Error, FactorGraph, DEFAULT_BUDGET};

#[derive(Parser, Debug)]
#[command(name = "tokenprop", version, about = "Token-passing message engines for constraint satisfaction problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Solve an instance by decimation.
    Solve(SolveArgs),
    /// Dump the messages of one engine, iteration by iteration.
    Propagate(PropagateArgs),
    /// Report local compatibility of every constraint.
    CheckCompat(InputArgs),
    /// Run the equivalence checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Instance file (`.cnf` DIMACS, `.json` native, anything else an edge
    /// list); `-` reads an edge list from standard input.
    input: PathBuf,
    /// Alphabet size of edge-list instances.
    #[arg(long, default_value_t = 3)]
    q: usize,
    /// Force the input format instead of guessing from the file name.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Reject instances with a coordinate in fewer than two constraints.
    #[arg(long)]
    strict_degree: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Dimacs,
    Edges,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Dimacs => Format::DimacsCnf,
            FormatArg::Edges => Format::EdgeList,
            FormatArg::Json => Format::NativeJson,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(subcommand)]
    family: GenFamily,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Output format; DIMACS for k-SAT, edge list for coloring and native
    /// JSON for general CSPs by default.
    #[arg(long, value_enum, global = true)]
    format: Option<FormatArg>,
}

#[derive(Subcommand, Debug)]
enum GenFamily {
    /// Random k-SAT.
    Ksat {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep only clauses satisfied by a random planted assignment.
        #[arg(long)]
        planted: bool,
    },
    /// Random q-coloring.
    Qcol {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        planted: bool,
    },
    /// Random CSP with explicit relations.
    Csp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 2)]
        arity_min: usize,
        #[arg(long, default_value_t = 3)]
        arity_max: usize,
        /// Probability of keeping each tuple.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        planted: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AlgArg {
    Sp,
    SpStar,
    Ptp,
    Wptp,
    Bp,
    Sdbp,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Algorithm {
        match a {
            AlgArg::Sp => Algorithm::SpGamma,
            AlgArg::SpStar => Algorithm::SpStar,
            AlgArg::Ptp => Algorithm::Ptp,
            AlgArg::Wptp => Algorithm::Wptp,
            AlgArg::Bp => Algorithm::Bp,
            AlgArg::Sdbp => Algorithm::Sdbp,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = AlgArg::Sp)]
    alg: AlgArg,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Propagation iterations per decimation round.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smallest singleton mass that allows fixing a coordinate.
    #[arg(long, default_value_t = 0.0)]
    decimation_threshold: f64,
    /// Search the residual exhaustively once its size is at most this.
    #[arg(long, default_value_t = 1 << 20)]
    brute_force_limit: u128,
    /// Fix coordinates to any token inside their domain, not only to
    /// single symbols.
    #[arg(long)]
    token_decimation: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Dtp,
    Ptp,
    Wptp,
    Sp,
    SpStar,
    Bp,
    Sdbp,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Engine {
        match e {
            EngineArg::Dtp => Engine::Dtp,
            EngineArg::Ptp => Engine::Ptp,
            EngineArg::Wptp => Engine::Wptp,
            EngineArg::Sp => Engine::Sp,
            EngineArg::SpStar => Engine::SpStar,
            EngineArg::Bp => Engine::Bp,
            EngineArg::Sdbp => Engine::Sdbp,
        }
    }
}

#[derive(Args, Debug)]
struct PropagateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = EngineArg::Ptp)]
    engine: EngineArg,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ControlArg {
    Perturb,
    CoupledInit,
    PlainBp,
}

impl From<ControlArg> for NegativeControl {
    fn from(c: ControlArg) -> NegativeControl {
        match c {
            ControlArg::Perturb => NegativeControl::Perturb,
            ControlArg::CoupledInit => NegativeControl::CoupledInit,
            ControlArg::PlainBp => NegativeControl::PlainBp,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Only run this theorem's checks, e.g. `sdbp-wptp`.
    #[arg(long)]
    theorem: Option<String>,
    /// Instances per seeded suite.
    #[arg(long, default_value_t = 25)]
    instances: usize,
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    /// First seed of the suite, or the seed of a single-instance check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check this instance instead of the seeded suite; needs `--theorem`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Alphabet size of an edge-list instance.
    #[arg(long, default_value_t = 3)]
    q: usize,
    /// `γ` of the weighted single-instance checks.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Negative control for a single-instance check.
    #[arg(long, value_enum)]
    control: Option<ControlArg>,
}

/// A failure that maps to exit code 2.
struct InputError(String);

impl From<Error> for InputError {
    fn from(e: Error) -> InputError {
        InputError(e.to_string())
    }
}

impl From<io::Error> for InputError {
    fn from(e: io::Error) -> InputError {
        InputError(e.to_string())
    }
}

/// Writes to standard output; a reader that stops early is not an error.
fn emit(text: &str) -> Result<(), InputError> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

type CliResult = Result<bool, InputError>;

fn read_text(path: &PathBuf) -> Result<String, InputError> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
    }
}

fn load(args: &InputArgs) -> Result<FactorGraph, InputError> {
    let text = read_text(&args.input)?;
    let format = args.format.map(Format::from).unwrap_or_else(|| Format::from_path(&args.input.to_string_lossy()));
    let policy = if args.strict_degree { DegreePolicy::Strict } else { DegreePolicy::AllowLow };
    Ok(parse_instance(&text, format, args.q, policy)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), InputError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| InputError(e.to_string()))?;
    emit(&format!("{text}\n"))
}

fn cmd_gen(args: &GenArgs) -> CliResult {
    let (generated, default_format): (Generated, FormatArg) = match args.family {
        GenFamily::Ksat { n, m, k, seed, planted } => {
            let plant = planted.then(|| random_assignment(n, 2, seed));
            (gen_random_ksat(n, m, k, seed, plant.as_deref())?, FormatArg::Dimacs)
        }
        GenFamily::Qcol { n, m, q, seed, planted } => {
            let plant = planted.then(|| random_assignment(n, q, seed));
            (gen_random_qcol(n, m, q, seed, plant.as_deref())?, FormatArg::Edges)
        }
        GenFamily::Csp { n, m, q, arity_min, arity_max, density, seed, planted } => {
            let plant = planted.then(|| random_assignment(n, q, seed));
            (gen_random_csp(n, m, q, arity_min, arity_max, density, seed, plant.as_deref())?, FormatArg::Json)
        }
    };
    let meta = serde_json::to_string(&generated.meta).map_err(|e| InputError(e.to_string()))?;
    let text = match args.format.unwrap_or(default_format) {
        FormatArg::Dimacs => format!("c {meta}\n{}", write_dimacs(&generated.graph)?),
        FormatArg::Edges => format!("# {meta}\n{}", write_edge_list(&generated.graph)?),
        FormatArg::Json => format!("{}\n", graph_to_json(&generated.graph)?),
    };
    match &args.output {
        Some(path) => fs::write(path, text).map_err(|e| InputError(format!("{}: {e}", path.display())))?,
        None => emit(&text)?,
    }
    Ok(true)
}

fn cmd_solve(args: &SolveArgs) -> CliResult {
    let g = load(&args.input)?;
    let cfg = SolveConfig {
        algorithm: args.alg.into(),
        gamma: args.gamma,
        omega: None,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        threshold: args.decimation_threshold,
        brute_force_limit: args.brute_force_limit,
        target: if args.token_decimation { DecimationTarget::Token } else { DecimationTarget::Singleton },
        budget: DEFAULT_BUDGET,
    };
    let result = solve(&g, &cfg)?;
    print_json(&result)?;
    Ok(matches!(result.status, SolveStatus::Sat { .. }))
}

fn cmd_propagate(args: &PropagateArgs) -> CliResult {
    let g = load(&args.input)?;
    let cfg = TraceConfig {
        engine: args.engine.into(),
        gamma: args.gamma,
        omega: None,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        budget: DEFAULT_BUDGET,
    };
    print_json(&trace(&g, &cfg)?)?;
    Ok(true)
}

#[derive(Serialize)]
struct CompatOutput {
    all_compatible: bool,
    constraints: Vec<tokenprop::CompatReport>,
}

fn cmd_check_compat(args: &InputArgs) -> CliResult {
    let g = load(args)?;
    let constraints = compatibility_report(&g, DEFAULT_BUDGET)?;
    let all_compatible = constraints.iter().all(|r| r.compatible);
    print_json(&CompatOutput { all_compatible, constraints })?;
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult {
    let theorems = match &args.theorem {
        Some(t) => vec![t.parse::<TheoremId>()?],
        None => TheoremId::ALL.to_vec(),
    };
    if let Some(path) = &args.input {
        let [theorem] = theorems[..] else {
            return Err(InputError("a single-instance check needs --theorem".into()));
        };
        let input = InputArgs { input: path.clone(), q: args.q, format: None, strict_degree: true };
        let g = load(&input)?;
        let name = path.to_string_lossy().to_string();
        let mut cfg = CheckConfig { iterations: args.iterations, ..CheckConfig::new(theorem, args.seed) };
        cfg.control = args.control.map(NegativeControl::from);
        let report = match theorem {
            TheoremId::SpStarSp => check_sp_star_vs_sp(&g, &name, args.gamma, &cfg)?,
            TheoremId::PtpSp3col => check_ptp_vs_sp_3col(&g, &name, &cfg)?,
            TheoremId::WptpSpstarKsat => check_wptp_vs_spstar_ksat(&g, &name, args.gamma, &cfg)?,
            TheoremId::BpWptpKsat => check_bp_vs_wptp_ksat(&g, &name, args.gamma, &cfg)?,
            TheoremId::SdbpPtp3col => check_sdbp_vs_ptp_3col(&g, &name, &cfg)?,
            TheoremId::SdbpWptp => {
                let report = check_sdbp_vs_wptp_general(&g, &name, &cfg)?;
                print_json(&report)?;
                return Ok(report.outcome != GeneralOutcome::Violated);
            }
        };
        print_json(&report)?;
        return Ok(report.verdict == Verdict::Hold);
    }
    if args.control.is_some() {
        return Err(InputError("--control applies to single-instance checks".into()));
    }
    let sc = SuiteConfig { instances: args.instances, iterations: args.iterations, base_seed: args.seed };
    let reports = theorems.iter().map(|&t| run_suite(t, &sc)).collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    print_json(&reports)?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::CheckCompat(a) => cmd_check_compat(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
