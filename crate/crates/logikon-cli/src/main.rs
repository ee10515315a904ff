//! `logikon` — compile equational theories into differentiable gate
//! networks, train them on the logical constraint manifold, and verify the
//! result against exhaustive boolean semantics.
//!
//! Exit codes: 0 success, 1 input error or failed verification, 2 I/O error,
//! 3 optimization failure. `LOGIKON_THREADS` caps internal parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use logikon::constraint::{self, extract_constraints};
use logikon::net::{
    assign_model, compile, export_network, extract_model, forward_outputs, import_network,
    InitScheme, NetworkExport, NetworkGraph, ParameterStore,
};
use logikon::opt::{
    initialize_on_manifold, loss_and_grad, penalty_train, project_tangent, train, Dataset,
    InitMode, OptimizerConfig,
};
use logikon::relax::Temperature;
use logikon::theory::{parse_expression, parse_theory, validate_theory, Theory};
use logikon::verify::{
    arm_equivalence_check, gate_bound_check, axiom_envelope_check, expressivity_census,
    functoriality_check, roundtrip_check, truth_table_check, truth_table_sweep,
    VerificationReport,
};

#[derive(Parser)]
#[command(name = "logikon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile an expression over a theory into a network bundle.
    Compile(CompileArgs),
    /// Train a network on the constraint manifold (or with the penalty
    /// baseline).
    Train(TrainArgs),
    /// Run verification suites against a theory or a network bundle.
    Verify(VerifyArgs),
    /// Evaluate a network bundle on one input vector.
    Eval(EvalArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Theory specification file (.thy).
    theory: PathBuf,
    /// Expression over the theory's connectives; free identifiers become
    /// inputs in order of first occurrence.
    #[arg(long)]
    expr: String,
    #[arg(long, default_value_t = 8.0)]
    beta: f64,
    /// Parameter initialization.
    #[arg(long, value_enum, default_value_t = InitArg::Canonical)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    /// Output network bundle path.
    #[arg(long, default_value = "net.json")]
    out: PathBuf,
    /// Constraint report path; defaults to `<out stem>.constraints.json`.
    #[arg(long)]
    constraints_out: Option<PathBuf>,
    /// Run manifest path; defaults to `<out stem>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Canonical,
    Random,
}

#[derive(Args)]
struct TrainArgs {
    /// Theory specification file; always required, the axioms define the
    /// constraint manifold.
    #[arg(long)]
    theory: PathBuf,
    /// Existing network bundle to train; otherwise compile --expr fresh.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Expression to compile when no --net is given.
    #[arg(long)]
    expr: Option<String>,
    /// Headerless CSV: the first `n` columns are inputs, the rest targets.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Riemannian)]
    method: MethodArg,
    /// Optimizer configuration JSON; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "trained.json")]
    out: PathBuf,
    #[arg(long, default_value = "trace.csv")]
    trace: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Riemannian,
    Penalty,
}

#[derive(Args)]
struct VerifyArgs {
    /// Theory specification file.
    #[arg(long, conflicts_with = "net")]
    theory: Option<PathBuf>,
    /// Network bundle.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    /// Comma-separated temperatures for the bound suites.
    #[arg(long, default_value = "1,2,5,10,20,40")]
    beta_grid: String,
    /// Temperature for truth-table and round-trip suites; defaults to 40
    /// for theories and to the bundle's temperature for networks.
    #[arg(long)]
    beta: Option<f64>,
    /// Term depth for theory-wide truth and census suites.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Context size cap for theory-wide truth sweeps.
    #[arg(long, default_value_t = 2)]
    vars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    All,
    Bounds,
    Truth,
    Roundtrip,
    Census,
    Functor,
}

#[derive(Args)]
struct EvalArgs {
    /// Network bundle.
    #[arg(long)]
    net: PathBuf,
    /// Comma-separated input values.
    #[arg(long)]
    input: String,
    /// Temperature override; defaults to the bundle's.
    #[arg(long)]
    beta: Option<f64>,
}

enum CliError {
    Input(String),
    Io(String),
    Optimization(String),
    ChecksFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::ChecksFailed => 1,
            CliError::Io(_) => 2,
            CliError::Optimization(_) => 3,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LOGIKON_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(args) => cmd_compile(args),
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Input(msg) => eprintln!("error: {msg}"),
                CliError::Io(msg) => eprintln!("i/o error: {msg}"),
                CliError::Optimization(msg) => eprintln!("optimization failed: {msg}"),
                CliError::ChecksFailed => eprintln!("verification failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

/// Everything needed to reproduce a run; written atomically before any
/// result file.
#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    command: String,
    theory_file: Option<String>,
    theory_sha256: Option<String>,
    config: serde_json::Value,
    seed: u64,
    outputs: Vec<String>,
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(path, &json)
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn load_theory(path: &Path) -> Result<(Theory, String), CliError> {
    let source = read_to_string(path)?;
    let theory = parse_theory(&source).map_err(input_err)?;
    let diagnostics = validate_theory(&theory);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("{d}");
        }
        return Err(CliError::Input(format!(
            "{} validation diagnostics",
            diagnostics.len()
        )));
    }
    Ok((theory, sha256_hex(&source)))
}

fn load_net(path: &Path) -> Result<(NetworkGraph, ParameterStore, Temperature), CliError> {
    let json = read_to_string(path)?;
    let export: NetworkExport = serde_json::from_str(&json).map_err(input_err)?;
    import_network(&export).map_err(input_err)
}

fn default_sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_compile(args: CompileArgs) -> Result<(), CliError> {
    let (theory, theory_hash) = load_theory(&args.theory)?;
    let (expr, context_size, names) = parse_expression(&theory, &args.expr).map_err(input_err)?;
    let beta = Temperature::new(args.beta).map_err(input_err)?;
    let init = match args.init {
        InitArg::Canonical => InitScheme::Canonical,
        InitArg::Random => InitScheme::Random {
            seed: args.seed,
            scale: args.scale,
        },
    };
    let (model, store) = assign_model(&theory, beta, init);
    let graph = compile(&model, &expr, context_size).map_err(input_err)?;
    let gset = extract_constraints(&theory, &model).map_err(input_err)?;
    let residuals = constraint::report(&gset, &store, beta).map_err(input_err)?;

    let constraints_out = args
        .constraints_out
        .unwrap_or_else(|| default_sibling(&args.out, "constraints.json"));
    let manifest_path = args
        .manifest
        .unwrap_or_else(|| default_sibling(&args.out, "manifest.json"));
    write_manifest(
        &manifest_path,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "compile".into(),
            theory_file: Some(args.theory.display().to_string()),
            theory_sha256: Some(theory_hash),
            config: serde_json::json!({
                "expr": args.expr,
                "beta": args.beta,
                "init": match args.init { InitArg::Canonical => "canonical", InitArg::Random => "random" },
                "scale": args.scale,
            }),
            seed: args.seed,
            outputs: vec![
                args.out.display().to_string(),
                constraints_out.display().to_string(),
            ],
        },
    )?;

    let export = export_network(&graph, &store, beta).map_err(input_err)?;
    write_atomic(
        &args.out,
        &serde_json::to_string_pretty(&export).expect("network serializes"),
    )?;
    write_atomic(
        &constraints_out,
        &serde_json::to_string_pretty(&residuals).expect("report serializes"),
    )?;
    println!(
        "compiled `{}` over inputs {:?}: {} gates, depth {}, {} parameters -> {}",
        args.expr,
        names,
        graph.gate_count(),
        graph.depth(),
        store.len(),
        args.out.display()
    );
    Ok(())
}

fn parse_data_csv(
    path: &Path,
    input_arity: usize,
    output_arity: usize,
) -> Result<Dataset, CliError> {
    let raw = read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Input(format!("data line {}: {e}", lineno + 1)))?;
        if cells.len() != input_arity + output_arity {
            return Err(CliError::Input(format!(
                "data line {}: {} columns, expected {} inputs + {} targets",
                lineno + 1,
                cells.len(),
                input_arity,
                output_arity
            )));
        }
        let (inputs, targets) = cells.split_at(input_arity);
        for &t in targets {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Input(format!(
                    "data line {}: target {t} outside [0, 1]",
                    lineno + 1
                )));
            }
        }
        samples.push((inputs.to_vec(), targets.to_vec()));
    }
    if samples.is_empty() {
        return Err(CliError::Input("data file has no rows".into()));
    }
    Ok(Dataset::new(samples))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (theory, theory_hash) = load_theory(&args.theory)?;

    let mut cfg = match &args.config {
        Some(path) => {
            serde_json::from_str::<OptimizerConfig>(&read_to_string(path)?).map_err(input_err)?
        }
        None => OptimizerConfig::default(),
    };
    if let Some(eta) = args.eta {
        cfg.learning_rate = eta;
    }
    if let Some(eps) = args.epsilon {
        cfg.constraint_tolerance = eps;
    }
    if let Some(iters) = args.max_iters {
        cfg.max_iterations = iters;
    }
    if let Some(lambda) = args.lambda {
        cfg.penalty_weight = lambda;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }

    // the graph and starting parameters: an existing bundle or a fresh
    // compilation of --expr
    let (graph, store, beta) = match (&args.net, &args.expr) {
        (Some(net), _) => {
            let (graph, store, net_beta) = load_net(net)?;
            let beta = match args.beta {
                Some(b) => Temperature::new(b).map_err(input_err)?,
                None => net_beta,
            };
            (graph, store, beta)
        }
        (None, Some(expr)) => {
            let beta = Temperature::new(args.beta.unwrap_or(8.0)).map_err(input_err)?;
            let (expr, context_size, _) = parse_expression(&theory, expr).map_err(input_err)?;
            let (model, store) = assign_model(&theory, beta, InitScheme::Canonical);
            let graph = compile(&model, &expr, context_size).map_err(input_err)?;
            (graph, store, beta)
        }
        (None, None) => {
            return Err(CliError::Input(
                "train needs either --net or --expr".into(),
            ))
        }
    };
    // a schedule spelled out in the config file wins unless --beta overrides
    let config_has_schedule =
        args.config.is_some() && cfg.beta_schedule != OptimizerConfig::default().beta_schedule;
    if args.beta.is_some() || !config_has_schedule {
        cfg.beta_schedule = vec![beta.value()];
    }
    let start_beta = Temperature::new(cfg.beta_schedule[0]).map_err(input_err)?;
    let final_beta =
        Temperature::new(*cfg.beta_schedule.last().expect("non-empty schedule"))
            .map_err(input_err)?;

    // the store must carry a slot of the right shape for every connective
    // the theory's axioms can reach
    for c in &theory.connectives {
        match store.weight_range(&c.name) {
            Some(range) if range.len() == c.arity => {}
            Some(_) => {
                return Err(CliError::Input(format!(
                    "network slot `{}` does not match the theory's arity {}",
                    c.name, c.arity
                )))
            }
            None => {
                return Err(CliError::Input(format!(
                    "network has no parameter slot for connective `{}`",
                    c.name
                )))
            }
        }
    }
    let (model, _) = assign_model(&theory, beta, InitScheme::Canonical);
    let gset = extract_constraints(&theory, &model).map_err(input_err)?;
    let data = parse_data_csv(&args.data, graph.input_count(), graph.output_count())?;

    let manifest_path = args
        .manifest
        .unwrap_or_else(|| default_sibling(&args.out, "manifest.json"));
    write_manifest(
        &manifest_path,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "train".into(),
            theory_file: Some(args.theory.display().to_string()),
            theory_sha256: Some(theory_hash),
            config: serde_json::to_value(&cfg).expect("config serializes"),
            seed: cfg.seed,
            outputs: vec![
                args.out.display().to_string(),
                args.trace.display().to_string(),
            ],
        },
    )?;

    let (trained, trace) = match args.method {
        MethodArg::Riemannian => {
            let (start, _) =
                initialize_on_manifold(&gset, &store, start_beta, InitMode::Canonical, &cfg)
                    .map_err(|e| CliError::Optimization(e.to_string()))?;
            train(&graph, &gset, &data, &start, &cfg)
                .map_err(|e| CliError::Optimization(e.to_string()))?
        }
        MethodArg::Penalty => penalty_train(&graph, &gset, &data, &store, &cfg)
            .map_err(|e| CliError::Optimization(e.to_string()))?,
    };

    let export = export_network(&graph, &trained, final_beta).map_err(input_err)?;
    write_atomic(
        &args.out,
        &serde_json::to_string_pretty(&export).expect("network serializes"),
    )?;
    write_atomic(&args.trace, &trace.to_csv())?;

    let (final_loss, grad) = loss_and_grad(&graph, &trained, &data, final_beta)
        .map_err(|e| CliError::Optimization(e.to_string()))?;
    let final_g = constraint::evaluate(&gset, &trained, final_beta)
        .map_err(input_err)?
        .norm();
    let jac = constraint::jacobian(&gset, &trained, final_beta).map_err(input_err)?;
    let final_pg = project_tangent(&grad, &jac, cfg.retraction.singular_value_cutoff).norm();
    println!(
        "{} iterations; final loss {final_loss}, |G| {final_g}, projected gradient {final_pg}",
        trace.records.len()
    );
    Ok(())
}

fn parse_beta_grid(grid: &str) -> Result<Vec<f64>, CliError> {
    grid.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(input_err))
        .collect()
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let grid = parse_beta_grid(&args.beta_grid)?;
    let mut report = VerificationReport::default();
    let mut theory_hash = None;
    let mut theory_file = None;

    enum Input {
        Theory(Theory),
        Net(NetworkGraph, ParameterStore, Temperature),
    }
    let input = match (&args.theory, &args.net) {
        (Some(path), None) => {
            let (theory, hash) = load_theory(path)?;
            theory_hash = Some(hash);
            theory_file = Some(path.display().to_string());
            Input::Theory(theory)
        }
        (None, Some(path)) => {
            let (g, s, b) = load_net(path)?;
            Input::Net(g, s, b)
        }
        _ => {
            return Err(CliError::Input(
                "verify needs exactly one of --theory or --net".into(),
            ))
        }
    };

    let want = |suite: SuiteArg| args.suite == SuiteArg::All || args.suite == suite;

    match &input {
        Input::Theory(theory) => {
            let beta = Temperature::new(args.beta.unwrap_or(40.0)).map_err(input_err)?;
            if want(SuiteArg::Bounds) {
                report.push(gate_bound_check(&grid).map_err(input_err)?);
                for entry in axiom_envelope_check(theory, &grid).map_err(input_err)? {
                    report.push(entry);
                }
            }
            if want(SuiteArg::Truth) {
                report.push(
                    truth_table_sweep(
                        theory,
                        args.vars,
                        args.depth,
                        beta,
                        1e-6,
                        Temperature::new(60.0).expect("valid"),
                        10_000_000,
                    )
                    .map_err(input_err)?,
                );
            }
            if want(SuiteArg::Roundtrip) {
                let (model, store) = assign_model(theory, beta, InitScheme::Canonical);
                for axiom in &theory.axioms {
                    let lhs = compile(&model, &axiom.lhs, axiom.context_size).map_err(input_err)?;
                    let mut entry =
                        roundtrip_check(&lhs, &store, beta, 50, args.seed).map_err(input_err)?;
                    entry.name = format!("roundtrip[{}]", axiom.name);
                    report.push(entry);
                }
            }
            if want(SuiteArg::Census) {
                let outcome = expressivity_census(
                    theory,
                    2,
                    args.depth,
                    Temperature::new(60.0).expect("valid"),
                    10_000_000,
                )
                .map_err(input_err)?;
                report.push(outcome.entry);
            }
            if want(SuiteArg::Functor) {
                let (_, store) = assign_model(theory, beta, InitScheme::Canonical);
                report.push(
                    functoriality_check(theory, &store, beta, 100, args.seed)
                        .map_err(input_err)?,
                );
            }
        }
        Input::Net(graph, store, net_beta) => {
            let beta = match args.beta {
                Some(b) => Temperature::new(b).map_err(input_err)?,
                None => *net_beta,
            };
            if want(SuiteArg::Bounds) {
                report.push(gate_bound_check(&grid).map_err(input_err)?);
            }
            if want(SuiteArg::Truth) {
                let (model, _) = extract_model(graph, store, beta).map_err(input_err)?;
                let terms = graph.to_terms();
                for term in &terms {
                    let single =
                        compile(&model, term, graph.input_count()).map_err(input_err)?;
                    report.push(
                        truth_table_check(&single, term, graph.input_count(), store, beta, 1e-6)
                            .map_err(input_err)?,
                    );
                }
                if terms.len() == 2 {
                    let left =
                        compile(&model, &terms[0], graph.input_count()).map_err(input_err)?;
                    let right =
                        compile(&model, &terms[1], graph.input_count()).map_err(input_err)?;
                    report.push(
                        arm_equivalence_check(&left, &right, store, beta, &[], 1e-6)
                            .map_err(input_err)?,
                    );
                }
            }
            if want(SuiteArg::Roundtrip) {
                report.push(roundtrip_check(graph, store, beta, 100, args.seed).map_err(input_err)?);
            }
            if matches!(args.suite, SuiteArg::Census | SuiteArg::Functor) {
                return Err(CliError::Input(
                    "census and functor suites need --theory".into(),
                ));
            }
        }
    }

    if let Some(manifest_path) = &args.manifest {
        write_manifest(
            manifest_path,
            &RunManifest {
                tool_version: env!("CARGO_PKG_VERSION"),
                command: "verify".into(),
                theory_file,
                theory_sha256: theory_hash,
                config: serde_json::json!({
                    "suite": match args.suite {
                        SuiteArg::All => "all",
                        SuiteArg::Bounds => "bounds",
                        SuiteArg::Truth => "truth",
                        SuiteArg::Roundtrip => "roundtrip",
                        SuiteArg::Census => "census",
                        SuiteArg::Functor => "functor",
                    },
                    "beta_grid": args.beta_grid,
                    "beta": args.beta,
                    "depth": args.depth,
                }),
                seed: args.seed,
                outputs: vec![args.report.display().to_string()],
            },
        )?;
    }
    write_atomic(
        &args.report,
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    print!("{}", report.render_table());
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (graph, store, net_beta) = load_net(&args.net)?;
    let beta = match args.beta {
        Some(b) => Temperature::new(b).map_err(input_err)?,
        None => net_beta,
    };
    let input: Vec<f64> = args
        .input
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(input_err))
        .collect::<Result<_, _>>()?;
    let outputs = forward_outputs(&graph, &store, &input, beta).map_err(input_err)?;
    let rendered: Vec<String> = outputs.iter().map(|o| format!("{o}")).collect();
    println!("{}", rendered.join(","));
    Ok(())
}
