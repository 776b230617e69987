mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use iacloop_core::bench::{
    aggregate, render_csv, render_json, render_svg, run_benchmark, BackendSpec, BenchmarkConfig, BenchmarkResult,
};
use iacloop_core::feedback::{run_loop, BenchmarkCase, LoopConfig};
use iacloop_core::gateway::{Backend, HttpBackend, HttpEndpoint, ScriptedBackend, SyntheticBackend, SyntheticParams};
use iacloop_core::json::parse_located;
use iacloop_core::lint::{format_report, lint_template, LintOptions};
use iacloop_core::schema::{builtin_core_schemas, load_schema_dir, SchemaStore};

use config::{GlobalConfig, DEFAULT_API_BASE_URL};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_LINT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Lint CloudFormation templates and run lint-driven repair loops.
#[derive(Debug, Parser)]
#[command(name = "iacloop", version)]
struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory of resource schema files (defaults to the builtin set).
    #[arg(long, global = true, value_name = "DIR")]
    schemas: Option<PathBuf>,
    /// Report resource types missing from the schema set.
    #[arg(long, global = true)]
    strict_types: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lint one template.
    Lint(LintArgs),
    /// Run the feedback loop for one prompt.
    Loop(LoopArgs),
    /// Run the feedback loop over a directory of prompts, several times.
    Bench(BenchArgs),
    /// Export statistics from a results file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Http,
    Scripted,
    Synthetic,
}

#[derive(Debug, Args)]
struct LintArgs {
    template: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// Base URL of an OpenAI-compatible service (http backend).
    #[arg(long, value_name = "URL")]
    api_base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Directory of numbered responses 000.txt, 001.txt, ... (scripted backend).
    #[arg(long, value_name = "DIR")]
    script_dir: Option<PathBuf>,
    /// Synthetic backend: chance a flagged defect is repaired per round.
    #[arg(long)]
    p_fix: Option<f64>,
    /// Synthetic backend: chance a repair introduces a new defect.
    #[arg(long)]
    p_spawn: Option<f64>,
    /// Synthetic backend: share of initial defects that are never repaired.
    #[arg(long)]
    stubborn_fraction: Option<f64>,
    /// Synthetic backend: defects in the first generation.
    #[arg(long)]
    defects: Option<usize>,
}

#[derive(Debug, Args)]
struct LoopArgs {
    #[arg(long, value_name = "FILE")]
    prompt_file: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    early_stop: bool,
    /// Feed only errors back, not warnings.
    #[arg(long)]
    errors_only: bool,
    /// Synthetic backend seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_name = "DIR")]
    cases: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    early_stop: bool,
    /// Feed only errors back, not warnings.
    #[arg(long)]
    errors_only: bool,
    /// Worker threads.
    #[arg(long, value_name = "K")]
    parallel: Option<usize>,
    /// Write every cell's trace under this directory.
    #[arg(long, value_name = "DIR")]
    traces: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Leave iteration 0 (the initial generation) out of the chart.
    #[arg(long)]
    skip_initial: bool,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut global = match &cli.config {
        Some(path) => GlobalConfig::load(path).map_err(|e| Failure::usage(e.to_string()))?,
        None => GlobalConfig::default(),
    };
    if cli.schemas.is_some() {
        global.schemas_dir = cli.schemas.clone();
    }
    global.strict_types |= cli.strict_types;
    global.verbosity = global.verbosity.max(cli.verbose);
    init_logging(global.verbosity);

    match cli.command {
        Command::Lint(args) => lint(&global, &args),
        Command::Loop(args) => run_loop_cmd(&global, &args),
        Command::Bench(args) => bench(&global, &args),
        Command::Report(args) => report(&args),
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("IACLOOP_LOG")
        .try_init();
}

fn load_store(global: &GlobalConfig) -> Result<SchemaStore, Failure> {
    let mut store = match &global.schemas_dir {
        None => builtin_core_schemas(),
        Some(dir) => {
            let (store, report) = load_schema_dir(dir).map_err(|e| Failure::usage(e.to_string()))?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            if let Some(first) = report.errors.first() {
                return Err(Failure::usage(format!(
                    "{} schema file error(s); first: {first}",
                    report.errors.len()
                )));
            }
            store
        }
    };
    store.strict_unknown_types |= global.strict_types;
    Ok(store)
}

#[derive(Serialize)]
struct JsonDiagnostic<'a> {
    code: &'static str,
    severity: &'static str,
    message: &'a str,
    path: String,
    line: u32,
    column: u32,
    pointer: &'a str,
}

fn lint(global: &GlobalConfig, args: &LintArgs) -> Outcome {
    let store = load_store(global)?;
    let shown = args.template.display().to_string();
    let text = fs::read_to_string(&args.template).map_err(|e| Failure::runtime(format!("{shown}: {e}")))?;
    let root = match parse_located(&text) {
        Ok(root) => root,
        Err(e) => {
            println!("{shown}: invalid JSON: {e}");
            return Ok(EXIT_LINT);
        }
    };
    let report = lint_template(&root, &store, LintOptions::default());
    match args.format {
        OutputFormat::Text => {
            let rendered = format_report(&report, &shown);
            if !rendered.is_empty() {
                println!("{rendered}");
            }
        }
        OutputFormat::Json => {
            let diags: Vec<_> = report
                .diagnostics()
                .iter()
                .map(|d| JsonDiagnostic {
                    code: d.rule.code(),
                    severity: match d.severity() {
                        iacloop_core::lint::Severity::Error => "error",
                        iacloop_core::lint::Severity::Warning => "warning",
                    },
                    message: &d.message,
                    path: shown.clone(),
                    line: d.span.line,
                    column: d.span.column,
                    pointer: &d.pointer,
                })
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&diags).expect("diagnostics serialize")
            );
        }
    }
    Ok(if report.error_count() > 0 { EXIT_LINT } else { EXIT_OK })
}

fn synthetic_params(global: &GlobalConfig, args: &BackendArgs) -> SyntheticParams {
    let mut p = global.synthetic.clone();
    if let Some(v) = args.p_fix {
        p.p_fix = v;
    }
    if let Some(v) = args.p_spawn {
        p.p_spawn = v;
    }
    if let Some(v) = args.stubborn_fraction {
        p.stubborn_fraction = v;
    }
    if let Some(v) = args.defects {
        p.initial_defects = v;
    }
    p
}

fn generation_config(global: &GlobalConfig, args: &BackendArgs) -> iacloop_core::gateway::GenerationConfig {
    let mut g = global.generation.clone();
    if let Some(m) = &args.model {
        g.model = m.clone();
    }
    if let Some(t) = args.temperature {
        g.temperature = t;
    }
    g
}

fn api_base_url(global: &GlobalConfig, args: &BackendArgs) -> String {
    args.api_base_url
        .clone()
        .or_else(|| global.api_base_url.clone())
        .unwrap_or_else(|| DEFAULT_API_BASE_URL.into())
}

fn script_dir(global: &GlobalConfig, args: &BackendArgs) -> Result<PathBuf, Failure> {
    args.script_dir
        .clone()
        .or_else(|| global.script_dir.clone())
        .ok_or_else(|| Failure::usage("--script-dir is required for the scripted backend"))
}

fn read_prompt(path: &Path) -> Result<BenchmarkCase, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("prompt").to_owned();
    let prompt = text.strip_suffix('\n').unwrap_or(&text);
    BenchmarkCase::new(id, prompt).map_err(|e| Failure::usage(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn run_loop_cmd(global: &GlobalConfig, args: &LoopArgs) -> Outcome {
    let store = Arc::new(load_store(global)?);
    let case = read_prompt(&args.prompt_file)?;
    let generation = generation_config(global, &args.backend);
    let mut backend: Box<dyn Backend> = match args.backend.backend {
        BackendKind::Http => {
            let endpoint = HttpEndpoint::from_env(api_base_url(global, &args.backend))
                .map_err(|e| Failure::usage(e.to_string()))?;
            Box::new(HttpBackend::new(endpoint))
        }
        BackendKind::Scripted => Box::new(
            ScriptedBackend::from_dir(&script_dir(global, &args.backend)?)
                .map_err(|e| Failure::usage(e.to_string()))?,
        ),
        BackendKind::Synthetic => {
            let mut params = synthetic_params(global, &args.backend);
            if let Some(seed) = args.seed {
                params.seed = seed;
            }
            Box::new(SyntheticBackend::new(params, Arc::clone(&store)).map_err(|e| Failure::usage(e.to_string()))?)
        }
    };
    let cfg = LoopConfig {
        max_iterations: args.iterations.or(global.loop_settings.iterations).unwrap_or(10),
        early_stop: args.early_stop || global.loop_settings.early_stop.unwrap_or(false),
        include_warnings_in_feedback: !args.errors_only && global.loop_settings.include_warnings.unwrap_or(true),
        generation,
        ..LoopConfig::default()
    };
    if cfg.max_iterations == 0 {
        return Err(Failure::usage("--iterations must be at least 1"));
    }
    cfg.generation.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let (trace, failure) = match run_loop(&case, 0, &mut *backend, &store, &cfg) {
        Ok(trace) => (trace, None),
        Err(f) => (f.trace, Some(f.source)),
    };
    write_file(
        &args.out,
        &serde_json::to_string_pretty(&trace).expect("traces serialize"),
    )?;
    for r in &trace.records {
        println!(
            "iteration {:>2}: {} errors, {} warnings{}",
            r.index,
            r.error_count,
            r.warning_count,
            if r.extraction_failed {
                " (no template found)"
            } else {
                ""
            }
        );
    }
    match failure {
        Some(e) => Err(Failure::runtime(format!(
            "backend failed after {} records: {e}",
            trace.records.len()
        ))),
        None => Ok(EXIT_OK),
    }
}

fn bench(global: &GlobalConfig, args: &BenchArgs) -> Outcome {
    let store = Arc::new(load_store(global)?);
    let cases_dir = args
        .cases
        .clone()
        .or_else(|| global.bench.cases_dir.clone())
        .ok_or_else(|| Failure::usage("--cases is required"))?;
    let backend = match args.backend.backend {
        BackendKind::Http => BackendSpec::Http {
            base_url: api_base_url(global, &args.backend),
        },
        BackendKind::Scripted => BackendSpec::Scripted {
            dir: script_dir(global, &args.backend)?,
        },
        BackendKind::Synthetic => BackendSpec::Synthetic(synthetic_params(global, &args.backend)),
    };
    let defaults = BenchmarkConfig::default();
    let cfg = BenchmarkConfig {
        cases_dir,
        generations_per_case: args
            .generations
            .or(global.bench.generations)
            .unwrap_or(defaults.generations_per_case),
        iterations: args
            .iterations
            .or(global.loop_settings.iterations)
            .unwrap_or(defaults.iterations),
        trials: args.trials.or(global.bench.trials).unwrap_or(defaults.trials),
        master_seed: args.seed.or(global.bench.seed).unwrap_or(defaults.master_seed),
        backend,
        early_stop: args.early_stop || global.loop_settings.early_stop.unwrap_or(false),
        include_warnings_in_feedback: !args.errors_only && global.loop_settings.include_warnings.unwrap_or(true),
        generation: generation_config(global, &args.backend),
        parallelism: args.parallel.or(global.bench.parallel).unwrap_or(defaults.parallelism),
        traces_dir: args.traces.clone(),
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let result = run_benchmark(&cfg, store).map_err(|e| match e {
        iacloop_core::bench::BenchError::Io { .. } => Failure::runtime(e.to_string()),
        _ => Failure::usage(e.to_string()),
    })?;
    write_file(&args.out, &result.to_json())?;

    let cells = result.trials.iter().map(|t| t.completed_cells).sum::<usize>();
    println!(
        "{} trials, {} completed cells, {} failed",
        result.trials.len(),
        cells,
        result.failures.len()
    );
    if let Some(stats) = &result.stats {
        let means: Vec<String> = stats
            .iterations
            .iter()
            .map(|s| format!("{:.1}", s.mean_errors))
            .collect();
        println!("mean errors per iteration: {}", means.join(" "));
    }
    match result.plateau_index {
        Some(k) => println!("plateau from iteration {k}"),
        None => println!("no plateau detected"),
    }
    if cells == 0 {
        return Err(Failure::runtime("every cell failed"));
    }
    Ok(EXIT_OK)
}

fn report(args: &ReportArgs) -> Outcome {
    let text =
        fs::read_to_string(&args.input).map_err(|e| Failure::runtime(format!("{}: {e}", args.input.display())))?;
    let result: BenchmarkResult = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: not a results file: {e}", args.input.display())))?;
    let stats = match result.stats {
        Some(s) => s,
        None => aggregate(&result.trials).map_err(|e| Failure::usage(e.to_string()))?,
    };
    if args.csv.is_none() && args.svg.is_none() && args.json.is_none() {
        print!("{}", render_csv(&stats));
        return Ok(EXIT_OK);
    }
    if let Some(p) = &args.csv {
        write_file(p, &render_csv(&stats))?;
    }
    if let Some(p) = &args.svg {
        write_file(p, &render_svg(&stats, args.skip_initial))?;
    }
    if let Some(p) = &args.json {
        write_file(p, &render_json(&stats))?;
    }
    Ok(EXIT_OK)
}
