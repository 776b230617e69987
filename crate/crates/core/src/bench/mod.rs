//! Runs the feedback loop over a whole case set and summarises the counts.
//!
//! A cell is one `(trial, case, generation)` loop run. Cells are independent
//! and seeded from their coordinates alone. With the `parallel` feature and
//! `parallelism > 1` they run on a rayon pool, otherwise one after another.
//! Either way the totals are reduced serially in cell order.

mod export;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{run_loop, BenchmarkCase, LoopConfig, LoopTrace};
use crate::gateway::{
    Backend, GatewayError, GenerationConfig, HttpBackend, HttpEndpoint, ScriptedBackend, SyntheticBackend,
    SyntheticParams,
};
use crate::schema::SchemaStore;
use crate::seed::mix64;

pub use export::{export, render_csv, render_json, render_svg, ExportFormat, CSV_HEADER};
pub use stats::{aggregate, detect_plateau, AggregateError, AggregateStats, IterationStats};

pub const DEFAULT_PLATEAU_EPSILON: f64 = 0.02;
pub const DEFAULT_PLATEAU_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no *.txt prompt files in {0}")]
    EmptyDataset(PathBuf),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot build backend: {0}")]
    Backend(#[from] GatewayError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads every `*.txt` file in `dir` as one case, id = file stem, sorted by id.
pub fn load_cases(dir: &Path) -> Result<Vec<BenchmarkCase>, BenchError> {
    let mut cases = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") || !path.is_file() {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let prompt = fs::read_to_string(&path).map_err(io_err(&path))?;
        let prompt = prompt.strip_suffix('\n').unwrap_or(&prompt);
        let case = BenchmarkCase::new(id, prompt).map_err(|e| BenchError::InvalidCase(e.to_string()))?;
        cases.push(case);
    }
    if cases.is_empty() {
        return Err(BenchError::EmptyDataset(dir.to_owned()));
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    log::info!("loaded {} cases from {}", cases.len(), dir.display());
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    /// Each cell gets a fresh synthetic backend; `params.seed` is replaced by
    /// the cell seed.
    Synthetic(SyntheticParams),
    /// Replays `<dir>/<case id>/NNN.txt` if that directory exists, otherwise
    /// `<dir>/NNN.txt`, from the start for every cell.
    Scripted {
        dir: PathBuf,
    },
    Http {
        base_url: String,
    },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic(SyntheticParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub cases_dir: PathBuf,
    pub generations_per_case: usize,
    pub iterations: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub backend: BackendSpec,
    pub early_stop: bool,
    pub include_warnings_in_feedback: bool,
    pub generation: GenerationConfig,
    /// Worker threads; does not affect results.
    #[serde(skip_serializing)]
    pub parallelism: usize,
    /// Where per-cell traces are written, if anywhere.
    #[serde(skip_serializing)]
    pub traces_dir: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            cases_dir: PathBuf::from("cases"),
            generations_per_case: 5,
            iterations: 10,
            trials: 6,
            master_seed: 0,
            backend: BackendSpec::default(),
            early_stop: false,
            include_warnings_in_feedback: true,
            generation: GenerationConfig::default(),
            parallelism: 1,
            traces_dir: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        for (name, v) in [
            ("generations_per_case", self.generations_per_case),
            ("iterations", self.iterations),
            ("trials", self.trials),
            ("parallelism", self.parallelism),
        ] {
            if v == 0 {
                return Err(BenchError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if let BackendSpec::Synthetic(p) = &self.backend {
            p.validate()?;
        }
        self.generation.validate()?;
        Ok(())
    }

    fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            max_iterations: self.iterations,
            early_stop: self.early_stop,
            include_warnings_in_feedback: self.include_warnings_in_feedback,
            generation: self.generation.clone(),
            ..LoopConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    /// `(errors, warnings)` summed over the trial's completed cells, one
    /// entry per iteration including the initial generation.
    pub per_iteration_totals: Vec<(usize, usize)>,
    pub completed_cells: usize,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub trial: usize,
    pub case_id: String,
    pub generation: usize,
    /// Records completed before the failure.
    pub completed_records: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub trials: Vec<TrialResult>,
    /// Absent when fewer than two trials were run.
    pub stats: Option<AggregateStats>,
    pub plateau_index: Option<usize>,
    pub failures: Vec<CellFailure>,
}

impl BenchmarkResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub trial: usize,
    pub case: usize,
    pub generation: usize,
}

impl Cell {
    pub fn seed(&self, master: u64) -> u64 {
        mix64(master, self.trial as u64, self.case as u64, self.generation as u64)
    }
}

/// Builds the backend for one cell.
pub type BackendFactory<'a> = dyn Fn(&Cell, &BenchmarkCase) -> Result<Box<dyn Backend>, GatewayError> + Sync + 'a;

fn standard_factory<'a>(
    cfg: &'a BenchmarkConfig,
    store: &'a Arc<SchemaStore>,
) -> Result<Box<BackendFactory<'a>>, BenchError> {
    Ok(match &cfg.backend {
        BackendSpec::Synthetic(params) => Box::new(move |cell: &Cell, _: &BenchmarkCase| {
            let params = SyntheticParams {
                seed: cell.seed(cfg.master_seed),
                ..params.clone()
            };
            Ok(Box::new(SyntheticBackend::new(params, Arc::clone(store))?) as Box<dyn Backend>)
        }),
        BackendSpec::Scripted { dir } => Box::new(move |_: &Cell, case: &BenchmarkCase| {
            let per_case = dir.join(&case.id);
            let dir = if per_case.is_dir() { per_case } else { dir.clone() };
            Ok(Box::new(ScriptedBackend::from_dir(&dir)?) as Box<dyn Backend>)
        }),
        BackendSpec::Http { base_url } => {
            let endpoint = HttpEndpoint::from_env(base_url.clone())?;
            Box::new(move |_: &Cell, _: &BenchmarkCase| {
                Ok(Box::new(HttpBackend::new(endpoint.clone())) as Box<dyn Backend>)
            })
        }
    })
}

/// Loads the cases named by `cfg` and runs the full protocol.
pub fn run_benchmark(cfg: &BenchmarkConfig, store: Arc<SchemaStore>) -> Result<BenchmarkResult, BenchError> {
    cfg.validate()?;
    let cases = load_cases(&cfg.cases_dir)?;
    let factory = standard_factory(cfg, &store)?;
    run_benchmark_with(&cases, cfg, &store, &*factory)
}

type CellOutcome = Result<LoopTrace, (String, LoopTrace)>;

fn run_cell(
    cell: &Cell,
    cases: &[BenchmarkCase],
    cfg: &BenchmarkConfig,
    loop_cfg: &LoopConfig,
    store: &SchemaStore,
    factory: &BackendFactory<'_>,
) -> CellOutcome {
    let case = &cases[cell.case];
    let empty = || LoopTrace {
        case_id: case.id.clone(),
        generation_index: cell.generation,
        records: Vec::new(),
    };
    let mut backend = factory(cell, case).map_err(|e| (e.to_string(), empty()))?;
    let outcome =
        run_loop(case, cell.generation, &mut *backend, store, loop_cfg).map_err(|f| (f.source.to_string(), f.trace));
    if let Some(dir) = &cfg.traces_dir {
        let trace = match &outcome {
            Ok(t) | Err((_, t)) => t,
        };
        if let Err(e) = persist_trace(dir, cell, trace) {
            log::warn!("cannot write trace for {}: {e}", case.id);
        }
    }
    outcome
}

fn persist_trace(dir: &Path, cell: &Cell, trace: &LoopTrace) -> std::io::Result<()> {
    let dir = dir.join(format!("trial{}", cell.trial));
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}_g{}.json", trace.case_id, cell.generation));
    fs::write(path, serde_json::to_string_pretty(trace).expect("traces serialize"))
}

#[cfg(feature = "parallel")]
fn execute<F>(cells: &[Cell], parallelism: usize, f: F) -> Vec<CellOutcome>
where
    F: Fn(&Cell) -> CellOutcome + Sync,
{
    use rayon::prelude::*;
    if parallelism <= 1 {
        return cells.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| cells.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("cannot start thread pool ({e}); running cells sequentially");
            cells.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn execute<F>(cells: &[Cell], _parallelism: usize, f: F) -> Vec<CellOutcome>
where
    F: Fn(&Cell) -> CellOutcome + Sync,
{
    cells.iter().map(f).collect()
}

/// Runs every cell over `cases` with backends from `factory`.
pub fn run_benchmark_with(
    cases: &[BenchmarkCase],
    cfg: &BenchmarkConfig,
    store: &SchemaStore,
    factory: &BackendFactory<'_>,
) -> Result<BenchmarkResult, BenchError> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(BenchError::EmptyDataset(cfg.cases_dir.clone()));
    }
    let loop_cfg = cfg.loop_config();
    let mut cells = Vec::with_capacity(cfg.trials * cases.len() * cfg.generations_per_case);
    for trial in 0..cfg.trials {
        for case in 0..cases.len() {
            for generation in 0..cfg.generations_per_case {
                cells.push(Cell {
                    trial,
                    case,
                    generation,
                });
            }
        }
    }
    let outcomes = execute(&cells, cfg.parallelism, |cell| {
        run_cell(cell, cases, cfg, &loop_cfg, store, factory)
    });

    let points = cfg.iterations + 1;
    let mut trials: Vec<TrialResult> = (0..cfg.trials)
        .map(|t| TrialResult {
            trial_index: t,
            per_iteration_totals: vec![(0, 0); points],
            completed_cells: 0,
            failed_cells: 0,
        })
        .collect();
    let mut failures = Vec::new();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let trial = &mut trials[cell.trial];
        match outcome {
            Ok(trace) => {
                trial.completed_cells += 1;
                add_trace(&mut trial.per_iteration_totals, &trace);
            }
            Err((error, trace)) => {
                trial.failed_cells += 1;
                failures.push(CellFailure {
                    trial: cell.trial,
                    case_id: cases[cell.case].id.clone(),
                    generation: cell.generation,
                    completed_records: trace.records.len(),
                    error,
                });
            }
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {} cells failed", failures.len(), cells.len());
    }

    let stats = aggregate(&trials).ok();
    let plateau_index = stats
        .as_ref()
        .and_then(|s| detect_plateau(&s.mean_errors(), DEFAULT_PLATEAU_EPSILON, DEFAULT_PLATEAU_WINDOW));
    Ok(BenchmarkResult {
        config: cfg.clone(),
        trials,
        stats,
        plateau_index,
        failures,
    })
}

/// Adds a trace's counts to `totals`. A trace that stopped early keeps
/// contributing its last counts to the remaining iterations.
pub fn add_trace(totals: &mut [(usize, usize)], trace: &LoopTrace) {
    let counts = trace.counts();
    let Some(&last) = counts.last() else {
        return;
    };
    for (i, total) in totals.iter_mut().enumerate() {
        let (e, w) = counts.get(i).copied().unwrap_or(last);
        total.0 += e;
        total.1 += w;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::DefectKind;
    use crate::schema::builtin_core_schemas;

    fn errors_template(n: usize) -> String {
        let extra: String = (0..n).map(|i| format!(", \"Bogus{i}\": {{}}")).collect();
        format!("{{\"Resources\": {{\"B\": {{\"Type\": \"AWS::S3::Bucket\"}}}}{extra}}}")
    }

    fn scripted_factory(
        counts: Vec<usize>,
    ) -> impl Fn(&Cell, &BenchmarkCase) -> Result<Box<dyn Backend>, GatewayError> + Sync {
        move |_, _| {
            let mut script: Vec<String> = counts.iter().map(|&n| errors_template(n)).collect();
            script.resize(16, errors_template(0));
            Ok(Box::new(ScriptedBackend::new(script)))
        }
    }

    fn cases(n: usize) -> Vec<BenchmarkCase> {
        (0..n)
            .map(|i| BenchmarkCase::new(format!("case{i:02}"), "Create a VPC").unwrap())
            .collect()
    }

    #[test]
    fn single_cell_totals() {
        let cfg = BenchmarkConfig {
            generations_per_case: 1,
            iterations: 3,
            trials: 1,
            ..Default::default()
        };
        let store = builtin_core_schemas();
        let r = run_benchmark_with(&cases(1), &cfg, &store, &scripted_factory(vec![3, 1, 0])).unwrap();
        assert_eq!(r.trials[0].per_iteration_totals, vec![(3, 0), (1, 0), (0, 0), (0, 0)]);
        assert!(r.stats.is_none());
        assert!(r.plateau_index.is_none());
    }

    #[test]
    fn totals_are_additive() {
        let store = builtin_core_schemas();
        let cfg = BenchmarkConfig {
            generations_per_case: 1,
            iterations: 3,
            trials: 2,
            ..Default::default()
        };
        let one = run_benchmark_with(&cases(1), &cfg, &store, &scripted_factory(vec![4, 2, 1])).unwrap();
        let two = run_benchmark_with(&cases(2), &cfg, &store, &scripted_factory(vec![4, 2, 1])).unwrap();
        for (a, b) in one.trials.iter().zip(&two.trials) {
            let doubled: Vec<_> = a.per_iteration_totals.iter().map(|&(e, w)| (2 * e, 2 * w)).collect();
            assert_eq!(b.per_iteration_totals, doubled);
        }
    }

    #[test]
    fn failed_cells_are_listed_and_excluded() {
        let store = builtin_core_schemas();
        let cfg = BenchmarkConfig {
            generations_per_case: 2,
            iterations: 2,
            trials: 2,
            ..Default::default()
        };
        let factory = |cell: &Cell, _: &BenchmarkCase| -> Result<Box<dyn Backend>, GatewayError> {
            let len = if cell.generation == 1 { 1 } else { 3 };
            Ok(Box::new(ScriptedBackend::new(vec![errors_template(2); len])))
        };
        let r = run_benchmark_with(&cases(1), &cfg, &store, &factory).unwrap();
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.failures[0].completed_records, 1);
        assert_eq!(r.trials[0].completed_cells, 1);
        assert_eq!(r.trials[0].failed_cells, 1);
        assert_eq!(r.trials[0].per_iteration_totals, vec![(2, 0); 3]);
    }

    #[test]
    fn synthetic_results_ignore_thread_count() {
        let store = Arc::new(builtin_core_schemas());
        let mut cfg = BenchmarkConfig {
            generations_per_case: 2,
            iterations: 4,
            trials: 2,
            master_seed: 99,
            backend: BackendSpec::Synthetic(SyntheticParams {
                initial_defects: 6,
                kinds: DefectKind::ALL.to_vec(),
                ..Default::default()
            }),
            ..Default::default()
        };
        let run = |cfg: &BenchmarkConfig| {
            let factory = standard_factory(cfg, &store).unwrap();
            run_benchmark_with(&cases(3), cfg, &store, &*factory).unwrap().to_json()
        };
        let serial = run(&cfg);
        cfg.parallelism = 4;
        let parallel = run(&cfg);
        assert_eq!(serial, parallel);
        assert!(!serial.contains("parallelism"));
    }

    #[test]
    fn results_json_shape() {
        let store = builtin_core_schemas();
        let cfg = BenchmarkConfig {
            generations_per_case: 1,
            iterations: 2,
            trials: 2,
            ..Default::default()
        };
        let r = run_benchmark_with(&cases(1), &cfg, &store, &scripted_factory(vec![2, 1])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["config", "trials", "stats", "plateau_index", "failures"]);
        assert_eq!(v["trials"][0]["per_iteration_totals"][0], serde_json::json!([2, 0]));
        let back: BenchmarkResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.trials, r.trials);
    }

    #[test]
    fn load_cases_sorted_and_nonempty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_cases(dir.path()), Err(BenchError::EmptyDataset(_))));
        fs::write(dir.path().join("b.txt"), "second\n").unwrap();
        fs::write(dir.path().join("a.txt"), "first").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let cases = load_cases(dir.path()).unwrap();
        let ids: Vec<_> = cases.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(cases[1].prompt, "second");
    }

    #[test]
    fn early_stopped_traces_carry_their_last_counts() {
        let trace = LoopTrace {
            case_id: "c".into(),
            generation_index: 0,
            records: Vec::new(),
        };
        let mut totals = vec![(1, 1); 3];
        add_trace(&mut totals, &trace);
        assert_eq!(totals, vec![(1, 1); 3]);
    }
}
