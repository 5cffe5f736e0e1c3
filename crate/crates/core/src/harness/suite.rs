//! Experiment specs, batch execution across seeds, and report emission.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clique_mis::{run_algorithm2, Algo2Config, Algo2Stats, IterationRecord};
use crate::graph::{gnp_random, random_regular, Graph, GraphError};
use crate::greedy::{check_residual_sparsity, greedy_mis, residual_sparsity_bound, uniform_order};
use crate::harness::verify::verify_mis;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("graph {family} seed {seed}: {source}")]
    Graph { family: String, seed: u64, source: GraphError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("spec {path}: {message}")]
    Spec { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphFamily {
    Gnp { n: usize, p: f64 },
    Regular { n: usize, d: usize },
    /// Edge-list file; the seed only affects the algorithm.
    File { path: PathBuf },
}

impl GraphFamily {
    pub fn label(&self) -> String {
        match self {
            GraphFamily::Gnp { n, p } => format!("gnp(n={n},p={p})"),
            GraphFamily::Regular { n, d } => format!("regular(n={n},d={d})"),
            GraphFamily::File { path } => format!("file({})", path.display()),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Graph, HarnessError> {
        let wrap = |source| HarnessError::Graph { family: self.label(), seed, source };
        match self {
            GraphFamily::Gnp { n, p } => gnp_random(*n, *p, seed).map_err(wrap),
            GraphFamily::Regular { n, d } => random_regular(*n, *d, seed).map_err(wrap),
            GraphFamily::File { path } => {
                let f = File::open(path).map_err(io_err(path))?;
                Graph::read_edge_list(BufReader::new(f)).map_err(wrap)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Lemma2,
    Lemma3,
    Rounds,
    Equivalence,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Lemma2, Suite::Lemma3, Suite::Rounds, Suite::Equivalence];
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lemma1" => Ok(Suite::Lemma1),
            "lemma2" => Ok(Suite::Lemma2),
            "lemma3" => Ok(Suite::Lemma3),
            "rounds" => Ok(Suite::Rounds),
            "equivalence" => Ok(Suite::Equivalence),
            other => Err(format!("unknown suite {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub graphs: Vec<GraphFamily>,
    pub seeds: Vec<u64>,
    /// Its `seed` field is ignored; each run derives one from the run seed.
    #[serde(default)]
    pub config: Algo2Config,
    /// Empty means every suite.
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentSpec {
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| HarnessError::Spec { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn enabled(&self, suite: Suite) -> bool {
        self.suites.is_empty() || self.suites.contains(&suite)
    }

    /// SHA-256 of the canonical JSON form of the spec.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Seed for the order and finisher streams of run seed `s`, independent of the graph stream.
pub fn algorithm_seed(s: u64) -> u64 {
    s ^ 0x9E37_79B9_7F4A_7C15
}

/// `⌈log₂ log₂ Δ⌉ + 3`, the while-iteration allowance.
pub fn iteration_allowance(delta: usize) -> usize {
    if delta < 2 {
        return 3;
    }
    let ll = (delta as f64).log2().log2();
    ll.ceil().max(0.0) as usize + 3
}

/// `2 · 4 · log₂ n`, the finisher round allowance for residual Δ ≤ 64.
pub fn finisher_allowance(n: usize) -> f64 {
    8.0 * (n.max(1) as f64).log2()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: String,
    pub seed: u64,
    pub n: usize,
    pub edges: usize,
    pub delta: usize,
    /// Set when the run aborted (routing precondition, audit failure, safety cap).
    pub error: Option<String>,
    pub mis_ok: bool,
    pub stats: Option<Algo2Stats>,
    pub lemma1_violations: Option<usize>,
    /// max over t of Δ(G[U_t]) / bound(t).
    pub lemma1_worst_ratio: Option<f64>,
    pub lemma2_violations: Option<usize>,
    pub progress_violations: Option<usize>,
    pub lemma3_triggers: Option<u64>,
    pub rounds_match: Option<bool>,
    pub equivalence_ok: Option<bool>,
    pub congestion_ok: bool,
    pub iteration_allowance: usize,
    pub finisher_allowance: f64,
}

impl RunRecord {
    /// MIS validity, audits, aborted runs, exact round accounting and oracle equivalence.
    pub fn hard_failures(&self) -> usize {
        usize::from(self.error.is_some())
            + usize::from(!self.mis_ok)
            + usize::from(!self.congestion_ok)
            + usize::from(self.rounds_match == Some(false))
            + usize::from(self.equivalence_ok == Some(false))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub hard_failures: usize,
    pub aborted: usize,
    pub mis_failures: usize,
    pub congestion_failures: usize,
    pub rounds_mismatches: usize,
    pub equivalence_mismatches: usize,
    pub lemma1_violations: usize,
    pub lemma2_violations: usize,
    pub progress_violations: usize,
    pub lemma3_triggers: u64,
    pub max_while_iterations: usize,
    pub max_luby_rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub fingerprint: Fingerprint,
    pub spec: ExperimentSpec,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.summary.hard_failures == 0
    }
}

/// One (graph, seed) run with every enabled check.
pub fn run_one(spec: &ExperimentSpec, family: &GraphFamily, seed: u64) -> Result<RunRecord, HarnessError> {
    let g = family.generate(seed)?;
    let n = g.n();
    let algo_seed = algorithm_seed(seed);
    let mut rec = RunRecord {
        family: family.label(),
        seed,
        n,
        edges: g.edge_count(),
        delta: g.max_degree(),
        error: None,
        mis_ok: false,
        stats: None,
        lemma1_violations: None,
        lemma1_worst_ratio: None,
        lemma2_violations: None,
        progress_violations: None,
        lemma3_triggers: None,
        rounds_match: None,
        equivalence_ok: None,
        congestion_ok: true,
        iteration_allowance: iteration_allowance(g.max_degree()),
        finisher_allowance: finisher_allowance(n),
    };

    if spec.enabled(Suite::Lemma1) {
        let trace = greedy_mis(&g, &uniform_order(n, algo_seed));
        rec.lemma1_violations = Some(check_residual_sparsity(&trace, n).len());
        rec.lemma1_worst_ratio = (1..n)
            .map(|t| trace.residual_max_degree_at(t) as f64 / residual_sparsity_bound(n, t))
            .reduce(f64::max);
    }

    let cfg = Algo2Config { seed: algo_seed, ..spec.config.clone() };
    let outcome = match run_algorithm2(&g, &cfg) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return Ok(rec);
        }
    };
    rec.mis_ok = verify_mis(&g, &outcome.mis).is_ok();
    rec.congestion_ok = outcome.reports.iter().all(|r| r.max_pair_load <= 1);
    let stats = outcome.stats;
    if spec.enabled(Suite::Lemma2) {
        rec.lemma2_violations = Some(stats.lemma2_violations());
        rec.progress_violations = Some(stats.progress_violations());
    }
    if spec.enabled(Suite::Lemma3) {
        rec.lemma3_triggers = Some(stats.fallback_retries);
    }
    if spec.enabled(Suite::Rounds) {
        rec.rounds_match = Some(stats.closed_form_rounds() == outcome.clock.logical_rounds);
    }
    if spec.enabled(Suite::Equivalence) {
        let trace = greedy_mis(&g, &outcome.order);
        rec.equivalence_ok = Some(trace.chosen_within(stats.k_final) == outcome.stage2_selected);
    }
    rec.stats = Some(stats);
    Ok(rec)
}

/// Runs every (graph family, seed) pair in parallel and aggregates the results.
/// Writes the report files when the spec names an output directory.
pub fn run_suite(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    let jobs: Vec<(&GraphFamily, u64)> =
        spec.graphs.iter().flat_map(|f| spec.seeds.iter().map(move |&s| (f, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|(f, s)| run_one(spec, f, *s))
        .collect::<Result<Vec<_>, _>>()?;

    let mut summary = Summary { runs: runs.len(), ..Default::default() };
    for r in &runs {
        summary.hard_failures += r.hard_failures();
        summary.aborted += usize::from(r.error.is_some());
        summary.mis_failures += usize::from(r.error.is_none() && !r.mis_ok);
        summary.congestion_failures += usize::from(!r.congestion_ok);
        summary.rounds_mismatches += usize::from(r.rounds_match == Some(false));
        summary.equivalence_mismatches += usize::from(r.equivalence_ok == Some(false));
        summary.lemma1_violations += r.lemma1_violations.unwrap_or(0);
        summary.lemma2_violations += r.lemma2_violations.unwrap_or(0);
        summary.progress_violations += r.progress_violations.unwrap_or(0);
        summary.lemma3_triggers += r.lemma3_triggers.unwrap_or(0);
        if let Some(st) = &r.stats {
            summary.max_while_iterations = summary.max_while_iterations.max(st.while_iterations);
            summary.max_luby_rounds = summary.max_luby_rounds.max(st.luby_rounds);
        }
    }

    let report = Report {
        name: spec.name.clone(),
        fingerprint: Fingerprint {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: spec.config_hash(),
        },
        spec: spec.clone(),
        runs,
        summary,
    };
    if let Some(dir) = &spec.out {
        write_report(&report, dir)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct RunRow<'a> {
    family: &'a str,
    seed: u64,
    n: usize,
    edges: usize,
    delta: usize,
    error: &'a str,
    mis_ok: bool,
    while_iterations: Option<usize>,
    iteration_allowance: usize,
    k_final: Option<usize>,
    rounds_total: Option<u64>,
    rounds_stage2: Option<u64>,
    rounds_finisher: Option<u64>,
    finisher_allowance: f64,
    luby_rounds: Option<u64>,
    residual_delta: Option<usize>,
    lemma1_violations: Option<usize>,
    lemma1_worst_ratio: Option<f64>,
    lemma2_violations: Option<usize>,
    progress_violations: Option<usize>,
    lemma3_triggers: Option<u64>,
    rounds_match: Option<bool>,
    equivalence_ok: Option<bool>,
    congestion_ok: bool,
}

const ITERATION_HEADER: [&str; 18] = [
    "family", "seed", "i", "delta", "k_requested", "k", "k_prev", "h_vertices", "h_edges", "selected", "rounds",
    "fallback_retries", "lemma2_bound", "lemma2_ok", "lemma3_ok", "max_block_degree", "block_degree_bound",
    "delta_after",
];

fn iteration_row(family: &str, seed: u64, r: &IterationRecord) -> [String; 18] {
    [
        family.to_string(),
        seed.to_string(),
        r.i.to_string(),
        r.delta.to_string(),
        r.k_requested.to_string(),
        r.k.to_string(),
        r.k_prev.to_string(),
        r.h_vertices.to_string(),
        r.h_edges.to_string(),
        r.selected.to_string(),
        r.rounds.to_string(),
        r.fallback_retries.to_string(),
        r.lemma2_bound.to_string(),
        r.lemma2_ok.to_string(),
        r.lemma3_ok.to_string(),
        r.max_block_degree.to_string(),
        r.block_degree_bound.to_string(),
        r.delta_after.to_string(),
    ]
}

#[derive(Serialize)]
struct CurveRow<'a> {
    family: &'a str,
    seed: u64,
    luby_round: usize,
    active: usize,
}

/// `report.json`, `runs.csv`, `iterations.csv` and `finisher_curve.csv` under `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(io_err(&path))
    };

    serde_json::to_writer_pretty(create("report.json")?, report)?;

    let mut runs = csv::Writer::from_writer(create("runs.csv")?);
    for r in &report.runs {
        let st = r.stats.as_ref();
        runs.serialize(RunRow {
            family: &r.family,
            seed: r.seed,
            n: r.n,
            edges: r.edges,
            delta: r.delta,
            error: r.error.as_deref().unwrap_or(""),
            mis_ok: r.mis_ok,
            while_iterations: st.map(|s| s.while_iterations),
            iteration_allowance: r.iteration_allowance,
            k_final: st.map(|s| s.k_final),
            rounds_total: st.map(|s| s.logical_rounds),
            rounds_stage2: st.map(|s| s.rounds_stage2),
            rounds_finisher: st.map(|s| s.rounds_finisher),
            finisher_allowance: r.finisher_allowance,
            luby_rounds: st.map(|s| s.luby_rounds),
            residual_delta: st.map(|s| s.residual_delta),
            lemma1_violations: r.lemma1_violations,
            lemma1_worst_ratio: r.lemma1_worst_ratio,
            lemma2_violations: r.lemma2_violations,
            progress_violations: r.progress_violations,
            lemma3_triggers: r.lemma3_triggers,
            rounds_match: r.rounds_match,
            equivalence_ok: r.equivalence_ok,
            congestion_ok: r.congestion_ok,
        })?;
    }
    runs.flush().map_err(io_err(dir))?;

    let mut iters = csv::Writer::from_writer(create("iterations.csv")?);
    let mut curve = csv::Writer::from_writer(create("finisher_curve.csv")?);
    iters.write_record(ITERATION_HEADER)?;
    for r in &report.runs {
        let Some(st) = &r.stats else { continue };
        for record in &st.iterations {
            iters.write_record(iteration_row(&r.family, r.seed, record))?;
        }
        for (luby_round, &active) in st.finisher_active_curve.iter().enumerate() {
            curve.serialize(CurveRow { family: &r.family, seed: r.seed, luby_round, active })?;
        }
    }
    iters.flush().map_err(io_err(dir))?;
    curve.flush().map_err(io_err(dir))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clique_mis::DegreeThreshold;

    fn spec(seeds: Vec<u64>) -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            graphs: vec![GraphFamily::Gnp { n: 128, p: 0.2 }],
            seeds,
            config: Algo2Config { degree_threshold: DegreeThreshold::Fixed { value: 8 }, ..Default::default() },
            suites: vec![],
            out: None,
        }
    }

    #[test]
    fn no_seeds_is_an_empty_passing_report() {
        let report = run_suite(&spec(vec![])).unwrap();
        assert!(report.runs.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn small_suite_passes_every_check() {
        let report = run_suite(&spec((0..4).collect())).unwrap();
        assert_eq!(report.summary.runs, 4);
        assert!(report.passed(), "{:#?}", report.summary);
        assert!(report.runs.iter().all(|r| r.equivalence_ok == Some(true) && r.rounds_match == Some(true)));
    }

    #[test]
    fn suites_filter_checks() {
        let mut s = spec(vec![1]);
        s.suites = vec![Suite::Rounds];
        let report = run_suite(&s).unwrap();
        let r = &report.runs[0];
        assert!(r.lemma1_violations.is_none() && r.equivalence_ok.is_none());
        assert_eq!(r.rounds_match, Some(true));
    }

    #[test]
    fn spec_parses_from_toml_and_hash_is_stable() {
        let text = r#"
            name = "demo"
            seeds = [1, 2]
            suites = ["lemma1", "equivalence"]

            [[graphs]]
            kind = "gnp"
            n = 64
            p = 0.1

            [[graphs]]
            kind = "regular"
            n = 64
            d = 6

            [config]
            c = 5
            c_l = 3
            degree_threshold = { kind = "fixed", value = 16 }
        "#;
        let s: ExperimentSpec = toml::from_str(text).unwrap();
        assert_eq!(s.graphs.len(), 2);
        assert_eq!(s.config.c_l, 3);
        assert!(s.config.adaptive_k_fallback);
        assert_eq!(s.config_hash(), s.clone().config_hash());
        assert_eq!(s.config_hash().len(), 64);
    }

    #[test]
    fn report_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(vec![3, 4]);
        s.out = Some(dir.path().to_path_buf());
        run_suite(&s).unwrap();
        for f in ["report.json", "runs.csv", "iterations.csv", "finisher_curve.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert_eq!(runs.lines().count(), 3);
    }

    #[test]
    fn allowances() {
        // Δ = 1024: log2 log2 = log2 10 = 3.32 → 4 + 3
        assert_eq!(iteration_allowance(1024), 7);
        assert_eq!(iteration_allowance(16), 5);
        assert_eq!(finisher_allowance(1024), 80.0);
    }
}
