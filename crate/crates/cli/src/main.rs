use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ccmis::clique_mis::{run_algorithm2, Algo2Config, DegreeThreshold};
use ccmis::engine::write_reports_jsonl;
use ccmis::graph::{Graph, VertexId, VertexSubset};
use ccmis::greedy::{greedy_mis, write_trace_csv};
use ccmis::harness::suite::{algorithm_seed, run_suite, ExperimentSpec, GraphFamily, Suite};
use ccmis::harness::verify::verify_mis;

#[derive(Parser)]
#[command(name = "ccmis", version, about = "MIS in a simulated congested clique")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the algorithm once and write stats, traces and round logs.
    Run(RunArgs),
    /// Run an experiment spec across seeds.
    Suite(SuiteArgs),
    /// Check that a vertex set is a maximal independent set of a graph.
    Verify {
        graph: PathBuf,
        /// Whitespace-separated vertex ids.
        set: PathBuf,
    },
    /// Write a random graph as an edge list.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gnp,
    Regular,
}

#[derive(Args, Clone, Default)]
struct GraphArgs {
    /// `gnp`, `regular`, or a path to an edge-list file.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Degree for `regular`.
    #[arg(long)]
    d: Option<usize>,
}

impl GraphArgs {
    fn family(&self) -> Result<Option<GraphFamily>> {
        let Some(kind) = self.graph.as_deref() else { return Ok(None) };
        Ok(Some(match kind {
            "gnp" => GraphFamily::Gnp {
                n: self.n.context("--n is required for gnp")?,
                p: self.p.context("--p is required for gnp")?,
            },
            "regular" => GraphFamily::Regular {
                n: self.n.context("--n is required for regular")?,
                d: self.d.context("--d is required for regular")?,
            },
            path => GraphFamily::File { path: PathBuf::from(path) },
        }))
    }
}

#[derive(Args, Clone, Default)]
struct AlgoArgs {
    /// Degree threshold: an integer, or `polylog:E` for ln(n)^E.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long = "C")]
    c: Option<u64>,
    #[arg(long = "cL")]
    c_l: Option<u64>,
    /// Abort on an oversized block instead of shrinking k.
    #[arg(long)]
    no_fallback: bool,
}

impl AlgoArgs {
    fn apply(&self, cfg: &mut Algo2Config) -> Result<()> {
        if let Some(t) = &self.tau {
            cfg.degree_threshold = parse_tau(t)?;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(c_l) = self.c_l {
            cfg.c_l = c_l;
        }
        if self.no_fallback {
            cfg.adaptive_k_fallback = false;
        }
        Ok(())
    }
}

fn parse_tau(s: &str) -> Result<DegreeThreshold> {
    if let Some(e) = s.strip_prefix("polylog:") {
        return Ok(DegreeThreshold::PolyLog { exponent: e.parse().context("bad poly-log exponent")? });
    }
    Ok(DegreeThreshold::Fixed { value: s.parse().context("--tau must be an integer or polylog:E")? })
}

/// `a..b` (half-open) or a comma list.
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| Ok(t.trim().parse()?)).collect()
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// TOML experiment spec; flags override its fields.
    spec: Option<PathBuf>,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    /// `a..b` or `1,2,3`.
    #[arg(long)]
    seeds: Option<String>,
    /// Repeatable; comma lists accepted.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<Suite>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_graph(path: &Path) -> Result<Graph> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Graph::read_edge_list(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let family = args.graph.family()?.context("--graph is required")?;
    let g = family.generate(args.seed)?;
    let mut cfg = Algo2Config { seed: algorithm_seed(args.seed), ..Default::default() };
    args.algo.apply(&mut cfg)?;

    let outcome = run_algorithm2(&g, &cfg).with_context(|| format!("{} seed {}", family.label(), args.seed))?;
    let dir = &args.out;
    std::fs::create_dir_all(dir)?;
    serde_json::to_writer_pretty(create(&dir.join("stats.json"))?, &outcome.stats)?;
    outcome.stats.write_iterations_csv(create(&dir.join("iterations.csv"))?)?;
    write_reports_jsonl(&outcome.reports, create(&dir.join("rounds.jsonl"))?)?;
    write_trace_csv(&greedy_mis(&g, &outcome.order), create(&dir.join("greedy_trace.csv"))?)?;

    let mut curve = csv::Writer::from_writer(create(&dir.join("finisher_curve.csv"))?);
    curve.write_record(["luby_round", "active"])?;
    for (i, a) in outcome.stats.finisher_active_curve.iter().enumerate() {
        curve.write_record([i.to_string(), a.to_string()])?;
    }
    curve.flush()?;

    let mut mis = create(&dir.join("mis.txt"))?;
    for v in outcome.mis.iter() {
        writeln!(mis, "{}", v.0)?;
    }
    mis.flush()?;

    let valid = verify_mis(&g, &outcome.mis).is_ok();
    let st = &outcome.stats;
    println!(
        "n={} m={} delta={} mis={} iterations={} rounds={} (order {} + stage2 {} + finisher {}) valid={}",
        st.n,
        st.edges,
        st.delta,
        st.mis_size,
        st.while_iterations,
        st.logical_rounds,
        st.rounds_order,
        st.rounds_stage2,
        st.rounds_finisher,
        valid
    );
    Ok(if valid { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_suite(args: SuiteArgs) -> Result<ExitCode> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::from_toml_file(path)?,
        None => ExperimentSpec {
            name: "cli".into(),
            graphs: vec![],
            seeds: vec![],
            config: Algo2Config::default(),
            suites: vec![],
            out: None,
        },
    };
    if let Some(f) = args.graph.family()? {
        spec.graphs = vec![f];
    }
    if let Some(s) = &args.seeds {
        spec.seeds = parse_seeds(s)?;
    }
    args.algo.apply(&mut spec.config)?;
    if !args.suite.is_empty() {
        spec.suites = args.suite.clone();
    }
    if args.out.is_some() {
        spec.out = args.out.clone();
    }
    if spec.graphs.is_empty() && !spec.seeds.is_empty() {
        bail!("no graph family given");
    }

    let report = run_suite(&spec)?;
    let s = &report.summary;
    println!(
        "runs={} hard_failures={} aborted={} mis_failures={} congestion={} rounds_mismatch={} equivalence_mismatch={}",
        s.runs,
        s.hard_failures,
        s.aborted,
        s.mis_failures,
        s.congestion_failures,
        s.rounds_mismatches,
        s.equivalence_mismatches
    );
    println!(
        "reported: lemma1={} lemma2={} progress={} lemma3_triggers={} max_iterations={} max_luby_rounds={}",
        s.lemma1_violations,
        s.lemma2_violations,
        s.progress_violations,
        s.lemma3_triggers,
        s.max_while_iterations,
        s.max_luby_rounds
    );
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} seed {}: {}", r.family, r.seed, r.error.as_deref().unwrap_or_default());
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_verify(graph: &Path, set: &Path) -> Result<ExitCode> {
    let g = read_graph(graph)?;
    let text = std::fs::read_to_string(set).with_context(|| format!("reading {}", set.display()))?;
    let mut s = VertexSubset::empty(g.n());
    for tok in text.split_whitespace() {
        let v: usize = tok.parse().with_context(|| format!("bad vertex id {tok:?}"))?;
        if v >= g.n() {
            bail!("vertex {v} out of range for n = {}", g.n());
        }
        s.insert(VertexId::from(v));
    }
    match verify_mis(&g, &s) {
        Ok(()) => {
            println!("valid");
            Ok(ExitCode::SUCCESS)
        }
        Err(w) => {
            println!("invalid: {}", serde_json::to_string(&w)?);
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let family = match args.kind {
        Kind::Gnp => GraphFamily::Gnp { n: args.n, p: args.p.context("--p is required for gnp")? },
        Kind::Regular => GraphFamily::Regular { n: args.n, d: args.d.context("--d is required for regular")? },
    };
    let g = family.generate(args.seed)?;
    let mut out = create(&args.out)?;
    g.write_edge_list(&mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Verify { graph, set } => cmd_verify(&graph, &set),
        Command::Gen(a) => cmd_gen(a),
    }
}
