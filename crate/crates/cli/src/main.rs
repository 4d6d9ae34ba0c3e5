use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use jsk_core::bench::{largest_relation, measure_throughput, run_bench, BenchConfig};
use jsk_core::estimator::{estimate_with, naive_report, EstimateOptions, Kernel};
use jsk_core::graph::traversal_plan;
use jsk_core::ingest::{read_all, sketch_query};
use jsk_core::io::{align_to_graph, load_sketches, save_sketches};
use jsk_core::synth::{write_workload, zipf_chain};
use jsk_core::{ams_estimate, exact_cardinality, parse_query, Execution, JoinGraph, Method, QuerySpec, SketchConfig};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Widths at or above which AMS sketching is reported as slow.
const AMS_WARN_M: usize = 1 << 16;

#[derive(Parser)]
#[command(
    name = "jsk",
    version,
    about = "Join cardinality estimation with convolution-based Count sketches"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Run everything on one thread.
    #[arg(long, global = true, env = "JSK_SEQUENTIAL")]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sketch every relation of a query into a sketch file.
    Sketch(SketchArgs),
    /// Estimate the query cardinality from a sketch file (JSON on stdout).
    Estimate(EstimateArgs),
    /// Exact cardinality of the query.
    Exact(QueryArg),
    /// Accuracy sweep over widths and trials, written as CSV.
    Bench(BenchArgs),
    /// Update rate on the query's largest relation.
    Throughput(ThroughputArgs),
    /// Write a Zipf-skewed two-join chain workload (CSV files and query.json).
    Generate(GenerateArgs),
}

#[derive(Args)]
struct QueryArg {
    /// Query document (JSON). Relative sources resolve against its directory.
    #[arg(long, env = "JSK_QUERY")]
    query: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Conv,
    Ams,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Conv => Method::Conv,
            MethodArg::Ams => Method::Ams,
        }
    }
}

#[derive(Args)]
struct SketchArgs {
    #[command(flatten)]
    query: QueryArg,
    /// Counters per repetition, as an integer or `2^k`.
    #[arg(long, env = "JSK_M", value_parser = parse_width)]
    m: usize,
    #[arg(long, env = "JSK_REPS", default_value_t = jsk_core::sketch::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, env = "JSK_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "JSK_OUT")]
    out: PathBuf,
    #[arg(long, env = "JSK_METHOD", value_enum, default_value = "conv")]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Fft,
    Naive,
    Ams,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, env = "JSK_SKETCHES")]
    sketches: PathBuf,
    #[command(flatten)]
    query: QueryArg,
    /// Inference path; defaults to the one matching the file's method.
    #[arg(long, env = "JSK_PATH", value_enum)]
    path: Option<PathArg>,
    /// Root of the traversal: `auto`, an attribute id or `Relation.column`.
    #[arg(long, env = "JSK_ROOT", default_value = "auto")]
    root: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    query: QueryArg,
    /// Widths: `2^A..2^B` (every power of two, optional `:step` on the
    /// exponent) or a comma list.
    #[arg(long, env = "JSK_M_SWEEP", value_parser = parse_sweep)]
    m_sweep: Sweep,
    #[arg(long, env = "JSK_TRIALS", default_value_t = 30)]
    trials: usize,
    #[arg(long, env = "JSK_OUT")]
    out: PathBuf,
    #[arg(long, env = "JSK_METHODS", value_enum, value_delimiter = ',', default_value = "conv")]
    methods: Vec<MethodArg>,
    #[arg(long, env = "JSK_REPS", default_value_t = jsk_core::sketch::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, env = "JSK_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ThroughputArgs {
    #[command(flatten)]
    query: QueryArg,
    #[arg(long, env = "JSK_M_SWEEP", value_parser = parse_sweep)]
    m_sweep: Sweep,
    #[arg(
        long,
        env = "JSK_METHODS",
        value_enum,
        value_delimiter = ',',
        default_value = "conv,ams"
    )]
    methods: Vec<MethodArg>,
    #[arg(long, env = "JSK_REPS", default_value_t = jsk_core::sketch::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, env = "JSK_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, env = "JSK_OUT")]
    out: PathBuf,
    #[arg(long, env = "JSK_TUPLES", default_value_t = 20_000)]
    tuples: usize,
    #[arg(long, env = "JSK_DOMAIN", default_value_t = 100_000)]
    domain: u64,
    #[arg(long, env = "JSK_EXPONENT", default_value_t = 1.0)]
    exponent: f64,
    #[arg(long, env = "JSK_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Debug)]
struct Sweep(Vec<usize>);

fn parse_width(text: &str) -> Result<usize, String> {
    let text = text.trim();
    let m = if let Some(exp) = text.strip_prefix("2^") {
        let exp: u32 = exp.parse().map_err(|_| format!("bad exponent in `{text}`"))?;
        1usize
            .checked_shl(exp)
            .filter(|_| exp < usize::BITS)
            .ok_or(format!("`{text}` is too large"))?
    } else {
        text.parse()
            .map_err(|_| format!("`{text}` is neither an integer nor 2^k"))?
    };
    if m == 0 {
        return Err("width must be positive".into());
    }
    Ok(m)
}

fn parse_sweep(text: &str) -> Result<Sweep, String> {
    if let Some((range, step)) = text.split_once("..").map(|(a, b)| {
        let (b, step) = b.split_once(':').unwrap_or((b, "1"));
        ((a, b), step)
    }) {
        let exp = |s: &str| {
            s.trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse::<u32>().ok())
                .filter(|&e| e < usize::BITS)
                .ok_or(format!("range bounds must look like 2^k, got `{s}`"))
        };
        let (lo, hi) = (exp(range.0)?, exp(range.1)?);
        let step: usize = step
            .parse()
            .ok()
            .filter(|&s| s > 0)
            .ok_or(format!("bad step `{step}`"))?;
        if lo > hi {
            return Err(format!("empty sweep `{text}`"));
        }
        return Ok(Sweep((lo..=hi).step_by(step).map(|e| 1usize << e).collect()));
    }
    text.split(',')
        .map(parse_width)
        .collect::<Result<Vec<_>, _>>()
        .map(Sweep)
}

/// Failure carrying the process exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<jsk_core::Error>() {
        Some(e) if e.is_query_error() => 2,
        _ => 3,
    }
}

/// Writes to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn data_error(path: &Path, err: std::io::Error) -> jsk_core::Error {
    jsk_core::Error::Data {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn load_query(path: &Path) -> anyhow::Result<(QuerySpec, JoinGraph)> {
    let text = std::fs::read_to_string(path).map_err(|e| data_error(path, e))?;
    let mut query = parse_query(&text)?;
    query.resolve_sources(path.parent().unwrap_or(Path::new(".")));
    let graph = JoinGraph::build(&query)?;
    Ok((query, graph))
}

fn execution(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn cmd_sketch(args: &SketchArgs, exec: Execution) -> anyhow::Result<()> {
    let (query, graph) = load_query(&args.query.query)?;
    let method = Method::from(args.method);
    if method == Method::Ams && args.m >= AMS_WARN_M {
        warn!(
            "ams updates touch all {} counters of every repetition; expect a low update rate",
            args.m
        );
    }
    let config = SketchConfig::new(args.m, args.reps, args.seed, method)?;
    let start = Instant::now();
    let sketches = sketch_query(&query, &graph, config, exec)?;
    let secs = start.elapsed().as_secs_f64();
    let writes: u64 = sketches.iter().map(|s| s.writes()).sum();
    info!(
        "sketched {} relations in {secs:.3}s ({writes} counter writes)",
        sketches.len()
    );
    save_sketches(&args.out, &sketches)?;
    Ok(())
}

fn resolve_root(graph: &JoinGraph, root: &str) -> anyhow::Result<Option<usize>> {
    if root == "auto" {
        return Ok(None);
    }
    if let Ok(id) = root.parse::<usize>() {
        if id >= graph.num_attributes() {
            return Err(jsk_core::Error::InvalidQuery(format!("root attribute {id} does not exist")).into());
        }
        return Ok(Some(id));
    }
    graph
        .attribute_by_name(root)
        .map(Some)
        .ok_or_else(|| jsk_core::Error::InvalidQuery(format!("unknown root `{root}`")).into())
}

fn cmd_estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let (_, graph) = load_query(&args.query.query)?;
    let sketches = align_to_graph(load_sketches(&args.sketches)?, &graph)?;
    let Some(first) = sketches.first() else {
        return Err(jsk_core::Error::Mismatch("sketch file holds no sketches".into()).into());
    };
    let config = *first.config();
    let path = args.path.unwrap_or(match config.method {
        Method::Conv => PathArg::Fft,
        Method::Ams => PathArg::Ams,
    });
    let root = resolve_root(&graph, &args.root)?;
    let (report, path_name) = match path {
        PathArg::Fft => {
            let plan = traversal_plan(&graph, root)?;
            let options = EstimateOptions {
                kernel: Kernel::Fft,
                execution: Execution::default(),
            };
            (estimate_with(&sketches, &graph, &plan, options)?, "fft")
        }
        PathArg::Naive => (naive_report(&sketches, &graph)?, "naive"),
        PathArg::Ams => (ams_estimate(&sketches, &graph)?, "ams"),
    };
    let mut json = serde_json::to_value(&report)?;
    let obj = json.as_object_mut().expect("report serializes to an object");
    obj.insert("path".into(), path_name.into());
    obj.insert("m".into(), config.m.into());
    obj.insert("reps".into(), config.reps.into());
    obj.insert("seed".into(), config.seed.into());
    emit(&format!("{}\n", serde_json::to_string_pretty(&json)?))
}

fn cmd_exact(args: &QueryArg, exec: Execution) -> anyhow::Result<()> {
    let (query, graph) = load_query(&args.query)?;
    let relations = read_all(&query, &graph, exec)?;
    emit(&format!("{}\n", exact_cardinality(&relations, &graph)?))
}

fn methods(list: &[MethodArg]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for &m in list {
        if !out.contains(&m.into()) {
            out.push(m.into());
        }
    }
    out
}

fn cmd_bench(args: &BenchArgs, exec: Execution) -> anyhow::Result<()> {
    if args.trials == 0 {
        return Err(Usage("--trials must be positive".into()).into());
    }
    let (query, graph) = load_query(&args.query.query)?;
    let relations = read_all(&query, &graph, exec)?;
    let config = BenchConfig {
        methods: methods(&args.methods),
        widths: args.m_sweep.0.clone(),
        trials: args.trials,
        reps: args.reps,
        seed: args.seed,
        execution: exec,
    };
    let report = run_bench(&relations, &graph, &config)?;
    let file = File::create(&args.out).map_err(|e| data_error(&args.out, e))?;
    report.write_csv(BufWriter::new(file))?;
    for s in &report.summaries {
        info!(
            "{} m={}: median ARE {:.4}, p95 {:.4}",
            s.method, s.m, s.median_are, s.p95_are
        );
    }
    for s in &report.slopes {
        match s.slope {
            Some(v) => info!("{} log-log slope {v:.3}", s.method),
            None => info!("{} log-log slope undefined", s.method),
        }
    }
    Ok(())
}

fn cmd_throughput(args: &ThroughputArgs, exec: Execution) -> anyhow::Result<()> {
    let (query, graph) = load_query(&args.query.query)?;
    let relations = read_all(&query, &graph, exec)?;
    let k = largest_relation(&relations).ok_or_else(|| anyhow!("query has no relations"))?;
    let mut out = String::new();
    writeln!(
        out,
        "relation {} ({} updates)",
        graph.relation_names()[k],
        relations[k].len()
    )?;
    writeln!(out, "{:<6} {:>10} {:>12} {:>16}", "method", "m", "seconds", "updates/s")?;
    for method in methods(&args.methods) {
        for &m in &args.m_sweep.0 {
            if method == Method::Ams && m >= AMS_WARN_M {
                warn!("ams at m={m} touches every counter per update; this may take a while");
            }
            let config = SketchConfig::new(m, args.reps, args.seed, method)?;
            let row = measure_throughput(&relations[k], &graph, k, config)?;
            writeln!(
                out,
                "{:<6} {:>10} {:>12.4} {:>16.0}",
                row.method, row.m, row.seconds, row.rate
            )?;
        }
    }
    emit(&out)
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    if args.domain == 0 || args.exponent.is_nan() || args.exponent <= 0.0 {
        bail!(Usage("--domain and --exponent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let workload = zipf_chain(&mut rng, args.tuples, args.domain, args.exponent)?;
    write_workload(&args.out, &workload)?;
    info!("wrote {}", args.out.join("query.json").display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let exec = execution(cli);
    match &cli.command {
        Command::Sketch(a) => cmd_sketch(a, exec),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Exact(a) => cmd_exact(a, exec),
        Command::Bench(a) => cmd_bench(a, exec),
        Command::Throughput(a) => cmd_throughput(a, exec),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
