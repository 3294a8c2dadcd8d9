use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beepnet::graphs::{generate, Family, GraphSpec};
use beepnet::harness::{
    bench, run, seeded_messages, seeded_params, verify, write_csv, BenchConfig, Params, Protocol,
    RunError, Suite,
};
use beepnet::{BitString, Graph, NodeId, Round, Trace};
use clap::{Args, Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

/// Beep-model network simulator.
#[derive(Parser)]
#[command(name = "beepnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol on one graph.
    Run(RunArgs),
    /// Run a protocol over a sweep of graphs and write CSV rows.
    Bench(BenchArgs),
    /// Run invariant suites and print a pass/fail table.
    Verify {
        /// codec, waves, traversal, multicast or all.
        suite: Suite,
    },
}

#[derive(Args)]
struct GraphArgs {
    /// Graph spec such as `path:n=10` or `er:n=25,p=0.2,seed=7`.
    #[arg(long, conflicts_with = "graph_file")]
    graph: Option<GraphSpec>,
    /// Edge-list file: a header `n <count>`, then one `u v` pair per line.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// Draw ids from 0..L instead of 0..n.
    #[arg(long)]
    label_range: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    protocol: Protocol,
    #[command(flatten)]
    graph: GraphArgs,
    /// Message of the source, or of every node in `--sources`.
    #[arg(long)]
    message: Option<BitString>,
    /// Source id for a single message.
    #[arg(long)]
    source: Option<u64>,
    /// Explicit source messages as `id=bits` pairs.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    messages: Vec<(NodeId, BitString)>,
    /// Source ids; messages are random unless `--message` is given.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<u64>,
    /// Number of random sources with random messages.
    #[arg(long)]
    k: Option<usize>,
    /// Longest random message, and the collection width for `collect`.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    leader: Option<u64>,
    #[arg(long)]
    dhat: Option<u64>,
    #[arg(long)]
    lhat: Option<u64>,
    /// Seed for random messages.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_rounds: Option<Round>,
    /// Write the round-by-round trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    protocol: Protocol,
    /// Graph specs to sweep; may be repeated.
    #[arg(long)]
    graph: Vec<GraphSpec>,
    /// Family to sweep over `--sizes`.
    #[arg(long, value_parser = parse_family)]
    family: Vec<Family>,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Source counts; random when omitted.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Longest random message.
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(NodeId, BitString), String> {
    let (id, bits) = s.split_once('=').ok_or("expected id=bits")?;
    let id = id.trim().parse().map_err(|_| format!("bad id {id:?}"))?;
    let bits = bits.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((NodeId(id), bits))
}

fn parse_family(s: &str) -> Result<Family, String> {
    format!("{s}:n=1")
        .parse::<GraphSpec>()
        .map(|spec| spec.family)
        .map_err(|e| e.to_string())
}

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
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = if e.is_usage() {
            EXIT_USAGE
        } else if e.is_timeout() {
            EXIT_TIMEOUT
        } else {
            EXIT_FAILURE
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load_graph(args: &GraphArgs) -> Result<Graph, Failure> {
    match (&args.graph, &args.graph_file) {
        (Some(spec), None) => {
            let mut spec = spec.clone();
            if let Some(l) = args.label_range {
                spec = spec.with_label_range(l);
            }
            generate(&spec).map_err(|e| Failure::usage(e.to_string()))
        }
        (None, Some(path)) => {
            let file =
                File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            Graph::read_edge_list(BufReader::new(file)).map_err(|e| Failure::usage(e.to_string()))
        }
        _ => Err(Failure::usage(
            "give exactly one of --graph and --graph-file",
        )),
    }
}

fn messages(args: &RunArgs, graph: &Graph) -> Result<BTreeMap<NodeId, BitString>, Failure> {
    let max_len = args.p.unwrap_or(4);
    if !args.messages.is_empty() {
        return Ok(args.messages.iter().cloned().collect());
    }
    if !args.sources.is_empty() {
        let ids: Vec<NodeId> = args.sources.iter().map(|&s| NodeId(s)).collect();
        return Ok(match &args.message {
            Some(m) => ids.into_iter().map(|id| (id, m.clone())).collect(),
            None => seeded_messages(&ids, max_len, args.seed),
        });
    }
    if let Some(k) = args.k {
        if k == 0 {
            return Err(Failure::usage("--k must be at least 1"));
        }
        return Ok(seeded_params(args.protocol, graph, Some(k), max_len, args.seed).messages);
    }
    if let Some(m) = &args.message {
        let source = args
            .source
            .map_or(graph.sorted_ids().next().unwrap(), NodeId);
        return Ok(BTreeMap::from([(source, m.clone())]));
    }
    if args.protocol == Protocol::Gossip {
        return Ok(seeded_messages(graph.ids(), max_len, args.seed));
    }
    Ok(BTreeMap::new())
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), Failure> {
    let file =
        File::create(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    trace
        .write_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: format!("writing trace: {e}"),
        })
}

fn run_command(args: RunArgs) -> Result<(), Failure> {
    let graph = load_graph(&args.graph)?;
    let params = Params {
        messages: messages(&args, &graph)?,
        leader: args.leader.map(NodeId),
        d_hat: args.dhat,
        l_hat: args.lhat,
        p: args.p.filter(|_| args.protocol == Protocol::Collect),
        max_rounds: args.max_rounds,
    };
    let result = match run(args.protocol, &graph, &params) {
        Ok(r) => r,
        Err(e) => {
            if let (Some(path), Some(trace)) = (&args.trace, e.partial_trace()) {
                write_trace(path, trace)?;
            }
            return Err(e.into());
        }
    };
    if let Some(path) = &args.trace {
        write_trace(path, &result.trace)?;
    }
    let s = &result.summary;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(
        out,
        "protocol {}  n={} D={} L={} k={} p={}",
        s.protocol, s.n, s.d, s.l, s.k, s.p
    );
    for (id, o) in &s.outputs {
        let _ = writeln!(out, "node {id:>4}: {o}");
    }
    let _ = writeln!(out, "total rounds: {}", s.measured_rounds);
    for b in &s.bound_checks {
        let verdict = if b.pass { "pass" } else { "FAIL" };
        let _ = writeln!(
            out,
            "bound {:<6} measured {} vs {:.1}: {verdict}",
            b.name, b.measured, b.bound
        );
    }
    for f in &s.failures {
        let _ = writeln!(out, "FAIL {f}");
    }
    if s.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILURE,
            message: "run failed its checks".into(),
        })
    }
}

fn bench_command(args: BenchArgs) -> Result<(), Failure> {
    let mut specs = args.graph;
    for &family in &args.family {
        for &n in &args.sizes {
            specs.push(GraphSpec::new(family, n, args.seed));
        }
    }
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let cfg = BenchConfig {
        protocol: args.protocol,
        specs,
        trials: args.trials,
        ks: args.k,
        p: args.p,
        seed: args.seed,
    };
    let (rows, err) = bench(&cfg);
    let written = match &args.csv {
        Some(path) => File::create(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
            .and_then(|f| write_csv(&rows, BufWriter::new(f)).map_err(csv_failure)),
        None => write_csv(&rows, io::stdout().lock()).map_err(csv_failure),
    };
    written?;
    match err {
        Some(e) => Err(e.into()),
        None => {
            eprintln!("{} rows", rows.len());
            Ok(())
        }
    }
}

fn csv_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: format!("writing CSV: {e}"),
    }
}

fn verify_command(suite: Suite) -> Result<(), Failure> {
    let results = verify(suite);
    println!("{:<10} {:<45} {:>6}  result", "suite", "check", "cases");
    let mut failed = 0;
    for r in &results {
        let verdict = if r.pass() { "pass" } else { "FAIL" };
        println!(
            "{:<10} {:<45} {:>6}  {verdict}",
            r.suite.name(),
            r.name,
            r.cases
        );
        for f in r.failures.iter().take(3) {
            println!("    {f}");
        }
        failed += usize::from(!r.pass());
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILURE,
            message: format!("{failed} of {} checks failed", results.len()),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Bench(args) => bench_command(args),
        Command::Verify { suite } => verify_command(suite),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
