//! `orientcorr`: exact verifiers, sign search, bunkbed check and Monte Carlo
//! estimates from the command line.
//!
//! Exit codes: 0 all checks held, 1 usage or input error, 2 a verified
//! inequality was violated, 3 a bunkbed violation was found.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use orientcorr::cluster::{cluster_distribution_from_table, joint_distribution_from_table};
use orientcorr::events::{make_reachability_family, EdgeUpwardFamily, ReachPredicate, UpwardClosedFamily};
use orientcorr::graph::connected_labeled_graphs;
use orientcorr::montecarlo::estimate_event;
use orientcorr::report::{sha256_hex, Entry, RunReport};
use orientcorr::verify::{self, SignMode, SweepSummary};
use orientcorr::{Caps, ClusterTable, Graph, InequalityReport, ModelSpec, Rational, VertexSet};

#[derive(Parser, Debug)]
#[command(name = "orientcorr", version, about = "Exact cluster laws and correlation inequalities on small graphs")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for enumeration and sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Largest state space any exhaustive enumeration may visit.
    #[arg(long, global = true, default_value_t = orientcorr::models::DEFAULT_MAX_STATES)]
    max_states: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check one identity or inequality.
    Verify {
        #[command(subcommand)]
        which: VerifyCommand,
    },
    /// Exact out-cluster law of `--u`, or the joint law with the in-cluster of `--v`.
    Dist {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: String,
    },
    /// Search for strictly signed correlations.
    Search {
        #[command(subcommand)]
        which: SearchCommand,
    },
    /// Bunkbed inequality on `G × K2`.
    Bunkbed {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1/2")]
        p: String,
    },
    /// Monte Carlo estimate of an event probability.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Single-cluster law equality across models and the recursion.
    Lemma1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1/2")]
        p: String,
    },
    /// Two-cluster law equality; roots `--u` and `--v`.
    Lemma2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1/2")]
        p: String,
    },
    /// Classical Harris inequality for two `edges:` events.
    Harris {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1/2")]
        p: String,
    },
    /// Harris inequality for out-cluster events in the random orientation.
    OrientedHarris {
        #[command(flatten)]
        common: Common,
    },
    /// Avoidance-set generalization of the oriented Harris inequality.
    OrientedVdbhk {
        #[command(flatten)]
        common: Common,
    },
    /// The three path-correlation inequalities.
    Corollaries {
        #[command(flatten)]
        common: Common,
    },
    /// Mixed-model reductions to the orientation and directed models.
    Mixed {
        #[command(flatten)]
        common: Common,
        /// Probability that an edge is undirected-or-absent.
        #[arg(long, default_value = "1/2")]
        pp: String,
        #[arg(long, default_value = "1/2")]
        p: String,
    },
}

#[derive(Subcommand, Debug)]
enum SearchCommand {
    /// Covariance signs over every labeled graph on `--n` vertices.
    Signs {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::AToS)]
        mode: ModeArg,
        /// Condition on `s` not reaching `t`.
        #[arg(long)]
        conditioned: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    AToS,
    AInInClusterT,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Edge-list file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Sweep every connected labeled graph on up to this many vertices instead of `--graph`.
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// Comma-separated vertex names.
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    /// Event string; repeat for two events.
    #[arg(long)]
    event: Vec<String>,
}

type CliResult<T> = Result<T, String>;

fn lib<T>(r: orientcorr::Result<T>) -> CliResult<T> {
    r.map_err(|e| e.to_string())
}

struct Ctx {
    caps: Caps,
    inputs: Vec<u8>,
}

impl Ctx {
    fn load_graph(&mut self, common: &Common) -> CliResult<Graph> {
        let path = common.graph.as_ref().ok_or("--graph is required")?;
        let bytes = std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        self.inputs.extend_from_slice(&bytes);
        self.inputs.push(0);
        let text = String::from_utf8(bytes).map_err(|_| format!("{} is not UTF-8", path.display()))?;
        Graph::parse_edge_list(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn vertex(g: &Graph, flag: &str, value: &Option<String>) -> CliResult<usize> {
    let name = value.as_ref().ok_or_else(|| format!("--{flag} is required"))?;
    g.index_of(name).map_err(|e| e.to_string())
}

fn vertex_set(g: &Graph, value: &Option<String>) -> CliResult<VertexSet> {
    match value.as_deref() {
        None | Some("") => Ok(VertexSet::EMPTY),
        Some(list) => {
            let names: Vec<&str> = list.split(',').map(str::trim).collect();
            g.set_of(&names).map_err(|e| e.to_string())
        }
    }
}

fn rational(text: &str) -> CliResult<Rational> {
    text.parse::<Rational>().map_err(|e| format!("`{text}`: {e}"))
}

fn model(text: &str) -> CliResult<ModelSpec> {
    text.parse::<ModelSpec>().map_err(|e| e.to_string())
}

fn sweep_graphs(n: usize) -> CliResult<Vec<Graph>> {
    if !(1..=6).contains(&n) {
        return Err(format!("--sweep supports 1..=6 vertices, got {n}"));
    }
    let mut graphs = Vec::new();
    for k in 1..=n {
        graphs.extend(connected_labeled_graphs(k, k * (k - 1) / 2).map_err(|e| e.to_string())?);
    }
    Ok(graphs)
}

fn sweep_entry(name: &str, summary: orientcorr::Result<SweepSummary>) -> CliResult<Vec<Entry>> {
    Ok(vec![Entry::Sweep { name: name.to_string(), summary: lib(summary)? }])
}

fn inequalities(reports: Vec<InequalityReport>) -> Vec<Entry> {
    reports.into_iter().map(Entry::Inequality).collect()
}

/// Two out-cluster families rooted at `s`: from `--event` twice, or `{s→a}`, `{s→b}`.
fn families(g: &Graph, s: usize, common: &Common) -> CliResult<(UpwardClosedFamily, UpwardClosedFamily)> {
    match common.event.as_slice() {
        [] => {
            let a = vertex(g, "a", &common.a)?;
            let b = vertex(g, "b", &common.b)?;
            Ok((make_reachability_family(s, VertexSet::singleton(a)), make_reachability_family(s, VertexSet::singleton(b))))
        }
        [ea, eb] => {
            let fa = lib(ReachPredicate::parse(ea, g).and_then(|p| p.to_out_family(s)))?;
            let fb = lib(ReachPredicate::parse(eb, g).and_then(|p| p.to_out_family(s)))?;
            Ok((fa, fb))
        }
        _ => Err("give --event exactly twice, or --a and --b".into()),
    }
}

fn run_verify(ctx: &mut Ctx, which: &VerifyCommand) -> CliResult<Vec<Entry>> {
    let caps = ctx.caps;
    match which {
        VerifyCommand::Lemma1 { common, p } => {
            let p = rational(p)?;
            if let Some(n) = common.sweep {
                return sweep_entry("lemma1", verify::sweep_lemma1(&sweep_graphs(n)?, &p, &caps));
            }
            let g = ctx.load_graph(common)?;
            let u = vertex(&g, "u", &common.u)?;
            Ok(inequalities(lib(verify::verify_lemma1(&g, u, &p, &caps))?))
        }
        VerifyCommand::Lemma2 { common, p } => {
            let p = rational(p)?;
            if let Some(n) = common.sweep {
                return sweep_entry("lemma2", verify::sweep_lemma2(&sweep_graphs(n)?, &p, &caps));
            }
            let g = ctx.load_graph(common)?;
            let u = vertex(&g, "u", &common.u)?;
            let w = vertex(&g, "v", &common.v)?;
            Ok(inequalities(lib(verify::verify_lemma2(&g, u, w, &p, &caps))?))
        }
        VerifyCommand::Harris { common, p } => {
            let p = rational(p)?;
            if let Some(n) = common.sweep {
                return sweep_entry("harris", verify::sweep_harris_classical(&sweep_graphs(n)?, &p, &caps));
            }
            let g = ctx.load_graph(common)?;
            let [ea, eb] = common.event.as_slice() else {
                return Err("harris needs --event edges:... exactly twice".into());
            };
            let fa = lib(EdgeUpwardFamily::parse(ea))?;
            let fb = lib(EdgeUpwardFamily::parse(eb))?;
            Ok(vec![Entry::Inequality(lib(verify::verify_harris_classical(&g, &p, &fa, &fb, &caps))?)])
        }
        VerifyCommand::OrientedHarris { common } => {
            if let Some(n) = common.sweep {
                return sweep_entry("oriented", verify::sweep_oriented(&sweep_graphs(n)?, 0, &caps));
            }
            let g = ctx.load_graph(common)?;
            let s = vertex(&g, "s", &common.s)?;
            let (fa, fb) = families(&g, s, common)?;
            Ok(vec![Entry::Inequality(lib(verify::verify_oriented_harris(&g, s, &fa, &fb, &caps))?)])
        }
        VerifyCommand::OrientedVdbhk { common } => {
            if let Some(n) = common.sweep {
                return sweep_entry("oriented", verify::sweep_oriented(&sweep_graphs(n)?, 2, &caps));
            }
            let g = ctx.load_graph(common)?;
            let s = vertex(&g, "s", &common.s)?;
            let (fa, fb) = families(&g, s, common)?;
            let x = vertex_set(&g, &common.x)?;
            let y = vertex_set(&g, &common.y)?;
            Ok(vec![Entry::Inequality(lib(verify::verify_oriented_vdbhk(&g, s, &fa, &fb, x, y, &caps))?)])
        }
        VerifyCommand::Corollaries { common } => {
            if let Some(n) = common.sweep {
                return sweep_entry("corollaries", verify::sweep_corollaries(&sweep_graphs(n)?, &caps));
            }
            let g = ctx.load_graph(common)?;
            let s = vertex(&g, "s", &common.s)?;
            let a = vertex(&g, "a", &common.a)?;
            let b = vertex(&g, "b", &common.b)?;
            let t = vertex(&g, "t", &common.t)?;
            Ok(inequalities(lib(verify::verify_corollaries(&g, s, a, b, t, &caps))?))
        }
        VerifyCommand::Mixed { common, pp, p } => {
            let (pp, p) = (rational(pp)?, rational(p)?);
            if let Some(n) = common.sweep {
                return sweep_entry("mixed", verify::sweep_mixed(&sweep_graphs(n)?, &[pp], &[p], &caps));
            }
            let g = ctx.load_graph(common)?;
            let u = vertex(&g, "u", &common.u)?;
            Ok(inequalities(lib(verify::verify_mixed_model(&g, u, &pp, &p, &caps))?))
        }
    }
}

/// Runs the command; returns its entries and the number of skipped instances.
fn run(ctx: &mut Ctx, command: &Command) -> CliResult<(Vec<Entry>, u64)> {
    let caps = ctx.caps;
    match command {
        Command::Verify { which } => Ok((run_verify(ctx, which)?, 0)),
        Command::Dist { common, model: m } => {
            let g = ctx.load_graph(common)?;
            let m = model(m)?;
            let u = vertex(&g, "u", &common.u)?;
            let law = match &common.v {
                None => {
                    let t = lib(ClusterTable::build(&g, &m, VertexSet::singleton(u), VertexSet::EMPTY, &caps))?;
                    lib(cluster_distribution_from_table(&t, &g, &m, u))?.to_json(&g)
                }
                Some(_) => {
                    let w = vertex(&g, "v", &common.v)?;
                    let t = lib(ClusterTable::build(&g, &m, VertexSet::singleton(u), VertexSet::singleton(w), &caps))?;
                    lib(joint_distribution_from_table(&t, &g, &m, u, w))?.to_json(&g)
                }
            };
            Ok((vec![Entry::Distribution { law }], 0))
        }
        Command::Search { which: SearchCommand::Signs { n, mode, conditioned } } => {
            let mode = match mode {
                ModeArg::AToS => SignMode::AToS,
                ModeArg::AInInClusterT => SignMode::AInInClusterT,
            };
            let (found, skipped) = lib(verify::search_correlation_signs_counted(*n, mode, *conditioned, &caps))?;
            Ok((found.into_iter().map(Entry::Sign).collect(), skipped))
        }
        Command::Bunkbed { common, p } => {
            let p = rational(p)?;
            if let Some(n) = common.sweep {
                return Ok((sweep_entry("bunkbed", verify::sweep_bunkbed(&sweep_graphs(n)?, &p, &caps))?, 0));
            }
            let g = ctx.load_graph(common)?;
            let u = vertex(&g, "u", &common.u)?;
            let v = vertex(&g, "v", &common.v)?;
            Ok((inequalities(lib(verify::bunkbed_check(&g, u, v, &p, &caps))?), 0))
        }
        Command::Mc { common, model: m, samples, seed } => {
            let g = ctx.load_graph(common)?;
            let m = model(m)?;
            let [event] = common.event.as_slice() else {
                return Err("mc needs exactly one --event".into());
            };
            let pred = lib(ReachPredicate::parse(event, &g))?;
            let est = lib(estimate_event(&g, &m, &pred, *samples, *seed))?;
            Ok((vec![Entry::Estimate(est)], 0))
        }
    }
}

fn subcommand_name(command: &Command) -> String {
    match command {
        Command::Verify { which } => {
            let w = match which {
                VerifyCommand::Lemma1 { .. } => "lemma1",
                VerifyCommand::Lemma2 { .. } => "lemma2",
                VerifyCommand::Harris { .. } => "harris",
                VerifyCommand::OrientedHarris { .. } => "oriented-harris",
                VerifyCommand::OrientedVdbhk { .. } => "oriented-vdbhk",
                VerifyCommand::Corollaries { .. } => "corollaries",
                VerifyCommand::Mixed { .. } => "mixed",
            };
            format!("verify {w}")
        }
        Command::Dist { .. } => "dist".into(),
        Command::Search { .. } => "search signs".into(),
        Command::Bunkbed { .. } => "bunkbed".into(),
        Command::Mc { .. } => "mc".into(),
    }
}

fn exit_code(command: &Command, entries: &[Entry]) -> u8 {
    let mut code = 0;
    for e in entries {
        let failed: Vec<&str> = match e {
            Entry::Inequality(r) if !r.holds => vec![r.name.as_str()],
            Entry::Sweep { summary, .. } => summary.violations.iter().map(|r| r.name.as_str()).collect(),
            _ => vec![],
        };
        for name in failed {
            if matches!(command, Command::Bunkbed { .. }) && name == "bunkbed" {
                code = code.max(3);
            } else {
                return 2;
            }
        }
    }
    code
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
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    let start = Instant::now();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut ctx = Ctx { caps: Caps { max_states: cli.max_states }, inputs: args.join("\0").into_bytes() };
    ctx.inputs.push(0);
    let (entries, skipped) = match run(&mut ctx, &cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let code = exit_code(&cli.command, &entries);
    let report = RunReport::new(
        &subcommand_name(&cli.command),
        sha256_hex(&ctx.inputs),
        entries,
        skipped,
        start.elapsed().as_secs_f64(),
    );
    match cli.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text()),
    }
    ExitCode::from(code)
}
