use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use echonav::control::BranchSetup;
use echonav::corpus::{
    direction_accuracy, generate_pairs, snap_trajectory, synthetic_graph, CorpusError, OffsetModel,
    Snap, SparseGraph,
};
use echonav::env::{load_map, Heading};
use echonav::harness::session::{serve_episodes, SessionServer};
use echonav::harness::{
    ablate_branch, ablate_delta, curve_csv, resolve_policy, run_benchmark, sweep_limit, train,
    Experiment, ExperimentConfig, HarnessError, Report, SelectorSource,
};
use echonav::metrics::analyze_logs;
use echonav::oracle::OracleMode;
use echonav::rng::{stream, Stream};

#[derive(Parser)]
#[command(
    name = "echonav",
    version,
    about = "Interactive audio-goal navigation: benchmark, training, ablations and oracle sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory for reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Option selector: trained, random, random-early, uniform, model-uncertainty, nav-only.
    #[arg(long)]
    selector: Option<String>,
    /// Trained selector weights (JSON).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Branch setup: 3-branch, 2-branch-l, 2-branch-ques-with-instr, 2-branch-ques-weak.
    #[arg(long)]
    branch: Option<String>,
    /// Oracle mode: scripted, noisy, gt-actions.
    #[arg(long)]
    oracle: Option<String>,
    /// Hard interaction budget per episode.
    #[arg(long)]
    budget: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a selector on the test split.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the selector per seed; writes weights, learning curves and a test report.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Retrain and evaluate for each question-penalty weight.
    AblateDelta {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare branch setups and instruction feedback modes.
    AblateBranch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate under each hard budget in `limits`.
    SweepLimit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Snap a waypoint trajectory onto a grid map.
    Align {
        /// Grid map file.
        #[arg(long)]
        map: PathBuf,
        /// Waypoint graph (JSON with `nodes` and `edges`); omit with --synthetic.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Node indices to follow; defaults to all nodes in order.
        #[arg(long, value_delimiter = ',')]
        path: Vec<usize>,
        /// Rejection threshold in meters.
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        /// Instead of a graph, snap this many single nodes with uniform in-cell offsets and report the rejection rate.
        #[arg(long)]
        synthetic: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate (goal vector, actions, message) triples from the config's maps.
    GenPairs {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; one tab-separated record per line.
        #[arg(long, default_value = "pairs.tsv")]
        out: PathBuf,
    },
    /// Run test episodes with a human oracle connected over a local socket.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Number of test episodes to serve.
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    HarnessError::Config(msg.into()).into()
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| config_error(format!("unknown {what} {value:?}")))
}

fn load_config(common: &Common, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    if let Some(s) = &overrides.selector {
        cfg.selector = parse_enum::<SelectorSource>("selector", s)?;
    }
    if let Some(w) = &overrides.weights {
        cfg.weights = Some(w.clone());
        cfg.selector = SelectorSource::Trained;
    }
    if let Some(b) = &overrides.branch {
        cfg.branch = parse_enum::<BranchSetup>("branch", b)?;
    }
    if let Some(o) = &overrides.oracle {
        cfg.oracle.mode = parse_enum::<OracleMode>("oracle mode", o)?;
        if cfg.oracle.mode == OracleMode::Human {
            bail!(config_error(
                "the human oracle is only available through `serve`"
            ));
        }
    }
    if let Some(b) = overrides.budget {
        cfg.penalty.budget = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn emit(command: &str, cfg: &ExperimentConfig, out: &Path, exp: &Experiment) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = Report::new(command, cfg, exp);
    write(out, &format!("{command}.csv"), &report.to_csv())?;
    write(out, &format!("{command}.txt"), &report.to_text())?;
    if !exp.trained.is_empty() {
        write(
            out,
            &format!("{command}_curve.csv"),
            &curve_csv(&exp.trained),
        )?;
        for (tag, seed, r) in &exp.trained {
            let name = format!(
                "weights_{}_seed{seed}.json",
                tag.replace(['=', '/', ' '], "_")
            );
            write(out, &name, &serde_json::to_string_pretty(&r.params)?)?;
        }
    }
    let logs: Vec<_> = exp
        .evaluations
        .iter()
        .flat_map(|e| e.logs.iter().cloned())
        .collect();
    if !logs.is_empty() {
        let a = analyze_logs(&logs)?;
        write(
            out,
            &format!("{command}_confidence.csv"),
            &a.confidence_csv(),
        )?;
        write(out, &format!("{command}_timing.csv"), &a.timing_csv())?;
    }
    print!(
        "{}",
        report
            .to_text()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}

fn align(
    map: &Path,
    graph: Option<&Path>,
    path: &[usize],
    eps: f64,
    synthetic: Option<u32>,
    seed: u64,
) -> Result<()> {
    let text =
        fs::read_to_string(map).map_err(|e| config_error(format!("{}: {e}", map.display())))?;
    let grid = load_map(&text).map_err(|e| config_error(format!("{}: {e}", map.display())))?;
    if let Some(n) = synthetic {
        let mut rng = stream(seed, Stream::Corpus);
        let cells: Vec<_> = grid.free_cells().collect();
        if cells.is_empty() {
            bail!(config_error("map has no free cells"));
        }
        let mut rejected = 0u32;
        for i in 0..n {
            let g = synthetic_graph(
                &[cells[i as usize % cells.len()]],
                grid.cell_spacing(),
                OffsetModel::UniformCell,
                &mut rng,
            )?;
            if matches!(
                snap_trajectory(&g, &[0], &grid, eps, Heading::East)?,
                Snap::Rejected { .. }
            ) {
                rejected += 1;
            }
        }
        println!(
            "rejected {rejected} of {n} ({:.4})",
            f64::from(rejected) / f64::from(n.max(1))
        );
        return Ok(());
    }
    let Some(gpath) = graph else {
        bail!(config_error("align needs --graph or --synthetic"));
    };
    let g: SparseGraph = serde_json::from_str(&fs::read_to_string(gpath)?)
        .map_err(|e| config_error(format!("{}: {e}", gpath.display())))?;
    let g = SparseGraph::new(g.nodes, g.edges)?;
    let order: Vec<usize> = if path.is_empty() {
        (0..g.nodes.len()).collect()
    } else {
        path.to_vec()
    };
    match snap_trajectory(&g, &order, &grid, eps, Heading::East)? {
        Snap::Accepted {
            cells,
            actions,
            max_error,
        } => {
            let cells: Vec<String> = cells.iter().map(ToString::to_string).collect();
            println!("accepted max_error={max_error:.5}");
            println!("cells {}", cells.join(" "));
            println!("actions {}", echonav::env::action_string(&actions));
        }
        Snap::Rejected { max_error } => println!("rejected max_error={max_error:.5}"),
    }
    Ok(())
}

fn gen_pairs(config: Option<&Path>, n: usize, seed: u64, out: &Path) -> Result<()> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let maps = cfg.load_maps()?;
    let triples = generate_pairs(&maps, n, cfg.penalty.nu as usize, seed)?;
    let mut body = format!(
        "# echonav gen-pairs n={n} seed={seed} nu={}\n",
        cfg.penalty.nu
    );
    for t in &triples {
        body.push_str(&t.to_string());
        body.push('\n');
    }
    fs::write(out, body).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} triples, direction accuracy {:.4}",
        triples.len(),
        direction_accuracy(&triples, &maps)
    );
    Ok(())
}

fn serve(
    host: &str,
    port: u16,
    episodes: usize,
    common: &Common,
    overrides: &Overrides,
) -> Result<()> {
    let cfg = load_config(common, overrides)?;
    let suite = cfg.suite()?;
    let seed = cfg.seeds[0];
    let run_cfg = cfg.run_config();
    let (policy, _) = resolve_policy(&cfg, &suite, &run_cfg, seed)?;
    let worlds = &suite.test[..episodes.min(suite.test.len())];
    let server =
        SessionServer::bind((host, port)).with_context(|| format!("binding {host}:{port}"))?;
    println!("waiting for an operator on {}", server.local_addr()?);
    let session = server.accept()?;
    let logs = serve_episodes(session, worlds, &policy, &cfg.oracle, &run_cfg, seed)?;
    let ok = logs.iter().filter(|l| l.outcome.success).count();
    println!("served {} episodes, {ok} successful", logs.len());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let experiment = |name: &str,
                      common: &Common,
                      overrides: &Overrides,
                      f: fn(&ExperimentConfig) -> Result<Experiment, HarnessError>|
     -> Result<()> {
        let cfg = load_config(common, overrides)?;
        let exp = f(&cfg)?;
        emit(name, &cfg, &common.out, &exp)
    };
    match cli.command {
        Command::Run { common, overrides } => experiment("run", &common, &overrides, run_benchmark),
        Command::Train { common, overrides } => experiment("train", &common, &overrides, train),
        Command::AblateDelta { common, overrides } => {
            experiment("ablate-delta", &common, &overrides, ablate_delta)
        }
        Command::AblateBranch { common, overrides } => {
            experiment("ablate-branch", &common, &overrides, ablate_branch)
        }
        Command::SweepLimit { common, overrides } => {
            experiment("sweep-limit", &common, &overrides, sweep_limit)
        }
        Command::Align {
            map,
            graph,
            path,
            eps,
            synthetic,
            seed,
        } => align(&map, graph.as_deref(), &path, eps, synthetic, seed),
        Command::GenPairs {
            config,
            n,
            seed,
            out,
        } => gen_pairs(config.as_deref(), n, seed, &out),
        Command::Serve {
            port,
            host,
            episodes,
            common,
            overrides,
        } => serve(&host, port, episodes, &common, &overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e
                .downcast_ref::<HarnessError>()
                .is_some_and(HarnessError::is_config)
                || e.downcast_ref::<CorpusError>().is_some_and(|c| {
                    matches!(
                        c,
                        CorpusError::BadTolerance(_)
                            | CorpusError::InvalidGraph
                            | CorpusError::UnknownNode(_)
                    )
                });
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}
