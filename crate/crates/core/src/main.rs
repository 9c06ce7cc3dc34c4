use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use layoutgraph::autocomplete::{RefineConfig, Suggester};
use layoutgraph::error::LayoutError;
use layoutgraph::eval::{
    evaluate, gen_synthetic, make_pairs, read_dataset, read_pairs, write_dataset, write_pairs, CenterPlacer, ChunkMode,
    ModelPlacer, OracleConstraintPlacer, OraclePlacer, Placer, SynthConfig,
};
use layoutgraph::extract::{extract_placed, ExtractionConfig};
use layoutgraph::model::{constraints_to_json, gui_from_json_with, Gui, Vocabulary};
use layoutgraph::network::{CorpusStats, Network, NetworkConfig};
use layoutgraph::objective::LossWeights;
use layoutgraph::service::{self, AppState, DEFAULT_PORT};
use layoutgraph::tasks::{classify, embed, Distance, EmbeddingIndex};
use layoutgraph::train::{
    autocomplete_samples, classify_samples, corpus_hash, max_canvas_side, train_autocomplete, train_classifier,
    TrainConfig,
};

#[derive(Parser)]
#[command(name = "layoutgraph", version, about = "Layout graphs, training and autocompletion")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// JSON config file mirroring flag names (also LAYOUTGRAPH_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic corpus, one JSON file per GUI.
    GenSynthetic {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the constraints of a GUI's placed elements.
    ExtractConstraints {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<i64>,
    },
    /// Draw (partial, target) pairs from a corpus.
    Pairs {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Keep uniform random subsets instead of contiguous chunks.
        #[arg(long)]
        uniform: bool,
    },
    /// Train a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        node_dim: Option<usize>,
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Loss log (default: `--out` with a `.csv` extension).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate placers on a pair file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated: model, center, oracle, oracle-constraints.
        #[arg(long, default_value = "model,center")]
        placers: String,
    },
    /// Suggest placements for a GUI's unplaced elements.
    Suggest {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gui: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Predict a GUI's topic.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gui: PathBuf,
    },
    /// Build a nearest-neighbour index over a corpus.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        distance: Option<DistanceArg>,
    },
    /// Nearest GUIs to a query.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gui: PathBuf,
        #[arg(short)]
        k: Option<usize>,
        /// Index id to leave out (the query's own entry).
        #[arg(long)]
        exclude: Option<String>,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
        /// Write a JSON snapshot of each session after every event.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TaskArg {
    Autocomplete,
    Classify,
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DistanceArg {
    Euclidean,
    Cosine,
}

#[derive(Clone, Copy, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    #[default]
    Single,
    Group,
    All,
}

/// Values from the config file; flags win, then these, then defaults.
#[derive(Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct FileConfig {
    seed: Option<u64>,
    count: Option<usize>,
    chunks: Option<usize>,
    task: Option<TaskArg>,
    epochs: Option<usize>,
    lambda: Option<f64>,
    eta: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    node_dim: Option<usize>,
    tol: Option<i64>,
    group_gap: Option<i64>,
    sigma: Option<f64>,
    prob_threshold: Option<f64>,
    mode: Option<ModeArg>,
    k: Option<usize>,
    distance: Option<DistanceArg>,
    port: Option<u16>,
    host: Option<String>,
    threads: Option<usize>,
}

struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl From<LayoutError> for Failure {
    fn from(e: LayoutError) -> Self {
        Failure {
            code: e.code(),
            exit: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: "io",
        message: format!("{}: {e}", path.display()),
        exit: 2,
    }
}

type Res<T> = Result<T, Failure>;

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn load_model(path: &Path) -> Res<Network> {
    Network::from_checkpoint(&layoutgraph::tensor::Checkpoint::from_bytes(&read(path)?)?).map_err(Into::into)
}

fn load_gui(path: &Path, vocab: &Vocabulary) -> Res<Gui> {
    Ok(gui_from_json_with(&read(path)?, vocab)?)
}

fn load_config(cli: &Cli) -> Res<FileConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("LAYOUTGRAPH_CONFIG").map(PathBuf::from));
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_slice(&read(&p)?).map_err(|e| Failure {
            code: "parse",
            message: format!("config {}: {e}", p.display()),
            exit: 1,
        }),
    }
}

fn extraction(fc: &FileConfig, tol: Option<i64>) -> Res<ExtractionConfig> {
    let mut c = ExtractionConfig::default();
    if let Some(t) = tol.or(fc.tol) {
        c.tol = t;
    }
    if let Some(g) = fc.group_gap {
        c.group_gap = g;
    }
    c.validate()?;
    Ok(c)
}

fn refine_config(fc: &FileConfig) -> Res<RefineConfig> {
    let mut c = RefineConfig::default();
    if let Some(s) = fc.sigma {
        c.sigma = s;
    }
    if let Some(p) = fc.prob_threshold {
        c.prob_threshold = p;
    }
    c.validate()?;
    Ok(c)
}

/// Prints `value` as JSON, or `text` when `--json` is off.
fn report(json_mode: bool, value: &Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        println!("{}", text());
    }
}

fn run(cli: Cli) -> Res<()> {
    let fc = load_config(&cli)?;
    if let Some(n) = cli.threads.or(fc.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: "validation",
                message: e.to_string(),
                exit: 1,
            })?;
    }
    let jm = cli.json;
    match cli.cmd {
        Cmd::GenSynthetic { seed, count, out } => {
            let seed = seed.or(fc.seed).unwrap_or(0);
            let count = count.or(fc.count).unwrap_or(400);
            if count == 0 {
                return Err(LayoutError::Validation("count must be at least 1".into()).into());
            }
            let items = gen_synthetic(seed, count, &SynthConfig::default());
            write_dataset(&out, &items)?;
            report(jm, &json!({ "count": count, "out": out }), || {
                format!("wrote {count} GUIs to {}", out.display())
            });
        }
        Cmd::ExtractConstraints { input, out, tol } => {
            let ecfg = extraction(&fc, tol)?;
            let gui = load_gui(&input, &Vocabulary::default())?;
            let bytes = constraints_to_json(&extract_placed(&gui, &ecfg)?);
            match out {
                Some(p) => write(&p, &bytes)?,
                None => println!("{}", String::from_utf8_lossy(&bytes)),
            }
        }
        Cmd::Pairs {
            data,
            seed,
            chunks,
            out,
            uniform,
        } => {
            let seed = seed.or(fc.seed).unwrap_or(0);
            let chunks = chunks.or(fc.chunks).unwrap_or(30);
            let mode = if uniform { ChunkMode::Uniform } else { ChunkMode::Contiguous };
            let items = read_dataset(&data)?;
            let mut pairs = Vec::new();
            for (i, (id, g)) in items.iter().enumerate() {
                pairs.extend(make_pairs(id, g, seed.wrapping_add(i as u64), chunks, mode)?);
            }
            write_pairs(&out, &pairs)?;
            report(jm, &json!({ "pairs": pairs.len(), "guis": items.len() }), || {
                format!("wrote {} pairs from {} GUIs", pairs.len(), items.len())
            });
        }
        Cmd::Train {
            data,
            task,
            epochs,
            seed,
            lambda,
            eta,
            lr,
            batch_size,
            node_dim,
            chunks,
            out,
            log,
        } => {
            let defaults = TrainConfig::default();
            let mut tc = TrainConfig {
                epochs: epochs.or(fc.epochs).unwrap_or(defaults.epochs),
                batch_size: batch_size.or(fc.batch_size).unwrap_or(defaults.batch_size),
                seed: seed.or(fc.seed).unwrap_or(defaults.seed),
                weights: LossWeights {
                    lambda: lambda.or(fc.lambda).unwrap_or(defaults.weights.lambda),
                    eta: eta.or(fc.eta).unwrap_or(defaults.weights.eta),
                },
                extraction: extraction(&fc, None)?,
                chunks_per_gui: chunks.or(fc.chunks).unwrap_or(defaults.chunks_per_gui),
                ..defaults
            };
            if let Some(lr) = lr.or(fc.lr) {
                tc.adam.lr = lr;
            }
            tc.validate()?;
            let items = read_dataset(&data)?;
            if items.is_empty() {
                return Err(LayoutError::Empty(format!("no GUIs in {}", data.display())).into());
            }
            let mut ncfg = NetworkConfig::default();
            if let Some(d) = node_dim.or(fc.node_dim) {
                ncfg = ncfg.with_node_dim(d);
            }
            ncfg.embed.max_coord = max_canvas_side(&items) as usize;
            let mut net = Network::new(ncfg, Vocabulary::default(), tc.seed)?;
            net.set_stats(CorpusStats::from_guis(items.iter().map(|(_, g)| g)));
            net.corpus_hash = Some(corpus_hash(&items));

            let log_path = log.unwrap_or_else(|| out.with_extension("csv"));
            let mut log_file = fs::File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
            let summary = match task.or(fc.task).unwrap_or(TaskArg::Autocomplete) {
                TaskArg::Autocomplete => {
                    let mut pairs = Vec::new();
                    for (i, (id, g)) in items.iter().enumerate() {
                        pairs.extend(make_pairs(
                            id,
                            g,
                            tc.seed.wrapping_add(i as u64),
                            tc.chunks_per_gui,
                            tc.chunk_mode,
                        )?);
                    }
                    let samples = autocomplete_samples(&net, &pairs, &tc.extraction)?;
                    train_autocomplete(&mut net, &samples, &tc, Some(&mut log_file))?
                }
                TaskArg::Classify => {
                    let samples = classify_samples(&net, &items, tc.seed, &tc.extraction)?;
                    train_classifier(&mut net, &samples, &tc, Some(&mut log_file))?
                }
            };
            log_file.flush().map_err(|e| io_err(&log_path, e))?;
            write(&out, &net.to_checkpoint().to_bytes())?;
            let v = serde_json::to_value(summary).map_err(LayoutError::from)?;
            report(jm, &v, || {
                let l = summary.final_loss;
                format!(
                    "{} steps; final loss total {:.6} (mse {:.6}, boundary {:.6}, bce {:.6}); wrote {}",
                    summary.steps,
                    l.total,
                    l.element_mse,
                    l.boundary,
                    l.constraint_bce,
                    out.display()
                )
            });
        }
        Cmd::Eval {
            model,
            pairs,
            report: out,
            placers,
        } => {
            let net = load_model(&model)?;
            let ecfg = extraction(&fc, None)?;
            let rcfg = refine_config(&fc)?;
            let samples = read_pairs(&pairs)?;
            let mut reports = Vec::new();
            for name in placers.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let p: Box<dyn Placer + '_> = match name {
                    "model" => Box::new(ModelPlacer {
                        net: &net,
                        refine: rcfg,
                        extraction: ecfg,
                    }),
                    "center" => Box::new(CenterPlacer),
                    "oracle" => Box::new(OraclePlacer),
                    "oracle-constraints" => Box::new(OracleConstraintPlacer {
                        net: &net,
                        refine: rcfg,
                        extraction: ecfg,
                    }),
                    other => {
                        return Err(LayoutError::Validation(format!("unknown placer `{other}`")).into());
                    }
                };
                reports.push(evaluate(p.as_ref(), &samples, &ecfg)?);
            }
            let v = json!({ "pairs": samples.len(), "reports": reports });
            write(&out, serde_json::to_string_pretty(&v).map_err(LayoutError::from)?.as_bytes())?;
            report(jm, &v, || {
                reports
                    .iter()
                    .map(|r| {
                        format!(
                            "{:<20} pos {:.4}  area {:.4}  align {:.4}  (n = {})",
                            r.placer, r.overall.pos_error, r.overall.area_error, r.overall.align_error, r.overall.count
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            });
        }
        Cmd::Suggest {
            model,
            gui,
            mode,
            target,
        } => {
            let net = load_model(&model)?;
            let gui = load_gui(&gui, net.vocab())?;
            let sg = Suggester {
                predictor: &net,
                refine: refine_config(&fc)?,
                extraction: extraction(&fc, None)?,
            };
            let out = match (mode.or(fc.mode).unwrap_or_default(), target) {
                (ModeArg::Single, Some(t)) => vec![sg.suggest_for(&gui, &t)?],
                (_, Some(_)) => {
                    return Err(LayoutError::Validation("--target only applies to --mode single".into()).into())
                }
                (ModeArg::Single, None) => vec![sg.suggest_one(&gui)?],
                (ModeArg::Group, None) => sg.suggest_group(&gui)?,
                (ModeArg::All, None) => sg.suggest_all(&gui)?,
            };
            println!("{}", serde_json::to_string(&out).map_err(LayoutError::from)?);
        }
        Cmd::Classify { model, gui } => {
            let net = load_model(&model)?;
            let gui = load_gui(&gui, net.vocab())?;
            let c = classify(&net, &gui, &extraction(&fc, None)?)?;
            println!("{}", serde_json::to_string(&c).map_err(LayoutError::from)?);
        }
        Cmd::Index {
            model,
            data,
            out,
            distance,
        } => {
            let net = load_model(&model)?;
            let items = read_dataset(&data)?;
            let d = match distance.or(fc.distance) {
                Some(DistanceArg::Cosine) => Distance::Cosine,
                _ => Distance::Euclidean,
            };
            let idx = EmbeddingIndex::build(&net, &items, &extraction(&fc, None)?, d)?;
            write(&out, &idx.to_checkpoint()?.to_bytes())?;
            report(jm, &json!({ "entries": idx.len(), "out": out }), || {
                format!("indexed {} GUIs into {}", idx.len(), out.display())
            });
        }
        Cmd::Retrieve {
            index,
            model,
            gui,
            k,
            exclude,
        } => {
            let idx = EmbeddingIndex::from_checkpoint(&layoutgraph::tensor::Checkpoint::from_bytes(&read(&index)?)?)?;
            let net = load_model(&model)?;
            let gui = load_gui(&gui, net.vocab())?;
            let q = embed(&net, &gui, &extraction(&fc, None)?)?;
            let hits = idx.retrieve(&q, k.or(fc.k).unwrap_or(5), exclude.as_deref())?;
            println!("{}", serde_json::to_string(&hits).map_err(LayoutError::from)?);
        }
        Cmd::Serve {
            model,
            port,
            host,
            snapshots,
        } => {
            let net = load_model(&model)?;
            let mut state = AppState::new(net, refine_config(&fc)?, extraction(&fc, None)?);
            if let Some(dir) = snapshots {
                fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                state = state.with_snapshots(dir);
            }
            let host = host.or(fc.host).unwrap_or_else(|| "127.0.0.1".into());
            let port = port.or(fc.port).unwrap_or(DEFAULT_PORT);
            let addr: std::net::SocketAddr = format!("{host}:{port}").parse().map_err(|e| Failure {
                code: "validation",
                message: format!("bad address {host}:{port}: {e}"),
                exit: 1,
            })?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| io_err(Path::new("runtime"), e))?;
            tracing::info!(%addr, "listening");
            rt.block_on(service::serve(Arc::new(state), addr))
                .map_err(|e| io_err(Path::new(&addr.to_string()), e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("LAYOUTGRAPH_LOG").unwrap_or_else(|_| "info".into()))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.code, "message": f.message }));
            ExitCode::from(f.exit)
        }
    }
}
