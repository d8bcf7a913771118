//! Command-line entry point.
//!
//! Every command takes `--seed` and `--config <json>`. The JSON file
//! overrides built-in defaults key by key, flags override the file, and the
//! resulting configuration is written as `config.json` into the command's
//! output directory.
//!
//! Exit status: 0 success, 1 usage, 2 data, 3 numeric failure.

mod config;
mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assignment::Importance;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval::{ablation_table, precision_at_k, run_ablation, task_overlap_matrix, OverlapReport, RougeMode};
use crate::fsutil;
use crate::graph::{aggregate_graphs, export_graph, load_graph_json, ExportFormat, GraphConfig, Lexicon, SemanticGraph};
use crate::par::ExecPolicy;
use crate::pipeline::{interpret, InterpretOptions};
use crate::synth::{generate_corpus, SynthConfig};
use crate::training::loss::LossKind;
use crate::training::{load_checkpoint, read_metrics, save_checkpoint, train_from, TrainConfig, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "semgraph", version, about = "Self-supervised semantic graphs from narrated multimodal streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random draw of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file overriding default settings; flags override the file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn policy(&self) -> ExecPolicy {
        if self.sequential {
            ExecPolicy::Sequential
        } else {
            ExecPolicy::Parallel
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus into a directory.
    Synth(SynthArgs),
    /// Train on a corpus; writes a checkpoint and per-epoch metrics.
    Train(TrainArgs),
    /// Build semantic graphs for videos with a trained checkpoint.
    Graph(GraphArgs),
    /// Task overlap of graph exports and/or retrieval precision of embeddings.
    Eval(EvalArgs),
    /// Compare fusion variants with a linear probe on a synthetic corpus.
    Ablate(AblateArgs),
    /// Render a metrics log as a loss curve and an overlap report as a heatmap.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of tasks.
    #[arg(long)]
    tasks: Option<usize>,
    /// Videos generated per task.
    #[arg(long)]
    videos_per_task: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus directory written by `synth`.
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint directory; receives parameters, metrics and config.
    #[arg(long)]
    out: PathBuf,
    /// Total epochs, counting any already in a resumed checkpoint.
    #[arg(long)]
    epochs: Option<usize>,
    /// Videos per optimizer step; at most the corpus size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// triplet_cosine, triplet_angular, nce or cross_modal_nce.
    #[arg(long)]
    loss: Option<LossKind>,
    /// Margin subtracted from the positive similarity of triplet losses.
    #[arg(long)]
    margin: Option<f64>,
    /// Continue from the checkpoint already in `--out`.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct GraphArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus directory holding the videos and word vectors.
    #[arg(long)]
    corpus: PathBuf,
    /// Video id to interpret; repeatable. Defaults to every video.
    #[arg(long = "video", value_name = "ID")]
    videos: Vec<String>,
    /// Time-stamped nodes with action-mediated edges.
    #[arg(long, conflicts_with = "undirected")]
    directed: bool,
    /// Time-averaged nodes with similarity edges (default).
    #[arg(long)]
    undirected: bool,
    /// Minimum cosine similarity for an edge.
    #[arg(long)]
    tau: Option<f64>,
    /// Largest segment gap spanned by a directed edge.
    #[arg(long)]
    window: Option<usize>,
    /// dot or json.
    #[arg(long)]
    format: Option<String>,
    /// Extra lexicon entries, one `word<TAB>object|action_state` per line.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Also merge all graphs into `aggregate.<format>`.
    #[arg(long)]
    aggregate: bool,
    /// Output directory; graphs go to `<out>/graphs/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of JSON graph exports carrying task labels.
    #[arg(long, required_unless_present = "checkpoint")]
    graphs: Option<PathBuf>,
    /// Checkpoint whose embeddings are scored with precision at k.
    #[arg(long, requires = "corpus")]
    checkpoint: Option<PathBuf>,
    /// Corpus directory; needed with `--checkpoint`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Neighbours per query for precision at k.
    #[arg(long)]
    k: Option<usize>,
    /// f1 or recall.
    #[arg(long)]
    rouge: Option<RougeMode>,
    /// Directory for overlap.json, overlap.md and precision.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of tasks in the probe corpus.
    #[arg(long)]
    tasks: Option<usize>,
    /// Probe videos per task.
    #[arg(long)]
    videos_per_task: Option<usize>,
    /// Attention projection width.
    #[arg(long)]
    proj_channels: Option<usize>,
    /// Per-channel noise of the probe corpus.
    #[arg(long)]
    noise: Option<f64>,
    /// Directory for ablation.md and ablation.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    /// metrics.jsonl from `train`; rendered to `loss.svg`.
    #[arg(long, required_unless_present = "overlap")]
    metrics: Option<PathBuf>,
    /// overlap.json from `eval`; rendered to `overlap.svg`.
    #[arg(long)]
    overlap: Option<PathBuf>,
    /// Directory for the SVG files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SynthRun {
    tasks: usize,
    videos_per_task: usize,
    seed: u64,
    generator: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphRun {
    seed: u64,
    directed: bool,
    format: String,
    importance: Importance,
    graph: GraphConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EvalRun {
    seed: u64,
    k: usize,
    rouge: RougeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct AblateRun {
    tasks: usize,
    videos_per_task: usize,
    proj_channels: usize,
    seed: u64,
    generator: SynthConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PlotRun {
    seed: u64,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (program name first), runs one command and returns the
/// process exit status.
pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Graph(a) => graph(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fsutil::write_atomic(path, bytes)
}

fn synth(a: SynthArgs) -> Result<()> {
    let defaults = SynthRun {
        tasks: 4,
        videos_per_task: 4,
        seed: 7,
        generator: SynthConfig::default(),
    };
    let mut run = config::layered(&defaults, a.common.config.as_deref())?;
    run.tasks = a.tasks.unwrap_or(run.tasks);
    run.videos_per_task = a.videos_per_task.unwrap_or(run.videos_per_task);
    run.seed = a.common.seed.unwrap_or(run.seed);
    let corpus = generate_corpus(run.tasks, run.videos_per_task, run.seed, &run.generator, a.common.policy())?;
    corpus.save(&a.out)?;
    config::echo(&a.out, &run)?;
    println!("wrote {} videos to {}", corpus.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let (config, state) = if a.resume {
        let ck = load_checkpoint(&a.out)?;
        let mut config = ck.config;
        config.epochs = a.epochs.unwrap_or(config.epochs);
        (config, ck.state)
    } else {
        let mut config = config::layered(&TrainConfig::default(), a.common.config.as_deref())?;
        config.seed = a.common.seed.unwrap_or(config.seed);
        config.epochs = a.epochs.unwrap_or(config.epochs);
        config.batch_size = a.batch_size.unwrap_or(config.batch_size);
        config.loss = a.loss.unwrap_or(config.loss);
        config.margin = a.margin.unwrap_or(config.margin);
        let config = config.fit_to(&corpus);
        config.validate()?;
        (config, TrainState::fresh(&config)?)
    };
    let out = a.out.clone();
    let state = train_from(&corpus, &config, state, a.common.policy(), |s| {
        let m = s.metrics.last().expect("one entry per finished epoch");
        println!("epoch {:>3}  loss {:.6}  lr {:.4}", m.epoch, m.loss, m.lr);
        save_checkpoint(&out, &config, s)
    })?;
    // A resumed run with nothing left to do still leaves a complete directory.
    save_checkpoint(&a.out, &config, &state)
}

fn graph(a: GraphArgs) -> Result<()> {
    let defaults = GraphRun {
        seed: 7,
        directed: false,
        format: "json".into(),
        importance: Importance::default(),
        graph: GraphConfig::default(),
    };
    let mut run = config::layered(&defaults, a.common.config.as_deref())?;
    run.seed = a.common.seed.unwrap_or(run.seed);
    if a.directed || a.undirected {
        run.directed = a.directed;
    }
    run.graph.tau = a.tau.unwrap_or(run.graph.tau);
    run.graph.window = a.window.unwrap_or(run.graph.window);
    run.format = a.format.unwrap_or(run.format);
    let format: ExportFormat = run.format.parse()?;
    let ext = match format {
        ExportFormat::Dot => "dot",
        ExportFormat::Json => "json",
    };

    let model = load_checkpoint(&a.checkpoint)?.state.model;
    let corpus = Corpus::load(&a.corpus)?;
    let mut lexicon = Lexicon::bundled();
    if let Some(path) = &a.lexicon {
        lexicon.extend_from_file(path)?;
    }
    let options = InterpretOptions {
        directed: run.directed,
        importance: run.importance,
        graph: run.graph,
        lexicon,
    };
    let videos: Vec<_> = if a.videos.is_empty() {
        corpus.videos.iter().collect()
    } else {
        a.videos
            .iter()
            .map(|id| {
                corpus
                    .video(id)
                    .ok_or_else(|| Error::Config(format!("no video {id:?} in {}", a.corpus.display())))
            })
            .collect::<Result<_>>()?
    };
    let graphs = a
        .common
        .policy()
        .map_slice(&videos, |v| {
            let mut g = interpret(&model, &v.video, &v.audio, &v.timeline, &corpus.embeddings, &options)?;
            g.video_id = Some(v.video_id.clone());
            g.task_label = Some(v.task_label.clone());
            Ok(g)
        })
        .into_iter()
        .collect::<Result<Vec<SemanticGraph>>>()?;

    let dir = a.out.join("graphs");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for g in &graphs {
        let id = g.video_id.as_deref().expect("set above");
        export_graph(g, format, &dir.join(format!("{id}.{ext}")))?;
    }
    if a.aggregate {
        if let Some((first, rest)) = graphs.split_first() {
            let mut merged = first.clone();
            for g in rest {
                merged = aggregate_graphs(&merged, g, &run.graph)?;
            }
            merged.video_id = None;
            if graphs.iter().any(|g| g.task_label != first.task_label) {
                merged.task_label = None;
            }
            export_graph(&merged, format, &a.out.join(format!("aggregate.{ext}")))?;
        }
    }
    config::echo(&a.out, &run)?;
    println!("wrote {} graphs to {}", graphs.len(), dir.display());
    Ok(())
}

fn load_graph_dir(dir: &Path) -> Result<Vec<(String, SemanticGraph)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format("graph directory", dir, "no .json graph exports"));
    }
    paths
        .iter()
        .map(|p| {
            let g = load_graph_json(p)?;
            let label = g.task_label.clone().ok_or_else(|| Error::format("graph json", p, "missing task_label"))?;
            Ok((label, g))
        })
        .collect()
}

fn overlap_markdown(r: &OverlapReport) -> String {
    let mut out = format!("| task | {} |\n|---|{}\n", r.tasks.join(" | "), "---|".repeat(r.tasks.len()));
    for (name, row) in r.tasks.iter().zip(&r.matrix) {
        let cells: Vec<String> = row.iter().map(|c| c.map_or("n/a".into(), |v| format!("{v:.4}"))).collect();
        out.push_str(&format!("| {name} | {} |\n", cells.join(" | ")));
    }
    let mean = |m: Option<f64>| m.map_or("n/a".into(), |v| format!("{v:.4}"));
    out.push_str(&format!(
        "\nsame-task mean: {}\ndifferent-task mean: {}\n",
        mean(r.same_task_mean),
        mean(r.diff_task_mean)
    ));
    out
}

#[derive(Debug, Serialize)]
struct PrecisionReport {
    k: usize,
    videos: usize,
    precision: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let defaults = EvalRun {
        seed: 7,
        k: 1,
        rouge: RougeMode::default(),
    };
    let mut run = config::layered(&defaults, a.common.config.as_deref())?;
    run.seed = a.common.seed.unwrap_or(run.seed);
    run.k = a.k.unwrap_or(run.k);
    run.rouge = a.rouge.unwrap_or(run.rouge);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    if let Some(dir) = &a.graphs {
        let graphs = load_graph_dir(dir)?;
        let report = task_overlap_matrix(&graphs, run.rouge, a.common.policy())?;
        write(&a.out.join("overlap.json"), &config::to_pretty_json(&report))?;
        let md = overlap_markdown(&report);
        write(&a.out.join("overlap.md"), md.as_bytes())?;
        print!("{md}");
    }
    if let (Some(ck), Some(corpus)) = (&a.checkpoint, &a.corpus) {
        let model = load_checkpoint(ck)?.state.model;
        let corpus = Corpus::load(corpus)?;
        let embeddings = a
            .common
            .policy()
            .map_slice(&corpus.videos, |v| {
                let nodes = crate::data::embed_tokens(&v.timeline, &corpus.embeddings);
                model.embed(v.video.to_f64().view(), v.audio.to_f64().view(), &nodes.data)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let precision = precision_at_k(&embeddings, &corpus.labels(), run.k)?;
        let report = PrecisionReport {
            k: run.k,
            videos: embeddings.len(),
            precision,
        };
        write(&a.out.join("precision.json"), &config::to_pretty_json(&report))?;
        println!("precision@{}: {precision:.4}", run.k);
    }
    config::echo(&a.out, &run)
}

fn ablate(a: AblateArgs) -> Result<()> {
    let defaults = AblateRun {
        tasks: 8,
        videos_per_task: 10,
        proj_channels: 32,
        seed: 7,
        generator: SynthConfig::default(),
    };
    let mut run = config::layered(&defaults, a.common.config.as_deref())?;
    run.tasks = a.tasks.unwrap_or(run.tasks);
    run.videos_per_task = a.videos_per_task.unwrap_or(run.videos_per_task);
    run.proj_channels = a.proj_channels.unwrap_or(run.proj_channels);
    run.generator.noise_sigma = a.noise.unwrap_or(run.generator.noise_sigma);
    run.seed = a.common.seed.unwrap_or(run.seed);
    let corpus = generate_corpus(run.tasks, run.videos_per_task, run.seed, &run.generator, a.common.policy())?;
    let rows = run_ablation(&corpus, run.proj_channels, run.seed, a.common.policy())?;
    let table = ablation_table(&rows);
    write(&a.out.join("ablation.md"), table.as_bytes())?;
    write(&a.out.join("ablation.json"), &config::to_pretty_json(&rows))?;
    config::echo(&a.out, &run)?;
    print!("{table}");
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let mut run = config::layered(&PlotRun { seed: 7 }, a.common.config.as_deref())?;
    run.seed = a.common.seed.unwrap_or(run.seed);
    if let Some(path) = &a.metrics {
        let metrics = read_metrics(path)?;
        write(&a.out.join("loss.svg"), plot::loss_curve(&metrics).as_bytes())?;
    }
    if let Some(path) = &a.overlap {
        let text = fsutil::read_to_string(path)?;
        let report: OverlapReport = serde_json::from_str(&text).map_err(|e| Error::format("overlap report", path, e.to_string()))?;
        write(&a.out.join("overlap.svg"), plot::overlap_heatmap(&report).as_bytes())?;
    }
    config::echo(&a.out, &run)
}
