//! `leafwood`: featurize, split, train, predict and evaluate tree point clouds.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use leafwood_core::cloud::{export_colored_ply, load_xyz, save_xyz, write_atomic, LabeledCloud};
use leafwood_core::eval::{evaluate, TimingRecord};
use leafwood_core::features::{featurize, DEFAULT_RADIUS_M};
use leafwood_core::model::train::train_with_progress;
use leafwood_core::model::{
    load_checkpoint, predict, prepare_training_chunks, save_checkpoint, ModelConfig, ModelParams,
    TrainConfig,
};
use leafwood_core::sampling::{benchmark_sampling, sample_centroids, Strategy};
use leafwood_core::split::{plan_split, save_chunks, split, DEFAULT_MAX_POINT_NUM};
use leafwood_core::synth::{generate_tree, SynthTreeSpec};
use leafwood_core::{PlyEncoding, Real};

use settings::ConfigFile;

const DEFAULT_SEED: u64 = 0;
const DEFAULT_CHUNK_POINTS: usize = 4096;

#[derive(Parser, Debug)]
#[command(
    name = "leafwood",
    version,
    about = "Wood-leaf classification of tree point clouds"
)]
struct Cli {
    /// key=value file with defaults for the flags below (flags win)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Neighborhood radius for linearity, meters
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Largest chunk size for splitting and prediction
    #[arg(long, global = true)]
    max_points: Option<usize>,
    /// Centroid sampling: random or fps
    #[arg(long, global = true)]
    sampling: Option<Strategy>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Learning rate
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Learning-rate decay factor
    #[arg(long, global = true)]
    decay: Option<f64>,
    /// Epochs between decays
    #[arg(long, global = true)]
    decay_step: Option<usize>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Machine-readable report file
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Append (or recompute) the per-point linearity column
    Featurize { input: PathBuf, output: PathBuf },
    /// Write spatial chunks plus index sidecars into a directory
    Split {
        input: PathBuf,
        out_dir: PathBuf,
        /// File stem for the chunks; defaults to the input's
        #[arg(long)]
        stem: Option<String>,
    },
    /// Write k centroid indices, one per line
    Sample {
        input: PathBuf,
        output: PathBuf,
        #[arg(short, long)]
        k: usize,
    },
    /// Train on labeled clouds and write a checkpoint
    Train {
        inputs: Vec<PathBuf>,
        /// File listing training clouds, one path per line
        #[arg(long)]
        list: Option<PathBuf>,
        /// default, toy or micro
        #[arg(long)]
        model: Option<String>,
        /// f32 or f64
        #[arg(long)]
        precision: Option<Precision>,
        /// Training chunk size
        #[arg(long)]
        chunk_points: Option<usize>,
    },
    /// Label a cloud with a trained checkpoint
    Predict { input: PathBuf, output: PathBuf },
    /// Compare predicted and reference labels (pairs of files)
    Evaluate {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
    },
    /// Time random sampling against farthest point sampling
    Bench {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(short, long, default_value_t = 2_048)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Export a labeled cloud as a brown/green PLY
    Colorize {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        binary: bool,
    },
    /// Generate a labeled synthetic tree
    Synth {
        output: PathBuf,
        #[arg(long)]
        pitch: Option<f64>,
        #[arg(long)]
        branches: Option<usize>,
        #[arg(long)]
        leaf_clusters: Option<usize>,
        #[arg(long)]
        leaf_points: Option<usize>,
    },
}

fn parse_model(name: &str) -> Result<ModelConfig> {
    Ok(match name {
        "default" => ModelConfig::default(),
        "toy" => ModelConfig::toy(),
        "micro" => ModelConfig::micro(),
        other => bail!("unknown model `{other}` (expected default, toy or micro)"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}`")),
        }
    }
}

fn load(path: &Path) -> Result<LabeledCloud<f64>> {
    Ok(load_xyz::<f64>(path)?)
}

fn with_linearity(cloud: LabeledCloud<f64>, radius: f64, path: &Path) -> Result<LabeledCloud<f64>> {
    if cloud.linearity().is_some() {
        return Ok(cloud);
    }
    eprintln!(
        "{}: no linearity column, computing it (radius {radius} m)",
        path.display()
    );
    Ok(featurize(&cloud, radius)?)
}

fn write_report(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

fn read_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("{}: cannot read list", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn run_training<T: Real>(
    files: &[PathBuf],
    radius: f64,
    chunk_points: usize,
    model: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(ModelParams<T>, Vec<f64>)> {
    let mut chunks = Vec::new();
    for f in files {
        let cloud = with_linearity(load(f)?, radius, f)?;
        if cloud.labels().is_none() {
            bail!("{}: training clouds need a label column", f.display());
        }
        let n = chunks.len();
        chunks.extend(prepare_training_chunks(&cloud.cast::<T>(), chunk_points)?);
        eprintln!(
            "{}: {} points, {} chunks",
            f.display(),
            cloud.len(),
            chunks.len() - n
        );
    }
    let start = Instant::now();
    let (params, report) = train_with_progress(model, tc, &chunks, None, |e, l| {
        eprintln!(
            "epoch {:>3} lr {:.6} loss {l:.6} ({:.1}s)",
            e + 1,
            tc.learning_rate_at(e),
            start.elapsed().as_secs_f64()
        );
    })?;
    Ok((params, report.epoch_losses))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() {
                        cause
                    } else {
                        format!("{msg}: {cause}")
                    };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(v) = std::env::var("LEAFWOOD_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("LEAFWOOD_THREADS=`{v}` is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let radius = cfg.pick(cli.radius, "radius", DEFAULT_RADIUS_M)?;
    let max_points = cfg.pick(cli.max_points, "max-points", DEFAULT_MAX_POINT_NUM)?;
    let seed = cfg.pick(cli.seed, "seed", DEFAULT_SEED)?;
    let report = cfg.pick_opt(cli.report.clone(), "report")?;

    match cli.command {
        Command::Featurize { input, output } => {
            let cloud = load(&input)?;
            let out = featurize(&cloud, radius)?;
            save_xyz(&out, &output)?;
            eprintln!(
                "{}: linearity for {} points (radius {radius} m)",
                output.display(),
                out.len()
            );
        }
        Command::Split {
            input,
            out_dir,
            stem,
        } => {
            let cloud = load(&input)?;
            let plan = plan_split(cloud.len(), max_points)?;
            let chunks = split(&cloud, &plan)?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("{}: cannot create", out_dir.display()))?;
            let stem = stem.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map_or("cloud".into(), |s| s.to_string_lossy().into_owned())
            });
            save_chunks(&chunks, &out_dir, &stem)?;
            eprintln!("{} chunks of {:?} points", chunks.len(), plan.chunk_sizes);
        }
        Command::Sample { input, output, k } => {
            let strategy = cfg.pick(cli.sampling, "sampling", Strategy::Random)?;
            let cloud = load(&input)?;
            let set = sample_centroids(cloud.points(), k, strategy, seed)?;
            let text: String = set.indices.iter().map(|i| format!("{i}\n")).collect();
            write_atomic(&output, text.as_bytes())?;
        }
        Command::Train {
            inputs,
            list,
            model,
            precision,
            chunk_points,
        } => {
            let mut files = inputs;
            if let Some(l) = list {
                files.extend(read_list(&l)?);
            }
            if files.is_empty() {
                bail!("no training files given");
            }
            let checkpoint = cfg
                .pick_opt(cli.checkpoint, "checkpoint")?
                .context("train needs --checkpoint for its output")?;
            let mut model = parse_model(&cfg.pick(model, "model", "default".to_string())?)?;
            model.sampling = cfg.pick(cli.sampling, "sampling", Strategy::Random)?;
            model.seed = seed;
            let d = TrainConfig::default();
            let tc = TrainConfig {
                learning_rate: cfg.pick(cli.lr, "lr", d.learning_rate)?,
                epochs: cfg.pick(cli.epochs, "epochs", d.epochs)?,
                decay_rate: cfg.pick(cli.decay, "decay", d.decay_rate)?,
                decay_step: cfg.pick(cli.decay_step, "decay-step", d.decay_step)?,
                seed,
                ..d
            };
            let chunk_points = cfg.pick(chunk_points, "chunk-points", DEFAULT_CHUNK_POINTS)?;
            let losses = match cfg.pick(precision, "precision", Precision::F32)? {
                Precision::F32 => {
                    let (p, l) = run_training::<f32>(&files, radius, chunk_points, &model, &tc)?;
                    save_checkpoint(&model, &p, &checkpoint)?;
                    l
                }
                Precision::F64 => {
                    let (p, l) = run_training::<f64>(&files, radius, chunk_points, &model, &tc)?;
                    save_checkpoint(&model, &p, &checkpoint)?;
                    l
                }
            };
            let text: String = losses
                .iter()
                .enumerate()
                .map(|(e, l)| format!("epoch={} loss={l}\n", e + 1))
                .collect();
            write_report(&report, &text)?;
            eprintln!("{}: checkpoint written", checkpoint.display());
        }
        Command::Predict { input, output } => {
            let checkpoint = cfg
                .pick_opt(cli.checkpoint, "checkpoint")?
                .context("predict needs --checkpoint")?;
            let (model, params) = load_checkpoint::<f64>(&checkpoint)?;
            let cloud = load(&input)?;
            let start = Instant::now();
            let cloud = with_linearity(cloud, radius, &input)?;
            let out = predict(&params, &model, &cloud, max_points, seed)?;
            let timing = TimingRecord::new(out.len(), start.elapsed().as_secs_f64())?;
            save_xyz(&out, &output)?;
            eprint!("{}", timing.to_key_value());
            write_report(&report, &timing.to_key_value())?;
        }
        Command::Evaluate { files } => {
            if files.len() % 2 != 0 {
                bail!("evaluate takes prediction/reference pairs");
            }
            let mut jsonl = String::new();
            for pair in files.chunks(2) {
                let (pred, truth) = (load(&pair[0])?, load(&pair[1])?);
                let m = evaluate(&pred, &truth)
                    .with_context(|| format!("{} vs {}", pair[0].display(), pair[1].display()))?;
                eprintln!("# {} vs {}", pair[0].display(), pair[1].display());
                eprint!("{}", m.to_key_value());
                let mut obj = serde_json::to_value(&m)?;
                obj["prediction"] = pair[0].display().to_string().into();
                obj["reference"] = pair[1].display().to_string().into();
                jsonl.push_str(&serde_json::to_string(&obj)?);
                jsonl.push('\n');
            }
            write_report(&report, &jsonl)?;
        }
        Command::Bench { n, k, repeats } => {
            let r = benchmark_sampling(n, k, repeats)?;
            eprint!("{}", r.to_key_value());
            write_report(&report, &r.to_key_value())?;
        }
        Command::Colorize {
            input,
            output,
            binary,
        } => {
            let cloud = load(&input)?;
            let labels = cloud
                .labels()
                .with_context(|| format!("{}: no label column to color by", input.display()))?;
            let enc = if binary {
                PlyEncoding::BinaryLittleEndian
            } else {
                PlyEncoding::Ascii
            };
            export_colored_ply(&cloud, labels, &output, enc)?;
        }
        Command::Synth {
            output,
            pitch,
            branches,
            leaf_clusters,
            leaf_points,
        } => {
            let d = SynthTreeSpec::default();
            let spec = SynthTreeSpec {
                surface_sample_pitch_m: pitch.unwrap_or(d.surface_sample_pitch_m),
                branch_count: branches.unwrap_or(d.branch_count),
                leaf_cluster_count: leaf_clusters.unwrap_or(d.leaf_cluster_count),
                leaf_points_per_cluster: leaf_points.unwrap_or(d.leaf_points_per_cluster),
                seed: cli.seed.unwrap_or(d.seed),
                ..d
            };
            let tree = generate_tree::<f64>(&spec)?;
            save_xyz(&tree, &output)?;
            let c = spec.counts();
            eprintln!(
                "{}: {} points ({} wood, {} leaf)",
                output.display(),
                c.total(),
                c.wood(),
                c.leaf
            );
        }
    }
    Ok(())
}
