//! Command-line front end wiring the recognition toolkit into a workflow:
//! generate a corpus, extract features once, then evaluate classifiers and
//! run parameter sweeps off the shared features CSV.
//!
//! Conventions shared by every subcommand:
//! - stdout carries only machine-parseable `key=value` lines; progress and
//!   errors go to stderr.
//! - exit codes: 0 success, 1 runtime/data error, 2 usage error.
//! - each run writes a JSON manifest next to its primary output recording
//!   the resolved configuration, seeds, paths, tool version, and timestamps.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use glyphrec::eval;
use glyphrec::knn::KnnModel;
use glyphrec::mlp::{MlpModel, TrainHyperparams};
use glyphrec::preprocess::PreprocessConfig;
use glyphrec::raster::{load_dataset, read_pgm};
use glyphrec::synth::{gen_corpus, SynthConfig};
use glyphrec::zoning::{extract_all, zone_densities, FeatureTable, GridSpec};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "glyphrec", version, about = "Handwritten-character recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic glyph corpus.
    Gen(GenArgs),
    /// Preprocess a corpus and extract zone-density features to CSV.
    Extract(ExtractArgs),
    /// Evaluate the KNN classifier on a features CSV.
    EvalKnn(EvalKnnArgs),
    /// Train and evaluate the MLP classifier on a features CSV.
    EvalMlp(EvalMlpArgs),
    /// KNN accuracy across neighbour counts, on one shared split.
    SweepK(SweepKArgs),
    /// Both classifiers across train fractions.
    SweepSplit(SweepSplitArgs),
    /// MLP accuracy snapshots along one training run.
    SweepEpochs(SweepEpochsArgs),
    /// Classify a single PGM image with a saved model.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Optional SynthConfig JSON; explicit flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Corpus directory (classes.tsv plus class_<id>/ PGM files).
    #[arg(long)]
    data: PathBuf,
    /// Features CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Zone grid, ROWSxCOLS.
    #[arg(long, default_value = "4x4")]
    grid: String,
    /// Canvas size, N or WxH.
    #[arg(long, default_value = "44")]
    canvas: String,
    /// Delete foreground components up to this many pixels.
    #[arg(long, default_value_t = 4)]
    specks: usize,
    /// Fixed binarization threshold (default: Otsu per image).
    #[arg(long)]
    threshold: Option<u8>,
    /// Per-sample diagnostics CSV (default: <out> with a .diag.csv suffix).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalKnnArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.667)]
    train_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Report JSON to write.
    #[arg(long, default_value = "knn_report.json")]
    out: PathBuf,
    /// Also save the fitted model (training split plus metric header).
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalMlpArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 0.667)]
    train_frac: f64,
    /// Seed for the split, weight init, and shuffle order.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 11.0)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    h1: usize,
    #[arg(long, default_value_t = 32)]
    h2: usize,
    #[arg(long, default_value = "mlp_report.json")]
    out: PathBuf,
    #[arg(long, default_value = "mlp_model.json")]
    out_model: PathBuf,
    #[arg(long, default_value = "mlp_trace.csv")]
    out_trace: PathBuf,
    /// Log one line per epoch to stderr.
    #[arg(long, default_value_t = false)]
    log_epochs: bool,
}

#[derive(Args)]
struct SweepKArgs {
    #[arg(long)]
    features: PathBuf,
    /// Ascending neighbour counts, comma separated.
    #[arg(long, default_value = "1,3,5,9,15")]
    ks: String,
    #[arg(long, default_value_t = 0.667)]
    train_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "k_sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepSplitArgs {
    #[arg(long)]
    features: PathBuf,
    /// Ascending train fractions, comma separated.
    #[arg(long, default_value = "0.35,0.40,0.45,0.50,0.55,0.60,0.65,0.70,0.75,0.80")]
    fractions: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// MLP epochs per point.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 11.0)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    h1: usize,
    #[arg(long, default_value_t = 32)]
    h2: usize,
    #[arg(long, default_value = "split_sweep_knn.csv")]
    out_knn: PathBuf,
    #[arg(long, default_value = "split_sweep_mlp.csv")]
    out_mlp: PathBuf,
}

#[derive(Args)]
struct SweepEpochsArgs {
    #[arg(long)]
    features: PathBuf,
    /// Ascending snapshot epochs, comma separated.
    #[arg(long, default_value = "10,100,500")]
    epochs_list: String,
    #[arg(long, default_value_t = 0.667)]
    train_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 11.0)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    h1: usize,
    #[arg(long, default_value_t = 32)]
    h2: usize,
    #[arg(long, default_value = "epoch_sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file (KNN text or MLP JSON, detected by content).
    #[arg(long)]
    model: PathBuf,
    /// PGM image to classify.
    #[arg(long)]
    image: PathBuf,
    /// classes.tsv mapping ids to names (default: class_<id>).
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Neighbour count for KNN models.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Must match the preprocessing used to build the model's features.
    #[arg(long, default_value = "4x4")]
    grid: String,
    #[arg(long, default_value = "44")]
    canvas: String,
    #[arg(long, default_value_t = 4)]
    specks: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Extract(args) => cmd_extract(args),
        Command::EvalKnn(args) => cmd_eval_knn(args),
        Command::EvalMlp(args) => cmd_eval_mlp(args),
        Command::SweepK(args) => cmd_sweep_k(args),
        Command::SweepSplit(args) => cmd_sweep_split(args),
        Command::SweepEpochs(args) => cmd_sweep_epochs(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn parse_canvas(text: &str) -> Result<(usize, usize)> {
    let parse_side = |s: &str| -> Result<usize> {
        let n: usize = s
            .trim()
            .parse()
            .map_err(|_| anyhow!("bad canvas size {text:?}, expected N or WxH"))?;
        if n == 0 {
            bail!("canvas size must be >= 1");
        }
        Ok(n)
    };
    match text.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse_side(w)?, parse_side(h)?)),
        None => {
            let side = parse_side(text)?;
            Ok((side, side))
        }
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("bad list entry {s:?}"))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad list entry {s:?}"))
        })
        .collect()
}

fn load_features(path: &Path) -> Result<FeatureTable> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read features csv {}", path.display()))?;
    FeatureTable::from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn hyperparams(lr: f64, epochs: usize, h1: usize, h2: usize, seed: u64) -> TrainHyperparams {
    TrainHyperparams {
        learning_rate: lr,
        epochs,
        shuffle_seed: seed,
        h1,
        h2,
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(classes) = args.classes {
        cfg.n_classes = classes;
    }
    if let Some(samples) = args.samples {
        cfg.samples_per_class = samples;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }

    let manifest = ManifestBuilder::start("gen")
        .config(serde_json::to_value(&cfg)?)
        .seed("master_seed", cfg.master_seed)
        .output(&args.out);

    let ds = gen_corpus(&cfg, &args.out)?;
    manifest.write(&args.out.join("manifest.json"))?;

    println!("classes={}", ds.classes.len());
    println!("samples={}", ds.samples.len());
    println!("out={}", args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let grid: GridSpec = args.grid.parse()?;
    let (canvas_w, canvas_h) = parse_canvas(&args.canvas)?;
    let pcfg = PreprocessConfig {
        canvas_w,
        canvas_h,
        speck_max_area: args.specks,
        threshold_override: args.threshold,
    };
    let diagnostics_path = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| args.out.with_extension("diag.csv"));

    let manifest = ManifestBuilder::start("extract")
        .config(serde_json::json!({
            "grid": args.grid,
            "canvas_w": canvas_w,
            "canvas_h": canvas_h,
            "speck_max_area": args.specks,
            "threshold_override": args.threshold,
        }))
        .input(&args.data)
        .output(&args.out)
        .output(&diagnostics_path);

    let ds = load_dataset(&args.data)?;
    let (table, diagnostics) = extract_all(&ds, &pcfg, &grid)?;

    write_file(&args.out, table.to_csv())?;
    let mut diag_csv = String::from("sample_id,threshold,specks_removed,clipped\n");
    for (sample, diag) in ds.samples.iter().zip(&diagnostics) {
        diag_csv.push_str(&format!(
            "{},{},{},{}\n",
            sample.sample_id, diag.threshold, diag.specks_removed, diag.clipped
        ));
    }
    write_file(&diagnostics_path, diag_csv)?;
    manifest.write(&manifest_path(&args.out))?;

    println!("rows={}", table.rows.len());
    println!("features={}", table.n_features());
    println!("out={}", args.out.display());
    Ok(())
}

fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".manifest.json");
    primary_output.with_file_name(name)
}

fn cmd_eval_knn(args: EvalKnnArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("eval-knn")
        .config(serde_json::json!({
            "k": args.k,
            "train_frac": args.train_frac,
            "metric": "euclidean",
        }))
        .seed("seed", args.seed)
        .input(&args.features)
        .output(&args.out);

    let table = load_features(&args.features)?;
    let report = eval::evaluate_knn(&table, args.k, args.train_frac, args.seed)?;
    write_file(&args.out, report.to_json())?;

    if let Some(model_path) = &args.out_model {
        let (train, _) = eval::stratified_split(&table, args.train_frac, args.seed)?;
        let model = KnnModel::fit(train)?;
        write_file(model_path, model.to_file_string())?;
        manifest = manifest.output(model_path);
    }
    manifest.write(&manifest_path(&args.out))?;

    println!("accuracy={}", report.overall_accuracy);
    Ok(())
}

fn cmd_eval_mlp(args: EvalMlpArgs) -> Result<()> {
    let table = load_features(&args.features)?;
    let hp = hyperparams(args.lr, args.epochs, args.h1, args.h2, args.seed);
    let manifest = ManifestBuilder::start("eval-mlp")
        .config(serde_json::to_value(&hp)?)
        .seed("seed", args.seed)
        .seed("shuffle_seed", hp.shuffle_seed)
        .input(&args.features)
        .output(&args.out)
        .output(&args.out_model)
        .output(&args.out_trace);
    let log = args.log_epochs;
    let (report, trace, model) =
        eval::evaluate_mlp_with(&table, &hp, args.train_frac, args.seed, |epoch, _, record| {
            if log {
                eprintln!(
                    "epoch={epoch} mse={} grad_norm={} seconds={:.3}",
                    record.mse, record.grad_norm, record.seconds
                );
            }
        })?;

    write_file(&args.out, report.to_json())?;
    write_file(&args.out_model, model.to_json())?;
    write_file(&args.out_trace, trace.to_csv())?;
    manifest.write(&manifest_path(&args.out))?;

    println!("accuracy={}", report.overall_accuracy);
    Ok(())
}

fn cmd_sweep_k(args: SweepKArgs) -> Result<()> {
    let ks = parse_usize_list(&args.ks)?;
    let manifest = ManifestBuilder::start("sweep-k")
        .config(serde_json::json!({ "ks": ks, "train_frac": args.train_frac }))
        .seed("seed", args.seed)
        .input(&args.features)
        .output(&args.out);
    let table = load_features(&args.features)?;
    let curve = eval::sweep_k(&table, &ks, args.train_frac, args.seed)?;
    write_file(&args.out, curve.to_csv())?;
    manifest.write(&manifest_path(&args.out))?;

    for p in &curve.points {
        println!("k={} accuracy={} seconds={:.3}", p.x, p.accuracy, p.seconds);
    }
    Ok(())
}

fn cmd_sweep_split(args: SweepSplitArgs) -> Result<()> {
    let fractions = parse_f64_list(&args.fractions)?;
    let hp = hyperparams(args.lr, args.epochs, args.h1, args.h2, args.seed);
    let manifest = ManifestBuilder::start("sweep-split")
        .config(serde_json::json!({
            "fractions": fractions,
            "hyperparams": serde_json::to_value(&hp)?,
        }))
        .seed("seed", args.seed)
        .input(&args.features)
        .output(&args.out_knn)
        .output(&args.out_mlp);
    let table = load_features(&args.features)?;
    let (knn_curve, mlp_curve) = eval::sweep_split(&table, &fractions, &hp, args.seed)?;

    write_file(&args.out_knn, knn_curve.to_csv())?;
    write_file(&args.out_mlp, mlp_curve.to_csv())?;
    manifest.write(&manifest_path(&args.out_knn))?;

    for (kp, mp) in knn_curve.points.iter().zip(&mlp_curve.points) {
        println!(
            "fraction={} knn_accuracy={} mlp_accuracy={} knn_seconds={:.3} mlp_seconds={:.3}",
            kp.x, kp.accuracy, mp.accuracy, kp.seconds, mp.seconds
        );
    }
    Ok(())
}

fn cmd_sweep_epochs(args: SweepEpochsArgs) -> Result<()> {
    let epoch_list = parse_usize_list(&args.epochs_list)?;
    let max_epochs = epoch_list.last().copied().unwrap_or(0);
    let hp = hyperparams(args.lr, max_epochs.max(1), args.h1, args.h2, args.seed);
    let manifest = ManifestBuilder::start("sweep-epochs")
        .config(serde_json::json!({
            "epochs_list": epoch_list,
            "train_frac": args.train_frac,
            "hyperparams": serde_json::to_value(&hp)?,
        }))
        .seed("seed", args.seed)
        .input(&args.features)
        .output(&args.out);
    let table = load_features(&args.features)?;
    let curve = eval::sweep_epochs(&table, &epoch_list, &hp, args.train_frac, args.seed)?;
    write_file(&args.out, curve.to_csv())?;
    manifest.write(&manifest_path(&args.out))?;

    for p in &curve.points {
        println!("epochs={} accuracy={} seconds={:.3}", p.x, p.accuracy, p.seconds);
    }
    Ok(())
}

enum LoadedModel {
    Knn(KnnModel),
    Mlp(MlpModel),
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))?;
    if text.starts_with("metric=") {
        Ok(LoadedModel::Knn(KnnModel::from_file_string(&text)?))
    } else if text.trim_start().starts_with('{') {
        Ok(LoadedModel::Mlp(MlpModel::from_json(&text)?))
    } else {
        bail!("{}: unrecognized model format", path.display());
    }
}

fn class_name(classes: Option<&Path>, class_id: usize) -> Result<String> {
    let Some(path) = classes else {
        return Ok(format!("class_{class_id}"));
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read classes file {}", path.display()))?;
    for line in text.lines() {
        if let Some((id, name)) = line.split_once('\t') {
            if id.parse::<usize>().ok() == Some(class_id) {
                return Ok(name.to_string());
            }
        }
    }
    bail!("{}: class {class_id} not listed", path.display());
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let grid: GridSpec = args.grid.parse()?;
    let (canvas_w, canvas_h) = parse_canvas(&args.canvas)?;
    let pcfg = PreprocessConfig {
        canvas_w,
        canvas_h,
        speck_max_area: args.specks,
        threshold_override: None,
    };

    let manifest = ManifestBuilder::start("predict")
        .config(serde_json::json!({
            "grid": args.grid,
            "canvas_w": canvas_w,
            "canvas_h": canvas_h,
            "speck_max_area": args.specks,
            "k": args.k,
        }))
        .input(&args.model)
        .input(&args.image);

    let model = load_model(&args.model)?;
    let bytes = fs::read(&args.image)
        .with_context(|| format!("cannot read image {}", args.image.display()))?;
    let image = read_pgm(&bytes).with_context(|| format!("parsing {}", args.image.display()))?;

    let (binary, _) = glyphrec::preprocess::preprocess_pipeline(&image, &pcfg);
    let features = zone_densities(&binary, &grid)?;

    let class_id = match &model {
        LoadedModel::Knn(m) => m.predict(features.values(), args.k)?.0,
        LoadedModel::Mlp(m) => m.predict(features.values())?,
    };
    let name = class_name(args.classes.as_deref(), class_id)?;
    manifest.write(Path::new("predict.manifest.json"))?;

    println!("class_id={class_id} class_name={name}");
    Ok(())
}
