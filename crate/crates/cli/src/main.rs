use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dre_core::io::{
    is_idx_file, load_csv, load_idx, load_model, read_embedding_csv, save_model, write_atomic, write_embedding_csv, write_scatter_svg,
    Dataset, ModelArtifact, Normalization, RunConfig,
};
use dre_core::metrics::{full_report, LabeledEmbedding, DEFAULT_K};
use dre_core::nn::NetworkSpec;
use dre_core::trainer::{embed, Trainer};

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

/// File locations are left out of the model's config echo so the same run
/// from two working directories gives identical model bytes.
const PATH_KEYS: [&str; 4] = ["data", "labels", "out", "log"];

#[derive(Parser)]
#[command(name = "dre", version, about = "Deep recursive embedding: train, project, evaluate and plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and data.
    Train(TrainArgs),
    /// Project data through a trained model into an embedding CSV.
    Transform(TransformArgs),
    /// Quality metrics for an embedding of the given data.
    Evaluate(EvaluateArgs),
    /// Render an embedding CSV as an SVG scatter plot.
    ExportPlot(PlotArgs),
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file, CSV file, or a directory holding the MNIST training pair.
    #[arg(long)]
    data: Option<PathBuf>,
    /// IDX label file for IDX data.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training log; defaults to the model path with a `.log` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write the embedding of the training rows here.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    embedding: PathBuf,
    /// Neighbourhood size for hit, trustworthiness and continuity.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Evaluate a random subset of this many rows.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV data has a header row.
    #[arg(long)]
    csv_header: bool,
    /// CSV label column, by 0-based index or header name.
    #[arg(long)]
    label_column: Option<String>,
    /// Write the report as CSV here as well as printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Transform(a) => transform(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExportPlot(a) => export_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

/// Reads data the way `cfg` describes for CSV input.
fn load_data(data: &Path, labels: Option<&Path>, cfg: &RunConfig) -> Result<Dataset<f64>> {
    if data.is_dir() {
        let images = data.join(TRAIN_IMAGES);
        if !images.is_file() {
            bail!("{}: directory has no {TRAIN_IMAGES}", data.display());
        }
        let label_file = data.join(TRAIN_LABELS);
        let labels = labels.map(Path::to_path_buf).or_else(|| label_file.is_file().then_some(label_file));
        return Ok(load_idx(&images, labels.as_deref())?);
    }
    if is_idx_file(data) {
        return Ok(load_idx(data, labels)?);
    }
    if labels.is_some() {
        bail!("--labels applies to IDX data; for CSV set label_column");
    }
    Ok(load_csv(data, cfg.label_column.as_ref(), cfg.csv_header)?)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.data.data.is_some() {
        cfg.data = args.data.data.clone();
    }
    if args.data.labels.is_some() {
        cfg.labels = args.data.labels.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.log.is_some() {
        cfg.log = args.log.clone();
    }
    let Some(data) = cfg.data.clone() else { bail!("no training data: pass --data or set `data`") };
    let Some(out) = cfg.out.clone() else { bail!("no model path: pass --out or set `out`") };
    let log_path = cfg.log.clone().unwrap_or_else(|| out.with_extension("log"));

    let ds = load_data(&data, cfg.labels.as_deref(), &cfg)?;
    let normalization = Normalization::fit(&ds.x, cfg.normalize);
    let x = normalization.apply(&ds.x)?;
    log::info!("training on {} rows x {} features, seed {}, plan {}", x.rows(), x.cols(), cfg.seed, cfg.plan);

    let spec = NetworkSpec::model_a(x.cols())?;
    let train_cfg = cfg.train_config::<f64>();
    train_cfg.validate(x.rows(), &spec)?;
    let mut trainer = Trainer::new(&spec, train_cfg)?;
    let outcome = trainer.run_plan(&x);
    let log_text = format!("# seed={}\n{}", cfg.seed, trainer.log.to_text(false));
    write_atomic(&log_path, log_text.as_bytes()).with_context(|| format!("writing {}", log_path.display()))?;
    outcome?;

    let config = cfg.pairs().into_iter().filter(|(k, _)| !PATH_KEYS.contains(&k.as_str())).collect();
    let model = ModelArtifact { params: trainer.params, normalization, config };
    save_model(&out, &model)?;
    if let Some(path) = &args.embedding {
        write_embedding_csv(path, &embed(&model.params, &x)?, ds.labels.as_deref())?;
    }
    log::info!("model written to {}", out.display());
    Ok(())
}

/// The CSV reading settings recorded in a model's config echo.
fn stored_config(model: &ModelArtifact<f64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for key in ["csv_header", "label_column"] {
        if let Some(v) = model.config_value(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn transform(args: TransformArgs) -> Result<()> {
    let model: ModelArtifact<f64> = load_model(&args.model)?;
    let Some(data) = &args.data.data else { bail!("no data: pass --data") };
    let ds = load_data(data, args.data.labels.as_deref(), &stored_config(&model)?)?;
    let x = model.normalization.apply(&ds.x)?;
    let y = embed(&model.params, &x)?;
    write_embedding_csv(&args.out, &y, ds.labels.as_deref())?;
    log::info!("{} rows embedded to {}", y.rows(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let Some(data) = &args.data.data else { bail!("no data: pass --data") };
    let mut cfg = RunConfig { csv_header: args.csv_header, ..Default::default() };
    if let Some(c) = &args.label_column {
        cfg.set("label_column", c)?;
    }
    let ds = load_data(data, args.data.labels.as_deref(), &cfg)?;
    let (y, embedded_labels) = read_embedding_csv::<f64>(&args.embedding)?;
    let labels = ds.labels.or(embedded_labels);
    let mut e = LabeledEmbedding::new(ds.x, y, labels, args.k)?;
    if let Some(m) = args.subsample {
        e = e.subsample(m, args.seed)?;
    }
    let report = full_report(&e)?;
    print!("seed={}\n{}", args.seed, report.to_key_value());
    if let Some(out) = &args.out {
        let mut lines = report.to_csv().lines().map(str::to_string).collect::<Vec<_>>();
        lines[0].push_str(",seed");
        lines[1].push_str(&format!(",{}", args.seed));
        write_atomic(out, format!("{}\n{}\n", lines[0], lines[1]).as_bytes())?;
    }
    Ok(())
}

fn export_plot(args: PlotArgs) -> Result<()> {
    let (y, labels) = read_embedding_csv::<f64>(&args.embedding)?;
    write_scatter_svg(&args.out, &y, labels.as_deref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn stored_csv_settings_are_recovered() {
        let mut cfg = RunConfig::default();
        cfg.set("csv_header", "true").unwrap();
        cfg.set("label_column", "kind").unwrap();
        let params = dre_core::nn::init_params(&NetworkSpec::new(2, vec![3], vec![], 2).unwrap(), 0).unwrap();
        let model = ModelArtifact { params, normalization: Normalization::identity(2), config: cfg.pairs() };
        assert_eq!(stored_config(&model).unwrap().label_column, cfg.label_column);
        assert!(stored_config(&model).unwrap().csv_header);
    }
}
