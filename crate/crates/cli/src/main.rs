use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shufflepoint::data::{load_cloud, save_cloud, synthetic_dataset, Dataset, DatasetManifest, RunConfig};
use shufflepoint::experiments::{
    ablate, bench_sampling, summarize, summary_csv, Arm, BenchSettings, ABLATION_HEADER, BENCH_HEADER,
    BENCH_METRICS_HEADER,
};
use shufflepoint::geometry::{fps, set_worker_override, worker_count, ClusterFps};
use shufflepoint::model::{
    evaluate, load_checkpoint, save_checkpoint, train, Checkpoint, Classifier, ModelConfig, METRICS_HEADER,
};
use shufflepoint::{Error, Result};

/// Shuffled point-set classification and point sampling tools.
#[derive(Parser, Debug)]
#[command(name = "shufflepoint", version)]
struct Cli {
    /// Run configuration (`key = value` lines); defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Sampler worker threads; overrides SHUFFLEPOINT_THREADS, 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Use the generated shape dataset.
    #[arg(long, conflicts_with = "data")]
    synthetic: bool,
    /// Dataset directory with train/ and test/ class folders.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a classifier; writes metrics.csv, confusion.csv and model.psn.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on the test split; writes eval.csv and confusion.csv.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Randomly keep this many points per cloud before inference.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Downsample one cloud file; writes indices.csv and sampled.xyz.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// fps or cluster_fps.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Time plain against clustered farthest-point sampling.
    BenchSampling {
        /// Comma-separated `n_in:n_out` pairs.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Train every ablation arm over several seeds and tabulate the final accuracies.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated subset of no_nefl, her, her_dim, her_lmir.
        #[arg(long)]
        arms: Option<String>,
    },
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) -> Result<()> {
    if data.synthetic {
        cfg.set("data.source", "synthetic")?;
    }
    if let Some(d) = &data.data {
        cfg.set("data.source", d.display())?;
    }
    Ok(())
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", s)?;
    }
    if let Some(t) = cli.threads {
        cfg.set("threads", t)?;
    }
    match &cli.command {
        Command::Train { data, epochs } => {
            apply_data(&mut cfg, data)?;
            if let Some(e) = epochs {
                cfg.set("train.epochs", e)?;
            }
        }
        Command::Eval { data, points, .. } => {
            apply_data(&mut cfg, data)?;
            if let Some(p) = points {
                cfg.set("eval.points", p)?;
            }
        }
        Command::Sample {
            count,
            method,
            clusters,
            ..
        } => {
            if let Some(c) = count {
                cfg.set("sample.count", c)?;
            }
            if let Some(m) = method {
                cfg.set("sample.method", m)?;
            }
            if let Some(c) = clusters {
                cfg.set("sample.clusters", c)?;
            }
        }
        Command::BenchSampling {
            sizes,
            repetitions,
            clusters,
        } => {
            if let Some(s) = sizes {
                cfg.set("bench.sizes", s)?;
            }
            if let Some(r) = repetitions {
                cfg.set("bench.repetitions", r)?;
            }
            if let Some(c) = clusters {
                cfg.set("bench.clusters", c)?;
            }
        }
        Command::Ablate {
            data,
            seeds,
            epochs,
            arms,
        } => {
            apply_data(&mut cfg, data)?;
            if let Some(s) = seeds {
                cfg.set("ablate.seeds", s)?;
            }
            if let Some(e) = epochs {
                cfg.set("train.epochs", e)?;
            }
            if let Some(a) = arms {
                cfg.set("ablate.arms", a)?;
            }
        }
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match cfg.data_source() {
        None => synthetic_dataset(&cfg.synthetic_spec()?),
        Some(root) => DatasetManifest::scan(root)?.load(),
    }
}

/// Model settings with the class count taken from the data actually loaded.
fn model_config(cfg: &RunConfig, data: &Dataset) -> Result<ModelConfig> {
    let mut m = cfg.model_config()?;
    m.classes = data.classes();
    m.validate()?;
    Ok(m)
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let out = Output { dir: dir.to_path_buf() };
        out.write("config.resolved", &cfg.to_text())?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &str) -> Result<fs::File> {
        let mut f = fs::File::create(self.path(name))?;
        writeln!(f, "{header}")?;
        Ok(f)
    }
}

fn run_train(cfg: &RunConfig, out: &Output) -> Result<()> {
    let (train_set, test_set) = load_data(cfg)?;
    let mut model = Classifier::new(model_config(cfg, &train_set)?, train_set.feature_dim(), cfg.seed())?;
    let mut metrics = out.csv("metrics.csv", METRICS_HEADER)?;
    let outcome = train(&mut model, &train_set, &test_set, &cfg.train_config()?, |r| {
        writeln!(metrics, "{}", r.csv_row())?;
        eprintln!(
            "epoch {:>3}  loss {:.4}  test oa {:.3}  macc {:.3}",
            r.epoch, r.train_loss, r.test.overall_accuracy, r.test.mean_class_accuracy
        );
        Ok(())
    })?;
    if let Some(last) = outcome.records.last() {
        out.write("confusion.csv", &last.test.confusion_csv(test_set.class_names()))?;
    }
    let ckpt = Checkpoint::capture(
        &model,
        outcome.head.as_ref(),
        Some(&outcome.adam),
        outcome.head_adam.as_ref(),
    );
    save_checkpoint(&ckpt, out.path("model.psn"))?;
    Ok(())
}

fn run_eval(cfg: &RunConfig, checkpoint: &Path, out: &Output) -> Result<()> {
    let (train_set, test_set) = load_data(cfg)?;
    let mut model = Classifier::new(model_config(cfg, &train_set)?, train_set.feature_dim(), cfg.seed())?;
    load_checkpoint(checkpoint)?.restore(&mut model)?;
    let points = cfg.eval_points()?;
    let e = evaluate(&model, &test_set, points, cfg.eval_seed())?;
    let mut f = out.csv("eval.csv", "points,eval_seed,test_oa,test_macc")?;
    writeln!(
        f,
        "{},{},{},{}",
        points.map(|p| p.to_string()).unwrap_or_else(|| "all".into()),
        cfg.eval_seed(),
        e.overall_accuracy,
        e.mean_class_accuracy
    )?;
    out.write("confusion.csv", &e.confusion_csv(test_set.class_names()))?;
    eprintln!("test oa {:.4}  macc {:.4}", e.overall_accuracy, e.mean_class_accuracy);
    Ok(())
}

fn run_sample(cfg: &RunConfig, input: &Path, out: &Output) -> Result<()> {
    let cloud = load_cloud(input)?;
    let k = cfg.sample_count();
    let indices = match cfg.sample_method() {
        "fps" => fps(&cloud, k, 0)?.indices,
        _ => {
            ClusterFps::new(cfg.sample_clusters(), cfg.seed())
                .with_workers(worker_count())
                .sample(&cloud, k)?
                .indices
        }
    };
    let mut f = out.csv("indices.csv", "order,index")?;
    for (o, i) in indices.iter().enumerate() {
        writeln!(f, "{o},{i}")?;
    }
    save_cloud(&cloud.subset(&indices)?, out.path("sampled.xyz"))?;
    eprintln!("kept {} of {} points", indices.len(), cloud.len());
    Ok(())
}

fn run_bench(cfg: &RunConfig, out: &Output) -> Result<()> {
    let settings = BenchSettings {
        sizes: cfg.bench_sizes()?,
        clusters: cfg.bench_clusters(),
        repetitions: cfg.bench_repetitions(),
        threads: worker_count(),
        seed: cfg.seed(),
    };
    let mut timing = out.csv("bench.csv", BENCH_HEADER)?;
    let mut metrics = out.csv("bench_metrics.csv", BENCH_METRICS_HEADER)?;
    let mut io_error = None;
    bench_sampling(&settings, |row| {
        if let Some(note) = &row.note {
            eprintln!("warning: {} {}->{}: {note}", row.method, row.n_in, row.n_out);
        } else {
            eprintln!(
                "{:<12} {:>8} -> {:<8} {:>10.2} ms  cover {:.5}",
                row.method,
                row.n_in,
                row.n_out,
                row.median_ms.unwrap_or(f64::NAN),
                row.covering_radius.unwrap_or(f64::NAN)
            );
        }
        let r = writeln!(timing, "{}", row.csv_row()).and_then(|_| writeln!(metrics, "{}", row.metrics_row()));
        if let Err(e) = r {
            io_error.get_or_insert(e);
        }
    })?;
    match io_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_ablate(cfg: &RunConfig, out: &Output) -> Result<()> {
    let (train_set, test_set) = load_data(cfg)?;
    let base = model_config(cfg, &train_set)?;
    let arms = cfg
        .ablate_arms()?
        .iter()
        .map(|a| a.parse::<Arm>())
        .collect::<Result<Vec<_>>>()?;
    let mut table = out.csv("ablation.csv", ABLATION_HEADER)?;
    let mut io_error = None;
    let rows = ablate(
        &base,
        &cfg.train_config()?,
        &arms,
        cfg.ablate_seeds(),
        cfg.seed(),
        &train_set,
        &test_set,
        |row| {
            eprintln!(
                "{:<9} seed {:<3} oa {:.3} macc {:.3}",
                row.arm.name(),
                row.seed,
                row.final_record.test.overall_accuracy,
                row.final_record.test.mean_class_accuracy
            );
            if let Err(e) = writeln!(table, "{}", row.csv_row()) {
                io_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    out.write("ablation_summary.csv", &summary_csv(&summarize(&rows)))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    if cfg.threads()? > 0 {
        set_worker_override(cfg.threads()?);
    }
    if let Command::Eval { checkpoint, .. } = &cli.command {
        if !checkpoint.is_file() {
            return Err(Error::Config(format!("checkpoint {} does not exist", checkpoint.display())));
        }
    }
    if let Command::Sample { input, .. } = &cli.command {
        if !input.is_file() {
            return Err(Error::Config(format!("input {} does not exist", input.display())));
        }
    }
    let out = Output::create(&cli.out, &cfg)?;
    match &cli.command {
        Command::Train { .. } => run_train(&cfg, &out),
        Command::Eval { checkpoint, .. } => run_eval(&cfg, checkpoint, &out),
        Command::Sample { input, .. } => run_sample(&cfg, input, &out),
        Command::BenchSampling { .. } => run_bench(&cfg, &out),
        Command::Ablate { .. } => run_ablate(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
    }
}
