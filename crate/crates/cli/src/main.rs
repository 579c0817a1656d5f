use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use handcraft::cmlpe::{build_synthetic_dataset, train_generator, CmlpeConfig, GenerationPair};
use handcraft::harness::{
    evaluate_accuracy, evaluate_generator, load_checkpoint, load_classifier, load_generator, run_selftest,
    save_classifier, save_generator, train_two_phase, write_metrics, CheckpointMeta, DatasetPreset,
    ExperimentConfig, SELFTEST_TOLERANCE,
};
use handcraft::posedata::{
    center_on_body, interpolate_missing, savgol_smooth, zero_hand_depth, Dataset, LandmarkLayout, Split,
};

const SAVGOL_WINDOW: usize = 15;
const SAVGOL_ORDER: usize = 3;

#[derive(Parser, Debug)]
#[command(name = "handcraft", version, about = "Pose-based sign recognition with synthetic pretraining")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory holding manifest.json.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill gaps, smooth and zero hand depth; writes a new dataset directory.
    Preprocess {
        /// Also express every frame relative to the shoulder midpoint.
        #[arg(long)]
        center: bool,
    },
    /// Train the forward/reversed generator pair on the train split.
    TrainGen {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a class-balanced synthetic dataset.
    Synth {
        #[arg(long)]
        generator: PathBuf,
        /// Clips per class; defaults to the largest real class count.
        #[arg(long)]
        n_per_class: Option<usize>,
    },
    /// Train a classifier, with synthetic pretraining when `--synthetic` is given.
    TrainSlr {
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Write the JSON-lines metrics log here.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Published hyperparameters for a dataset, used when no --config is given.
        #[arg(long)]
        preset: Option<DatasetPreset>,
        #[arg(long, value_enum, default_value_t = ModelKind::TransformerSl)]
        model: ModelKind,
    },
    /// Accuracy for a classifier checkpoint, MPJPE for a generator checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Run the finite-difference gradient self-test.
    Gradcheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    TransformerSl,
    MambaSl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn usage_error(kind: ErrorKind, msg: &str) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("HANDCRAFT_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().with_context(|| format!("HANDCRAFT_THREADS={raw:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn dataset_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    match cli.dataset.clone().or_else(|| cfg.and_then(|c| c.dataset.clone())) {
        Some(p) => p,
        None => usage_error(ErrorKind::MissingRequiredArgument, "the --dataset <DIR> argument is required"),
    }
}

fn out_path(cli: &Cli) -> &Path {
    match &cli.out {
        Some(p) => p,
        None => usage_error(ErrorKind::MissingRequiredArgument, "the --out <PATH> argument is required"),
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Gradcheck => gradcheck(cli.seed.unwrap_or(0)),
        Command::Preprocess { center } => {
            let ds = load_dataset(&dataset_dir(&cli, cfg.as_ref()))?;
            let out = out_path(&cli);
            let layout = LandmarkLayout::default();
            let clean = ds.map_sequences(|s| {
                let s = savgol_smooth(&interpolate_missing(s), SAVGOL_WINDOW, SAVGOL_ORDER)?;
                let s = zero_hand_depth(&s, &layout);
                Ok(if *center { center_on_body(&s, &layout) } else { s })
            })?;
            clean.save(out)?;
            println!("wrote {} samples to {}", clean.samples.len(), out.display());
            Ok(())
        }
        Command::TrainGen { steps } => {
            let ds = load_dataset(&dataset_dir(&cli, cfg.as_ref()))?;
            let out = out_path(&cli);
            let mut gcfg = cfg
                .as_ref()
                .and_then(|c| c.generator.clone())
                .unwrap_or_else(|| CmlpeConfig::with_classes(ds.num_classes()));
            gcfg.num_classes = ds.num_classes();
            if let Some(steps) = steps {
                gcfg.train_steps = *steps;
            }
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let pair = GenerationPair::new(gcfg, seed)?;
            let (pair, trace) = train_generator(pair, &ds.split_owned(Split::Train), seed)?;
            save_generator(&pair, out)?;
            if let (Some(f), Some(r)) = (trace.forward.last(), trace.reversed.last()) {
                println!("final loss forward {f:.6} reversed {r:.6}");
            }
            Ok(())
        }
        Command::Synth { generator, n_per_class } => {
            let ds = load_dataset(&dataset_dir(&cli, cfg.as_ref()))?;
            let out = out_path(&cli);
            let pair = load_generator(generator).with_context(|| format!("loading generator {}", generator.display()))?;
            if pair.config().num_classes != ds.num_classes() {
                bail!("generator has {} classes, dataset has {}", pair.config().num_classes, ds.num_classes());
            }
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let syn = build_synthetic_dataset(&pair, &ds, *n_per_class, seed)?;
            syn.save(out)?;
            println!("wrote {} synthetic samples to {}", syn.samples.len(), out.display());
            Ok(())
        }
        Command::TrainSlr { synthetic, metrics, preset, model } => {
            let cfg = match cfg.clone() {
                Some(c) => c,
                None => {
                    let preset = preset.unwrap_or(DatasetPreset::Include);
                    let mut c = match model {
                        ModelKind::TransformerSl => ExperimentConfig::transformer_preset(preset),
                        ModelKind::MambaSl => ExperimentConfig::mamba_preset(preset),
                    };
                    c.seed = cli.seed.unwrap_or(0);
                    c
                }
            };
            let ds = load_dataset(&dataset_dir(&cli, Some(&cfg)))?;
            let out = out_path(&cli);
            let syn = synthetic.as_deref().map(load_dataset).transpose()?;
            let mut cfg = cfg;
            if syn.is_none() {
                cfg.synthetic_pretrain_steps = 0;
            }
            let outcome = train_two_phase(&cfg, &ds, syn.as_ref())?;
            save_classifier(&outcome.model, out)?;
            if let Some(path) = metrics {
                write_metrics(path, &outcome.metrics)?;
            }
            println!("trained {} steps ({} synthetic), saved {}", cfg.total_steps, cfg.synthetic_pretrain_steps, out.display());
            Ok(())
        }
        Command::Eval { model, split } => {
            let ds = load_dataset(&dataset_dir(&cli, cfg.as_ref()))?;
            let (meta, _) = load_checkpoint(model).with_context(|| format!("loading checkpoint {}", model.display()))?;
            match meta {
                CheckpointMeta::Classifier { .. } => {
                    let clf = load_classifier(model)?;
                    println!("{}", evaluate_accuracy(&clf, &ds, (*split).into())?);
                }
                CheckpointMeta::Generator { .. } => {
                    let report = evaluate_generator(&load_generator(model)?, &ds, (*split).into())?;
                    println!("forward {}\nreversed {}", report.forward, report.reversed);
                }
            }
            Ok(())
        }
    }
}

fn gradcheck(seed: u64) -> Result<()> {
    let cases = run_selftest(seed)?;
    let mut failed = 0;
    for c in &cases {
        let status = if c.passed { "ok" } else { "FAIL" };
        println!("{status:4} {:<32} {:>3} checked  max rel err {:.3e}", c.name, c.checked, c.max_rel_error);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} cases exceed {SELFTEST_TOLERANCE:e}", cases.len());
    }
    println!("all {} cases within {SELFTEST_TOLERANCE:e}", cases.len());
    Ok(())
}
