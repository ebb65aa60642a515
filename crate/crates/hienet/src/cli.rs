//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on usage or configuration errors, 2 on data errors and
//! failed checks.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hienet_core::model::FusionMode;
use serde::Serialize;

use crate::ablate::{run_ablation, write_ablation, ABLATION_MD};
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::dataset::{read_cascades, Dataset, DatasetManifest, Split, TimeUnit};
use crate::error::{usage, HarnessError, Result};
use crate::evaluate::{constant_baseline, evaluate, mean_log_label, write_predictions, MetricSummary};
use crate::gradcheck::{run_suite, TOLERANCE};
use crate::pipeline::{members, prepare};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::train::{train, write_outputs, METRICS_JSON};

pub const PER_CASCADE_CSV: &str = "per_cascade.csv";

#[derive(Debug, Parser)]
#[command(name = "hienet", version, about = "Cascade popularity prediction at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cascade corpus.
    Synth(SynthArgs),
    /// Validate a cascade file and store it with its manifest.
    Ingest(IngestArgs),
    /// Train a model and write metrics and the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Predict incremental popularity for the cascades in a file.
    Predict(PredictArgs),
    /// Compare backward gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the full model, each single-branch ablation and concat fusion.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub cascades: usize,
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Median branching factor (0 gives root-only cascades).
    #[arg(long)]
    pub branching: Option<f64>,
    #[arg(short, long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Seconds,
    Years,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "seconds")]
    pub time_unit: UnitArg,
    /// Label horizon in the file's time unit.
    #[arg(long)]
    pub horizon: u64,
    #[arg(short, long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Cs,
    Sg,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Transformer,
    Concat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory holding cascades.txt and manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON training config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the small desk-scale preset instead of the full defaults.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub disable_branch: Vec<BranchArg>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(short, long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Runs per variant, with consecutive seeds starting at the configured one.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Must match the window the checkpoint was trained with.
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(short, long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Cascade file; only events inside the trained window are used.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match (&args.config, args.desk) {
        (Some(path), _) => TrainConfig::load(path)?,
        (None, true) => TrainConfig::desk(),
        (None, false) => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(w) = args.window {
        c.window = w;
    }
    if let Some(e) = args.epochs {
        c.epochs = e;
    }
    if let Some(lr) = args.lr {
        c.lr = lr;
    }
    if let Some(wd) = args.weight_decay {
        c.weight_decay = wd;
    }
    if let Some(b) = args.batch_size {
        c.batch_size = b;
    }
    for b in &args.disable_branch {
        c.disable_branch(match b {
            BranchArg::Cs => "cs",
            BranchArg::Sg => "sg",
            BranchArg::Cg => "cg",
        })?;
    }
    if let Some(f) = args.fusion {
        c.set_fusion(match f {
            FusionArg::Transformer => FusionMode::Transformer,
            FusionArg::Concat => FusionMode::Concat,
        });
    }
    c.validate()?;
    Ok(c)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec {
        num_cascades: a.cascades,
        num_users: a.users,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    if let Some(b) = a.branching {
        spec.branching_median = b;
    }
    let data = generate_synthetic(&spec)?;
    data.save(&a.out)?;
    let stats = data.manifest.generator.as_ref().expect("synthetic data has stats");
    println!(
        "{} cascades, max final size {}, median {}, tail ratio {:.1}",
        stats.cascades, stats.max_final_size, stats.median_final_size, stats.tail_ratio
    );
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let records = read_cascades(&a.input)?;
    let data = Dataset {
        dir: a.out.clone(),
        manifest: DatasetManifest {
            time_unit: match a.time_unit {
                UnitArg::Seconds => TimeUnit::Seconds,
                UnitArg::Years => TimeUnit::Years,
            },
            label_horizon: a.horizon,
            generator: None,
        },
        records,
    };
    data.save(&a.out)?;
    println!("{} cascades", data.records.len());
    Ok(())
}

fn write_eval_csv(out: &Path, outcome: &crate::train::TrainOutcome) -> Result<()> {
    let cfg = &outcome.report.config.train;
    let mut idx = members(&outcome.cascades, cfg.split, Split::Test);
    if idx.is_empty() {
        idx = members(&outcome.cascades, cfg.split, Split::Validation);
    }
    let set: Vec<_> = idx.iter().map(|&i| &outcome.cascades[i]).collect();
    let eval = evaluate(&outcome.model, &outcome.best.store, &set)?;
    write_predictions(&out.join(PER_CASCADE_CSV), &eval.rows)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let config = resolve_config(&a)?;
    let data = Dataset::load(&a.data)?;
    let resume = match &a.resume {
        Some(dir) => Some(Checkpoint::load(dir)?.0),
        None => None,
    };
    let outcome = train(&data, &config, resume)?;
    write_outputs(&outcome, &a.out)?;
    write_eval_csv(&a.out, &outcome)?;
    let r = &outcome.report;
    println!(
        "best epoch {}: validation MSLE {:.4} (mean predictor {:.4})",
        r.best_epoch, r.best_validation_msle, r.baseline_validation.msle
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    split: String,
    window: u64,
    metrics: MetricSummary,
    mean_predictor: MetricSummary,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (ckpt, model) = Checkpoint::load(&a.checkpoint)?;
    let data = Dataset::load(&a.data)?;
    let cfg = &ckpt.config.train;
    if data.manifest.time_unit != ckpt.config.time_unit {
        return Err(HarnessError::Incompatible(format!(
            "dataset time unit {:?} differs from the checkpoint's {:?}",
            data.manifest.time_unit, ckpt.config.time_unit
        )));
    }
    if data.manifest.label_horizon != ckpt.config.label_horizon {
        return Err(HarnessError::Incompatible(format!(
            "dataset label horizon {} differs from the checkpoint's {}",
            data.manifest.label_horizon, ckpt.config.label_horizon
        )));
    }
    if let Some(w) = a.window {
        if w != cfg.window {
            return Err(HarnessError::Incompatible(format!(
                "window {w} differs from the trained window {}",
                cfg.window
            )));
        }
    }
    let cascades = prepare(&data.records, &ckpt.global, cfg)?;
    let pick = |split| -> Vec<_> {
        let idx = match a.split {
            SplitArg::All => (0..cascades.len()).collect(),
            _ => members(&cascades, cfg.split, split),
        };
        idx.into_iter().map(|i| &cascades[i]).collect()
    };
    let split = match a.split {
        SplitArg::Train | SplitArg::All => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    };
    let set = pick(split);
    let eval = evaluate(&model, &ckpt.store, &set)?;
    let train_set: Vec<_> = members(&cascades, cfg.split, Split::Train).into_iter().map(|i| &cascades[i]).collect();
    let mean = mean_log_label(if train_set.is_empty() { &set } else { &train_set })?;
    let report = EvalReport {
        split: format!("{:?}", a.split).to_lowercase(),
        window: cfg.window,
        metrics: eval.metrics.clone(),
        mean_predictor: constant_baseline(mean, &set)?,
    };
    fs::create_dir_all(&a.out).map_err(HarnessError::io(&a.out))?;
    write_json(&a.out.join(METRICS_JSON), &report)?;
    write_predictions(&a.out.join(PER_CASCADE_CSV), &eval.rows)?;
    println!(
        "MSLE {:.4}, mSLE {:.4} over {} cascades (mean predictor MSLE {:.4})",
        report.metrics.msle, report.metrics.median_sle, report.metrics.count, report.mean_predictor.msle
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (ckpt, model) = Checkpoint::load(&a.checkpoint)?;
    let records = read_cascades(&a.input)?;
    let cascades = prepare(&records, &ckpt.global, &ckpt.config.train)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = HarnessError::io(Path::new("<stdout>"));
    let mut lines = String::from("message_id,observed,predicted\n");
    for c in &cascades {
        let log = model.predict(&ckpt.store, &c.features)?;
        lines.push_str(&format!(
            "{},{},{}\n",
            c.message_id(),
            c.features.observed,
            hienet_core::model::popularity_from_log(log)
        ));
    }
    out.write_all(lines.as_bytes()).map_err(io_err)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let rows = run_suite(a.seed)?;
    let mut ok = true;
    for r in &rows {
        let pass = r.max_rel_err < TOLERANCE;
        ok &= pass;
        println!("{:<40} {:.3e} {}", r.name, r.max_rel_err, if pass { "ok" } else { "FAIL" });
    }
    Ok(ok)
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let a = args.train;
    if a.resume.is_some() || !a.disable_branch.is_empty() || a.fusion.is_some() {
        return Err(usage("ablate picks branches and fusion itself; drop --resume, --disable-branch and --fusion"));
    }
    let config = resolve_config(&a)?;
    let data = Dataset::load(&a.data)?;
    let rows = run_ablation(&data, &config, args.repeats)?;
    fs::create_dir_all(&a.out).map_err(HarnessError::io(&a.out))?;
    write_ablation(&a.out.join(ABLATION_MD), &rows)?;
    print!("{}", crate::ablate::ablation_markdown(&rows));
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => match cmd_gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => return 2,
            Err(e) => Err(e),
        },
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
