//! Command-line surface: training scenarios, evaluation, prediction and
//! verification utilities. [`run`] is the whole program; the binary only
//! forwards its arguments.

pub mod config;
pub mod gradcheck;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    decode_image, import_paired_dirs, load_samples, make_input, resize_bilinear, resize_to, select_subset_md5,
    write_confidence_png, write_mask_png, DatasetManifest, ManifestEntry, Sample, Split,
};
use crate::error::{Error, Result};
use crate::models::{plan, ModelConfig, Network};
use crate::tensor::Tensor;
use crate::training::{predict, run_scenario, Checkpoint, Scenario};

pub use self::config::{parse_override, parse_pairs, read_pairs, RunConfig, KEYS};

pub const CHECKPOINT_FILE: &str = "checkpoint.drus";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const RUN_LOG: &str = "run.log";

#[derive(Parser, Debug)]
#[command(name = "drunet", about = "Skin segmentation with dense residual U-Nets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key=value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loader threads; 1 keeps runs reproducible.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from scratch on public data (direct_training).
    Pretrain(TrainArgs),
    /// Train from scratch on the target data (direct_training).
    Train(TrainArgs),
    /// Continue training a checkpoint at the fine-tuning rate.
    Finetune(TrainArgs),
    /// Score a checkpoint on the manifest's eval split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write confidence maps and binary masks for images.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Finite-difference checks of every layer and both toy networks.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Block table and parameter count of a configuration.
    Params {
        #[command(flatten)]
        common: Common,
    },
    /// Build a manifest from paired image and mask directories.
    Import {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        source: String,
        #[arg(long, default_value = "")]
        mask_suffix: String,
        /// Keep only the first N images in MD5 order.
        #[arg(long)]
        md5_subset: Option<usize>,
        /// Manifest file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Console output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Pretrain(a) | Command::Train(a) => cmd_train(Scenario::DirectTraining, &a, out),
        Command::Finetune(a) => cmd_train(Scenario::FineTuning, &a, out),
        Command::Eval {
            common,
            checkpoint,
            manifest,
            out: dir,
        } => cmd_eval(&common, &checkpoint, &manifest, &dir, out),
        Command::Predict {
            common,
            checkpoint,
            out: dir,
            images,
        } => cmd_predict(&common, &checkpoint, &images, &dir, out),
        Command::Gradcheck { common } => cmd_gradcheck(&common, out),
        Command::Params { common } => cmd_params(&common, out),
        Command::Import {
            images,
            masks,
            split,
            source,
            mask_suffix,
            md5_subset,
            out: path,
        } => cmd_import(&images, &masks, &split, &source, &mask_suffix, md5_subset, &path, out),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Config file, then `--set` overrides, then `--seed` and `--workers`.
pub fn resolve_config(common: &Common, scenario: Scenario) -> Result<RunConfig> {
    let mut pairs = match &common.config {
        Some(p) => read_pairs(p)?,
        None => Vec::new(),
    };
    for s in &common.set {
        pairs.push(parse_override(s)?);
    }
    if let Some(seed) = common.seed {
        pairs.push(("train.seed".into(), seed.to_string()));
    }
    pairs.push(("data.workers".into(), common.workers.to_string()));
    RunConfig::resolve(&pairs, scenario)
}

/// Takes the model from `ckpt`; explicit `model.*` keys must agree with it.
fn adopt_checkpoint_model(cfg: &mut RunConfig, ckpt: &Checkpoint) -> Result<()> {
    if cfg.model_overridden && cfg.model != ckpt.model {
        return Err(Error::Config(
            "model.* keys conflict with the checkpoint's model configuration".into(),
        ));
    }
    cfg.model = ckpt.model.clone();
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_run_log(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let path = dir.join(RUN_LOG);
    let text = format!("# drunet {command}\n{}", cfg.echo());
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn load_entries(entries: &[ManifestEntry], cfg: &RunConfig) -> Result<Vec<Sample>> {
    load_samples(entries, cfg.model.input_size, cfg.workers)
}

fn cmd_train(scenario: Scenario, a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = resolve_config(&a.common, scenario)?;
    let pretrained = match (&a.checkpoint, scenario) {
        (Some(_), Scenario::DirectTraining) => {
            return Err(Error::Config("training from scratch takes no --checkpoint".into()))
        }
        (None, Scenario::FineTuning) => return Err(Error::Config("finetune requires --checkpoint".into())),
        (Some(p), _) => Some(Checkpoint::load(p)?),
        (None, _) => None,
    };
    if let Some(ckpt) = &pretrained {
        adopt_checkpoint_model(&mut cfg, ckpt)?;
    }
    let manifest = DatasetManifest::read(&a.manifest)?;
    manifest.check_files()?;
    prepare_out_dir(&a.out)?;
    write_run_log(&a.out, scenario.as_str(), &cfg)?;

    let train_samples = load_entries(&manifest.training_entries(), &cfg)?;
    let eval_samples = load_entries(&manifest.split(Split::Eval), &cfg)?;
    let outcome = run_scenario(&cfg.train, &cfg.model, &train_samples, &eval_samples, pretrained.as_ref())?;

    outcome.checkpoint.save(a.out.join(CHECKPOINT_FILE))?;
    if let Some(t) = &outcome.training {
        t.history.write(a.out.join(HISTORY_FILE))?;
        writeln!(
            out,
            "trained {} epochs ({:?}); best epoch {} with validation loss {:.6}",
            t.epochs_run,
            t.stop,
            t.best_epoch,
            t.best.best_val_loss.unwrap_or(f64::NAN)
        )
        .map_err(io_err)?;
    }
    if let Some(report) = &outcome.report {
        let path = a.out.join(REPORT_FILE);
        std::fs::write(&path, report.to_tsv()).map_err(|e| Error::io(&path, e))?;
        writeln!(out, "eval J (D): {}", report.summary()).map_err(io_err)?;
    }
    Ok(0)
}

fn cmd_eval(common: &Common, checkpoint: &Path, manifest: &Path, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = resolve_config(common, Scenario::DirectTransfer)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    adopt_checkpoint_model(&mut cfg, &ckpt)?;
    let manifest = DatasetManifest::read(manifest)?;
    let entries = manifest.split(Split::Eval);
    if entries.is_empty() {
        return Err(Error::Config("manifest has no eval entries".into()));
    }
    manifest.check_files()?;
    prepare_out_dir(dir)?;
    write_run_log(dir, "eval", &cfg)?;
    let samples = load_entries(&entries, &cfg)?;
    let outcome = run_scenario(&cfg.train, &cfg.model, &[], &samples, Some(&ckpt))?;
    let report = outcome.report.expect("eval split is non-empty");
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, report.to_tsv()).map_err(|e| Error::io(&path, e))?;
    writeln!(out, "{}", report.summary()).map_err(io_err)?;
    Ok(0)
}

/// Confidence map at network resolution plus its source dimensions.
fn predict_one(net: &mut Network, image: &Path, size: usize) -> Result<(Tensor, usize, usize)> {
    let rgb = decode_image(image)?;
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let sample = Sample {
        image6: make_input(&resize_bilinear(&rgb, size)?)?,
        mask: Tensor::zeros(&[size, size])?,
        id: String::new(),
    };
    let p = predict(net, std::slice::from_ref(&sample), 1)?.remove(0);
    Ok((p, h, w))
}

fn write_prediction(p: &Tensor, h: usize, w: usize, dir: &Path, stem: &str) -> Result<()> {
    write_confidence_png(dir.join(format!("{stem}_confidence.png")), p)?;
    write_mask_png(dir.join(format!("{stem}_mask.png")), p)?;
    let full = resize_to(p, h, w, false)?;
    write_confidence_png(dir.join(format!("{stem}_confidence_full.png")), &full)?;
    write_mask_png(dir.join(format!("{stem}_mask_full.png")), &resize_to(p, h, w, true)?)?;
    Ok(())
}

fn cmd_predict(common: &Common, checkpoint: &Path, images: &[PathBuf], dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = resolve_config(common, Scenario::DirectTransfer)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    adopt_checkpoint_model(&mut cfg, &ckpt)?;
    let mut net = ckpt.to_network()?;
    prepare_out_dir(dir)?;
    write_run_log(dir, "predict", &cfg)?;
    let mut failed = 0;
    for image in images {
        let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let result = predict_one(&mut net, image, cfg.model.input_size)
            .and_then(|(p, h, w)| write_prediction(&p, h, w, dir, &stem));
        match result {
            Ok(()) => writeln!(out, "{}: ok", image.display()).map_err(io_err)?,
            Err(e) => {
                failed += 1;
                eprintln!("{e}");
            }
        }
    }
    if failed > 0 {
        writeln!(out, "{failed} of {} images failed", images.len()).map_err(io_err)?;
        return Ok(1);
    }
    Ok(0)
}

fn cmd_gradcheck(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let seed = common.seed.unwrap_or(0);
    let mut rows = gradcheck::layer_suite(&gradcheck::SEEDS)?;
    rows.extend(gradcheck::network_suite(gradcheck::NETWORK_SAMPLES, seed)?);
    write!(out, "{}", gradcheck::render_table(&rows)).map_err(io_err)?;
    let failed = rows.iter().filter(|r| !r.passed()).count();
    writeln!(out, "{} checks, {failed} failed", rows.len()).map_err(io_err)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

/// Block table and totals for `model`.
pub fn params_report(model: &ModelConfig) -> Result<String> {
    let p = plan(model)?;
    let mut s = format!(
        "model {} ({}x{} input, {} stages)\n",
        model.variant.as_str(),
        model.input_size,
        model.input_size,
        model.stages()
    );
    let _ = writeln!(s, "{:<15} {:>5} {:>6} {:>6} {:>6} {:>12}", "block", "index", "in", "out", "extent", "params");
    for b in &p.blocks {
        let index = b.index.map_or("-".to_string(), |i| i.to_string());
        let _ = writeln!(
            s,
            "{:<15} {:>5} {:>6} {:>6} {:>6} {:>12}",
            format!("{:?}", b.kind),
            index,
            b.in_channels,
            b.out_channels,
            b.extent,
            b.params
        );
    }
    let total = p.param_count();
    let _ = writeln!(s, "total parameters: {total} ({:.1}M)", total as f64 / 1e6);
    Ok(s)
}

fn cmd_params(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_config(common, Scenario::DirectTraining)?;
    write!(out, "{}", params_report(&cfg.model)?).map_err(io_err)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_import(
    images: &Path,
    masks: &Path,
    split: &str,
    source: &str,
    mask_suffix: &str,
    md5_subset: Option<usize>,
    path: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut manifest = import_paired_dirs(images, masks, mask_suffix, Split::parse(split)?, source)?;
    if let Some(n) = md5_subset {
        let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| e.image.clone()).collect();
        let keep = select_subset_md5(&paths, n)?;
        let entries = keep
            .iter()
            .map(|p| manifest.entries.iter().find(|e| &e.image == p).cloned().expect("selected from entries"))
            .collect();
        manifest = DatasetManifest::new(source, entries);
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out_dir(parent)?;
    }
    manifest.write(path)?;
    writeln!(out, "wrote {} entries to {}", manifest.len(), path.display()).map_err(io_err)?;
    Ok(0)
}
