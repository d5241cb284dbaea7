//! SGD with momentum, validation splitting, early stopping, the three
//! training scenarios (direct transfer, direct training, fine-tuning) and
//! checkpoint persistence.

mod checkpoint;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::checkpoint::{Checkpoint, MAGIC, VERSION};
use crate::data::{augment, collate, AugmentParams, Sample};
use crate::error::{Error, Result};
use crate::layers::{Mode, Param};
use crate::loss::{batch_jaccard_loss, batch_jaccard_loss_grad, evaluate_named, per_image_losses, EvalReport};
use crate::models::{ModelConfig, Network};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Evaluate a pretrained network as-is.
    DirectTransfer,
    /// Train from a seeded random initialization.
    DirectTraining,
    /// Continue training a pretrained network at a reduced learning rate.
    FineTuning,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Scenario> {
        match s {
            "direct_transfer" => Ok(Scenario::DirectTransfer),
            "direct_training" => Ok(Scenario::DirectTraining),
            "fine_tuning" => Ok(Scenario::FineTuning),
            _ => Err(Error::Config(format!(
                "unknown scenario {s:?} (expected direct_transfer, direct_training or fine_tuning)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::DirectTransfer => "direct_transfer",
            Scenario::DirectTraining => "direct_training",
            Scenario::FineTuning => "fine_tuning",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Scenario::FineTuning => 0.001,
            _ => 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: Scenario,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub augment: AugmentParams,
}

impl TrainConfig {
    pub fn for_scenario(scenario: Scenario) -> TrainConfig {
        TrainConfig {
            scenario,
            learning_rate: scenario.default_learning_rate(),
            momentum: 0.9,
            batch_size: 16,
            max_epochs: 500,
            patience: 50,
            val_fraction: 0.2,
            seed: 0,
            augment: AugmentParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return err("batch_size and max_epochs must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return err(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return err(format!(
                "patience must be in [1, max_epochs = {}], got {}",
                self.max_epochs, self.patience
            ));
        }
        self.augment.validate()
    }
}

/// Classical momentum: `v <- mu * v - lr * g`, then `w <- w + v`.
pub fn sgd_momentum_step(params: &mut [&mut Param], lr: f64, mu: f64) -> Result<()> {
    for p in params.iter() {
        if p.grad.shape() != p.value.shape() || p.velocity.shape() != p.value.shape() {
            return Err(Error::State(format!(
                "parameter {:?} has gradient {:?} and velocity {:?}",
                p.value.shape(),
                p.grad.shape(),
                p.velocity.shape()
            )));
        }
    }
    for p in params.iter_mut() {
        let Param { value, grad, velocity } = &mut **p;
        for ((w, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(velocity.data_mut()) {
            *v = mu * *v - lr * g;
            *w += *v;
        }
    }
    Ok(())
}

/// Seeded shuffle, then the first `ceil(val_fraction * n)` items form the
/// validation set. Returns `(train, validation)`.
pub fn split_validation<T: Clone>(items: &[T], val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction must be in [0, 1], got {val_fraction}")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    // Round away float noise before the ceiling (0.2 * 10 = 2.0000000000000004).
    let k = ((val_fraction * items.len() as f64 * 1e9).round() / 1e9).ceil() as usize;
    let val = order[..k].iter().map(|&i| items[i].clone()).collect();
    let train = order[k..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, val))
}

/// Improvements smaller than this do not reset patience.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-7;

/// Tracks the best validation loss and signals when `patience` consecutive
/// epochs pass without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the validation loss of `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Observation {
        let improved = match self.best {
            None => val_loss.is_finite(),
            Some(b) => val_loss < b - IMPROVEMENT_TOLERANCE,
        };
        if improved {
            self.best = Some(val_loss);
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{}\t{:.9}\t{:.9}", r.epoch, r.train_loss, r.val_loss);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    /// The per-epoch callback asked to stop.
    Requested,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: History,
    pub stop: StopReason,
}

/// Confidence maps `[H, W]` for every sample, computed in eval mode.
pub fn predict(net: &mut Network, samples: &[Sample], batch_size: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut rng = Rng::new(0);
    for chunk in samples.chunks(batch_size.max(1)) {
        let (x, _) = collate(&chunk.iter().collect::<Vec<_>>())?;
        let p = net.forward(&x, Mode::Eval, &mut rng)?;
        for i in 0..chunk.len() {
            let item = p.batch_item(i)?;
            let (_, _, h, w) = p.dims4()?;
            out.push(item.reshape(&[h, w])?);
        }
    }
    Ok(out)
}

/// Scores `net` on `samples` (eval mode, threshold 0.5).
pub fn evaluate_network(net: &mut Network, samples: &[Sample], batch_size: usize) -> Result<EvalReport> {
    let preds = predict(net, samples, batch_size)?;
    let truths: Vec<Tensor> = samples.iter().map(|s| s.mask.clone()).collect();
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    evaluate_named(&ids, &preds, &truths)
}

/// Mean per-image soft-Jaccard loss in eval mode.
pub fn validation_loss(net: &mut Network, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut total = 0.0;
    let mut rng = Rng::new(0);
    for chunk in samples.chunks(batch_size.max(1)) {
        let (x, t) = collate(&chunk.iter().collect::<Vec<_>>())?;
        let p = net.forward(&x, Mode::Eval, &mut rng)?;
        total += per_image_losses(&p, &t)?.iter().sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}

/// Splits `samples` into train and validation sets and trains.
pub fn train(net: &mut Network, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (train_set, val_set) = split_validation(samples, cfg.val_fraction, cfg.seed)?;
    train_with_validation(net, &train_set, &val_set, cfg, |_, _| Ok(Control::Continue))
}

/// Minibatch SGD with momentum on `train_set`, early-stopped on the
/// validation loss of `val_set`. `on_epoch` runs after every epoch and may
/// end training early. On return `net` holds the best epoch's parameters.
pub fn train_with_validation(
    net: &mut Network,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&mut Network, &EpochRecord) -> Result<Control>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.scenario == Scenario::DirectTransfer {
        return Err(Error::Config("direct_transfer does not train".into()));
    }
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let mut best: Option<Checkpoint> = None;
    let mut stop = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx.iter().map(|&i| augment(&train_set[i], &cfg.augment, &mut rng)).collect();
            let (x, t) = collate(&batch.iter().collect::<Vec<_>>())?;
            let p = net.forward(&x, Mode::Train, &mut rng)?;
            let loss = batch_jaccard_loss(&p, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            loss_sum += loss * idx.len() as f64;
            let g = batch_jaccard_loss_grad(&p, &t)?;
            net.backward(&g)?;
            sgd_momentum_step(&mut net.params_mut(), cfg.learning_rate, cfg.momentum)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: validation_loss(net, val_set, cfg.batch_size)?,
        };
        if !record.val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        history.epochs.push(record);
        let obs = stopper.observe(epoch, record.val_loss);
        if obs.improved {
            best = Some(Checkpoint::from_network(net, epoch, stopper.best(), rng.state()));
        }
        if on_epoch(net, &record)? == Control::Stop {
            stop = StopReason::Requested;
            break;
        }
        if obs.stop {
            stop = StopReason::EarlyStopping;
            break;
        }
    }

    let best = best.expect("the first finite validation loss is always an improvement");
    best.restore_into(net)?;
    Ok(TrainOutcome {
        best_epoch: stopper.best_epoch(),
        epochs_run: history.epochs.len(),
        best,
        history,
        stop,
    })
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    /// Scores on the evaluation samples (absent when none were given).
    pub report: Option<EvalReport>,
    /// The evaluated network's parameters.
    pub checkpoint: Checkpoint,
    pub training: Option<TrainOutcome>,
}

/// Runs one scenario: evaluate a pretrained network, fine-tune it, or train
/// from scratch; then score the result on `eval_samples`.
pub fn run_scenario(
    cfg: &TrainConfig,
    model: &ModelConfig,
    train_samples: &[Sample],
    eval_samples: &[Sample],
    pretrained: Option<&Checkpoint>,
) -> Result<ScenarioOutcome> {
    let (mut net, training) = match (cfg.scenario, pretrained) {
        (Scenario::DirectTransfer, Some(ckpt)) => (ckpt.to_network()?, None),
        (Scenario::FineTuning, Some(ckpt)) => {
            let mut net = ckpt.to_network()?;
            // A new optimization run starts without momentum history.
            for p in net.params_mut() {
                p.velocity.fill(0.0);
            }
            let outcome = train(&mut net, train_samples, cfg)?;
            (net, Some(outcome))
        }
        (Scenario::DirectTraining, None) => {
            let mut net = Network::new(model, cfg.seed)?;
            let outcome = train(&mut net, train_samples, cfg)?;
            (net, Some(outcome))
        }
        (Scenario::DirectTraining, Some(_)) => {
            return Err(Error::Config("direct_training starts from random weights; do not pass a checkpoint".into()))
        }
        (s, None) => return Err(Error::Config(format!("{} requires a pretrained checkpoint", s.as_str()))),
    };
    let report = if eval_samples.is_empty() {
        None
    } else {
        Some(evaluate_network(&mut net, eval_samples, cfg.batch_size)?)
    };
    let checkpoint = match (&training, pretrained) {
        (Some(t), _) => t.best.clone(),
        (None, Some(p)) => Checkpoint::from_network(&net, p.epochs_completed, p.best_val_loss, p.rng),
        (None, None) => unreachable!("every scenario without training has a checkpoint"),
    };
    Ok(ScenarioOutcome {
        report,
        checkpoint,
        training,
    })
}
