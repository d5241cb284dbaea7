use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::AugmentParams;
use crate::error::{Error, Result};
use crate::models::{ModelConfig, Scale, Variant};
use crate::training::{Scenario, TrainConfig};

/// Every accepted configuration key, in echo order.
pub const KEYS: &[&str] = &[
    "model.variant",
    "model.scale",
    "model.input_size",
    "model.stage_filters",
    "model.fc_width",
    "model.dense_depth",
    "model.dense_growth",
    "model.dense_include_input",
    "model.residual_blocks",
    "model.merge_filters",
    "model.dropout",
    "model.noise_std",
    "train.scenario",
    "train.learning_rate",
    "train.momentum",
    "train.batch_size",
    "train.max_epochs",
    "train.patience",
    "train.val_fraction",
    "train.seed",
    "augment.rotation_degrees",
    "augment.scale_min",
    "augment.scale_max",
    "augment.crop",
    "data.workers",
];

/// Effective settings of one command: model, training and loader options,
/// built from defaults, a `key=value` file and command-line overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub workers: usize,
    /// Whether any `model.*` key was given explicitly.
    pub model_overridden: bool,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| value(key, x.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Resolves `pairs` (later entries win) on top of the defaults for
    /// `scenario`.
    pub fn resolve(pairs: &[(String, String)], scenario: Scenario) -> Result<RunConfig> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown configuration key {k:?}")));
            }
            map.insert(k.as_str(), v.as_str());
        }

        let variant = map.get("model.variant").map_or(Ok(Variant::DenseResidualUnet), |v| Variant::parse(v))?;
        let scale = map.get("model.scale").map_or(Ok(Scale::Paper), |v| Scale::parse(v))?;
        let mut model = ModelConfig::for_scale(variant, scale);
        let mut widths_given = false;
        for (&k, &v) in map.iter().filter(|(k, _)| k.starts_with("model.")) {
            match k {
                "model.variant" | "model.scale" => {}
                "model.input_size" => model.input_size = value(k, v)?,
                "model.stage_filters" => {
                    model.stage_filters = list(k, v)?;
                    widths_given = true;
                }
                "model.fc_width" => model.fc_width = value(k, v)?,
                "model.dense_depth" => model.dense_depth = value(k, v)?,
                "model.dense_growth" => model.dense_growth = list(k, v)?,
                "model.dense_include_input" => model.dense_include_input = value(k, v)?,
                "model.residual_blocks" => model.residual_blocks = value(k, v)?,
                "model.merge_filters" => model.merge_filters = value(k, v)?,
                "model.dropout" => model.dropout = value(k, v)?,
                "model.noise_std" => model.noise_std = value(k, v)?,
                _ => unreachable!("key list covers {k}"),
            }
        }
        if model.variant.is_dense() && !widths_given {
            model.sync_dense_widths();
        }
        model.validate()?;

        if let Some(s) = map.get("train.scenario") {
            if Scenario::parse(s)? != scenario {
                return Err(Error::Config(format!(
                    "train.scenario={s} conflicts with this command's scenario {}",
                    scenario.as_str()
                )));
            }
        }
        let mut train = TrainConfig::for_scenario(scenario);
        let mut augment = AugmentParams::default();
        let mut workers = 1;
        for (&k, &v) in map.iter() {
            match k {
                "train.learning_rate" => train.learning_rate = value(k, v)?,
                "train.momentum" => train.momentum = value(k, v)?,
                "train.batch_size" => train.batch_size = value(k, v)?,
                "train.max_epochs" => train.max_epochs = value(k, v)?,
                "train.patience" => train.patience = value(k, v)?,
                "train.val_fraction" => train.val_fraction = value(k, v)?,
                "train.seed" => train.seed = value(k, v)?,
                "augment.rotation_degrees" => augment.rotation_degrees = value(k, v)?,
                "augment.scale_min" => augment.scale_min = value(k, v)?,
                "augment.scale_max" => augment.scale_max = value(k, v)?,
                "augment.crop" => augment.crop = value(k, v)?,
                "data.workers" => workers = value(k, v)?,
                _ => {}
            }
        }
        train.augment = augment;
        train.validate()?;
        if workers == 0 {
            return Err(Error::Config("data.workers must be at least 1".into()));
        }
        Ok(RunConfig {
            model,
            train,
            workers,
            model_overridden: map.keys().any(|k| k.starts_with("model.")),
        })
    }

    /// Every effective value, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let t = &self.train;
        let a = &t.augment;
        let scale = match m.scale {
            Scale::Paper => "paper",
            Scale::Toy => "toy",
        };
        let values = [
            m.variant.as_str().to_string(),
            scale.to_string(),
            m.input_size.to_string(),
            join(&m.stage_filters),
            m.fc_width.to_string(),
            m.dense_depth.to_string(),
            join(&m.dense_growth),
            m.dense_include_input.to_string(),
            m.residual_blocks.to_string(),
            m.merge_filters.to_string(),
            m.dropout.to_string(),
            m.noise_std.to_string(),
            t.scenario.as_str().to_string(),
            t.learning_rate.to_string(),
            t.momentum.to_string(),
            t.batch_size.to_string(),
            t.max_epochs.to_string(),
            t.patience.to_string(),
            t.val_fraction.to_string(),
            t.seed.to_string(),
            a.rotation_degrees.to_string(),
            a.scale_min.to_string(),
            a.scale_max.to_string(),
            a.crop.to_string(),
            self.workers.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// The effective configuration as `key=value` lines.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
