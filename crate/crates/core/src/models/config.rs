use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unet,
    UnetLarge,
    DenseResidualUnet,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "unet" => Ok(Variant::Unet),
            "unet_large" => Ok(Variant::UnetLarge),
            "dense_residual_unet" | "dru" => Ok(Variant::DenseResidualUnet),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (expected unet, unet_large or dense_residual_unet)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unet => "unet",
            Variant::UnetLarge => "unet_large",
            Variant::DenseResidualUnet => "dense_residual_unet",
        }
    }

    pub fn is_dense(self) -> bool {
        self == Variant::DenseResidualUnet
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    Toy,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Scale> {
        match s {
            "paper" => Ok(Scale::Paper),
            "toy" => Ok(Scale::Toy),
            _ => Err(Error::Config(format!("unknown scale {s:?} (expected paper or toy)"))),
        }
    }
}

/// Topology and regularization settings of one network.
///
/// For the plain U-Nets `stage_filters[s]` is the filter count of both convs
/// in encoder/decoder stage `s`. For the dense residual variant each stage is
/// a dense block of `dense_depth` convs adding `dense_growth[s]` channels, and
/// `stage_filters[s]` must equal the resulting block width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub scale: Scale,
    pub input_channels: usize,
    pub input_size: usize,
    pub stage_filters: Vec<usize>,
    pub fc_width: usize,
    pub dense_depth: usize,
    pub dense_growth: Vec<usize>,
    pub dense_include_input: bool,
    pub residual_blocks: usize,
    /// Filters of the merge layer that feeds the residual tail.
    pub merge_filters: usize,
    pub dropout: f64,
    pub noise_std: f64,
}

/// RGB + HSV.
pub const INPUT_CHANNELS: usize = 6;
pub const PAPER_INPUT_SIZE: usize = 128;
pub const TOY_INPUT_SIZE: usize = 32;

// Reconstructed paper-scale widths. The large U-Net figures are published;
// the small U-Net and dense residual FC widths are fitted to the published
// parameter totals (7.5M and 149.9M).
const UNET_FILTERS: [usize; 3] = [32, 64, 128];
const UNET_FC: usize = 100;
const UNET_LARGE_FILTERS: [usize; 3] = [45, 90, 180];
const UNET_LARGE_FC: usize = 1450;
const DRU_DEPTH: usize = 4;
const DRU_GROWTH: [usize; 3] = [8, 16, 32];
const DRU_FC: usize = 2275;
const DRU_MERGE: usize = 32;
const DRU_RESIDUAL_BLOCKS: usize = 4;

impl ModelConfig {
    /// Full-size configuration at 128x128 input.
    pub fn paper(variant: Variant) -> ModelConfig {
        let base = ModelConfig {
            variant,
            scale: Scale::Paper,
            input_channels: INPUT_CHANNELS,
            input_size: PAPER_INPUT_SIZE,
            stage_filters: UNET_FILTERS.to_vec(),
            fc_width: UNET_FC,
            dense_depth: 0,
            dense_growth: Vec::new(),
            dense_include_input: false,
            residual_blocks: 0,
            merge_filters: 0,
            dropout: 0.5,
            noise_std: 0.025,
        };
        match variant {
            Variant::Unet => base,
            Variant::UnetLarge => ModelConfig {
                stage_filters: UNET_LARGE_FILTERS.to_vec(),
                fc_width: UNET_LARGE_FC,
                ..base
            },
            Variant::DenseResidualUnet => ModelConfig {
                stage_filters: DRU_GROWTH.iter().map(|g| g * DRU_DEPTH).collect(),
                fc_width: DRU_FC,
                dense_depth: DRU_DEPTH,
                dense_growth: DRU_GROWTH.to_vec(),
                residual_blocks: DRU_RESIDUAL_BLOCKS,
                merge_filters: DRU_MERGE,
                ..base
            },
        }
    }

    /// Two-stage network at 32x32 input, small enough to train in seconds.
    pub fn toy(variant: Variant) -> ModelConfig {
        let base = ModelConfig {
            variant,
            scale: Scale::Toy,
            input_channels: INPUT_CHANNELS,
            input_size: TOY_INPUT_SIZE,
            stage_filters: vec![8, 16],
            fc_width: 32,
            dense_depth: 0,
            dense_growth: Vec::new(),
            dense_include_input: false,
            residual_blocks: 0,
            merge_filters: 0,
            dropout: 0.5,
            noise_std: 0.025,
        };
        match variant {
            Variant::Unet => base,
            Variant::UnetLarge => ModelConfig {
                stage_filters: vec![12, 24],
                fc_width: 48,
                ..base
            },
            Variant::DenseResidualUnet => ModelConfig {
                stage_filters: vec![12, 24],
                dense_depth: 3,
                dense_growth: vec![4, 8],
                residual_blocks: 4,
                merge_filters: 8,
                ..base
            },
        }
    }

    pub fn for_scale(variant: Variant, scale: Scale) -> ModelConfig {
        match scale {
            Scale::Paper => ModelConfig::paper(variant),
            Scale::Toy => ModelConfig::toy(variant),
        }
    }

    pub fn stages(&self) -> usize {
        self.stage_filters.len()
    }

    /// Spatial extent at the fully connected bottleneck.
    pub fn bottleneck_extent(&self) -> usize {
        self.input_size >> self.stages()
    }

    /// Recomputes `stage_filters` from the dense settings (dense variant only).
    pub fn sync_dense_widths(&mut self) {
        if self.variant.is_dense() {
            let mut in_c = self.input_channels;
            self.stage_filters = self
                .dense_growth
                .iter()
                .map(|g| {
                    let w = self.dense_depth * g + if self.dense_include_input { in_c } else { 0 };
                    in_c = w;
                    w
                })
                .collect();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.input_channels == 0 || self.input_size == 0 || self.fc_width == 0 {
            return err("input_channels, input_size and fc_width must be at least 1".into());
        }
        if self.stage_filters.is_empty() || self.stage_filters.contains(&0) {
            return err(format!("stage_filters must be non-empty and positive, got {:?}", self.stage_filters));
        }
        let div = 1usize << self.stages();
        if !self.input_size.is_multiple_of(div) {
            return err(format!(
                "input_size {} is not divisible by 2^{} = {div}",
                self.input_size,
                self.stages()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.noise_std >= 0.0) {
            return err(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if self.variant.is_dense() {
            if self.dense_depth == 0 {
                return err("dense_depth must be at least 1".into());
            }
            if self.dense_growth.len() != self.stages() || self.dense_growth.contains(&0) {
                return err(format!(
                    "dense_growth {:?} must list one positive growth per stage ({} stages)",
                    self.dense_growth,
                    self.stages()
                ));
            }
            let mut synced = self.clone();
            synced.sync_dense_widths();
            if synced.stage_filters != self.stage_filters {
                return err(format!(
                    "stage_filters {:?} disagree with dense block widths {:?}",
                    self.stage_filters, synced.stage_filters
                ));
            }
            if self.residual_blocks == 0 || self.merge_filters == 0 {
                return err("dense residual variant needs residual_blocks and merge_filters >= 1".into());
            }
        } else if self.residual_blocks != 0 || self.dense_depth != 0 || !self.dense_growth.is_empty() {
            return err(format!(
                "{} has no dense or residual blocks; dense_depth, dense_growth and residual_blocks must be empty",
                self.variant.as_str()
            ));
        }
        Ok(())
    }
}
