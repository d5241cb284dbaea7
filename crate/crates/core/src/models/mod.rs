//! The three segmentation topologies (U-Net, U-Net Large and Dense Residual
//! U-Net), assembled from [`crate::layers`] blocks.

mod config;
mod network;
mod plan;

pub use config::{ModelConfig, Scale, Variant, INPUT_CHANNELS, PAPER_INPUT_SIZE, TOY_INPUT_SIZE};
pub use network::{build_dense_residual_unet, build_unet, Network};
pub use plan::{count_params, plan, BlockKind, BlockSpec, Plan, SkipEdge};
