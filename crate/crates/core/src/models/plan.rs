//! Static description of a network: its ordered block list, skip edges and
//! parameter counts, computed from a [`ModelConfig`] without allocating any
//! weights.

use super::config::ModelConfig;
use crate::error::Result;
use crate::layers::{Conv2d, DenseBlock, FullyConnected, ResidualBlock};
use crate::layers::BlockConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    GaussianNoise,
    DenseEncode,
    ConvEncode,
    Dropout,
    MaxPool,
    FullyConnected,
    Upsample,
    SkipConcat,
    DenseDecode,
    ConvDecode,
    Merge,
    Residual,
    OutputConv,
    OutputMerge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    /// Encoder/decoder stage (0 = full resolution), or the residual index.
    pub index: Option<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Spatial extent the block operates at.
    pub extent: usize,
    /// Number of merge inputs, for merge blocks.
    pub z: Option<usize>,
    pub params: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkipEdge {
    pub encoder_stage: usize,
    pub decoder_stage: usize,
    pub extent: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub blocks: Vec<BlockSpec>,
    pub skip_edges: Vec<SkipEdge>,
}

impl Plan {
    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.params).sum()
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind == kind).count()
    }
}

/// Channel bookkeeping shared by the plan and the network builder.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StageShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub extent: usize,
    pub growth: usize,
}

pub(crate) fn encoder_shapes(cfg: &ModelConfig) -> Vec<StageShape> {
    let mut in_c = cfg.input_channels;
    (0..cfg.stages())
        .map(|s| {
            let shape = StageShape {
                in_channels: in_c,
                out_channels: cfg.stage_filters[s],
                extent: cfg.input_size >> s,
                growth: cfg.dense_growth.get(s).copied().unwrap_or(0),
            };
            in_c = shape.out_channels;
            shape
        })
        .collect()
}

/// Decoder stages, deepest first. Each consumes the upsampled previous output
/// concatenated with the encoder output of the same resolution.
pub(crate) fn decoder_shapes(cfg: &ModelConfig) -> Vec<StageShape> {
    let enc = encoder_shapes(cfg);
    let mut up_c = enc.last().map(|e| e.out_channels).unwrap_or(0);
    (0..cfg.stages())
        .rev()
        .map(|s| {
            let in_c = up_c + enc[s].out_channels;
            let out = if cfg.variant.is_dense() {
                DenseBlock::output_channels_for(in_c, &dense_cfg(cfg, s), cfg.dense_include_input)
            } else {
                cfg.stage_filters[s]
            };
            up_c = out;
            StageShape {
                in_channels: in_c,
                out_channels: out,
                extent: enc[s].extent,
                growth: enc[s].growth,
            }
        })
        .collect()
}

pub(crate) fn dense_cfg(cfg: &ModelConfig, stage: usize) -> BlockConfig {
    BlockConfig {
        n: cfg.dense_growth[stage],
        m: cfg.input_size >> stage,
        z: 1,
        depth: cfg.dense_depth,
        growth: cfg.dense_growth[stage],
    }
}

pub(crate) fn bottleneck_channels(cfg: &ModelConfig) -> usize {
    *cfg.stage_filters.last().expect("validated config has stages")
}

pub(crate) fn bottleneck_volume(cfg: &ModelConfig) -> usize {
    let m = cfg.bottleneck_extent();
    bottleneck_channels(cfg) * m * m
}

fn block(kind: BlockKind, index: Option<usize>, in_c: usize, out_c: usize, extent: usize, params: usize) -> BlockSpec {
    BlockSpec {
        kind,
        index,
        in_channels: in_c,
        out_channels: out_c,
        extent,
        z: None,
        params,
    }
}

fn plain_stage_params(in_c: usize, out_c: usize) -> usize {
    Conv2d::param_count(in_c, out_c) + Conv2d::param_count(out_c, out_c)
}

pub fn plan(cfg: &ModelConfig) -> Result<Plan> {
    cfg.validate()?;
    let dense = cfg.variant.is_dense();
    let stages = cfg.stages();
    let enc = encoder_shapes(cfg);
    let dec = decoder_shapes(cfg);
    let mut blocks = Vec::new();

    for (s, e) in enc.iter().enumerate() {
        let (i, o, m) = (e.in_channels, e.out_channels, e.extent);
        if dense {
            blocks.push(block(BlockKind::GaussianNoise, Some(s), i, i, m, 0));
            let params = DenseBlock::param_count(i, &dense_cfg(cfg, s));
            blocks.push(block(BlockKind::DenseEncode, Some(s), i, o, m, params));
            if s + 1 == stages {
                blocks.push(block(BlockKind::Dropout, Some(s), o, o, m, 0));
            }
        } else {
            blocks.push(block(BlockKind::ConvEncode, Some(s), i, o, m, plain_stage_params(i, o)));
        }
        blocks.push(block(BlockKind::MaxPool, Some(s), o, o, m, 0));
    }

    let volume = bottleneck_volume(cfg);
    let c_b = bottleneck_channels(cfg);
    let m_b = cfg.bottleneck_extent();
    blocks.push(block(
        BlockKind::FullyConnected,
        None,
        c_b,
        c_b,
        m_b,
        FullyConnected::param_count(volume, cfg.fc_width) + FullyConnected::param_count(cfg.fc_width, volume),
    ));
    blocks.push(block(BlockKind::Dropout, None, c_b, c_b, m_b, 0));

    let mut skip_edges = Vec::new();
    for (d, shape) in dec.iter().enumerate() {
        let s = stages - 1 - d;
        let up_c = shape.in_channels - enc[s].out_channels;
        blocks.push(block(BlockKind::Upsample, Some(s), up_c, up_c, shape.extent, 0));
        blocks.push(block(BlockKind::SkipConcat, Some(s), up_c, shape.in_channels, shape.extent, 0));
        skip_edges.push(SkipEdge {
            encoder_stage: s,
            decoder_stage: d,
            extent: shape.extent,
            channels: enc[s].out_channels,
        });
        if dense {
            let params = DenseBlock::param_count(shape.in_channels, &dense_cfg(cfg, s));
            blocks.push(block(BlockKind::DenseDecode, Some(s), shape.in_channels, shape.out_channels, shape.extent, params));
            blocks.push(block(BlockKind::Dropout, Some(s), shape.out_channels, shape.out_channels, shape.extent, 0));
        } else {
            blocks.push(block(
                BlockKind::ConvDecode,
                Some(s),
                shape.in_channels,
                shape.out_channels,
                shape.extent,
                plain_stage_params(shape.in_channels, shape.out_channels),
            ));
        }
    }

    let last = dec.last().expect("at least one stage");
    if dense {
        let merge_in = cfg.dense_depth * last.growth;
        blocks.push(BlockSpec {
            z: Some(cfg.dense_depth),
            ..block(
                BlockKind::Merge,
                None,
                merge_in,
                cfg.merge_filters,
                cfg.input_size,
                Conv2d::param_count(merge_in, cfg.merge_filters),
            )
        });
        for r in 0..cfg.residual_blocks {
            blocks.push(block(
                BlockKind::Residual,
                Some(r),
                cfg.merge_filters,
                cfg.merge_filters,
                cfg.input_size,
                ResidualBlock::param_count(cfg.merge_filters),
            ));
        }
        let out_in = cfg.residual_blocks * cfg.merge_filters;
        blocks.push(BlockSpec {
            z: Some(cfg.residual_blocks),
            ..block(BlockKind::OutputMerge, None, out_in, 1, cfg.input_size, Conv2d::param_count(out_in, 1))
        });
    } else {
        blocks.push(block(
            BlockKind::OutputConv,
            None,
            last.out_channels,
            1,
            cfg.input_size,
            Conv2d::param_count(last.out_channels, 1),
        ));
    }

    Ok(Plan { blocks, skip_edges })
}

/// Exact number of scalar parameters (weights and biases) of `cfg`.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    Ok(plan(cfg)?.param_count())
}
