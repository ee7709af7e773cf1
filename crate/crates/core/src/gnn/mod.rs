//! Two-layer graph classifiers with SAGE, GAT and HGT style convolutions over
//! heterogeneous or flattened graphs.

mod checkpoint;
mod config;
mod input;
mod layers;
mod model;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use config::{Activation, ConvType, GraphMode, ModelConfig, Readout, N_LAYERS};
pub use input::{GraphInput, RelEdges, RelSpec, Schema, HOMO_NODE_TYPE, HOMO_RELATION};
pub use layers::{
    gat_layer, gat_shapes, hgt_layer, hgt_shapes, sage_layer, sage_shapes, AttentionTrace, Bound, LayerDims, GAT_SLOPE,
};
pub use model::{tie_to_homo, AnyGraph, Forward, Model, NUM_CLASSES};
