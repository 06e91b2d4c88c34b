//! Temporal label propagation for video parsing from a single labeled frame.
//!
//! Rough per-frame class maps are warped from earlier frames along estimated
//! optical flow, weighted by how well the flow reconstructs the current
//! frame, and fused with the current frame's own map by a trained 1x1 layer.

pub mod confidence;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod fusion;
pub mod grid;
pub mod io;
mod linear;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod render;
pub mod synth;

pub use confidence::{
    apply_confidence, reconstruction_residual, residual_to_confidence, ConfidenceMap, ResidualMap,
};
pub use dataset::{Manifest, VideoEntry};
pub use error::{Error, Result};
pub use flow::{correlation_volume, estimate_flow, median_filter_flow, CorrelationVolume, FlowConfig};
pub use fusion::{
    export_weights, fine_tune_fusion, fuse_forward, fusion_loss, train_fusion, FusionInput,
    FusionWeights, TrainConfig, Variant, WeightTable,
};
pub use grid::{argmax_labels, FlowField, Grid, Image, LabelMap, ProbMap, Warp};
pub use linear::TrainLog;
pub use metrics::{compute_metrics, confusion, Confusion, MetricsOptions, MetricsReport};
pub use parser::{extract_features, parse_frame, train_parser, ParserModel};
pub use pipeline::{
    parse_video, select_triplet, train_pipeline, FrameParser, PipelineConfig, VideoSequence, Window,
};
pub use synth::{corrupt_probmap, generate, SynthConfig};
