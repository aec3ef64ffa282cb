//! Loop-closure detection from superpixel-grid intensity histograms.
//!
//! The pipeline segments each grayscale frame into an `M x N` grid of
//! superpixels, summarizes it as a grid of 256-bin intensity histograms,
//! and retrieves previously seen frames either by an exhaustive similarity
//! scan or through an incrementally grown database of dynamic nodes that
//! groups similar frames and prunes most comparisons. An evaluation layer
//! computes precision-recall curves, Recall@N, AUC, and the PRT composite
//! from detection logs and ground truth.
//!
//! The float-valued math is generic over the scalar type (`f32` or `f64`)
//! through the [`Real`] trait; the aliases below pin the common
//! instantiations. Histograms and label maps are always integer.

pub mod config;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod gray;
pub mod nodedb;
pub mod pipeline;
pub mod scalar;
pub mod segmentation;

pub use config::{ConfigFile, FrameId, Mode, PipelineConfig, SegmentationConfig};
pub use dataset::{load_ground_truth, load_sequence, GroundTruth, SequenceManifest};
pub use descriptor::{extract_lsgd, l1_cell_distance, sim_score, CellHistogram, Lsgd, SharedLsgd, SimScore};
pub use error::{Error, Result};
pub use eval::{auc, evaluate, pr_curve, prt, recall_at_n, EvalReport, PrPoint};
pub use fixture::{Fixture, FixtureSpec, Lcg};
pub use gray::{to_grayscale, GrayImage};
pub use nodedb::{DynamicNode, NodeDatabase, NodeSelection};
pub use pipeline::{exhaustive_query, DetectionResult, LogRow, Pipeline};
pub use scalar::Real;
pub use segmentation::{fuse_distance, init_centers, segment, GridCenter, Segmentation};

/// Scalar used by the shipped binaries.
pub type Scalar = f64;

pub type SegmentationConfig32 = SegmentationConfig<f32>;
pub type SegmentationConfig64 = SegmentationConfig<f64>;
pub type Segmentation32 = Segmentation<f32>;
pub type Segmentation64 = Segmentation<f64>;
pub type PipelineConfig32 = PipelineConfig<f32>;
pub type PipelineConfig64 = PipelineConfig<f64>;
pub type SimScore32 = SimScore<f32>;
pub type SimScore64 = SimScore<f64>;
pub type Pipeline32 = Pipeline<f32>;
pub type Pipeline64 = Pipeline<f64>;
pub type DetectionResult32 = DetectionResult<f32>;
pub type DetectionResult64 = DetectionResult<f64>;
pub type EvalReport32 = EvalReport<f32>;
pub type EvalReport64 = EvalReport<f64>;
