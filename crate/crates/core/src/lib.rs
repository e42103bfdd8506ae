//! Sensor-configuration-agnostic semantic grid mapping and vector map
//! evaluation.
//!
//! The pipeline fuses LiDAR point clouds with per-camera semantic masks into
//! a world-anchored probabilistic BEV grid, renders ego-centric semantic
//! maps, vectorizes them into polyline road elements, and scores vector maps
//! with Chamfer-distance average precision, including the cross-dataset
//! performance-transfer ratio.
//!
//! Modules follow the data flow:
//!
//! - [`geometry`]: rigid transforms, pinhole projection, sensor rigs
//! - [`association`]: LiDAR points -> per-point semantic classes
//! - [`grid`]: Bayesian per-cell class updates, rendering, ego crops
//! - [`vector`]: polyline map elements and their equivalent orderings
//! - [`matching`]: bipartite instance matching and the loss stack
//! - [`eval`]: Chamfer AP, mAP, transfer ratios
//! - [`vectorize`]: classical SemanticMap -> VectorMap baseline
//! - [`io`] / [`synthetic`] / [`pipeline`] / [`cli`]: formats, the synthetic
//!   oracle scene, and the command-line pipeline

pub mod association;
pub mod cli;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod synthetic;
pub mod vector;
pub mod vectorize;

pub use association::{associate, association_coverage, PointCloud, SemanticMask, SemanticPointCloud};
pub use eval::{ap_class, ap_single, chamfer, evaluate, transfer_ratio, EvalConfig, EvalReport, EvalSample};
pub use geometry::{
    back_project, compose, invert, project_point, CameraIntrinsics, Pose, RigidTransform, SensorRig,
};
pub use grid::{update_cell, ConfusionMatrix, GridMapConfig, IntensityPrior, ProbGrid, SemanticMap};
pub use matching::{
    dir_loss, focal_loss, instance_match, p2p_loss, point_cost, seg_loss, total_loss, Assignment,
    ClassScores, LossWeights,
};
pub use vector::{equivalent_orderings, polyline_length, resample, MapClass, MapInstance, Polyline, VectorMap};
pub use vectorize::{vectorize, Vectorizer, VectorizerConfig, VectorizerRegistry};
