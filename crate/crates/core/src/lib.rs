//! Correspondence pruning for calibrated two-view geometry.
//!
//! The crate covers the full path from putative matches to a verified relative
//! pose: a learned pruning network (visual-cue extraction, visual-spatial
//! fusion, graph + transformer context capture, iterative pruning), the
//! weighted eight-point regression and verification it feeds, a RANSAC
//! baseline, and a synthetic scene generator that supplies exact ground truth.

pub mod contextformer;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synthgen;
pub mod vcextractor;
pub mod vsfusion;

pub use geometry::{
    Correspondence, CorrespondenceSet, EssentialMatrix, GeometryError, RelativePose,
};
pub use nn::{NetConfig, NnError, ParamStore, TokenMatrix};
pub use synthgen::{LabeledPair, SceneConfig};
