//! Two-view epipolar geometry on intrinsics-normalized coordinates.
//!
//! Convention: a scene point `X_a` in the frame of camera A maps to
//! `X_b = R X_a + t` in camera B, and every true correspondence satisfies
//! `p_bᵀ E p_a = 0` with `E = [t]x R`.

mod decompose;
mod eight_point;
mod epipolar;
mod ransac;
mod types;

pub use decompose::{
    cheirality_votes, decompose_essential, direction_angle, pose_candidates, pose_error,
    rotation_angle_between, triangulate_depths,
};
pub use eight_point::{eight_point, enforce_rank2, weighted_eight_point, DEGENERACY_GAP};
pub use epipolar::{
    epipolar_residual, epipolar_residual_with, essential_from_pose, full_size_verification, skew,
    ResidualForm, DEFAULT_VERIFY_TAU, RESIDUAL_EPS,
};
pub use ransac::{ransac_essential, RansacParams, RansacResult};
pub use types::{
    denormalize_points, normalize_points, CameraIntrinsics, Correspondence, CorrespondenceSet,
    EssentialMatrix, RelativePose,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("camera intrinsics need finite values and positive focal lengths")]
    InvalidIntrinsics,
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("{labels} labels for {items} correspondences")]
    LabelLength { items: usize, labels: usize },
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate configuration: smallest eigenvalue of the normal matrix is repeated")]
    DegenerateConfiguration,
    #[error("cheirality vote is tied between decompositions (votes {votes:?})")]
    AmbiguousDecomposition {
        candidates: Vec<RelativePose>,
        votes: Vec<usize>,
    },
    #[error("no hypothesis reached eight inliers")]
    EstimationFailed,
}
