//! Synthetic two-view scenes with known pose and labeled correspondences.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    epipolar_residual, essential_from_pose, Correspondence, CorrespondenceSet, EssentialMatrix,
    RelativePose, DEFAULT_VERIFY_TAU,
};

const MAX_CONSECUTIVE_REJECTIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("scene is infeasible: {0} consecutive point samples rejected")]
    Infeasible(usize),
    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<SynthError>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_points: usize,
    /// Fraction of correspondences whose view-B endpoint is random.
    pub outlier_ratio: f64,
    /// Std dev of the Gaussian noise added to inlier coordinates.
    pub noise_sigma: f64,
    pub depth_range: (f64, f64),
    /// Upper bound on the rotation angle, degrees.
    pub rotation_magnitude: f64,
    /// Length of the camera translation, in scene units.
    pub baseline_magnitude: f64,
    /// Outlier endpoints whose residual under the true essential matrix falls
    /// below this value are redrawn, so a labeled outlier is always a false
    /// match in the sense of the verification threshold. Zero disables it.
    pub outlier_min_residual: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 2000,
            outlier_ratio: 0.5,
            noise_sigma: 0.0,
            depth_range: (2.0, 10.0),
            rotation_magnitude: 15.0,
            baseline_magnitude: 1.0,
            outlier_min_residual: DEFAULT_VERIFY_TAU,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |field, reason: &str| {
            Err(SynthError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n_points == 0 {
            return bad("n_points", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return bad("outlier_ratio", "must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be finite and nonnegative");
        }
        let (near, far) = self.depth_range;
        if !(near > 0.0 && near < far && far.is_finite()) {
            return bad("depth_range", "need 0 < near < far");
        }
        if !(0.0..=180.0).contains(&self.rotation_magnitude) {
            return bad("rotation_magnitude", "must lie in [0, 180] degrees");
        }
        if !(self.baseline_magnitude > 0.0 && self.baseline_magnitude.is_finite()) {
            return bad("baseline_magnitude", "must be positive");
        }
        if !(self.outlier_min_residual >= 0.0 && self.outlier_min_residual.is_finite()) {
            return bad("outlier_min_residual", "must be finite and nonnegative");
        }
        Ok(())
    }

    /// Number of labeled inliers a generated pair will carry.
    pub fn inlier_count(&self) -> usize {
        (self.n_points as f64 * (1.0 - self.outlier_ratio)).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub correspondences: CorrespondenceSet,
    pub gt_pose: RelativePose,
    pub gt_essential: EssentialMatrix,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn sample_pose(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> RelativePose {
    let axis = Unit::new_unchecked(unit_vector(rng));
    let angle = rng.random_range(0.0..=cfg.rotation_magnitude).to_radians();
    let r = Rotation3::from_axis_angle(&axis, angle).into_inner();
    RelativePose::new(r, unit_vector(rng)).expect("sampled rotation is orthonormal")
}

fn in_image(x: f64, y: f64) -> bool {
    x.abs() <= 1.0 && y.abs() <= 1.0
}

/// Synthesizes one labeled two-view pair.
///
/// Inliers are projections of points sampled in the view-A frustum that land
/// in front of and inside view B; outliers keep a random view-A point and get
/// a view-B endpoint drawn uniformly from the image square `[-1, 1]²`, redrawn
/// while it stays within `outlier_min_residual` of the true epipolar geometry.
pub fn generate_pair(cfg: &SceneConfig) -> Result<LabeledPair, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pose = sample_pose(cfg, &mut rng);
    let (r, t) = (pose.rotation(), pose.translation() * cfg.baseline_magnitude);
    let (near, far) = cfg.depth_range;
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");

    let n_in = cfg.inlier_count();
    let mut items = Vec::with_capacity(cfg.n_points);
    let mut rejections = 0;
    while items.len() < n_in {
        let (x, y) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        let z = rng.random_range(near..=far);
        let xb = r * Vector3::new(x * z, y * z, z) + t;
        let ok = xb.z > 1e-9 && in_image(xb.x / xb.z, xb.y / xb.z);
        if !ok {
            rejections += 1;
            if rejections > MAX_CONSECUTIVE_REJECTIONS {
                return Err(SynthError::Infeasible(rejections - 1));
            }
            continue;
        }
        rejections = 0;
        let mut c = Correspondence::new(x, y, xb.x / xb.z, xb.y / xb.z);
        if cfg.noise_sigma > 0.0 {
            c.xa += noise.sample(&mut rng);
            c.ya += noise.sample(&mut rng);
            c.xb += noise.sample(&mut rng);
            c.yb += noise.sample(&mut rng);
        }
        items.push((c, true));
    }
    let gt_essential = essential_from_pose(&pose);
    while items.len() < cfg.n_points {
        let c = Correspondence::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if epipolar_residual(&c, &gt_essential) < cfg.outlier_min_residual {
            rejections += 1;
            if rejections > MAX_CONSECUTIVE_REJECTIONS {
                return Err(SynthError::Infeasible(rejections - 1));
            }
            continue;
        }
        rejections = 0;
        items.push((c, false));
    }
    items.shuffle(&mut rng);

    let (corr, labels): (Vec<_>, Vec<_>) = items.into_iter().unzip();
    Ok(LabeledPair {
        correspondences: CorrespondenceSet::with_labels(corr, labels)
            .expect("generated coordinates are finite"),
        gt_essential,
        gt_pose: pose,
    })
}

/// Per-pair seed derived from the master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Config of pair `index` within a dataset generated from `cfg`.
pub fn pair_config(cfg: &SceneConfig, index: usize) -> SceneConfig {
    SceneConfig {
        seed: derive_seed(cfg.seed, index),
        ..cfg.clone()
    }
}

pub fn generate_dataset(cfg: &SceneConfig, n_pairs: usize) -> Result<Vec<LabeledPair>, SynthError> {
    if n_pairs == 0 {
        return Err(SynthError::InvalidConfig {
            field: "n_pairs",
            reason: "must be at least 1".into(),
        });
    }
    (0..n_pairs)
        .map(|i| {
            generate_pair(&pair_config(cfg, i)).map_err(|e| SynthError::Pair {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}
