use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(())
    }
}

/// Maps pixel coordinates to intrinsics-normalized image coordinates.
pub fn normalize_points(
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
) -> Result<Vec<Vector2<f64>>, GeometryError> {
    k.validate()?;
    pixels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(GeometryError::MalformedInput(format!(
                    "pixel {i} has non-finite coordinates"
                )));
            }
            Ok(Vector2::new((p.x - k.cx) / k.fx, (p.y - k.cy) / k.fy))
        })
        .collect()
}

/// Inverse of [`normalize_points`].
pub fn denormalize_points(
    points: &[Vector2<f64>],
    k: &CameraIntrinsics,
) -> Result<Vec<Vector2<f64>>, GeometryError> {
    k.validate()?;
    Ok(points
        .iter()
        .map(|p| Vector2::new(p.x * k.fx + k.cx, p.y * k.fy + k.cy))
        .collect())
}

/// A putative match between a point in view A and a point in view B, both in
/// normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub xa: f64,
    pub ya: f64,
    pub xb: f64,
    pub yb: f64,
}

impl Correspondence {
    pub const fn new(xa: f64, ya: f64, xb: f64, yb: f64) -> Self {
        Self { xa, ya, xb, yb }
    }

    /// Homogeneous point in view A.
    pub fn pa(&self) -> Vector3<f64> {
        Vector3::new(self.xa, self.ya, 1.0)
    }

    /// Homogeneous point in view B.
    pub fn pb(&self) -> Vector3<f64> {
        Vector3::new(self.xb, self.yb, 1.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.xa, self.ya, self.xb, self.yb]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// The same match seen from the other camera.
    pub fn swapped(&self) -> Self {
        Self::new(self.xb, self.yb, self.xa, self.ya)
    }
}

/// An ordered set of correspondences with optional ground-truth inlier labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    items: Vec<Correspondence>,
    labels: Option<Vec<bool>>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Result<Self, GeometryError> {
        if let Some(i) = items.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::MalformedInput(format!(
                "correspondence {i} has non-finite coordinates"
            )));
        }
        Ok(Self {
            items,
            labels: None,
        })
    }

    pub fn with_labels(
        items: Vec<Correspondence>,
        labels: Vec<bool>,
    ) -> Result<Self, GeometryError> {
        if labels.len() != items.len() {
            return Err(GeometryError::LabelLength {
                items: items.len(),
                labels: labels.len(),
            });
        }
        let mut set = Self::new(items)?;
        set.labels = Some(labels);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Correspondence] {
        &self.items
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn get(&self, i: usize) -> &Correspondence {
        &self.items[i]
    }

    pub fn inlier_count(&self) -> Option<usize> {
        self.labels().map(|l| l.iter().filter(|&&b| b).count())
    }

    /// Builds the subset at `indices`, carrying labels along.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            items: indices.iter().map(|&i| self.items[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Reorders so that `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.select(perm)
    }

    pub fn without_labels(&self) -> Self {
        Self {
            items: self.items.clone(),
            labels: None,
        }
    }
}

/// A 3x3 essential matrix. Constructors normalize to unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Wraps `m` after scaling it to unit Frobenius norm.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let n = m.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::MalformedInput(
                "essential matrix must be finite and non-zero".into(),
            ));
        }
        Ok(Self(m / n))
    }

    /// Wraps `m` as-is; used for deliberately unnormalized inputs in tests and
    /// scale-invariance checks.
    pub fn from_matrix_unnormalized(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn neg(&self) -> Self {
        Self(-self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }

    /// Frobenius distance to `other`, minimized over the sign ambiguity.
    pub fn sign_aligned_distance(&self, other: &Self) -> f64 {
        (self.0 - other.0).norm().min((self.0 + other.0).norm())
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Self {
        Self(Matrix3::from_row_slice(v))
    }
}

/// Relative pose mapping view-A coordinates to view-B: `X_b = r * X_a + s * t`
/// for some unknown positive scale `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl RelativePose {
    /// Validates orthonormality (1e-9), det(r) = +1 (1e-9) and normalizes `t`.
    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self, GeometryError> {
        if !r.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite entries".into()));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho > 1e-9 {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max deviation {ortho:e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidPose(format!("det(r) = {det}")));
        }
        let n = t.norm();
        if n == 0.0 {
            return Err(GeometryError::InvalidPose("zero translation".into()));
        }
        Ok(Self { r, t: t / n })
    }

    pub fn identity_forward() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::z(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }
}
