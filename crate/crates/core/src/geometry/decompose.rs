use nalgebra::{Matrix3, Matrix3x2, Vector3};

use super::{CorrespondenceSet, EssentialMatrix, GeometryError, RelativePose};

/// Depths `(z_a, z_b)` of the point seen at `pa` / `pb` under `X_b = r X_a + t`,
/// from the least-squares solution of `z_a r pa - z_b pb = -t`.
pub fn triangulate_depths(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    pa: &Vector3<f64>,
    pb: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let a = Matrix3x2::from_columns(&[r * pa, -pb]);
    let ata = a.transpose() * a;
    let atb = a.transpose() * (-t);
    let sol = ata.try_inverse()? * atb;
    Some((sol[0], sol[1]))
}

/// The four `(R, ±t)` factorizations of `e`.
pub fn pose_candidates(e: &EssentialMatrix) -> [RelativePose; 4] {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.expect("u requested");
    let mut vt = svd.v_t.expect("v_t requested");
    // order so the null direction is the third column
    let imin = svd.singular_values.imin();
    if imin != 2 {
        u.swap_columns(imin, 2);
        vt.swap_rows(imin, 2);
    }
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    let t: Vector3<f64> = u.column(2).into_owned();
    let mk = |r: Matrix3<f64>, t: Vector3<f64>| {
        RelativePose::new(r, t).expect("SVD factors of a rank-2 matrix form a valid pose")
    };
    [mk(r1, t), mk(r1, -t), mk(r2, t), mk(r2, -t)]
}

/// Number of correspondences that triangulate in front of both cameras.
pub fn cheirality_votes(pose: &RelativePose, cands: &CorrespondenceSet) -> usize {
    cands
        .items()
        .iter()
        .filter(|c| {
            matches!(
                triangulate_depths(pose.rotation(), pose.translation(), &c.pa(), &c.pb()),
                Some((za, zb)) if za > 0.0 && zb > 0.0
            )
        })
        .count()
}

/// Picks the factorization of `e` with the most positive-depth points.
pub fn decompose_essential(
    e: &EssentialMatrix,
    cands: &CorrespondenceSet,
) -> Result<RelativePose, GeometryError> {
    if cands.is_empty() {
        return Err(GeometryError::InsufficientData { needed: 1, got: 0 });
    }
    let candidates = pose_candidates(e);
    let votes: Vec<usize> = candidates
        .iter()
        .map(|p| cheirality_votes(p, cands))
        .collect();
    let best = *votes.iter().max().expect("four candidates");
    let winners: Vec<usize> = (0..4).filter(|&i| votes[i] == best).collect();
    if winners.len() > 1 {
        return Err(GeometryError::AmbiguousDecomposition {
            candidates: candidates.to_vec(),
            votes,
        });
    }
    Ok(candidates[winners[0]])
}

/// Rotation angle of `a ᵀ b` in radians, accurate near zero.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}

/// Angle between two directions in radians.
pub fn direction_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Maximum of the rotation and translation-direction angular errors, degrees.
pub fn pose_error(est: &RelativePose, gt: &RelativePose) -> f64 {
    let rot = rotation_angle_between(gt.rotation(), est.rotation());
    let trans = direction_angle(gt.translation(), est.translation());
    rot.max(trans).to_degrees()
}
