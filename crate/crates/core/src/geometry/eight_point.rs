use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};

use super::{CorrespondenceSet, EssentialMatrix, GeometryError};

type Matrix9 = SMatrix<f64, 9, 9>;

/// Relative gap below which the two smallest eigenvalues of the normal matrix
/// are treated as repeated.
pub const DEGENERACY_GAP: f64 = 1e-12;

fn design_row(c: &super::Correspondence) -> [f64; 9] {
    let (x, y, xb, yb) = (c.xa, c.ya, c.xb, c.yb);
    [x * xb, x * yb, x, y * xb, y * yb, y, xb, yb, 1.0]
}

/// Weighted eight-point regression of the essential matrix.
///
/// Accumulates `Xᵀ diag(w)² X` over the design rows and takes the eigenvector
/// of its smallest eigenvalue. The row layout `(x x', x y', x, y x', y y', y,
/// x', y', 1)` pairs with a column-major reading of the solution vector, so the
/// result satisfies `p'ᵀ E p = 0`. Rank 2 is enforced before returning.
pub fn weighted_eight_point(
    cands: &CorrespondenceSet,
    weights: &[f64],
) -> Result<EssentialMatrix, GeometryError> {
    let n = cands.len();
    if n < 8 {
        return Err(GeometryError::InsufficientData { needed: 8, got: n });
    }
    if weights.len() != n {
        return Err(GeometryError::MalformedInput(format!(
            "{} weights for {n} correspondences",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(GeometryError::MalformedInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let active = weights.iter().filter(|&&w| w > 0.0).count();
    if active < 8 {
        return Err(GeometryError::InsufficientData {
            needed: 8,
            got: active,
        });
    }

    let mut normal = Matrix9::zeros();
    for (c, &w) in cands.items().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let row = design_row(c);
        let w2 = w * w;
        for i in 0..9 {
            let ri = w2 * row[i];
            for j in i..9 {
                normal[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            normal[(i, j)] = normal[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(normal);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lo, next) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let scale = eig.eigenvalues[order[8]].abs().max(f64::MIN_POSITIVE);
    if (next - lo) <= DEGENERACY_GAP * scale {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let v = eig.eigenvectors.column(order[0]);
    // column-major: v[0..3] is the first column of E
    let m = Matrix3::from_column_slice(v.as_slice());
    let (ranked, _) = enforce_rank2(&m);
    EssentialMatrix::from_matrix(ranked)
}

/// Unweighted eight-point over `cands`.
pub fn eight_point(cands: &CorrespondenceSet) -> Result<EssentialMatrix, GeometryError> {
    weighted_eight_point(cands, &vec![1.0; cands.len()])
}

/// Zeroes the smallest singular value. Returns the projected matrix and the
/// singular value that was removed.
pub fn enforce_rank2(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut s = svd.singular_values;
    let imin = s.imin();
    let removed = s[imin];
    s[imin] = 0.0;
    (
        u * Matrix3::from_diagonal(&Vector3::new(s[0], s[1], s[2])) * vt,
        removed,
    )
}
