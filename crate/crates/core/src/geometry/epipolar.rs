use nalgebra::{Matrix3, Vector3};

use super::{Correspondence, CorrespondenceSet, EssentialMatrix, RelativePose};

/// Guards the residual denominator at the epipole.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Default full-size verification threshold on the epipolar residual.
pub const DEFAULT_VERIFY_TAU: f64 = 1e-4;

/// Which vector supplies the last two denominator terms of the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualForm {
    /// `(Eᵀp')₁² + (Eᵀp')₂²`: the gradient with respect to `p`, giving the
    /// usual symmetric (Sampson) distance.
    #[default]
    Symmetric,
    /// `(Ep')₁² + (Ep')₂²` read verbatim.
    Literal,
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `E = [t]x R`, Frobenius-normalized.
pub fn essential_from_pose(pose: &RelativePose) -> EssentialMatrix {
    let e = skew(pose.translation()) * pose.rotation();
    EssentialMatrix::from_matrix_unnormalized(e / e.norm())
}

pub fn epipolar_residual(c: &Correspondence, e: &EssentialMatrix) -> f64 {
    epipolar_residual_with(c, e, ResidualForm::Symmetric)
}

pub fn epipolar_residual_with(c: &Correspondence, e: &EssentialMatrix, form: ResidualForm) -> f64 {
    let m = e.matrix();
    let p = c.pa();
    let q = c.pb();
    let ep = m * p;
    let second = match form {
        ResidualForm::Symmetric => m.transpose() * q,
        ResidualForm::Literal => m * q,
    };
    let num = q.dot(&ep);
    let den = ep.x * ep.x + ep.y * ep.y + second.x * second.x + second.y * second.y + RESIDUAL_EPS;
    num * num / den
}

/// Flags every correspondence whose residual under `e` is below `tau`.
pub fn full_size_verification(ic: &CorrespondenceSet, e: &EssentialMatrix, tau: f64) -> Vec<bool> {
    ic.items()
        .iter()
        .map(|c| epipolar_residual(c, e) < tau)
        .collect()
}
