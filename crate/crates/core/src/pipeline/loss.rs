use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{
    epipolar_residual, full_size_verification, Correspondence, CorrespondenceSet, EssentialMatrix,
};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("iteration {iteration}: {logits} logits, {labels} labels, {omega} temperatures")]
    LengthMismatch {
        iteration: usize,
        logits: usize,
        labels: usize,
        omega: usize,
    },
    #[error("{logits} logit vectors for {labels} label vectors")]
    IterationCount { logits: usize, labels: usize },
    #[error("every virtual correspondence hit an epipole")]
    AllSamplesDegenerate,
    #[error("alpha must be finite and nonnegative, got {0}")]
    NegativeAlpha(f64),
}

/// Numerically stable `BCE(sigmoid(z), y)`.
pub fn bce_with_logits(z: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Sum over iterations of the mean BCE on `omega ⊙ logits`; `omega`
/// defaults to ones.
pub fn classification_loss(
    logits_per_iter: &[Vec<f64>],
    labels_per_iter: &[Vec<bool>],
    omega_per_iter: Option<&[Vec<f64>]>,
) -> Result<f64, LossError> {
    if logits_per_iter.len() != labels_per_iter.len()
        || omega_per_iter.is_some_and(|o| o.len() != logits_per_iter.len())
    {
        return Err(LossError::IterationCount {
            logits: logits_per_iter.len(),
            labels: labels_per_iter.len(),
        });
    }
    let mut total = 0.0;
    for (t, (logits, labels)) in logits_per_iter.iter().zip(labels_per_iter).enumerate() {
        let omega = omega_per_iter.map(|o| o[t].as_slice());
        if logits.len() != labels.len()
            || logits.is_empty()
            || omega.is_some_and(|o| o.len() != logits.len())
        {
            return Err(LossError::LengthMismatch {
                iteration: t,
                logits: logits.len(),
                labels: labels.len(),
                omega: omega.map_or(logits.len(), <[f64]>::len),
            });
        }
        let sum: f64 = logits
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&z, &y))| bce_with_logits(omega.map_or(1.0, |o| o[i]) * z, y))
            .sum();
        total += sum / logits.len() as f64;
    }
    Ok(total)
}

/// Weak labels of one iteration's candidates under the true essential matrix.
pub fn iteration_labels(
    ic: &CorrespondenceSet,
    candidate_indices: &[usize],
    gt: &EssentialMatrix,
    tau: f64,
) -> Vec<bool> {
    full_size_verification(&ic.select(candidate_indices), gt, tau)
}

pub const VIRTUAL_GRID: usize = 10;

/// Exact matches under `gt`: grid points `p` in view A paired with the foot
/// of the perpendicular from `p` onto the epipolar line `gt p` in view B.
/// Points whose epipolar line degenerates are skipped.
pub fn virtual_correspondences(gt: &EssentialMatrix, grid: usize) -> Vec<Correspondence> {
    let e = gt.matrix();
    let step = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / grid as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for iy in 0..grid {
        for ix in 0..grid {
            let (x, y) = (step(ix), step(iy));
            let l = e * Vector3::new(x, y, 1.0);
            let g = l.x * l.x + l.y * l.y;
            if g < 1e-12 {
                continue;
            }
            let d = (l.x * x + l.y * y + l.z) / g;
            out.push(Correspondence::new(x, y, x - d * l.x, y - d * l.y));
        }
    }
    out
}

/// Mean epipolar residual of `est` (scaled to unit norm) over virtual
/// correspondences of `gt`.
pub fn essential_loss(est: &EssentialMatrix, gt: &EssentialMatrix) -> Result<f64, LossError> {
    let samples = virtual_correspondences(gt, VIRTUAL_GRID);
    if samples.is_empty() {
        return Err(LossError::AllSamplesDegenerate);
    }
    let norm = est.matrix().norm();
    let unit = EssentialMatrix::from_matrix_unnormalized(est.matrix() / norm);
    Ok(samples
        .iter()
        .map(|c| epipolar_residual(c, &unit))
        .sum::<f64>()
        / samples.len() as f64)
}

pub const ALPHA_SWITCH_STEP: u64 = 20_000;

pub fn alpha_schedule(step: u64) -> f64 {
    if step < ALPHA_SWITCH_STEP {
        0.0
    } else {
        0.5
    }
}

pub fn hybrid_loss(cls: f64, ess: f64, alpha: f64) -> Result<f64, LossError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(LossError::NegativeAlpha(alpha));
    }
    Ok(cls + alpha * ess)
}
