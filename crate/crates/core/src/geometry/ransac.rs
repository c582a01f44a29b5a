use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{eight_point, epipolar_residual, CorrespondenceSet, EssentialMatrix, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tau: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_tau: super::DEFAULT_VERIFY_TAU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub essential: EssentialMatrix,
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn consensus(ic: &CorrespondenceSet, e: &EssentialMatrix, tau: f64) -> Vec<bool> {
    ic.items()
        .iter()
        .map(|c| epipolar_residual(c, e) < tau)
        .collect()
}

/// Truncated residual cost: inliers contribute their residual, everything else
/// contributes `tau`. Lower is better.
fn truncated_cost(ic: &CorrespondenceSet, e: &EssentialMatrix, tau: f64) -> (f64, usize) {
    ic.items().iter().fold((0.0, 0), |(cost, count), c| {
        let r = epipolar_residual(c, e);
        if r < tau {
            (cost + r, count + 1)
        } else {
            (cost + tau, count)
        }
    })
}

/// Hypothesize-and-verify with the eight-point minimal solver.
///
/// Hypotheses are ranked by truncated residual cost, which is the inlier count
/// scaled by `tau` plus the residual mass inside the band; plain counting lets
/// a sample with one or two outliers bend the model through them and win. The
/// best hypothesis (earliest on ties) is refit on its consensus set with
/// uniform weights; the refit is kept unless it scores worse.
pub fn ransac_essential(
    ic: &CorrespondenceSet,
    params: &RansacParams,
) -> Result<RansacResult, GeometryError> {
    let n = ic.len();
    if n < 8 {
        return Err(GeometryError::InsufficientData { needed: 8, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tau = params.inlier_tau;
    let mut best: Option<(f64, EssentialMatrix)> = None;
    for _ in 0..params.iterations {
        let idx = sample(&mut rng, n, 8).into_vec();
        let Ok(e) = eight_point(&ic.select(&idx)) else {
            continue;
        };
        let (cost, count) = truncated_cost(ic, &e, tau);
        if count >= 8 && best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, e));
        }
    }
    let Some((cost, hypothesis)) = best else {
        return Err(GeometryError::EstimationFailed);
    };

    let flags = consensus(ic, &hypothesis, tau);
    let support: Vec<usize> = (0..n).filter(|&i| flags[i]).collect();
    if let Ok(refit) = eight_point(&ic.select(&support)) {
        let (refit_cost, refit_count) = truncated_cost(ic, &refit, tau);
        if refit_count >= 8 && refit_cost <= cost {
            let refit_flags = consensus(ic, &refit, tau);
            return Ok(RansacResult {
                essential: refit,
                inliers: refit_flags,
            });
        }
    }
    Ok(RansacResult {
        essential: hypothesis,
        inliers: flags,
    })
}
