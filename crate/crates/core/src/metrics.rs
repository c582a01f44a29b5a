//! Pose accuracy and inlier classification metrics.

use serde::{Deserialize, Serialize};

/// Bucket thresholds (degrees) averaged by [`pose_map`].
pub const MAP_STEP_DEG: f64 = 5.0;

/// Fraction of errors strictly below `threshold` degrees. Failed estimates
/// should be passed as `f64::INFINITY`.
pub fn accuracy_at(errors: &[f64], threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64
}

/// Mean accuracy over thresholds 5, 10, ... up to `limit` degrees, in
/// percent.
pub fn pose_map(errors: &[f64], limit: f64) -> f64 {
    let buckets = (limit / MAP_STEP_DEG).round().max(1.0) as usize;
    let sum: f64 = (1..=buckets)
        .map(|b| accuracy_at(errors, b as f64 * MAP_STEP_DEG))
        .sum();
    100.0 * sum / buckets as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `predicted` against `truth`. Empty
/// denominators score zero.
pub fn classification(predicted: &[bool], truth: &[bool]) -> Classification {
    assert_eq!(predicted.len(), truth.len(), "flag lengths differ");
    let mut c = Classification::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    c.precision = ratio(c.true_positives, c.true_positives + c.false_positives);
    c.recall = ratio(c.true_positives, c.true_positives + c.false_negatives);
    c.f1 = if c.precision + c.recall > 0.0 {
        2.0 * c.precision * c.recall / (c.precision + c.recall)
    } else {
        0.0
    };
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_poses() {
        let e = [0.0; 4];
        assert_eq!(pose_map(&e, 5.0), 100.0);
        assert_eq!(pose_map(&e, 20.0), 100.0);
    }

    #[test]
    fn hand_buckets() {
        let e = [3.0, 12.0];
        assert_eq!(accuracy_at(&e, 5.0), 0.5);
        assert!((pose_map(&e, 20.0) - 75.0).abs() < 1e-12);
        assert_eq!(pose_map(&e, 5.0), 50.0);
    }

    #[test]
    fn failures_count_against() {
        let e = [1.0, f64::INFINITY];
        assert_eq!(accuracy_at(&e, 20.0), 0.5);
        assert!(accuracy_at(&e, 20.0) >= accuracy_at(&e, 5.0));
    }

    #[test]
    fn classification_cases() {
        let t = [true, false, true, false];
        let perfect = classification(&t, &t);
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0)
        );
        let c = classification(&[true, true, false, false], &t);
        assert_eq!((c.precision, c.recall), (0.5, 0.5));
        assert_eq!(classification(&[false; 4], &t).f1, 0.0);
    }
}
