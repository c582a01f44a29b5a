//! Evaluation of predictions against ground truth.

use std::collections::BTreeMap;

use anyhow::{bail, ensure, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use corrprune_core::geometry::pose_error;
use corrprune_core::metrics::{accuracy_at, classification, pose_map};

use crate::format::{DatasetRecord, PredictionRecord, F17};

/// Thresholds (degrees) reported as accuracy@τ.
pub const THRESHOLDS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEval {
    pub id: usize,
    /// Maximum of the rotation and translation-direction errors; `null` when
    /// estimation failed (scored as an infinite error).
    pub pose_error_deg: Option<F17>,
    pub failed: bool,
    pub precision: F17,
    pub recall: F17,
    pub f1: F17,
    pub candidate_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAccuracy {
    pub threshold_deg: F17,
    pub fraction: F17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pairs: usize,
    pub failures: usize,
    pub map5: F17,
    pub map20: F17,
    pub accuracy: Vec<ThresholdAccuracy>,
    pub mean_precision: F17,
    pub mean_recall: F17,
    pub mean_f1: F17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: F17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub version: String,
    /// Configuration echoed from the dataset and predictions headers.
    pub config: Value,
    pub per_pair: Vec<PairEval>,
    pub aggregate: Aggregate,
    /// Present only when timing was requested; it makes the report
    /// run-dependent.
    pub timing: Option<Timing>,
}

/// Scores every prediction against its dataset pair. Pairs are matched by id
/// and reported in id order, so the result does not depend on file order.
pub fn evaluate(
    dataset: &[DatasetRecord],
    predictions: &[PredictionRecord],
) -> Result<(Vec<PairEval>, Aggregate)> {
    let truth = index_by_id(dataset.iter().map(|r| (r.id, r)), "dataset")?;
    let preds = index_by_id(predictions.iter().map(|r| (r.id, r)), "predictions")?;
    let missing_preds: Vec<usize> = truth
        .keys()
        .filter(|id| !preds.contains_key(id))
        .copied()
        .collect();
    let missing_truth: Vec<usize> = preds
        .keys()
        .filter(|id| !truth.contains_key(id))
        .copied()
        .collect();
    if !missing_preds.is_empty() || !missing_truth.is_empty() {
        bail!(
            "pair ids do not align: missing from predictions {missing_preds:?}, missing from dataset {missing_truth:?}"
        );
    }

    let mut per_pair = Vec::with_capacity(truth.len());
    for (&id, gt) in &truth {
        let pred = preds[&id];
        ensure!(
            pred.verified.len() == gt.labels.len(),
            "pair {id}: {} verification flags for {} labeled correspondences",
            pred.verified.len(),
            gt.labels.len()
        );
        let gt_pose = gt.pose.to_pose()?;
        let error = match &pred.pose {
            Some(p) => Some(pose_error(&p.to_pose()?, &gt_pose)),
            None => None,
        };
        let c = classification(&pred.verified, &gt.labels);
        per_pair.push(PairEval {
            id,
            pose_error_deg: error.map(F17),
            failed: error.is_none(),
            precision: F17(c.precision),
            recall: F17(c.recall),
            f1: F17(c.f1),
            candidate_counts: pred.candidate_counts.clone(),
        });
    }
    let aggregate = aggregate(&per_pair);
    Ok((per_pair, aggregate))
}

fn index_by_id<'a, T>(
    items: impl Iterator<Item = (usize, &'a T)>,
    what: &str,
) -> Result<BTreeMap<usize, &'a T>> {
    let mut map = BTreeMap::new();
    for (id, item) in items {
        ensure!(
            map.insert(id, item).is_none(),
            "{what}: duplicate pair id {id}"
        );
    }
    Ok(map)
}

pub fn aggregate(per_pair: &[PairEval]) -> Aggregate {
    let errors: Vec<f64> = per_pair
        .iter()
        .map(|p| p.pose_error_deg.map_or(f64::INFINITY, |e| e.0))
        .collect();
    let n = per_pair.len().max(1) as f64;
    let mean = |f: fn(&PairEval) -> f64| F17(per_pair.iter().map(f).sum::<f64>() / n);
    Aggregate {
        pairs: per_pair.len(),
        failures: per_pair.iter().filter(|p| p.failed).count(),
        map5: F17(pose_map(&errors, 5.0)),
        map20: F17(pose_map(&errors, 20.0)),
        accuracy: THRESHOLDS
            .iter()
            .map(|&t| ThresholdAccuracy {
                threshold_deg: F17(t),
                fraction: F17(accuracy_at(&errors, t)),
            })
            .collect(),
        mean_precision: mean(|p| p.precision.0),
        mean_recall: mean(|p| p.recall.0),
        mean_f1: mean(|p| p.f1.0),
    }
}

/// Per-pair rows for external plotting.
pub fn write_csv<W: std::io::Write>(per_pair: &[PairEval], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "id",
        "pose_error_deg",
        "failed",
        "precision",
        "recall",
        "f1",
        "candidate_counts",
    ])?;
    let num = |v: f64| format!("{v:.16e}");
    for p in per_pair {
        let counts: Vec<String> = p.candidate_counts.iter().map(usize::to_string).collect();
        out.write_record([
            p.id.to_string(),
            p.pose_error_deg.map_or(String::new(), |e| num(e.0)),
            p.failed.to_string(),
            num(p.precision.0),
            num(p.recall.0),
            num(p.f1.0),
            counts.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}
