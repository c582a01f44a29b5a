use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use corrprune_core::geometry::{
    decompose_essential, full_size_verification, ransac_essential, RansacParams,
};
use corrprune_core::synthgen::derive_seed;

use crate::format::{
    f17_vec, f17s, read_jsonl, write_jsonl, DatasetRecord, FileKind, Header, PoseRecord,
    PredictionRecord,
};
use crate::RansacArgs;

pub fn run(args: &RansacArgs, out: &mut dyn Write) -> Result<()> {
    let (ds_header, dataset) = read_jsonl::<DatasetRecord>(&args.dataset, FileKind::Dataset)?;
    let (pred_config, subsets) = match &args.predictions {
        Some(path) => {
            let (h, preds) = read_jsonl::<PredictionRecord>(path, FileKind::Predictions)?;
            (h.config, Some(verified_subsets(&dataset, preds)?))
        }
        None => (Value::Null, None),
    };
    let records = dataset
        .par_iter()
        .map(|rec| {
            let subset = subsets.as_ref().map(|s| s[&rec.id].as_slice());
            estimate(rec, subset, args).with_context(|| format!("pair {}", rec.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let header = Header::new(
        FileKind::Predictions,
        json!({
            "source": "ransac",
            "mode": if subsets.is_some() { "post-processing" } else { "baseline" },
            "iterations": args.iterations,
            "tau": args.tau,
            "seed": args.seed,
            "dataset": ds_header.config,
            "predictions": pred_config,
        }),
    );
    write_jsonl(&args.out, &header, &records)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    writeln!(
        out,
        "wrote {} predictions ({failed} failed) to {}",
        records.len(),
        args.out.display()
    )?;
    Ok(())
}

/// Verified input indices of every prediction, keyed by pair id.
fn verified_subsets(
    dataset: &[DatasetRecord],
    preds: Vec<PredictionRecord>,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut map = BTreeMap::new();
    for p in preds {
        let flags: Vec<usize> = (0..p.verified.len()).filter(|&i| p.verified[i]).collect();
        if map.insert(p.id, flags).is_some() {
            bail!("predictions: duplicate pair id {}", p.id);
        }
    }
    let missing: Vec<usize> = dataset
        .iter()
        .map(|r| r.id)
        .filter(|id| !map.contains_key(id))
        .collect();
    if !missing.is_empty() {
        bail!("predictions are missing pair ids {missing:?}");
    }
    Ok(map)
}

fn estimate(
    rec: &DatasetRecord,
    subset: Option<&[usize]>,
    args: &RansacArgs,
) -> Result<PredictionRecord> {
    let ic = rec.to_pair()?.correspondences.without_labels();
    let n = ic.len();
    let indices: Vec<usize> = match subset {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                bail!("verified index {bad} out of range for {n} correspondences");
            }
            s.to_vec()
        }
        None => (0..n).collect(),
    };
    let mut counts = vec![n];
    if subset.is_some() {
        counts.push(indices.len());
    }
    let params = RansacParams {
        iterations: args.iterations,
        inlier_tau: args.tau,
        seed: derive_seed(args.seed, rec.id),
    };
    let res = match ransac_essential(&ic.select(&indices), &params) {
        Ok(r) => r,
        Err(e) => return Ok(PredictionRecord::failed(rec.id, n, counts, e.to_string())),
    };
    let consensus: Vec<usize> = (0..indices.len())
        .filter(|&j| res.inliers[j])
        .map(|j| indices[j])
        .collect();
    counts.push(consensus.len());
    let pose = decompose_essential(&res.essential, &ic.select(&consensus));
    let weight = 1.0 / consensus.len() as f64;
    Ok(PredictionRecord {
        id: rec.id,
        n,
        candidate_counts: counts,
        probs: f17_vec(&vec![weight; consensus.len()]),
        final_indices: consensus,
        essential: Some(f17s(res.essential.to_row_major())),
        verified: full_size_verification(&ic, &res.essential, args.tau),
        pose: pose.as_ref().ok().map(PoseRecord::from_pose),
        error: pose.err().map(|e| e.to_string()),
    })
}
