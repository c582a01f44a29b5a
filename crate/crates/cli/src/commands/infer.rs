use std::io::Write;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;

use corrprune_core::nn::{init_params, read_params, ParamStore};
use corrprune_core::pipeline::{ForwardOptions, Network, PipelineError, PipelineOutput};
use corrprune_core::vcextractor::splat_images;
use corrprune_core::NetConfig;

use crate::format::{
    f17_vec, f17s, read_jsonl, write_jsonl, DatasetRecord, FileKind, PoseRecord, PredictionRecord,
};
use crate::{load_net_config, InferArgs};

fn load_weights(args: &InferArgs, cfg: &NetConfig) -> Result<ParamStore> {
    match &args.weights {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
            read_params(&bytes, Some(cfg.hash())).with_context(|| {
                format!(
                    "refusing weight file {} for this network config",
                    p.display()
                )
            })
        }
        None => Ok(init_params(cfg, args.seed)?),
    }
}

pub fn run(args: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_net_config(args.net_config.as_deref())?;
    let store = load_weights(args, &cfg)?;
    let net = Network::new(&cfg, &store).context("cannot build network")?;
    let (ds_header, dataset) = read_jsonl::<DatasetRecord>(&args.dataset, FileKind::Dataset)?;
    let opts = ForwardOptions {
        oracle: args.oracle_weights,
        trace: false,
        verify_tau: args.tau,
    };
    let visual = !args.no_visual && cfg.uses_visual_branch();
    let records = dataset
        .par_iter()
        .map(|rec| infer_pair(&net, rec, &opts, visual).with_context(|| format!("pair {}", rec.id)))
        .collect::<Result<Vec<_>>>()?;
    let header = crate::format::Header::new(
        FileKind::Predictions,
        json!({
            "source": "infer",
            "net": cfg,
            "weights_hash": format!("{:016x}", store.config_hash()),
            "weights_from_file": args.weights.is_some(),
            "seed": args.seed,
            "no_visual": args.no_visual,
            "oracle_weights": args.oracle_weights,
            "tau": args.tau,
            "dataset": ds_header.config,
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

fn infer_pair(
    net: &Network,
    rec: &DatasetRecord,
    opts: &ForwardOptions,
    visual: bool,
) -> Result<PredictionRecord> {
    let pair = rec.to_pair()?;
    let cfg = net.config();
    let ic = if opts.oracle {
        pair.correspondences
    } else {
        pair.correspondences.without_labels()
    };
    let img = visual.then(|| splat_images(&ic, cfg.image_height, cfg.image_width));
    let n = ic.len();
    match net.forward(img.as_ref(), &ic, opts) {
        Ok(o) => Ok(prediction(rec.id, n, &o)),
        Err(PipelineError::Geometry(e)) => Ok(PredictionRecord::failed(
            rec.id,
            n,
            cfg.candidate_counts(n),
            e.to_string(),
        )),
        Err(e) => Err(e.into()),
    }
}

fn prediction(id: usize, n: usize, o: &PipelineOutput) -> PredictionRecord {
    PredictionRecord {
        id,
        n,
        candidate_counts: o.diagnostics.candidate_counts.clone(),
        final_indices: o.final_indices.clone(),
        probs: f17_vec(&o.probs),
        essential: Some(f17s(o.essential.to_row_major())),
        verified: o.verified_flags.clone(),
        pose: o.pose.as_ref().map(PoseRecord::from_pose),
        error: o
            .pose
            .is_none()
            .then(|| "pose decomposition is ambiguous".to_string()),
    }
}
