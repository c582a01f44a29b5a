use std::io::Write;

use anyhow::{ensure, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use corrprune_core::synthgen::{generate_pair, pair_config};
use corrprune_core::SceneConfig;

use crate::format::{write_jsonl, DatasetRecord, FileKind, Header};
use crate::SynthArgs;

pub fn resolve_config(args: &SynthArgs) -> Result<SceneConfig> {
    let mut cfg: SceneConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid scene config {}", p.display()))?
        }
        None => SceneConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_points {
        cfg.n_points = n;
    }
    if let Some(r) = args.outlier_ratio {
        cfg.outlier_ratio = r;
    }
    if let Some(s) = args.noise_sigma {
        cfg.noise_sigma = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(args)?;
    ensure!(
        args.pairs > 0,
        "invalid scene config: pairs: must be at least 1"
    );
    let records = (0..args.pairs)
        .into_par_iter()
        .map(|i| {
            let pc = pair_config(&cfg, i);
            generate_pair(&pc)
                .map(|p| DatasetRecord::from_pair(i, pc.seed, &p))
                .with_context(|| format!("pair {i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let header = Header::new(
        FileKind::Dataset,
        json!({ "scene": cfg, "pairs": args.pairs }),
    );
    write_jsonl(&args.out, &header, &records)?;
    writeln!(
        out,
        "wrote {} pairs to {}",
        records.len(),
        args.out.display()
    )?;
    Ok(())
}
