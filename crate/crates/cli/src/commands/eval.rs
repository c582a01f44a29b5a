use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::json;

use crate::format::{read_jsonl, DatasetRecord, FileKind, PredictionRecord, F17, TOOL, VERSION};
use crate::report::{evaluate, write_csv, EvalReport, Timing};
use crate::EvalArgs;

pub fn run(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let (ds_header, dataset) = read_jsonl::<DatasetRecord>(&args.dataset, FileKind::Dataset)?;
    let (pr_header, predictions) =
        read_jsonl::<PredictionRecord>(&args.predictions, FileKind::Predictions)?;
    let (per_pair, aggregate) = evaluate(&dataset, &predictions)?;
    if let Some(path) = &args.csv {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_csv(&per_pair, BufWriter::new(file))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let report = EvalReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        config: json!({ "dataset": ds_header.config, "predictions": pr_header.config }),
        per_pair,
        aggregate,
        timing: args.timing.then(|| Timing {
            elapsed_seconds: F17(start.elapsed().as_secs_f64()),
        }),
    };
    write_report(&report, &args.out)?;
    let a = &report.aggregate;
    writeln!(
        out,
        "pairs {} failures {} mAP5 {:.2} mAP20 {:.2} precision {:.4} recall {:.4} f1 {:.4}",
        a.pairs, a.failures, a.map5.0, a.map20.0, a.mean_precision.0, a.mean_recall.0, a.mean_f1.0
    )?;
    Ok(())
}

fn write_report(report: &EvalReport, path: &std::path::Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
