use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use corrprune_core::nn::{init_params, param_specs, read_params, write_params, ParamStore};

use crate::{load_net_config, WeightsCommand};

pub fn run(cmd: &WeightsCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        WeightsCommand::Init {
            out: path,
            net_config,
            seed,
        } => {
            let cfg = load_net_config(net_config.as_deref())?;
            let store = init_params(&cfg, *seed)?;
            let file =
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_params(&store, &mut w)?;
            w.flush()
                .with_context(|| format!("cannot write {}", path.display()))?;
            writeln!(
                out,
                "wrote {}: config hash {:016x}, {} tensors, {} parameters",
                path.display(),
                store.config_hash(),
                store.len(),
                store.parameter_count()
            )?;
        }
        WeightsCommand::Inspect { path, net_config } => inspect(path, net_config.as_deref(), out)?,
        WeightsCommand::Hash { net_config } => {
            let cfg = load_net_config(net_config.as_deref())?;
            writeln!(out, "{:016x}", cfg.hash())?;
        }
    }
    Ok(())
}

fn inspect(path: &Path, net_config: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let cfg = net_config.map(|p| load_net_config(Some(p))).transpose()?;
    let store = read_params(&bytes, cfg.as_ref().map(|c| c.hash()))
        .with_context(|| format!("cannot parse {}", path.display()))?;
    writeln!(out, "config hash {:016x}", store.config_hash())?;
    writeln!(
        out,
        "{} tensors, {} parameters",
        store.len(),
        store.parameter_count()
    )?;
    for (name, t) in store.iter() {
        writeln!(out, "{name}\t{:?}\tnorm {:.6e}", t.shape(), t.norm())?;
    }
    if let Some(cfg) = cfg {
        check_layout(
            &store,
            &param_specs(&cfg)
                .into_iter()
                .map(|s| (s.name, s.shape))
                .collect(),
        )?;
        writeln!(out, "layout matches the network config")?;
    }
    Ok(())
}

fn check_layout(store: &ParamStore, expected: &BTreeMap<String, Vec<usize>>) -> Result<()> {
    let mut problems = Vec::new();
    for (name, shape) in expected {
        match store.get(name) {
            None => problems.push(format!("missing {name}")),
            Some(t) if t.shape() != shape.as_slice() => problems.push(format!(
                "{name} has shape {:?}, expected {shape:?}",
                t.shape()
            )),
            Some(_) => {}
        }
    }
    problems.extend(
        store
            .names()
            .filter(|n| !expected.contains_key(*n))
            .map(|n| format!("unexpected {n}")),
    );
    if !problems.is_empty() {
        bail!(
            "weight layout does not match the network config: {}",
            problems.join("; ")
        );
    }
    Ok(())
}
