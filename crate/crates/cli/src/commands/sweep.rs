use std::io::Write;

use anyhow::{bail, Result};
use fibinetpp_core::model::{Architecture, ModelGraph};
use fibinetpp_core::train::train as run_training;
use serde_json::json;

use crate::args::SweepArgs;
use crate::commands::{ingest_and_prepare, merged_config};

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    if args.values.is_empty() {
        bail!("--values must list at least one value");
    }
    let base = merged_config(
        args.config.as_ref(),
        args.data.as_ref(),
        args.num_fields,
        args.cat_fields,
        &args.model,
        &args.protocol,
    )?;

    // Validate every point up front so a bad value fails before any training.
    let mut configs = Vec::with_capacity(args.values.len());
    for &value in &args.values {
        let mut cfg = base.clone();
        match args.param.as_str() {
            "g" => cfg.groups = value,
            "r" => cfg.reduction = value,
            "m" => cfg.compression_size = value,
            other => bail!("unknown sweep parameter {other:?} (expected g, r or m)"),
        }
        if let Err(e) = cfg.validate() {
            bail!("value {value} for {} is invalid: {e}", args.param);
        }
        configs.push((value, cfg));
    }

    let prepared = ingest_and_prepare(&base, out)?;
    for (value, cfg) in configs {
        let arch = Architecture::parse(&cfg.arch)?;
        let graph = ModelGraph::<f64>::build(
            arch,
            prepared.schema.clone(),
            prepared.vocab.clone(),
            cfg.hyper()?,
            cfg.seed,
        )?;
        let outcome = run_training(&graph, &prepared.train, &prepared.val, &cfg.train_config())?;
        writeln!(
            out,
            "{}",
            json!({
                "param": args.param,
                "value": value,
                "val_auc": outcome.best_val_auc,
                "val_logloss": outcome
                    .history
                    .get(outcome.best_epoch)
                    .map(|m| m.val_logloss),
                "best_epoch": outcome.best_epoch,
                "lr": outcome.lr,
            })
        )?;
    }
    Ok(())
}
