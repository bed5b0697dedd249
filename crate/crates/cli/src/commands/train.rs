use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use fibinetpp_core::checkpoint;
use fibinetpp_core::embedding::write_vocab_file;
use fibinetpp_core::model::{Architecture, ModelGraph};
use fibinetpp_core::train::{evaluate, train as run_training, write_metrics_line};
use serde_json::json;

use crate::args::TrainArgs;
use crate::commands::{ingest_and_prepare, merged_config};

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = merged_config(
        args.config.as_ref(),
        args.data.as_ref(),
        args.num_fields,
        args.cat_fields,
        &args.model,
        &args.protocol,
    )?;
    let prepared = ingest_and_prepare(&cfg, out)?;

    let arch = Architecture::parse(&cfg.arch)?;
    let graph = ModelGraph::<f64>::build(
        arch,
        prepared.schema.clone(),
        prepared.vocab.clone(),
        cfg.hyper()?,
        cfg.seed,
    )?;
    let outcome = run_training(&graph, &prepared.train, &prepared.val, &cfg.train_config())?;

    match &args.metrics {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            for m in &outcome.history {
                write_metrics_line(&mut w, m)?;
            }
        }
        None => {
            for m in &outcome.history {
                write_metrics_line(out, m)?;
            }
        }
    }

    let mut best = outcome.graph;
    let test_report = evaluate(&mut best, &prepared.test)?;
    checkpoint::save(&mut best, &args.out)
        .with_context(|| format!("writing checkpoint {}", args.out.display()))?;

    if let Some(dir) = &args.vocab_dir {
        std::fs::create_dir_all(dir)?;
        for (field, vocab) in prepared.schema.fields.iter().zip(&prepared.vocab.per_field) {
            if let Some(vocab) = vocab {
                write_vocab_file(&dir.join(format!("{}.vocab", field.name)), vocab)?;
            }
        }
    }

    let summary = json!({
        "arch": cfg.arch,
        "lr": outcome.lr,
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "val_auc": outcome.best_val_auc,
        "test_auc": test_report.auc,
        "test_logloss": test_report.logloss,
        "diverged": outcome.diverged,
        "checkpoint": args.out.to_string_lossy(),
    });
    writeln!(out, "{summary}")?;
    Ok(())
}
