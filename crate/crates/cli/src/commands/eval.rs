use std::io::Write;

use anyhow::{Context, Result};
use fibinetpp_core::checkpoint;
use fibinetpp_core::data::read_tsv;
use fibinetpp_core::embedding::encode_batch;
use fibinetpp_core::train::evaluate;

use crate::args::EvalArgs;

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut graph = checkpoint::load::<f64>(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ingested = read_tsv(&args.data, &graph.schema)
        .with_context(|| format!("ingesting {}", args.data.display()))?;
    if ingested.skipped > 0 {
        writeln!(out, "skipped {} malformed rows", ingested.skipped)?;
    }
    let batch = encode_batch(&ingested.rows, &graph.schema, &graph.vocab)?;
    let report = evaluate(&mut graph, &batch)?;
    writeln!(out, "{}", serde_json::to_string(&report)?)?;
    Ok(())
}
