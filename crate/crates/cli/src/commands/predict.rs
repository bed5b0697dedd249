use std::io::Write;

use anyhow::{Context, Result};
use fibinetpp_core::checkpoint;
use fibinetpp_core::data::read_tsv;

use crate::args::PredictArgs;

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let mut graph = checkpoint::load::<f64>(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ingested = read_tsv(&args.data, &graph.schema)
        .with_context(|| format!("ingesting {}", args.data.display()))?;
    let scores = graph.predict_raw(&ingested.rows)?;
    for score in scores {
        writeln!(out, "{score}")?;
    }
    Ok(())
}
