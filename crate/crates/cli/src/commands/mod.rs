use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use fibinetpp_core::data::{prepare_splits, read_tsv, Prepared, RunConfig};
use fibinetpp_core::FeatureSchema;

use crate::args::{ModelArgs, ProtocolArgs};

mod count_params;
mod eval;
mod gen_synthetic;
mod gradcheck;
mod predict;
mod sweep;
mod train;

pub use count_params::count_params;
pub use eval::eval;
pub use gen_synthetic::gen_synthetic;
pub use gradcheck::gradcheck;
pub use predict::predict;
pub use sweep::sweep;
pub use train::train;

/// Config file (when given) with CLI flags layered on top.
pub(crate) fn merged_config(
    config: Option<&PathBuf>,
    data: Option<&PathBuf>,
    num_fields: Option<usize>,
    cat_fields: Option<usize>,
    model: &ModelArgs,
    protocol: &ProtocolArgs,
) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(path) = data {
        cfg.data = Some(path.to_string_lossy().to_string());
    }
    if let Some(n) = num_fields {
        cfg.num_fields = n;
    }
    if let Some(n) = cat_fields {
        cfg.cat_fields = n;
    }
    if let Some(arch) = &model.arch {
        cfg.arch = arch.clone();
    }
    if let Some(d) = model.embedding_dim {
        cfg.embedding_dim = d;
    }
    if let Some(mlp) = &model.mlp {
        cfg.mlp = mlp.clone();
    }
    if let Some(m) = model.compression_size {
        cfg.compression_size = m;
    }
    if let Some(g) = model.groups {
        cfg.groups = g;
    }
    if let Some(r) = model.reduction {
        cfg.reduction = r;
    }
    if let Some(bt) = &model.bilinear_type {
        cfg.bilinear_type = bt.clone();
    }
    if let Some(lr) = protocol.lr {
        cfg.lr = Some(lr);
    }
    if let Some(b) = protocol.batch_size {
        cfg.batch_size = b;
    }
    if let Some(e) = protocol.epochs {
        cfg.epochs = e;
    }
    if let Some(p) = protocol.patience {
        cfg.patience = p;
    }
    if let Some(s) = protocol.seed {
        cfg.seed = s;
    }
    if let Some(f) = protocol.min_token_freq {
        cfg.min_token_freq = f;
    }
    Ok(cfg)
}

/// Ingests the configured dataset and produces encoded 8:1:1 splits.
pub(crate) fn ingest_and_prepare(cfg: &RunConfig, out: &mut dyn Write) -> Result<Prepared> {
    cfg.validate()?;
    let Some(data) = &cfg.data else {
        bail!("no dataset given: pass --data or set \"data\" in the config file");
    };
    let schema = FeatureSchema::with_layout(cfg.num_fields, cfg.cat_fields);
    let ingested = read_tsv(std::path::Path::new(data), &schema)
        .with_context(|| format!("ingesting {data}"))?;
    if ingested.skipped > 0 {
        writeln!(out, "skipped {} malformed rows in {data}", ingested.skipped)?;
    }
    let prepared = prepare_splits(ingested.rows, schema, cfg.seed, cfg.min_token_freq)?;
    Ok(prepared)
}
