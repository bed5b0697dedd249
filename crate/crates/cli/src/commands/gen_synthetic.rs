use std::io::Write;

use anyhow::{Context, Result};
use fibinetpp_core::data::{write_synthetic, SyntheticSpec};
use fibinetpp_core::train::auc;
use serde_json::json;

use crate::args::GenSyntheticArgs;

pub(crate) fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .with_context(|| format!("pair {part:?} is not of the form a:b"))?;
            Ok((
                a.trim().parse().with_context(|| format!("bad field index {a:?}"))?,
                b.trim().parse().with_context(|| format!("bad field index {b:?}"))?,
            ))
        })
        .collect()
}

pub fn gen_synthetic(args: &GenSyntheticArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec {
        rows: args.rows,
        num_fields: args.num_fields,
        cat_fields: args.cat_fields,
        vocab_size: args.vocab_size,
        pairs: parse_pairs(&args.pairs)?,
        pair_weight: args.pair_weight,
        linear_scale: args.linear_scale,
        noise: args.noise,
        seed: args.seed,
    };
    let (rows, oracle) = write_synthetic(&spec, &args.out)
        .with_context(|| format!("writing into {}", args.out.display()))?;
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let scores: Vec<f64> = rows
        .iter()
        .map(|r| oracle.score(r))
        .collect::<fibinetpp_core::Result<_>>()?;
    let oracle_auc = auc(&labels, &scores)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    writeln!(
        out,
        "{}",
        json!({
            "rows": spec.rows,
            "positives": positives,
            "oracle_auc": oracle_auc,
            "data": args.out.join("data.tsv").to_string_lossy(),
            "oracle": args.out.join("oracle.json").to_string_lossy(),
        })
    )?;
    Ok(())
}
