use std::io::Write;

use anyhow::{bail, Result};
use fibinetpp_core::bilinear::BilinearFieldType;
use fibinetpp_core::embedding::{FieldSpec, FieldVocab};
use fibinetpp_core::model::{Architecture, HyperParams, ModelGraph};
use fibinetpp_core::{FeatureSchema, Vocabulary};

use crate::args::CountParamsArgs;

/// Per-field vocabulary sizes: either uniform, or distributed so the schema's
/// total feature count (every vocab row incl. OOV, plus numericals) matches
/// `--features-total` exactly.
fn vocab_sizes(args: &CountParamsArgs) -> Result<Vec<usize>> {
    let f = args.fields;
    match args.features_total {
        None => Ok(vec![args.vocab_size; f]),
        Some(total) => {
            if total < f {
                bail!("--features-total {total} is below the field count {f}");
            }
            let base = total / f;
            let rem = total % f;
            Ok((0..f)
                .map(|i| base - 1 + usize::from(i < rem))
                .collect())
        }
    }
}

pub fn count_params(args: &CountParamsArgs, out: &mut dyn Write) -> Result<()> {
    let arch = Architecture::parse(&args.arch)?;
    if args.fields < 2 {
        bail!("need at least 2 fields, got {}", args.fields);
    }
    let sizes = vocab_sizes(args)?;
    let schema = FeatureSchema {
        fields: sizes
            .iter()
            .enumerate()
            .map(|(i, &v)| FieldSpec::categorical(&format!("c{i}"), v))
            .collect(),
    };
    // The audit only reads vocabulary sizes from the schema; there is no
    // need to materialize a million token strings here.
    let vocab = Vocabulary {
        per_field: sizes.iter().map(|_| Some(FieldVocab::default())).collect(),
    };
    let hyper = HyperParams {
        embedding_dim: args.embedding_dim,
        mlp_widths: args.mlp.clone(),
        compression_size: args.compression_size,
        groups: args.groups,
        reduction: args.reduction,
        bilinear_type: BilinearFieldType::parse(&args.bilinear_type)?,
    };
    let mut graph = ModelGraph::<f64>::build(arch, schema, vocab, hyper, 0)?;
    let audit = graph.audit();

    writeln!(
        out,
        "parameter audit: arch={} f={} d={} h={} m={} t={}",
        audit.arch,
        audit.fields,
        audit.embedding_dim,
        audit.first_mlp_width,
        audit.compression_size,
        audit.feature_total
    )?;
    let rows = [
        ("mlp_first_layer", audit.mlp_first_layer),
        ("compression_layer", audit.compression_layer),
        ("bilinear_ws", audit.bilinear_ws),
        ("excitation", audit.excitation),
        ("norm_affine", audit.norm_affine),
        ("linear_part", audit.linear_part),
        ("deeper_mlp", audit.deeper_mlp),
        ("prediction", audit.prediction),
    ];
    for (name, count) in rows {
        writeln!(out, "  {name:<18} {count}")?;
    }
    writeln!(out, "  {:<18} {}", "non_embedding", audit.non_embedding_total)?;
    writeln!(out, "  {:<18} {}", "embedding", audit.embedding_total)?;
    writeln!(out, "three-part total (first-layer weights + compression) = {}", audit.three_part_total)?;
    writeln!(out, "closed-form fibinet (f(f-1)*d*h + t) = {}", audit.closed_form_fibinet)?;
    writeln!(
        out,
        "closed-form fibinetpp (f*d*h + m*h + f(f-1)/2*m) = {}",
        audit.closed_form_fibinetpp
    )?;
    writeln!(out, "compression ratio = {:.1}", audit.compression_ratio)?;
    Ok(())
}
