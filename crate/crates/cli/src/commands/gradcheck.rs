use std::io::Write;

use anyhow::{bail, Result};
use fibinetpp_core::bilinear::BilinearFieldType;
use fibinetpp_core::check::layer_suite;
use fibinetpp_core::model::{Architecture, HyperParams};

use crate::args::GradcheckArgs;

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let arch = Architecture::parse(&args.arch)?;
    let hyper = HyperParams {
        embedding_dim: args.embedding_dim,
        mlp_widths: args.mlp.clone(),
        compression_size: args.compression_size,
        groups: args.groups,
        reduction: args.reduction,
        bilinear_type: BilinearFieldType::parse(&args.bilinear_type)?,
    };
    hyper.validate_for(arch)?;
    if args.batch < 2 {
        bail!("--batch must be at least 2 (train-mode batch norm)");
    }
    let checks = layer_suite::<f64>(arch, args.fields, &hyper, args.seed, args.batch, args.epsilon)?;
    let mut worst: f64 = 0.0;
    for c in &checks {
        let status = if c.max_relative_error <= args.tol {
            "ok"
        } else {
            "FAIL"
        };
        writeln!(out, "{:<20} {:>12.3e}  {status}", c.layer, c.max_relative_error)?;
        worst = worst.max(c.max_relative_error);
    }
    writeln!(out, "max relative error = {worst:.3e} (tolerance {:.1e})", args.tol)?;
    if worst > args.tol {
        bail!("gradient check failed: max relative error {worst:.3e} exceeds {:.1e}", args.tol);
    }
    Ok(())
}
