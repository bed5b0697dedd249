//! Named gradient checks over every layer kind plus the full graph.
//!
//! Each entry builds a small standalone layer at the requested sizes,
//! nudges its parameters off the degenerate initialization and compares
//! analytic gradients against central differences. Used by the `gradcheck`
//! CLI command and the acceptance suite.

use crate::bilinear::{pair_count, BilinearHadamard, BilinearPlus, Compress, PairwiseInner};
use crate::embedding::{random_batch, EmbeddingProbe, EmbeddingTable, FeatureSchema, Vocabulary};
use crate::error::Result;
use crate::layer::{grad_check, jitter_parameters, DiagonalReadout, Layer};
use crate::mlp::{Mlp, PredictionHead};
use crate::model::{Architecture, GraphProbe, HyperParams, ModelGraph};
use crate::norm::{BatchNorm, FeatureNorm, LayerNorm};
use crate::rng;
use crate::scalar::Scalar;
use crate::senet::{Excite, Fuse, Reweight, SenetOriginal, SenetPlus, Squeeze};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: String,
    pub max_relative_error: f64,
}

fn check<F: Scalar>(
    name: &str,
    layer: &mut dyn Layer<F>,
    input: &Tensor<F>,
    seed: u64,
    epsilon: f64,
) -> Result<LayerCheck> {
    jitter_parameters(layer.parameters(), &mut rng::seeded(seed ^ 0x9e37_79b9), 0.3);
    Ok(LayerCheck {
        layer: name.to_string(),
        max_relative_error: grad_check(layer, input, epsilon)?,
    })
}

/// Mixed schema used by the checks: half numerical fields, half categorical
/// with a small vocabulary.
pub fn check_schema(f: usize, vocab: usize) -> (FeatureSchema, Vocabulary) {
    let num = f / 2;
    let mut schema = FeatureSchema::with_layout(num, f - num);
    let vocab = Vocabulary::synthetic(&mut schema, vocab);
    (schema, vocab)
}

/// Runs the checks for every layer kind at the given sizes plus the full
/// graph of the requested architecture, with `batch` rows and the given
/// difference step.
pub fn layer_suite<F: Scalar>(
    arch: Architecture,
    f: usize,
    hyper: &HyperParams,
    seed: u64,
    batch: usize,
    epsilon: f64,
) -> Result<Vec<LayerCheck>> {
    let d = hyper.embedding_dim;
    let (g, r, m) = (hyper.groups, hyper.reduction, hyper.compression_size);
    let (schema, vocab) = check_schema(f, 3);
    let mut rng = rng::seeded(seed);
    let rows = random_batch(&schema, batch, &mut rng);
    let x_fd: Tensor<F> = rng::uniform_tensor(&mut rng, batch, f * d, 1.5);
    let x_d: Tensor<F> = rng::uniform_tensor(&mut rng, batch, d, 1.5);

    let mut checks = Vec::new();
    {
        let table: EmbeddingTable<F> = EmbeddingTable::new(&schema, d, &mut rng);
        let mut probe = EmbeddingProbe::new(table, rows.clone());
        checks.push(check("embedding", &mut probe, &Tensor::zeros(1, 1), seed, epsilon)?);
    }

    {
        let mut bn = DiagonalReadout::new(BatchNorm::<F>::new("bn", d));
        checks.push(check("batch_norm", &mut bn, &x_d, seed + 1, epsilon)?);

        let mut ln = LayerNorm::<F>::new("ln", d);
        checks.push(check("layer_norm", &mut ln, &x_d, seed + 2, epsilon)?);

        let mut fnorm = DiagonalReadout::new(FeatureNorm::<F>::new("feature_norm", &schema, d));
        checks.push(check("feature_norm", &mut fnorm, &x_fd, seed + 3, epsilon)?);

        let mut inner =
            PairwiseInner::<F>::new("pairwise_inner", hyper.bilinear_type, f, d, &mut rng);
        checks.push(check("bilinear_inner", &mut inner, &x_fd, seed + 4, epsilon)?);

        let mut compress = Compress::<F>::new("compress", pair_count(f), m, &mut rng);
        let x_pairs: Tensor<F> = rng::uniform_tensor(&mut rng, batch, pair_count(f), 1.5);
        checks.push(check("compress", &mut compress, &x_pairs, seed + 5, epsilon)?);

        let mut bplus =
            BilinearPlus::<F>::new("bilinear_plus", hyper.bilinear_type, f, d, m, &mut rng);
        checks.push(check("bilinear_plus", &mut bplus, &x_fd, seed + 6, epsilon)?);

        let mut squeeze = Squeeze::<F>::new(f, d, g)?;
        checks.push(check("squeeze", &mut squeeze, &x_fd, seed + 7, epsilon)?);

        let mut excite = Excite::<F>::new("excite", f, d, g, r, &mut rng);
        let x_z: Tensor<F> = rng::uniform_tensor(&mut rng, batch, 2 * g * f, 1.5);
        checks.push(check("excite", &mut excite, &x_z, seed + 8, epsilon)?);

        let mut reweight = Reweight::<F>::new(f * d);
        let x_2fd: Tensor<F> = rng::uniform_tensor(&mut rng, batch, 2 * f * d, 1.5);
        checks.push(check("reweight", &mut reweight, &x_2fd, seed + 9, epsilon)?);

        let mut fuse = Fuse::<F>::new("fuse", f, d);
        checks.push(check("fuse", &mut fuse, &x_2fd, seed + 10, epsilon)?);

        let mut splus = SenetPlus::<F>::new("senet_plus", f, d, g, r, &mut rng)?;
        checks.push(check("senet_plus", &mut splus, &x_fd, seed + 11, epsilon)?);
    }

    {
        let mut se = SenetOriginal::<F>::new("senet", f, d, r, &mut rng);
        checks.push(check("senet_original", &mut se, &x_fd, seed + 12, epsilon)?);

        let mut bh =
            BilinearHadamard::<F>::new("bilinear_hadamard", hyper.bilinear_type, f, d, &mut rng);
        checks.push(check("bilinear_hadamard", &mut bh, &x_fd, seed + 13, epsilon)?);
    }

    {
        let mut mlp = Mlp::<F>::new("mlp", f * d, &hyper.mlp_widths, &mut rng);
        checks.push(check("mlp", &mut mlp, &x_fd, seed + 14, epsilon)?);

        let last = hyper.mlp_widths.last().copied().unwrap_or(1);
        let mut head = PredictionHead::<F>::new("prediction", last, &mut rng);
        let x_h: Tensor<F> = rng::uniform_tensor(&mut rng, batch, last, 1.5);
        checks.push(check("prediction", &mut head, &x_h, seed + 15, epsilon)?);
    }

    {
        let graph = ModelGraph::<F>::build(arch, schema, vocab, hyper.clone(), seed)?;
        let mut probe = GraphProbe::new(graph, rows);
        jitter_parameters(
            probe.parameters(),
            &mut rng::seeded((seed + 16) ^ 0x9e37_79b9),
            0.3,
        );
        // Probe at a non-saturated operating point: a sigmoid pushed to a
        // |logit| of 10+ scales every gradient by ~1e-5, dropping some
        // coordinates below what central differences can resolve. Rescale
        // the head so the largest batch logit is moderate.
        let probs = probe.forward(&Tensor::zeros(1, 1))?;
        let max_logit = probs
            .data()
            .iter()
            .map(|&p| {
                let p = p.to_f64_lossy();
                (p / (1.0 - p)).ln().abs()
            })
            .fold(0.0f64, f64::max);
        if max_logit > 4.0 {
            let shrink = F::from_f64_lossy(4.0 / max_logit);
            let head = probe.graph.head_mut();
            for v in head.weight_mut().value.data_mut() {
                *v *= shrink;
            }
            for v in head.bias_mut().value.data_mut() {
                *v *= shrink;
            }
        }
        checks.push(LayerCheck {
            layer: "full_graph".to_string(),
            max_relative_error: grad_check(&mut probe, &Tensor::zeros(1, 1), epsilon)?,
        });
    }
    Ok(checks)
}
