//! End-to-end model graphs and exact parameter accounting.
//!
//! Three architectures share the embedding front end and the MLP/prediction
//! back end:
//!
//! ```text
//! dnn:       embed -> mlp -> prediction
//! fibinet:   embed -> { senet-original -> hadamard pairs,
//!                       hadamard pairs } -> concat -> mlp --+
//!            embed indices -> linear part (one weight/feature) +-> prediction
//! fibinetpp: embed -> feature norm -> { bilinear+ (m dims),
//!                                       senet+ (f*d dims) } -> concat
//!                  -> mlp -> prediction          (no linear part)
//! ```

use serde::{Deserialize, Serialize};

use crate::bilinear::{pair_count, BilinearFieldType, BilinearHadamard, BilinearPlus};
use crate::embedding::{
    encode_batch, EmbeddingTable, EncodedInstance, EncodedSlot, FeatureSchema, FieldKind,
    RawInstance, Vocabulary,
};
use crate::error::{Error, Result};
use crate::layer::{Layer, Parameter};
use crate::mlp::{Mlp, PredictionHead};
use crate::norm::FeatureNorm;
use crate::rng;
use crate::scalar::Scalar;
use crate::senet::{SenetOriginal, SenetPlus};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Dnn,
    FiBiNet,
    FiBiNetPlusPlus,
}

impl Architecture {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(Self::Dnn),
            "fibinet" => Ok(Self::FiBiNet),
            "fibinetpp" => Ok(Self::FiBiNetPlusPlus),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected dnn|fibinet|fibinetpp)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Dnn => "dnn",
            Self::FiBiNet => "fibinet",
            Self::FiBiNetPlusPlus => "fibinetpp",
        }
    }
}

/// Architecture hyper-parameters; the defaults are the reference settings
/// (three 400-wide ReLU layers, compression size 50, 2 groups, reduction 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub embedding_dim: usize,
    pub mlp_widths: Vec<usize>,
    pub compression_size: usize,
    pub groups: usize,
    pub reduction: usize,
    pub bilinear_type: BilinearFieldType,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            embedding_dim: 10,
            mlp_widths: vec![400, 400, 400],
            compression_size: 50,
            groups: 2,
            reduction: 3,
            bilinear_type: BilinearFieldType::FieldInteraction,
        }
    }
}

impl HyperParams {
    pub fn validate_for(&self, arch: Architecture) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".to_string()));
        }
        if self.mlp_widths.is_empty() || self.mlp_widths.contains(&0) {
            return Err(Error::Config(
                "mlp widths must be non-empty and positive".to_string(),
            ));
        }
        match arch {
            Architecture::Dnn => {}
            Architecture::FiBiNet => {
                if self.reduction == 0 {
                    return Err(Error::Config("reduction must be positive".to_string()));
                }
            }
            Architecture::FiBiNetPlusPlus => {
                if self.groups == 0 || self.embedding_dim % self.groups != 0 {
                    return Err(Error::Config(format!(
                        "groups {} must divide embedding_dim {}",
                        self.groups, self.embedding_dim
                    )));
                }
                if self.reduction == 0 {
                    return Err(Error::Config("reduction must be positive".to_string()));
                }
                if self.compression_size == 0 {
                    return Err(Error::Config("compression_size must be positive".to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Per-feature scalar weights summed into the logit (FiBiNet only):
/// a `(vocab+1) x 1` table per categorical field, one weight per numerical
/// field applied to the scaled value.
#[derive(Debug, Clone)]
pub struct LinearPart<F: Scalar = f64> {
    weights: Vec<Parameter<F>>,
    cache_batch: Option<Vec<EncodedInstance>>,
}

impl<F: Scalar> LinearPart<F> {
    pub fn new(schema: &FeatureSchema) -> Self {
        let weights = schema
            .fields
            .iter()
            .enumerate()
            .map(|(i, field)| {
                let rows = match field.kind {
                    FieldKind::Categorical { vocab_size } => vocab_size + 1,
                    FieldKind::Numerical { .. } => 1,
                };
                Parameter::new(format!("linear.f{i}"), Tensor::zeros(rows, 1))
            })
            .collect();
        Self {
            weights,
            cache_batch: None,
        }
    }

    /// One weight per feature.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn forward_batch(&mut self, batch: &[EncodedInstance]) -> Result<Tensor<F>> {
        let mut out = Tensor::zeros(batch.len(), 1);
        for (r, inst) in batch.iter().enumerate() {
            if inst.slots.len() != self.weights.len() {
                return Err(Error::Schema(format!(
                    "instance has {} slots, linear part has {} fields",
                    inst.slots.len(),
                    self.weights.len()
                )));
            }
            let mut acc = F::zero();
            for (i, slot) in inst.slots.iter().enumerate() {
                match slot {
                    EncodedSlot::Row(row) => acc += self.weights[i].value.at(*row as usize, 0),
                    EncodedSlot::Scaled(x) => {
                        acc += self.weights[i].value.at(0, 0) * F::from_f64_lossy(*x)
                    }
                }
            }
            out.set(r, 0, acc);
        }
        self.cache_batch = Some(batch.to_vec());
        Ok(out)
    }

    pub fn backward_batch(&mut self, upstream: &Tensor<F>) -> Result<()> {
        let batch = self.cache_batch.as_ref().expect("forward before backward");
        for (r, inst) in batch.iter().enumerate() {
            let up = upstream.at(r, 0);
            for (i, slot) in inst.slots.iter().enumerate() {
                match slot {
                    EncodedSlot::Row(row) => {
                        let cur = self.weights[i].grad.at(*row as usize, 0);
                        self.weights[i].grad.set(*row as usize, 0, cur + up);
                    }
                    EncodedSlot::Scaled(x) => {
                        let cur = self.weights[i].grad.at(0, 0);
                        self.weights[i].grad.set(0, 0, cur + up * F::from_f64_lossy(*x));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.weights.iter_mut().collect()
    }
}

/// Exact parameter accounting, split by component. `mlp_first_layer` counts
/// only the first hidden layer's weight matrix; its bias and all deeper
/// layers are under `deeper_mlp`. `three_part_total` is the headline
/// size figure: first-layer weights plus the compression layer.
#[derive(Debug, Clone, Serialize)]
pub struct ParamAudit {
    pub arch: String,
    pub fields: usize,
    pub embedding_dim: usize,
    pub first_mlp_width: usize,
    pub compression_size: usize,
    pub feature_total: usize,
    pub mlp_first_layer: usize,
    pub compression_layer: usize,
    pub bilinear_ws: usize,
    pub excitation: usize,
    pub norm_affine: usize,
    pub linear_part: usize,
    pub deeper_mlp: usize,
    pub prediction: usize,
    pub non_embedding_total: usize,
    pub embedding_total: usize,
    pub three_part_total: usize,
    pub closed_form_fibinet: usize,
    pub closed_form_fibinetpp: usize,
    pub compression_ratio: f64,
}

/// `f(f-1) d h + t`: first-MLP/bi-linear connection plus linear part.
pub fn fibinet_closed_form(f: usize, d: usize, h: usize, t: usize) -> usize {
    f * (f - 1) * d * h + t
}

/// `f d h + m h + f(f-1)/2 m`: the three dominant components.
pub fn fibinetpp_closed_form(f: usize, d: usize, h: usize, m: usize) -> usize {
    f * d * h + m * h + pair_count(f) * m
}

pub fn closed_form_ratio(f: usize, d: usize, h: usize, m: usize, t: usize) -> f64 {
    fibinet_closed_form(f, d, h, t) as f64 / fibinetpp_closed_form(f, d, h, m) as f64
}

/// An assembled network: embedding front end, architecture-specific
/// branches, MLP stack and sigmoid prediction head.
#[derive(Debug, Clone)]
pub struct ModelGraph<F: Scalar = f64> {
    pub arch: Architecture,
    pub schema: FeatureSchema,
    pub vocab: Vocabulary,
    pub hyper: HyperParams,
    embedding: EmbeddingTable<F>,
    feature_norm: Option<FeatureNorm<F>>,
    bilinear_plus: Option<BilinearPlus<F>>,
    senet_plus: Option<SenetPlus<F>>,
    senet: Option<SenetOriginal<F>>,
    bilinear_raw: Option<BilinearHadamard<F>>,
    bilinear_se: Option<BilinearHadamard<F>>,
    linear_part: Option<LinearPart<F>>,
    mlp: Mlp<F>,
    head: PredictionHead<F>,
    training: bool,
}

impl<F: Scalar> ModelGraph<F> {
    pub fn build(
        arch: Architecture,
        schema: FeatureSchema,
        vocab: Vocabulary,
        hyper: HyperParams,
        seed: u64,
    ) -> Result<Self> {
        schema.validate()?;
        hyper.validate_for(arch)?;
        let f = schema.field_count();
        let d = hyper.embedding_dim;
        let mut rng = rng::seeded(seed);
        let embedding = EmbeddingTable::new(&schema, d, &mut rng);

        let mut feature_norm = None;
        let mut bilinear_plus = None;
        let mut senet_plus = None;
        let mut senet = None;
        let mut bilinear_raw = None;
        let mut bilinear_se = None;
        let mut linear_part = None;

        let mlp_input = match arch {
            Architecture::Dnn => f * d,
            Architecture::FiBiNet => {
                senet = Some(SenetOriginal::new("senet", f, d, hyper.reduction, &mut rng));
                bilinear_raw = Some(BilinearHadamard::new(
                    "bilinear_raw",
                    hyper.bilinear_type,
                    f,
                    d,
                    &mut rng,
                ));
                bilinear_se = Some(BilinearHadamard::new(
                    "bilinear_se",
                    hyper.bilinear_type,
                    f,
                    d,
                    &mut rng,
                ));
                linear_part = Some(LinearPart::new(&schema));
                2 * pair_count(f) * d
            }
            Architecture::FiBiNetPlusPlus => {
                feature_norm = Some(FeatureNorm::new("feature_norm", &schema, d));
                bilinear_plus = Some(BilinearPlus::new(
                    "bilinear_plus",
                    hyper.bilinear_type,
                    f,
                    d,
                    hyper.compression_size,
                    &mut rng,
                ));
                senet_plus = Some(SenetPlus::new(
                    "senet_plus",
                    f,
                    d,
                    hyper.groups,
                    hyper.reduction,
                    &mut rng,
                )?);
                hyper.compression_size + f * d
            }
        };
        let mlp = Mlp::new("mlp", mlp_input, &hyper.mlp_widths, &mut rng);
        let head = PredictionHead::new("prediction", mlp.out_dim(), &mut rng);

        let graph = Self {
            arch,
            schema,
            vocab,
            hyper,
            embedding,
            feature_norm,
            bilinear_plus,
            senet_plus,
            senet,
            bilinear_raw,
            bilinear_se,
            linear_part,
            mlp,
            head,
            training: true,
        };
        debug_assert!(graph.names_are_unique());
        Ok(graph)
    }

    fn names_are_unique(&self) -> bool {
        let mut g = self.clone();
        let names: Vec<String> = g.parameters().iter().map(|p| p.name.clone()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        sorted.len() == names.len()
    }

    pub fn field_count(&self) -> usize {
        self.schema.field_count()
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
        if let Some(fnorm) = &mut self.feature_norm {
            fnorm.set_training(training);
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Forward pass over an encoded batch, returning `batch x 1`
    /// probabilities strictly inside `(0, 1)`.
    pub fn forward_batch(&mut self, batch: &[EncodedInstance]) -> Result<Tensor<F>> {
        let v = self.embedding.forward_batch(batch)?;
        let (hidden_in, extra) = match self.arch {
            Architecture::Dnn => (v, None),
            Architecture::FiBiNet => {
                let se = self.senet.as_mut().expect("fibinet has senet").forward(&v)?;
                let p = self
                    .bilinear_raw
                    .as_mut()
                    .expect("fibinet has raw bilinear")
                    .forward(&v)?;
                let q = self
                    .bilinear_se
                    .as_mut()
                    .expect("fibinet has se bilinear")
                    .forward(&se)?;
                let lin = self
                    .linear_part
                    .as_mut()
                    .expect("fibinet has linear part")
                    .forward_batch(batch)?;
                (Tensor::hstack(&[&p, &q])?, Some(lin))
            }
            Architecture::FiBiNetPlusPlus => {
                let vn = self
                    .feature_norm
                    .as_mut()
                    .expect("fibinetpp has feature norm")
                    .forward(&v)?;
                let cml = self
                    .bilinear_plus
                    .as_mut()
                    .expect("fibinetpp has bilinear+")
                    .forward(&vn)?;
                let se = self
                    .senet_plus
                    .as_mut()
                    .expect("fibinetpp has senet+")
                    .forward(&vn)?;
                (Tensor::hstack(&[&cml, &se])?, None)
            }
        };
        let z = self.mlp.forward(&hidden_in)?;
        self.head.forward_with_extra(&z, extra.as_ref())
    }

    /// Backward pass for the loss gradient w.r.t. the predicted
    /// probabilities (`batch x 1`), accumulating every parameter gradient.
    pub fn backward_batch(&mut self, upstream: &Tensor<F>) -> Result<()> {
        let (d_z, d_logit) = self.head.backward_with_extra(upstream)?;
        let d_hidden = self.mlp.backward(&d_z)?;
        let f = self.field_count();
        let d = self.hyper.embedding_dim;
        let d_v = match self.arch {
            Architecture::Dnn => d_hidden,
            Architecture::FiBiNet => {
                let w = pair_count(f) * d;
                let parts = d_hidden.split_cols(&[w, w])?;
                let d_se = self
                    .bilinear_se
                    .as_mut()
                    .expect("fibinet has se bilinear")
                    .backward(&parts[1])?;
                let mut d_v = self
                    .bilinear_raw
                    .as_mut()
                    .expect("fibinet has raw bilinear")
                    .backward(&parts[0])?;
                d_v.add_assign(&self.senet.as_mut().expect("fibinet has senet").backward(&d_se)?)?;
                self.linear_part
                    .as_mut()
                    .expect("fibinet has linear part")
                    .backward_batch(&d_logit)?;
                d_v
            }
            Architecture::FiBiNetPlusPlus => {
                let parts = d_hidden.split_cols(&[self.hyper.compression_size, f * d])?;
                let mut d_vn = self
                    .bilinear_plus
                    .as_mut()
                    .expect("fibinetpp has bilinear+")
                    .backward(&parts[0])?;
                d_vn.add_assign(
                    &self
                        .senet_plus
                        .as_mut()
                        .expect("fibinetpp has senet+")
                        .backward(&parts[1])?,
                )?;
                self.feature_norm
                    .as_mut()
                    .expect("fibinetpp has feature norm")
                    .backward(&d_vn)?
            }
        };
        self.embedding.backward_batch(&d_v)
    }

    /// Eval-mode scores for an encoded batch.
    pub fn predict_batch(&mut self, batch: &[EncodedInstance]) -> Result<Vec<f64>> {
        self.set_training(false);
        let mut scores = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(1024) {
            let out = self.forward_batch(chunk)?;
            scores.extend(out.data().iter().map(|p| p.to_f64_lossy()));
        }
        Ok(scores)
    }

    /// Encodes raw rows against the stored schema/vocabulary and scores them.
    pub fn predict_raw(&mut self, rows: &[RawInstance]) -> Result<Vec<f64>> {
        let batch = encode_batch(rows, &self.schema, &self.vocab)?;
        self.predict_batch(&batch)
    }

    /// Every learnable tensor exactly once, in a stable order.
    pub fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = self.embedding.parameters();
        if let Some(linear) = &mut self.linear_part {
            out.extend(linear.parameters());
        }
        if let Some(fnorm) = &mut self.feature_norm {
            out.extend(fnorm.parameters());
        }
        if let Some(se) = &mut self.senet {
            out.extend(se.parameters());
        }
        if let Some(b) = &mut self.bilinear_raw {
            out.extend(b.parameters());
        }
        if let Some(b) = &mut self.bilinear_se {
            out.extend(b.parameters());
        }
        if let Some(b) = &mut self.bilinear_plus {
            out.extend(b.parameters());
        }
        if let Some(se) = &mut self.senet_plus {
            out.extend(se.parameters());
        }
        out.extend(self.mlp.parameters());
        out.extend(self.head.parameters());
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// All persistent tensors by name: parameters plus batch-norm running
    /// statistics.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        fn push<'a, F: Scalar>(
            out: &mut Vec<(String, &'a mut Tensor<F>)>,
            params: Vec<&'a mut Parameter<F>>,
        ) {
            for p in params {
                let Parameter { name, value, .. } = p;
                out.push((name.clone(), value));
            }
        }
        let mut out: Vec<(String, &mut Tensor<F>)> = Vec::new();
        push(&mut out, self.embedding.parameters());
        if let Some(linear) = &mut self.linear_part {
            push(&mut out, linear.parameters());
        }
        if let Some(fnorm) = &mut self.feature_norm {
            out.extend(fnorm.named_tensors_mut());
        }
        if let Some(se) = &mut self.senet {
            push(&mut out, se.parameters());
        }
        if let Some(b) = &mut self.bilinear_raw {
            push(&mut out, b.parameters());
        }
        if let Some(b) = &mut self.bilinear_se {
            push(&mut out, b.parameters());
        }
        if let Some(b) = &mut self.bilinear_plus {
            push(&mut out, b.parameters());
        }
        if let Some(se) = &mut self.senet_plus {
            push(&mut out, se.parameters());
        }
        push(&mut out, self.mlp.parameters());
        push(&mut out, self.head.parameters());
        out
    }

    pub fn bn_fitted_flags(&self) -> Vec<bool> {
        self.feature_norm
            .as_ref()
            .map(|f| f.batch_norm_states().iter().map(|s| s.fitted).collect())
            .unwrap_or_default()
    }

    pub fn set_bn_fitted_flags(&mut self, flags: &[bool]) -> Result<()> {
        if let Some(fnorm) = &mut self.feature_norm {
            let mut states = fnorm.batch_norm_states_mut();
            if states.len() != flags.len() {
                return Err(Error::Checkpoint(format!(
                    "expected {} batch-norm fitted flags, got {}",
                    states.len(),
                    flags.len()
                )));
            }
            for (state, &flag) in states.iter_mut().zip(flags) {
                state.fitted = flag;
            }
        } else if !flags.is_empty() {
            return Err(Error::Checkpoint(
                "architecture has no batch-norm states but flags were provided".to_string(),
            ));
        }
        Ok(())
    }

    /// Exact component-wise parameter accounting plus the closed-form
    /// cross-check figures.
    pub fn audit(&mut self) -> ParamAudit {
        let f = self.field_count();
        let d = self.hyper.embedding_dim;
        let h = self.hyper.mlp_widths[0];
        let m = self.hyper.compression_size;
        let t = self.schema.feature_total();

        let mlp_first_layer = self.mlp.first_layer_weight_count();
        let deeper_mlp = self.mlp.remaining_param_count();
        let prediction = self.head.param_count();
        let compression_layer = self
            .bilinear_plus
            .as_ref()
            .map(|b| b.compress.weight_count())
            .unwrap_or(0);
        let bilinear_ws = self
            .bilinear_plus
            .as_ref()
            .map(|b| b.inner.matrix_param_count())
            .unwrap_or(0)
            + self
                .bilinear_raw
                .as_ref()
                .map(|b| b.matrix_param_count())
                .unwrap_or(0)
            + self
                .bilinear_se
                .as_ref()
                .map(|b| b.matrix_param_count())
                .unwrap_or(0);
        let excitation = self
            .senet_plus
            .as_ref()
            .map(|s| s.excitation_param_count())
            .unwrap_or(0)
            + self.senet.as_ref().map(|s| s.param_count()).unwrap_or(0);
        let norm_affine = self
            .feature_norm
            .as_ref()
            .map(|n| n.affine_param_count())
            .unwrap_or(0)
            + self
                .senet_plus
                .as_ref()
                .map(|s| s.fuse_affine_param_count())
                .unwrap_or(0);
        let linear_part = self
            .linear_part
            .as_ref()
            .map(|l| l.param_count())
            .unwrap_or(0);
        let embedding_total = self.embedding.param_count();
        let non_embedding_total = mlp_first_layer
            + deeper_mlp
            + prediction
            + compression_layer
            + bilinear_ws
            + excitation
            + norm_affine
            + linear_part;

        let registry: usize = {
            let total: usize = self.parameters().iter().map(|p| p.len()).sum();
            total
        };
        debug_assert_eq!(registry, non_embedding_total + embedding_total);

        ParamAudit {
            arch: self.arch.as_str().to_string(),
            fields: f,
            embedding_dim: d,
            first_mlp_width: h,
            compression_size: m,
            feature_total: t,
            mlp_first_layer,
            compression_layer,
            bilinear_ws,
            excitation,
            norm_affine,
            linear_part,
            deeper_mlp,
            prediction,
            non_embedding_total,
            embedding_total,
            three_part_total: mlp_first_layer + compression_layer,
            closed_form_fibinet: fibinet_closed_form(f, d, h, t),
            closed_form_fibinetpp: fibinetpp_closed_form(f, d, h, m),
            compression_ratio: closed_form_ratio(f, d, h, m, t),
        }
    }

    pub fn head_mut(&mut self) -> &mut PredictionHead<F> {
        &mut self.head
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<F> {
        &mut self.mlp
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingTable<F> {
        &mut self.embedding
    }
}

/// Adapter for gradient-checking a whole graph: a frozen encoded batch is
/// run through the full forward/backward, the tensor input is ignored and
/// its gradient is identically zero.
pub struct GraphProbe<F: Scalar = f64> {
    pub graph: ModelGraph<F>,
    batch: Vec<EncodedInstance>,
}

impl<F: Scalar> GraphProbe<F> {
    pub fn new(graph: ModelGraph<F>, batch: Vec<EncodedInstance>) -> Self {
        Self { graph, batch }
    }
}

impl<F: Scalar> Layer<F> for GraphProbe<F> {
    fn forward(&mut self, _input: &Tensor<F>) -> Result<Tensor<F>> {
        self.graph.forward_batch(&self.batch)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        self.graph.backward_batch(upstream)?;
        Ok(Tensor::zeros(1, 1))
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.graph.parameters()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::random_batch;
    use crate::layer::grad_check;

    fn toy_setup(
        num_fields: usize,
        cat_fields: usize,
        vocab: usize,
    ) -> (FeatureSchema, Vocabulary) {
        let mut schema = FeatureSchema::with_layout(num_fields, cat_fields);
        let vocab = Vocabulary::synthetic(&mut schema, vocab);
        (schema, vocab)
    }

    fn small_hyper(d: usize, widths: &[usize], m: usize, g: usize, r: usize) -> HyperParams {
        HyperParams {
            embedding_dim: d,
            mlp_widths: widths.to_vec(),
            compression_size: m,
            groups: g,
            reduction: r,
            bilinear_type: BilinearFieldType::FieldInteraction,
        }
    }

    #[test]
    fn fibinetpp_first_mlp_width_is_m_plus_fd() {
        let (schema, vocab) = toy_setup(2, 2, 3);
        let hyper = small_hyper(4, &[8], 5, 2, 3);
        let mut g =
            ModelGraph::<f64>::build(Architecture::FiBiNetPlusPlus, schema, vocab, hyper, 1)
                .unwrap();
        // first layer weight count = h * (m + f*d) = 8 * (5 + 16) = 168
        assert_eq!(g.mlp.first_layer_weight_count(), 8 * 21);
        let audit = g.audit();
        assert_eq!(audit.mlp_first_layer, 8 * 21);
    }

    #[test]
    fn dnn_first_mlp_width_is_fd() {
        let (schema, vocab) = toy_setup(2, 2, 3);
        let hyper = small_hyper(4, &[8, 4], 5, 2, 3);
        let mut g = ModelGraph::<f64>::build(Architecture::Dnn, schema, vocab, hyper, 1).unwrap();
        assert_eq!(g.mlp.first_layer_weight_count(), 8 * 16);
        let audit = g.audit();
        assert_eq!(audit.linear_part, 0);
        assert_eq!(audit.bilinear_ws, 0);
    }

    #[test]
    fn forward_stays_in_unit_interval() {
        for arch in [
            Architecture::Dnn,
            Architecture::FiBiNet,
            Architecture::FiBiNetPlusPlus,
        ] {
            let (schema, vocab) = toy_setup(2, 2, 3);
            let hyper = small_hyper(4, &[8], 5, 2, 3);
            let mut g = ModelGraph::<f64>::build(arch, schema.clone(), vocab, hyper, 7).unwrap();
            let batch = random_batch(&schema, 5, &mut crate::rng::seeded(3));
            let out = g.forward_batch(&batch).unwrap();
            assert_eq!(out.shape(), (5, 1));
            assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0), "{arch:?}");
        }
    }

    #[test]
    fn predict_monotone_in_head_bias() {
        let (schema, vocab) = toy_setup(2, 2, 3);
        let hyper = small_hyper(4, &[8], 5, 2, 3);
        let mut g = ModelGraph::<f64>::build(Architecture::Dnn, schema.clone(), vocab, hyper, 7)
            .unwrap();
        let batch = random_batch(&schema, 1, &mut crate::rng::seeded(9));
        let mut last = 0.0;
        for (k, bias) in [-1.0, 0.0, 1.0, 2.0].iter().enumerate() {
            g.head_mut().bias_mut().value.set(0, 0, *bias);
            let y = g.predict_batch(&batch).unwrap()[0];
            if k > 0 {
                assert!(y > last);
            }
            last = y;
        }
    }

    #[test]
    fn dnn_scalar_trace_end_to_end() {
        // Two numerical fields, d = 2, every weight set by hand.
        let mut schema = FeatureSchema {
            fields: vec![
                crate::embedding::FieldSpec::numerical_with_range("n0", 0.0, 1.0),
                crate::embedding::FieldSpec::numerical_with_range("n1", 0.0, 1.0),
            ],
        };
        let vocab = Vocabulary::synthetic(&mut schema, 0);
        let hyper = small_hyper(2, &[2], 1, 1, 1);
        let mut g = ModelGraph::<f64>::build(Architecture::Dnn, schema, vocab, hyper, 0).unwrap();

        g.embedding_mut().table_mut(0).value = Tensor::new(1, 2, vec![1.0, 0.0]);
        g.embedding_mut().table_mut(1).value = Tensor::new(1, 2, vec![0.0, 1.0]);
        {
            let mlp = g.mlp_mut();
            let params = mlp.parameters();
            // one hidden layer: weight 2x4, bias 1x2
            assert_eq!(params.len(), 2);
        }
        for p in g.parameters() {
            match p.name.as_str() {
                "mlp.0.weight" => {
                    p.value = Tensor::new(2, 4, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0])
                }
                "mlp.0.bias" => p.value = Tensor::new(1, 2, vec![0.1, -0.2]),
                "prediction.weight" => p.value = Tensor::new(1, 2, vec![2.0, -1.0]),
                "prediction.bias" => p.value = Tensor::new(1, 1, vec![0.3]),
                _ => {}
            }
        }
        // x = (0.5, 1.0) -> v = [0.5, 0, 0, 1.0]
        // hidden pre = [0.5 + 0.1, 1.0 - 0.2] = [0.6, 0.8] -> relu unchanged
        // logit = 2*0.6 - 1*0.8 + 0.3 = 0.7
        let row = RawInstance::new(1, vec![Some("0.5".into()), Some("1.0".into())]);
        let y = g.predict_raw(&[row]).unwrap()[0];
        let expected = 1.0 / (1.0 + (-0.7f64).exp());
        assert!((y - expected).abs() < 1e-15, "{y} vs {expected}");
    }

    #[test]
    fn closed_forms_match_reference_sizes() {
        assert_eq!(fibinet_closed_form(50, 10, 400, 1_000_000), 10_800_000);
        assert_eq!(fibinetpp_closed_form(50, 10, 400, 50), 281_250);
        let ratio = closed_form_ratio(50, 10, 400, 50, 1_000_000);
        assert!((ratio - 38.4).abs() < 1e-12);
    }

    #[test]
    fn audit_three_parts_match_closed_form() {
        let (schema, vocab) = toy_setup(2, 4, 3);
        let hyper = small_hyper(4, &[16, 8], 7, 2, 3);
        let mut g =
            ModelGraph::<f64>::build(Architecture::FiBiNetPlusPlus, schema, vocab, hyper, 5)
                .unwrap();
        let audit = g.audit();
        assert_eq!(
            audit.three_part_total,
            fibinetpp_closed_form(6, 4, 16, 7)
        );
        // Registry covers the closed form plus the itemized extras.
        assert!(audit.non_embedding_total >= audit.closed_form_fibinetpp);
        assert_eq!(
            audit.non_embedding_total,
            audit.three_part_total
                + audit.bilinear_ws
                + audit.excitation
                + audit.norm_affine
                + audit.deeper_mlp
                + audit.prediction
        );
    }

    #[test]
    fn fibinet_audit_includes_linear_part() {
        let (schema, vocab) = toy_setup(1, 3, 4);
        let t = schema.feature_total();
        assert_eq!(t, 3 * 5 + 1);
        let hyper = small_hyper(2, &[8], 5, 1, 2);
        let mut g = ModelGraph::<f64>::build(Architecture::FiBiNet, schema, vocab, hyper, 5)
            .unwrap();
        let audit = g.audit();
        assert_eq!(audit.linear_part, t);
        assert_eq!(audit.compression_layer, 0);
    }

    #[test]
    fn predict_before_any_training_reports_unfit_batch_norm() {
        let (schema, vocab) = toy_setup(1, 2, 3);
        let hyper = small_hyper(2, &[6], 3, 1, 2);
        let mut g =
            ModelGraph::<f64>::build(Architecture::FiBiNetPlusPlus, schema.clone(), vocab, hyper, 3)
                .unwrap();
        let batch = random_batch(&schema, 2, &mut crate::rng::seeded(5));
        let err = g.predict_batch(&batch).unwrap_err();
        assert!(matches!(err, crate::error::Error::State(_)), "{err}");
    }

    #[test]
    fn full_graph_gradcheck_small() {
        let (schema, vocab) = toy_setup(1, 2, 3);
        let hyper = small_hyper(2, &[6], 3, 1, 2);
        let g = ModelGraph::<f64>::build(Architecture::FiBiNetPlusPlus, schema.clone(), vocab, hyper, 11)
            .unwrap();
        let batch = random_batch(&schema, 3, &mut crate::rng::seeded(13));
        let mut probe = GraphProbe::new(g, batch);
        crate::layer::jitter_parameters(probe.parameters(), &mut crate::rng::seeded(14), 0.3);
        let err = grad_check(&mut probe, &Tensor::zeros(1, 1), 1e-5).unwrap();
        assert!(err <= 1e-4, "full graph gradcheck error: {err}");
    }
}
