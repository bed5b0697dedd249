//! Feature schema, vocabularies, min-max statistics and the learned
//! embedding tables that turn raw field values into dense vectors.
//!
//! Every categorical field reserves row 0 of its table for out-of-vocabulary
//! tokens; a numerical field owns a single embedding vector that gets scaled
//! by the min-max normalized value. A missing numerical value maps to the
//! scaled midpoint 0.5, a missing categorical value to the OOV row.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Layer, Parameter};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Scaled value substituted for a missing numerical field.
pub const MISSING_NUMERIC_SCALED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Categorical {
        /// Number of in-vocabulary tokens; the table has one extra OOV row.
        vocab_size: usize,
    },
    Numerical {
        /// `(min, max)` fitted on the training split; `None` until fitted.
        min_max: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn categorical(name: &str, vocab_size: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: FieldKind::Categorical { vocab_size },
        }
    }

    pub fn numerical(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FieldKind::Numerical { min_max: None },
        }
    }

    pub fn numerical_with_range(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: FieldKind::Numerical {
                min_max: Some((min, max)),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FieldKind::Categorical { .. })
    }
}

/// Ordered field descriptors for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<FieldSpec>,
}

impl FeatureSchema {
    /// Standard column layout: numerical fields first, then categorical.
    pub fn with_layout(num_fields: usize, cat_fields: usize) -> Self {
        let mut fields = Vec::with_capacity(num_fields + cat_fields);
        for i in 0..num_fields {
            fields.push(FieldSpec::numerical(&format!("n{i}")));
        }
        for i in 0..cat_fields {
            fields.push(FieldSpec::categorical(&format!("c{i}"), 0));
        }
        Self { fields }
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    pub fn categorical_count(&self) -> usize {
        self.fields.iter().filter(|f| f.is_categorical()).count()
    }

    pub fn numerical_count(&self) -> usize {
        self.field_count() - self.categorical_count()
    }

    /// Total feature count: every vocabulary row (including OOV) plus one
    /// scalar feature per numerical field.
    pub fn feature_total(&self) -> usize {
        self.fields
            .iter()
            .map(|f| match f.kind {
                FieldKind::Categorical { vocab_size } => vocab_size + 1,
                FieldKind::Numerical { .. } => 1,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.field_count() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 fields, got {}",
                self.field_count()
            )));
        }
        for field in &self.fields {
            if let FieldKind::Numerical {
                min_max: Some((lo, hi)),
            } = field.kind
            {
                if lo >= hi {
                    return Err(Error::Schema(format!(
                        "field {}: min {} must be below max {}",
                        field.name, lo, hi
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One raw data row: binary label plus one optional string per field
/// (`None` encodes a missing value). Raw text is kept verbatim so rows can
/// be re-serialized losslessly.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInstance {
    pub label: u8,
    pub values: Vec<Option<String>>,
}

impl RawInstance {
    pub fn new(label: u8, values: Vec<Option<String>>) -> Self {
        Self { label, values }
    }
}

/// Token list per categorical field; `tokens[k]` owns table row `k + 1`,
/// row 0 being the out-of-vocabulary row.
#[derive(Debug, Clone, Default)]
pub struct FieldVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl FieldVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Self { tokens, index }
    }

    pub fn row_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabularies aligned with the schema: `None` for numerical fields.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub per_field: Vec<Option<FieldVocab>>,
}

impl Vocabulary {
    /// Builds vocabularies from training rows in first-appearance order,
    /// dropping tokens seen fewer than `min_freq` times, and records the
    /// resulting vocabulary sizes in the schema.
    pub fn fit(rows: &[RawInstance], schema: &mut FeatureSchema, min_freq: u64) -> Result<Self> {
        let f = schema.field_count();
        let mut counts: Vec<HashMap<String, u64>> = vec![HashMap::new(); f];
        let mut order: Vec<Vec<String>> = vec![Vec::new(); f];
        for row in rows {
            if row.values.len() != f {
                return Err(Error::Schema(format!(
                    "row has {} values, schema has {} fields",
                    row.values.len(),
                    f
                )));
            }
            for (i, value) in row.values.iter().enumerate() {
                if !schema.fields[i].is_categorical() {
                    continue;
                }
                if let Some(token) = value {
                    let counter = counts[i].entry(token.clone()).or_insert(0);
                    if *counter == 0 {
                        order[i].push(token.clone());
                    }
                    *counter += 1;
                }
            }
        }
        let mut per_field = Vec::with_capacity(f);
        for i in 0..f {
            if schema.fields[i].is_categorical() {
                let kept: Vec<String> = order[i]
                    .iter()
                    .filter(|t| counts[i][*t] >= min_freq)
                    .cloned()
                    .collect();
                schema.fields[i].kind = FieldKind::Categorical {
                    vocab_size: kept.len(),
                };
                per_field.push(Some(FieldVocab::from_tokens(kept)));
            } else {
                per_field.push(None);
            }
        }
        Ok(Self { per_field })
    }
}

impl Vocabulary {
    /// Fixed token lists `t0..t{n-1}` for every categorical field, recording
    /// the sizes in the schema; unfitted numerical ranges default to (0, 1).
    /// Handy for size audits, gradient checks and tests that need a model
    /// without a dataset.
    pub fn synthetic(schema: &mut FeatureSchema, vocab_size: usize) -> Self {
        let per_field = schema
            .fields
            .iter_mut()
            .map(|field| match &mut field.kind {
                FieldKind::Categorical { vocab_size: vs } => {
                    *vs = vocab_size;
                    Some(FieldVocab::from_tokens(
                        (0..vocab_size).map(|k| format!("t{k}")).collect(),
                    ))
                }
                FieldKind::Numerical { min_max } => {
                    if min_max.is_none() {
                        *min_max = Some((0.0, 1.0));
                    }
                    None
                }
            })
            .collect();
        Self { per_field }
    }
}

/// Random encoded instances conforming to the schema: uniform table rows
/// (including the OOV row) and uniform scaled values.
pub fn random_batch(
    schema: &FeatureSchema,
    n: usize,
    rng: &mut impl RngCore,
) -> Vec<EncodedInstance> {
    (0..n)
        .map(|_| {
            let slots = schema
                .fields
                .iter()
                .map(|field| match field.kind {
                    FieldKind::Categorical { vocab_size } => {
                        EncodedSlot::Row(rng::below(rng, vocab_size + 1) as u32)
                    }
                    FieldKind::Numerical { .. } => EncodedSlot::Scaled(rng::next_uniform(rng)),
                })
                .collect();
            EncodedInstance {
                label: (rng::below(rng, 2)) as u8,
                slots,
            }
        })
        .collect()
}

/// Writes one token per line; line `k` (0-based) owns table row `k + 1`.
pub fn write_vocab_file(path: &Path, vocab: &FieldVocab) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for token in vocab.tokens() {
        writeln!(file, "{token}")?;
    }
    Ok(())
}

pub fn read_vocab_file(path: &Path) -> Result<FieldVocab> {
    let file = std::fs::File::open(path)?;
    let mut tokens = Vec::new();
    for line in BufReader::new(file).lines() {
        tokens.push(line?);
    }
    Ok(FieldVocab::from_tokens(tokens))
}

/// Min-max scaling to `[0, 1]`, clamped for out-of-range test-time values.
pub fn minmax_scale(x: f64, min: f64, max: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Input(format!("non-finite numerical value {x}")));
    }
    debug_assert!(min < max, "minmax_scale requires min < max");
    Ok(((x - min) / (max - min)).clamp(0.0, 1.0))
}

/// Scans training rows and fixes `(min, max)` per numerical field, skipping
/// missing values. A field with no values or a single distinct value cannot
/// be scaled and is reported as a fit error.
pub fn fit_minmax(rows: &[RawInstance], schema: &mut FeatureSchema) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Fit("no rows to fit min-max statistics on".to_string()));
    }
    let f = schema.field_count();
    let mut lo = vec![f64::INFINITY; f];
    let mut hi = vec![f64::NEG_INFINITY; f];
    let mut seen = vec![false; f];
    for row in rows {
        if row.values.len() != f {
            return Err(Error::Schema(format!(
                "row has {} values, schema has {} fields",
                row.values.len(),
                f
            )));
        }
        for (i, value) in row.values.iter().enumerate() {
            if schema.fields[i].is_categorical() {
                continue;
            }
            if let Some(text) = value {
                let x: f64 = text
                    .parse()
                    .map_err(|_| Error::Input(format!("unparseable numeric value {text:?}")))?;
                if !x.is_finite() {
                    return Err(Error::Input(format!("non-finite numeric value {text:?}")));
                }
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
                seen[i] = true;
            }
        }
    }
    for (i, field) in schema.fields.iter_mut().enumerate() {
        if field.is_categorical() {
            continue;
        }
        if !seen[i] {
            return Err(Error::Fit(format!(
                "field {} has no non-missing values",
                field.name
            )));
        }
        if lo[i] == hi[i] {
            return Err(Error::Fit(format!(
                "field {} has a single distinct value {}",
                field.name, lo[i]
            )));
        }
        field.kind = FieldKind::Numerical {
            min_max: Some((lo[i], hi[i])),
        };
    }
    Ok(())
}

/// A raw row resolved against a frozen schema + vocabulary: table row index
/// per categorical field, scaled value per numerical field.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub label: u8,
    pub slots: Vec<EncodedSlot>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodedSlot {
    /// Embedding table row (0 = out of vocabulary / missing).
    Row(u32),
    /// Min-max scaled value in `[0, 1]`.
    Scaled(f64),
}

/// Resolves one raw instance. Requires fitted min-max statistics.
pub fn encode_instance(
    inst: &RawInstance,
    schema: &FeatureSchema,
    vocab: &Vocabulary,
) -> Result<EncodedInstance> {
    let f = schema.field_count();
    if inst.values.len() != f {
        return Err(Error::Schema(format!(
            "instance has {} values, schema has {} fields",
            inst.values.len(),
            f
        )));
    }
    let mut slots = Vec::with_capacity(f);
    for (i, value) in inst.values.iter().enumerate() {
        match &schema.fields[i].kind {
            FieldKind::Categorical { .. } => {
                let row = match value {
                    Some(token) => vocab.per_field[i]
                        .as_ref()
                        .map(|v| v.row_of(token))
                        .unwrap_or(0),
                    None => 0,
                };
                slots.push(EncodedSlot::Row(row));
            }
            FieldKind::Numerical { min_max } => {
                let (lo, hi) = min_max.ok_or_else(|| {
                    Error::State(format!(
                        "field {} has no fitted min-max statistics",
                        schema.fields[i].name
                    ))
                })?;
                let scaled = match value {
                    Some(text) => {
                        let x: f64 = text.parse().map_err(|_| {
                            Error::Input(format!("unparseable numeric value {text:?}"))
                        })?;
                        minmax_scale(x, lo, hi)?
                    }
                    None => MISSING_NUMERIC_SCALED,
                };
                slots.push(EncodedSlot::Scaled(scaled));
            }
        }
    }
    Ok(EncodedInstance {
        label: inst.label,
        slots,
    })
}

pub fn encode_batch(
    rows: &[RawInstance],
    schema: &FeatureSchema,
    vocab: &Vocabulary,
) -> Result<Vec<EncodedInstance>> {
    rows.iter().map(|r| encode_instance(r, schema, vocab)).collect()
}

/// Learned embedding parameters: a `(vocab+1) x d` table per categorical
/// field, a `1 x d` vector per numerical field.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<F: Scalar = f64> {
    tables: Vec<Parameter<F>>,
    d: usize,
    cache_batch: Option<Vec<EncodedInstance>>,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn new(schema: &FeatureSchema, d: usize, rng: &mut impl RngCore) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let tables = schema
            .fields
            .iter()
            .enumerate()
            .map(|(i, field)| {
                let rows = match field.kind {
                    FieldKind::Categorical { vocab_size } => vocab_size + 1,
                    FieldKind::Numerical { .. } => 1,
                };
                Parameter::new(
                    format!("embedding.f{i}.table"),
                    rng::uniform_tensor(rng, rows, d, bound),
                )
            })
            .collect();
        Self {
            tables,
            d,
            cache_batch: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn field_count(&self) -> usize {
        self.tables.len()
    }

    pub fn output_width(&self) -> usize {
        self.d * self.tables.len()
    }

    pub fn param_count(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    pub fn table(&self, field: usize) -> &Parameter<F> {
        &self.tables[field]
    }

    pub fn table_mut(&mut self, field: usize) -> &mut Parameter<F> {
        &mut self.tables[field]
    }

    /// Embeds one instance into a `1 x (f*d)` row, field blocks in schema
    /// order.
    pub fn embed_instance(&self, inst: &EncodedInstance) -> Result<Tensor<F>> {
        if inst.slots.len() != self.tables.len() {
            return Err(Error::Schema(format!(
                "instance has {} slots, table has {} fields",
                inst.slots.len(),
                self.tables.len()
            )));
        }
        let mut out = Tensor::zeros(1, self.output_width());
        self.write_row(inst, out.row_slice_mut(0));
        Ok(out)
    }

    fn write_row(&self, inst: &EncodedInstance, out: &mut [F]) {
        for (i, slot) in inst.slots.iter().enumerate() {
            let dst = &mut out[i * self.d..(i + 1) * self.d];
            match slot {
                EncodedSlot::Row(row) => {
                    dst.copy_from_slice(self.tables[i].value.row_slice(*row as usize));
                }
                EncodedSlot::Scaled(x) => {
                    let scale = F::from_f64_lossy(*x);
                    for (d, &e) in dst.iter_mut().zip(self.tables[i].value.row_slice(0)) {
                        *d = e * scale;
                    }
                }
            }
        }
    }

    /// Embeds a batch into `batch x (f*d)`, caching the batch for backward.
    pub fn forward_batch(&mut self, batch: &[EncodedInstance]) -> Result<Tensor<F>> {
        let mut out = Tensor::zeros(batch.len(), self.output_width());
        for (r, inst) in batch.iter().enumerate() {
            if inst.slots.len() != self.tables.len() {
                return Err(Error::Schema(format!(
                    "instance has {} slots, table has {} fields",
                    inst.slots.len(),
                    self.tables.len()
                )));
            }
            self.write_row(inst, out.row_slice_mut(r));
        }
        self.cache_batch = Some(batch.to_vec());
        Ok(out)
    }

    /// Scatters output gradients back onto the rows the batch touched.
    pub fn backward_batch(&mut self, upstream: &Tensor<F>) -> Result<()> {
        let batch = self.cache_batch.as_ref().expect("forward before backward");
        if upstream.rows() != batch.len() || upstream.cols() != self.output_width() {
            return Err(Error::ShapeMismatch {
                op: "embedding_backward",
                left: format!("{}x{}", upstream.rows(), upstream.cols()),
                right: format!("{}x{}", batch.len(), self.output_width()),
            });
        }
        for (r, inst) in batch.iter().enumerate() {
            for (i, slot) in inst.slots.iter().enumerate() {
                let src = &upstream.row_slice(r)[i * self.d..(i + 1) * self.d];
                match slot {
                    EncodedSlot::Row(row) => {
                        let dst = self.tables[i].grad.row_slice_mut(*row as usize);
                        for (g, &u) in dst.iter_mut().zip(src) {
                            *g += u;
                        }
                    }
                    EncodedSlot::Scaled(x) => {
                        let scale = F::from_f64_lossy(*x);
                        let dst = self.tables[i].grad.row_slice_mut(0);
                        for (g, &u) in dst.iter_mut().zip(src) {
                            *g += u * scale;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.tables.iter_mut().collect()
    }
}

/// Adapter so the embedding's parameter gradients can go through the
/// generic gradient checker: the batch is frozen inside, the tensor input
/// is ignored, and the input gradient is identically zero.
pub struct EmbeddingProbe<F: Scalar = f64> {
    pub table: EmbeddingTable<F>,
    batch: Vec<EncodedInstance>,
}

impl<F: Scalar> EmbeddingProbe<F> {
    pub fn new(table: EmbeddingTable<F>, batch: Vec<EncodedInstance>) -> Self {
        Self { table, batch }
    }
}

impl<F: Scalar> Layer<F> for EmbeddingProbe<F> {
    fn forward(&mut self, _input: &Tensor<F>) -> Result<Tensor<F>> {
        self.table.forward_batch(&self.batch)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        self.table.backward_batch(upstream)?;
        Ok(Tensor::zeros(1, 1))
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.table.parameters()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::grad_check;
    use crate::rng::seeded;

    fn schema_one_cat_one_num() -> FeatureSchema {
        FeatureSchema {
            fields: vec![
                FieldSpec::categorical("c0", 2),
                FieldSpec::numerical_with_range("n0", 2.0, 6.0),
            ],
        }
    }

    fn vocab_for(schema: &FeatureSchema, tokens: &[&str]) -> Vocabulary {
        let per_field = schema
            .fields
            .iter()
            .map(|f| {
                f.is_categorical()
                    .then(|| FieldVocab::from_tokens(tokens.iter().map(|t| t.to_string()).collect()))
            })
            .collect();
        Vocabulary { per_field }
    }

    #[test]
    fn minmax_scale_endpoints_and_interior() {
        assert_eq!(minmax_scale(2.0, 2.0, 6.0).unwrap(), 0.0);
        assert_eq!(minmax_scale(6.0, 2.0, 6.0).unwrap(), 1.0);
        assert_eq!(minmax_scale(3.0, 2.0, 6.0).unwrap(), 0.25);
        assert_eq!(minmax_scale(100.0, 2.0, 6.0).unwrap(), 1.0); // clamped
        assert!(minmax_scale(f64::NAN, 2.0, 6.0).is_err());
    }

    #[test]
    fn minmax_scale_is_monotone() {
        let mut last = -1.0;
        for i in 0..100 {
            let x = -1.0 + 10.0 * i as f64 / 99.0;
            let s = minmax_scale(x, 2.0, 6.0).unwrap();
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn fit_minmax_scans_and_rejects_degenerate() {
        let mut schema = FeatureSchema {
            fields: vec![FieldSpec::numerical("n0"), FieldSpec::categorical("c0", 0)],
        };
        let rows = vec![
            RawInstance::new(0, vec![Some("2".into()), Some("a".into())]),
            RawInstance::new(1, vec![Some("6".into()), Some("b".into())]),
            RawInstance::new(0, vec![Some("3".into()), Some("a".into())]),
        ];
        fit_minmax(&rows, &mut schema).unwrap();
        assert_eq!(
            schema.fields[0].kind,
            FieldKind::Numerical {
                min_max: Some((2.0, 6.0))
            }
        );

        let constant = vec![
            RawInstance::new(0, vec![Some("4".into()), None]),
            RawInstance::new(1, vec![Some("4".into()), None]),
        ];
        let mut schema2 = FeatureSchema {
            fields: vec![FieldSpec::numerical("n0"), FieldSpec::categorical("c0", 0)],
        };
        assert!(matches!(fit_minmax(&constant, &mut schema2), Err(Error::Fit(_))));
    }

    #[test]
    fn fit_minmax_skips_missing_values() {
        let mut schema = FeatureSchema {
            fields: vec![FieldSpec::numerical("n0"), FieldSpec::categorical("c0", 0)],
        };
        let rows = vec![
            RawInstance::new(0, vec![Some("5".into()), Some("a".into())]),
            RawInstance::new(1, vec![None, Some("a".into())]),
            RawInstance::new(0, vec![Some("1".into()), Some("a".into())]),
        ];
        fit_minmax(&rows, &mut schema).unwrap();
        assert_eq!(
            schema.fields[0].kind,
            FieldKind::Numerical {
                min_max: Some((1.0, 5.0))
            }
        );
    }

    #[test]
    fn categorical_lookup_copies_the_row() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA", "tokB"]);
        let mut rng = seeded(0);
        let mut table: EmbeddingTable = EmbeddingTable::new(&schema, 2, &mut rng);
        table.table_mut(0).value = Tensor::new(3, 2, vec![0.9, 0.8, 0.1, 0.2, 0.3, 0.4]);

        let raw = RawInstance::new(1, vec![Some("tokA".into()), Some("2.0".into())]);
        let enc = encode_instance(&raw, &schema, &vocab).unwrap();
        assert_eq!(enc.slots[0], EncodedSlot::Row(1));
        let v = table.embed_instance(&enc).unwrap();
        assert_eq!(&v.data()[0..2], &[0.1, 0.2]);

        // Unseen token goes to the OOV row 0.
        let raw_oov = RawInstance::new(1, vec![Some("nope".into()), Some("2.0".into())]);
        let enc_oov = encode_instance(&raw_oov, &schema, &vocab).unwrap();
        assert_eq!(enc_oov.slots[0], EncodedSlot::Row(0));
        let v_oov = table.embed_instance(&enc_oov).unwrap();
        assert_eq!(&v_oov.data()[0..2], &[0.9, 0.8]);
    }

    #[test]
    fn missing_values_fall_back_to_oov_and_midpoint() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA"]);
        let raw = RawInstance::new(0, vec![None, None]);
        let enc = encode_instance(&raw, &schema, &vocab).unwrap();
        assert_eq!(enc.slots[0], EncodedSlot::Row(0));
        assert_eq!(enc.slots[1], EncodedSlot::Scaled(MISSING_NUMERIC_SCALED));
    }

    #[test]
    fn numerical_at_min_gives_zero_block() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA"]);
        let mut rng = seeded(1);
        let table: EmbeddingTable = EmbeddingTable::new(&schema, 2, &mut rng);
        let raw = RawInstance::new(0, vec![Some("tokA".into()), Some("2.0".into())]);
        let enc = encode_instance(&raw, &schema, &vocab).unwrap();
        let v = table.embed_instance(&enc).unwrap();
        assert_eq!(&v.data()[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn numerical_scales_embedding_vector() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA"]);
        let mut rng = seeded(2);
        let mut table: EmbeddingTable = EmbeddingTable::new(&schema, 2, &mut rng);
        table.table_mut(1).value = Tensor::new(1, 2, vec![1.0, 2.0]);
        // x = 4.0 in [2, 6] scales to 0.5
        let raw = RawInstance::new(0, vec![Some("tokA".into()), Some("4.0".into())]);
        let enc = encode_instance(&raw, &schema, &vocab).unwrap();
        let v = table.embed_instance(&enc).unwrap();
        assert_eq!(&v.data()[2..4], &[0.5, 1.0]);
    }

    #[test]
    fn output_width_is_fields_times_dim() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA"]);
        let mut rng = seeded(3);
        let table: EmbeddingTable = EmbeddingTable::new(&schema, 3, &mut rng);
        let raw = RawInstance::new(0, vec![None, None]);
        let enc = encode_instance(&raw, &schema, &vocab).unwrap();
        assert_eq!(table.embed_instance(&enc).unwrap().len(), 2 * 3);
    }

    #[test]
    fn arity_mismatch_is_a_schema_error() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA"]);
        let raw = RawInstance::new(0, vec![Some("tokA".into())]);
        assert!(matches!(
            encode_instance(&raw, &schema, &vocab),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn backward_touches_only_used_rows() {
        let schema = FeatureSchema {
            fields: vec![
                FieldSpec::categorical("c0", 4),
                FieldSpec::categorical("c1", 4),
            ],
        };
        schema.validate().unwrap();
        let vocab = Vocabulary {
            per_field: vec![
                Some(FieldVocab::from_tokens(vec!["a".into(), "b".into(), "c".into(), "d".into()])),
                Some(FieldVocab::from_tokens(vec!["a".into(), "b".into(), "c".into(), "d".into()])),
            ],
        };
        let mut rng = seeded(4);
        let mut table: EmbeddingTable = EmbeddingTable::new(&schema, 2, &mut rng);
        let rows = vec![RawInstance::new(1, vec![Some("b".into()), Some("d".into())])];
        let batch = encode_batch(&rows, &schema, &vocab).unwrap();
        table.forward_batch(&batch).unwrap();
        table.backward_batch(&Tensor::full(1, 4, 1.0)).unwrap();

        for field in 0..2 {
            let touched = if field == 0 { 2 } else { 4 };
            let grad = &table.table(field).grad;
            for r in 0..grad.rows() {
                let expect_nonzero = r == touched;
                let nonzero = grad.row_slice(r).iter().any(|&g| g != 0.0);
                assert_eq!(nonzero, expect_nonzero, "field {field} row {r}");
            }
        }
    }

    #[test]
    fn embedding_parameter_gradcheck() {
        let schema = schema_one_cat_one_num();
        let vocab = vocab_for(&schema, &["tokA", "tokB"]);
        let mut rng = seeded(5);
        let table: EmbeddingTable = EmbeddingTable::new(&schema, 3, &mut rng);
        let rows = vec![
            RawInstance::new(1, vec![Some("tokA".into()), Some("3.5".into())]),
            RawInstance::new(0, vec![Some("tokB".into()), None]),
            RawInstance::new(1, vec![Some("zz".into()), Some("5.0".into())]),
        ];
        let batch = encode_batch(&rows, &schema, &vocab).unwrap();
        let mut probe = EmbeddingProbe::new(table, batch);
        let err = grad_check(&mut probe, &Tensor::zeros(1, 1), 1e-5).unwrap();
        assert!(err <= 1e-6, "embedding gradcheck error: {err}");
    }

    #[test]
    fn vocab_fit_respects_frequency_threshold_and_order() {
        let mut schema = FeatureSchema {
            fields: vec![
                FieldSpec::categorical("c0", 0),
                FieldSpec::numerical_with_range("n0", 0.0, 1.0),
            ],
        };
        let rows = vec![
            RawInstance::new(0, vec![Some("x".into()), Some("0.1".into())]),
            RawInstance::new(1, vec![Some("y".into()), Some("0.2".into())]),
            RawInstance::new(0, vec![Some("x".into()), Some("0.3".into())]),
        ];
        let vocab = Vocabulary::fit(&rows, &mut schema, 2).unwrap();
        let field = vocab.per_field[0].as_ref().unwrap();
        assert_eq!(field.tokens(), &["x".to_string()]);
        assert_eq!(field.row_of("x"), 1);
        assert_eq!(field.row_of("y"), 0);
        assert_eq!(schema.fields[0].kind, FieldKind::Categorical { vocab_size: 1 });
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c0.vocab");
        let vocab = FieldVocab::from_tokens(vec!["alpha".into(), "beta".into()]);
        write_vocab_file(&path, &vocab).unwrap();
        let loaded = read_vocab_file(&path).unwrap();
        assert_eq!(loaded.tokens(), vocab.tokens());
        assert_eq!(loaded.row_of("beta"), 2);
    }
}
