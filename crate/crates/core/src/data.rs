//! Dataset I/O and synthetic data generation.
//!
//! The on-disk format is tab-separated: column 1 is the binary label,
//! followed by the numerical columns and then the categorical token
//! columns, in schema order. An empty string is a missing value. This is
//! the layout of the Criteo click logs (label, 13 numeric, 26 categorical).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{
    encode_batch, fit_minmax, EncodedInstance, FeatureSchema, FieldKind, RawInstance, Vocabulary,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::sigmoid;
use crate::train::split_dataset;

/// Fraction of malformed rows tolerated before ingestion aborts.
pub const DEFAULT_BAD_ROW_FRACTION: f64 = 0.001;

fn parse_row(line: &str, schema: &FeatureSchema) -> std::result::Result<RawInstance, String> {
    let mut parts = line.split('\t');
    let label = match parts.next() {
        Some("0") => 0,
        Some("1") => 1,
        Some(other) => return Err(format!("label {other:?} is not 0 or 1")),
        None => return Err("empty line".to_string()),
    };
    let mut values = Vec::with_capacity(schema.field_count());
    for (i, field) in schema.fields.iter().enumerate() {
        let Some(text) = parts.next() else {
            return Err(format!(
                "row has {} columns, expected {}",
                i + 1,
                schema.field_count() + 1
            ));
        };
        if text.is_empty() {
            values.push(None);
            continue;
        }
        if let FieldKind::Numerical { .. } = field.kind {
            let parsed: std::result::Result<f64, _> = text.parse();
            match parsed {
                Ok(x) if x.is_finite() => {}
                _ => return Err(format!("column {} value {text:?} is not numeric", i + 2)),
            }
        }
        values.push(Some(text.to_string()));
    }
    if parts.next().is_some() {
        return Err(format!(
            "row has more than {} columns",
            schema.field_count() + 1
        ));
    }
    Ok(RawInstance::new(label, values))
}

/// Serializes a row back to its TSV line (missing values as empty strings).
pub fn serialize_instance(inst: &RawInstance) -> String {
    let mut line = inst.label.to_string();
    for value in &inst.values {
        line.push('\t');
        if let Some(text) = value {
            line.push_str(text);
        }
    }
    line
}

/// Materialized ingestion result.
#[derive(Debug)]
pub struct IngestResult {
    pub rows: Vec<RawInstance>,
    pub skipped: usize,
}

/// Streaming TSV reader; malformed rows are counted and skipped until they
/// exceed `bad_row_fraction` of the rows seen, then ingestion errors out.
pub struct IngestReader<R: BufRead> {
    reader: R,
    schema: FeatureSchema,
    bad_row_fraction: f64,
    pub skipped: usize,
    seen: usize,
    failed: bool,
}

impl<R: BufRead> IngestReader<R> {
    pub fn new(reader: R, schema: &FeatureSchema, bad_row_fraction: f64) -> Self {
        Self {
            reader,
            schema: schema.clone(),
            bad_row_fraction,
            skipped: 0,
            seen: 0,
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for IngestReader<R> {
    type Item = Result<RawInstance>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Io(e)));
                }
            }
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() && self.seen > 0 {
                // Tolerate a trailing newline.
                continue;
            }
            self.seen += 1;
            match parse_row(trimmed, &self.schema) {
                Ok(row) => return Some(Ok(row)),
                Err(reason) => {
                    self.skipped += 1;
                    let budget = (self.seen as f64 * self.bad_row_fraction).max(1.0);
                    if (self.skipped as f64) > budget {
                        self.failed = true;
                        return Some(Err(Error::Ingest(format!(
                            "row {}: {reason} ({} of {} rows malformed, budget {:.0})",
                            self.seen, self.skipped, self.seen, budget
                        ))));
                    }
                }
            }
        }
    }
}

/// Reads a whole TSV file, skipping malformed rows within the budget.
pub fn read_tsv(path: &Path, schema: &FeatureSchema) -> Result<IngestResult> {
    let file = File::open(path)
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = IngestReader::new(BufReader::new(file), schema, DEFAULT_BAD_ROW_FRACTION);
    let mut rows = Vec::new();
    for row in &mut reader {
        rows.push(row?);
    }
    Ok(IngestResult {
        rows,
        skipped: reader.skipped,
    })
}

pub fn write_tsv(path: &Path, rows: &[RawInstance]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        writeln!(out, "{}", serialize_instance(row))?;
    }
    Ok(())
}

/// Synthetic dataset description. Labels are drawn as
/// `Bernoulli(sigmoid(linear + pairwise + noise * N(0,1)))` where the
/// pairwise term is a sign-agreement (XOR-like) product of latent +-1
/// traits attached to the categorical tokens of each planted pair. A
/// purely linear model cannot see the planted signal; a pairwise
/// interaction model can.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub num_fields: usize,
    pub cat_fields: usize,
    pub vocab_size: usize,
    /// Planted pairs as categorical field ordinals (0-based).
    pub pairs: Vec<(usize, usize)>,
    pub pair_weight: f64,
    /// Scale of the per-token / per-field linear terms (0 disables them).
    pub linear_scale: f64,
    /// Standard deviation of the logit noise.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::Config("rows must be positive".to_string()));
        }
        if self.cat_fields + self.num_fields < 2 {
            return Err(Error::Config("need at least 2 fields".to_string()));
        }
        if self.cat_fields > 0 && self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".to_string()));
        }
        for &(a, b) in &self.pairs {
            if a == b || a >= self.cat_fields || b >= self.cat_fields {
                return Err(Error::Config(format!(
                    "planted pair ({a}, {b}) is not a pair of distinct categorical fields"
                )));
            }
        }
        Ok(())
    }

    /// Column layout of the emitted file.
    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::with_layout(self.num_fields, self.cat_fields)
    }
}

/// The generative parameters behind a synthetic file; scoring a row with
/// them gives the true `P(y=1 | x)` up to the noise term, which is the
/// best possible ranker for the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleModel {
    pub spec: SyntheticSpec,
    /// `+-1` trait per categorical field per token.
    pub traits: Vec<Vec<i8>>,
    /// Linear weight per categorical field per token.
    pub cat_linear: Vec<Vec<f64>>,
    /// Linear weight per numerical field (applied to `2x - 1`).
    pub num_linear: Vec<f64>,
}

impl OracleModel {
    fn token_index(token: &str) -> Option<usize> {
        token.strip_prefix('t').and_then(|s| s.parse().ok())
    }

    /// Noise-free logit of a raw row.
    pub fn signal(&self, inst: &RawInstance) -> Result<f64> {
        let spec = &self.spec;
        if inst.values.len() != spec.num_fields + spec.cat_fields {
            return Err(Error::Schema(format!(
                "row has {} fields, spec has {}",
                inst.values.len(),
                spec.num_fields + spec.cat_fields
            )));
        }
        let mut logit = 0.0;
        let mut token_of = vec![None; spec.cat_fields];
        for i in 0..spec.num_fields {
            if let Some(text) = &inst.values[i] {
                let x: f64 = text
                    .parse()
                    .map_err(|_| Error::Input(format!("bad numeric value {text:?}")))?;
                logit += self.num_linear[i] * (2.0 * x - 1.0) * spec.linear_scale;
            }
        }
        for c in 0..spec.cat_fields {
            if let Some(token) = &inst.values[spec.num_fields + c] {
                let Some(k) = Self::token_index(token) else {
                    continue;
                };
                if k < spec.vocab_size {
                    token_of[c] = Some(k);
                    logit += self.cat_linear[c][k] * spec.linear_scale;
                }
            }
        }
        for &(a, b) in &spec.pairs {
            if let (Some(ka), Some(kb)) = (token_of[a], token_of[b]) {
                logit +=
                    spec.pair_weight * self.traits[a][ka] as f64 * self.traits[b][kb] as f64;
            }
        }
        Ok(logit)
    }

    /// `sigmoid(signal)`: the Bayes-optimal score for ranking.
    pub fn score(&self, inst: &RawInstance) -> Result<f64> {
        Ok(sigmoid(self.signal(inst)?))
    }
}

/// Generates the rows and the generative model, deterministically under the
/// spec's seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<RawInstance>, OracleModel)> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    // Traits are balanced per field (half +1, half -1, shuffled) so a token
    // carries no marginal label signal on its own; only pairs do.
    let traits: Vec<Vec<i8>> = (0..spec.cat_fields)
        .map(|_| {
            let mut t: Vec<i8> = (0..spec.vocab_size)
                .map(|k| if k % 2 == 0 { 1 } else { -1 })
                .collect();
            rng::shuffle(&mut rng, &mut t);
            t
        })
        .collect();
    let cat_linear: Vec<Vec<f64>> = (0..spec.cat_fields)
        .map(|_| {
            (0..spec.vocab_size)
                .map(|_| rng::uniform_in(&mut rng, -1.0, 1.0))
                .collect()
        })
        .collect();
    let num_linear: Vec<f64> = (0..spec.num_fields)
        .map(|_| rng::uniform_in(&mut rng, -1.0, 1.0))
        .collect();
    let oracle = OracleModel {
        spec: spec.clone(),
        traits,
        cat_linear,
        num_linear,
    };

    let mut rows = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let mut values = Vec::with_capacity(spec.num_fields + spec.cat_fields);
        for _ in 0..spec.num_fields {
            values.push(Some(format!("{:.6}", rng::next_uniform(&mut rng))));
        }
        for _ in 0..spec.cat_fields {
            values.push(Some(format!("t{}", rng::below(&mut rng, spec.vocab_size))));
        }
        let draft = RawInstance::new(0, values);
        let logit = oracle.signal(&draft)? + spec.noise * rng::standard_normal(&mut rng);
        let label = if rng::next_uniform(&mut rng) < sigmoid(logit) {
            1
        } else {
            0
        };
        rows.push(RawInstance::new(label, draft.values));
    }
    Ok((rows, oracle))
}

/// Writes `data.tsv` plus the `oracle.json` sidecar into `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(Vec<RawInstance>, OracleModel)> {
    std::fs::create_dir_all(dir)?;
    let (rows, oracle) = generate_synthetic(spec)?;
    write_tsv(&dir.join("data.tsv"), &rows)?;
    let json = serde_json::to_string_pretty(&oracle)
        .map_err(|e| Error::Config(format!("oracle serialization: {e}")))?;
    std::fs::write(dir.join("oracle.json"), json)?;
    Ok((rows, oracle))
}

pub fn read_oracle(path: &Path) -> Result<OracleModel> {
    let json = std::fs::read_to_string(path)?;
    serde_json::from_str(&json).map_err(|e| Error::Config(format!("malformed oracle file: {e}")))
}

/// Run configuration: architecture, hyper-parameters, training protocol and
/// dataset layout, loadable from JSON with CLI flags layered on top.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub arch: String,
    pub embedding_dim: usize,
    pub mlp: Vec<usize>,
    pub compression_size: usize,
    pub groups: usize,
    pub reduction: usize,
    pub bilinear_type: String,
    pub lr: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub min_token_freq: u64,
    pub num_fields: usize,
    pub cat_fields: usize,
    pub data: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: "fibinetpp".to_string(),
            embedding_dim: 10,
            mlp: vec![400, 400, 400],
            compression_size: 50,
            groups: 2,
            reduction: 3,
            bilinear_type: "interaction".to_string(),
            lr: None,
            batch_size: 1024,
            epochs: 10,
            patience: 3,
            seed: 42,
            min_token_freq: 1,
            num_fields: 0,
            cat_fields: 0,
            data: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&json)
            .map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        crate::model::Architecture::parse(&self.arch)?;
        crate::bilinear::BilinearFieldType::parse(&self.bilinear_type)?;
        if self.num_fields + self.cat_fields < 2 {
            return Err(Error::Config(
                "num_fields + cat_fields must be at least 2".to_string(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be positive".to_string(),
            ));
        }
        self.hyper()?.validate_for(crate::model::Architecture::parse(&self.arch)?)
    }

    pub fn hyper(&self) -> Result<crate::model::HyperParams> {
        Ok(crate::model::HyperParams {
            embedding_dim: self.embedding_dim,
            mlp_widths: self.mlp.clone(),
            compression_size: self.compression_size,
            groups: self.groups,
            reduction: self.reduction,
            bilinear_type: crate::bilinear::BilinearFieldType::parse(&self.bilinear_type)?,
        })
    }

    pub fn train_config(&self) -> crate::train::TrainConfig {
        crate::train::TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }
}

/// Split, vocabulary and min-max fitting, and encoding in one step: the
/// statistics come from the training split only and are frozen for the
/// validation and test splits.
pub struct Prepared {
    pub schema: FeatureSchema,
    pub vocab: Vocabulary,
    pub train: Vec<EncodedInstance>,
    pub val: Vec<EncodedInstance>,
    pub test: Vec<EncodedInstance>,
}

pub fn prepare_splits(
    rows: Vec<RawInstance>,
    mut schema: FeatureSchema,
    seed: u64,
    min_token_freq: u64,
) -> Result<Prepared> {
    let (train_raw, val_raw, test_raw) = split_dataset(rows, seed)?;
    let vocab = Vocabulary::fit(&train_raw, &mut schema, min_token_freq)?;
    fit_minmax(&train_raw, &mut schema)?;
    let train = encode_batch(&train_raw, &schema, &vocab)?;
    let val = encode_batch(&val_raw, &schema, &vocab)?;
    let test = encode_batch(&test_raw, &schema, &vocab)?;
    Ok(Prepared {
        schema,
        vocab,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::auc;

    fn two_field_schema() -> FeatureSchema {
        FeatureSchema::with_layout(1, 1)
    }

    #[test]
    fn parses_a_plain_row() {
        let schema = two_field_schema();
        let row = parse_row("1\t0.5\ttokA", &schema).unwrap();
        assert_eq!(row.label, 1);
        assert_eq!(row.values[0].as_deref(), Some("0.5"));
        assert_eq!(row.values[1].as_deref(), Some("tokA"));
    }

    #[test]
    fn empty_numeric_column_is_missing() {
        let schema = two_field_schema();
        let row = parse_row("0\t\ttokA", &schema).unwrap();
        assert_eq!(row.values[0], None);
    }

    #[test]
    fn bad_rows_are_skipped_within_budget() {
        let schema = two_field_schema();
        let mut lines = Vec::new();
        for i in 0..10_000 {
            if i == 5_000 {
                lines.push("2\tbroken".to_string());
            }
            lines.push(format!("{}\t{}\ttok{}", i % 2, i as f64 / 10_000.0, i % 7));
        }
        let text = lines.join("\n");
        let mut reader = IngestReader::new(
            BufReader::new(text.as_bytes()),
            &schema,
            DEFAULT_BAD_ROW_FRACTION,
        );
        let mut ok = 0;
        for row in &mut reader {
            row.unwrap();
            ok += 1;
        }
        assert_eq!(ok, 10_000);
        assert_eq!(reader.skipped, 1);
    }

    #[test]
    fn too_many_bad_rows_abort() {
        let schema = two_field_schema();
        let text = "1\t0.5\ta\nbroken\nbroken\nbroken\n1\t0.5\tb";
        let mut reader = IngestReader::new(
            BufReader::new(text.as_bytes()),
            &schema,
            DEFAULT_BAD_ROW_FRACTION,
        );
        let outcome: Vec<_> = (&mut reader).collect();
        assert!(outcome.iter().any(|r| r.is_err()));
    }

    #[test]
    fn serialize_round_trips() {
        let schema = two_field_schema();
        let line = "1\t0.5\ttokA";
        let row = parse_row(line, &schema).unwrap();
        assert_eq!(serialize_instance(&row), line);
        let missing = "0\t\t";
        let row = parse_row(missing, &schema).unwrap();
        assert_eq!(serialize_instance(&row), missing);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let spec = SyntheticSpec {
            rows: 500,
            num_fields: 1,
            cat_fields: 2,
            vocab_size: 5,
            pairs: vec![(0, 1)],
            pair_weight: 2.0,
            linear_scale: 0.0,
            noise: 0.1,
            seed: 77,
        };
        let (rows_a, _) = generate_synthetic(&spec).unwrap();
        let (rows_b, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(rows_a, rows_b);
    }

    #[test]
    fn pure_noise_oracle_sits_at_half() {
        let spec = SyntheticSpec {
            rows: 50_000,
            num_fields: 1,
            cat_fields: 2,
            vocab_size: 8,
            pairs: vec![],
            pair_weight: 0.0,
            linear_scale: 1.0,
            noise: 1e9,
            seed: 3,
        };
        let (rows, oracle) = generate_synthetic(&spec).unwrap();
        let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
        let scores: Vec<f64> = rows.iter().map(|r| oracle.score(r).unwrap()).collect();
        let a = auc(&labels, &scores).unwrap();
        assert!((a - 0.5).abs() <= 0.02, "auc {a}");
    }

    #[test]
    fn planted_pair_is_invisible_to_linear_models() {
        let spec = SyntheticSpec {
            rows: 6_000,
            num_fields: 0,
            cat_fields: 2,
            vocab_size: 6,
            pairs: vec![(0, 1)],
            pair_weight: 3.0,
            linear_scale: 0.0,
            noise: 0.2,
            seed: 11,
        };
        let (rows, oracle) = generate_synthetic(&spec).unwrap();
        let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
        let oracle_scores: Vec<f64> = rows.iter().map(|r| oracle.score(r).unwrap()).collect();
        let oracle_auc = auc(&labels, &oracle_scores).unwrap();
        assert!(oracle_auc > 0.75, "oracle auc {oracle_auc}");

        // Logistic regression over one-hot tokens, trained in place: the
        // marginal token distributions carry no signal, so it stays near 0.5.
        let dim = 2 * spec.vocab_size;
        let mut w = vec![0.0f64; dim + 1];
        let onehot = |row: &RawInstance| -> Vec<usize> {
            (0..2)
                .map(|c| {
                    let token = row.values[c].as_deref().unwrap();
                    let k: usize = token[1..].parse().unwrap();
                    c * spec.vocab_size + k
                })
                .collect()
        };
        for _ in 0..60 {
            for (row, &y) in rows.iter().zip(&labels) {
                let idx = onehot(row);
                let logit: f64 = w[dim] + idx.iter().map(|&i| w[i]).sum::<f64>();
                let p = sigmoid(logit);
                let g = p - y as f64;
                let lr = 0.05;
                w[dim] -= lr * g;
                for &i in &idx {
                    w[i] -= lr * g;
                }
            }
        }
        let lr_scores: Vec<f64> = rows
            .iter()
            .map(|row| {
                let idx = onehot(row);
                sigmoid(w[dim] + idx.iter().map(|&i| w[i]).sum::<f64>())
            })
            .collect();
        let lr_auc = auc(&labels, &lr_scores).unwrap();
        assert!(
            (lr_auc - 0.5).abs() < 0.06,
            "linear model should be blind to the planted pair, got {lr_auc}"
        );
    }

    #[test]
    fn run_config_round_trips_and_validates() {
        let mut cfg = RunConfig::default();
        cfg.num_fields = 1;
        cfg.cat_fields = 2;
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.arch, cfg.arch);
        assert_eq!(back.mlp, cfg.mlp);

        let mut bad = cfg.clone();
        bad.arch = "mystery".to_string();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prepare_splits_fits_on_train_only() {
        let spec = SyntheticSpec {
            rows: 200,
            num_fields: 1,
            cat_fields: 1,
            vocab_size: 4,
            pairs: vec![],
            pair_weight: 0.0,
            linear_scale: 1.0,
            noise: 0.5,
            seed: 5,
        };
        let (rows, _) = generate_synthetic(&spec).unwrap();
        let prepared = prepare_splits(rows, spec.schema(), 7, 1).unwrap();
        assert_eq!(prepared.train.len(), 160);
        assert_eq!(prepared.val.len(), 20);
        assert_eq!(prepared.test.len(), 20);
        match prepared.schema.fields[0].kind {
            FieldKind::Numerical { min_max } => assert!(min_max.is_some()),
            _ => panic!("first field should be numerical"),
        }
    }
}
