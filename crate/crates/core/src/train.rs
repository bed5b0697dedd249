//! Mini-batch training with Adam, dataset splitting and evaluation
//! metrics (AUC, log loss).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::EncodedInstance;
use crate::error::{Error, Result};
use crate::layer::Parameter;
use crate::mlp::PROB_CLAMP;
use crate::model::ModelGraph;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Binary cross-entropy, predictions clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn logloss(labels: &[u8], predictions: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Metric("log loss of an empty set".to_string()));
    }
    if labels.len() != predictions.len() {
        return Err(Error::Metric(format!(
            "log loss needs matching lengths, got {} labels and {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut acc = 0.0;
    for (&y, &p) in labels.iter().zip(predictions) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        acc += if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-acc / labels.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic, average ranks on
/// ties: the probability a random positive outranks a random negative,
/// counting ties as half.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Metric(format!(
            "auc needs matching lengths, got {} labels and {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("auc over non-finite scores".to_string()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metric(format!(
            "auc needs both classes, got {positives} positives and {negatives} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Average rank of the tie run [i, j], 1-based ranks.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Adam with bias correction. Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar = f64> {
    config: AdamConfig,
    step: u64,
    slots: Vec<MomentSlot<F>>,
}

#[derive(Debug, Clone)]
struct MomentSlot<F: Scalar> {
    name: String,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the full parameter list; the list must keep the same
    /// order across calls.
    pub fn step(&mut self, params: &mut [&mut Parameter<F>]) -> Result<()> {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| MomentSlot {
                    name: p.name.clone(),
                    m: vec![F::zero(); p.len()],
                    v: vec![F::zero(); p.len()],
                })
                .collect();
        }
        if self.slots.len() != params.len() {
            return Err(Error::Training(format!(
                "adam state has {} slots but {} parameters were given",
                self.slots.len(),
                params.len()
            )));
        }
        self.step += 1;
        let b1 = F::from_f64_lossy(self.config.beta1);
        let b2 = F::from_f64_lossy(self.config.beta2);
        let lr = F::from_f64_lossy(self.config.lr);
        let eps = F::from_f64_lossy(self.config.epsilon);
        let c1 = F::one() - F::from_f64_lossy(self.config.beta1.powi(self.step as i32));
        let c2 = F::one() - F::from_f64_lossy(self.config.beta2.powi(self.step as i32));
        for (slot, p) in self.slots.iter_mut().zip(params.iter_mut()) {
            debug_assert_eq!(slot.name, p.name, "parameter order changed under adam");
            let grads = p.grad.data();
            for i in 0..slot.m.len() {
                let g = grads[i];
                if !g.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite gradient in parameter {}",
                        p.name
                    )));
                }
                slot.m[i] = b1 * slot.m[i] + (F::one() - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (F::one() - b2) * g * g;
                let m_hat = slot.m[i] / c1;
                let v_hat = slot.v[i] / c2;
                let delta = lr * m_hat / (v_hat.sqrt() + eps);
                let value = p.value.data_mut();
                value[i] = value[i] - delta;
            }
        }
        Ok(())
    }
}

/// Deterministic 8:1:1 split after a seeded shuffle:
/// `floor(0.8 N) / floor(0.1 N) / remainder`. Requires at least 10 rows.
pub fn split_dataset<T>(mut rows: Vec<T>, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = rows.len();
    if n < 10 {
        return Err(Error::Split(n));
    }
    let mut rng = rng::seeded(seed);
    rng::shuffle(&mut rng, &mut rows);
    let train_n = n * 8 / 10;
    let val_n = n / 10;
    let mut rest = rows.split_off(train_n);
    let test = rest.split_off(val_n);
    Ok((rows, rest, test))
}

/// Metrics over one frozen model state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub logloss: f64,
    pub instances: usize,
}

/// Eval-mode metrics of a graph on encoded rows.
pub fn evaluate<F: Scalar>(
    graph: &mut ModelGraph<F>,
    rows: &[EncodedInstance],
) -> Result<EvalReport> {
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let scores = graph.predict_batch(rows)?;
    Ok(EvalReport {
        auc: auc(&labels, &scores)?,
        logloss: logloss(&labels, &scores)?,
        instances: rows.len(),
    })
}

/// One line of the metrics stream, emitted per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_logloss: f64,
    pub val_auc: f64,
    pub val_logloss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// `None` tries the default grid {1e-4, 1e-3} and keeps the best
    /// validation AUC.
    pub lr: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: None,
            batch_size: 1024,
            epochs: 10,
            patience: 3,
            seed: 42,
        }
    }
}

pub const DEFAULT_LR_GRID: [f64; 2] = [1e-4, 1e-3];

#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Scalar = f64> {
    /// Best-on-validation snapshot.
    pub graph: ModelGraph<F>,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub lr: f64,
    /// True when a non-finite loss aborted the run; the graph is the last
    /// good snapshot.
    pub diverged: bool,
}

/// Trains over shuffled mini-batches, evaluating on the validation split
/// each epoch, retaining the best-on-validation snapshot and stopping early
/// after `patience` epochs without improvement. When several learning rates
/// are in play each starts from an identically initialized graph and the
/// best validation AUC wins.
pub fn train<F: Scalar>(
    graph: &ModelGraph<F>,
    train_rows: &[EncodedInstance],
    val_rows: &[EncodedInstance],
    config: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Training("empty training or validation split".to_string()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Training(
            "batch_size and epochs must be positive".to_string(),
        ));
    }
    let grid: Vec<f64> = match config.lr {
        Some(lr) => vec![lr],
        None => DEFAULT_LR_GRID.to_vec(),
    };
    let mut best: Option<TrainOutcome<F>> = None;
    for &lr in &grid {
        let outcome = train_single(graph.clone(), train_rows, val_rows, config, lr)?;
        let better = match &best {
            None => true,
            Some(b) => outcome.best_val_auc > b.best_val_auc,
        };
        if better {
            best = Some(outcome);
        }
    }
    Ok(best.expect("non-empty grid"))
}

fn train_single<F: Scalar>(
    mut graph: ModelGraph<F>,
    train_rows: &[EncodedInstance],
    val_rows: &[EncodedInstance],
    config: &TrainConfig,
    lr: f64,
) -> Result<TrainOutcome<F>> {
    let mut adam = AdamState::new(AdamConfig::with_lr(lr));
    let mut shuffle_rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..train_rows.len()).collect();

    let mut history = Vec::new();
    let mut best_snapshot = graph.clone();
    let mut best_val_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale_epochs = 0;
    let mut diverged = false;

    'epochs: for epoch in 0..config.epochs {
        let started = Instant::now();
        graph.set_training(true);
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // A trailing single-row batch cannot go through train-mode
            // batch norm; skip it, evaluation covers every row.
            if chunk.len() == 1 && train_rows.len() > 1 {
                continue;
            }
            let batch: Vec<EncodedInstance> =
                chunk.iter().map(|&i| train_rows[i].clone()).collect();
            let out = graph.forward_batch(&batch)?;
            let labels: Vec<u8> = batch.iter().map(|b| b.label).collect();
            let scores: Vec<f64> = out.data().iter().map(|p| p.to_f64_lossy()).collect();
            let batch_loss = logloss(&labels, &scores)?;
            if !batch_loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            loss_sum += batch_loss * batch.len() as f64;
            loss_count += batch.len();

            // d loss / d prob for the mean log loss over the batch.
            let inv_n = 1.0 / batch.len() as f64;
            let mut upstream = Tensor::zeros(batch.len(), 1);
            for (r, (&y, &p)) in labels.iter().zip(&scores).enumerate() {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                let g = if y == 1 { -1.0 / p } else { 1.0 / (1.0 - p) };
                upstream.set(r, 0, F::from_f64_lossy(g * inv_n));
            }
            graph.zero_grads();
            graph.backward_batch(&upstream)?;
            let mut params = graph.parameters();
            match adam.step(&mut params) {
                Ok(()) => {}
                // A non-finite gradient is divergence: stop and fall back to
                // the last good snapshot.
                Err(Error::Training(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        let val = evaluate(&mut graph, val_rows)?;
        let train_logloss = if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            f64::NAN
        };
        history.push(EpochMetrics {
            epoch,
            train_logloss,
            val_auc: val.auc,
            val_logloss: val.logloss,
            wall_ms: started.elapsed().as_millis() as u64,
        });

        if val.auc > best_val_auc {
            best_val_auc = val.auc;
            best_epoch = epoch;
            best_snapshot = graph.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }

    if best_val_auc == f64::NEG_INFINITY {
        // Diverged before the first evaluation; keep the initial state.
        best_val_auc = f64::NAN;
    }
    Ok(TrainOutcome {
        graph: best_snapshot,
        history,
        best_epoch,
        best_val_auc,
        lr,
        diverged,
    })
}

/// Writes metrics as one JSON object per line.
pub fn write_metrics_line<W: std::io::Write + ?Sized>(
    out: &mut W,
    metrics: &EpochMetrics,
) -> Result<()> {
    let line = serde_json::to_string(metrics)
        .map_err(|e| Error::Training(format!("metrics serialization: {e}")))?;
    writeln!(out, "{line}")?;
    Ok(())
}
