//! Feature normalization: per-field layer norm for numerical embeddings,
//! per-field batch norm for categorical embeddings, and the standalone
//! layer norm reused by the attention fuse step.
//!
//! Both norms use biased (population) variance. Defaults: epsilon 1e-5,
//! batch-norm momentum 0.9, gamma 1, beta 0.

use crate::embedding::{FeatureSchema, FieldKind};
use crate::error::{Error, Result};
use crate::layer::{Layer, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const NORM_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Learned affine plus epsilon for a layer norm over `d` slots.
#[derive(Debug, Clone)]
pub struct LayerNormState<F: Scalar = f64> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub epsilon: f64,
}

impl<F: Scalar> LayerNormState<F> {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(1, d, F::one())),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(1, d)),
            epsilon: NORM_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.value.cols()
    }
}

#[derive(Debug, Clone)]
struct RowNormCache<F: Scalar> {
    xhat: Tensor<F>,
    inv_std: Vec<F>,
}

fn ln_forward<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    epsilon: f64,
) -> (Tensor<F>, RowNormCache<F>) {
    let (rows, d) = x.shape();
    let eps = F::from_f64_lossy(epsilon);
    let dn = F::from_f64_lossy(d as f64);
    let mut out = Tensor::zeros(rows, d);
    let mut xhat = Tensor::zeros(rows, d);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row_slice(r);
        let mut mean = F::zero();
        for &v in row {
            mean += v;
        }
        mean = mean / dn;
        let mut var = F::zero();
        for &v in row {
            let dlt = v - mean;
            var += dlt * dlt;
        }
        var = var / dn;
        let istd = F::one() / (var + eps).sqrt();
        inv_std.push(istd);
        for c in 0..d {
            let h = (row[c] - mean) * istd;
            xhat.set(r, c, h);
            out.set(r, c, gamma.at(0, c) * h + beta.at(0, c));
        }
    }
    (out, RowNormCache { xhat, inv_std })
}

fn ln_backward<F: Scalar>(
    cache: &RowNormCache<F>,
    upstream: &Tensor<F>,
    gamma: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let (rows, d) = upstream.shape();
    let dn = F::from_f64_lossy(d as f64);
    let mut dx = Tensor::zeros(rows, d);
    let mut dgamma = Tensor::zeros(1, d);
    let mut dbeta = Tensor::zeros(1, d);
    for r in 0..rows {
        let istd = cache.inv_std[r];
        let mut mean_g = F::zero();
        let mut mean_gx = F::zero();
        for c in 0..d {
            let gy = upstream.at(r, c);
            let h = cache.xhat.at(r, c);
            dgamma.set(0, c, dgamma.at(0, c) + gy * h);
            dbeta.set(0, c, dbeta.at(0, c) + gy);
            let g = gy * gamma.at(0, c);
            mean_g += g;
            mean_gx += g * h;
        }
        mean_g = mean_g / dn;
        mean_gx = mean_gx / dn;
        for c in 0..d {
            let g = upstream.at(r, c) * gamma.at(0, c);
            let h = cache.xhat.at(r, c);
            dx.set(r, c, istd * (g - mean_g - h * mean_gx));
        }
    }
    (dx, dgamma, dbeta)
}

/// Row-wise layer normalization of `v` (each row normalized over its
/// columns), forward only.
pub fn layer_norm<F: Scalar>(v: &Tensor<F>, state: &LayerNormState<F>) -> Result<Tensor<F>> {
    if v.cols() != state.width() {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            left: format!("{}x{}", v.rows(), v.cols()),
            right: format!("state width {}", state.width()),
        });
    }
    Ok(ln_forward(v, &state.gamma.value, &state.beta.value, state.epsilon).0)
}

/// Layer norm as a network block.
#[derive(Debug, Clone)]
pub struct LayerNorm<F: Scalar = f64> {
    pub state: LayerNormState<F>,
    cache: Option<RowNormCache<F>>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            state: LayerNormState::new(name, d),
            cache: None,
        }
    }
}

impl<F: Scalar> Layer<F> for LayerNorm<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        if input.cols() != self.state.width() {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: format!("{}x{}", input.rows(), input.cols()),
                right: format!("state width {}", self.state.width()),
            });
        }
        let (out, cache) = ln_forward(
            input,
            &self.state.gamma.value,
            &self.state.beta.value,
            self.state.epsilon,
        );
        self.cache = Some(cache);
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let (dx, dgamma, dbeta) = ln_backward(cache, upstream, &self.state.gamma.value);
        self.state.gamma.grad.add_assign(&dgamma)?;
        self.state.beta.grad.add_assign(&dbeta)?;
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.state.gamma, &mut self.state.beta]
    }
}

/// Learned affine, running statistics and hyper-parameters of a batch norm
/// over `d` columns.
#[derive(Debug, Clone)]
pub struct BatchNormState<F: Scalar = f64> {
    pub name: String,
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub momentum: f64,
    pub epsilon: f64,
    /// Set once the first training batch has passed through.
    pub fitted: bool,
}

impl<F: Scalar> BatchNormState<F> {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(1, d, F::one())),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(1, d)),
            running_mean: Tensor::zeros(1, d),
            running_var: Tensor::full(1, d, F::one()),
            momentum: BN_MOMENTUM,
            epsilon: NORM_EPSILON,
            fitted: false,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn running_tensors_mut(&mut self) -> (&mut Tensor<F>, &mut Tensor<F>) {
        (&mut self.running_mean, &mut self.running_var)
    }
}

fn bn_forward<F: Scalar>(
    x: &Tensor<F>,
    state: &mut BatchNormState<F>,
    mode: NormMode,
) -> Result<(Tensor<F>, RowNormCache<F>)> {
    let (rows, d) = x.shape();
    if d != state.width() {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            left: format!("{rows}x{d}"),
            right: format!("state width {}", state.width()),
        });
    }
    let eps = F::from_f64_lossy(state.epsilon);
    let mut out = Tensor::zeros(rows, d);
    let mut xhat = Tensor::zeros(rows, d);
    // `inv_std` is per column here; RowNormCache is reused with that reading.
    let mut inv_std = Vec::with_capacity(d);
    match mode {
        NormMode::Train => {
            if rows < 2 {
                return Err(Error::BatchSize(rows));
            }
            let bn = F::from_f64_lossy(rows as f64);
            let mom = F::from_f64_lossy(state.momentum);
            let one_minus = F::one() - mom;
            for c in 0..d {
                let mut mean = F::zero();
                for r in 0..rows {
                    mean += x.at(r, c);
                }
                mean = mean / bn;
                let mut var = F::zero();
                for r in 0..rows {
                    let dlt = x.at(r, c) - mean;
                    var += dlt * dlt;
                }
                var = var / bn;
                let istd = F::one() / (var + eps).sqrt();
                inv_std.push(istd);
                for r in 0..rows {
                    let h = (x.at(r, c) - mean) * istd;
                    xhat.set(r, c, h);
                    out.set(r, c, state.gamma.value.at(0, c) * h + state.beta.value.at(0, c));
                }
                state
                    .running_mean
                    .set(0, c, mom * state.running_mean.at(0, c) + one_minus * mean);
                state
                    .running_var
                    .set(0, c, mom * state.running_var.at(0, c) + one_minus * var);
            }
            state.fitted = true;
        }
        NormMode::Eval => {
            if !state.fitted {
                return Err(Error::State(
                    "batch norm running statistics were never fitted; train first".to_string(),
                ));
            }
            for c in 0..d {
                let istd = F::one() / (state.running_var.at(0, c) + eps).sqrt();
                inv_std.push(istd);
                let mean = state.running_mean.at(0, c);
                for r in 0..rows {
                    let h = (x.at(r, c) - mean) * istd;
                    xhat.set(r, c, h);
                    out.set(r, c, state.gamma.value.at(0, c) * h + state.beta.value.at(0, c));
                }
            }
        }
    }
    Ok((out, RowNormCache { xhat, inv_std }))
}

/// Batch normalization over the rows of `v`, per column. Train mode
/// normalizes with the batch statistics (biased variance) and updates the
/// running ones; eval mode uses the running statistics.
pub fn batch_norm<F: Scalar>(
    v: &Tensor<F>,
    state: &mut BatchNormState<F>,
    mode: NormMode,
) -> Result<Tensor<F>> {
    bn_forward(v, state, mode).map(|(out, _)| out)
}

/// Batch norm as a network block; the mode follows `set_training`.
#[derive(Debug, Clone)]
pub struct BatchNorm<F: Scalar = f64> {
    pub state: BatchNormState<F>,
    training: bool,
    cache: Option<(RowNormCache<F>, NormMode)>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            state: BatchNormState::new(name, d),
            training: true,
            cache: None,
        }
    }
}

impl<F: Scalar> Layer<F> for BatchNorm<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let mode = if self.training {
            NormMode::Train
        } else {
            NormMode::Eval
        };
        let (out, cache) = bn_forward(input, &mut self.state, mode)?;
        self.cache = Some((cache, mode));
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let (cache, mode) = self.cache.as_ref().expect("forward before backward");
        let (rows, d) = upstream.shape();
        let mut dx = Tensor::zeros(rows, d);
        match mode {
            NormMode::Train => {
                let bn = F::from_f64_lossy(rows as f64);
                for c in 0..d {
                    let istd = cache.inv_std[c];
                    let gamma = self.state.gamma.value.at(0, c);
                    let mut sum_g = F::zero();
                    let mut sum_gx = F::zero();
                    let mut dgamma = self.state.gamma.grad.at(0, c);
                    let mut dbeta = self.state.beta.grad.at(0, c);
                    for r in 0..rows {
                        let gy = upstream.at(r, c);
                        let h = cache.xhat.at(r, c);
                        dgamma += gy * h;
                        dbeta += gy;
                        let g = gy * gamma;
                        sum_g += g;
                        sum_gx += g * h;
                    }
                    self.state.gamma.grad.set(0, c, dgamma);
                    self.state.beta.grad.set(0, c, dbeta);
                    let mean_g = sum_g / bn;
                    let mean_gx = sum_gx / bn;
                    for r in 0..rows {
                        let g = upstream.at(r, c) * gamma;
                        let h = cache.xhat.at(r, c);
                        dx.set(r, c, istd * (g - mean_g - h * mean_gx));
                    }
                }
            }
            NormMode::Eval => {
                // Running stats are constants here, so the map is affine.
                for c in 0..d {
                    let istd = cache.inv_std[c];
                    let gamma = self.state.gamma.value.at(0, c);
                    let mut dgamma = self.state.gamma.grad.at(0, c);
                    let mut dbeta = self.state.beta.grad.at(0, c);
                    for r in 0..rows {
                        let gy = upstream.at(r, c);
                        dgamma += gy * cache.xhat.at(r, c);
                        dbeta += gy;
                        dx.set(r, c, gy * gamma * istd);
                    }
                    self.state.gamma.grad.set(0, c, dgamma);
                    self.state.beta.grad.set(0, c, dbeta);
                }
            }
        }
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.state.gamma, &mut self.state.beta]
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }
}

#[derive(Debug, Clone)]
enum FieldNorm<F: Scalar> {
    Categorical(BatchNorm<F>),
    Numerical(LayerNorm<F>),
}

/// Per-field normalization of a `batch x (f*d)` embedding block: batch norm
/// for categorical fields, layer norm for numerical fields, concatenated
/// back in field order.
#[derive(Debug, Clone)]
pub struct FeatureNorm<F: Scalar = f64> {
    slots: Vec<FieldNorm<F>>,
    d: usize,
}

impl<F: Scalar> FeatureNorm<F> {
    pub fn new(name: &str, schema: &FeatureSchema, d: usize) -> Self {
        let slots = schema
            .fields
            .iter()
            .enumerate()
            .map(|(i, field)| match field.kind {
                FieldKind::Categorical { .. } => {
                    FieldNorm::Categorical(BatchNorm::new(&format!("{name}.f{i}"), d))
                }
                FieldKind::Numerical { .. } => {
                    FieldNorm::Numerical(LayerNorm::new(&format!("{name}.f{i}"), d))
                }
            })
            .collect();
        Self { slots, d }
    }

    pub fn field_count(&self) -> usize {
        self.slots.len()
    }

    pub fn affine_param_count(&self) -> usize {
        2 * self.d * self.slots.len()
    }

    pub fn batch_norm_states(&self) -> Vec<&BatchNormState<F>> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                FieldNorm::Categorical(bn) => Some(&bn.state),
                FieldNorm::Numerical(_) => None,
            })
            .collect()
    }

    pub fn batch_norm_states_mut(&mut self) -> Vec<&mut BatchNormState<F>> {
        self.slots
            .iter_mut()
            .filter_map(|s| match s {
                FieldNorm::Categorical(bn) => Some(&mut bn.state),
                FieldNorm::Numerical(_) => None,
            })
            .collect()
    }

    /// Parameters plus batch-norm running buffers, by name, in slot order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out: Vec<(String, &mut Tensor<F>)> = Vec::new();
        for slot in &mut self.slots {
            match slot {
                FieldNorm::Categorical(bn) => {
                    let st = &mut bn.state;
                    out.push((st.gamma.name.clone(), &mut st.gamma.value));
                    out.push((st.beta.name.clone(), &mut st.beta.value));
                    out.push((format!("{}.running_mean", st.name), &mut st.running_mean));
                    out.push((format!("{}.running_var", st.name), &mut st.running_var));
                }
                FieldNorm::Numerical(ln) => {
                    let st = &mut ln.state;
                    out.push((st.gamma.name.clone(), &mut st.gamma.value));
                    out.push((st.beta.name.clone(), &mut st.beta.value));
                }
            }
        }
        out
    }
}

impl<F: Scalar> Layer<F> for FeatureNorm<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let expected = self.slots.len() * self.d;
        if input.cols() != expected {
            return Err(Error::ShapeMismatch {
                op: "feature_normalize",
                left: format!("{}x{}", input.rows(), input.cols()),
                right: format!("{} fields x {} dims", self.slots.len(), self.d),
            });
        }
        let mut out = Tensor::zeros(input.rows(), expected);
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let block = input.col_block(i * self.d, self.d);
            let normalized = match slot {
                FieldNorm::Categorical(bn) => bn.forward(&block)?,
                FieldNorm::Numerical(ln) => ln.forward(&block)?,
            };
            for r in 0..out.rows() {
                out.row_slice_mut(r)[i * self.d..(i + 1) * self.d]
                    .copy_from_slice(normalized.row_slice(r));
            }
        }
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let mut dx = Tensor::zeros(upstream.rows(), upstream.cols());
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let block = upstream.col_block(i * self.d, self.d);
            let d_block = match slot {
                FieldNorm::Categorical(bn) => bn.backward(&block)?,
                FieldNorm::Numerical(ln) => ln.backward(&block)?,
            };
            for r in 0..dx.rows() {
                dx.row_slice_mut(r)[i * self.d..(i + 1) * self.d]
                    .copy_from_slice(d_block.row_slice(r));
            }
        }
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = Vec::new();
        for slot in &mut self.slots {
            match slot {
                FieldNorm::Categorical(bn) => out.extend(bn.parameters()),
                FieldNorm::Numerical(ln) => out.extend(ln.parameters()),
            }
        }
        out
    }

    fn set_training(&mut self, training: bool) {
        for slot in &mut self.slots {
            if let FieldNorm::Categorical(bn) = slot {
                bn.set_training(training);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FieldSpec;
    use crate::layer::{grad_check, jitter_parameters, DiagonalReadout};

    fn ln_state(d: usize, epsilon: f64) -> LayerNormState {
        let mut s = LayerNormState::new("ln", d);
        s.epsilon = epsilon;
        s
    }

    #[test]
    fn layer_norm_hand_case() {
        // mean 2, population variance 1 -> [-1, 1] as epsilon goes to zero
        let state = ln_state(2, 1e-12);
        let out = layer_norm(&Tensor::row(&[1.0, 3.0]), &state).unwrap();
        assert!((out.at(0, 0) + 1.0).abs() < 1e-9);
        assert!((out.at(0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_constant_input_collapses_to_beta() {
        let state = ln_state(3, NORM_EPSILON);
        let out = layer_norm(&Tensor::row(&[5.0, 5.0, 5.0]), &state).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_zero_gamma_broadcasts_beta() {
        let mut state = ln_state(2, NORM_EPSILON);
        state.gamma.value.fill(0.0);
        state.beta.value = Tensor::row(&[7.0, -3.0]);
        let out = layer_norm(&Tensor::row(&[1.0, 9.0]), &state).unwrap();
        assert_eq!(out.data(), &[7.0, -3.0]);
    }

    #[test]
    fn layer_norm_shift_invariance() {
        let state = ln_state(4, NORM_EPSILON);
        let a = layer_norm(&Tensor::row(&[1.0, 2.0, -0.5, 4.0]), &state).unwrap();
        let b = layer_norm(&Tensor::row(&[11.0, 12.0, 9.5, 14.0]), &state).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_norm_hand_case() {
        let mut state: BatchNormState = BatchNormState::new("bn", 1);
        let v = Tensor::new(2, 1, vec![1.0, 3.0]);
        let out = batch_norm(&v, &mut state, NormMode::Train).unwrap();
        assert!((out.at(0, 0) + 1.0).abs() < 1e-4);
        assert!((out.at(1, 0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batch_norm_train_rejects_singleton_batch() {
        let mut state = BatchNormState::new("bn", 2);
        let v = Tensor::new(1, 2, vec![1.0, 2.0]);
        assert!(matches!(
            batch_norm(&v, &mut state, NormMode::Train),
            Err(Error::BatchSize(1))
        ));
    }

    #[test]
    fn batch_norm_eval_with_unit_stats_is_identity() {
        let mut state: BatchNormState = BatchNormState::new("bn", 2);
        state.fitted = true; // running mean 0, var 1
        let v = Tensor::new(2, 2, vec![0.5, -1.0, 2.0, 0.25]);
        let out = batch_norm(&v, &mut state, NormMode::Eval).unwrap();
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_eval_unfitted_errors() {
        let mut state = BatchNormState::new("bn", 2);
        let v = Tensor::new(2, 2, vec![0.5, -1.0, 2.0, 0.25]);
        assert!(matches!(
            batch_norm(&v, &mut state, NormMode::Eval),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn momentum_one_freezes_running_stats() {
        let mut state = BatchNormState::new("bn", 1);
        state.momentum = 1.0;
        let before = (state.running_mean.clone(), state.running_var.clone());
        let v = Tensor::new(2, 1, vec![10.0, 30.0]);
        batch_norm(&v, &mut state, NormMode::Train).unwrap();
        assert_eq!(state.running_mean, before.0);
        assert_eq!(state.running_var, before.1);
    }

    #[test]
    fn layer_norm_gradcheck() {
        let mut ln: LayerNorm = LayerNorm::new("ln", 4);
        jitter_parameters(ln.parameters(), &mut crate::rng::seeded(31), 0.4);
        let x = Tensor::new(2, 4, vec![0.9, -1.2, 0.7, 1.4, -0.8, 1.1, 0.6, -1.3]);
        let err = grad_check(&mut ln, &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "layer norm gradcheck error: {err}");
    }

    #[test]
    fn batch_norm_gradcheck_train_mode() {
        let mut bn = DiagonalReadout::new(BatchNorm::<f64>::new("bn", 3));
        jitter_parameters(bn.parameters(), &mut crate::rng::seeded(32), 0.4);
        let x = Tensor::new(4, 3, vec![
            0.9, -1.2, 0.7, 1.4, -0.8, 1.1, 0.6, -1.3, 0.2, -0.4, 0.8, -1.6,
        ]);
        let err = grad_check(&mut bn, &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "batch norm gradcheck error: {err}");
    }

    fn mixed_schema() -> FeatureSchema {
        FeatureSchema {
            fields: vec![
                FieldSpec::categorical("c0", 4),
                FieldSpec::numerical_with_range("n0", 0.0, 1.0),
            ],
        }
    }

    #[test]
    fn feature_normalize_dispatches_per_field_kind() {
        let schema = mixed_schema();
        let d = 2;
        let mut fnorm: FeatureNorm = FeatureNorm::new("fn", &schema, d);
        let input = Tensor::new(2, 4, vec![1.0, -2.0, 0.5, 1.5, 3.0, 4.0, -0.5, 2.5]);

        // Composition oracle: run the two norms separately on the blocks.
        let mut bn: BatchNorm = BatchNorm::new("bn", d);
        let mut ln: LayerNorm = LayerNorm::new("ln", d);
        let cat = bn.forward(&input.col_block(0, d)).unwrap();
        let num = ln.forward(&input.col_block(d, d)).unwrap();
        let expected = Tensor::hstack(&[&cat, &num]).unwrap();

        let got = fnorm.forward(&input).unwrap();
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_normalize_gradcheck_mixed() {
        let schema = mixed_schema();
        let mut fnorm = DiagonalReadout::new(FeatureNorm::<f64>::new("fn", &schema, 2));
        jitter_parameters(fnorm.parameters(), &mut crate::rng::seeded(33), 0.4);
        let x = Tensor::new(3, 4, vec![
            0.9, -1.2, 0.7, 1.4, -0.8, 1.1, 0.6, -1.3, 0.2, -0.4, 0.8, -1.6,
        ]);
        let err = grad_check(&mut fnorm, &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "feature norm gradcheck error: {err}");
    }
}
