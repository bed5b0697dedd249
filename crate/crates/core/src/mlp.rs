//! Fully connected layers: the hidden MLP stack and the sigmoid
//! prediction head.

use rand::RngCore;

use crate::error::Result;
use crate::layer::{Layer, Parameter};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{sigmoid, Tensor};

/// Probabilities are clamped this far away from 0 and 1 inside the log loss
/// and the matching gradient so saturated predictions cannot produce
/// infinities or a dead gradient.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// `y = act(x W^T + b)` with `W` stored as `out x in`.
#[derive(Debug, Clone)]
pub struct Dense<F: Scalar = f64> {
    weight: Parameter<F>,
    bias: Parameter<F>,
    activation: Activation,
    cache_input: Option<Tensor<F>>,
    cache_pre: Option<Tensor<F>>,
}

impl<F: Scalar> Dense<F> {
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl RngCore,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                rng::uniform_tensor(rng, out_dim, in_dim, bound),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(1, out_dim)),
            activation,
            cache_input: None,
            cache_pre: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn weight_count(&self) -> usize {
        self.weight.value.len()
    }

    pub fn bias_count(&self) -> usize {
        self.bias.value.len()
    }
}

impl<F: Scalar> Layer<F> for Dense<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let pre = {
            let mut pre = input.matmul(&self.weight.value.transpose())?;
            for r in 0..pre.rows() {
                for c in 0..pre.cols() {
                    let v = pre.at(r, c) + self.bias.value.at(0, c);
                    pre.set(r, c, v);
                }
            }
            pre
        };
        let out = match self.activation {
            Activation::Relu => pre.relu(),
            Activation::Identity => pre.clone(),
        };
        self.cache_input = Some(input.clone());
        self.cache_pre = Some(pre);
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self.cache_input.as_ref().expect("forward before backward");
        let pre = self.cache_pre.as_ref().expect("forward before backward");
        // ReLU subgradient at exactly zero is taken as zero.
        let d_pre = match self.activation {
            Activation::Relu => {
                let mask = pre.map(|v| if v > F::zero() { F::one() } else { F::zero() });
                upstream.hadamard(&mask)?
            }
            Activation::Identity => upstream.clone(),
        };
        self.weight.grad.add_assign(&d_pre.transpose().matmul(input)?)?;
        for r in 0..d_pre.rows() {
            for c in 0..d_pre.cols() {
                let v = self.bias.grad.at(0, c) + d_pre.at(r, c);
                self.bias.grad.set(0, c, v);
            }
        }
        d_pre.matmul(&self.weight.value)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Stack of ReLU hidden layers.
#[derive(Debug, Clone)]
pub struct Mlp<F: Scalar = f64> {
    layers: Vec<Dense<F>>,
}

impl<F: Scalar> Mlp<F> {
    pub fn new(name: &str, in_dim: usize, widths: &[usize], rng: &mut impl RngCore) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut dim = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(
                &format!("{name}.{i}"),
                dim,
                w,
                Activation::Relu,
                rng,
            ));
            dim = w;
        }
        Self { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    /// Weight entries of the first hidden layer (no bias), the quantity
    /// the model-size accounting is built around.
    pub fn first_layer_weight_count(&self) -> usize {
        self.layers.first().map(|l| l.weight_count()).unwrap_or(0)
    }

    /// Everything else in the stack: deeper weight matrices plus all biases.
    pub fn remaining_param_count(&self) -> usize {
        let total: usize = self
            .layers
            .iter()
            .map(|l| l.weight_count() + l.bias_count())
            .sum();
        total - self.first_layer_weight_count()
    }
}

impl<F: Scalar> Layer<F> for Mlp<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.layers.iter_mut().flat_map(|l| l.parameters()).collect()
    }
}

/// Final layer: `yhat = sigmoid(x w^T + w0 [+ extra logit])`.
#[derive(Debug, Clone)]
pub struct PredictionHead<F: Scalar = f64> {
    weight: Parameter<F>,
    bias: Parameter<F>,
    cache_input: Option<Tensor<F>>,
    cache_prob: Option<Tensor<F>>,
}

impl<F: Scalar> PredictionHead<F> {
    pub fn new(name: &str, in_dim: usize, rng: &mut impl RngCore) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                rng::uniform_tensor(rng, 1, in_dim, bound),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(1, 1)),
            cache_input: None,
            cache_prob: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.value.len() + 1
    }

    pub fn bias_mut(&mut self) -> &mut Parameter<F> {
        &mut self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Parameter<F> {
        &mut self.weight
    }

    /// Forward pass with an optional extra `batch x 1` logit contribution
    /// (the linear part of architectures that have one).
    pub fn forward_with_extra(
        &mut self,
        input: &Tensor<F>,
        extra_logit: Option<&Tensor<F>>,
    ) -> Result<Tensor<F>> {
        let mut logit = input.matmul(&self.weight.value.transpose())?;
        for r in 0..logit.rows() {
            let mut v = logit.at(r, 0) + self.bias.value.at(0, 0);
            if let Some(extra) = extra_logit {
                v += extra.at(r, 0);
            }
            logit.set(r, 0, v);
        }
        let prob = logit.map(sigmoid);
        self.cache_input = Some(input.clone());
        self.cache_prob = Some(prob.clone());
        Ok(prob)
    }

    /// Backward returning `(d_input, d_extra_logit)`.
    ///
    /// The sigmoid derivative uses the clamped probability so a saturated
    /// output still propagates a finite, nonzero gradient.
    pub fn backward_with_extra(&mut self, upstream: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let input = self.cache_input.as_ref().expect("forward before backward");
        let prob = self.cache_prob.as_ref().expect("forward before backward");
        let lo = F::from_f64_lossy(PROB_CLAMP);
        let hi = F::one() - lo;
        let mut d_logit = Tensor::zeros(prob.rows(), 1);
        for r in 0..prob.rows() {
            let p = prob.at(r, 0).max(lo).min(hi);
            d_logit.set(r, 0, upstream.at(r, 0) * p * (F::one() - p));
        }
        self.weight.grad.add_assign(&d_logit.transpose().matmul(input)?)?;
        let mut b = self.bias.grad.at(0, 0);
        for r in 0..d_logit.rows() {
            b += d_logit.at(r, 0);
        }
        self.bias.grad.set(0, 0, b);
        let d_input = d_logit.matmul(&self.weight.value)?;
        Ok((d_input, d_logit))
    }
}

impl<F: Scalar> Layer<F> for PredictionHead<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        self.forward_with_extra(input, None)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let (d_input, _) = self.backward_with_extra(upstream)?;
        Ok(d_input)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::grad_check;
    use crate::rng::seeded;

    #[test]
    fn dense_shapes() {
        let mut rng = seeded(0);
        let mut layer: Dense = Dense::new("d", 3, 2, Activation::Relu, &mut rng);
        let x = Tensor::new(4, 3, vec![0.1; 12]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), (4, 2));
    }

    #[test]
    fn dense_identity_gradcheck_is_tight() {
        let mut rng = seeded(1);
        let mut layer: Dense = Dense::new("d", 3, 2, Activation::Identity, &mut rng);
        let x = Tensor::new(2, 3, vec![0.4, -0.2, 0.9, 1.1, 0.3, -0.5]);
        let err = grad_check(&mut layer, &x, 1e-5).unwrap();
        assert!(err <= 1e-9, "pure linear layer should be near exact: {err}");
    }

    #[test]
    fn dense_relu_gradcheck_away_from_kinks() {
        let mut rng = seeded(2);
        let mut layer: Dense = Dense::new("d", 4, 3, Activation::Relu, &mut rng);
        // Inputs of order 1 keep pre-activations far from zero relative to epsilon.
        let x = Tensor::new(2, 4, vec![0.9, -1.2, 0.7, 1.4, -0.8, 1.1, 0.6, -1.3]);
        let err = grad_check(&mut layer, &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "relu dense gradcheck error too large: {err}");
    }

    #[test]
    fn mlp_gradcheck() {
        let mut rng = seeded(3);
        let mut mlp: Mlp = Mlp::new("mlp", 4, &[5, 3], &mut rng);
        let x = Tensor::new(2, 4, vec![0.9, -1.2, 0.7, 1.4, -0.8, 1.1, 0.6, -1.3]);
        let err = grad_check(&mut mlp, &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "mlp gradcheck error too large: {err}");
    }

    #[test]
    fn head_outputs_probability_and_checks() {
        let mut rng = seeded(4);
        let mut head: PredictionHead = PredictionHead::new("head", 3, &mut rng);
        let x = Tensor::new(2, 3, vec![0.5, -0.4, 0.8, -0.2, 0.3, 0.1]);
        let y = head.forward(&x).unwrap();
        assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        let err = grad_check(&mut head, &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "prediction head gradcheck error: {err}");
    }

    #[test]
    fn zero_hidden_layer_gives_half() {
        let mut rng = seeded(5);
        let mut head: PredictionHead = PredictionHead::new("head", 3, &mut rng);
        let x = Tensor::zeros(1, 3);
        let y = head.forward(&x).unwrap();
        assert_eq!(y.first(), 0.5);
    }

    #[test]
    fn raising_bias_raises_prediction() {
        let mut rng = seeded(6);
        let mut head: PredictionHead = PredictionHead::new("head", 2, &mut rng);
        let x = Tensor::row(&[0.3, -0.6]);
        let y0 = head.forward(&x).unwrap().first();
        head.bias_mut().value.set(0, 0, 1.0);
        let y1 = head.forward(&x).unwrap().first();
        head.bias_mut().value.set(0, 0, 2.0);
        let y2 = head.forward(&x).unwrap().first();
        assert!(y0 < y1 && y1 < y2);
    }
}
