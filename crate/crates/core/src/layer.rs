//! The layer contract every network block implements, learnable parameters,
//! and a central-difference gradient checker.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A named learnable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter<F: Scalar = f64> {
    /// Unique path within a model, e.g. `mlp.0.weight`.
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Scalar> Parameter<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Forward/backward contract.
///
/// `backward` must be called only after a matching `forward`; parameter
/// gradients accumulate additively until explicitly zeroed.
pub trait Layer<F: Scalar> {
    /// Maps a `batch x in` tensor to a `batch x out` tensor, caching what
    /// the backward pass needs.
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>>;

    /// Takes the loss gradient w.r.t. the output and returns the gradient
    /// w.r.t. the input, accumulating parameter gradients along the way.
    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>>;

    /// Learnable parameters in a stable order.
    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Train/eval switch; only normalization layers care.
    fn set_training(&mut self, _training: bool) {}
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Nudges every parameter coordinate by a uniform offset so gradient checks
/// run at a non-degenerate point. Freshly initialized normalization affines
/// (gamma 1, beta 0) make many true gradients exactly zero, where the
/// relative-error denominator floor amplifies central-difference noise.
pub fn jitter_parameters<F: Scalar>(
    params: Vec<&mut Parameter<F>>,
    rng: &mut impl rand::RngCore,
    amplitude: f64,
) {
    for p in params {
        for v in p.value.data_mut() {
            *v += F::from_f64_lossy(crate::rng::uniform_in(rng, -amplitude, amplitude));
        }
    }
}

/// Fixed elementwise readout composed after a layer under test, so the
/// checker's sum-of-outputs loss sends a non-uniform gradient into it.
/// A uniform upstream makes some true gradients structurally zero (batch
/// norm gammas, whose normalized columns sum to zero over the batch), and
/// the relative-error floor then amplifies difference noise there.
pub struct DiagonalReadout<F: Scalar, L: Layer<F>> {
    pub inner: L,
    _marker: std::marker::PhantomData<F>,
}

fn readout_coeff<F: Scalar>(r: usize, c: usize) -> F {
    F::from_f64_lossy(0.5 + ((r * 31 + c * 37) % 89) as f64 / 89.0)
}

impl<F: Scalar, L: Layer<F>> DiagonalReadout<F, L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            _marker: std::marker::PhantomData,
        }
    }

    fn scale(t: &Tensor<F>) -> Tensor<F> {
        let mut out = t.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.at(r, c) * readout_coeff::<F>(r, c);
                out.set(r, c, v);
            }
        }
        out
    }
}

impl<F: Scalar, L: Layer<F>> Layer<F> for DiagonalReadout<F, L> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(Self::scale(&self.inner.forward(input)?))
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        self.inner.backward(&Self::scale(upstream))
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.inner.parameters()
    }

    fn set_training(&mut self, training: bool) {
        self.inner.set_training(training);
    }
}

/// Checks a layer's analytic gradients against central differences.
///
/// The scalar loss is the sum of all outputs. Both the input gradient and
/// every parameter gradient are compared coordinate by coordinate; the
/// returned value is the maximum relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// Fails with [`Error::NonDeterministic`] if two forward passes over the
/// same input disagree.
pub fn grad_check<F: Scalar>(
    layer: &mut dyn Layer<F>,
    input: &Tensor<F>,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Input(format!(
            "grad_check epsilon must be in (0, 1e-2], got {epsilon}"
        )));
    }
    let eps = F::from_f64_lossy(epsilon);

    let first = layer.forward(input)?;
    let second = layer.forward(input)?;
    if first != second {
        return Err(Error::NonDeterministic(
            "two forward passes over identical input differ".to_string(),
        ));
    }

    // Analytic pass: fresh gradients, loss = sum of outputs.
    layer.zero_grad();
    let out = layer.forward(input)?;
    let ones = Tensor::full(out.rows(), out.cols(), F::one());
    let analytic_input = layer.backward(&ones)?;
    let analytic_params: Vec<Vec<F>> = layer
        .parameters()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    let mut max_err = 0.0f64;

    // Input coordinates.
    let mut probe = input.clone();
    for i in 0..probe.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = layer.forward(&probe)?.sum().to_f64_lossy();
        probe.data_mut()[i] = orig - eps;
        let down = layer.forward(&probe)?.sum().to_f64_lossy();
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(analytic_input.data()[i].to_f64_lossy(), numeric);
        max_err = max_err.max(err);
    }

    // Parameter coordinates.
    let param_count = analytic_params.len();
    for pi in 0..param_count {
        let coords = layer.parameters()[pi].len();
        for ci in 0..coords {
            let orig = layer.parameters()[pi].value.data()[ci];
            layer.parameters()[pi].value.data_mut()[ci] = orig + eps;
            let up = layer.forward(input)?.sum().to_f64_lossy();
            layer.parameters()[pi].value.data_mut()[ci] = orig - eps;
            let down = layer.forward(input)?.sum().to_f64_lossy();
            layer.parameters()[pi].value.data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = relative_error(analytic_params[pi][ci].to_f64_lossy(), numeric);
            max_err = max_err.max(err);
        }
    }

    // Leave the layer with caches from an untouched forward pass.
    layer.forward(input)?;
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = x * w elementwise; the simplest parameterized layer.
    struct ScaleLayer {
        w: Parameter,
        cache: Option<Tensor>,
    }

    impl ScaleLayer {
        fn new(w: &[f64]) -> Self {
            Self {
                w: Parameter::new("scale.w", Tensor::row(w)),
                cache: None,
            }
        }
    }

    impl Layer<f64> for ScaleLayer {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            self.cache = Some(input.clone());
            input.hadamard(&self.w.value)
        }

        fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
            let input = self.cache.as_ref().expect("forward before backward");
            self.w.grad.add_assign(&upstream.hadamard(input)?)?;
            upstream.hadamard(&self.w.value)
        }

        fn parameters(&mut self) -> Vec<&mut Parameter> {
            vec![&mut self.w]
        }
    }

    struct FlakyLayer {
        calls: usize,
    }

    impl Layer<f64> for FlakyLayer {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            self.calls += 1;
            Ok(input.scale(self.calls as f64))
        }

        fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
            Ok(upstream.clone())
        }
    }

    #[test]
    fn linear_layer_checks_to_rounding_error() {
        let mut layer = ScaleLayer::new(&[2.0, -3.0, 0.5]);
        let input = Tensor::row(&[1.0, 4.0, -2.0]);
        let err = grad_check(&mut layer, &input, 1e-5).unwrap();
        assert!(err <= 1e-9, "linear map should be near-exact, got {err}");
    }

    #[test]
    fn grad_accumulates_across_passes() {
        let mut layer = ScaleLayer::new(&[2.0, -3.0]);
        let input = Tensor::row(&[1.0, 4.0]);
        let up = Tensor::row(&[1.0, 1.0]);
        layer.forward(&input).unwrap();
        layer.backward(&up).unwrap();
        let once = layer.w.grad.clone();
        layer.forward(&input).unwrap();
        layer.backward(&up).unwrap();
        assert_eq!(layer.w.grad, once.scale(2.0));
    }

    #[test]
    fn non_deterministic_layer_is_rejected() {
        let mut layer = FlakyLayer { calls: 0 };
        let input = Tensor::row(&[1.0]);
        let err = grad_check(&mut layer, &input, 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonDeterministic(_)));
    }

    #[test]
    fn epsilon_domain_is_enforced() {
        let mut layer = ScaleLayer::new(&[1.0]);
        let input = Tensor::row(&[1.0]);
        assert!(grad_check(&mut layer, &input, 0.0).is_err());
        assert!(grad_check(&mut layer, &input, 0.5).is_err());
    }
}
