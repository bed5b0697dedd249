//! Pairwise bi-linear feature interactions.
//!
//! Two flavors over field embeddings `v_i, v_j` and a learned `d x d`
//! matrix `W`:
//!
//! * hadamard form `(v_i W) ⊗ v_j`, a `d`-vector per pair (used by the
//!   FiBiNet baseline);
//! * inner form `(v_i W) · v_j`, a single scalar per pair, concatenated
//!   over all `f(f-1)/2` pairs and squeezed through a biasless linear
//!   compression layer with identity activation (the bi-linear+ module).

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Layer, Parameter};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How `W` is shared across field pairs. `Each` uses the left field's
/// matrix, matching the `v_i W` position of the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilinearFieldType {
    /// One matrix shared by every pair.
    FieldAll,
    /// One matrix per field, selected by the left field of the pair.
    FieldEach,
    /// One matrix per (i, j) pair.
    FieldInteraction,
}

impl BilinearFieldType {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::FieldAll),
            "each" => Ok(Self::FieldEach),
            "interaction" => Ok(Self::FieldInteraction),
            other => Err(Error::Config(format!(
                "unknown bilinear field type {other:?} (expected all|each|interaction)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FieldAll => "all",
            Self::FieldEach => "each",
            Self::FieldInteraction => "interaction",
        }
    }

    fn matrix_count(&self, f: usize) -> usize {
        match self {
            Self::FieldAll => 1,
            Self::FieldEach => f,
            Self::FieldInteraction => pair_count(f),
        }
    }

    fn matrix_index(&self, left: usize, _right: usize, pair: usize) -> usize {
        match self {
            Self::FieldAll => 0,
            Self::FieldEach => left,
            Self::FieldInteraction => pair,
        }
    }
}

pub fn pair_count(f: usize) -> usize {
    f * (f - 1) / 2
}

/// All `(i, j)` with `i < j`, in lexicographic order.
pub fn field_pairs(f: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(pair_count(f));
    for i in 0..f {
        for j in (i + 1)..f {
            pairs.push((i, j));
        }
    }
    pairs
}

/// `(v_i W) ⊗ v_j` for row vectors `1 x d` and `W: d x d`.
pub fn bilinear_hadamard<F: Scalar>(
    vi: &Tensor<F>,
    vj: &Tensor<F>,
    w: &Tensor<F>,
) -> Result<Tensor<F>> {
    vi.matmul(w)?.hadamard(vj)
}

/// `(v_i W) · v_j`, a scalar.
pub fn bilinear_inner<F: Scalar>(vi: &Tensor<F>, vj: &Tensor<F>, w: &Tensor<F>) -> Result<F> {
    vi.matmul(w)?.dot(vj)
}

fn init_matrices<F: Scalar>(
    prefix: &str,
    field_type: BilinearFieldType,
    f: usize,
    d: usize,
    rng: &mut impl RngCore,
) -> Vec<Parameter<F>> {
    let bound = 1.0 / (d as f64).sqrt();
    (0..field_type.matrix_count(f))
        .map(|k| Parameter::new(format!("{prefix}.w{k}"), rng::uniform_tensor(rng, d, d, bound)))
        .collect()
}

/// Inner-product interactions over all field pairs:
/// `batch x (f*d)` -> `batch x f(f-1)/2`.
#[derive(Debug, Clone)]
pub struct PairwiseInner<F: Scalar = f64> {
    field_type: BilinearFieldType,
    f: usize,
    d: usize,
    ws: Vec<Parameter<F>>,
    cache: Option<InnerCache<F>>,
}

#[derive(Debug, Clone)]
struct InnerCache<F: Scalar> {
    input: Tensor<F>,
    /// Projected left vectors `v_i W`, one `d`-block per pair per row.
    projected: Tensor<F>,
}

impl<F: Scalar> PairwiseInner<F> {
    pub fn new(
        name: &str,
        field_type: BilinearFieldType,
        f: usize,
        d: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        Self {
            field_type,
            f,
            d,
            ws: init_matrices(name, field_type, f, d, rng),
            cache: None,
        }
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.f)
    }

    pub fn matrix_param_count(&self) -> usize {
        self.ws.iter().map(|w| w.len()).sum()
    }

    pub fn matrices_mut(&mut self) -> &mut [Parameter<F>] {
        &mut self.ws
    }
}

impl<F: Scalar> Layer<F> for PairwiseInner<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, width) = input.shape();
        if width != self.f * self.d {
            return Err(Error::ShapeMismatch {
                op: "pairwise_inner",
                left: format!("{rows}x{width}"),
                right: format!("{} fields x {} dims", self.f, self.d),
            });
        }
        let pairs = field_pairs(self.f);
        let d = self.d;
        let mut out = Tensor::zeros(rows, pairs.len());
        let mut projected = Tensor::zeros(rows, pairs.len() * d);
        for r in 0..rows {
            let row = input.row_slice(r);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let w = &self.ws[self.field_type.matrix_index(i, j, p)].value;
                let vi = &row[i * d..(i + 1) * d];
                let vj = &row[j * d..(j + 1) * d];
                let mut score = F::zero();
                for c in 0..d {
                    let mut u = F::zero();
                    for a in 0..d {
                        u += vi[a] * w.at(a, c);
                    }
                    projected.set(r, p * d + c, u);
                    score += u * vj[c];
                }
                out.set(r, p, score);
            }
        }
        self.cache = Some(InnerCache {
            input: input.clone(),
            projected,
        });
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let pairs = field_pairs(self.f);
        let d = self.d;
        let rows = upstream.rows();
        let mut dx = Tensor::zeros(rows, self.f * d);
        for r in 0..rows {
            let row = cache.input.row_slice(r);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let dp = upstream.at(r, p);
                if dp == F::zero() {
                    continue;
                }
                let wi = self.field_type.matrix_index(i, j, p);
                let vj = &row[j * d..(j + 1) * d];
                let vi = &row[i * d..(i + 1) * d];
                let u = &cache.projected.row_slice(r)[p * d..(p + 1) * d];
                // d score / d v_j = u ; d score / d u = v_j
                for c in 0..d {
                    let cur = dx.at(r, j * d + c);
                    dx.set(r, j * d + c, cur + dp * u[c]);
                }
                let w = &self.ws[wi].value;
                for a in 0..d {
                    let mut acc = F::zero();
                    for c in 0..d {
                        acc += dp * vj[c] * w.at(a, c);
                    }
                    let cur = dx.at(r, i * d + a);
                    dx.set(r, i * d + a, cur + acc);
                }
                let wgrad = &mut self.ws[wi].grad;
                for a in 0..d {
                    for c in 0..d {
                        let cur = wgrad.at(a, c);
                        wgrad.set(a, c, cur + dp * vi[a] * vj[c]);
                    }
                }
            }
        }
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.ws.iter_mut().collect()
    }
}

/// The compression layer: a biasless linear map `batch x p -> batch x m`
/// with identity activation.
#[derive(Debug, Clone)]
pub struct Compress<F: Scalar = f64> {
    weight: Parameter<F>,
    cache_input: Option<Tensor<F>>,
}

impl<F: Scalar> Compress<F> {
    pub fn new(name: &str, in_dim: usize, m: usize, rng: &mut impl RngCore) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                rng::uniform_tensor(rng, m, in_dim, bound),
            ),
            cache_input: None,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn weight_count(&self) -> usize {
        self.weight.value.len()
    }

    pub fn weight_mut(&mut self) -> &mut Parameter<F> {
        &mut self.weight
    }
}

impl<F: Scalar> Layer<F> for Compress<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        self.cache_input = Some(input.clone());
        input.matmul(&self.weight.value.transpose())
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self.cache_input.as_ref().expect("forward before backward");
        self.weight.grad.add_assign(&upstream.transpose().matmul(input)?)?;
        upstream.matmul(&self.weight.value)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.weight]
    }
}

/// The full bi-linear+ block: pairwise inner products followed by
/// compression, `batch x (f*d)` -> `batch x m`.
#[derive(Debug, Clone)]
pub struct BilinearPlus<F: Scalar = f64> {
    pub inner: PairwiseInner<F>,
    pub compress: Compress<F>,
}

impl<F: Scalar> BilinearPlus<F> {
    pub fn new(
        name: &str,
        field_type: BilinearFieldType,
        f: usize,
        d: usize,
        m: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        let inner = PairwiseInner::new(name, field_type, f, d, rng);
        let compress = Compress::new(&format!("{name}.compress"), pair_count(f), m, rng);
        Self { inner, compress }
    }

    pub fn out_dim(&self) -> usize {
        self.compress.out_dim()
    }
}

impl<F: Scalar> Layer<F> for BilinearPlus<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let p = self.inner.forward(input)?;
        self.compress.forward(&p)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let dp = self.compress.backward(upstream)?;
        self.inner.backward(&dp)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = self.inner.parameters();
        out.extend(self.compress.parameters());
        out
    }
}

/// Hadamard-form interactions over all pairs:
/// `batch x (f*d)` -> `batch x (f(f-1)/2 * d)`.
#[derive(Debug, Clone)]
pub struct BilinearHadamard<F: Scalar = f64> {
    field_type: BilinearFieldType,
    f: usize,
    d: usize,
    ws: Vec<Parameter<F>>,
    cache: Option<InnerCache<F>>,
}

impl<F: Scalar> BilinearHadamard<F> {
    pub fn new(
        name: &str,
        field_type: BilinearFieldType,
        f: usize,
        d: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        Self {
            field_type,
            f,
            d,
            ws: init_matrices(name, field_type, f, d, rng),
            cache: None,
        }
    }

    pub fn out_dim(&self) -> usize {
        pair_count(self.f) * self.d
    }

    pub fn matrix_param_count(&self) -> usize {
        self.ws.iter().map(|w| w.len()).sum()
    }
}

impl<F: Scalar> Layer<F> for BilinearHadamard<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, width) = input.shape();
        if width != self.f * self.d {
            return Err(Error::ShapeMismatch {
                op: "bilinear_hadamard",
                left: format!("{rows}x{width}"),
                right: format!("{} fields x {} dims", self.f, self.d),
            });
        }
        let pairs = field_pairs(self.f);
        let d = self.d;
        let mut out = Tensor::zeros(rows, pairs.len() * d);
        let mut projected = Tensor::zeros(rows, pairs.len() * d);
        for r in 0..rows {
            let row = input.row_slice(r);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let w = &self.ws[self.field_type.matrix_index(i, j, p)].value;
                let vi = &row[i * d..(i + 1) * d];
                let vj = &row[j * d..(j + 1) * d];
                for c in 0..d {
                    let mut u = F::zero();
                    for a in 0..d {
                        u += vi[a] * w.at(a, c);
                    }
                    projected.set(r, p * d + c, u);
                    out.set(r, p * d + c, u * vj[c]);
                }
            }
        }
        self.cache = Some(InnerCache {
            input: input.clone(),
            projected,
        });
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let pairs = field_pairs(self.f);
        let d = self.d;
        let rows = upstream.rows();
        let mut dx = Tensor::zeros(rows, self.f * d);
        for r in 0..rows {
            let row = cache.input.row_slice(r);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let wi = self.field_type.matrix_index(i, j, p);
                let vi = &row[i * d..(i + 1) * d];
                let vj = &row[j * d..(j + 1) * d];
                let u = &cache.projected.row_slice(r)[p * d..(p + 1) * d];
                let dblock = &upstream.row_slice(r)[p * d..(p + 1) * d];
                // out_c = u_c * vj_c
                for c in 0..d {
                    let cur = dx.at(r, j * d + c);
                    dx.set(r, j * d + c, cur + dblock[c] * u[c]);
                }
                let w = &self.ws[wi].value;
                for a in 0..d {
                    let mut acc = F::zero();
                    for c in 0..d {
                        acc += dblock[c] * vj[c] * w.at(a, c);
                    }
                    let cur = dx.at(r, i * d + a);
                    dx.set(r, i * d + a, cur + acc);
                }
                let wgrad = &mut self.ws[wi].grad;
                for a in 0..d {
                    for c in 0..d {
                        let cur = wgrad.at(a, c);
                        wgrad.set(a, c, cur + dblock[c] * vj[c] * vi[a]);
                    }
                }
            }
        }
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.ws.iter_mut().collect()
    }
}
