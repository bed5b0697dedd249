//! Squeeze-and-excitation attention over field embeddings.
//!
//! The upgraded block works in four phases on normalized embeddings:
//! grouped squeeze (per-group max and mean statistics), bit-wise excitation
//! through two biasless FC layers (ReLU then identity), elementwise
//! re-weighting, and a fuse step that adds the skip connection and applies
//! a per-field layer norm. The original field-wise block (mean-pool squeeze,
//! two ReLU FC layers, per-field scalar re-weight) is kept for the FiBiNet
//! baseline.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::layer::{Layer, Parameter};
use crate::norm::LayerNorm;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Excitation hidden width `ceil(2 g f / r)`, at least 1.
pub fn excitation_hidden_width(f: usize, g: usize, r: usize) -> usize {
    (2 * g * f).div_ceil(r).max(1)
}

/// Grouped squeeze: per field, per group of `k = d/g` consecutive slots,
/// emit `(max, mean)`; groups ascending, fields in schema order.
/// `batch x (f*d)` -> `batch x (2*g*f)`.
pub fn squeeze<F: Scalar>(v: &Tensor<F>, f: usize, d: usize, g: usize) -> Result<Tensor<F>> {
    let mut layer = Squeeze::new(f, d, g)?;
    layer.forward(v)
}

/// Elementwise re-weighting `a ⊗ v`.
pub fn reweight<F: Scalar>(a: &Tensor<F>, v: &Tensor<F>) -> Result<Tensor<F>> {
    a.hadamard(v)
}

#[derive(Debug, Clone)]
pub struct Squeeze<F: Scalar = f64> {
    f: usize,
    d: usize,
    g: usize,
    /// Flat argmax index per (row, field, group), for routing the max
    /// gradient to the first maximal slot.
    cache_argmax: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> Squeeze<F> {
    pub fn new(f: usize, d: usize, g: usize) -> Result<Self> {
        if g == 0 || d % g != 0 {
            return Err(Error::Config(format!(
                "group count {g} must divide embedding dim {d}"
            )));
        }
        Ok(Self {
            f,
            d,
            g,
            cache_argmax: None,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn out_dim(&self) -> usize {
        2 * self.g * self.f
    }
}

impl<F: Scalar> Layer<F> for Squeeze<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, width) = input.shape();
        if width != self.f * self.d {
            return Err(Error::ShapeMismatch {
                op: "squeeze",
                left: format!("{rows}x{width}"),
                right: format!("{} fields x {} dims", self.f, self.d),
            });
        }
        let k = self.d / self.g;
        let kn = F::from_f64_lossy(k as f64);
        let mut out = Tensor::zeros(rows, self.out_dim());
        let mut argmax = vec![0usize; rows * self.f * self.g];
        for r in 0..rows {
            let row = input.row_slice(r);
            for field in 0..self.f {
                for group in 0..self.g {
                    let start = field * self.d + group * k;
                    let slice = &row[start..start + k];
                    let mut best = slice[0];
                    let mut best_at = start;
                    let mut mean = F::zero();
                    for (t, &v) in slice.iter().enumerate() {
                        mean += v;
                        if v > best {
                            best = v;
                            best_at = start + t;
                        }
                    }
                    mean = mean / kn;
                    let base = field * 2 * self.g + group * 2;
                    out.set(r, base, best);
                    out.set(r, base + 1, mean);
                    argmax[(r * self.f + field) * self.g + group] = best_at;
                }
            }
        }
        self.cache_argmax = Some(argmax);
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let argmax = self.cache_argmax.as_ref().expect("forward before backward");
        let k = self.d / self.g;
        let kn = F::from_f64_lossy(k as f64);
        let rows = upstream.rows();
        let mut dx = Tensor::zeros(rows, self.f * self.d);
        for r in 0..rows {
            for field in 0..self.f {
                for group in 0..self.g {
                    let base = field * 2 * self.g + group * 2;
                    let d_max = upstream.at(r, base);
                    let d_mean = upstream.at(r, base + 1) / kn;
                    let max_at = argmax[(r * self.f + field) * self.g + group];
                    let cur = dx.at(r, max_at);
                    dx.set(r, max_at, cur + d_max);
                    let start = field * self.d + group * k;
                    for c in start..start + k {
                        let cur = dx.at(r, c);
                        dx.set(r, c, cur + d_mean);
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Bit-wise excitation: `a = W3 relu(W2 z)`, no biases, identity output
/// activation. `batch x 2gf` -> `batch x (f*d)`.
#[derive(Debug, Clone)]
pub struct Excite<F: Scalar = f64> {
    w2: Parameter<F>,
    w3: Parameter<F>,
    cache: Option<(Tensor<F>, Tensor<F>)>,
}

impl<F: Scalar> Excite<F> {
    pub fn new(name: &str, f: usize, d: usize, g: usize, r: usize, rng: &mut impl RngCore) -> Self {
        let z_dim = 2 * g * f;
        let hidden = excitation_hidden_width(f, g, r);
        let out_dim = f * d;
        Self {
            w2: Parameter::new(
                format!("{name}.w2"),
                rng::uniform_tensor(rng, hidden, z_dim, 1.0 / (z_dim as f64).sqrt()),
            ),
            w3: Parameter::new(
                format!("{name}.w3"),
                rng::uniform_tensor(rng, out_dim, hidden, 1.0 / (hidden as f64).sqrt()),
            ),
            cache: None,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w2.value.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w2.value.len() + self.w3.value.len()
    }

    pub fn weights_mut(&mut self) -> (&mut Parameter<F>, &mut Parameter<F>) {
        (&mut self.w2, &mut self.w3)
    }
}

impl<F: Scalar> Layer<F> for Excite<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let hidden = input.matmul(&self.w2.value.transpose())?.relu();
        let out = hidden.matmul(&self.w3.value.transpose())?;
        self.cache = Some((input.clone(), hidden));
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let (input, hidden) = self.cache.as_ref().expect("forward before backward");
        self.w3.grad.add_assign(&upstream.transpose().matmul(hidden)?)?;
        let d_hidden = upstream.matmul(&self.w3.value)?;
        let mask = hidden.map(|v| if v > F::zero() { F::one() } else { F::zero() });
        let d_pre = d_hidden.hadamard(&mask)?;
        self.w2.grad.add_assign(&d_pre.transpose().matmul(input)?)?;
        d_pre.matmul(&self.w2.value)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w2, &mut self.w3]
    }
}

/// Elementwise product of the two halves of a stacked input
/// `[a | v] : batch x 2w` -> `batch x w`; the gradient flows to both halves.
#[derive(Debug, Clone)]
pub struct Reweight<F: Scalar = f64> {
    width: usize,
    cache: Option<(Tensor<F>, Tensor<F>)>,
}

impl<F: Scalar> Reweight<F> {
    pub fn new(width: usize) -> Self {
        Self { width, cache: None }
    }
}

impl<F: Scalar> Layer<F> for Reweight<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        if input.cols() != 2 * self.width {
            return Err(Error::ShapeMismatch {
                op: "reweight",
                left: format!("{}x{}", input.rows(), input.cols()),
                right: format!("stacked width {}", 2 * self.width),
            });
        }
        let parts = input.split_cols(&[self.width, self.width])?;
        let out = parts[0].hadamard(&parts[1])?;
        self.cache = Some((parts[0].clone(), parts[1].clone()));
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let (a, v) = self.cache.as_ref().expect("forward before backward");
        let da = upstream.hadamard(v)?;
        let dv = upstream.hadamard(a)?;
        Tensor::hstack(&[&da, &dv])
    }
}

/// Fuse step: adds the two halves of a stacked input
/// `[v_orig | v_weighted] : batch x 2fd`, then applies a per-field layer
/// norm to the sum. -> `batch x fd`.
#[derive(Debug, Clone)]
pub struct Fuse<F: Scalar = f64> {
    f: usize,
    d: usize,
    lns: Vec<LayerNorm<F>>,
}

impl<F: Scalar> Fuse<F> {
    pub fn new(name: &str, f: usize, d: usize) -> Self {
        let lns = (0..f)
            .map(|i| LayerNorm::new(&format!("{name}.ln{i}"), d))
            .collect();
        Self { f, d, lns }
    }

    pub fn affine_param_count(&self) -> usize {
        2 * self.f * self.d
    }
}

impl<F: Scalar> Layer<F> for Fuse<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let width = self.f * self.d;
        if input.cols() != 2 * width {
            return Err(Error::ShapeMismatch {
                op: "fuse",
                left: format!("{}x{}", input.rows(), input.cols()),
                right: format!("stacked width {}", 2 * width),
            });
        }
        let parts = input.split_cols(&[width, width])?;
        let sum = parts[0].add(&parts[1])?;
        let mut out = Tensor::zeros(sum.rows(), width);
        for (i, ln) in self.lns.iter_mut().enumerate() {
            let block = ln.forward(&sum.col_block(i * self.d, self.d))?;
            for r in 0..out.rows() {
                out.row_slice_mut(r)[i * self.d..(i + 1) * self.d]
                    .copy_from_slice(block.row_slice(r));
            }
        }
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let width = self.f * self.d;
        let mut d_sum = Tensor::zeros(upstream.rows(), width);
        for (i, ln) in self.lns.iter_mut().enumerate() {
            let d_block = ln.backward(&upstream.col_block(i * self.d, self.d))?;
            for r in 0..d_sum.rows() {
                d_sum.row_slice_mut(r)[i * self.d..(i + 1) * self.d]
                    .copy_from_slice(d_block.row_slice(r));
            }
        }
        // The sum distributes the gradient unchanged to both halves.
        Tensor::hstack(&[&d_sum, &d_sum])
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        self.lns.iter_mut().flat_map(|ln| ln.parameters()).collect()
    }
}

/// The four-phase attention block over normalized embeddings:
/// `batch x fd` -> `batch x fd`.
#[derive(Debug, Clone)]
pub struct SenetPlus<F: Scalar = f64> {
    squeeze: Squeeze<F>,
    excite: Excite<F>,
    reweight: Reweight<F>,
    fuse: Fuse<F>,
    cache_input: Option<Tensor<F>>,
}

impl<F: Scalar> SenetPlus<F> {
    pub fn new(
        name: &str,
        f: usize,
        d: usize,
        g: usize,
        r: usize,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        Ok(Self {
            squeeze: Squeeze::new(f, d, g)?,
            excite: Excite::new(name, f, d, g, r, rng),
            reweight: Reweight::new(f * d),
            fuse: Fuse::new(name, f, d),
            cache_input: None,
        })
    }

    pub fn excitation_param_count(&self) -> usize {
        self.excite.param_count()
    }

    pub fn fuse_affine_param_count(&self) -> usize {
        self.fuse.affine_param_count()
    }

    pub fn hidden_width(&self) -> usize {
        self.excite.hidden_width()
    }
}

impl<F: Scalar> Layer<F> for SenetPlus<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let z = self.squeeze.forward(input)?;
        let a = self.excite.forward(&z)?;
        let weighted = self.reweight.forward(&Tensor::hstack(&[&a, input])?)?;
        let out = self.fuse.forward(&Tensor::hstack(&[input, &weighted])?)?;
        self.cache_input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let width = upstream.cols();
        let d_fuse = self.fuse.backward(upstream)?;
        let fuse_parts = d_fuse.split_cols(&[width, width])?;
        let d_rw = self.reweight.backward(&fuse_parts[1])?;
        let rw_parts = d_rw.split_cols(&[width, width])?;
        let d_z = self.excite.backward(&rw_parts[0])?;
        let d_squeeze = self.squeeze.backward(&d_z)?;
        let mut dx = fuse_parts[0].clone();
        dx.add_assign(&rw_parts[1])?;
        dx.add_assign(&d_squeeze)?;
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = self.excite.parameters();
        out.extend(self.fuse.parameters());
        out
    }
}

/// The original field-wise block used by the FiBiNet baseline: mean-pool
/// squeeze to one statistic per field, two biasless ReLU FC layers, then a
/// per-field scalar re-weight. `batch x fd` -> `batch x fd`.
#[derive(Debug, Clone)]
pub struct SenetOriginal<F: Scalar = f64> {
    f: usize,
    d: usize,
    w1: Parameter<F>,
    w2: Parameter<F>,
    /// Test hook: skip excitation and re-weight with all-ones attention.
    pub bypass_excitation: bool,
    cache: Option<OriginalCache<F>>,
}

#[derive(Debug, Clone)]
struct OriginalCache<F: Scalar> {
    input: Tensor<F>,
    stat: Tensor<F>,
    hidden: Tensor<F>,
    attention: Tensor<F>,
}

impl<F: Scalar> SenetOriginal<F> {
    pub fn new(name: &str, f: usize, d: usize, r: usize, rng: &mut impl RngCore) -> Self {
        let hidden = f.div_ceil(r).max(1);
        Self {
            f,
            d,
            w1: Parameter::new(
                format!("{name}.w1"),
                rng::uniform_tensor(rng, hidden, f, 1.0 / (f as f64).sqrt()),
            ),
            w2: Parameter::new(
                format!("{name}.w2"),
                rng::uniform_tensor(rng, f, hidden, 1.0 / (hidden as f64).sqrt()),
            ),
            bypass_excitation: false,
            cache: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.value.len() + self.w2.value.len()
    }

    pub fn weights_mut(&mut self) -> (&mut Parameter<F>, &mut Parameter<F>) {
        (&mut self.w1, &mut self.w2)
    }
}

impl<F: Scalar> Layer<F> for SenetOriginal<F> {
    fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, width) = input.shape();
        if width != self.f * self.d {
            return Err(Error::ShapeMismatch {
                op: "senet_original",
                left: format!("{rows}x{width}"),
                right: format!("{} fields x {} dims", self.f, self.d),
            });
        }
        let dn = F::from_f64_lossy(self.d as f64);
        let mut stat = Tensor::zeros(rows, self.f);
        for r in 0..rows {
            for field in 0..self.f {
                let mut mean = F::zero();
                for &v in &input.row_slice(r)[field * self.d..(field + 1) * self.d] {
                    mean += v;
                }
                stat.set(r, field, mean / dn);
            }
        }
        let hidden = stat.matmul(&self.w1.value.transpose())?.relu();
        let attention = if self.bypass_excitation {
            Tensor::full(rows, self.f, F::one())
        } else {
            hidden.matmul(&self.w2.value.transpose())?.relu()
        };
        let mut out = Tensor::zeros(rows, width);
        for r in 0..rows {
            for field in 0..self.f {
                let a = attention.at(r, field);
                for c in 0..self.d {
                    out.set(r, field * self.d + c, input.at(r, field * self.d + c) * a);
                }
            }
        }
        self.cache = Some(OriginalCache {
            input: input.clone(),
            stat,
            hidden,
            attention,
        });
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let rows = upstream.rows();
        let mut dx = Tensor::zeros(rows, self.f * self.d);
        let mut d_attention = Tensor::zeros(rows, self.f);
        for r in 0..rows {
            for field in 0..self.f {
                let a = cache.attention.at(r, field);
                let mut da = F::zero();
                for c in 0..self.d {
                    let idx = field * self.d + c;
                    let up = upstream.at(r, idx);
                    dx.set(r, idx, up * a);
                    da += up * cache.input.at(r, idx);
                }
                d_attention.set(r, field, da);
            }
        }
        if !self.bypass_excitation {
            let att_mask = cache
                .attention
                .map(|v| if v > F::zero() { F::one() } else { F::zero() });
            let d_att_pre = d_attention.hadamard(&att_mask)?;
            self.w2.grad.add_assign(&d_att_pre.transpose().matmul(&cache.hidden)?)?;
            let d_hidden = d_att_pre.matmul(&self.w2.value)?;
            let hid_mask = cache
                .hidden
                .map(|v| if v > F::zero() { F::one() } else { F::zero() });
            let d_hid_pre = d_hidden.hadamard(&hid_mask)?;
            self.w1.grad.add_assign(&d_hid_pre.transpose().matmul(&cache.stat)?)?;
            let d_stat = d_hid_pre.matmul(&self.w1.value)?;
            let dn = F::from_f64_lossy(self.d as f64);
            for r in 0..rows {
                for field in 0..self.f {
                    let spread = d_stat.at(r, field) / dn;
                    for c in 0..self.d {
                        let idx = field * self.d + c;
                        let cur = dx.at(r, idx);
                        dx.set(r, idx, cur + spread);
                    }
                }
            }
        }
        Ok(dx)
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w1, &mut self.w2]
    }
}
