//! From-scratch click-through-rate models with reverse-mode gradients.
//!
//! The crate implements three CTR architectures over a shared embedding
//! front end - a plain DNN, FiBiNet, and FiBiNet++ (feature normalization,
//! a bi-linear+ interaction branch and a SENet+ attention branch feeding a
//! compact MLP) - together with everything needed to train and audit them
//! at desk scale: dense tensors, layer-by-layer backward passes, a
//! central-difference gradient checker, Adam, AUC/log-loss metrics, TSV
//! ingestion, a planted-interaction synthetic data generator and exact
//! non-embedding parameter accounting.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the `f64` instantiation the tests and the CLI use.

pub mod bilinear;
pub mod check;
pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod error;
pub mod layer;
pub mod mlp;
pub mod model;
pub mod norm;
pub mod rng;
pub mod scalar;
pub mod senet;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default `f64` tensor (the generic type's default parameter).
pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Parameter = layer::Parameter<f64>;
pub type ModelGraph = model::ModelGraph<f64>;
pub type ModelGraph32 = model::ModelGraph<f32>;

pub use bilinear::BilinearFieldType;
pub use embedding::{FeatureSchema, FieldKind, FieldSpec, RawInstance, Vocabulary};
pub use layer::{grad_check, Layer};
pub use model::{Architecture, HyperParams, ParamAudit};
pub use train::{auc, logloss, EvalReport, TrainConfig};
