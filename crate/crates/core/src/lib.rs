//! Diversity-aware selection and tensor compression for budgeted latent
//! dataset distillation.
//!
//! Per class, a determinantal point process picks a diverse subset of latent
//! tensors ([`dpp`]); the stacked subset is compressed with a truncated
//! higher-order SVD ([`hosvd`]) and written to a checksummed archive whose
//! size, together with a declared decoder size, must fit a storage budget
//! ([`archive`], [`pipeline`]). [`quantize`] covers the decoder side: INT8 and
//! FP16 post-training quantization of named tensor archives.

pub mod archive;
pub mod dpp;
pub mod error;
pub mod hosvd;
pub mod linalg;
pub mod pipeline;
pub mod quantize;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{fold, mode_product, unfold, Matrix, Tensor};
