//! Minimal dense-tensor numeric core: reverse-mode differentiation on a
//! Wengert tape, an Adam optimizer, and a flat checkpoint archive.
//!
//! Generic over the floating scalar via [`Scalar`]; the rest of the
//! crate uses the `f64` aliases exported at the crate root.

pub mod adam;
pub mod checkpoint;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use checkpoint::{manifest_get, read_checkpoint, write_checkpoint, Manifest};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Tape, Var, LAYER_NORM_EPS};
pub use tensor::TensorData;
