//! Baseline JPEG compression of low-resolution panoramas: encoder, decoder,
//! rate control, factorized rate estimation and the differentiable
//! compression path used during training.

pub mod error;
pub mod fit;
pub mod huffman;
pub mod jpeg;
pub mod ops;
pub mod rate;
pub mod tables;
pub mod transform;

pub use error::{CodecError, Result};
pub use fit::{fit_quant_tables, RateFit};
pub use jpeg::{bpp_real, decode, decode_coefficients, encode, CoeffBlocks, Encoded};
pub use rate::{estimate_rate, LaplaceModel, SymbolModel, TableModel};
pub use tables::QuantTables;
