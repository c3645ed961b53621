//! Baseline lossy JPEG codec.
//!
//! [`encode`] converts RGB to full-range BT.601 YCbCr, optionally subsamples
//! chroma 4:2:0, runs an exact floating-point 8×8 DCT and quantizes with the
//! IJG quality-scaled tables. The quantized planes are kept in memory as a
//! [`CompressedImage`]; a baseline JFIF bitstream is emitted alongside when
//! [`CodecConfig::entropy_coding`] is set. [`decode`] inverts the pipeline.

mod codec;
mod dct;
mod image;
mod jfif;
pub mod pnm;
mod tables;

pub use codec::{decode, encode, roundtrip, Block, CodecConfig, CompressedImage, Plane, Subsampling};
pub use image::{psnr, Image, Mask};
pub use jfif::{emit_jfif, parse_jfif};
pub use tables::{quality_to_tables, QuantTable, QuantTableSet, ANNEX_K_CHROMA, ANNEX_K_LUMA, ZIGZAG};
