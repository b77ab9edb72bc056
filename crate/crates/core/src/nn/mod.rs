//! Minimal neural-network building blocks over a flat parameter buffer.

pub mod gemm;
pub mod layers;
pub mod params;
