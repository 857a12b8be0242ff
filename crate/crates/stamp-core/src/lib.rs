//! Sequence-transform and mixed-precision activation quantization simulator.
//!
//! The crate models the error of low-bit activation quantization when an
//! invertible transform is applied across the token (sequence) dimension
//! before quantizing, so that energy concentrates in a few tokens that can
//! be kept at higher precision. It provides:
//!
//! - dense tensor primitives with a fixed sequence x feature layout
//!   ([`tensor`]),
//! - per-token / per-block asymmetric min-max fake quantization and SQNR
//!   metrics ([`quant`]),
//! - orthonormal sequence transforms (KLT, DCT-II, Walsh-Hadamard, Haar
//!   wavelets) and Hadamard feature mixing ([`transform`]),
//! - autocorrelation estimation, token energies, the energy-weighted error
//!   bound, and bit-allocation schemes ([`energy`]),
//! - a simulated linear layer wrapping transform + mixed-precision
//!   quantization ([`layer`]),
//! - reproducible synthetic activations and tensor/CSV file IO ([`synth`],
//!   [`io`]),
//! - the `stamp` command-line harness ([`cli`]).

pub mod cli;
pub mod energy;
pub mod error;
pub mod io;
pub mod layer;
pub mod quant;
pub mod synth;
pub mod tensor;
pub mod transform;

pub use energy::{
    compare_uniform_vs_concentrated, energy_error_bound, estimate_autocorr,
    optimal_bits_continuous, round_bits, transformed_energies, two_level_allocation,
    AllocationScheme, BitAllocation, BoundComparison, EnergyProfile,
};
pub use error::{Result, StampError};
pub use layer::{
    reference_linear, stamp_linear, transformed_bias, BiasMode, LinearLayer, QuantMode,
    StampConfig, StampLinear,
};
pub use quant::{
    dequantize, fake_quant, fit_spec, per_token_quant_error, quant_error, quantize, sqnr_db,
    QuantGranularity, QuantSpec, QuantizedTensor,
};
pub use synth::{generate, CounterRng, SynthKind, SynthSpec};
pub use tensor::{frobenius_norm_sq, matmul, ActivationMatrix, LayoutTag, RealVector};
pub use transform::{
    jacobi_eigh, klt_from_autocorr, random_orthogonal, EigenDecomposition, FeatureTransform,
    SequenceTransform,
};
