//! Simulated linear layer with sequence-transformed mixed-precision
//! activation quantization.
//!
//! Forward pass: transform the activation across tokens (and optionally mix
//! features), fake-quantize each token at its allocated bit width, multiply
//! by the weight, invert the sequence transform, add the bias. Because the
//! transforms are linear they commute with the product, so with quantization
//! disabled the output equals the plain linear layer.
//!
//! Weights are never quantized here; the inverse feature transform is fused
//! into the weight eagerly at configuration time.

use crate::energy::BitAllocation;
use crate::error::{Result, StampError};
use crate::quant::{fake_quant, QuantGranularity};
use crate::tensor::{matmul, ActivationMatrix, RealVector};
use crate::transform::{FeatureTransform, SequenceTransform};

/// Dense linear layer `y = x W + bias`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    weight: ActivationMatrix,
    bias: Option<RealVector>,
}

impl LinearLayer {
    pub fn new(weight: ActivationMatrix, bias: Option<RealVector>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.cols() {
                return Err(StampError::Dimension(format!(
                    "bias length {} vs {} output features",
                    b.len(),
                    weight.cols()
                )));
            }
            if let Some(&bad) = b.iter().find(|v| !v.is_finite()) {
                return Err(StampError::Data(format!("non-finite bias entry {bad}")));
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &ActivationMatrix {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Where the bias enters relative to the inverse sequence transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasMode {
    /// Invert the transform first, then add the plain bias to every token.
    InvertThenBias,
    /// Add the sequence-transformed bias before inverting.
    TransformedBias,
}

/// Quantization switch: `Disabled` is a first-class sentinel so exactness
/// paths bypass rounding entirely.
#[derive(Debug, Clone)]
pub enum QuantMode {
    Disabled,
    Enabled(BitAllocation),
}

/// Full configuration for a stamped linear layer.
#[derive(Debug, Clone)]
pub struct StampConfig {
    pub seq_transform: SequenceTransform,
    pub feat_transform: FeatureTransform,
    pub quant: QuantMode,
    pub granularity: QuantGranularity,
    pub bias_mode: BiasMode,
}

/// A linear layer bound to a stamp configuration, with the inverse feature
/// transform already folded into the weight.
#[derive(Debug, Clone)]
pub struct StampLinear {
    seq: SequenceTransform,
    feat: FeatureTransform,
    fused_weight: ActivationMatrix,
    bias: Option<RealVector>,
    bits: Option<Vec<u8>>,
    granularity: QuantGranularity,
    bias_mode: BiasMode,
    /// L * 1, the per-token bias scales for `TransformedBias`.
    ell: ActivationMatrix,
}

impl StampLinear {
    pub fn new(layer: &LinearLayer, cfg: &StampConfig) -> Result<Self> {
        let s = cfg.seq_transform.len();
        if cfg.feat_transform.width() != layer.d_in() {
            return Err(StampError::Dimension(format!(
                "feature transform width {} vs layer input {}",
                cfg.feat_transform.width(),
                layer.d_in()
            )));
        }
        cfg.granularity.validate()?;
        let bits = match &cfg.quant {
            QuantMode::Disabled => None,
            QuantMode::Enabled(alloc) => {
                if alloc.len() != s {
                    return Err(StampError::Dimension(format!(
                        "allocation length {} vs sequence length {s}",
                        alloc.len()
                    )));
                }
                Some(alloc.integer_bits()?)
            }
        };
        let ones = ActivationMatrix::from_fn(s, 1, |_, _| 1.0)?;
        Ok(Self {
            seq: cfg.seq_transform.clone(),
            feat: cfg.feat_transform,
            fused_weight: cfg.feat_transform.fold_into_weight(layer.weight())?,
            bias: layer.bias().map(|b| b.to_vec()),
            bits,
            granularity: cfg.granularity,
            bias_mode: cfg.bias_mode,
            ell: cfg.seq_transform.apply(&ones)?,
        })
    }

    /// Run the stamped forward pass.
    pub fn forward(&self, x: &ActivationMatrix) -> Result<ActivationMatrix> {
        let transformed = self.seq.apply(&self.feat.apply(x)?)?;
        let quantized = match &self.bits {
            None => transformed,
            Some(bits) => fake_quant(&transformed, bits, self.granularity)?,
        };
        let product = matmul(&quantized, &self.fused_weight)?;
        match (self.bias_mode, &self.bias) {
            (_, None) => self.seq.invert(&product),
            (BiasMode::InvertThenBias, Some(beta)) => {
                let out = self.seq.invert(&product)?;
                ActivationMatrix::from_fn(out.rows(), out.cols(), |i, j| out.get(i, j) + beta[j])
            }
            (BiasMode::TransformedBias, Some(beta)) => {
                let biased = ActivationMatrix::from_fn(product.rows(), product.cols(), |i, j| {
                    product.get(i, j) + self.ell.get(i, 0) * beta[j]
                })?;
                self.seq.invert(&biased)
            }
        }
    }
}

/// One-shot stamped forward pass.
pub fn stamp_linear(
    x: &ActivationMatrix,
    layer: &LinearLayer,
    cfg: &StampConfig,
) -> Result<ActivationMatrix> {
    StampLinear::new(layer, cfg)?.forward(x)
}

/// Plain full-precision layer: x W + bias broadcast over tokens.
pub fn reference_linear(x: &ActivationMatrix, layer: &LinearLayer) -> Result<ActivationMatrix> {
    let product = matmul(x, layer.weight())?;
    match layer.bias() {
        None => Ok(product),
        Some(beta) => ActivationMatrix::from_fn(product.rows(), product.cols(), |i, j| {
            product.get(i, j) + beta[j]
        }),
    }
}

/// Rank-1 sequence-transformed bias (L * 1) beta^T of shape s x d_out.
pub fn transformed_bias(t: &SequenceTransform, beta: &[f64]) -> Result<ActivationMatrix> {
    let ones = ActivationMatrix::from_fn(t.len(), 1, |_, _| 1.0)?;
    let ell = t.apply(&ones)?;
    ActivationMatrix::from_fn(t.len(), beta.len(), |i, j| ell.get(i, 0) * beta[j])
}
