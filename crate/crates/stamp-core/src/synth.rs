//! Synthetic activation generation with controlled autocorrelation structure.
//!
//! Randomness comes from SplitMix64 run in counter mode: output `k` of a
//! stream is `mix64(seed + (k+1) * 0x9E3779B97F4A7C15)`, identical to the
//! k-th draw of the sequential SplitMix64 generator seeded with `seed`.
//! Every tensor element owns a fixed counter derived from its
//! (sample, token, feature) index, so generation is order-independent and
//! the integer stream is bit-identical across platforms. Gaussian variates
//! are produced from counter pairs via Box-Muller.

use crate::error::{Result, StampError};
use crate::tensor::ActivationMatrix;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Counter-mode SplitMix64 stream.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Raw 64-bit output at position `counter` of the stream.
    pub fn raw(&self, counter: u64) -> u64 {
        mix64(
            self.seed
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    /// Uniform draw in (0, 1] at position `counter`.
    pub fn uniform(&self, counter: u64) -> f64 {
        // 53 high bits, shifted into (0,1] so log() below is always defined.
        ((self.raw(counter) >> 11) as f64 + 1.0) / (1u64 << 53) as f64
    }

    /// Standard normal draw at `index`, consuming counters 2*index and 2*index+1.
    pub fn normal(&self, index: u64) -> f64 {
        let u1 = self.uniform(2 * index);
        let u2 = self.uniform(2 * index + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// What kind of synthetic activation tensor to draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// Stationary AR(1) along the sequence axis, unit marginal variance.
    Ar1 { rho: f64 },
    /// Separable AR(1) over a `height x width` token grid, flattened row-major.
    Grid2dAr1 {
        rho_h: f64,
        rho_w: f64,
        height: usize,
        width: usize,
    },
    /// Independent tokens; the leading `outlier_count` feature channels have
    /// standard deviation `outlier_sigma`, the rest `base_sigma`.
    OutlierChannels {
        base_sigma: f64,
        outlier_sigma: f64,
        outlier_count: usize,
    },
}

/// Full description of a synthetic dataset: structure, shape, and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub seq_len: usize,
    pub feat_dim: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.feat_dim == 0 {
            return Err(StampError::Config("empty shape".into()));
        }
        match self.kind {
            SynthKind::Ar1 { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(StampError::Config(format!(
                        "AR(1) requires 0 <= rho < 1, got {rho}"
                    )));
                }
            }
            SynthKind::Grid2dAr1 {
                rho_h,
                rho_w,
                height,
                width,
            } => {
                for rho in [rho_h, rho_w] {
                    if !(0.0..1.0).contains(&rho) {
                        return Err(StampError::Config(format!(
                            "grid AR(1) requires 0 <= rho < 1, got {rho}"
                        )));
                    }
                }
                if height * width != self.seq_len {
                    return Err(StampError::Config(format!(
                        "grid {height}x{width} does not flatten to seq_len {}",
                        self.seq_len
                    )));
                }
            }
            SynthKind::OutlierChannels {
                base_sigma,
                outlier_sigma,
                outlier_count,
            } => {
                if base_sigma <= 0.0 || outlier_sigma <= 0.0 {
                    return Err(StampError::Config("sigmas must be positive".into()));
                }
                if outlier_count > self.feat_dim {
                    return Err(StampError::Config(format!(
                        "outlier_count {outlier_count} exceeds feat_dim {}",
                        self.feat_dim
                    )));
                }
            }
        }
        Ok(())
    }
}

/// AR(1) coloring: y_0 = u_0, y_i = rho*y_{i-1} + sqrt(1-rho^2)*u_i, in place.
///
/// Maps an iid unit-variance stream to a stationary unit-variance process
/// with autocorrelation rho^|i-j|.
pub fn ar1_color(rho: f64, xs: &mut [f64]) {
    let w = (1.0 - rho * rho).sqrt();
    for i in 1..xs.len() {
        xs[i] = rho * xs[i - 1] + w * xs[i];
    }
}

fn ar1_color_lane(rho: f64, data: &mut [f64], start: usize, stride: usize, count: usize) {
    let mut lane = Vec::with_capacity(count);
    for k in 0..count {
        lane.push(data[start + k * stride]);
    }
    ar1_color(rho, &mut lane);
    for k in 0..count {
        data[start + k * stride] = lane[k];
    }
}

/// Draw `samples` activation matrices according to `spec`.
///
/// Deterministic for a fixed seed; sample `n` only reads counters derived
/// from `n`, so batches may be produced in any order or in parallel.
pub fn generate(spec: &SynthSpec, samples: usize) -> Result<Vec<ActivationMatrix>> {
    spec.validate()?;
    if samples == 0 {
        return Err(StampError::Config("need at least one sample".into()));
    }
    (0..samples).map(|n| generate_one(spec, n)).collect()
}

fn generate_one(spec: &SynthSpec, sample: usize) -> Result<ActivationMatrix> {
    let (s, d) = (spec.seq_len, spec.feat_dim);
    let rng = CounterRng::new(spec.seed);
    let noise = |i: usize, j: usize| rng.normal(((sample * s + i) * d + j) as u64);

    match spec.kind {
        SynthKind::Ar1 { rho } => {
            let mut cols: Vec<Vec<f64>> = (0..d)
                .map(|j| (0..s).map(|i| noise(i, j)).collect())
                .collect();
            for col in &mut cols {
                ar1_color(rho, col);
            }
            ActivationMatrix::from_fn(s, d, |i, j| cols[j][i])
        }
        SynthKind::Grid2dAr1 {
            rho_h,
            rho_w,
            height,
            width,
        } => {
            let mut data = vec![0.0; s * d];
            for i in 0..s {
                for j in 0..d {
                    data[i * d + j] = noise(i, j);
                }
            }
            // Color each feature channel separably over the grid:
            // along grid rows first, then along grid columns.
            for j in 0..d {
                for r in 0..height {
                    ar1_color_lane(rho_w, &mut data, (r * width) * d + j, d, width);
                }
                for c in 0..width {
                    ar1_color_lane(rho_h, &mut data, c * d + j, width * d, height);
                }
            }
            ActivationMatrix::from_vec(s, d, data)?.with_grid(height, width)
        }
        SynthKind::OutlierChannels {
            base_sigma,
            outlier_sigma,
            outlier_count,
        } => ActivationMatrix::from_fn(s, d, |i, j| {
            let sigma = if j < outlier_count {
                outlier_sigma
            } else {
                base_sigma
            };
            sigma * noise(i, j)
        }),
    }
}
