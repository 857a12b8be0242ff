//! Simulated integer quantization.
//!
//! Asymmetric min-max quantization with one (step, offset) pair per group, a
//! group being a whole token row (per-token) or a contiguous block of
//! features inside a row (per-block). Bit widths are per token. The scheme
//! is chosen so that clamping is inactive on the data the spec was fitted
//! on: step = range / (2^bits - 1), offset = round(-min / step).
//!
//! Rounding is ties-to-even everywhere. A zero-range group stores its
//! constant value and uses step 1, offset 0, so dequantization reproduces
//! the constant exactly.

use crate::error::{Result, StampError};
use crate::tensor::{frobenius_norm_sq, ActivationMatrix};

/// Quantization group shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantGranularity {
    /// One (step, offset) pair per token row.
    PerToken,
    /// One pair per contiguous block of features; the last block may be short.
    PerBlock(usize),
}

impl QuantGranularity {
    pub fn validate(&self) -> Result<()> {
        if let QuantGranularity::PerBlock(0) = self {
            return Err(StampError::Config("block size must be >= 1".into()));
        }
        Ok(())
    }

    fn groups_per_row(&self, cols: usize) -> usize {
        match *self {
            QuantGranularity::PerToken => 1,
            QuantGranularity::PerBlock(b) => cols.div_ceil(b),
        }
    }

    fn group_range(&self, cols: usize, g: usize) -> (usize, usize) {
        match *self {
            QuantGranularity::PerToken => (0, cols),
            QuantGranularity::PerBlock(b) => (g * b, ((g + 1) * b).min(cols)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GroupParams {
    step: f64,
    offset: i64,
    /// Set for zero-range groups: the stored group minimum.
    constant: Option<f64>,
}

/// Fitted quantization parameters for one activation matrix shape.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantSpec {
    granularity: QuantGranularity,
    bits: Vec<u8>,
    rows: usize,
    cols: usize,
    groups: Vec<GroupParams>,
}

impl QuantSpec {
    pub fn granularity(&self) -> QuantGranularity {
        self.granularity
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn groups_per_row(&self) -> usize {
        self.granularity.groups_per_row(self.cols)
    }

    /// Step size of group `g` in row `i`.
    pub fn step(&self, row: usize, g: usize) -> f64 {
        self.groups[row * self.groups_per_row() + g].step
    }

    /// Integer zero point of group `g` in row `i`.
    pub fn offset(&self, row: usize, g: usize) -> i64 {
        self.groups[row * self.groups_per_row() + g].offset
    }

    /// Stored constant for a zero-range group, if any.
    pub fn constant(&self, row: usize, g: usize) -> Option<f64> {
        self.groups[row * self.groups_per_row() + g].constant
    }
}

/// Integer codes plus the spec that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    codes: Vec<u16>,
    spec: QuantSpec,
}

impl QuantizedTensor {
    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn code(&self, row: usize, col: usize) -> u16 {
        self.codes[row * self.spec.cols + col]
    }

    pub fn spec(&self) -> &QuantSpec {
        &self.spec
    }
}

fn check_bits(bits: &[u8], rows: usize) -> Result<()> {
    if bits.len() != rows {
        return Err(StampError::Dimension(format!(
            "bit vector length {} vs {} rows",
            bits.len(),
            rows
        )));
    }
    if let Some(&b) = bits.iter().find(|&&b| !(1..=16).contains(&b)) {
        return Err(StampError::Config(format!("bit width {b} outside 1..=16")));
    }
    Ok(())
}

/// Fit min-max (step, offset) pairs for every quantization group of `x`.
pub fn fit_spec(
    x: &ActivationMatrix,
    bits: &[u8],
    granularity: QuantGranularity,
) -> Result<QuantSpec> {
    granularity.validate()?;
    check_bits(bits, x.rows())?;
    let gpr = granularity.groups_per_row(x.cols());
    let mut groups = Vec::with_capacity(x.rows() * gpr);
    for (i, &row_bits) in bits.iter().enumerate() {
        let row = x.row(i);
        let levels = ((1u32 << row_bits) - 1) as f64;
        for g in 0..gpr {
            let (lo, hi) = granularity.group_range(x.cols(), g);
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &v in &row[lo..hi] {
                min = min.min(v);
                max = max.max(v);
            }
            let range = max - min;
            groups.push(if range == 0.0 {
                GroupParams {
                    step: 1.0,
                    offset: 0,
                    constant: Some(min),
                }
            } else {
                let step = range / levels;
                GroupParams {
                    step,
                    offset: (-min / step).round_ties_even() as i64,
                    constant: None,
                }
            });
        }
    }
    Ok(QuantSpec {
        granularity,
        bits: bits.to_vec(),
        rows: x.rows(),
        cols: x.cols(),
        groups,
    })
}

/// Quantize to integer codes: clamp(round(x/step) + offset, 0, 2^bits - 1).
pub fn quantize(x: &ActivationMatrix, spec: &QuantSpec) -> Result<QuantizedTensor> {
    if x.rows() != spec.rows || x.cols() != spec.cols {
        return Err(StampError::Dimension(format!(
            "matrix {}x{} vs spec {}x{}",
            x.rows(),
            x.cols(),
            spec.rows,
            spec.cols
        )));
    }
    let gpr = spec.groups_per_row();
    let mut codes = Vec::with_capacity(x.rows() * x.cols());
    for i in 0..x.rows() {
        let qmax = ((1u32 << spec.bits[i]) - 1) as f64;
        for g in 0..gpr {
            let params = &spec.groups[i * gpr + g];
            let (lo, hi) = spec.granularity.group_range(spec.cols, g);
            for &v in &x.row(i)[lo..hi] {
                let shifted = match params.constant {
                    Some(c) => (v - c) / params.step,
                    None => v / params.step,
                };
                let code = (shifted.round_ties_even() + params.offset as f64).clamp(0.0, qmax);
                codes.push(code as u16);
            }
        }
    }
    Ok(QuantizedTensor {
        codes,
        spec: spec.clone(),
    })
}

/// Map integer codes back to the real domain: (code - offset) * step.
pub fn dequantize(q: &QuantizedTensor) -> ActivationMatrix {
    let spec = &q.spec;
    let gpr = spec.groups_per_row();
    let mut data = Vec::with_capacity(spec.rows * spec.cols);
    for i in 0..spec.rows {
        for g in 0..gpr {
            let params = &spec.groups[i * gpr + g];
            let (lo, hi) = spec.granularity.group_range(spec.cols, g);
            for col in lo..hi {
                let code = q.codes[i * spec.cols + col] as f64;
                let v = match params.constant {
                    Some(c) => c + code * params.step,
                    None => (code - params.offset as f64) * params.step,
                };
                data.push(v);
            }
        }
    }
    ActivationMatrix::from_vec(spec.rows, spec.cols, data)
        .expect("dequantized values are finite by construction")
}

/// Quantize-dequantize round trip with a freshly fitted spec.
pub fn fake_quant(
    x: &ActivationMatrix,
    bits: &[u8],
    granularity: QuantGranularity,
) -> Result<ActivationMatrix> {
    let spec = fit_spec(x, bits, granularity)?;
    Ok(dequantize(&quantize(x, &spec)?))
}

/// Squared Frobenius norm of the fake-quantization residual.
pub fn quant_error(
    x: &ActivationMatrix,
    bits: &[u8],
    granularity: QuantGranularity,
) -> Result<f64> {
    let fq = fake_quant(x, bits, granularity)?;
    Ok(frobenius_norm_sq(&fq.sub(x)?))
}

/// Per-token squared residual norms of the fake-quantization error.
pub fn per_token_quant_error(
    x: &ActivationMatrix,
    bits: &[u8],
    granularity: QuantGranularity,
) -> Result<Vec<f64>> {
    let fq = fake_quant(x, bits, granularity)?;
    Ok((0..x.rows())
        .map(|i| {
            fq.row(i)
                .iter()
                .zip(x.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect())
}

/// Signal-to-quantization-noise ratio in dB: 10*log10(|ref|^2 / |ref-test|^2).
///
/// Returns +inf when the residual is exactly zero.
pub fn sqnr_db(reference: &ActivationMatrix, test: &ActivationMatrix) -> Result<f64> {
    let diff = reference.sub(test)?;
    let noise = frobenius_norm_sq(&diff);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (frobenius_norm_sq(reference) / noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::CounterRng;

    fn row_matrix(values: &[f64]) -> ActivationMatrix {
        ActivationMatrix::from_vec(1, values.len(), values.to_vec()).unwrap()
    }

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> ActivationMatrix {
        let rng = CounterRng::new(seed);
        ActivationMatrix::from_fn(rows, cols, |i, j| rng.normal((i * cols + j) as u64)).unwrap()
    }

    #[test]
    fn fit_simple_ramp() {
        let x = row_matrix(&[0.0, 1.0, 2.0, 3.0]);
        let spec = fit_spec(&x, &[2], QuantGranularity::PerToken).unwrap();
        assert_eq!(spec.step(0, 0), 1.0);
        assert_eq!(spec.offset(0, 0), 0);
        // Re-encode: no clipping, codes on the grid.
        let q = quantize(&x, &spec).unwrap();
        assert_eq!(q.codes(), &[0, 1, 2, 3]);
    }

    #[test]
    fn fit_constant_row_is_exact() {
        let x = row_matrix(&[5.0, 5.0, 5.0, 5.0]);
        let spec = fit_spec(&x, &[4], QuantGranularity::PerToken).unwrap();
        assert_eq!(spec.step(0, 0), 1.0);
        assert_eq!(spec.offset(0, 0), 0);
        assert_eq!(spec.constant(0, 0), Some(5.0));
        let q = quantize(&x, &spec).unwrap();
        assert!(q.codes().iter().all(|&c| c == q.codes()[0]));
        let back = dequantize(&q);
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn fit_symmetric_pair_offset_rounds_ties_to_even() {
        let x = row_matrix(&[-1.0, 1.0]);
        let spec = fit_spec(&x, &[3], QuantGranularity::PerToken).unwrap();
        assert!((spec.step(0, 0) - 2.0 / 7.0).abs() < 1e-15);
        // -min/step = 3.5 rounds to 4 under ties-to-even.
        assert_eq!(spec.offset(0, 0), 4);
        // Decode of encoded endpoints stays within half a step.
        let q = quantize(&x, &spec).unwrap();
        let back = dequantize(&q);
        let half = spec.step(0, 0) / 2.0 + 1e-15;
        assert!((back.get(0, 0) - -1.0).abs() <= half);
        assert!((back.get(0, 1) - 1.0).abs() <= half);
    }

    #[test]
    fn quantize_clamps_below_fitted_range() {
        let fit_on = row_matrix(&[0.0, 1.0, 2.0, 3.0]);
        let spec = fit_spec(&fit_on, &[2], QuantGranularity::PerToken).unwrap();
        let q = quantize(&row_matrix(&[-5.0, 0.5, 9.0, 3.0]), &spec).unwrap();
        assert_eq!(q.code(0, 0), 0);
        assert_eq!(q.code(0, 2), 3);
    }

    #[test]
    fn quantize_matches_scalar_oracle() {
        let x = random_matrix(17, 1, 32);
        let spec = fit_spec(&x, &[4], QuantGranularity::PerToken).unwrap();
        let q = quantize(&x, &spec).unwrap();
        let (step, z) = (spec.step(0, 0), spec.offset(0, 0));
        for j in 0..32 {
            let want = ((x.get(0, j) / step).round_ties_even() + z as f64).clamp(0.0, 15.0);
            assert_eq!(q.code(0, j) as f64, want, "col {j}");
        }
    }

    #[test]
    fn dequantize_examples() {
        let x = row_matrix(&[0.0, 1.0, 2.0, 3.0]);
        let spec = fit_spec(&x, &[2], QuantGranularity::PerToken).unwrap();
        let q = quantize(&x, &spec).unwrap();
        assert_eq!(dequantize(&q).data(), x.data());
    }

    #[test]
    fn codes_at_the_offset_decode_to_zero() {
        let x = row_matrix(&[-1.0, 1.0]);
        let spec = fit_spec(&x, &[3], QuantGranularity::PerToken).unwrap();
        let zeros = row_matrix(&[0.0, 0.0]);
        let q = quantize(&zeros, &spec).unwrap();
        assert!(q.codes().iter().all(|&c| c as i64 == spec.offset(0, 0)));
        assert_eq!(dequantize(&q).data(), zeros.data());
    }

    #[test]
    fn requantizing_dequantized_reproduces_codes() {
        let x = random_matrix(3, 8, 16);
        let spec = fit_spec(&x, &[5; 8], QuantGranularity::PerBlock(5)).unwrap();
        let q = quantize(&x, &spec).unwrap();
        let q2 = quantize(&dequantize(&q), &spec).unwrap();
        assert_eq!(q.codes(), q2.codes());
    }

    #[test]
    fn fake_quant_binary_example() {
        let x = row_matrix(&[0.0, 0.4, 1.0]);
        let fq = fake_quant(&x, &[1], QuantGranularity::PerToken).unwrap();
        assert_eq!(fq.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn fake_quant_error_within_half_step_per_group() {
        let x = random_matrix(29, 32, 64);
        let bits = vec![8u8; 32];
        let gran = QuantGranularity::PerBlock(16);
        let spec = fit_spec(&x, &bits, gran).unwrap();
        let fq = fake_quant(&x, &bits, gran).unwrap();
        for i in 0..32 {
            for g in 0..spec.groups_per_row() {
                let bound = spec.step(i, g) / 2.0 * (1.0 + 1e-12);
                for j in g * 16..((g + 1) * 16).min(64) {
                    let err = (fq.get(i, j) - x.get(i, j)).abs();
                    assert!(err <= bound, "row {i} col {j}: err {err} > {bound}");
                }
            }
        }
    }

    #[test]
    fn zero_clipping_on_fitted_data() {
        // Removing the clamp must change no code when quantizing the fit data.
        let x = random_matrix(101, 16, 24);
        let spec = fit_spec(&x, &[3; 16], QuantGranularity::PerToken).unwrap();
        let q = quantize(&x, &spec).unwrap();
        for i in 0..16 {
            let (step, z) = (spec.step(i, 0), spec.offset(i, 0));
            for j in 0..24 {
                let unclamped = (x.get(i, j) / step).round_ties_even() + z as f64;
                assert_eq!(q.code(i, j) as f64, unclamped, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn quant_error_zero_on_grid_aligned_input() {
        let x = row_matrix(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(
            quant_error(&x, &[2], QuantGranularity::PerToken).unwrap(),
            0.0
        );
    }

    #[test]
    fn quant_error_is_definitionally_consistent() {
        let x = random_matrix(5, 6, 10);
        let bits = vec![3u8; 6];
        let fq = fake_quant(&x, &bits, QuantGranularity::PerToken).unwrap();
        let direct = frobenius_norm_sq(&fq.sub(&x).unwrap());
        let via_op = quant_error(&x, &bits, QuantGranularity::PerToken).unwrap();
        assert_eq!(direct, via_op);
    }

    #[test]
    fn per_token_error_bounded_by_quarter_d_step_sq() {
        for seed in 0..100 {
            let x = random_matrix(1000 + seed, 1, 24);
            let bits = [4u8];
            let spec = fit_spec(&x, &bits, QuantGranularity::PerToken).unwrap();
            let err = per_token_quant_error(&x, &bits, QuantGranularity::PerToken).unwrap()[0];
            let bound = 24.0 / 4.0 * spec.step(0, 0).powi(2);
            assert!(err <= bound * (1.0 + 1e-12), "seed {seed}: {err} > {bound}");
        }
    }

    #[test]
    fn error_non_increasing_in_bit_width() {
        for seed in [1u64, 2, 3, 4, 5] {
            let x = random_matrix(seed, 4, 64);
            let mut prev = f64::INFINITY;
            for b in 2..=8u8 {
                let e = quant_error(&x, &[b; 4], QuantGranularity::PerToken).unwrap();
                assert!(e <= prev, "seed {seed} bits {b}: {e} > {prev}");
                prev = e;
            }
        }
    }

    #[test]
    fn per_block_with_large_block_equals_per_token() {
        let x = random_matrix(9, 8, 24);
        let bits = vec![4u8; 8];
        let a = fake_quant(&x, &bits, QuantGranularity::PerToken).unwrap();
        let b = fake_quant(&x, &bits, QuantGranularity::PerBlock(24)).unwrap();
        let c = fake_quant(&x, &bits, QuantGranularity::PerBlock(100)).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn total_error_bounded_by_step_sum() {
        let x = random_matrix(77, 16, 32);
        let bits = vec![5u8; 16];
        let spec = fit_spec(&x, &bits, QuantGranularity::PerToken).unwrap();
        let err = quant_error(&x, &bits, QuantGranularity::PerToken).unwrap();
        let bound: f64 = (0..16).map(|i| spec.step(i, 0).powi(2)).sum::<f64>() * 32.0 / 4.0;
        assert!(err <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn sqnr_sentinel_and_closed_forms() {
        let x = random_matrix(2, 4, 4);
        assert_eq!(sqnr_db(&x, &x).unwrap(), f64::INFINITY);
        let zero = ActivationMatrix::zeros(4, 4);
        assert!((sqnr_db(&x, &zero).unwrap() - 0.0).abs() < 1e-12);
        let scaled = ActivationMatrix::from_fn(4, 4, |i, j| x.get(i, j) * (1.0 + 1e-2)).unwrap();
        let got = sqnr_db(&x, &scaled).unwrap();
        assert!((got - 40.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn bit_width_bounds_are_enforced() {
        let x = row_matrix(&[1.0, 2.0]);
        assert!(fit_spec(&x, &[0], QuantGranularity::PerToken).is_err());
        assert!(fit_spec(&x, &[17], QuantGranularity::PerToken).is_err());
        assert!(fit_spec(&x, &[4, 4], QuantGranularity::PerToken).is_err());
        assert!(QuantGranularity::PerBlock(0).validate().is_err());
    }
}
