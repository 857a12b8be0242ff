//! Autocorrelation estimation, transformed token energies, the
//! energy-weighted error bound, and bit-allocation schemes.
//!
//! The error bound for a transformed, per-token min-max quantized activation
//! is (d/2) * sum_i e_i / (2^b_i - 1)^2 where e_i is the expected squared
//! norm of transformed token i. Allocation schemes trade bits across tokens
//! against that bound: the continuous optimum equalizes e_i / 2^(2 b_i),
//! integer allocations round it, and the two-level scheme keeps a fixed
//! number of leading tokens at high precision.

use crate::error::{Result, StampError};
use crate::tensor::{matmul, ActivationMatrix};
use crate::transform::SequenceTransform;

/// Average autocorrelation matrix S = E[X X^T] plus optional token energies.
#[derive(Debug, Clone)]
pub struct EnergyProfile {
    autocorr: ActivationMatrix,
    energies: Vec<f64>,
    sample_count: usize,
}

impl EnergyProfile {
    /// Wrap an externally supplied autocorrelation matrix. `sample_count`
    /// is recorded as zero since no samples were seen.
    pub fn from_autocorr(autocorr: ActivationMatrix) -> Result<Self> {
        let s = autocorr.rows();
        if autocorr.cols() != s {
            return Err(StampError::Dimension(format!(
                "autocorrelation matrix must be square, got {}x{}",
                s,
                autocorr.cols()
            )));
        }
        let scale = autocorr.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..s {
            for j in (i + 1)..s {
                if (autocorr.get(i, j) - autocorr.get(j, i)).abs() > 1e-9 * scale.max(1e-300) {
                    return Err(StampError::Data(format!(
                        "autocorrelation matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self {
            autocorr,
            energies: Vec::new(),
            sample_count: 0,
        })
    }

    pub fn autocorr(&self) -> &ActivationMatrix {
        &self.autocorr
    }

    /// Token energies under the transform chosen via [`EnergyProfile::with_energies`].
    /// Empty until a transform is chosen.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn seq_len(&self) -> usize {
        self.autocorr.rows()
    }

    /// Attach the energies of `transform` to this profile.
    pub fn with_energies(mut self, transform: &SequenceTransform) -> Result<Self> {
        self.energies = transformed_energies(&self, transform)?;
        Ok(self)
    }
}

/// Estimate S = (1/N) sum_n X_n X_n^T over identically shaped samples.
pub fn estimate_autocorr(samples: &[ActivationMatrix]) -> Result<EnergyProfile> {
    let first = samples
        .first()
        .ok_or_else(|| StampError::Data("need at least one sample".into()))?;
    let (s, d) = (first.rows(), first.cols());
    let mut acc = vec![0.0; s * s];
    for (n, x) in samples.iter().enumerate() {
        if x.rows() != s || x.cols() != d {
            return Err(StampError::Dimension(format!(
                "sample {n} is {}x{}, expected {s}x{d}",
                x.rows(),
                x.cols()
            )));
        }
        let xxt = matmul(x, &x.transpose())?;
        for (a, v) in acc.iter_mut().zip(xxt.data()) {
            *a += v;
        }
    }
    let inv_n = 1.0 / samples.len() as f64;
    for a in &mut acc {
        *a *= inv_n;
    }
    Ok(EnergyProfile {
        autocorr: ActivationMatrix::from_vec(s, s, acc)?,
        energies: Vec::new(),
        sample_count: samples.len(),
    })
}

/// Token energies e = diag(L S L^T) under `transform`.
///
/// Computed as two structured applications of the transform (L * S, then
/// L * (L S)^T), so no dense materialization is needed at any length.
/// Small negative values from floating-point noise are clamped to zero.
pub fn transformed_energies(
    profile: &EnergyProfile,
    transform: &SequenceTransform,
) -> Result<Vec<f64>> {
    let s = profile.seq_len();
    if transform.len() != s {
        return Err(StampError::Dimension(format!(
            "transform length {} vs profile length {s}",
            transform.len()
        )));
    }
    let ls = transform.apply(profile.autocorr())?;
    let lslt = transform.apply(&ls.transpose())?;
    let scale = profile
        .autocorr()
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut energies = Vec::with_capacity(s);
    for i in 0..s {
        let e = lslt.get(i, i);
        if e < -1e-9 * scale.max(1.0) {
            return Err(StampError::Numerical(format!(
                "negative transformed energy {e:e} at token {i}"
            )));
        }
        energies.push(e.max(0.0));
    }
    Ok(energies)
}

/// Bit-allocation scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationScheme {
    /// Same integer bit width everywhere.
    Uniform(u8),
    /// Real-valued optimum of the energy-weighted bound.
    OptimalContinuous,
    /// Token-wise rounding of a continuous allocation.
    Rounded,
    /// `n_hp` leading tokens at `b_hp` bits, the rest at `b_lp`.
    TwoLevel { n_hp: usize, b_hp: u8, b_lp: u8 },
}

/// Per-token bit widths under a total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BitAllocation {
    scheme: AllocationScheme,
    bits: Vec<f64>,
    budget: f64,
}

impl BitAllocation {
    /// Uniform allocation of `b` bits over `s` tokens.
    pub fn uniform(s: usize, b: u8) -> Result<Self> {
        if !(1..=16).contains(&b) {
            return Err(StampError::Config(format!("bit width {b} outside 1..=16")));
        }
        if s == 0 {
            return Err(StampError::Config("empty allocation".into()));
        }
        Ok(Self {
            scheme: AllocationScheme::Uniform(b),
            bits: vec![b as f64; s],
            budget: (s * b as usize) as f64,
        })
    }

    pub fn scheme(&self) -> AllocationScheme {
        self.scheme
    }

    pub fn bits(&self) -> &[f64] {
        &self.bits
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Total bits divided by token count.
    pub fn average_bits(&self) -> f64 {
        self.budget / self.bits.len() as f64
    }

    /// Integer per-token widths for the quantizer. Fails if any entry is not
    /// an integer in 1..=16.
    pub fn integer_bits(&self) -> Result<Vec<u8>> {
        self.bits
            .iter()
            .map(|&b| {
                if b.fract() != 0.0 || !(1.0..=16.0).contains(&b) {
                    Err(StampError::Allocation(format!(
                        "bit width {b} is not an integer in 1..=16"
                    )))
                } else {
                    Ok(b as u8)
                }
            })
            .collect()
    }
}

/// Energy-weighted error bound (d/2) * sum_i e_i / (2^b_i - 1)^2.
///
/// Returns +inf if any bit width is below 1.
pub fn energy_error_bound(energies: &[f64], bits: &[f64], d: usize) -> Result<f64> {
    if energies.len() != bits.len() {
        return Err(StampError::Dimension(format!(
            "{} energies vs {} bit widths",
            energies.len(),
            bits.len()
        )));
    }
    if let Some(&e) = energies.iter().find(|&&e| e < 0.0) {
        return Err(StampError::Data(format!("negative energy {e}")));
    }
    if bits.iter().any(|&b| b < 1.0) {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = energies
        .iter()
        .zip(bits)
        .map(|(&e, &b)| {
            let denom = b.exp2() - 1.0;
            e / (denom * denom)
        })
        .sum();
    Ok(d as f64 / 2.0 * sum)
}

/// Continuous allocation minimizing sum_i e_i / 2^(2 b_i) subject to
/// sum_i b_i = budget and b_i >= 1.
///
/// Closed form b_i = log2(sqrt(e_i)) + C with C chosen to meet the budget;
/// energies are floored at 1e-12 * max(e) before taking logs, and tokens
/// whose closed-form width falls below one bit are clamped to one bit with
/// the remaining budget redistributed over the rest (reverse water-filling).
pub fn optimal_bits_continuous(energies: &[f64], budget: f64) -> Result<BitAllocation> {
    let s = energies.len();
    if s == 0 {
        return Err(StampError::Allocation("empty energy vector".into()));
    }
    if budget.is_nan() || budget <= 0.0 {
        return Err(StampError::Allocation(format!(
            "budget {budget} must be positive"
        )));
    }
    let max_e = energies.iter().fold(f64::NEG_INFINITY, |m, &e| m.max(e));
    if max_e.is_nan() || max_e <= 0.0 {
        return Err(StampError::Allocation(
            "all token energies are zero or negative after the floor rule".into(),
        ));
    }
    if budget < s as f64 {
        return Err(StampError::Allocation(format!(
            "budget {budget} cannot give every one of {s} tokens at least 1 bit"
        )));
    }
    let floor = 1e-12 * max_e;
    let log_sqrt: Vec<f64> = energies
        .iter()
        .map(|&e| e.max(floor).sqrt().log2())
        .collect();

    let mut clamped = vec![false; s];
    let mut bits = vec![1.0; s];
    loop {
        let active: Vec<usize> = (0..s).filter(|&i| !clamped[i]).collect();
        if active.is_empty() {
            break;
        }
        let remaining = budget - (s - active.len()) as f64;
        let c =
            (remaining - active.iter().map(|&i| log_sqrt[i]).sum::<f64>()) / active.len() as f64;
        let mut newly_clamped = false;
        for &i in &active {
            let b = log_sqrt[i] + c;
            if b < 1.0 {
                clamped[i] = true;
                newly_clamped = true;
            } else {
                bits[i] = b;
            }
        }
        if !newly_clamped {
            break;
        }
    }

    Ok(BitAllocation {
        scheme: AllocationScheme::OptimalContinuous,
        bits,
        budget,
    })
}

/// Round a continuous allocation token-wise with ties-to-even.
///
/// No rebalancing: the rounded total may differ from the original budget,
/// and the reported budget is the rounded sum.
pub fn round_bits(alloc: &BitAllocation) -> BitAllocation {
    let bits: Vec<f64> = alloc.bits.iter().map(|b| b.round_ties_even()).collect();
    let budget = bits.iter().sum();
    BitAllocation {
        scheme: AllocationScheme::Rounded,
        bits,
        budget,
    }
}

/// Two-level scheme: the first `n_hp` tokens at `b_hp` bits, the rest at `b_lp`.
pub fn two_level_allocation(s: usize, n_hp: usize, b_hp: u8, b_lp: u8) -> Result<BitAllocation> {
    if s == 0 {
        return Err(StampError::Config("empty allocation".into()));
    }
    if n_hp > s {
        return Err(StampError::Config(format!(
            "{n_hp} high-precision tokens exceed sequence length {s}"
        )));
    }
    for b in [b_hp, b_lp] {
        if !(1..=16).contains(&b) {
            return Err(StampError::Config(format!("bit width {b} outside 1..=16")));
        }
    }
    if b_hp < b_lp {
        return Err(StampError::Config(format!(
            "high-precision width {b_hp} below low-precision width {b_lp}"
        )));
    }
    let mut bits = vec![b_hp as f64; n_hp];
    bits.extend(std::iter::repeat_n(b_lp as f64, s - n_hp));
    let budget = (n_hp * b_hp as usize + (s - n_hp) * b_lp as usize) as f64;
    Ok(BitAllocation {
        scheme: AllocationScheme::TwoLevel { n_hp, b_hp, b_lp },
        bits,
        budget,
    })
}

/// The two bound regimes compared in the mixed-precision analysis:
/// uniform energy at uniform bits versus fully concentrated energy at the
/// optimal allocation, both for the same total budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundComparison {
    pub uniform_bound: f64,
    pub concentrated_bound: f64,
}

/// Evaluate (d s / 2) * 2^(log2 mean(lambda^2) - 2 B/s) against
/// (d s / 2) * 2^(mean(log2 lambda^2) - 2 B/s). By Jensen's inequality the
/// concentrated bound never exceeds the uniform one.
pub fn compare_uniform_vs_concentrated(
    eigenvalues: &[f64],
    budget_per_token: f64,
    d: usize,
) -> Result<BoundComparison> {
    let s = eigenvalues.len();
    if s == 0 {
        return Err(StampError::Allocation("empty spectrum".into()));
    }
    if let Some(&l) = eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(StampError::Allocation(format!(
            "spectrum must be positive, got {l}"
        )));
    }
    let mean_sq = eigenvalues.iter().map(|l| l * l).sum::<f64>() / s as f64;
    let mean_log_sq = eigenvalues.iter().map(|l| (l * l).log2()).sum::<f64>() / s as f64;
    let front = d as f64 * s as f64 / 2.0;
    Ok(BoundComparison {
        uniform_bound: front * (mean_sq.log2() - 2.0 * budget_per_token).exp2(),
        concentrated_bound: front * (mean_log_sq - 2.0 * budget_per_token).exp2(),
    })
}
