//! Embedded property suite behind the `selfcheck` subcommand.
//!
//! Runs the core mathematical properties of the crate (transform
//! orthogonality and invertibility, the energy-weighted error bound,
//! allocation optimality, the Jensen bound comparison, layer exactness,
//! quantizer exactness and the two-level bit-width constants) and prints one
//! PASS/FAIL line per property. Exits nonzero if any property fails.

use crate::energy::{
    compare_uniform_vs_concentrated, energy_error_bound, estimate_autocorr,
    optimal_bits_continuous, transformed_energies, two_level_allocation, BitAllocation,
};
use crate::error::Result;
use crate::layer::{reference_linear, stamp_linear, BiasMode, LinearLayer, QuantMode, StampConfig};
use crate::quant::{dequantize, fake_quant, fit_spec, quant_error, quantize, QuantGranularity};
use crate::synth::CounterRng;
use crate::tensor::{frobenius_norm_sq, matmul, ActivationMatrix};
use crate::transform::{klt_from_autocorr, FeatureTransform, SequenceTransform};

pub struct PropertyResult {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn random_matrix(seed: u64, rows: usize, cols: usize) -> ActivationMatrix {
    let rng = CounterRng::new(seed);
    ActivationMatrix::from_fn(rows, cols, |i, j| rng.normal((i * cols + j) as u64))
        .expect("gaussian draws are finite")
}

fn grid_for(s: usize) -> (usize, usize) {
    match s {
        4 => (2, 2),
        8 => (2, 4),
        16 => (4, 4),
        64 => (8, 8),
        256 => (16, 16),
        other => (2, other / 2),
    }
}

/// Every transform family at sequence length `s`, KLT calibrated on a
/// seeded random PSD matrix.
fn transform_family(s: usize, seed: u64) -> Result<Vec<SequenceTransform>> {
    let m = random_matrix(seed, s, s);
    let psd = {
        let g = matmul(&m, &m.transpose())?;
        ActivationMatrix::from_fn(s, s, |i, j| g.get(i, j) / s as f64)?
    };
    let (h, w) = grid_for(s);
    Ok(vec![
        SequenceTransform::identity(s),
        klt_from_autocorr(&psd)?,
        SequenceTransform::dct(s),
        SequenceTransform::wht(s)?,
        SequenceTransform::dwt1d(s, SequenceTransform::default_dwt1d_levels(s))?,
        SequenceTransform::dwt2d(h, w, SequenceTransform::default_dwt2d_levels(h, w))?,
    ])
}

fn check_transform_orthogonality() -> std::result::Result<(), String> {
    for s in [4usize, 8, 64, 256] {
        for t in transform_family(s, 1000 + s as u64).map_err(|e| e.to_string())? {
            let l = t.materialize().map_err(|e| e.to_string())?;
            let gram = matmul(&l, &l.transpose()).map_err(|e| e.to_string())?;
            let dev = gram.max_abs_diff(&ActivationMatrix::identity(s));
            if dev >= 1e-10 {
                return Err(format!("{} at s={s}: |LL^T - I|_max = {dev:e}", t.name()));
            }
        }
    }
    Ok(())
}

fn check_transform_roundtrip() -> std::result::Result<(), String> {
    for s in [4usize, 8, 64, 256] {
        let family = transform_family(s, 2000 + s as u64).map_err(|e| e.to_string())?;
        for seed in 0..20u64 {
            let x = random_matrix(3000 + seed * 7 + s as u64, s, 8);
            for t in &family {
                let rt = t
                    .apply(&x)
                    .and_then(|y| t.invert(&y))
                    .map_err(|e| e.to_string())?;
                let dev = rt.max_abs_diff(&x);
                if dev >= 1e-10 {
                    return Err(format!(
                        "{} at s={s} seed {seed}: round-trip error {dev:e}",
                        t.name()
                    ));
                }
            }
        }
    }
    Ok(())
}

fn check_energy_bound_validity() -> std::result::Result<(), String> {
    let (s, d, batch_size) = (64usize, 32usize, 4usize);
    let uniform4 = BitAllocation::uniform(s, 4).map_err(|e| e.to_string())?;
    let twolevel = two_level_allocation(s, 8, 8, 4).map_err(|e| e.to_string())?;
    for batch_idx in 0..100u64 {
        let batch: Vec<ActivationMatrix> = (0..batch_size)
            .map(|k| random_matrix(batch_seed(batch_idx, k as u64), s, d))
            .collect();
        let profile = estimate_autocorr(&batch).map_err(|e| e.to_string())?;
        let mut family = transform_family(s, 4000 + batch_idx).map_err(|e| e.to_string())?;
        family[1] = klt_from_autocorr(profile.autocorr()).map_err(|e| e.to_string())?;
        for t in &family {
            let energies = transformed_energies(&profile, t).map_err(|e| e.to_string())?;
            for alloc in [&uniform4, &twolevel] {
                let bits = alloc.integer_bits().map_err(|e| e.to_string())?;
                let bound =
                    energy_error_bound(&energies, alloc.bits(), d).map_err(|e| e.to_string())?;
                let mut measured = 0.0;
                for x in &batch {
                    let z = t.apply(x).map_err(|e| e.to_string())?;
                    measured += quant_error(&z, &bits, QuantGranularity::PerToken)
                        .map_err(|e| e.to_string())?
                        / batch.len() as f64;
                }
                if measured > bound * (1.0 + 1e-6) {
                    return Err(format!(
                        "{} batch {batch_idx}: measured {measured:e} > bound {bound:e}",
                        t.name()
                    ));
                }
            }
        }
    }
    Ok(())
}

fn batch_seed(batch: u64, sample: u64) -> u64 {
    0x5EED_0000 + batch * 131 + sample
}

fn random_energies(seed: u64, s: usize) -> Vec<f64> {
    let rng = CounterRng::new(seed);
    (0..s).map(|i| 0.5 + 8.0 * rng.uniform(i as u64)).collect()
}

fn check_allocation_equal_ratio() -> std::result::Result<(), String> {
    let s = 16;
    for trial in 0..50u64 {
        let e = random_energies(5000 + trial, s);
        let alloc = optimal_bits_continuous(&e, 4.0 * s as f64).map_err(|err| err.to_string())?;
        let ratios: Vec<f64> = e
            .iter()
            .zip(alloc.bits())
            .map(|(&e, &b)| e / (2.0 * b).exp2())
            .collect();
        for (i, r) in ratios.iter().enumerate() {
            if (r - ratios[0]).abs() > 1e-9 * ratios[0].abs() {
                return Err(format!(
                    "trial {trial}: ratio[{i}] {r:e} vs ratio[0] {:e}",
                    ratios[0]
                ));
            }
        }
        let total: f64 = alloc.bits().iter().sum();
        if (total - 4.0 * s as f64).abs() > 1e-9 {
            return Err(format!("trial {trial}: budget drift {total}"));
        }
    }
    Ok(())
}

fn check_allocation_optimality() -> std::result::Result<(), String> {
    let s = 16;
    let rng = CounterRng::new(6000);
    for trial in 0..50u64 {
        let e = random_energies(7000 + trial, s);
        let alloc = optimal_bits_continuous(&e, 4.0 * s as f64).map_err(|err| err.to_string())?;
        let objective = |bits: &[f64]| -> f64 {
            e.iter()
                .zip(bits)
                .map(|(&e, &b)| e / (2.0 * b).exp2())
                .sum()
        };
        let best = objective(alloc.bits());
        for p in 0..1000u64 {
            // Zero-sum perturbation with infinity norm at most 1.
            let raw: Vec<f64> = (0..s)
                .map(|i| rng.uniform(trial * 1_000_000 + p * 100 + i as u64) - 0.5)
                .collect();
            let mean = raw.iter().sum::<f64>() / s as f64;
            let mut delta: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            let inf = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if inf > 0.0 {
                for v in &mut delta {
                    *v /= inf.max(1.0);
                }
            }
            let perturbed: Vec<f64> = alloc
                .bits()
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + d)
                .collect();
            if objective(&perturbed) < best * (1.0 - 1e-12) {
                return Err(format!("trial {trial} perturbation {p} beat the optimum"));
            }
        }
    }
    Ok(())
}

fn check_jensen_comparison() -> std::result::Result<(), String> {
    let rng = CounterRng::new(8000);
    for trial in 0..1000u64 {
        let spectrum: Vec<f64> = (0..12)
            .map(|i| 1e-3 + 10.0 * rng.uniform(trial * 16 + i))
            .collect();
        let cmp = compare_uniform_vs_concentrated(&spectrum, 4.0, 8).map_err(|e| e.to_string())?;
        if cmp.concentrated_bound > cmp.uniform_bound * (1.0 + 1e-12) {
            return Err(format!(
                "trial {trial}: concentrated {:e} > uniform {:e}",
                cmp.concentrated_bound, cmp.uniform_bound
            ));
        }
    }
    for k in 1..=5u64 {
        let spectrum = vec![0.5 * k as f64; 9];
        let cmp = compare_uniform_vs_concentrated(&spectrum, 3.0, 2).map_err(|e| e.to_string())?;
        let rel = (cmp.uniform_bound - cmp.concentrated_bound).abs() / cmp.uniform_bound;
        if rel > 1e-12 {
            return Err(format!("constant spectrum {k}: bounds differ by {rel:e}"));
        }
    }
    Ok(())
}

fn check_layer_exactness() -> std::result::Result<(), String> {
    let (s, d_in, d_out) = (16usize, 8usize, 6usize);
    for seed in 0..20u64 {
        let x = random_matrix(9000 + seed, s, d_in);
        let w = random_matrix(9100 + seed, d_in, d_out);
        let beta: Vec<f64> = (0..d_out).map(|j| (j as f64 - 2.0) / 3.0).collect();
        let layer = LinearLayer::new(w, Some(beta)).map_err(|e| e.to_string())?;
        let reference = reference_linear(&x, &layer).map_err(|e| e.to_string())?;
        let scale = frobenius_norm_sq(&reference).sqrt();
        let family = transform_family(s, 9200 + seed).map_err(|e| e.to_string())?;
        let feat = if seed % 2 == 0 {
            FeatureTransform::identity(d_in)
        } else {
            FeatureTransform::hadamard(d_in).map_err(|e| e.to_string())?
        };
        for t in family {
            for bias_mode in [BiasMode::InvertThenBias, BiasMode::TransformedBias] {
                let cfg = StampConfig {
                    seq_transform: t.clone(),
                    feat_transform: feat,
                    quant: QuantMode::Disabled,
                    granularity: QuantGranularity::PerToken,
                    bias_mode,
                };
                let out = stamp_linear(&x, &layer, &cfg).map_err(|e| e.to_string())?;
                let dev = out.max_abs_diff(&reference);
                if dev >= 1e-10 * scale.max(1.0) {
                    return Err(format!(
                        "{} seed {seed} {bias_mode:?}: deviation {dev:e}",
                        t.name()
                    ));
                }
            }
        }
    }
    Ok(())
}

fn check_two_level_constants() -> std::result::Result<(), String> {
    let a = two_level_allocation(4096, 64, 8, 4).map_err(|e| e.to_string())?;
    if a.average_bits() != 4.0625 {
        return Err(format!("4096-token average {} != 4.0625", a.average_bits()));
    }
    let b = two_level_allocation(2048, 64, 8, 4).map_err(|e| e.to_string())?;
    if b.average_bits() != 4.125 {
        return Err(format!("2048-token average {} != 4.125", b.average_bits()));
    }
    Ok(())
}

fn check_quantizer_exactness() -> std::result::Result<(), String> {
    // Grid-aligned input is reproduced exactly.
    let ramp =
        ActivationMatrix::from_vec(1, 4, vec![0.0, 1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    let fq = fake_quant(&ramp, &[2], QuantGranularity::PerToken).map_err(|e| e.to_string())?;
    if fq.data() != ramp.data() {
        return Err("grid-aligned input not reproduced".into());
    }
    // Constant rows decode exactly through the stored-minimum rule.
    let constant = ActivationMatrix::from_vec(1, 4, vec![5.5; 4]).map_err(|e| e.to_string())?;
    let fq = fake_quant(&constant, &[4], QuantGranularity::PerToken).map_err(|e| e.to_string())?;
    if fq.data() != constant.data() {
        return Err("zero-range group not exact".into());
    }
    // Requantizing a dequantized tensor reproduces the codes.
    let x = random_matrix(11000, 8, 16);
    let spec = fit_spec(&x, &[5; 8], QuantGranularity::PerBlock(6)).map_err(|e| e.to_string())?;
    let q = quantize(&x, &spec).map_err(|e| e.to_string())?;
    let q2 = quantize(&dequantize(&q), &spec).map_err(|e| e.to_string())?;
    if q.codes() != q2.codes() {
        return Err("requantization changed codes".into());
    }
    Ok(())
}

/// Run every property; results in print order.
pub fn run_properties() -> Vec<PropertyResult> {
    vec![
        PropertyResult {
            name: "transform-orthogonality",
            outcome: check_transform_orthogonality(),
        },
        PropertyResult {
            name: "transform-roundtrip",
            outcome: check_transform_roundtrip(),
        },
        PropertyResult {
            name: "energy-bound-validity",
            outcome: check_energy_bound_validity(),
        },
        PropertyResult {
            name: "allocation-equal-ratio",
            outcome: check_allocation_equal_ratio(),
        },
        PropertyResult {
            name: "allocation-optimality",
            outcome: check_allocation_optimality(),
        },
        PropertyResult {
            name: "jensen-concentration",
            outcome: check_jensen_comparison(),
        },
        PropertyResult {
            name: "layer-exactness",
            outcome: check_layer_exactness(),
        },
        PropertyResult {
            name: "two-level-constants",
            outcome: check_two_level_constants(),
        },
        PropertyResult {
            name: "quantizer-exactness",
            outcome: check_quantizer_exactness(),
        },
    ]
}

/// `selfcheck` subcommand: print one line per property, exit nonzero on
/// any failure.
pub fn cmd_selfcheck() -> i32 {
    let results = run_properties();
    let mut failures = 0;
    for r in &results {
        match &r.outcome {
            Ok(()) => println!("PASS {}", r.name),
            Err(detail) => {
                println!("FAIL {}: {detail}", r.name);
                failures += 1;
            }
        }
    }
    println!(
        "selfcheck: {}/{} properties passed",
        results.len() - failures,
        results.len()
    );
    if failures == 0 {
        0
    } else {
        1
    }
}
