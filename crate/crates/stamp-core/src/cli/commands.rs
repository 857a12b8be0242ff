//! The experiment subcommands: energy, bound, pareto, stamp-layer,
//! generate, ingest.
//!
//! Every command validates its full configuration before computing anything,
//! writes CSV through [`crate::io::CsvTable`], and prints a short human
//! summary on stdout. Given the same config and seed the CSV bytes are
//! identical across runs.

use std::path::Path;

use crate::cli::config::{AllocChoice, InputSource, ResolvedExperiment, TransformChoice};
use crate::energy::{estimate_autocorr, transformed_energies, BitAllocation};
use crate::error::{Result, StampError};
use crate::io::{fmt_f64, read_tensor, write_tensor, CsvTable};
use crate::layer::{reference_linear, BiasMode, LinearLayer, QuantMode, StampConfig, StampLinear};
use crate::quant::{fake_quant, per_token_quant_error, QuantGranularity};
use crate::synth::CounterRng;
use crate::tensor::{frobenius_norm_sq, ActivationMatrix};
use crate::transform::{jacobi_eigh, FeatureTransform, SequenceTransform};

fn require_out(r: &ResolvedExperiment) -> Result<&Path> {
    r.cfg
        .out
        .as_deref()
        .ok_or_else(|| StampError::Config("this command needs --out <csv path>".into()))
}

/// Aggregate SQNR over a batch: 10*log10(sum signal / sum noise).
fn batch_sqnr(reference: &[ActivationMatrix], test: &[ActivationMatrix]) -> Result<f64> {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (r, t) in reference.iter().zip(test) {
        signal += frobenius_norm_sq(r);
        noise += frobenius_norm_sq(&r.sub(t)?);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Per-token mean energies of the transformed batch.
fn batch_token_energies(transformed: &[ActivationMatrix]) -> Vec<f64> {
    let s = transformed[0].rows();
    let mut e = vec![0.0; s];
    for z in transformed {
        for (i, acc) in e.iter_mut().enumerate() {
            *acc += z.row(i).iter().map(|v| v * v).sum::<f64>();
        }
    }
    for acc in &mut e {
        *acc /= transformed.len() as f64;
    }
    e
}

/// `energy`: token-energy distribution of every transform family plus the
/// autocorrelation eigenvalues.
pub fn cmd_energy(r: &ResolvedExperiment) -> Result<()> {
    let out = require_out(r)?;
    let s = r.seq_len();
    // All families are emitted, so the structural preconditions of each must
    // hold for this sequence length.
    let transforms: Vec<SequenceTransform> = vec![
        r.sequence_transform_for(TransformChoice::Klt)?,
        r.sequence_transform_for(TransformChoice::Dct)?,
        r.sequence_transform_for(TransformChoice::Wht)?,
        r.sequence_transform_for(TransformChoice::Dwt)?,
        r.sequence_transform_for(TransformChoice::Identity)?,
    ];

    let profile = estimate_autocorr(&r.batch)?;
    let eigenvalues = jacobi_eigh(profile.autocorr())?.eigenvalues().to_vec();
    let energies: Vec<Vec<f64>> = transforms
        .iter()
        .map(|t| transformed_energies(&profile, t))
        .collect::<Result<_>>()?;

    let mut table = CsvTable::new(&[
        "token_index",
        "klt",
        "dct",
        "wht",
        "dwt",
        "identity",
        "eigenvalue",
    ]);
    for i in 0..s {
        let mut row = vec![i.to_string()];
        row.extend(energies.iter().map(|e| fmt_f64(e[i])));
        row.push(fmt_f64(eigenvalues[i]));
        table.push_row(row);
    }
    table.write(out)?;

    let total: f64 = energies[0].iter().sum();
    println!(
        "energy: s={s} d={} samples={} total_energy={:.6e}",
        r.feat_dim(),
        r.cfg.samples,
        total
    );
    let k = 64.min(s / 4).max(1);
    for (t, e) in transforms.iter().zip(&energies) {
        let mut sorted = e.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let share: f64 = sorted[..k].iter().sum::<f64>() / total;
        println!("  {:<8} top-{k} energy share {:.4}", t.name(), share);
    }
    println!("wrote {}", out.display());
    Ok(())
}

struct BoundSide {
    energies: Vec<f64>,
    bits: Option<Vec<u8>>,
    bound: Vec<f64>,
    measured: Vec<f64>,
}

fn bound_side(
    batch: &[ActivationMatrix],
    transform: &SequenceTransform,
    feat: &FeatureTransform,
    alloc: Option<&BitAllocation>,
    granularity: QuantGranularity,
    d: usize,
) -> Result<BoundSide> {
    let transformed: Vec<ActivationMatrix> = batch
        .iter()
        .map(|x| transform.apply(&feat.apply(x)?))
        .collect::<Result<_>>()?;
    let energies = batch_token_energies(&transformed);
    let s = energies.len();
    match alloc {
        None => Ok(BoundSide {
            energies,
            bits: None,
            bound: vec![0.0; s],
            measured: vec![0.0; s],
        }),
        Some(alloc) => {
            let bits = alloc.integer_bits()?;
            let bound: Vec<f64> = energies
                .iter()
                .zip(&bits)
                .map(|(&e, &b)| {
                    let denom = (1u32 << b) as f64 - 1.0;
                    d as f64 / 2.0 * e / (denom * denom)
                })
                .collect();
            let mut measured = vec![0.0; s];
            for z in &transformed {
                let per_token = per_token_quant_error(z, &bits, granularity)?;
                for (m, e) in measured.iter_mut().zip(per_token) {
                    *m += e / transformed.len() as f64;
                }
            }
            Ok(BoundSide {
                energies,
                bits: Some(bits),
                bound,
                measured,
            })
        }
    }
}

/// `bound`: per-token error bound versus measured error, uniform baseline
/// (no transform) side by side with the configured transform + allocation.
pub fn cmd_bound(r: &ResolvedExperiment) -> Result<()> {
    let out = require_out(r)?;
    r.allocation_params_ok()?;
    let (s, d) = (r.seq_len(), r.feat_dim());
    let stamp_t = r.sequence_transform_for(r.cfg.transform)?;
    let stamp_alloc = r.allocation(&stamp_t)?;

    let baseline_alloc = match (&stamp_alloc, r.cfg.uniform_bits) {
        (_, Some(b)) => Some(BitAllocation::uniform(s, b)?),
        (None, None) => None,
        (Some(a), None) => {
            let b = (a.average_bits().round_ties_even() as i64).clamp(1, 16) as u8;
            Some(BitAllocation::uniform(s, b)?)
        }
    };

    let identity = SequenceTransform::identity(s);
    let base = bound_side(
        &r.batch,
        &identity,
        &FeatureTransform::identity(d),
        baseline_alloc.as_ref(),
        r.cfg.granularity,
        d,
    )?;
    let stamp = bound_side(
        &r.batch,
        &stamp_t,
        &r.feature_transform()?,
        stamp_alloc.as_ref(),
        r.cfg.granularity,
        d,
    )?;

    let fmt_bits = |bits: &Option<Vec<u8>>, i: usize| match bits {
        None => "inf".to_string(),
        Some(b) => b[i].to_string(),
    };
    let mut table = CsvTable::new(&[
        "token_index",
        "energy_uniform",
        "bits_uniform",
        "bound_uniform",
        "measured_uniform",
        "energy_stamp",
        "bits_stamp",
        "bound_stamp",
        "measured_stamp",
    ]);
    for i in 0..s {
        table.push_row(vec![
            i.to_string(),
            fmt_f64(base.energies[i]),
            fmt_bits(&base.bits, i),
            fmt_f64(base.bound[i]),
            fmt_f64(base.measured[i]),
            fmt_f64(stamp.energies[i]),
            fmt_bits(&stamp.bits, i),
            fmt_f64(stamp.bound[i]),
            fmt_f64(stamp.measured[i]),
        ]);
    }
    table.write(out)?;

    let sum = |v: &[f64]| v.iter().sum::<f64>();
    println!(
        "bound: uniform(no transform)   total bound {:.6e}  total measured {:.6e}",
        sum(&base.bound),
        sum(&base.measured)
    );
    println!(
        "bound: {}+{:<18} total bound {:.6e}  total measured {:.6e}",
        stamp_t.name(),
        alloc_label(&stamp_alloc),
        sum(&stamp.bound),
        sum(&stamp.measured)
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn alloc_label(alloc: &Option<BitAllocation>) -> String {
    match alloc {
        None => "no-quant".to_string(),
        Some(a) => format!("avg {:.4} bits", a.average_bits()),
    }
}

/// `pareto`: sweep the number of high-precision tokens; one CSV row per
/// sweep point with its average bit width and reconstruction SQNR.
pub fn cmd_pareto(r: &ResolvedExperiment) -> Result<()> {
    let out = require_out(r)?;
    let s = r.seq_len();
    let (b_hp, b_lp) = match r.cfg.alloc {
        AllocChoice::TwoLevel { b_hp, b_lp, .. } => (b_hp, b_lp),
        _ => {
            return Err(StampError::Config(
                "pareto sweeps the two-level scheme; use --alloc two-level:N,HP,LP".into(),
            ))
        }
    };
    let mut points = r.cfg.nhp_list.clone();
    points.sort_unstable();
    points.dedup();
    if let Some(&bad) = points.iter().find(|&&n| n > s) {
        return Err(StampError::Config(format!(
            "n_hp {bad} exceeds sequence length {s}"
        )));
    }

    let mut table = CsvTable::new(&["n_hp", "average_bits", "sqnr_db"]);
    let mut summary = Vec::new();
    for &n_hp in &points {
        // Functional per-point seed: base seed XOR the sweep key.
        let batch = match &r.cfg.input {
            InputSource::Synthetic(_) => {
                let mut cfg = r.cfg.clone();
                cfg.seed ^= n_hp as u64;
                cfg.resolve()?.batch
            }
            InputSource::TensorFile(_) => r.batch.clone(),
        };
        let point = ResolvedExperiment {
            cfg: r.cfg.clone(),
            batch,
        };
        let transform = point.sequence_transform_for(point.cfg.transform)?;
        let feat = point.feature_transform()?;
        let alloc = crate::energy::two_level_allocation(s, n_hp, b_hp, b_lp)?;
        let bits = alloc.integer_bits()?;
        let reconstructed: Vec<ActivationMatrix> = point
            .batch
            .iter()
            .map(|x| {
                let z = transform.apply(&feat.apply(x)?)?;
                let back = transform.invert(&fake_quant(&z, &bits, point.cfg.granularity)?)?;
                feat.invert(&back)
            })
            .collect::<Result<_>>()?;
        let sqnr = batch_sqnr(&point.batch, &reconstructed)?;
        table.push_row(vec![
            n_hp.to_string(),
            fmt_f64(alloc.average_bits()),
            fmt_f64(sqnr),
        ]);
        summary.push((n_hp, alloc.average_bits(), sqnr));
    }
    table.write(out)?;

    println!(
        "pareto: transform={} hp={b_hp} lp={b_lp}",
        r.cfg.transform_name()
    );
    for (n_hp, avg, sqnr) in summary {
        println!("  n_hp={n_hp:<6} avg_bits={avg:<8} sqnr={sqnr:.3} dB");
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// `stamp-layer`: SQNR of a quantized linear layer under the 2x2 grid of
/// feature transform (off/on) and sequence transform (off/on).
pub fn cmd_stamp_layer(r: &ResolvedExperiment) -> Result<()> {
    let out = require_out(r)?;
    r.allocation_params_ok()?;
    let (s, d) = (r.seq_len(), r.feat_dim());
    if !d.is_power_of_two() {
        return Err(StampError::Config(format!(
            "stamp-layer includes Hadamard variants and needs a power-of-two feat-dim, got {d}"
        )));
    }
    match r.cfg.alloc {
        AllocChoice::None | AllocChoice::Uniform(_) | AllocChoice::TwoLevel { .. } => {}
        _ => {
            return Err(StampError::Config(
                "stamp-layer needs --alloc none, uniform:B or two-level:N,HP,LP".into(),
            ))
        }
    }

    let layer = match &r.cfg.weights {
        Some(path) => {
            let mats = read_tensor(path)?;
            if mats.len() != 1 {
                return Err(StampError::Config(format!(
                    "weights file {} must hold a single matrix",
                    path.display()
                )));
            }
            let w = mats.into_iter().next().unwrap();
            if w.rows() != d {
                return Err(StampError::Dimension(format!(
                    "weight rows {} vs feat-dim {d}",
                    w.rows()
                )));
            }
            LinearLayer::new(w, None)?
        }
        None => {
            // Deterministic random layer on a stream independent of the data.
            let rng = CounterRng::new(r.cfg.seed ^ 0x5745_4947_4854_5321);
            let w = ActivationMatrix::from_fn(d, d, |i, j| {
                rng.normal((i * d + j) as u64) / (d as f64).sqrt()
            })?;
            let bias: Vec<f64> = (0..d)
                .map(|j| rng.normal((d * d + j) as u64) * 0.1)
                .collect();
            LinearLayer::new(w, Some(bias))?
        }
    };

    let references: Vec<ActivationMatrix> = r
        .batch
        .iter()
        .map(|x| reference_linear(x, &layer))
        .collect::<Result<_>>()?;

    let seq = r.sequence_transform_for(r.cfg.transform)?;
    let stamp_alloc = r.allocation(&seq)?;
    let baseline_alloc = match r.cfg.alloc.low_bits() {
        None => None,
        Some(b) => Some(BitAllocation::uniform(s, b)?),
    };
    let ident_seq = SequenceTransform::identity(s);
    let ident_feat = FeatureTransform::identity(d);
    let hadamard = FeatureTransform::hadamard(d)?;

    let stamp_name = format!("stamp-{}", seq.name());
    let variants: Vec<(
        String,
        SequenceTransform,
        FeatureTransform,
        &Option<BitAllocation>,
    )> = vec![
        (
            "identity".to_string(),
            ident_seq.clone(),
            ident_feat,
            &baseline_alloc,
        ),
        (
            "feat-hadamard".to_string(),
            ident_seq,
            hadamard,
            &baseline_alloc,
        ),
        (stamp_name.clone(), seq.clone(), ident_feat, &stamp_alloc),
        (format!("feat+{stamp_name}"), seq, hadamard, &stamp_alloc),
    ];

    let mut table = CsvTable::new(&["variant", "sqnr_db", "quant_error", "avg_bits"]);
    println!("stamp-layer: s={s} d={d} samples={}", r.cfg.samples);
    for (name, seq_t, feat_t, alloc) in variants {
        // Without quantization every variant equals the reference by the
        // commutation identity, so report the sentinel instead of measuring
        // transform round-trip float noise.
        let (sqnr, err, avg_bits) = match alloc {
            None => (f64::INFINITY, 0.0, f64::INFINITY),
            Some(a) => {
                let cfg = StampConfig {
                    seq_transform: seq_t,
                    feat_transform: feat_t,
                    quant: QuantMode::Enabled(a.clone()),
                    granularity: r.cfg.granularity,
                    bias_mode: BiasMode::InvertThenBias,
                };
                let stamped = StampLinear::new(&layer, &cfg)?;
                let outputs: Vec<ActivationMatrix> = r
                    .batch
                    .iter()
                    .map(|x| stamped.forward(x))
                    .collect::<Result<_>>()?;
                let sqnr = batch_sqnr(&references, &outputs)?;
                let err: f64 = references
                    .iter()
                    .zip(&outputs)
                    .map(|(a, b)| frobenius_norm_sq(&a.sub(b).unwrap()))
                    .sum::<f64>()
                    / references.len() as f64;
                (sqnr, err, a.average_bits())
            }
        };
        table.push_row(vec![
            name.clone(),
            fmt_f64(sqnr),
            fmt_f64(err),
            fmt_f64(avg_bits),
        ]);
        println!("  {name:<18} sqnr={sqnr:>9.3} dB  avg_bits={avg_bits}");
    }
    table.write(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// `generate`: synthesize a batch and write it as a tensor file.
pub fn cmd_generate(r: &ResolvedExperiment) -> Result<()> {
    let out = require_out(r)?;
    if matches!(r.cfg.input, InputSource::TensorFile(_)) {
        return Err(StampError::Config(
            "generate works on synthetic data; --input is not allowed".into(),
        ));
    }
    write_tensor(out, &r.batch)?;
    println!(
        "generate: wrote {} samples of {}x{} to {}",
        r.batch.len(),
        r.seq_len(),
        r.feat_dim(),
        out.display()
    );
    Ok(())
}

/// `ingest`: validate and summarize a tensor file, optionally emitting
/// per-sample statistics as CSV.
pub fn cmd_ingest(r: &ResolvedExperiment) -> Result<()> {
    let path = match &r.cfg.input {
        InputSource::TensorFile(p) => p.clone(),
        InputSource::Synthetic(_) => {
            return Err(StampError::Config(
                "ingest needs --input <tensor file>".into(),
            ))
        }
    };
    let mut global_min = f64::INFINITY;
    let mut global_max = f64::NEG_INFINITY;
    let mut rows = Vec::new();
    for (n, x) in r.batch.iter().enumerate() {
        let min = x.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        global_min = global_min.min(min);
        global_max = global_max.max(max);
        rows.push(vec![
            n.to_string(),
            fmt_f64(frobenius_norm_sq(x)),
            fmt_f64(min),
            fmt_f64(max),
        ]);
    }
    println!(
        "ingest: {} -> {} samples of {}x{}, range [{:.6e}, {:.6e}]",
        path.display(),
        r.batch.len(),
        r.seq_len(),
        r.feat_dim(),
        global_min,
        global_max
    );
    if let Some(out) = r.cfg.out.as_deref() {
        let mut table = CsvTable::new(&["sample_index", "frobenius_norm_sq", "min", "max"]);
        for row in rows {
            table.push_row(row);
        }
        table.write(out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

impl crate::cli::config::ExperimentConfig {
    fn transform_name(&self) -> &'static str {
        match self.transform {
            TransformChoice::Identity => "identity",
            TransformChoice::Klt => "klt",
            TransformChoice::Dct => "dct",
            TransformChoice::Wht => "wht",
            TransformChoice::Dwt => "dwt",
        }
    }
}
