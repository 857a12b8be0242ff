//! Experiment configuration: INI-style config files with CLI-flag overrides.
//!
//! Precedence: built-in defaults < config file < command-line flags. Section
//! headers in config files are organizational only; keys are flat and use
//! the flag names without the leading dashes. Every parameter is validated
//! against the module preconditions before any computation or output starts.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use crate::energy::BitAllocation;
use crate::error::{Result, StampError};
use crate::quant::QuantGranularity;
use crate::synth::SynthKind;
use crate::tensor::{ActivationMatrix, LayoutTag};
use crate::transform::{FeatureTransform, SequenceTransform};

/// Where activations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Synthetic(SynthKind),
    TensorFile(PathBuf),
}

/// Which sequence transform family to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformChoice {
    Identity,
    Klt,
    Dct,
    Wht,
    Dwt,
}

impl TransformChoice {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "klt" => Ok(Self::Klt),
            "dct" => Ok(Self::Dct),
            "wht" => Ok(Self::Wht),
            "dwt" => Ok(Self::Dwt),
            _ => Err(StampError::Config(format!(
                "unknown transform '{s}' (expected identity|klt|dct|wht|dwt)"
            ))),
        }
    }
}

/// Allocation scheme selector, including the no-quantization sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocChoice {
    None,
    Uniform(u8),
    /// Continuous optimum at the given average bit width; measurements round
    /// it ties-to-even, bounds use the continuous widths.
    Optimal(f64),
    /// Rounded continuous optimum at the given average bit width.
    Rounded(f64),
    TwoLevel {
        n_hp: usize,
        b_hp: u8,
        b_lp: u8,
    },
}

impl AllocChoice {
    fn parse(s: &str) -> Result<Self> {
        let bad = |s: &str| {
            StampError::Config(format!(
                "bad allocation '{s}' (expected none|uniform:B|optimal:AVG|rounded:AVG|two-level:N,HP,LP)"
            ))
        };
        if s == "none" {
            return Ok(Self::None);
        }
        let (kind, args) = s.split_once(':').ok_or_else(|| bad(s))?;
        match kind {
            "uniform" => Ok(Self::Uniform(args.parse().map_err(|_| bad(s))?)),
            "optimal" => Ok(Self::Optimal(args.parse().map_err(|_| bad(s))?)),
            "rounded" => Ok(Self::Rounded(args.parse().map_err(|_| bad(s))?)),
            "two-level" => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad(s));
                }
                Ok(Self::TwoLevel {
                    n_hp: parts[0].parse().map_err(|_| bad(s))?,
                    b_hp: parts[1].parse().map_err(|_| bad(s))?,
                    b_lp: parts[2].parse().map_err(|_| bad(s))?,
                })
            }
            _ => Err(bad(s)),
        }
    }

    /// Low-precision width used by unstamped baseline variants.
    pub fn low_bits(&self) -> Option<u8> {
        match *self {
            AllocChoice::None => None,
            AllocChoice::Uniform(b) => Some(b),
            AllocChoice::Optimal(avg) | AllocChoice::Rounded(avg) => {
                Some((avg.round_ties_even() as i64).clamp(1, 16) as u8)
            }
            AllocChoice::TwoLevel { b_lp, .. } => Some(b_lp),
        }
    }
}

/// One experiment: input, transforms, allocation, metrics parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub input: InputSource,
    pub seq_len: usize,
    pub feat_dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub transform: TransformChoice,
    pub levels: Option<usize>,
    pub grid: Option<(usize, usize)>,
    pub feature_transform: FeatChoice,
    pub alloc: AllocChoice,
    pub granularity: QuantGranularity,
    pub out: Option<PathBuf>,
    pub nhp_list: Vec<usize>,
    pub uniform_bits: Option<u8>,
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatChoice {
    Identity,
    Hadamard,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: InputSource::Synthetic(SynthKind::Ar1 { rho: 0.95 }),
            seq_len: 256,
            feat_dim: 64,
            samples: 256,
            seed: 0,
            transform: TransformChoice::Dwt,
            levels: None,
            grid: None,
            feature_transform: FeatChoice::Identity,
            alloc: AllocChoice::TwoLevel {
                n_hp: 64,
                b_hp: 8,
                b_lp: 4,
            },
            granularity: QuantGranularity::PerToken,
            out: None,
            nhp_list: vec![0, 1, 2, 4, 8, 16, 32, 64],
            uniform_bits: None,
            weights: None,
        }
    }
}

fn parse_kv(key: &str, value: &str, cfg: &mut ExperimentConfig) -> Result<()> {
    let err = |what: &str| StampError::Config(format!("bad value '{value}' for {what}"));
    match key {
        "seed" => cfg.seed = value.parse().map_err(|_| err("seed"))?,
        "samples" => cfg.samples = value.parse().map_err(|_| err("samples"))?,
        "seq-len" => cfg.seq_len = value.parse().map_err(|_| err("seq-len"))?,
        "feat-dim" => cfg.feat_dim = value.parse().map_err(|_| err("feat-dim"))?,
        "transform" => cfg.transform = TransformChoice::parse(value)?,
        "levels" => cfg.levels = Some(value.parse().map_err(|_| err("levels"))?),
        "grid" => {
            let (h, w) = value
                .split_once('x')
                .ok_or_else(|| err("grid (expected HxW)"))?;
            cfg.grid = Some((
                h.parse().map_err(|_| err("grid height"))?,
                w.parse().map_err(|_| err("grid width"))?,
            ));
        }
        "feature-transform" => {
            cfg.feature_transform = match value {
                "identity" => FeatChoice::Identity,
                "hadamard" => FeatChoice::Hadamard,
                _ => return Err(err("feature-transform (identity|hadamard)")),
            }
        }
        "alloc" => cfg.alloc = AllocChoice::parse(value)?,
        "granularity" => {
            cfg.granularity = match value {
                "per-token" => QuantGranularity::PerToken,
                other => match other.strip_prefix("per-block:") {
                    Some(n) => QuantGranularity::PerBlock(
                        n.parse().map_err(|_| err("granularity block size"))?,
                    ),
                    None => return Err(err("granularity (per-token|per-block:N)")),
                },
            }
        }
        "out" => cfg.out = Some(PathBuf::from(value)),
        "input" => cfg.input = InputSource::TensorFile(PathBuf::from(value)),
        "data" => cfg.input = InputSource::Synthetic(parse_synth_kind(value)?),
        "nhp-list" => {
            cfg.nhp_list = value
                .split(',')
                .map(|v| v.parse().map_err(|_| err("nhp-list")))
                .collect::<Result<Vec<usize>>>()?;
            if cfg.nhp_list.is_empty() {
                return Err(err("nhp-list"));
            }
        }
        "uniform-bits" => cfg.uniform_bits = Some(value.parse().map_err(|_| err("uniform-bits"))?),
        "weights" => cfg.weights = Some(PathBuf::from(value)),
        _ => {
            return Err(StampError::Config(format!("unknown option '{key}'")));
        }
    }
    Ok(())
}

fn parse_synth_kind(value: &str) -> Result<SynthKind> {
    let bad = || {
        StampError::Config(format!(
            "bad data '{value}' (expected ar1:RHO|grid:RHOH,RHOW|outliers:BASE,OUT,COUNT)"
        ))
    };
    let (kind, args) = value.split_once(':').ok_or_else(bad)?;
    match kind {
        "ar1" => Ok(SynthKind::Ar1 {
            rho: args.parse().map_err(|_| bad())?,
        }),
        "grid" => {
            let (h, w) = args.split_once(',').ok_or_else(bad)?;
            Ok(SynthKind::Grid2dAr1 {
                rho_h: h.parse().map_err(|_| bad())?,
                rho_w: w.parse().map_err(|_| bad())?,
                // Grid extents come from --grid and are attached at validation.
                height: 0,
                width: 0,
            })
        }
        "outliers" => {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(SynthKind::OutlierChannels {
                base_sigma: parts[0].parse().map_err(|_| bad())?,
                outlier_sigma: parts[1].parse().map_err(|_| bad())?,
                outlier_count: parts[2].parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// Parse flags (and an optional `--config` file) into a config.
///
/// Flags are `--key value` pairs; the config file holds `key = value` lines
/// with optional `[section]` headers and `#`/`;` comments.
pub fn parse_args(args: &[String]) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut config_file: Option<PathBuf> = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| StampError::Config(format!("unexpected argument '{arg}'")))?;
        let value = it
            .next()
            .ok_or_else(|| StampError::Config(format!("flag --{key} needs a value")))?;
        if key == "config" {
            config_file = Some(PathBuf::from(value));
        } else {
            pairs.push((key.to_string(), value.clone()));
        }
    }

    let mut cfg = ExperimentConfig::default();
    if let Some(path) = config_file {
        for (key, value) in parse_ini(&path)? {
            parse_kv(&key, &value, &mut cfg)?;
        }
    }
    for (key, value) in &pairs {
        parse_kv(key, value, &mut cfg)?;
    }
    Ok(cfg)
}

fn parse_ini(path: &PathBuf) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| StampError::Io(format!("config {}: {e}", path.display())))?;
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue; // sections are organizational only
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            StampError::Config(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if seen.insert(key.clone(), ()).is_some() {
            return Err(StampError::Config(format!(
                "{}:{}: duplicate key '{key}'",
                path.display(),
                lineno + 1
            )));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Everything a command needs, with all preconditions already checked.
pub struct ResolvedExperiment {
    pub cfg: ExperimentConfig,
    pub batch: Vec<ActivationMatrix>,
}

impl ExperimentConfig {
    /// Load or synthesize the input batch and validate every module
    /// precondition up front, so no partial output is ever produced.
    pub fn resolve(mut self) -> Result<ResolvedExperiment> {
        let batch = match &self.input {
            InputSource::Synthetic(kind) => {
                let mut kind = *kind;
                if let SynthKind::Grid2dAr1 { height, width, .. } = &mut kind {
                    let (h, w) = self
                        .grid
                        .ok_or_else(|| StampError::Config("grid data needs --grid HxW".into()))?;
                    *height = h;
                    *width = w;
                    self.seq_len = h * w;
                }
                let spec = crate::synth::SynthSpec {
                    kind,
                    seq_len: self.seq_len,
                    feat_dim: self.feat_dim,
                    seed: self.seed,
                };
                crate::synth::generate(&spec, self.samples)?
            }
            InputSource::TensorFile(path) => {
                let mut batch = crate::io::read_tensor(path)?;
                if let Some((h, w)) = self.grid {
                    batch = batch
                        .into_iter()
                        .map(|x| x.with_grid(h, w))
                        .collect::<Result<Vec<_>>>()?;
                }
                self.seq_len = batch[0].rows();
                self.feat_dim = batch[0].cols();
                self.samples = batch.len();
                batch
            }
        };

        // Structural preconditions of the chosen transforms. Allocation
        // parameters are validated by the commands that materialize them.
        let resolved = ResolvedExperiment { cfg: self, batch };
        resolved.sequence_transform_for(resolved.cfg.transform)?;
        if resolved.cfg.feature_transform == FeatChoice::Hadamard {
            FeatureTransform::hadamard(resolved.cfg.feat_dim)?;
        }
        resolved.cfg.granularity.validate()?;
        Ok(resolved)
    }
}

impl ResolvedExperiment {
    pub fn seq_len(&self) -> usize {
        self.cfg.seq_len
    }

    pub fn feat_dim(&self) -> usize {
        self.cfg.feat_dim
    }

    /// Grid annotation, either from the data or the --grid flag.
    pub fn grid(&self) -> Option<(usize, usize)> {
        match self.batch[0].layout() {
            LayoutTag::Grid2D { height, width } => Some((height, width)),
            LayoutTag::Seq1D => self.cfg.grid,
        }
    }

    /// Instantiate a sequence transform of the given family for this data.
    /// KLT is calibrated on the batch's sample autocorrelation.
    pub fn sequence_transform_for(&self, choice: TransformChoice) -> Result<SequenceTransform> {
        let s = self.seq_len();
        match choice {
            TransformChoice::Identity => Ok(SequenceTransform::identity(s)),
            TransformChoice::Dct => Ok(SequenceTransform::dct(s)),
            TransformChoice::Wht => SequenceTransform::wht(s),
            TransformChoice::Dwt => match self.grid() {
                Some((h, w)) => SequenceTransform::dwt2d(
                    h,
                    w,
                    self.cfg
                        .levels
                        .unwrap_or_else(|| SequenceTransform::default_dwt2d_levels(h, w)),
                ),
                None => SequenceTransform::dwt1d(
                    s,
                    self.cfg
                        .levels
                        .unwrap_or_else(|| SequenceTransform::default_dwt1d_levels(s)),
                ),
            },
            TransformChoice::Klt => {
                let profile = crate::energy::estimate_autocorr(&self.batch)?;
                crate::transform::klt_from_autocorr(profile.autocorr())
            }
        }
    }

    pub fn feature_transform(&self) -> Result<FeatureTransform> {
        match self.cfg.feature_transform {
            FeatChoice::Identity => Ok(FeatureTransform::identity(self.feat_dim())),
            FeatChoice::Hadamard => FeatureTransform::hadamard(self.feat_dim()),
        }
    }

    /// Cheap parameter validation for the configured allocation, run by
    /// commands before any computation or output.
    pub fn allocation_params_ok(&self) -> Result<()> {
        let s = self.seq_len();
        match self.cfg.alloc {
            AllocChoice::None => Ok(()),
            AllocChoice::Uniform(b) => BitAllocation::uniform(s, b).map(|_| ()),
            AllocChoice::TwoLevel { n_hp, b_hp, b_lp } => {
                crate::energy::two_level_allocation(s, n_hp, b_hp, b_lp).map(|_| ())
            }
            AllocChoice::Optimal(avg) | AllocChoice::Rounded(avg) => {
                if !(1.0..=16.0).contains(&avg) {
                    Err(StampError::Config(format!(
                        "average bit width {avg} outside 1..=16"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Materialize the configured allocation. Energy-driven schemes compute
    /// token energies from the batch under `transform`.
    pub fn allocation(&self, transform: &SequenceTransform) -> Result<Option<BitAllocation>> {
        self.allocation_params_ok()?;
        let s = self.seq_len();
        match self.cfg.alloc {
            AllocChoice::None => Ok(None),
            AllocChoice::Uniform(b) => Ok(Some(BitAllocation::uniform(s, b)?)),
            AllocChoice::TwoLevel { n_hp, b_hp, b_lp } => Ok(Some(
                crate::energy::two_level_allocation(s, n_hp, b_hp, b_lp)?,
            )),
            AllocChoice::Optimal(avg) | AllocChoice::Rounded(avg) => {
                let profile = crate::energy::estimate_autocorr(&self.batch)?;
                let energies = crate::energy::transformed_energies(&profile, transform)?;
                let cont = crate::energy::optimal_bits_continuous(&energies, avg * s as f64)?;
                match self.cfg.alloc {
                    AllocChoice::Optimal(_) => Ok(Some(cont)),
                    _ => Ok(Some(crate::energy::round_bits(&cont))),
                }
            }
        }
    }
}
