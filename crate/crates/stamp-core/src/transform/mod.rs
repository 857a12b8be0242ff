//! Invertible linear transforms along the sequence and feature dimensions.
//!
//! All variants are orthonormal, so energy (squared Frobenius norm) is
//! preserved and the inverse is the transpose. Sequence transforms multiply
//! from the left (they mix tokens), feature transforms from the right (they
//! mix channels). WHT and Haar DWT run as butterflies; DCT and KLT go through
//! dense matrices.
//!
//! DWT coefficient order: at every level the low-pass coefficients occupy
//! the leading sequence indices and details follow, so after `k` levels the
//! first `s/2^k` (1D) or `s/4^k` (2D) positions hold the coarse
//! approximation. 2D levels pack quadrants as LL, LH, HL, HH, each flattened
//! row-major, and recurse on LL.

pub mod jacobi;

pub use jacobi::{jacobi_eigh, EigenDecomposition};

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use crate::error::{Result, StampError};
use crate::synth::CounterRng;
use crate::tensor::{matmul, ActivationMatrix, LayoutTag};

const MATERIALIZE_LIMIT: usize = 4096;

/// Hidden self-test hook: when the environment variable
/// `STAMP_SELFCHECK_FAULT=haar-unnormalized` is set, forward Haar steps skip
/// the 1/sqrt(2) normalization so the selfcheck orthogonality property must
/// catch the fault.
#[doc(hidden)]
pub fn haar_forward_factor() -> f64 {
    static FACTOR: OnceLock<f64> = OnceLock::new();
    *FACTOR.get_or_init(|| match std::env::var("STAMP_SELFCHECK_FAULT") {
        Ok(v) if v == "haar-unnormalized" => 1.0,
        _ => FRAC_1_SQRT_2,
    })
}

/// Invertible linear map over the sequence (token) axis.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceTransform {
    Identity {
        len: usize,
    },
    /// Karhunen-Loeve transform; `basis` rows are eigenvectors of the
    /// autocorrelation matrix in descending eigenvalue order.
    Klt {
        basis: ActivationMatrix,
    },
    /// Orthonormal DCT-II.
    Dct {
        len: usize,
    },
    /// Orthonormal Walsh-Hadamard (Sylvester order), power-of-two length.
    Wht {
        len: usize,
    },
    /// Multilevel orthonormal Haar wavelet.
    Dwt1d {
        len: usize,
        levels: usize,
    },
    /// Separable multilevel Haar wavelet over a flattened 2D token grid.
    Dwt2d {
        height: usize,
        width: usize,
        levels: usize,
    },
}

impl SequenceTransform {
    pub fn identity(len: usize) -> Self {
        SequenceTransform::Identity { len }
    }

    /// Wrap an explicit orthogonal basis (rows transform tokens).
    pub fn klt(basis: ActivationMatrix) -> Result<Self> {
        let n = basis.rows();
        if basis.cols() != n {
            return Err(StampError::Dimension(format!(
                "KLT basis must be square, got {}x{}",
                n,
                basis.cols()
            )));
        }
        let gram = matmul(&basis, &basis.transpose())?;
        let dev = gram.max_abs_diff(&ActivationMatrix::identity(n));
        if dev > 1e-8 {
            return Err(StampError::Config(format!(
                "KLT basis is not orthogonal (|BB^T - I|_max = {dev:e})"
            )));
        }
        Ok(SequenceTransform::Klt { basis })
    }

    pub fn dct(len: usize) -> Self {
        SequenceTransform::Dct { len }
    }

    pub fn wht(len: usize) -> Result<Self> {
        if !len.is_power_of_two() {
            return Err(StampError::Config(format!(
                "WHT length must be a power of two, got {len}"
            )));
        }
        Ok(SequenceTransform::Wht { len })
    }

    pub fn dwt1d(len: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(StampError::Config("DWT needs at least one level".into()));
        }
        if levels >= usize::BITS as usize || !len.is_multiple_of(1 << levels) {
            return Err(StampError::Config(format!(
                "DWT length {len} is not divisible by 2^{levels}"
            )));
        }
        Ok(SequenceTransform::Dwt1d { len, levels })
    }

    pub fn dwt2d(height: usize, width: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(StampError::Config("DWT needs at least one level".into()));
        }
        if levels >= usize::BITS as usize {
            return Err(StampError::Config(format!(
                "{levels} levels is out of range"
            )));
        }
        let div = 1usize << levels;
        if !height.is_multiple_of(div) || !width.is_multiple_of(div) {
            return Err(StampError::Config(format!(
                "grid {height}x{width} extents must be divisible by 2^{levels}"
            )));
        }
        Ok(SequenceTransform::Dwt2d {
            height,
            width,
            levels,
        })
    }

    /// Default 1D level count: floor(log2(len)) capped at 6, further limited
    /// by divisibility for non-power-of-two lengths.
    pub fn default_dwt1d_levels(len: usize) -> usize {
        (len.trailing_zeros() as usize).clamp(1, 6)
    }

    /// Default 2D level count: 3 where the grid allows it, fewer otherwise.
    pub fn default_dwt2d_levels(height: usize, width: usize) -> usize {
        (height.trailing_zeros() as usize)
            .min(width.trailing_zeros() as usize)
            .clamp(1, 3)
    }

    /// Sequence length this transform operates on.
    pub fn len(&self) -> usize {
        match *self {
            SequenceTransform::Identity { len } => len,
            SequenceTransform::Klt { ref basis } => basis.rows(),
            SequenceTransform::Dct { len } => len,
            SequenceTransform::Wht { len } => len,
            SequenceTransform::Dwt1d { len, .. } => len,
            SequenceTransform::Dwt2d { height, width, .. } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short name used in CSV headers and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            SequenceTransform::Identity { .. } => "identity",
            SequenceTransform::Klt { .. } => "klt",
            SequenceTransform::Dct { .. } => "dct",
            SequenceTransform::Wht { .. } => "wht",
            SequenceTransform::Dwt1d { .. } | SequenceTransform::Dwt2d { .. } => "dwt",
        }
    }

    fn check_input(&self, x: &ActivationMatrix) -> Result<()> {
        if x.rows() != self.len() {
            return Err(StampError::Dimension(format!(
                "transform length {} vs {} rows",
                self.len(),
                x.rows()
            )));
        }
        if let SequenceTransform::Dwt2d { height, width, .. } = *self {
            if let LayoutTag::Grid2D {
                height: h,
                width: w,
            } = x.layout()
            {
                if h != height || w != width {
                    return Err(StampError::Dimension(format!(
                        "data grid {h}x{w} vs transform grid {height}x{width}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Forward transform: L * X, transforming every feature column.
    pub fn apply(&self, x: &ActivationMatrix) -> Result<ActivationMatrix> {
        self.check_input(x)?;
        let (s, d) = (x.rows(), x.cols());
        match *self {
            SequenceTransform::Identity { .. } => Ok(x.clone()),
            SequenceTransform::Klt { ref basis } => matmul(basis, x),
            SequenceTransform::Dct { len } => matmul(&dct_matrix(len), x),
            SequenceTransform::Wht { .. } => {
                let mut data = x.data().to_vec();
                wht_rows(&mut data, s, d);
                let scale = 1.0 / (s as f64).sqrt();
                for v in &mut data {
                    *v *= scale;
                }
                ActivationMatrix::from_vec(s, d, data)
            }
            SequenceTransform::Dwt1d { levels, .. } => {
                let mut data = x.data().to_vec();
                dwt1d_forward(&mut data, s, d, levels, haar_forward_factor());
                ActivationMatrix::from_vec(s, d, data)
            }
            SequenceTransform::Dwt2d {
                height,
                width,
                levels,
            } => {
                let mut data = x.data().to_vec();
                let factor = haar_forward_factor();
                for level in 0..levels {
                    dwt2d_level_forward(&mut data, height >> level, width >> level, d, factor);
                }
                ActivationMatrix::from_vec(s, d, data)
            }
        }
    }

    /// Inverse transform: L^T * Y (all variants are orthonormal).
    pub fn invert(&self, y: &ActivationMatrix) -> Result<ActivationMatrix> {
        self.check_input(y)?;
        let (s, d) = (y.rows(), y.cols());
        match *self {
            SequenceTransform::Identity { .. } => Ok(y.clone()),
            SequenceTransform::Klt { ref basis } => matmul(&basis.transpose(), y),
            SequenceTransform::Dct { len } => matmul(&dct_matrix(len).transpose(), y),
            // The normalized Hadamard matrix is its own inverse.
            SequenceTransform::Wht { .. } => {
                let mut data = y.data().to_vec();
                wht_rows(&mut data, s, d);
                let scale = 1.0 / (s as f64).sqrt();
                for v in &mut data {
                    *v *= scale;
                }
                ActivationMatrix::from_vec(s, d, data)
            }
            SequenceTransform::Dwt1d { levels, .. } => {
                let mut data = y.data().to_vec();
                dwt1d_inverse(&mut data, s, d, levels);
                ActivationMatrix::from_vec(s, d, data)
            }
            SequenceTransform::Dwt2d {
                height,
                width,
                levels,
            } => {
                let mut data = y.data().to_vec();
                for level in (0..levels).rev() {
                    dwt2d_level_inverse(&mut data, height >> level, width >> level, d);
                }
                Ok(ActivationMatrix::from_vec(s, d, data)?
                    .with_layout(LayoutTag::Grid2D { height, width }))
            }
        }
    }

    /// Dense `s x s` matrix L with `apply(x) == L * x`. Guarded at 4096.
    pub fn materialize(&self) -> Result<ActivationMatrix> {
        let s = self.len();
        if s > MATERIALIZE_LIMIT {
            return Err(StampError::Config(format!(
                "materialize limited to {MATERIALIZE_LIMIT}, got {s}"
            )));
        }
        match self {
            SequenceTransform::Identity { .. } => Ok(ActivationMatrix::identity(s)),
            SequenceTransform::Klt { basis } => Ok(basis.clone()),
            SequenceTransform::Dct { len } => Ok(dct_matrix(*len)),
            _ => self.apply(&ActivationMatrix::identity(s)),
        }
    }
}

/// Invertible linear map over the feature (channel) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureTransform {
    Identity {
        width: usize,
    },
    /// Orthonormal Hadamard mixing, power-of-two width.
    Hadamard {
        width: usize,
    },
}

impl FeatureTransform {
    pub fn identity(width: usize) -> Self {
        FeatureTransform::Identity { width }
    }

    pub fn hadamard(width: usize) -> Result<Self> {
        if !width.is_power_of_two() {
            return Err(StampError::Config(format!(
                "Hadamard width must be a power of two, got {width}"
            )));
        }
        Ok(FeatureTransform::Hadamard { width })
    }

    pub fn width(&self) -> usize {
        match *self {
            FeatureTransform::Identity { width } => width,
            FeatureTransform::Hadamard { width } => width,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureTransform::Identity { .. } => "identity",
            FeatureTransform::Hadamard { .. } => "hadamard",
        }
    }

    fn check_input(&self, x: &ActivationMatrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(StampError::Dimension(format!(
                "feature transform width {} vs {} cols",
                self.width(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Right multiplication X * R, mixing every token row.
    pub fn apply(&self, x: &ActivationMatrix) -> Result<ActivationMatrix> {
        self.check_input(x)?;
        match *self {
            FeatureTransform::Identity { .. } => Ok(x.clone()),
            FeatureTransform::Hadamard { width } => {
                let mut data = x.data().to_vec();
                let scale = 1.0 / (width as f64).sqrt();
                for row in data.chunks_mut(width) {
                    fwht(row);
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                Ok(ActivationMatrix::from_vec(x.rows(), width, data)?.with_layout(x.layout()))
            }
        }
    }

    /// Inverse: the normalized Hadamard matrix is symmetric and involutive.
    pub fn invert(&self, y: &ActivationMatrix) -> Result<ActivationMatrix> {
        self.apply(y)
    }

    /// Fold the inverse transform into a weight matrix: returns R^T * W, so
    /// that (X R)(R^T W) == X W.
    pub fn fold_into_weight(&self, w: &ActivationMatrix) -> Result<ActivationMatrix> {
        if w.rows() != self.width() {
            return Err(StampError::Dimension(format!(
                "weight has {} input rows, feature transform width {}",
                w.rows(),
                self.width()
            )));
        }
        match self {
            FeatureTransform::Identity { .. } => Ok(w.clone()),
            FeatureTransform::Hadamard { .. } => {
                let t = self.apply(&w.transpose())?;
                Ok(t.transpose())
            }
        }
    }
}

/// KLT from a symmetric PSD autocorrelation matrix: basis = U^T with columns
/// of U the eigenvectors in descending eigenvalue order.
pub fn klt_from_autocorr(s_matrix: &ActivationMatrix) -> Result<SequenceTransform> {
    let eig = jacobi_eigh(s_matrix)?;
    let lambda = eig.eigenvalues();
    let scale = lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&bad) = lambda.iter().find(|&&v| v < -1e-8 * scale) {
        return Err(StampError::Data(format!(
            "autocorrelation matrix is not PSD (eigenvalue {bad:e})"
        )));
    }
    Ok(SequenceTransform::Klt {
        basis: eig.eigenvectors().transpose(),
    })
}

/// Seeded random rotation: the eigenbasis of a random symmetric matrix.
/// Used as a baseline transform in energy-compaction comparisons.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<ActivationMatrix> {
    let rng = CounterRng::new(seed);
    let m = ActivationMatrix::from_fn(n, n, |i, j| rng.normal((i * n + j) as u64))?;
    let sym = ActivationMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))?;
    Ok(jacobi_eigh(&sym)?.eigenvectors().transpose())
}

fn dct_matrix(s: usize) -> ActivationMatrix {
    let norm0 = (1.0 / s as f64).sqrt();
    let norm = (2.0 / s as f64).sqrt();
    ActivationMatrix::from_fn(s, s, |k, n| {
        let a = if k == 0 { norm0 } else { norm };
        a * (PI * (2 * n + 1) as f64 * k as f64 / (2.0 * s as f64)).cos()
    })
    .expect("DCT entries are finite")
}

/// Unnormalized in-place Walsh-Hadamard butterfly over `values`.
fn fwht(values: &mut [f64]) {
    let n = values.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for k in i..i + h {
                let a = values[k];
                let b = values[k + h];
                values[k] = a + b;
                values[k + h] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

/// Walsh-Hadamard butterfly across token rows, all feature columns at once.
fn wht_rows(data: &mut [f64], s: usize, d: usize) {
    let mut h = 1;
    while h < s {
        let mut i = 0;
        while i < s {
            for k in i..i + h {
                for j in 0..d {
                    let a = data[k * d + j];
                    let b = data[(k + h) * d + j];
                    data[k * d + j] = a + b;
                    data[(k + h) * d + j] = a - b;
                }
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

fn dwt1d_forward(data: &mut [f64], s: usize, d: usize, levels: usize, factor: f64) {
    let mut scratch = vec![0.0; s * d];
    let mut m = s;
    for _ in 0..levels {
        let half = m / 2;
        for k in 0..half {
            for j in 0..d {
                let a = data[(2 * k) * d + j];
                let b = data[(2 * k + 1) * d + j];
                scratch[k * d + j] = (a + b) * factor;
                scratch[(half + k) * d + j] = (a - b) * factor;
            }
        }
        data[..m * d].copy_from_slice(&scratch[..m * d]);
        m = half;
    }
}

fn dwt1d_inverse(data: &mut [f64], s: usize, d: usize, levels: usize) {
    let f = FRAC_1_SQRT_2;
    let mut scratch = vec![0.0; s * d];
    for level in (0..levels).rev() {
        let m = s >> level;
        let half = m / 2;
        for k in 0..half {
            for j in 0..d {
                let lo = data[k * d + j];
                let hi = data[(half + k) * d + j];
                scratch[(2 * k) * d + j] = (lo + hi) * f;
                scratch[(2 * k + 1) * d + j] = (lo - hi) * f;
            }
        }
        data[..m * d].copy_from_slice(&scratch[..m * d]);
    }
}

/// One forward 2D Haar level over the active `h x w` grid stored in the
/// leading `h*w` sequence slots. Output packs quadrants LL, LH, HL, HH.
fn dwt2d_level_forward(data: &mut [f64], h: usize, w: usize, d: usize, factor: f64) {
    let hh = h / 2;
    let ww = w / 2;
    let q = hh * ww;
    let mut grid = vec![0.0; h * w * d];
    // Pair step along grid rows (width axis), lows packed left.
    for r in 0..h {
        for c in 0..ww {
            for j in 0..d {
                let a = data[(r * w + 2 * c) * d + j];
                let b = data[(r * w + 2 * c + 1) * d + j];
                grid[(r * w + c) * d + j] = (a + b) * factor;
                grid[(r * w + ww + c) * d + j] = (a - b) * factor;
            }
        }
    }
    // Pair step along grid columns (height axis), writing quadrants in
    // sequence order: LL | LH | HL | HH, each row-major.
    for rr in 0..hh {
        for c in 0..w {
            let (lo_idx, hi_idx) = if c < ww {
                (rr * ww + c, 2 * q + rr * ww + c)
            } else {
                (q + rr * ww + (c - ww), 3 * q + rr * ww + (c - ww))
            };
            for j in 0..d {
                let a = grid[((2 * rr) * w + c) * d + j];
                let b = grid[((2 * rr + 1) * w + c) * d + j];
                data[lo_idx * d + j] = (a + b) * factor;
                data[hi_idx * d + j] = (a - b) * factor;
            }
        }
    }
}

fn dwt2d_level_inverse(data: &mut [f64], h: usize, w: usize, d: usize) {
    let f = FRAC_1_SQRT_2;
    let hh = h / 2;
    let ww = w / 2;
    let q = hh * ww;
    let mut grid = vec![0.0; h * w * d];
    for rr in 0..hh {
        for c in 0..w {
            let (lo_idx, hi_idx) = if c < ww {
                (rr * ww + c, 2 * q + rr * ww + c)
            } else {
                (q + rr * ww + (c - ww), 3 * q + rr * ww + (c - ww))
            };
            for j in 0..d {
                let lo = data[lo_idx * d + j];
                let hi = data[hi_idx * d + j];
                grid[((2 * rr) * w + c) * d + j] = (lo + hi) * f;
                grid[((2 * rr + 1) * w + c) * d + j] = (lo - hi) * f;
            }
        }
    }
    for r in 0..h {
        for c in 0..ww {
            for j in 0..d {
                let lo = grid[(r * w + c) * d + j];
                let hi = grid[(r * w + ww + c) * d + j];
                data[(r * w + 2 * c) * d + j] = (lo + hi) * f;
                data[(r * w + 2 * c + 1) * d + j] = (lo - hi) * f;
            }
        }
    }
}
