//! Dense row-major matrix and vector primitives.
//!
//! The activation layout is fixed: rows index the sequence (tokens), columns
//! index features. Sequence transforms act by left multiplication, feature
//! transforms by right multiplication. All arithmetic is f64; reductions run
//! in a fixed row-major, left-to-right order so results are reproducible.

use crate::error::{Result, StampError};

/// Raw storage for per-token quantities (energies, bit vectors, rows).
pub type RealVector = Vec<f64>;

/// Describes whether the sequence axis flattens a 2D token grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutTag {
    /// Plain 1D sequence.
    Seq1D,
    /// The sequence axis is a row-major flattening of a `height x width` grid.
    Grid2D { height: usize, width: usize },
}

/// Dense real matrix of shape `sequence length s x feature size d`, row-major.
///
/// Immutable after construction; all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    layout: LayoutTag,
}

impl ActivationMatrix {
    /// Build from row-major data. Fails on length mismatch or non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(StampError::Dimension(format!(
                "expected {}x{}={} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StampError::Data(format!(
                "non-finite value {} at flat index {}",
                data[pos], pos
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            layout: LayoutTag::Seq1D,
        })
    }

    /// Build from a list of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(StampError::Dimension("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// Build by evaluating `f(row, col)` at every position.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            layout: LayoutTag::Seq1D,
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Attach a 2D grid annotation to the sequence axis.
    pub fn with_grid(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.rows {
            return Err(StampError::Dimension(format!(
                "grid {}x{} does not flatten to {} rows",
                height, width, self.rows
            )));
        }
        self.layout = LayoutTag::Grid2D { height, width };
        Ok(self)
    }

    /// Replace the layout tag with `Seq1D` (used when a transform destroys grid structure).
    pub(crate) fn with_layout(mut self, layout: LayoutTag) -> Self {
        self.layout = layout;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> LayoutTag {
        self.layout
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major backing storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
            layout: LayoutTag::Seq1D,
        }
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(StampError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
            layout: self.layout,
        })
    }

    /// Largest absolute difference against another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard matrix product with deterministic row-major, left-to-right accumulation.
pub fn matmul(a: &ActivationMatrix, b: &ActivationMatrix) -> Result<ActivationMatrix> {
    if a.cols != b.rows {
        return Err(StampError::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.data[i * k + p] * b.data[p * n + j];
            }
            data[i * n + j] = acc;
        }
    }
    Ok(ActivationMatrix {
        rows: m,
        cols: n,
        data,
        layout: LayoutTag::Seq1D,
    })
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(x: &ActivationMatrix) -> f64 {
    x.data.iter().map(|v| v * v).sum()
}
