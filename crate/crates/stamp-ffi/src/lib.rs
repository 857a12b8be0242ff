//! C ABI over the stamp quantization-simulation library.
//!
//! Conventions: opaque handles created by `*_create`/`*_new` functions and
//! released with the matching `*_free`; every fallible call returns a
//! [`StampStatus`] and writes results through out-pointers. Handles are not
//! thread-safe to mutate but may be shared for concurrent reads. Passing a
//! pointer that was not produced by this library is undefined behavior;
//! passing NULL is reported as `STAMP_STATUS_NULL_POINTER`.

use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use stamp_core::{
    energy_error_bound, fake_quant, klt_from_autocorr, quant_error, sqnr_db, transformed_energies,
    two_level_allocation, ActivationMatrix, CounterRng, EnergyProfile, QuantGranularity,
    SequenceTransform, StampError,
};

/// Result code of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StampStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NumericalFailure = 4,
    AllocationFailure = 5,
    IoFailure = 6,
    Panic = 7,
}

fn status_of(err: &StampError) -> StampStatus {
    match err {
        StampError::Dimension(_) => StampStatus::DimensionMismatch,
        StampError::Data(_) | StampError::Config(_) => StampStatus::InvalidArgument,
        StampError::Allocation(_) => StampStatus::AllocationFailure,
        StampError::Numerical(_) => StampStatus::NumericalFailure,
        StampError::Io(_) => StampStatus::IoFailure,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn stamp_status_message(status: StampStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        StampStatus::Ok => b"ok\0",
        StampStatus::NullPointer => b"null pointer argument\0",
        StampStatus::InvalidArgument => b"invalid argument\0",
        StampStatus::DimensionMismatch => b"dimension mismatch\0",
        StampStatus::NumericalFailure => b"numerical failure\0",
        StampStatus::AllocationFailure => b"bit allocation failure\0",
        StampStatus::IoFailure => b"io failure\0",
        StampStatus::Panic => b"internal panic\0",
    };
    msg.as_ptr() as *const c_char
}

/// Opaque dense activation matrix (sequence x feature, f64, row-major).
pub struct StampMatrix(ActivationMatrix);

/// Opaque invertible sequence transform.
pub struct StampTransform(SequenceTransform);

fn guard(f: impl FnOnce() -> StampStatus) -> StampStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => StampStatus::Panic,
    }
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> StampStatus {
    if out.is_null() {
        return StampStatus::NullPointer;
    }
    *out = Box::into_raw(Box::new(value));
    StampStatus::Ok
}

/// Create a matrix from `rows * cols` row-major values.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_create(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut StampMatrix,
) -> StampStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return StampStatus::NullPointer;
        }
        let slice = std::slice::from_raw_parts(data, rows * cols);
        match ActivationMatrix::from_vec(rows, cols, slice.to_vec()) {
            Ok(m) => write_handle(out, StampMatrix(m)),
            Err(e) => status_of(&e),
        }
    })
}

/// Draw a stationary AR(1) activation matrix (unit variance, correlation
/// `rho` along the sequence axis) from the deterministic counter PRNG.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_generate_ar1(
    seed: u64,
    seq_len: usize,
    feat_dim: usize,
    rho: f64,
    out: *mut *mut StampMatrix,
) -> StampStatus {
    guard(|| {
        let spec = stamp_core::SynthSpec {
            kind: stamp_core::SynthKind::Ar1 { rho },
            seq_len,
            feat_dim,
            seed,
        };
        match stamp_core::generate(&spec, 1) {
            Ok(mut batch) => write_handle(out, StampMatrix(batch.remove(0))),
            Err(e) => status_of(&e),
        }
    })
}

/// Release a matrix handle. NULL is a no-op.
///
/// # Safety
/// `m` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_free(m: *mut StampMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of rows (sequence length); 0 for NULL.
///
/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_rows(m: *const StampMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Number of columns (feature size); 0 for NULL.
///
/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_cols(m: *const StampMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copy the row-major contents into `out`, which holds `len` doubles;
/// `len` must equal rows * cols.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn stamp_matrix_copy_data(
    m: *const StampMatrix,
    out: *mut f64,
    len: usize,
) -> StampStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return StampStatus::NullPointer;
        };
        if out.is_null() {
            return StampStatus::NullPointer;
        }
        if len != m.0.data().len() {
            return StampStatus::DimensionMismatch;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(m.0.data());
        StampStatus::Ok
    })
}

unsafe fn new_transform(
    out: *mut *mut StampTransform,
    t: stamp_core::Result<SequenceTransform>,
) -> StampStatus {
    match t {
        Ok(t) => write_handle(out, StampTransform(t)),
        Err(e) => status_of(&e),
    }
}

/// Identity sequence transform.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_identity(
    len: usize,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| new_transform(out, Ok(SequenceTransform::identity(len))))
}

/// Orthonormal DCT-II sequence transform.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_dct(
    len: usize,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| new_transform(out, Ok(SequenceTransform::dct(len))))
}

/// Orthonormal Walsh-Hadamard transform; `len` must be a power of two.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_wht(
    len: usize,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| new_transform(out, SequenceTransform::wht(len)))
}

/// Multilevel 1D Haar wavelet; `len` must be divisible by 2^levels.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_dwt1d(
    len: usize,
    levels: usize,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| new_transform(out, SequenceTransform::dwt1d(len, levels)))
}

/// Separable 2D Haar wavelet over a height x width token grid.
///
/// # Safety
/// `out` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_dwt2d(
    height: usize,
    width: usize,
    levels: usize,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| new_transform(out, SequenceTransform::dwt2d(height, width, levels)))
}

/// KLT calibrated on a symmetric PSD autocorrelation matrix.
///
/// # Safety
/// `autocorr` must be a live matrix handle; `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_klt_from_autocorr(
    autocorr: *const StampMatrix,
    out: *mut *mut StampTransform,
) -> StampStatus {
    guard(|| {
        let Some(s) = autocorr.as_ref() else {
            return StampStatus::NullPointer;
        };
        new_transform(out, klt_from_autocorr(&s.0))
    })
}

/// Release a transform handle. NULL is a no-op.
///
/// # Safety
/// `t` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_free(t: *mut StampTransform) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

unsafe fn apply_impl(
    t: *const StampTransform,
    x: *const StampMatrix,
    out: *mut *mut StampMatrix,
    inverse: bool,
) -> StampStatus {
    let (Some(t), Some(x)) = (t.as_ref(), x.as_ref()) else {
        return StampStatus::NullPointer;
    };
    let result = if inverse {
        t.0.invert(&x.0)
    } else {
        t.0.apply(&x.0)
    };
    match result {
        Ok(y) => write_handle(out, StampMatrix(y)),
        Err(e) => status_of(&e),
    }
}

/// Forward transform: out = L * x.
///
/// # Safety
/// `t` and `x` must be live handles; `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_apply(
    t: *const StampTransform,
    x: *const StampMatrix,
    out: *mut *mut StampMatrix,
) -> StampStatus {
    guard(|| apply_impl(t, x, out, false))
}

/// Inverse transform: out = L^T * y.
///
/// # Safety
/// `t` and `y` must be live handles; `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_transform_invert(
    t: *const StampTransform,
    y: *const StampMatrix,
    out: *mut *mut StampMatrix,
) -> StampStatus {
    guard(|| apply_impl(t, y, out, true))
}

fn granularity_from(block_size: usize) -> QuantGranularity {
    if block_size == 0 {
        QuantGranularity::PerToken
    } else {
        QuantGranularity::PerBlock(block_size)
    }
}

/// Asymmetric min-max fake quantization with per-token bit widths.
/// `bits` holds one width (1..=16) per row; `block_size` 0 means per-token
/// granularity, otherwise per-block of that many features.
///
/// # Safety
/// `x` must be a live handle, `bits` readable for `bits_len` bytes, and
/// `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn stamp_fake_quant(
    x: *const StampMatrix,
    bits: *const u8,
    bits_len: usize,
    block_size: usize,
    out: *mut *mut StampMatrix,
) -> StampStatus {
    guard(|| {
        let Some(x) = x.as_ref() else {
            return StampStatus::NullPointer;
        };
        if bits.is_null() {
            return StampStatus::NullPointer;
        }
        let bits = std::slice::from_raw_parts(bits, bits_len);
        match fake_quant(&x.0, bits, granularity_from(block_size)) {
            Ok(m) => write_handle(out, StampMatrix(m)),
            Err(e) => status_of(&e),
        }
    })
}

/// Squared Frobenius norm of the fake-quantization residual.
///
/// # Safety
/// Pointer arguments as in [`stamp_fake_quant`]; `out` one writable double.
#[no_mangle]
pub unsafe extern "C" fn stamp_quant_error(
    x: *const StampMatrix,
    bits: *const u8,
    bits_len: usize,
    block_size: usize,
    out: *mut f64,
) -> StampStatus {
    guard(|| {
        let Some(x) = x.as_ref() else {
            return StampStatus::NullPointer;
        };
        if bits.is_null() || out.is_null() {
            return StampStatus::NullPointer;
        }
        let bits = std::slice::from_raw_parts(bits, bits_len);
        match quant_error(&x.0, bits, granularity_from(block_size)) {
            Ok(v) => {
                *out = v;
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// SQNR in dB; +infinity when the residual is exactly zero.
///
/// # Safety
/// `reference` and `test` must be live handles; `out` one writable double.
#[no_mangle]
pub unsafe extern "C" fn stamp_sqnr_db(
    reference: *const StampMatrix,
    test: *const StampMatrix,
    out: *mut f64,
) -> StampStatus {
    guard(|| {
        let (Some(r), Some(t)) = (reference.as_ref(), test.as_ref()) else {
            return StampStatus::NullPointer;
        };
        if out.is_null() {
            return StampStatus::NullPointer;
        }
        match sqnr_db(&r.0, &t.0) {
            Ok(v) => {
                *out = v;
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Token energies diag(L S L^T) of an autocorrelation matrix under a
/// transform. `out` must hold `seq_len` doubles.
///
/// # Safety
/// `autocorr` and `t` must be live handles; `out` writable for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn stamp_transformed_energies(
    autocorr: *const StampMatrix,
    t: *const StampTransform,
    out: *mut f64,
    out_len: usize,
) -> StampStatus {
    guard(|| {
        let (Some(s), Some(t)) = (autocorr.as_ref(), t.as_ref()) else {
            return StampStatus::NullPointer;
        };
        if out.is_null() {
            return StampStatus::NullPointer;
        }
        if out_len != s.0.rows() {
            return StampStatus::DimensionMismatch;
        }
        let profile = match EnergyProfile::from_autocorr(s.0.clone()) {
            Ok(p) => p,
            Err(e) => return status_of(&e),
        };
        match transformed_energies(&profile, &t.0) {
            Ok(e) => {
                std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&e);
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Per-token widths of the two-level scheme plus its exact average width.
/// `out_bits` must hold `seq_len` bytes.
///
/// # Safety
/// `out_bits` must be writable for `seq_len` bytes and `out_average` for
/// one double; either may be NULL to skip that output.
#[no_mangle]
pub unsafe extern "C" fn stamp_two_level_bits(
    seq_len: usize,
    n_high_precision: usize,
    high_bits: u8,
    low_bits: u8,
    out_bits: *mut u8,
    out_average: *mut f64,
) -> StampStatus {
    guard(
        || match two_level_allocation(seq_len, n_high_precision, high_bits, low_bits) {
            Ok(alloc) => {
                if !out_bits.is_null() {
                    let widths = match alloc.integer_bits() {
                        Ok(w) => w,
                        Err(e) => return status_of(&e),
                    };
                    std::slice::from_raw_parts_mut(out_bits, seq_len).copy_from_slice(&widths);
                }
                if !out_average.is_null() {
                    *out_average = alloc.average_bits();
                }
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Continuous optimal bit allocation for the given token energies and total
/// budget; writes one double per token.
///
/// # Safety
/// `energies` must be readable and `out_bits` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stamp_optimal_bits(
    energies: *const f64,
    len: usize,
    budget: f64,
    out_bits: *mut f64,
) -> StampStatus {
    guard(|| {
        if energies.is_null() || out_bits.is_null() {
            return StampStatus::NullPointer;
        }
        let e = std::slice::from_raw_parts(energies, len);
        match stamp_core::optimal_bits_continuous(e, budget) {
            Ok(alloc) => {
                std::slice::from_raw_parts_mut(out_bits, len).copy_from_slice(alloc.bits());
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Energy-weighted quantization error bound (d/2) sum_i e_i/(2^b_i - 1)^2.
///
/// # Safety
/// `energies` and `bits` must be readable for `len` doubles; `out` one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn stamp_energy_error_bound(
    energies: *const f64,
    bits: *const f64,
    len: usize,
    feat_dim: usize,
    out: *mut f64,
) -> StampStatus {
    guard(|| {
        if energies.is_null() || bits.is_null() || out.is_null() {
            return StampStatus::NullPointer;
        }
        let e = std::slice::from_raw_parts(energies, len);
        let b = std::slice::from_raw_parts(bits, len);
        match energy_error_bound(e, b, feat_dim) {
            Ok(v) => {
                *out = v;
                StampStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Deterministic counter-PRNG draw, exposed so bindings can reproduce the
/// library's synthetic streams.
#[no_mangle]
pub extern "C" fn stamp_rng_raw(seed: u64, counter: u64) -> u64 {
    CounterRng::new(seed).raw(counter)
}
