//! C ABI over `jigsaw-core`.
//!
//! Every fallible function returns a [`JigsawStatus`]; on anything other
//! than `JIGSAW_OK` a message is available from [`jigsaw_last_error`] on the
//! same thread. Puzzles and weights are opaque handles owned by the caller
//! and released with their `_free` function. Permutations are written as
//! `size_t` arrays where entry `i` is the slot of piece `i`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use jigsaw_core::assignment::{hungarian_solve, sinkhorn_normalize};
use jigsaw_core::baselines::solve_greedy;
use jigsaw_core::eval::direct_accuracy;
use jigsaw_core::matcher::{
    solve_puzzle, EmbeddingNet, OracleProvider, RawPixelEmbedder, SolveConfig,
};
use jigsaw_core::puzzle::{load_puzzle, Permutation, PuzzleInstance};
use jigsaw_core::raster::Raster;
use jigsaw_core::Error;
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JigsawStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeMismatch = 3,
    BufferTooSmall = 4,
    Io = 5,
    Format = 6,
    Numeric = 7,
    SourceUnavailable = 8,
    Panic = 99,
}

/// A shuffled puzzle.
pub struct JigsawPuzzle(PuzzleInstance);

/// Trained matcher embedding weights.
pub struct JigsawWeights(EmbeddingNet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> JigsawStatus {
    match e {
        Error::SizeMismatch(_)
        | Error::DimensionMismatch(_)
        | Error::ShapeMismatch(_)
        | Error::NonDivisibleGrid { .. }
        | Error::NonSquareTile { .. }
        | Error::NonSquare { .. }
        | Error::MoreRowsThanColumns { .. } => JigsawStatus::SizeMismatch,
        Error::Io { .. } | Error::NoImagesFound(_) => JigsawStatus::Io,
        Error::Decode { .. } | Error::WeightsFormat(_) | Error::Json(_) | Error::Csv(_) => JigsawStatus::Format,
        Error::Degenerate(_) | Error::NaNLoss { .. } => JigsawStatus::Numeric,
        Error::SourceUnavailable(_) => JigsawStatus::SourceUnavailable,
        _ => JigsawStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (JigsawStatus, String)>) -> JigsawStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JigsawStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            JigsawStatus::Panic
        }
    }
}

fn core<T>(r: jigsaw_core::Result<T>) -> Result<T, (JigsawStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (JigsawStatus, String) {
    (JigsawStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (JigsawStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (JigsawStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for `len` writes.
unsafe fn write_perm(perm: &Permutation, out: *mut usize, len: usize) -> Result<(), (JigsawStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < perm.len() {
        return Err((
            JigsawStatus::BufferTooSmall,
            format!("output holds {len} entries, need {}", perm.len()),
        ));
    }
    ptr::copy_nonoverlapping(perm.as_slice().as_ptr(), out, perm.len());
    Ok(())
}

/// # Safety
/// `p` is null or valid for `n` reads.
unsafe fn perm_arg(p: *const usize, n: usize, what: &str) -> Result<Permutation, (JigsawStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    core(Permutation::new(std::slice::from_raw_parts(p, n).to_vec()))
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jigsaw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn jigsaw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a puzzle directory written by `jigsaw generate`.
///
/// # Safety
/// `dir` is a NUL-terminated path; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_load(dir: *const c_char, out: *mut *mut JigsawPuzzle) -> JigsawStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let puzzle = core(load_puzzle(&path_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(JigsawPuzzle(puzzle)));
        Ok(())
    })
}

/// Cuts an interleaved 8-bit RGB image (`height * width * 3` bytes) into a
/// `rows x cols` puzzle shuffled with `seed`. The image is kept as the
/// puzzle's source, so the oracle mental image is available.
///
/// # Safety
/// `pixels` is valid for `height * width * 3` reads; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_from_rgb(
    pixels: *const u8,
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    out: *mut *mut JigsawPuzzle,
) -> JigsawStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(3))
            .ok_or((JigsawStatus::InvalidArgument, "image too large".to_string()))?;
        let bytes = std::slice::from_raw_parts(pixels, len);
        let image = core(Raster::from_u8(height, width, 3, bytes))?;
        let puzzle = core(PuzzleInstance::from_image(&image, rows, cols, seed, "ffi"))?;
        *out = Box::into_raw(Box::new(JigsawPuzzle(puzzle)));
        Ok(())
    })
}

/// # Safety
/// `puzzle` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_free(puzzle: *mut JigsawPuzzle) {
    if !puzzle.is_null() {
        drop(Box::from_raw(puzzle));
    }
}

/// Number of pieces, 0 for a null handle.
///
/// # Safety
/// `puzzle` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_len(puzzle: *const JigsawPuzzle) -> usize {
    puzzle.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `puzzle` is a live handle; `rows` and `cols` are valid pointers.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_grid(
    puzzle: *const JigsawPuzzle,
    rows: *mut usize,
    cols: *mut usize,
) -> JigsawStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        *rows = p.0.rows();
        *cols = p.0.cols();
        Ok(())
    })
}

/// Writes the ground-truth permutation.
///
/// # Safety
/// `puzzle` is a live handle; `out` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_puzzle_ground_truth(
    puzzle: *const JigsawPuzzle,
    out: *mut usize,
    len: usize,
) -> JigsawStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        write_perm(p.0.gt_permutation(), out, len)
    })
}

/// Loads matcher weights saved by `jigsaw train`.
///
/// # Safety
/// `path` is a NUL-terminated path; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_weights_load(path: *const c_char, out: *mut *mut JigsawWeights) -> JigsawStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = core(EmbeddingNet::load(&path_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(JigsawWeights(net)));
        Ok(())
    })
}

/// # Safety
/// `weights` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_weights_free(weights: *mut JigsawWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// Solves with the matcher against the oracle mental image blurred by
/// `blur_radius` (0 for the exact source). `weights` may be null, in which
/// case raw pixels are compared. `tau` is the Sinkhorn temperature.
///
/// # Safety
/// `puzzle` is a live handle; `weights` is null or live; `out` is valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_solve_matcher(
    puzzle: *const JigsawPuzzle,
    weights: *const JigsawWeights,
    blur_radius: f64,
    tau: f64,
    out: *mut usize,
    len: usize,
) -> JigsawStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        if !(blur_radius >= 0.0) {
            return Err((JigsawStatus::InvalidArgument, format!("blur radius {blur_radius}")));
        }
        let config = SolveConfig {
            tau,
            ..SolveConfig::default()
        };
        let provider = OracleProvider::new(blur_radius);
        let input = p.0.anonymized();
        let perm = match weights.as_ref() {
            Some(w) => core(solve_puzzle(&input, &provider, &w.0, &config))?,
            None => core(solve_puzzle(&input, &provider, &RawPixelEmbedder, &config))?,
        };
        write_perm(&perm, out, len)
    })
}

/// Solves with the greedy boundary-compatibility baseline.
///
/// # Safety
/// `puzzle` is a live handle; `out` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_solve_greedy(puzzle: *const JigsawPuzzle, out: *mut usize, len: usize) -> JigsawStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        let perm = core(solve_greedy(&p.0.anonymized()))?;
        write_perm(&perm, out, len)
    })
}

/// Sinkhorn normalization of `exp(c)` for a row-major `n x n` matrix;
/// writes the doubly stochastic result to `out` (`n * n` entries).
///
/// # Safety
/// `c` is valid for `n * n` reads and `out` for `n * n` writes.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_sinkhorn(
    c: *const f64,
    n: usize,
    max_iters: usize,
    tol: f64,
    out: *mut f64,
) -> JigsawStatus {
    guard(|| {
        if c.is_null() || out.is_null() {
            return Err(null("c/out"));
        }
        let len = n.checked_mul(n).ok_or((JigsawStatus::InvalidArgument, "n too large".to_string()))?;
        let view = ArrayView2::from_shape((n, n), std::slice::from_raw_parts(c, len)).expect("length checked");
        let s = core(sinkhorn_normalize(view, max_iters, tol))?;
        for (i, v) in s.values().iter().enumerate() {
            *out.add(i) = *v;
        }
        Ok(())
    })
}

/// Optimal assignment of a row-major `n x n` score matrix; `out[i]` is the
/// column of row `i`.
///
/// # Safety
/// `m` is valid for `n * n` reads and `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_hungarian(m: *const f64, n: usize, maximize: bool, out: *mut usize) -> JigsawStatus {
    guard(|| {
        if m.is_null() {
            return Err(null("m"));
        }
        let len = n.checked_mul(n).ok_or((JigsawStatus::InvalidArgument, "n too large".to_string()))?;
        let view = ArrayView2::from_shape((n, n), std::slice::from_raw_parts(m, len)).expect("length checked");
        let perm = core(hungarian_solve(view, maximize))?;
        write_perm(&perm, out, n)
    })
}

/// Fraction of pieces whose predicted slot matches the ground truth.
///
/// # Safety
/// `pred` and `gt` are valid for `n` reads; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jigsaw_direct_accuracy(
    pred: *const usize,
    gt: *const usize,
    n: usize,
    out: *mut f64,
) -> JigsawStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (pred, gt) = (perm_arg(pred, n, "pred")?, perm_arg(gt, n, "gt")?);
        *out = core(direct_accuracy(&pred, &gt, &vec![true; n]))?;
        Ok(())
    })
}
