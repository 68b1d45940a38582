//! Sinkhorn normalization of `exp(C)` in the log domain, with an exact
//! reverse pass through the executed iterations.
//!
//! One iteration is a row normalization followed by a column normalization.
//! Convergence is tested on the row sums of the current iterate (columns
//! are exactly normalized after every iteration).

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Output of [`sinkhorn_normalize`]. `iterations_used` is `None` for
/// matrices built by hand, which cannot be differentiated.
#[derive(Clone, Debug)]
pub struct DoublyStochasticMatrix {
    values: Array2<f64>,
    log_values: Array2<f64>,
    achieved_tolerance: f64,
    iterations_used: Option<usize>,
}

impl DoublyStochasticMatrix {
    /// Wraps a hand-made nonnegative square matrix. Carries no iteration
    /// record.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::NonSquare { rows: r, cols: c });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "doubly stochastic entries must be finite and nonnegative".into(),
            ));
        }
        let log_values = values.mapv(f64::ln);
        let achieved_tolerance = max_marginal_deviation(values.view());
        Ok(Self {
            values,
            log_values,
            achieved_tolerance,
            iterations_used: None,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Elementwise `ln S`, kept at full precision where `S` underflows.
    pub fn log_values(&self) -> &Array2<f64> {
        &self.log_values
    }

    pub fn achieved_tolerance(&self) -> f64 {
        self.achieved_tolerance
    }

    pub fn iterations_used(&self) -> Option<usize> {
        self.iterations_used
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Max over rows and columns of `|sum - 1|`.
pub fn max_marginal_deviation(m: ArrayView2<f64>) -> f64 {
    let rows = m
        .sum_axis(Axis(1))
        .iter()
        .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()));
    let cols = m
        .sum_axis(Axis(0))
        .iter()
        .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()));
    rows.max(cols)
}

fn check_square_finite(c: ArrayView2<f64>) -> Result<usize> {
    let (r, k) = c.dim();
    if r != k {
        return Err(Error::NonSquare { rows: r, cols: k });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("cost matrix has non-finite entries".into()));
    }
    Ok(r)
}

/// Per-row log-sum-exp.
fn row_lse(x: &Array2<f64>, out: &mut [f64]) {
    for (row, slot) in x.rows().into_iter().zip(out.iter_mut()) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        *slot = m + s.ln();
    }
}

/// Per-column log-sum-exp, walking rows for cache locality.
fn col_lse(x: &Array2<f64>, max: &mut [f64], out: &mut [f64]) {
    max.fill(f64::NEG_INFINITY);
    for row in x.rows() {
        for (m, v) in max.iter_mut().zip(row) {
            *m = m.max(*v);
        }
    }
    out.fill(0.0);
    for row in x.rows() {
        for ((s, m), v) in out.iter_mut().zip(max.iter()).zip(row) {
            *s += (v - m).exp();
        }
    }
    for (s, m) in out.iter_mut().zip(max.iter()) {
        *s = m + s.ln();
    }
}

fn degenerate(lse: &[f64], what: &str) -> Result<()> {
    if lse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("{what} mass under- or overflowed")));
    }
    Ok(())
}

/// Alternating row/column normalization of `exp(C)`, run until the max
/// marginal deviation drops below `tol` or `max_iters` iterations have been
/// applied. `tol = 0` runs exactly `max_iters` iterations.
pub fn sinkhorn_normalize(
    c: ArrayView2<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<DoublyStochasticMatrix> {
    let n = check_square_finite(c)?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tol}")));
    }
    let mut x = c.to_owned();
    let mut lse = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut iters = 0;
    loop {
        row_lse(&x, &mut lse);
        degenerate(&lse, "row")?;
        if iters > 0 && tol > 0.0 {
            let dev = lse.iter().fold(0.0f64, |a, l| a.max((l.exp() - 1.0).abs()));
            if dev < tol {
                break;
            }
        }
        if iters == max_iters {
            break;
        }
        for (mut row, l) in x.rows_mut().into_iter().zip(&lse) {
            row -= *l;
        }
        col_lse(&x, &mut scratch, &mut lse);
        degenerate(&lse, "column")?;
        for mut row in x.rows_mut() {
            Zip::from(&mut row).and(&lse[..]).for_each(|v, l| *v -= l);
        }
        iters += 1;
    }
    let values = x.mapv(f64::exp);
    let achieved_tolerance = max_marginal_deviation(values.view());
    Ok(DoublyStochasticMatrix {
        values,
        log_values: x,
        achieved_tolerance,
        iterations_used: Some(iters),
    })
}

/// Gradient of a scalar loss with respect to `C`, given its gradient with
/// respect to `S = sinkhorn_normalize(C)`. Replays the recorded number of
/// iterations and backpropagates through each normalization:
/// for `y = x - lse(x)` along an axis, `dx = g - exp(y) * sum(g)` along it.
pub fn sinkhorn_backward(
    c: ArrayView2<f64>,
    s: &DoublyStochasticMatrix,
    upstream: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let iters = s.iterations_used.ok_or(Error::IterationRecordMissing)?;
    let n = check_square_finite(c)?;
    if s.n() != n || upstream.dim() != (n, n) {
        return Err(Error::SizeMismatch(format!(
            "cost {n}x{n}, S {}x{}, upstream {:?}",
            s.n(),
            s.n(),
            upstream.dim()
        )));
    }
    // Forward replay, keeping exp of every half-step output.
    let mut x = c.to_owned();
    let mut lse = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut after_row = Vec::with_capacity(iters);
    let mut after_col = Vec::with_capacity(iters);
    for _ in 0..iters {
        row_lse(&x, &mut lse);
        for (mut row, l) in x.rows_mut().into_iter().zip(&lse) {
            row -= *l;
        }
        after_row.push(x.mapv(f64::exp));
        col_lse(&x, &mut scratch, &mut lse);
        for mut row in x.rows_mut() {
            Zip::from(&mut row).and(&lse[..]).for_each(|v, l| *v -= l);
        }
        after_col.push(x.mapv(f64::exp));
    }
    let final_s = x.mapv(f64::exp);
    let mut g = &upstream * &final_s;
    for (p_row, p_col) in after_row.iter().zip(&after_col).rev() {
        let col_sums = g.sum_axis(Axis(0));
        for (mut g_row, p) in g.rows_mut().into_iter().zip(p_col.rows()) {
            Zip::from(&mut g_row)
                .and(&p)
                .and(&col_sums)
                .for_each(|gv, pv, sv| *gv -= pv * sv);
        }
        let row_sums = g.sum_axis(Axis(1));
        for ((mut g_row, p), sv) in g.rows_mut().into_iter().zip(p_row.rows()).zip(&row_sums) {
            Zip::from(&mut g_row).and(&p).for_each(|gv, pv| *gv -= pv * sv);
        }
    }
    Ok(g)
}
