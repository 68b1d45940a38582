//! Kuhn-Munkres linear assignment, O(n^3) shortest augmenting path with
//! row/column potentials.
//!
//! Rows are inserted in ascending order and each augmenting search scans
//! columns in ascending order, taking a new column only on a strictly
//! smaller reduced cost, so ties always resolve toward the lowest row and
//! then the lowest column index. The output is a deterministic function of
//! the matrix.

use ndarray::{Array2, ArrayView2};

use super::sinkhorn::DoublyStochasticMatrix;
use crate::error::{Error, Result};
use crate::puzzle::Permutation;

/// Minimum-cost assignment; `result[row] = column`. Requires `rows <= cols`.
fn min_cost_assignment(cost: ArrayView2<f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    debug_assert!(n <= m);
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based with index 0 as the virtual source, following the classic layout.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn check_finite(m: ArrayView2<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("assignment matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Optimal bijection for a square score matrix, maximizing or minimizing the
/// total of the selected entries.
pub fn hungarian_solve(m: ArrayView2<f64>, maximize: bool) -> Result<Permutation> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::NonSquare { rows: r, cols: c });
    }
    check_finite(m)?;
    let assignment = if maximize {
        min_cost_assignment(m.mapv(|x| -x).view())
    } else {
        min_cost_assignment(m)
    };
    Permutation::new(assignment)
}

/// Injective assignment of `n` rows into `m >= n` columns. The matrix is
/// padded with `m - n` constant rows at the worst score, solved square, and
/// the dummy rows dropped.
pub fn solve_rectangular(m: ArrayView2<f64>, maximize: bool) -> Result<Vec<usize>> {
    let (rows, cols) = m.dim();
    if rows > cols {
        return Err(Error::MoreRowsThanColumns { rows, cols });
    }
    check_finite(m)?;
    let worst = if maximize {
        m.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        m.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let mut padded = Array2::from_elem((cols, cols), worst);
    padded.slice_mut(ndarray::s![..rows, ..]).assign(&m);
    let perm = hungarian_solve(padded.view(), maximize)?;
    Ok(perm.as_slice()[..rows].to_vec())
}

/// Hungarian binarization of a Sinkhorn output. Maximizes the sum of
/// `ln S`; since `S = D1 exp(C) D2` for diagonal scalings, this is the
/// assignment maximizing the total of the underlying cost matrix, and it
/// stays exact where `S` itself has underflowed.
pub fn hungarian_binarize(s: &DoublyStochasticMatrix) -> Result<Permutation> {
    let logs = s.log_values();
    if logs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidArgument("log S has invalid entries".into()));
    }
    // Zero entries of hand-made matrices give -inf; floor them far below any
    // finite log-probability so they are never preferred.
    let floor = logs
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::min);
    let span = (s.n() as f64 + 1.0) * (floor.abs() + 1.0);
    let safe = logs.mapv(|v| if v.is_finite() { v } else { floor - span });
    hungarian_solve(safe.view(), true)
}
