use crate::error::{Error, Result};
use crate::puzzle::Permutation;

/// Fraction of present pieces placed in their ground-truth slot.
pub fn direct_accuracy(pred: &Permutation, gt: &Permutation, present: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() || present.len() != gt.len() {
        return Err(Error::SizeMismatch(format!(
            "prediction {}, ground truth {}, mask {}",
            pred.len(),
            gt.len(),
            present.len()
        )));
    }
    let counted = present.iter().filter(|&&p| p).count();
    if counted == 0 {
        return Err(Error::EmptyPresentSet);
    }
    let hits = (0..gt.len())
        .filter(|&i| present[i] && pred.slot_of(i) == gt.slot_of(i))
        .count();
    Ok(hits as f64 / counted as f64)
}

/// Fraction of ground-truth neighbor relations kept by the prediction.
///
/// Every ordered pair `(i, j)` where `j` sits directly right of or directly
/// below `i` in the ground truth is one relation; it is kept when `j` sits in
/// the same direction from `i` in the prediction. Only pairs of present
/// pieces count.
pub fn neighbor_accuracy_masked(
    pred: &Permutation,
    gt: &Permutation,
    rows: usize,
    cols: usize,
    present: &[bool],
) -> Result<f64> {
    let n = rows * cols;
    if pred.len() != n || gt.len() != n || present.len() != n {
        return Err(Error::SizeMismatch(format!(
            "{rows}x{cols} grid, prediction {}, ground truth {}, mask {}",
            pred.len(),
            gt.len(),
            present.len()
        )));
    }
    let gt_piece_at = gt.inverse();
    let pred_slot = pred.as_slice();
    let (mut total, mut kept) = (0usize, 0usize);
    for slot in 0..n {
        let (r, c) = (slot / cols, slot % cols);
        let i = gt_piece_at.slot_of(slot);
        let neighbors = [
            (c + 1 < cols).then(|| (slot + 1, 1usize, 0usize)),
            (r + 1 < rows).then(|| (slot + cols, 0, 1)),
        ];
        for (other, dc, dr) in neighbors.into_iter().flatten() {
            let j = gt_piece_at.slot_of(other);
            if !(present[i] && present[j]) {
                continue;
            }
            total += 1;
            let (pi, pj) = (pred_slot[i], pred_slot[j]);
            let (pr, pc) = (pi / cols, pi % cols);
            let (qr, qc) = (pj / cols, pj % cols);
            if qr == pr + dr && qc == pc + dc {
                kept += 1;
            }
        }
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(kept as f64 / total as f64)
}

pub fn neighbor_accuracy(pred: &Permutation, gt: &Permutation, rows: usize, cols: usize) -> Result<f64> {
    neighbor_accuracy_masked(pred, gt, rows, cols, &vec![true; gt.len()])
}
