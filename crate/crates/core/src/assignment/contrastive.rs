use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::puzzle::Permutation;

#[derive(Clone, Debug)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad_pieces: Array2<f64>,
    pub grad_slots: Array2<f64>,
}

/// InfoNCE over one puzzle: for every piece `i`, the logits are
/// `piece_i . slot_k / tau` over all slots `k`, the positive is `gt[i]`,
/// every other slot of the same puzzle is a negative. Mean over pieces.
///
/// Embeddings are rows of `pieces` (n x d) and `slots` (n x d).
pub fn contrastive_loss(
    pieces: ArrayView2<f64>,
    slots: ArrayView2<f64>,
    gt: &Permutation,
    tau: f64,
) -> Result<ContrastiveOutput> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let (n, d) = pieces.dim();
    if slots.dim() != (n, d) || gt.len() != n {
        return Err(Error::SizeMismatch(format!(
            "pieces {:?}, slots {:?}, ground truth {}",
            pieces.dim(),
            slots.dim(),
            gt.len()
        )));
    }
    let mut grad_pieces = Array2::zeros((n, d));
    let mut grad_slots = Array2::zeros((n, d));
    if n == 0 {
        return Ok(ContrastiveOutput {
            loss: 0.0,
            grad_pieces,
            grad_slots,
        });
    }
    let logits = pieces.dot(&slots.t()) / tau;
    let mut loss = 0.0;
    // dL/dlogits, already divided by n.
    let mut dlogits = Array2::zeros((n, n));
    for i in 0..n {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + z.ln();
        let pos = gt.slot_of(i);
        loss += lse - row[pos];
        for k in 0..n {
            dlogits[[i, k]] = (row[k] - lse).exp() / n as f64;
        }
        dlogits[[i, pos]] -= 1.0 / n as f64;
    }
    grad_pieces.assign(&(dlogits.dot(&slots) / tau));
    grad_slots.assign(&(dlogits.t().dot(&pieces) / tau));
    Ok(ContrastiveOutput {
        loss: loss / n as f64,
        grad_pieces,
        grad_slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PuzzleRng;
    use ndarray::array;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = PuzzleRng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn single_pair_has_no_negatives() {
        let e = array![[0.3, 0.4]];
        let out = contrastive_loss(e.view(), e.view(), &Permutation::identity(1), 0.1).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn orthonormal_pair() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let out = contrastive_loss(e.view(), e.view(), &Permutation::identity(2), 1.0).unwrap();
        let want = -(std::f64::consts::E / (std::f64::consts::E + 1.0)).ln();
        assert!((out.loss - want).abs() < 1e-12);
        assert!((out.loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            contrastive_loss(e.view(), e.view(), &Permutation::identity(2), 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
        let f = array![[1.0, 0.0]];
        assert!(matches!(
            contrastive_loss(e.view(), f.view(), &Permutation::identity(2), 1.0),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = random(8, 16, 1);
        let s = random(8, 16, 2);
        let gt = Permutation::new(vec![3, 0, 7, 1, 6, 2, 5, 4]).unwrap();
        let tau = 0.5;
        let out = contrastive_loss(p.view(), s.view(), &gt, tau).unwrap();
        let h = 1e-5;
        let f = |p: &Array2<f64>, s: &Array2<f64>| contrastive_loss(p.view(), s.view(), &gt, tau).unwrap().loss;
        let mut fd_p = Array2::zeros(p.dim());
        let mut fd_s = Array2::zeros(s.dim());
        for idx in ndarray::indices(p.dim()) {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[idx] += h;
            b[idx] -= h;
            fd_p[idx] = (f(&a, &s) - f(&b, &s)) / (2.0 * h);
            let (mut a, mut b) = (s.clone(), s.clone());
            a[idx] += h;
            b[idx] -= h;
            fd_s[idx] = (f(&p, &a) - f(&p, &b)) / (2.0 * h);
        }
        for (analytic, fd) in [(&out.grad_pieces, &fd_p), (&out.grad_slots, &fd_s)] {
            let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let err = (analytic - fd).iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
            assert!(err < 1e-4, "relative error {err}");
        }
    }
}
