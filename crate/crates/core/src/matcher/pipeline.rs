//! Inference: provider -> slot crops -> embeddings -> cost matrix ->
//! Sinkhorn -> Hungarian.

use ndarray::{s, Array2, ArrayView2};

use super::embed::{Embedder, Embeddings};
use super::provider::{MentalImage, MentalImageProvider};
use crate::assignment::{hungarian_binarize, sinkhorn_normalize, CostMatrix};
use crate::error::{Error, Result};
use crate::puzzle::{Permutation, PuzzleInstance};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    pub sinkhorn_iters: usize,
    pub tolerance: f64,
    /// Scores are divided by `tau` before Sinkhorn.
    pub tau: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            sinkhorn_iters: 100,
            tolerance: 1e-6,
            tau: 0.1,
        }
    }
}

/// One RoiAlign crop per slot, row-major, each resampled to
/// `out_side x out_side`.
pub fn roi_crop_slots(
    mental: &MentalImage,
    rows: usize,
    cols: usize,
    out_side: usize,
) -> Result<Vec<Raster>> {
    let r = &mental.raster;
    if rows == 0 || cols == 0 || r.height() % rows != 0 || r.width() % cols != 0 {
        return Err(Error::DimensionMismatch(format!(
            "mental image {}x{} is not divisible into a {rows}x{cols} grid",
            r.height(),
            r.width()
        )));
    }
    let (h, w) = (r.height() / rows, r.width() / cols);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(r.roi_align(
                (i * h) as f64,
                (j * w) as f64,
                h as f64,
                w as f64,
                out_side,
                out_side,
            ));
        }
    }
    Ok(out)
}

/// `C[i][j] = piece_i . slot_j`.
pub fn cost_matrix(pieces: ArrayView2<f64>, slots: ArrayView2<f64>) -> Result<CostMatrix> {
    if pieces.ncols() != slots.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "piece embeddings have {} dims, slot embeddings {}",
            pieces.ncols(),
            slots.ncols()
        )));
    }
    Ok(pieces.dot(&slots.t()))
}

/// Turns a `k x n` score matrix over the present pieces into a full
/// permutation. The matrix is padded to `n x n` with constant rows at its
/// minimum, normalized, and binarized; the present pieces keep their slots
/// and the missing ones receive the leftover slots in ascending order.
pub fn assign_from_scores(
    scores: ArrayView2<f64>,
    present: &[bool],
    config: &SolveConfig,
) -> Result<Permutation> {
    let n = present.len();
    let k = present.iter().filter(|&&p| p).count();
    if scores.dim() != (k, n) {
        return Err(Error::SizeMismatch(format!(
            "scores {:?} for {k} present pieces over {n} slots",
            scores.dim()
        )));
    }
    if !(config.tau > 0.0) {
        return Err(Error::NonPositiveTemperature(config.tau));
    }
    if k == 0 {
        return Ok(Permutation::identity(n));
    }
    let floor = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut square = Array2::from_elem((n, n), floor);
    square.slice_mut(s![..k, ..]).assign(&scores);
    square /= config.tau;
    let s = sinkhorn_normalize(square.view(), config.sinkhorn_iters, config.tolerance)?;
    let full = hungarian_binarize(&s)?;
    let mut rows = full.as_slice()[..k].iter();
    let assigned: Vec<Option<usize>> = present
        .iter()
        .map(|&p| if p { rows.next().copied() } else { None })
        .collect();
    Permutation::complete(&assigned)
}

/// Embeddings of the present pieces and of every slot.
pub fn embed_puzzle(
    puzzle: &PuzzleInstance,
    mental: &MentalImage,
    embedder: &dyn Embedder,
) -> Result<(Embeddings, Embeddings)> {
    let present: Vec<&Raster> = puzzle
        .pieces()
        .iter()
        .filter(|p| p.present)
        .map(|p| &p.content)
        .collect();
    let side = embedder.slot_side(puzzle.piece_side());
    let crops = roi_crop_slots(mental, puzzle.rows(), puzzle.cols(), side)?;
    let crop_refs: Vec<&Raster> = crops.iter().collect();
    Ok((embedder.embed_pieces(&present)?, embedder.embed_slots(&crop_refs)?))
}

pub fn solve_puzzle(
    puzzle: &PuzzleInstance,
    provider: &dyn MentalImageProvider,
    embedder: &dyn Embedder,
    config: &SolveConfig,
) -> Result<Permutation> {
    let mental = provider.provide(puzzle)?;
    solve_with_mental_image(puzzle, &mental, embedder, config)
}

pub fn solve_with_mental_image(
    puzzle: &PuzzleInstance,
    mental: &MentalImage,
    embedder: &dyn Embedder,
    config: &SolveConfig,
) -> Result<Permutation> {
    if puzzle.present_count() == 0 {
        return Ok(Permutation::identity(puzzle.len()));
    }
    let (pieces, slots) = embed_puzzle(puzzle, mental, embedder)?;
    let scores = cost_matrix(pieces.vectors.view(), slots.vectors.view())?;
    assign_from_scores(scores.view(), &puzzle.present_mask(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::embed::{EmbeddingNet, NetShape, RawPixelEmbedder};
    use crate::matcher::provider::OracleProvider;
    use crate::puzzle::reassemble;
    use crate::rng::PuzzleRng;
    use ndarray::array;

    fn noise_image(side: usize, seed: u64) -> Raster {
        let mut rng = PuzzleRng::new(seed);
        let mut r = Raster::from_fn(side, side, 3, |_, _, _| rng.unit() as f32);
        r.quantize_u8();
        r
    }

    fn mental(r: Raster) -> MentalImage {
        MentalImage {
            raster: r,
            provider_tag: "test".into(),
        }
    }

    #[test]
    fn constant_tiles_give_constant_crops() {
        let r = Raster::from_fn(8, 8, 1, |y, x, _| ((y / 4) * 2 + x / 4) as f32 / 4.0);
        let crops = roi_crop_slots(&mental(r), 2, 2, 3).unwrap();
        for (k, c) in crops.iter().enumerate() {
            assert!(c.data().iter().all(|&v| v == k as f32 / 4.0));
        }
    }

    #[test]
    fn native_crops_are_exact() {
        let r = noise_image(12, 1);
        let crops = roi_crop_slots(&mental(r.clone()), 3, 3, 4).unwrap();
        for (k, c) in crops.iter().enumerate() {
            assert_eq!(*c, r.crop(4 * (k / 3), 4 * (k % 3), 4, 4).unwrap());
        }
    }

    #[test]
    fn half_size_crops_are_average_pooling() {
        let r = noise_image(16, 2);
        let crops = roi_crop_slots(&mental(r.clone()), 2, 2, 4).unwrap();
        for (k, crop) in crops.iter().enumerate() {
            let (y0, x0) = (8 * (k / 2), 8 * (k % 2));
            for i in 0..4 {
                for j in 0..4 {
                    for c in 0..3 {
                        let mut acc = 0.0f64;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            acc += r.get(y0 + 2 * i + dy, x0 + 2 * j + dx, c) as f64;
                        }
                        assert!((crop.get(i, j, c) as f64 - acc / 4.0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn crops_reject_indivisible_grid() {
        assert!(matches!(
            roi_crop_slots(&mental(Raster::zeros(10, 10, 3)), 3, 3, 4),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn cost_matrix_cases() {
        let e = Array2::<f64>::eye(3);
        assert_eq!(cost_matrix(e.view(), e.view()).unwrap(), e);
        let same = Array2::from_elem((3, 4), 0.5);
        assert!(cost_matrix(same.view(), same.view()).unwrap().iter().all(|&v| v == 1.0));
        let mut rng = PuzzleRng::new(5);
        let a = Array2::from_shape_fn((5, 7), |_| rng.uniform(-1.0, 1.0));
        let b = Array2::from_shape_fn((4, 7), |_| rng.uniform(-1.0, 1.0));
        let c = cost_matrix(a.view(), b.view()).unwrap();
        assert_eq!(c.dim(), (5, 4));
        for i in 0..5 {
            for j in 0..4 {
                let naive: f64 = (0..7).map(|d| a[[i, d]] * b[[j, d]]).sum();
                assert!((c[[i, j]] - naive).abs() < 1e-12);
            }
        }
        assert!(matches!(
            cost_matrix(a.view(), array![[1.0]].view()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn oracle_raw_pixels_solves_exactly() {
        for (k, seed) in [(2, 1), (3, 2), (5, 3)] {
            let img = noise_image(8 * k, seed);
            let p = PuzzleInstance::from_image(&img, k, k, seed, "n").unwrap();
            let got = solve_puzzle(&p, &OracleProvider::new(0.0), &RawPixelEmbedder, &SolveConfig::default())
                .unwrap();
            assert_eq!(&got, p.gt_permutation());
        }
    }

    #[test]
    fn identical_pieces_reassemble_to_source() {
        let img = Raster::filled(16, 16, 3, 0.5);
        let p = PuzzleInstance::from_image(&img, 4, 4, 9, "flat").unwrap();
        let got = solve_puzzle(&p, &OracleProvider::new(0.0), &RawPixelEmbedder, &SolveConfig::default())
            .unwrap();
        assert_eq!(reassemble(&p, &got).unwrap(), img);
    }

    #[test]
    fn missing_pieces_stay_injective() {
        let img = noise_image(24, 4);
        let p = PuzzleInstance::from_image(&img, 3, 3, 4, "n")
            .unwrap()
            .perturb_missing(0.3, 5)
            .unwrap();
        let got = solve_puzzle(&p, &OracleProvider::new(0.0), &RawPixelEmbedder, &SolveConfig::default())
            .unwrap();
        for (i, present) in p.present_mask().into_iter().enumerate() {
            if present {
                assert_eq!(got.slot_of(i), p.gt_permutation().slot_of(i));
            }
        }
    }

    #[test]
    fn one_network_handles_every_size() {
        let net = EmbeddingNet::new(&NetShape::standard(3, 16), 2);
        for k in [2, 3, 5] {
            let p = PuzzleInstance::from_image(&noise_image(8 * k, k as u64), k, k, 1, "n").unwrap();
            let got = solve_puzzle(&p, &OracleProvider::new(1.0), &net, &SolveConfig::default()).unwrap();
            assert_eq!(got.len(), k * k);
        }
    }
}
