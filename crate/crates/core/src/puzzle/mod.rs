//! Grid puzzles: pieces, permutations, slicing, shuffling, reassembly and
//! perturbations.

mod manifest;
mod perturb;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::PuzzleRng;

pub use manifest::{
    load_puzzle, read_permutation_file, save_puzzle, write_permutation_file, Manifest,
    MANIFEST_FILE, MANIFEST_SCHEMA,
};
pub use perturb::{missing_count, Perturbation};

/// One square tile. A missing piece keeps its index but holds an all-zero
/// sentinel and is excluded from metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub content: Raster,
    pub origin_index: Option<usize>,
    pub present: bool,
}

impl Piece {
    pub fn new(content: Raster, origin_index: Option<usize>) -> Self {
        Self {
            content,
            origin_index,
            present: true,
        }
    }

    pub fn side(&self) -> usize {
        self.content.height()
    }
}

/// `mapping[i]` is the slot assigned to piece `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Requires a bijection on `0..n`.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let present = vec![true; mapping.len()];
        Self::check(&mapping, &present, mapping.len())?;
        Ok(Self { mapping })
    }

    /// Requires slots in `0..slots` and injectivity on the present entries
    /// only; entries of absent pieces are carried along unchecked.
    pub fn partial(mapping: Vec<usize>, present: &[bool], slots: usize) -> Result<Self> {
        if present.len() != mapping.len() {
            return Err(Error::SizeMismatch(format!(
                "{} mapping entries, {} presence flags",
                mapping.len(),
                present.len()
            )));
        }
        Self::check(&mapping, present, slots)?;
        Ok(Self { mapping })
    }

    fn check(mapping: &[usize], present: &[bool], slots: usize) -> Result<()> {
        let mut owner: Vec<Option<usize>> = vec![None; slots];
        for (piece, (&slot, &here)) in mapping.iter().zip(present).enumerate() {
            if !here {
                continue;
            }
            if slot >= slots {
                return Err(Error::InvalidPermutation(format!(
                    "piece {piece} maps to slot {slot}, only {slots} slots"
                )));
            }
            if let Some(first) = owner[slot] {
                return Err(Error::SlotCollision {
                    first,
                    second: piece,
                    slot,
                });
            }
            owner[slot] = Some(piece);
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn slot_of(&self, piece: usize) -> usize {
        self.mapping[piece]
    }

    /// `inverse()[slot] = piece`. Only meaningful for bijections.
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.mapping.len()];
        for (piece, &slot) in self.mapping.iter().enumerate() {
            inv[slot] = piece;
        }
        Permutation { mapping: inv }
    }

    /// Space-separated slot indices.
    pub fn to_line(&self) -> String {
        self.mapping
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mapping = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::InvalidPermutation(format!("bad index {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mapping)
    }

    /// Completes a partial assignment into a bijection by handing the unused
    /// slots, in ascending order, to the absent pieces in ascending order.
    pub fn complete(assigned: &[Option<usize>]) -> Result<Self> {
        let n = assigned.len();
        let mut used = vec![false; n];
        for &slot in assigned.iter().flatten() {
            if slot >= n || used[slot] {
                return Err(Error::InvalidPermutation(format!(
                    "slot {slot} out of range or reused"
                )));
            }
            used[slot] = true;
        }
        let mut free = (0..n).filter(|&s| !used[s]);
        let mapping = assigned
            .iter()
            .map(|a| a.unwrap_or_else(|| free.next().expect("free slots match absent pieces")))
            .collect();
        Self::new(mapping)
    }
}

/// A sliced, shuffled (and possibly perturbed) puzzle. Immutable once built;
/// perturbations return new instances.
#[derive(Clone, Debug)]
pub struct PuzzleInstance {
    pieces: Vec<Piece>,
    rows: usize,
    cols: usize,
    gt_permutation: Permutation,
    seed: u64,
    source_id: String,
    source: Option<Arc<Raster>>,
    perturbations: Vec<Perturbation>,
}

impl PuzzleInstance {
    /// Assembles an instance from parts, checking every structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        pieces: Vec<Piece>,
        rows: usize,
        cols: usize,
        gt_permutation: Permutation,
        seed: u64,
        source_id: impl Into<String>,
        source: Option<Raster>,
        perturbations: Vec<Perturbation>,
    ) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("puzzle has no pieces".into()));
        }
        if pieces.len() != rows * cols {
            return Err(Error::SizeMismatch(format!(
                "{} pieces for a {rows}x{cols} grid",
                pieces.len()
            )));
        }
        if gt_permutation.len() != pieces.len() {
            return Err(Error::SizeMismatch(format!(
                "ground truth has {} entries for {} pieces",
                gt_permutation.len(),
                pieces.len()
            )));
        }
        let side = pieces[0].content.height();
        let channels = pieces[0].content.channels();
        for (i, p) in pieces.iter().enumerate() {
            let c = &p.content;
            if c.height() != side || c.width() != side || c.channels() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "piece {i} is {}x{}x{}, expected {side}x{side}x{channels}",
                    c.height(),
                    c.width(),
                    c.channels()
                )));
            }
            if !p.present && !c.is_all_zero() {
                return Err(Error::InvalidArgument(format!(
                    "missing piece {i} must hold the all-zero sentinel"
                )));
            }
        }
        if let Some(src) = &source {
            if src.height() != rows * side || src.width() != cols * side {
                return Err(Error::DimensionMismatch(format!(
                    "source {}x{} does not match {rows}x{cols} grid of {side}px pieces",
                    src.height(),
                    src.width()
                )));
            }
        }
        Ok(Self {
            pieces,
            rows,
            cols,
            gt_permutation,
            seed,
            source_id: source_id.into(),
            source: source.map(Arc::new),
            perturbations,
        })
    }

    /// Slices `image`, shuffles with `seed`, and keeps `image` as the source.
    pub fn from_image(
        image: &Raster,
        rows: usize,
        cols: usize,
        seed: u64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let pieces = slice_image(image, rows, cols)?;
        let mut puzzle = shuffle(pieces, rows, cols, seed)?;
        puzzle.source_id = source_id.into();
        Ok(puzzle)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn piece_side(&self) -> usize {
        self.pieces[0].side()
    }

    pub fn channels(&self) -> usize {
        self.pieces[0].content.channels()
    }

    pub fn gt_permutation(&self) -> &Permutation {
        &self.gt_permutation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Stable identifier `<source_id>_<rows>x<cols>`.
    pub fn id(&self) -> String {
        format!("{}_{}x{}", self.source_id, self.rows, self.cols)
    }

    pub fn source(&self) -> Option<&Raster> {
        self.source.as_deref()
    }

    pub fn perturbations(&self) -> &[Perturbation] {
        &self.perturbations
    }

    pub fn present_mask(&self) -> Vec<bool> {
        self.pieces.iter().map(|p| p.present).collect()
    }

    pub fn present_count(&self) -> usize {
        self.pieces.iter().filter(|p| p.present).count()
    }

    /// Copy with every `origin_index` cleared, as handed to solvers.
    pub fn anonymized(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.pieces {
            p.origin_index = None;
        }
        out
    }

    pub(crate) fn with_pieces(&self, pieces: Vec<Piece>, record: Perturbation) -> Self {
        let mut out = self.clone();
        out.pieces = pieces;
        out.perturbations.push(record);
        out
    }
}

/// Cuts `image` into `rows x cols` square tiles, in row-major ground-truth
/// order (piece `k` covers cell `(k / cols, k % cols)`).
pub fn slice_image(image: &Raster, rows: usize, cols: usize) -> Result<Vec<Piece>> {
    if rows == 0
        || cols == 0
        || image.height() % rows != 0
        || image.width() % cols != 0
        || image.height() == 0
    {
        return Err(Error::NonDivisibleGrid {
            height: image.height(),
            width: image.width(),
            rows,
            cols,
        });
    }
    let tile_height = image.height() / rows;
    let tile_width = image.width() / cols;
    if tile_height != tile_width {
        return Err(Error::NonSquareTile {
            tile_height,
            tile_width,
        });
    }
    (0..rows * cols)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let content = image.crop(r * tile_height, c * tile_width, tile_height, tile_width)?;
            Ok(Piece::new(content, Some(k)))
        })
        .collect()
}

/// Shuffles ground-truth-ordered pieces with a seeded Fisher-Yates pass.
/// The shuffled position `i` holds original piece `order[i]`, so the ground
/// truth maps piece `i` to slot `order[i]`.
pub fn shuffle(pieces: Vec<Piece>, rows: usize, cols: usize, seed: u64) -> Result<PuzzleInstance> {
    if pieces.is_empty() {
        return Err(Error::InvalidArgument("cannot shuffle zero pieces".into()));
    }
    let source = if pieces.iter().all(|p| p.present) && pieces.len() == rows * cols {
        let side = pieces[0].side();
        let mut canvas = Raster::zeros(rows * side, cols * side, pieces[0].content.channels());
        for (k, p) in pieces.iter().enumerate() {
            canvas.paste(&p.content, (k / cols) * side, (k % cols) * side)?;
        }
        Some(canvas)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    PuzzleRng::new(seed).shuffle(&mut order);
    let mut slots: Vec<Option<Piece>> = pieces.into_iter().map(Some).collect();
    let shuffled = order
        .iter()
        .map(|&k| slots[k].take().expect("order is a permutation"))
        .collect();
    PuzzleInstance::from_parts(
        shuffled,
        rows,
        cols,
        Permutation { mapping: order },
        seed,
        "",
        source,
        Vec::new(),
    )
}

/// Pastes piece `i` into slot `perm[i]`; slots left unfilled stay black.
pub fn reassemble(puzzle: &PuzzleInstance, perm: &Permutation) -> Result<Raster> {
    if perm.len() != puzzle.len() {
        return Err(Error::SizeMismatch(format!(
            "permutation of {} for {} pieces",
            perm.len(),
            puzzle.len()
        )));
    }
    let present = puzzle.present_mask();
    Permutation::check(perm.as_slice(), &present, puzzle.len())?;
    let side = puzzle.piece_side();
    let mut canvas = Raster::zeros(
        puzzle.rows * side,
        puzzle.cols * side,
        puzzle.channels(),
    );
    for (piece, &slot) in puzzle.pieces.iter().zip(perm.as_slice()) {
        if !piece.present {
            continue;
        }
        canvas.paste(&piece.content, (slot / puzzle.cols) * side, (slot % puzzle.cols) * side)?;
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64, h: usize, w: usize) -> Raster {
        let mut rng = PuzzleRng::new(seed);
        Raster::from_fn(h, w, 3, |_, _, _| rng.unit() as f32)
    }

    #[test]
    fn slicing_counts_and_geometry() {
        let img = random_image(1, 64, 64);
        let pieces = slice_image(&img, 2, 2).unwrap();
        assert_eq!(pieces.len(), 4);
        assert!(pieces.iter().all(|p| p.side() == 32));

        let img = random_image(2, 96, 96);
        let pieces = slice_image(&img, 3, 3).unwrap();
        assert_eq!(pieces.len(), 9);
        assert_eq!(pieces[5].origin_index, Some(5));
        assert_eq!(pieces[5].content, img.crop(32, 64, 32, 32).unwrap());
    }

    #[test]
    fn slicing_errors() {
        let img = random_image(1, 64, 60);
        assert!(matches!(
            slice_image(&img, 3, 3),
            Err(Error::NonDivisibleGrid { .. })
        ));
        assert!(matches!(
            slice_image(&img, 2, 2),
            Err(Error::NonSquareTile { .. })
        ));
    }

    #[test]
    fn slice_then_identity_reassembly_round_trips() {
        for seed in 0..20 {
            let rows = 1 + (seed as usize % 4);
            let cols = 1 + ((seed as usize / 4) % 3);
            let side = 4 + seed as usize % 5;
            let img = random_image(seed, rows * side, cols * side);
            let pieces = slice_image(&img, rows, cols).unwrap();
            let puzzle = PuzzleInstance::from_parts(
                pieces,
                rows,
                cols,
                Permutation::identity(rows * cols),
                0,
                "x",
                None,
                vec![],
            )
            .unwrap();
            assert_eq!(
                reassemble(&puzzle, &Permutation::identity(rows * cols)).unwrap(),
                img
            );
        }
    }

    #[test]
    fn shuffle_is_deterministic() {
        let img = random_image(3, 128, 128);
        let a = PuzzleInstance::from_image(&img, 4, 4, 99, "a").unwrap();
        let b = PuzzleInstance::from_image(&img, 4, 4, 99, "a").unwrap();
        assert_eq!(a.gt_permutation(), b.gt_permutation());
        assert_eq!(a.pieces(), b.pieces());
        assert_eq!(reassemble(&a, a.gt_permutation()).unwrap(), img);
        assert_eq!(a.source(), Some(&img));
    }

    #[test]
    fn singleton_shuffle() {
        let img = random_image(4, 8, 8);
        let p = PuzzleInstance::from_image(&img, 1, 1, 5, "s").unwrap();
        assert_eq!(p.gt_permutation().as_slice(), &[0]);
    }

    #[test]
    fn shuffle_matches_reference_script() {
        // Frozen from tests/oracles/reference_shuffle.py --n 16 --seed 7.
        let img = random_image(5, 16, 16);
        let p = PuzzleInstance::from_image(&img, 4, 4, 7, "r").unwrap();
        assert_eq!(
            p.gt_permutation().as_slice(),
            &REFERENCE_N16_SEED7
        );
    }

    const REFERENCE_N16_SEED7: [usize; 16] = [6, 14, 11, 0, 5, 4, 15, 7, 2, 9, 12, 13, 8, 3, 10, 1];

    #[test]
    fn reversed_2x2_is_tile_rotation() {
        let img = random_image(6, 8, 8);
        let pieces = slice_image(&img, 2, 2).unwrap();
        let puzzle = PuzzleInstance::from_parts(
            pieces.clone(),
            2,
            2,
            Permutation::identity(4),
            0,
            "r",
            None,
            vec![],
        )
        .unwrap();
        let out = reassemble(&puzzle, &Permutation::new(vec![3, 2, 1, 0]).unwrap()).unwrap();
        assert_eq!(out.crop(0, 0, 4, 4).unwrap(), pieces[3].content);
        assert_eq!(out.crop(0, 4, 4, 4).unwrap(), pieces[2].content);
        assert_eq!(out.crop(4, 0, 4, 4).unwrap(), pieces[1].content);
        assert_eq!(out.crop(4, 4, 4, 4).unwrap(), pieces[0].content);
    }

    #[test]
    fn collision_is_rejected() {
        let img = random_image(7, 8, 8);
        let puzzle = PuzzleInstance::from_image(&img, 2, 2, 1, "c").unwrap();
        let bad = Permutation {
            mapping: vec![0, 0, 1, 2],
        };
        assert!(matches!(
            reassemble(&puzzle, &bad),
            Err(Error::SlotCollision { .. })
        ));
        assert!(Permutation::new(vec![0, 0, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 4, 1, 2]).is_err());
    }

    #[test]
    fn partial_permutation_ignores_absent_pieces() {
        let present = [true, false, true];
        assert!(Permutation::partial(vec![2, 2, 0], &present, 3).is_ok());
        assert!(Permutation::partial(vec![2, 0, 2], &present, 3).is_err());
    }

    #[test]
    fn complete_fills_free_slots() {
        let p = Permutation::complete(&[Some(2), None, Some(0), None]).unwrap();
        assert_eq!(p.as_slice(), &[2, 1, 0, 3]);
    }

    #[test]
    fn line_round_trip() {
        let p = Permutation::new(vec![3, 0, 2, 1]).unwrap();
        assert_eq!(Permutation::parse_line(&p.to_line()).unwrap(), p);
        assert!(Permutation::parse_line("0 x").is_err());
    }
}
