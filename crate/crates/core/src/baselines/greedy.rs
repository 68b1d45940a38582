//! Edge-compatibility baseline: boundary SSD, best buddies, and a greedy
//! placer growing from a seed piece.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{Permutation, PuzzleInstance};
use crate::raster::Raster;

/// Where `b` sits relative to `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Right,
    Left,
    Up,
    Down,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Right, Relation::Left, Relation::Up, Relation::Down];

    pub fn opposite(self) -> Relation {
        match self {
            Relation::Right => Relation::Left,
            Relation::Left => Relation::Right,
            Relation::Up => Relation::Down,
            Relation::Down => Relation::Up,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Grid offset `(dy, dx)` from `a` to `b`.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Relation::Right => (0, 1),
            Relation::Left => (0, -1),
            Relation::Up => (-1, 0),
            Relation::Down => (1, 0),
        }
    }
}

/// Sum of squared differences between the edge of `a` facing `b` and the
/// adjoining edge of `b`, over all channels.
pub fn boundary_dissimilarity(a: &Raster, b: &Raster, relation: Relation) -> Result<f64> {
    if !a.same_shape(b) || a.height() != a.width() {
        return Err(Error::SizeMismatch(format!(
            "pieces {}x{}x{} and {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    let side = a.height();
    let last = side - 1;
    let mut sum = 0.0f64;
    for t in 0..side {
        let ((ay, ax), (by, bx)) = match relation {
            Relation::Right => ((t, last), (t, 0)),
            Relation::Left => ((t, 0), (t, last)),
            Relation::Up => ((0, t), (last, t)),
            Relation::Down => ((last, t), (0, t)),
        };
        for c in 0..a.channels() {
            let d = a.get(ay, ax, c) as f64 - b.get(by, bx, c) as f64;
            sum += d * d;
        }
    }
    Ok(sum)
}

/// Dissimilarities of every ordered piece pair under every relation. The
/// diagonal is `+inf` so a piece is never its own neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityTable {
    n: usize,
    scores: Vec<f64>,
}

impl CompatibilityTable {
    pub fn build(pieces: &[&Raster]) -> Result<Self> {
        let n = pieces.len();
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![f64::INFINITY; n * 4];
                for j in (0..n).filter(|&j| j != i) {
                    for r in Relation::ALL {
                        row[j * 4 + r.index()] = boundary_dissimilarity(pieces[i], pieces[j], r)?;
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            scores: rows.concat(),
        })
    }

    pub fn for_puzzle(puzzle: &PuzzleInstance) -> Result<Self> {
        Self::build(&puzzle.pieces().iter().map(|p| &p.content).collect::<Vec<_>>())
    }

    /// Builds a table from explicit scores laid out `[i][j][relation]`.
    pub fn from_scores(n: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n * n * 4 || scores.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {n} pieces, all must be >= 0",
                scores.len()
            )));
        }
        Ok(Self { n, scores })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize, relation: Relation) -> f64 {
        self.scores[(i * self.n + j) * 4 + relation.index()]
    }

    /// Lowest-dissimilarity partner of `i` under `relation`, lowest index on
    /// ties.
    pub fn best(&self, i: usize, relation: Relation) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..self.n).filter(|&j| j != i) {
            let v = self.get(i, j, relation);
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((j, v));
            }
        }
        best.map(|(j, _)| j)
    }
}

/// Mutually best pairs `(i, j, r)`: `j` is `i`'s best partner under `r` and
/// `i` is `j`'s best partner under the opposite relation.
pub fn best_buddies(table: &CompatibilityTable) -> Vec<(usize, usize, Relation)> {
    let mut out = Vec::new();
    for i in 0..table.len() {
        for r in Relation::ALL {
            if let Some(j) = table.best(i, r) {
                if table.best(j, r.opposite()) == Some(i) {
                    out.push((i, j, r));
                }
            }
        }
    }
    out
}

/// Piece with the most best buddies, lowest index on ties.
pub fn seed_piece(table: &CompatibilityTable) -> usize {
    let mut counts = vec![0usize; table.len()];
    for (i, _, _) in best_buddies(table) {
        counts[i] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Greedy placement on a `rows x cols` board.
///
/// Starting from `seed_piece`, each step considers every free cell next to a
/// placed piece whose inclusion keeps the occupied bounding box within
/// `rows x cols`, and every unplaced piece. A candidate that is a best buddy
/// of one of its placed neighbors wins over one that is not; within a class
/// the lowest mean dissimilarity to placed neighbors wins (ties: cell in
/// row-major order, then piece index). Once all pieces are placed the box is
/// exactly `rows x cols`.
pub fn greedy_place(
    table: &CompatibilityTable,
    seed_piece: usize,
    rows: usize,
    cols: usize,
) -> Result<Permutation> {
    let n = table.len();
    if n != rows * cols || n == 0 {
        return Err(Error::SizeMismatch(format!("{n} pieces for a {rows}x{cols} grid")));
    }
    if seed_piece >= n {
        return Err(Error::InvalidArgument(format!("seed piece {seed_piece} out of range")));
    }
    let buddy: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            Relation::ALL
                .iter()
                .map(|&r| table.best(i, r).filter(|&j| table.best(j, r.opposite()) == Some(i)))
                .collect()
        })
        .collect();
    let mut cell_of: Vec<Option<(i64, i64)>> = vec![None; n];
    let mut board: HashMap<(i64, i64), usize> = HashMap::new();
    board.insert((0, 0), seed_piece);
    cell_of[seed_piece] = Some((0, 0));
    let (mut y0, mut y1, mut x0, mut x1) = (0i64, 0i64, 0i64, 0i64);

    for _ in 1..n {
        let mut frontier: Vec<(i64, i64)> = Vec::new();
        for &(y, x) in board.keys() {
            for r in Relation::ALL {
                let (dy, dx) = r.offset();
                let cell = (y + dy, x + dx);
                let h = y1.max(cell.0) - y0.min(cell.0) + 1;
                let w = x1.max(cell.1) - x0.min(cell.1) + 1;
                if !board.contains_key(&cell) && h <= rows as i64 && w <= cols as i64 {
                    frontier.push(cell);
                }
            }
        }
        frontier.sort_unstable();
        frontier.dedup();
        // (not a buddy, mean dissimilarity, cell, piece); smaller is better.
        let mut best: Option<(bool, f64, (i64, i64), usize)> = None;
        for &cell in &frontier {
            let neighbors: Vec<(usize, Relation)> = Relation::ALL
                .iter()
                .filter_map(|&r| {
                    let (dy, dx) = r.offset();
                    board.get(&(cell.0 + dy, cell.1 + dx)).map(|&q| (q, r))
                })
                .collect();
            for p in (0..n).filter(|&p| cell_of[p].is_none()) {
                // `q` sits at `r` from the cell, so the cell is at `r.opposite()` from `q`.
                let mean = neighbors
                    .iter()
                    .map(|&(q, r)| table.get(q, p, r.opposite()))
                    .sum::<f64>()
                    / neighbors.len() as f64;
                let is_buddy = neighbors
                    .iter()
                    .any(|&(q, r)| buddy[q][r.opposite().index()] == Some(p));
                let key = (!is_buddy, mean, cell, p);
                if best.map_or(true, |b| key.partial_cmp(&b) == Some(std::cmp::Ordering::Less)) {
                    best = Some(key);
                }
            }
        }
        let (_, _, cell, p) = best.expect("a free cell always exists while pieces remain");
        board.insert(cell, p);
        cell_of[p] = Some(cell);
        y0 = y0.min(cell.0);
        y1 = y1.max(cell.0);
        x0 = x0.min(cell.1);
        x1 = x1.max(cell.1);
    }
    let mapping = cell_of
        .iter()
        .map(|c| {
            let (y, x) = c.expect("all placed");
            ((y - y0) as usize) * cols + (x - x0) as usize
        })
        .collect();
    Permutation::new(mapping)
}

/// Builds the table, seeds with [`seed_piece`] and places greedily.
pub fn solve_greedy(puzzle: &PuzzleInstance) -> Result<Permutation> {
    let table = CompatibilityTable::for_puzzle(puzzle)?;
    greedy_place(&table, seed_piece(&table), puzzle.rows(), puzzle.cols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::reassemble;
    use crate::rng::PuzzleRng;

    fn smooth(side: usize) -> Raster {
        Raster::from_fn(side, side, 3, |y, x, c| {
            let (u, v) = (x as f32 / side as f32, y as f32 / side as f32);
            [0.1 + 0.8 * u, 0.1 + 0.8 * v, 0.2 + 0.3 * u + 0.4 * v][c]
        })
    }

    #[test]
    fn constant_pieces_have_zero_dissimilarity() {
        let a = Raster::filled(8, 8, 3, 0.3);
        for r in Relation::ALL {
            assert_eq!(boundary_dissimilarity(&a, &a.clone(), r).unwrap(), 0.0);
        }
    }

    #[test]
    fn black_against_white() {
        let black = Raster::zeros(32, 32, 3);
        let white = Raster::filled(32, 32, 3, 1.0);
        assert_eq!(boundary_dissimilarity(&black, &white, Relation::Right).unwrap(), 96.0);
        assert!(matches!(
            boundary_dissimilarity(&black, &Raster::zeros(16, 16, 3), Relation::Up),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn duality_on_random_pieces() {
        let mut rng = PuzzleRng::new(2);
        let pieces: Vec<Raster> = (0..5)
            .map(|_| Raster::from_fn(6, 6, 3, |_, _, _| rng.unit() as f32))
            .collect();
        let t = CompatibilityTable::build(&pieces.iter().collect::<Vec<_>>()).unwrap();
        for i in 0..5 {
            for j in (0..5).filter(|&j| j != i) {
                assert_eq!(t.get(i, j, Relation::Right), t.get(j, i, Relation::Left));
                assert_eq!(t.get(i, j, Relation::Down), t.get(j, i, Relation::Up));
                assert!(t.get(i, j, Relation::Up) >= 0.0);
            }
        }
    }

    #[test]
    fn two_piece_gradient_is_a_best_buddy() {
        let img = smooth(16).crop(0, 0, 8, 16).unwrap();
        let left = img.crop(0, 0, 8, 8).unwrap();
        let right = img.crop(0, 8, 8, 8).unwrap();
        let t = CompatibilityTable::build(&[&left, &right]).unwrap();
        assert!(best_buddies(&t).contains(&(0, 1, Relation::Right)));
    }

    #[test]
    fn identical_pieces_are_stable() {
        let a = Raster::filled(4, 4, 3, 0.5);
        let refs = vec![&a; 4];
        let t = CompatibilityTable::build(&refs).unwrap();
        let first = best_buddies(&t);
        assert_eq!(first, best_buddies(&t));
        assert_eq!(greedy_place(&t, 0, 2, 2).unwrap(), greedy_place(&t, 0, 2, 2).unwrap());
    }

    #[test]
    fn mutuality_is_required() {
        // 0's best right partner is 1, but 1's best left partner is 2.
        let mut s = vec![10.0; 3 * 3 * 4];
        let set = |s: &mut Vec<f64>, i: usize, j: usize, r: Relation, v: f64| s[(i * 3 + j) * 4 + r.index()] = v;
        set(&mut s, 0, 1, Relation::Right, 1.0);
        set(&mut s, 1, 0, Relation::Left, 5.0);
        set(&mut s, 1, 2, Relation::Left, 2.0);
        let t = CompatibilityTable::from_scores(3, s).unwrap();
        assert!(!best_buddies(&t).iter().any(|&(i, j, r)| (i, j, r) == (0, 1, Relation::Right)));
    }

    #[test]
    fn smooth_puzzles_are_solved() {
        for (k, seed) in [(2, 3), (3, 4)] {
            let img = smooth(12 * k);
            let p = PuzzleInstance::from_image(&img, k, k, seed, "s").unwrap();
            let got = solve_greedy(&p).unwrap();
            assert_eq!(reassemble(&p, &got).unwrap(), img);
            assert_eq!(&got, p.gt_permutation());
        }
    }

    #[test]
    fn single_piece_is_identity() {
        let a = Raster::filled(4, 4, 1, 0.5);
        let t = CompatibilityTable::build(&[&a]).unwrap();
        assert_eq!(greedy_place(&t, 0, 1, 1).unwrap(), Permutation::identity(1));
    }

    #[test]
    fn output_is_a_bijection() {
        let mut rng = PuzzleRng::new(12);
        let img = Raster::from_fn(20, 20, 3, |_, _, _| rng.unit() as f32);
        let p = PuzzleInstance::from_image(&img, 4, 4, 3, "r").unwrap();
        let got = solve_greedy(&p).unwrap();
        let mut slots = got.as_slice().to_vec();
        slots.sort_unstable();
        assert_eq!(slots, (0..16).collect::<Vec<_>>());
    }
}
