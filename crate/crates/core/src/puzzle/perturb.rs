use serde::{Deserialize, Serialize};

use super::{Piece, PuzzleInstance};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::PuzzleRng;

/// Record of a perturbation applied to a puzzle, stored in its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Missing {
        fraction: f64,
        seed: u64,
        removed: Vec<usize>,
    },
    Noise {
        sigma: f64,
        seed: u64,
    },
    Erode {
        border_px: usize,
    },
}

/// `round(fraction * n)` with halves rounded up.
pub fn missing_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

impl PuzzleInstance {
    /// Marks `missing_count(fraction, n)` uniformly chosen present pieces as
    /// missing.
    pub fn perturb_missing(&self, fraction: f64, seed: u64) -> Result<PuzzleInstance> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "missing fraction must be in [0, 1), got {fraction}"
            )));
        }
        let k = missing_count(fraction, self.len());
        if k == 0 {
            return Ok(self.clone());
        }
        let mut candidates: Vec<usize> = (0..self.len())
            .filter(|&i| self.pieces[i].present)
            .collect();
        PuzzleRng::new(seed).shuffle(&mut candidates);
        let mut removed: Vec<usize> = candidates.into_iter().take(k).collect();
        removed.sort_unstable();
        let mut pieces = self.pieces.clone();
        for &i in &removed {
            let side = pieces[i].side();
            let channels = pieces[i].content.channels();
            pieces[i] = Piece {
                content: Raster::zeros(side, side, channels),
                origin_index: pieces[i].origin_index,
                present: false,
            };
        }
        Ok(self.with_pieces(
            pieces,
            Perturbation::Missing {
                fraction,
                seed,
                removed,
            },
        ))
    }

    /// Adds i.i.d. `N(0, sigma^2)` noise to every value of every present piece
    /// and clamps to `[0, 1]`.
    pub fn perturb_noise(&self, sigma: f64, seed: u64) -> Result<PuzzleInstance> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = PuzzleRng::new(seed);
        let mut pieces = self.pieces.clone();
        for piece in pieces.iter_mut().filter(|p| p.present) {
            piece
                .content
                .map_values(|_, v| (v as f64 + sigma * rng.standard_normal()) as f32);
        }
        Ok(self.with_pieces(pieces, Perturbation::Noise { sigma, seed }))
    }

    /// Zeroes the outermost `border_px` ring of every piece.
    pub fn perturb_erode(&self, border_px: usize) -> Result<PuzzleInstance> {
        let side = self.piece_side();
        if 2 * border_px >= side {
            return Err(Error::ErosionTooLarge { border_px, side });
        }
        if border_px == 0 {
            return Ok(self.clone());
        }
        let mut pieces = self.pieces.clone();
        for piece in &mut pieces {
            let c = &mut piece.content;
            for y in 0..side {
                for x in 0..side {
                    let inner = y >= border_px
                        && y < side - border_px
                        && x >= border_px
                        && x < side - border_px;
                    if !inner {
                        for ch in 0..c.channels() {
                            c.set(y, x, ch, 0.0);
                        }
                    }
                }
            }
        }
        Ok(self.with_pieces(pieces, Perturbation::Erode { border_px }))
    }
}
