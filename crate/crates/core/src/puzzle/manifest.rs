//! On-disk puzzle layout: a directory holding `manifest.json`, one PNG per
//! piece in shuffled order, and the source image when known.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Permutation, Perturbation, Piece, PuzzleInstance};
use crate::error::{Error, Result};
use crate::imageio::{load_png, save_png};
use crate::raster::Raster;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const SOURCE_FILE: &str = "source.png";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub source_id: String,
    pub rows: usize,
    pub cols: usize,
    pub piece_side: usize,
    pub channels: usize,
    pub seed: u64,
    pub gt_permutation: Vec<usize>,
    pub present: Vec<bool>,
    pub perturbations: Vec<Perturbation>,
    pub pieces: Vec<String>,
    pub source: Option<String>,
}

impl Manifest {
    pub fn describe(puzzle: &PuzzleInstance) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA,
            source_id: puzzle.source_id().to_string(),
            rows: puzzle.rows(),
            cols: puzzle.cols(),
            piece_side: puzzle.piece_side(),
            channels: puzzle.channels(),
            seed: puzzle.seed(),
            gt_permutation: puzzle.gt_permutation().as_slice().to_vec(),
            present: puzzle.present_mask(),
            perturbations: puzzle.perturbations().to_vec(),
            pieces: (0..puzzle.len()).map(piece_file).collect(),
            source: puzzle.source().map(|_| SOURCE_FILE.to_string()),
        }
    }
}

fn piece_file(i: usize) -> String {
    format!("piece_{i:03}.png")
}

pub fn save_puzzle(puzzle: &PuzzleInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let manifest = Manifest::describe(puzzle);
    for (piece, name) in puzzle.pieces().iter().zip(&manifest.pieces) {
        save_png(&piece.content, &dir.join(name))?;
    }
    if let (Some(src), Some(name)) = (puzzle.source(), &manifest.source) {
        save_png(src, &dir.join(name))?;
    }
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), text + "\n")
        .map_err(|e| Error::io(format!("writing manifest in {}", dir.display()), e))
}

pub fn load_puzzle(dir: &Path) -> Result<PuzzleInstance> {
    let path = dir.join(MANIFEST_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::Decode {
            path,
            reason: format!("unsupported manifest schema {}", manifest.schema),
        });
    }
    if manifest.pieces.len() != manifest.present.len() {
        return Err(Error::Decode {
            path,
            reason: "pieces and present lists differ in length".into(),
        });
    }
    let pieces = manifest
        .pieces
        .iter()
        .zip(&manifest.present)
        .map(|(name, &present)| {
            let content = load_png(&dir.join(name))?;
            Ok(Piece {
                content,
                origin_index: None,
                present,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let source: Option<Raster> = match &manifest.source {
        Some(name) => Some(load_png(&dir.join(name))?),
        None => None,
    };
    let gt = Permutation::new(manifest.gt_permutation)?;
    let mut pieces = pieces;
    for (piece, &slot) in pieces.iter_mut().zip(gt.as_slice()) {
        piece.origin_index = Some(slot);
    }
    PuzzleInstance::from_parts(
        pieces,
        manifest.rows,
        manifest.cols,
        gt,
        manifest.seed,
        manifest.source_id,
        source,
        manifest.perturbations,
    )
}

/// One permutation per line, space-separated slot indices.
pub fn write_permutation_file(path: &Path, perms: &[Permutation]) -> Result<()> {
    let mut out = Vec::new();
    for p in perms {
        writeln!(out, "{}", p.to_line()).expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_permutation_file(path: &Path) -> Result<Vec<Permutation>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Permutation::parse_line)
        .collect()
}
