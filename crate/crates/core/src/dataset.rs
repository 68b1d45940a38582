//! Procedural images and on-disk puzzle datasets.
//!
//! Dataset layout:
//!
//! ```text
//! <out>/images/<id>.png                  source images as given
//! <out>/split.txt                        "train <id>" / "test <id>" lines
//! <out>/puzzles/<id>_<k>x<k>/            one puzzle directory per image and size
//! <out>/permutations_<k>x<k>.txt         ground truth of the test puzzles, sorted by id
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageio::{load_image, save_image};
use crate::puzzle::{
    load_puzzle, save_puzzle, slice_image, write_permutation_file, PuzzleInstance,
};
use crate::raster::Raster;
use crate::rng::{derive_seed, PuzzleRng};

pub const DEFAULT_SIZES: [usize; 6] = [2, 4, 6, 8, 10, 12];
pub const DEFAULT_PIECE_SIZE: usize = 32;
pub const SPLIT_FILE: &str = "split.txt";
const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "PNG"];

/// Smooth RGB image: a random linear color ramp, a few oriented sinusoids,
/// and a faint per-pixel texture, quantized to 8 bits.
pub fn synthetic_image(side: usize, seed: u64) -> Raster {
    let mut rng = PuzzleRng::new(seed);
    let base: Vec<f64> = (0..3).map(|_| rng.uniform(0.2, 0.8)).collect();
    let ramp: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35)))
        .collect();
    let waves: Vec<[f64; 6]> = (0..3)
        .map(|_| {
            let angle = rng.uniform(0.0, std::f64::consts::TAU);
            let freq = rng.uniform(1.0, 4.0) * std::f64::consts::TAU;
            [
                angle.cos() * freq,
                angle.sin() * freq,
                rng.uniform(0.0, std::f64::consts::TAU),
                rng.uniform(0.05, 0.15),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
            ]
        })
        .collect();
    let mut texture = PuzzleRng::new(derive_seed(seed, &["texture"]));
    let s = side as f64;
    let mut img = Raster::from_fn(side, side, 3, |y, x, c| {
        let (u, v) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
        let mut val = base[c] + ramp[c].0 * u + ramp[c].1 * v;
        for w in &waves {
            let phase = w[0] * u + w[1] * v + w[2];
            let tint = [1.0, w[4], w[5]][c];
            val += w[3] * tint * phase.sin();
        }
        val += texture.uniform(-0.02, 0.02);
        val as f32
    });
    img.quantize_u8();
    img
}

/// True when no two rasters are identical.
pub fn pairwise_distinct(rasters: &[&Raster]) -> bool {
    let mut seen = BTreeSet::new();
    rasters.iter().all(|r| seen.insert(r.to_u8()))
}

/// Center square of `image`, resampled so a `k x k` grid has pieces of
/// `piece_size` pixels.
pub fn prepare_image(image: &Raster, k: usize, piece_size: usize) -> Raster {
    let side = k * piece_size;
    image.center_square().resize(side, side)
}

/// Seed of the puzzle cut from image `id` at size `k`.
pub fn puzzle_seed(seed: u64, id: &str, k: usize) -> u64 {
    derive_seed(seed, &[id, &format!("{k}x{k}")])
}

/// `count` synthetic images of side `side` whose prepared versions cut into
/// pairwise distinct pieces at every size in `sizes` (regenerated from a
/// derived seed otherwise). Ids are `synth_0000`, `synth_0001`, ...
pub fn synthetic_images(
    count: usize,
    side: usize,
    sizes: &[usize],
    piece_size: usize,
    seed: u64,
) -> Vec<(String, Raster)> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let id = format!("synth_{i:04}");
            let mut attempt = 0u64;
            loop {
                let img = synthetic_image(side, derive_seed(seed, &["synthetic", &id, &attempt.to_string()]));
                let ok = sizes.iter().all(|&k| {
                    let prepared = prepare_image(&img, k, piece_size);
                    let pieces = slice_image(&prepared, k, k).expect("divisible grid");
                    pairwise_distinct(&pieces.iter().map(|p| &p.content).collect::<Vec<_>>())
                });
                if ok {
                    return (id, img);
                }
                attempt += 1;
            }
        })
        .collect()
}

/// Deterministic 80/20 split of sorted ids: `(train, test)`.
pub fn split_ids(ids: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rng = PuzzleRng::new(derive_seed(seed, &["split"]));
    rng.shuffle(&mut sorted);
    let n_train = ((sorted.len() as f64) * 0.8).round() as usize;
    let mut test = sorted.split_off(n_train);
    sorted.sort();
    test.sort();
    (sorted, test)
}

/// Decodable images directly inside `dir`, keyed by file stem, sorted.
pub fn load_image_dir(dir: &Path) -> Result<Vec<(String, Raster)>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e))
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        match load_image(&p) {
            Ok(r) => {
                let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                out.push((id, r));
            }
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::NoImagesFound(dir.to_path_buf()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub puzzles: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn puzzle_dir_name(id: &str, k: usize) -> String {
    format!("{id}_{k}x{k}")
}

pub fn permutation_file_name(k: usize) -> String {
    format!("permutations_{k}x{k}.txt")
}

/// Writes a dataset for `images` at every grid size in `sizes`.
pub fn generate_dataset(
    images: &[(String, Raster)],
    sizes: &[usize],
    piece_size: usize,
    seed: u64,
    out: &Path,
) -> Result<GenerateSummary> {
    if images.is_empty() {
        return Err(Error::NoImagesFound(out.to_path_buf()));
    }
    if sizes.is_empty() || sizes.contains(&0) || piece_size == 0 {
        return Err(Error::InvalidArgument("grid sizes and piece size must be positive".into()));
    }
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))
    };
    mkdir(&out.join("images"))?;
    mkdir(&out.join("puzzles"))?;
    let ids: Vec<String> = images.iter().map(|(id, _)| id.clone()).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(Error::InvalidArgument("image ids must be unique".into()));
    }
    let (train, test) = split_ids(&ids, seed);
    let mut split = String::new();
    for id in &train {
        split.push_str(&format!("train {id}\n"));
    }
    for id in &test {
        split.push_str(&format!("test {id}\n"));
    }
    std::fs::write(out.join(SPLIT_FILE), split)
        .map_err(|e| Error::io("writing split file", e))?;

    images.par_iter().try_for_each(|(id, img)| -> Result<()> {
        save_image(img, &out.join("images").join(format!("{id}.png")))?;
        for &k in sizes {
            let prepared = prepare_image(img, k, piece_size);
            let puzzle = PuzzleInstance::from_image(&prepared, k, k, puzzle_seed(seed, id, k), id.clone())?;
            save_puzzle(&puzzle, &out.join("puzzles").join(puzzle_dir_name(id, k)))?;
        }
        Ok(())
    })?;

    let test_set: BTreeSet<&String> = test.iter().collect();
    for &k in sizes {
        let perms = images
            .iter()
            .filter(|(id, _)| test_set.contains(id))
            .map(|(id, img)| {
                let prepared = prepare_image(img, k, piece_size);
                PuzzleInstance::from_image(&prepared, k, k, puzzle_seed(seed, id, k), id.clone())
                    .map(|p| (id.clone(), p.gt_permutation().clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut perms = perms;
        perms.sort_by(|a, b| a.0.cmp(&b.0));
        let perms: Vec<_> = perms.into_iter().map(|(_, p)| p).collect();
        write_permutation_file(&out.join(permutation_file_name(k)), &perms)?;
    }
    Ok(GenerateSummary {
        puzzles: images.len() * sizes.len(),
        train,
        test,
    })
}

/// `(train ids, test ids)` from a dataset's split file.
pub fn read_split(root: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let path = root.join(SPLIT_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        match line.split_once(' ') {
            Some(("train", id)) => train.push(id.to_string()),
            Some(("test", id)) => test.push(id.to_string()),
            _ if line.trim().is_empty() => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{}:{}: expected 'train <id>' or 'test <id>'",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            _ => Err(Error::InvalidArgument(format!("unknown subset {s:?}"))),
        }
    }
}

/// Loads the puzzles of `subset`, restricted to grid sizes in `sizes` when
/// given, sorted by puzzle id.
pub fn load_dataset(root: &Path, subset: Subset, sizes: Option<&[usize]>) -> Result<Vec<PuzzleInstance>> {
    let (train, test) = read_split(root)?;
    let ids: BTreeSet<String> = match subset {
        Subset::Train => train.into_iter().collect(),
        Subset::Test => test.into_iter().collect(),
        Subset::All => train.into_iter().chain(test).collect(),
    };
    let dir = root.join("puzzles");
    let entries =
        std::fs::read_dir(&dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut selected = Vec::new();
    for d in dirs {
        let name = d.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let Some((id, grid)) = name.rsplit_once('_') else {
            continue;
        };
        let k = grid.split_once('x').and_then(|(r, _)| r.parse::<usize>().ok());
        if !ids.contains(id) || k.map_or(true, |k| sizes.is_some_and(|s| !s.contains(&k))) {
            continue;
        }
        selected.push(d);
    }
    let mut puzzles = selected
        .par_iter()
        .map(|d| load_puzzle(d))
        .collect::<Result<Vec<_>>>()?;
    puzzles.sort_by_key(|p| p.id());
    Ok(puzzles)
}
