//! Mental-image providers: stand-ins for a learned generator that proposes a
//! rough global solution for a puzzle. A real generator plugs in by
//! implementing [`MentalImageProvider`] or by writing its output to a file
//! read by [`ExternalProvider`].

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imageio::load_image;
use crate::puzzle::PuzzleInstance;
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq)]
pub struct MentalImage {
    pub raster: Raster,
    pub provider_tag: String,
}

/// Produces a mental image for a puzzle. Must be deterministic given the
/// puzzle and the provider's own configuration.
pub trait MentalImageProvider: Sync {
    fn tag(&self) -> String;
    fn provide(&self, puzzle: &PuzzleInstance) -> Result<MentalImage>;
}

impl<T: MentalImageProvider + ?Sized> MentalImageProvider for Box<T> {
    fn tag(&self) -> String {
        (**self).tag()
    }

    fn provide(&self, puzzle: &PuzzleInstance) -> Result<MentalImage> {
        (**self).provide(puzzle)
    }
}

/// The ground-truth reassembly, optionally Gaussian-blurred (`sigma` in
/// pixels; 0 gives the exact source).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OracleProvider {
    pub blur_radius: f64,
}

impl OracleProvider {
    pub fn new(blur_radius: f64) -> Self {
        Self { blur_radius }
    }
}

pub fn provider_oracle(puzzle: &PuzzleInstance, blur_radius: f64) -> Result<MentalImage> {
    OracleProvider::new(blur_radius).provide(puzzle)
}

impl MentalImageProvider for OracleProvider {
    fn tag(&self) -> String {
        if self.blur_radius > 0.0 {
            format!("oracle:{}", self.blur_radius)
        } else {
            "oracle".into()
        }
    }

    fn provide(&self, puzzle: &PuzzleInstance) -> Result<MentalImage> {
        let source = puzzle
            .source()
            .ok_or_else(|| Error::SourceUnavailable(puzzle.id()))?;
        Ok(MentalImage {
            raster: source.gaussian_blur(self.blur_radius),
            provider_tag: self.tag(),
        })
    }
}

/// Per-pixel mean of a set of images, resampled to each puzzle's size. Knows
/// nothing about the puzzle beyond its dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanProvider {
    mean: Raster,
}

impl MeanProvider {
    /// Averages `images` after resampling each to `side x side`.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Raster>, side: usize) -> Result<Self> {
        let mut acc: Option<(Vec<f64>, usize, usize)> = None;
        for img in images {
            let r = img.resize(side, side);
            let (sum, count, channels) =
                acc.get_or_insert_with(|| (vec![0.0; r.data().len()], 0, r.channels()));
            if r.channels() != *channels {
                return Err(Error::ShapeMismatch(format!(
                    "mixed channel counts {} and {}",
                    channels,
                    r.channels()
                )));
            }
            sum.iter_mut().zip(r.data()).for_each(|(s, &v)| *s += v as f64);
            *count += 1;
        }
        let (sum, count, channels) = acc.ok_or(Error::EmptyDataset)?;
        let data = sum.into_iter().map(|s| (s / count as f64) as f32).collect();
        Ok(Self {
            mean: Raster::from_vec(side, side, channels, data)?,
        })
    }

    /// Mean over the sources of `puzzles`.
    pub fn from_puzzles(puzzles: &[PuzzleInstance], side: usize) -> Result<Self> {
        let sources: Vec<&Raster> = puzzles.iter().filter_map(|p| p.source()).collect();
        Self::from_images(sources, side)
    }

    pub fn mean(&self) -> &Raster {
        &self.mean
    }
}

impl MentalImageProvider for MeanProvider {
    fn tag(&self) -> String {
        "mean".into()
    }

    fn provide(&self, puzzle: &PuzzleInstance) -> Result<MentalImage> {
        if self.mean.channels() != puzzle.channels() {
            return Err(Error::DimensionMismatch(format!(
                "mean image has {} channels, puzzle has {}",
                self.mean.channels(),
                puzzle.channels()
            )));
        }
        let side = puzzle.piece_side();
        Ok(MentalImage {
            raster: self.mean.resize(puzzle.rows() * side, puzzle.cols() * side),
            provider_tag: self.tag(),
        })
    }
}

/// Loads the mental image from a file, verbatim.
pub fn provider_external(path: &Path) -> Result<MentalImage> {
    Ok(MentalImage {
        raster: load_image(path)?,
        provider_tag: "external".into(),
    })
}

/// Reads a fixed image file for every puzzle and checks it fits the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalProvider {
    pub path: PathBuf,
}

impl ExternalProvider {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl MentalImageProvider for ExternalProvider {
    fn tag(&self) -> String {
        "external".into()
    }

    fn provide(&self, puzzle: &PuzzleInstance) -> Result<MentalImage> {
        let image = provider_external(&self.path)?;
        check_fits(&image.raster, puzzle)?;
        Ok(image)
    }
}

fn check_fits(r: &Raster, puzzle: &PuzzleInstance) -> Result<()> {
    if r.height() % puzzle.rows() != 0 || r.width() % puzzle.cols() != 0 {
        return Err(Error::DimensionMismatch(format!(
            "mental image {}x{} is not divisible into a {}x{} grid",
            r.height(),
            r.width(),
            puzzle.rows(),
            puzzle.cols()
        )));
    }
    if r.channels() != puzzle.channels() {
        return Err(Error::DimensionMismatch(format!(
            "mental image has {} channels, puzzle has {}",
            r.channels(),
            puzzle.channels()
        )));
    }
    Ok(())
}
