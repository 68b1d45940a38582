//! Piece and slot embedders.

use ndarray::{Array2, ArrayView2};

use super::mlp::{Mlp, MlpCache, MlpGrads};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::PuzzleRng;

/// Norm below which an embedding is treated as degenerate and mapped to zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Embedding rows plus a flag for rows whose pre-normalization output was
/// (numerically) zero.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub vectors: Array2<f64>,
    pub degenerate: Vec<bool>,
}

impl Embeddings {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Maps piece rasters and slot crops into a shared space where the dot
/// product scores a piece-slot match.
pub trait Embedder: Sync {
    /// Side length slot crops are resampled to before embedding.
    fn slot_side(&self, piece_side: usize) -> usize;
    fn embed_pieces(&self, pieces: &[&Raster]) -> Result<Embeddings>;
    fn embed_slots(&self, slots: &[&Raster]) -> Result<Embeddings>;
    fn tag(&self) -> &'static str;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn slot_side(&self, piece_side: usize) -> usize {
        (**self).slot_side(piece_side)
    }

    fn embed_pieces(&self, pieces: &[&Raster]) -> Result<Embeddings> {
        (**self).embed_pieces(pieces)
    }

    fn embed_slots(&self, slots: &[&Raster]) -> Result<Embeddings> {
        (**self).embed_slots(slots)
    }

    fn tag(&self) -> &'static str {
        (**self).tag()
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn slot_side(&self, piece_side: usize) -> usize {
        (**self).slot_side(piece_side)
    }

    fn embed_pieces(&self, pieces: &[&Raster]) -> Result<Embeddings> {
        (**self).embed_pieces(pieces)
    }

    fn embed_slots(&self, slots: &[&Raster]) -> Result<Embeddings> {
        (**self).embed_slots(slots)
    }

    fn tag(&self) -> &'static str {
        (**self).tag()
    }
}

/// Flattened raw pixels at native resolution, not normalized. With an exact
/// mental image, the assignment maximizing the summed dot products is the
/// one pairing every piece with its identical crop.
#[derive(Clone, Copy, Debug, Default)]
pub struct RawPixelEmbedder;

fn flatten(rasters: &[&Raster]) -> Result<Array2<f64>> {
    let Some(first) = rasters.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let dim = first.data().len();
    let mut out = Array2::zeros((rasters.len(), dim));
    for (mut row, r) in out.rows_mut().into_iter().zip(rasters) {
        if r.data().len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "raster with {} values among rasters with {dim}",
                r.data().len()
            )));
        }
        row.iter_mut().zip(r.data()).for_each(|(o, &v)| *o = v as f64);
    }
    Ok(out)
}

impl Embedder for RawPixelEmbedder {
    fn slot_side(&self, piece_side: usize) -> usize {
        piece_side
    }

    fn embed_pieces(&self, pieces: &[&Raster]) -> Result<Embeddings> {
        let vectors = flatten(pieces)?;
        Ok(Embeddings {
            degenerate: vec![false; vectors.nrows()],
            vectors,
        })
    }

    fn embed_slots(&self, slots: &[&Raster]) -> Result<Embeddings> {
        self.embed_pieces(slots)
    }

    fn tag(&self) -> &'static str {
        "raw-pixels"
    }
}

/// Layer widths of the three networks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetShape {
    pub input_side: usize,
    pub channels: usize,
    pub branch_hidden: Vec<usize>,
    pub embedding_dim: usize,
}

impl NetShape {
    /// 16x16 input, branches `in -> 256 -> 128` with ReLU, shared head
    /// `128 -> embedding_dim`.
    pub fn standard(channels: usize, embedding_dim: usize) -> Self {
        Self {
            input_side: 16,
            channels,
            branch_hidden: vec![256, 128],
            embedding_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_side * self.input_side * self.channels
    }

    fn branch_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.branch_hidden);
        w
    }

    fn head_widths(&self) -> Vec<usize> {
        vec![*self.branch_hidden.last().unwrap_or(&self.input_dim()), self.embedding_dim]
    }
}

/// The learnable matcher: `psi_e` (piece branch), `psi_d` (slot branch) and
/// the shared head `psi_s`; outputs are L2-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingNet {
    pub input_side: usize,
    pub channels: usize,
    pub psi_e: Mlp,
    pub psi_d: Mlp,
    pub psi_s: Mlp,
}

/// Gradients of all three networks.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub psi_e: MlpGrads,
    pub psi_d: MlpGrads,
    pub psi_s: MlpGrads,
}

impl NetGrads {
    pub fn zeros_like(net: &EmbeddingNet) -> Self {
        Self {
            psi_e: MlpGrads::zeros_like(&net.psi_e),
            psi_d: MlpGrads::zeros_like(&net.psi_d),
            psi_s: MlpGrads::zeros_like(&net.psi_s),
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        self.psi_e.add_assign(&other.psi_e);
        self.psi_d.add_assign(&other.psi_d);
        self.psi_s.add_assign(&other.psi_s);
    }

    pub fn scale(&mut self, factor: f64) {
        self.psi_e.scale(factor);
        self.psi_d.scale(factor);
        self.psi_s.scale(factor);
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.psi_e.slices();
        out.extend(self.psi_d.slices());
        out.extend(self.psi_s.slices());
        out
    }
}

/// Forward state of one branch, kept for backpropagation.
#[derive(Debug)]
pub struct BranchCache {
    branch: MlpCache,
    head: MlpCache,
    raw: Array2<f64>,
    norms: Vec<f64>,
}

/// Row-wise L2 normalization. Rows with norm below [`DEGENERATE_NORM`] become
/// zero and are flagged.
pub fn l2_normalize(raw: &Array2<f64>) -> (Array2<f64>, Vec<f64>, Vec<bool>) {
    let mut out = raw.clone();
    let mut norms = Vec::with_capacity(raw.nrows());
    let mut degenerate = Vec::with_capacity(raw.nrows());
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm < DEGENERATE_NORM {
            row.fill(0.0);
            degenerate.push(true);
        } else {
            row /= norm;
            degenerate.push(false);
        }
        norms.push(norm);
    }
    (out, norms, degenerate)
}

/// Backward of [`l2_normalize`]: `dx = (g - y (y . g)) / |x|`, zero for
/// degenerate rows.
pub fn l2_normalize_backward(raw: &Array2<f64>, norms: &[f64], upstream: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(raw.dim());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = norms[i];
        if norm < DEGENERATE_NORM {
            continue;
        }
        let y = raw.row(i).mapv(|v| v / norm);
        let g = upstream.row(i);
        let proj = y.dot(&g);
        row.assign(&((&g - &(y * proj)) / norm));
    }
    out
}

impl EmbeddingNet {
    pub fn new(shape: &NetShape, seed: u64) -> Self {
        let mut rng = PuzzleRng::new(seed);
        let psi_e = Mlp::init(&shape.branch_widths(), true, &mut rng);
        let psi_d = Mlp::init(&shape.branch_widths(), true, &mut rng);
        let psi_s = Mlp::init(&shape.head_widths(), false, &mut rng);
        Self {
            input_side: shape.input_side,
            channels: shape.channels,
            psi_e,
            psi_d,
            psi_s,
        }
    }

    pub fn zeros(shape: &NetShape) -> Self {
        Self {
            input_side: shape.input_side,
            channels: shape.channels,
            psi_e: Mlp::zeros(&shape.branch_widths(), true),
            psi_d: Mlp::zeros(&shape.branch_widths(), true),
            psi_s: Mlp::zeros(&shape.head_widths(), false),
        }
    }

    pub fn shape(&self) -> NetShape {
        let w = self.psi_e.widths();
        NetShape {
            input_side: self.input_side,
            channels: self.channels,
            branch_hidden: w[1..].to_vec(),
            embedding_dim: self.psi_s.output_dim(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.psi_s.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_side * self.input_side * self.channels
    }

    pub fn all_finite(&self) -> bool {
        self.psi_e.all_finite() && self.psi_d.all_finite() && self.psi_s.all_finite()
    }

    /// Resamples each raster to the input side and flattens it into a row.
    pub fn prepare(&self, rasters: &[&Raster]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((rasters.len(), self.input_dim()));
        for (mut row, r) in out.rows_mut().into_iter().zip(rasters) {
            if r.channels() != self.channels {
                return Err(Error::ShapeMismatch(format!(
                    "network expects {} channels, got {}",
                    self.channels,
                    r.channels()
                )));
            }
            if r.height() != r.width() {
                return Err(Error::ShapeMismatch(format!(
                    "embedding input must be square, got {}x{}",
                    r.height(),
                    r.width()
                )));
            }
            let resized = r.resize(self.input_side, self.input_side);
            row.iter_mut()
                .zip(resized.data())
                .for_each(|(o, &v)| *o = v as f64);
        }
        Ok(out)
    }

    fn branch(&self, piece_path: bool) -> &Mlp {
        if piece_path {
            &self.psi_e
        } else {
            &self.psi_d
        }
    }

    /// Embeds prepared input rows through `psi_s . psi_e` (pieces) or
    /// `psi_s . psi_d` (slots).
    pub fn forward(&self, inputs: ArrayView2<f64>, piece_path: bool) -> Embeddings {
        let hidden = self.branch(piece_path).forward(inputs);
        let raw = self.psi_s.forward(hidden.view());
        let (vectors, _, degenerate) = l2_normalize(&raw);
        Embeddings {
            vectors,
            degenerate,
        }
    }

    pub fn forward_cached(&self, inputs: ArrayView2<f64>, piece_path: bool) -> (Embeddings, BranchCache) {
        let (hidden, branch) = self.branch(piece_path).forward_cached(inputs);
        let (raw, head) = self.psi_s.forward_cached(hidden.view());
        let (vectors, norms, degenerate) = l2_normalize(&raw);
        (
            Embeddings {
                vectors,
                degenerate,
            },
            BranchCache {
                branch,
                head,
                raw,
                norms,
            },
        )
    }

    /// Accumulates parameter gradients of one branch into `grads`.
    pub fn backward(
        &self,
        cache: &BranchCache,
        upstream: &Array2<f64>,
        piece_path: bool,
        grads: &mut NetGrads,
    ) {
        let d_raw = l2_normalize_backward(&cache.raw, &cache.norms, upstream);
        let (head_grads, d_hidden) = self.psi_s.backward(&cache.head, d_raw);
        grads.psi_s.add_assign(&head_grads);
        let (branch_grads, _) = self.branch(piece_path).backward(&cache.branch, d_hidden);
        if piece_path {
            grads.psi_e.add_assign(&branch_grads);
        } else {
            grads.psi_d.add_assign(&branch_grads);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.psi_e.params_mut();
        out.extend(self.psi_d.params_mut());
        out.extend(self.psi_s.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = self.psi_e.params();
        out.extend(self.psi_d.params());
        out.extend(self.psi_s.params());
        out
    }
}

impl Embedder for EmbeddingNet {
    fn slot_side(&self, _piece_side: usize) -> usize {
        self.input_side
    }

    fn embed_pieces(&self, pieces: &[&Raster]) -> Result<Embeddings> {
        Ok(self.forward(self.prepare(pieces)?.view(), true))
    }

    fn embed_slots(&self, slots: &[&Raster]) -> Result<Embeddings> {
        Ok(self.forward(self.prepare(slots)?.view(), false))
    }

    fn tag(&self) -> &'static str {
        "net"
    }
}
