//! Matcher without a mental image: a per-piece encoder, the concatenated
//! codes mapped by one dense layer to an `n x n` score matrix, then Sinkhorn
//! and Hungarian. One model per grid size.
//!
//! Weights file: magic "GZH1", then `u32` version, input_side, channels,
//! rows, cols, the encoder and head headers (as in the matcher format) and
//! their `f32` parameters.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::assignment::{
    attended_bce_loss, hungarian_attention_mask, sinkhorn_backward, sinkhorn_normalize,
};
use crate::error::{Error, Result};
use crate::matcher::{
    assign_from_scores, epoch_batches, read_file, write_file, Adam, EpochLog, Mlp, MlpGrads,
    Reader, SolveConfig, TrainConfig, Writer,
};
use crate::puzzle::{Permutation, PuzzleInstance};
use crate::raster::Raster;
use crate::rng::{derive_seed, PuzzleRng};

pub const HUNG_PERM_MAGIC: &[u8; 4] = b"GZH1";
pub const HUNG_PERM_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct HungPermNet {
    pub input_side: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub encoder: Mlp,
    pub head: Mlp,
}

#[derive(Clone, Debug)]
pub struct HungPermGrads {
    pub encoder: MlpGrads,
    pub head: MlpGrads,
}

impl HungPermGrads {
    fn zeros_like(net: &HungPermNet) -> Self {
        Self {
            encoder: MlpGrads::zeros_like(&net.encoder),
            head: MlpGrads::zeros_like(&net.head),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        self.encoder.add_assign(&other.encoder);
        self.head.add_assign(&other.head);
    }

    fn scale(&mut self, f: f64) {
        self.encoder.scale(f);
        self.head.scale(f);
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.slices();
        out.extend(self.head.slices());
        out
    }
}

impl HungPermNet {
    /// Encoder `side^2 * channels -> hidden...` with ReLU, head
    /// `n * hidden_last -> n^2`, linear.
    pub fn new(
        input_side: usize,
        channels: usize,
        rows: usize,
        cols: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Self {
        let mut rng = PuzzleRng::new(seed);
        let mut widths = vec![input_side * input_side * channels];
        widths.extend(hidden);
        let encoder = Mlp::init(&widths, true, &mut rng);
        let n = rows * cols;
        let head = Mlp::init(&[n * encoder.output_dim(), n * n], false, &mut rng);
        Self {
            input_side,
            channels,
            rows,
            cols,
            encoder,
            head,
        }
    }

    /// Default architecture: 16x16 inputs, encoder `-> 256 -> 256`.
    pub fn standard(channels: usize, rows: usize, cols: usize, seed: u64) -> Self {
        Self::new(16, channels, rows, cols, &[256, 256], seed)
    }

    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    fn check_grid(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.rows, self.cols) {
            return Err(Error::SizeMismatch(format!(
                "model was built for {}x{} puzzles, got {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Flattened, resampled piece rows.
    pub fn prepare(&self, puzzle: &PuzzleInstance) -> Result<Array2<f64>> {
        self.check_grid(puzzle.rows(), puzzle.cols())?;
        if puzzle.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} channels, puzzle has {}",
                self.channels,
                puzzle.channels()
            )));
        }
        let dim = self.encoder.input_dim();
        let mut out = Array2::zeros((puzzle.len(), dim));
        for (mut row, p) in out.rows_mut().into_iter().zip(puzzle.pieces()) {
            let r: Raster = p.content.resize(self.input_side, self.input_side);
            row.iter_mut().zip(r.data()).for_each(|(o, &v)| *o = v as f64);
        }
        Ok(out)
    }

    /// `n x n` score matrix for prepared inputs.
    pub fn scores(&self, inputs: &Array2<f64>) -> Array2<f64> {
        let n = self.n();
        let codes = self.encoder.forward(inputs.view());
        let flat = codes.into_shape_with_order((1, n * self.encoder.output_dim())).expect("contiguous");
        self.head
            .forward(flat.view())
            .into_shape_with_order((n, n))
            .expect("n^2 outputs")
    }

    fn loss(&self, inputs: &Array2<f64>, gt: &Permutation, tau: f64, iters: usize) -> Result<(f64, HungPermGrads)> {
        let n = self.n();
        let (codes, enc_cache) = self.encoder.forward_cached(inputs.view());
        let flat = codes.into_shape_with_order((1, n * self.encoder.output_dim())).expect("contiguous");
        let (out, head_cache) = self.head.forward_cached(flat.view());
        let scaled = out.into_shape_with_order((n, n)).expect("n^2 outputs") / tau;
        let s = sinkhorn_normalize(scaled.view(), iters, 0.0)?;
        let mask = hungarian_attention_mask(&s, gt)?;
        let (loss, d_s) = attended_bce_loss(s.values().view(), gt, &mask)?;
        let d_c = sinkhorn_backward(scaled.view(), &s, d_s.view())? / tau;
        let (head, d_flat) = self
            .head
            .backward(&head_cache, d_c.into_shape_with_order((1, n * n)).expect("contiguous"));
        let d_codes = d_flat
            .into_shape_with_order((n, self.encoder.output_dim()))
            .expect("contiguous");
        let (encoder, _) = self.encoder.backward(&enc_cache, d_codes);
        Ok((loss, HungPermGrads { encoder, head }))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.head.params_mut());
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(Vec::new());
        w.bytes(HUNG_PERM_MAGIC)?;
        for v in [
            HUNG_PERM_VERSION as usize,
            self.input_side,
            self.channels,
            self.rows,
            self.cols,
        ] {
            w.u32(v)?;
        }
        w.mlp_header(&self.encoder)?;
        w.mlp_header(&self.head)?;
        w.mlp_params(&self.encoder)?;
        w.mlp_params(&self.head)?;
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.magic(HUNG_PERM_MAGIC)?;
        let version = r.u32()?;
        if version != HUNG_PERM_VERSION as usize {
            return Err(Error::WeightsFormat(format!("unsupported version {version}")));
        }
        let (input_side, channels, rows, cols) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let mut encoder = r.mlp_header()?;
        let mut head = r.mlp_header()?;
        let n = rows * cols;
        if encoder.input_dim() != input_side * input_side * channels
            || head.input_dim() != n * encoder.output_dim()
            || head.output_dim() != n * n
        {
            return Err(Error::WeightsFormat("inconsistent hung-perm widths".into()));
        }
        r.mlp_params(&mut encoder)?;
        r.mlp_params(&mut head)?;
        r.finish()?;
        Ok(Self {
            input_side,
            channels,
            rows,
            cols,
            encoder,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Scores -> Sinkhorn -> Hungarian, with no mental image.
pub fn solve_hung_perm(puzzle: &PuzzleInstance, net: &HungPermNet, config: &SolveConfig) -> Result<Permutation> {
    let inputs = net.prepare(puzzle)?;
    let scores = net.scores(&inputs);
    assign_from_scores(scores.view(), &vec![true; puzzle.len()], config)
}

#[derive(Clone, Debug)]
pub struct HungPermOutcome {
    pub net: HungPermNet,
    pub epochs: Vec<EpochLog>,
}

/// Trains with the Hungarian-attention loss alone, using the optimizer,
/// batching and seed handling of the matcher. All puzzles must share one
/// grid size.
pub fn train_hung_perm(dataset: &[PuzzleInstance], config: &TrainConfig) -> Result<HungPermOutcome> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    if !(config.tau > 0.0) {
        return Err(Error::NonPositiveTemperature(config.tau));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut net = HungPermNet::new(
        config.input_side,
        first.channels(),
        first.rows(),
        first.cols(),
        &config.branch_hidden_for_hung_perm(),
        derive_seed(config.seed, &["hung-perm", "init"]),
    );
    let inputs = dataset
        .par_iter()
        .map(|p| net.prepare(p))
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<(usize, usize)> = dataset.iter().map(|p| (p.rows(), p.cols())).collect();
    let mut rng = PuzzleRng::new(derive_seed(config.seed, &["hung-perm", "batches"]));
    let mut adam = Adam::new(config.learning_rate);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (b, batch) in epoch_batches(&grids, config.batch_size, &mut rng).iter().enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| net.loss(&inputs[i], dataset[i].gt_permutation(), config.tau, config.sinkhorn_iters))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = HungPermGrads::zeros_like(&net);
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::NaNLoss {
                        epoch,
                        batch: b,
                        detail: format!("hung-perm loss {loss}"),
                    });
                }
                total += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(net.params_mut(), grads.slices());
        }
        let mean = total / dataset.len() as f64;
        log::info!("hung-perm epoch {epoch}: loss {mean:.5}");
        logs.push(EpochLog {
            epoch,
            mean_loss: mean,
            mean_hungarian: mean,
            mean_contrastive: 0.0,
        });
    }
    Ok(HungPermOutcome { net, epochs: logs })
}

impl TrainConfig {
    /// Encoder widths of the hung-perm baseline: the first hidden width of
    /// the matcher branches, twice.
    pub fn branch_hidden_for_hung_perm(&self) -> Vec<usize> {
        let w = self.branch_hidden.first().copied().unwrap_or(256);
        vec![w, w]
    }
}
