//! Training of the embedding networks with the Hungarian-attention loss
//! plus the contrastive loss.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use super::embed::{EmbeddingNet, NetGrads, NetShape};
use super::mlp::Adam;
use super::pipeline::roi_crop_slots;
use super::provider::MentalImageProvider;
use crate::assignment::{
    attended_bce_loss, contrastive_loss, hungarian_attention_mask, sinkhorn_backward,
    sinkhorn_normalize,
};
use crate::error::{Error, Result};
use crate::puzzle::{Permutation, PuzzleInstance};
use crate::raster::Raster;
use crate::rng::{derive_seed, PuzzleRng};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fixed number of unrolled Sinkhorn iterations.
    pub sinkhorn_iters: usize,
    pub embedding_dim: usize,
    pub input_side: usize,
    pub branch_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            sinkhorn_iters: 20,
            embedding_dim: 64,
            input_side: 16,
            branch_hidden: vec![256, 128],
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.sinkhorn_iters == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidArgument(
                "batch size, sinkhorn iterations and embedding dim must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn shape(&self, channels: usize) -> NetShape {
        NetShape {
            input_side: self.input_side,
            channels,
            branch_hidden: self.branch_hidden.clone(),
            embedding_dim: self.embedding_dim,
        }
    }
}

/// A puzzle turned into network inputs: present pieces and slot crops as
/// flattened rows, with the ground-truth slot of each piece row.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub pieces: Array2<f64>,
    pub slots: Array2<f64>,
    pub gt: Permutation,
    pub grid: (usize, usize),
}

impl TrainingSample {
    /// Requires every piece to be present.
    pub fn build(
        puzzle: &PuzzleInstance,
        provider: &dyn MentalImageProvider,
        net: &EmbeddingNet,
    ) -> Result<Self> {
        if puzzle.present_count() != puzzle.len() {
            return Err(Error::InvalidArgument(format!(
                "training puzzle {} has missing pieces",
                puzzle.id()
            )));
        }
        let mental = provider.provide(puzzle)?;
        let crops = roi_crop_slots(&mental, puzzle.rows(), puzzle.cols(), net.input_side)?;
        let crop_refs: Vec<&Raster> = crops.iter().collect();
        let piece_refs: Vec<&Raster> = puzzle.pieces().iter().map(|p| &p.content).collect();
        Ok(Self {
            pieces: net.prepare(&piece_refs)?,
            slots: net.prepare(&crop_refs)?,
            gt: puzzle.gt_permutation().clone(),
            grid: (puzzle.rows(), puzzle.cols()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub hungarian: f64,
    pub contrastive: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.hungarian + self.contrastive
    }
}

/// Loss of one sample and its gradient with respect to every parameter.
/// Sinkhorn runs exactly `sinkhorn_iters` iterations on `C / tau`.
pub fn sample_loss(
    net: &EmbeddingNet,
    sample: &TrainingSample,
    tau: f64,
    sinkhorn_iters: usize,
) -> Result<(LossParts, NetGrads)> {
    let (p, p_cache) = net.forward_cached(sample.pieces.view(), true);
    let (q, q_cache) = net.forward_cached(sample.slots.view(), false);
    let (p, q) = (p.vectors, q.vectors);
    let scaled = p.dot(&q.t()) / tau;
    let s = sinkhorn_normalize(scaled.view(), sinkhorn_iters, 0.0)?;
    let mask = hungarian_attention_mask(&s, &sample.gt)?;
    let (hungarian, d_s) = attended_bce_loss(s.values().view(), &sample.gt, &mask)?;
    let d_c = sinkhorn_backward(scaled.view(), &s, d_s.view())? / tau;
    let contr = contrastive_loss(p.view(), q.view(), &sample.gt, tau)?;
    let d_p = d_c.dot(&q) + &contr.grad_pieces;
    let d_q = d_c.t().dot(&p) + &contr.grad_slots;
    let mut grads = NetGrads::zeros_like(net);
    net.backward(&p_cache, &d_p, true, &mut grads);
    net.backward(&q_cache, &d_q, false, &mut grads);
    Ok((
        LossParts {
            hungarian,
            contrastive: contr.loss,
        },
        grads,
    ))
}

/// Batches of sample indices for one epoch, given each sample's grid.
/// Samples are grouped by grid size, each group is shuffled and chunked, and
/// the batch order shuffled.
pub fn epoch_batches(grids: &[(usize, usize)], batch_size: usize, rng: &mut PuzzleRng) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, &g) in grids.iter().enumerate() {
        groups.entry(g).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (_, mut idx) in groups {
        rng.shuffle(&mut idx);
        batches.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
    }
    rng.shuffle(&mut batches);
    batches
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_hungarian: f64,
    pub mean_contrastive: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: EmbeddingNet,
    pub epochs: Vec<EpochLog>,
}

pub fn train_matcher(
    dataset: &[PuzzleInstance],
    provider: &dyn MentalImageProvider,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let net = EmbeddingNet::new(&config.shape(first.channels()), derive_seed(config.seed, &["init"]));
    let samples = dataset
        .par_iter()
        .map(|p| TrainingSample::build(p, provider, &net))
        .collect::<Result<Vec<_>>>()?;
    train_on_samples(net, &samples, config)
}

/// Optimizes `net` on prepared samples. Per-sample gradients are computed in
/// parallel and reduced in a fixed order, so the result depends only on the
/// seed.
pub fn train_on_samples(
    mut net: EmbeddingNet,
    samples: &[TrainingSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = PuzzleRng::new(derive_seed(config.seed, &["batches"]));
    let mut adam = Adam::new(config.learning_rate);
    let mut logs = Vec::with_capacity(config.epochs);
    let grids: Vec<(usize, usize)> = samples.iter().map(|s| s.grid).collect();
    for epoch in 0..config.epochs {
        let (mut total, mut hung, mut contr) = (0.0, 0.0, 0.0);
        for (b, batch) in epoch_batches(&grids, config.batch_size, &mut rng).iter().enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| sample_loss(&net, &samples[i], config.tau, config.sinkhorn_iters))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = NetGrads::zeros_like(&net);
            let mut batch_loss = 0.0;
            for (parts, g) in &results {
                if !parts.total().is_finite() {
                    return Err(Error::NaNLoss {
                        epoch,
                        batch: b,
                        detail: format!(
                            "hungarian {} contrastive {}",
                            parts.hungarian, parts.contrastive
                        ),
                    });
                }
                batch_loss += parts.total();
                hung += parts.hungarian;
                contr += parts.contrastive;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if grads.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::NaNLoss {
                    epoch,
                    batch: b,
                    detail: "non-finite gradient".into(),
                });
            }
            total += batch_loss;
            adam.step(net.params_mut(), grads.slices());
        }
        let count = samples.len() as f64;
        let entry = EpochLog {
            epoch,
            mean_loss: total / count,
            mean_hungarian: hung / count,
            mean_contrastive: contr / count,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (hungarian {:.5}, contrastive {:.5})",
            entry.mean_loss,
            entry.mean_hungarian,
            entry.mean_contrastive
        );
        logs.push(entry);
    }
    Ok(TrainOutcome { net, epochs: logs })
}
