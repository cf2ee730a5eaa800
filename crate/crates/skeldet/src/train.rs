//! SGD training with momentum and weight decay, plateau-driven learning-rate
//! drops, and random temporal-patch augmentation. Training is a pure function
//! of (dataset, configs, seed): batches may be evaluated in parallel but
//! gradients are reduced in a fixed order, so results are bit-identical
//! regardless of worker count.

use crate::boxes::{generate_priors, match_gt, BBox};
use crate::encoding::{crop_cols, resample_width, ActionImage};
use crate::error::{Error, Result};
use crate::loss::multibox_loss;
use crate::net::{Grads, NetConfig, Network};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Optimizer and loop settings. The defaults mirror the original training
/// recipe (momentum 0.9, weight decay 5e-4, batch 4, learning rate 4e-6,
/// rate divided by 10 on plateau at most 3 times); small experiments
/// typically raise the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_drop_factor: f64,
    pub lr_drops_max: usize,
    /// Epochs without improvement over the best loss before a rate drop.
    pub plateau_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Prior-to-gt IoU threshold for positive matches.
    pub match_threshold: f64,
    /// Mined hard negatives per positive.
    pub neg_pos_ratio: f64,
    /// Weight of the localization term relative to confidence.
    pub loc_weight: f64,
    /// Probability of replacing a sample by a random temporal patch.
    pub augment_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 4e-6,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 4,
            lr_drop_factor: 10.0,
            lr_drops_max: 3,
            plateau_patience: 1,
            max_epochs: 30,
            seed: 0,
            match_threshold: 0.5,
            neg_pos_ratio: 3.0,
            loc_weight: 1.0,
            augment_prob: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if !(self.lr_drop_factor > 1.0) {
            return Err(Error::Config("lr_drop_factor must exceed 1".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Config("plateau_patience must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(Error::Config("match_threshold must be in [0, 1]".into()));
        }
        if self.neg_pos_ratio < 0.0 {
            return Err(Error::Config("neg_pos_ratio must be nonnegative".into()));
        }
        if self.loc_weight < 0.0 {
            return Err(Error::Config("loc_weight must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_prob) {
            return Err(Error::Config("augment_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One SGD-with-momentum update:
/// `v ← momentum·v − lr·(grad + weight_decay·param); param ← param + v`.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    velocity: &mut [Tensor],
    cfg: &TrainConfig,
    current_lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "{} params, {} grads, {} velocity tensors",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Shape(format!(
                "parameter {:?} vs gradient {:?} vs velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        for ((pv, gv), vv) in
            p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut().iter_mut())
        {
            *vv = cfg.momentum * *vv - current_lr * (gv + cfg.weight_decay * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}

/// Learning-rate schedule: divide by `factor` after `patience` consecutive
/// epochs whose loss fails to improve on the best seen, at most `max_drops`
/// times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    base_lr: f64,
    factor: f64,
    max_drops: usize,
    patience: usize,
    drops: usize,
    streak: usize,
    best: f64,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        PlateauSchedule {
            base_lr: cfg.learning_rate,
            factor: cfg.lr_drop_factor,
            max_drops: cfg.lr_drops_max,
            patience: cfg.plateau_patience,
            drops: 0,
            streak: 0,
            best: f64::INFINITY,
        }
    }

    /// Rate in effect for the next epoch.
    pub fn lr(&self) -> f64 {
        self.base_lr / self.factor.powi(self.drops as i32)
    }

    /// Record an epoch's loss; may drop the rate for subsequent epochs.
    pub fn observe(&mut self, epoch_loss: f64) {
        if epoch_loss < self.best {
            self.best = epoch_loss;
            self.streak = 0;
            return;
        }
        self.streak += 1;
        if self.streak >= self.patience && self.drops < self.max_drops {
            self.drops += 1;
            self.streak = 0;
        }
    }
}

/// One training example: an encoded image and its ground-truth boxes with
/// 0-based class labels (normalized image coordinates).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: ActionImage,
    pub gts: Vec<(BBox, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample objective; always `conf + loc`.
    pub loss: f64,
    /// Mean normalized confidence term.
    pub conf: f64,
    /// Mean normalized (weighted) localization term.
    pub loc: f64,
    pub lr: f64,
}

/// Training output: the fitted network, final optimizer velocity (for
/// checkpointing), and the per-epoch loss log.
pub struct Trained {
    pub net: Network,
    pub velocity: Vec<Tensor>,
    pub log: Vec<EpochStats>,
}

/// Replace a sample by a random temporal patch: crop a window of 30–100% of
/// the width that contains at least one ground-truth center, stretch it back
/// to full width, and remap the boxes (dropping ones whose center left the
/// window). Falls back to the original sample if no box survives.
fn sample_patch(sample: &TrainSample, rng: &mut ChaCha8Rng) -> Result<TrainSample> {
    let w = sample.image.width;
    if sample.gts.is_empty() || w < 4 {
        return Ok(sample.clone());
    }
    let anchor = sample.gts[rng.gen_range(0..sample.gts.len())].0.cx * w as f64;
    let len = rng.gen_range((0.3 * w as f64).max(1.0)..=w as f64).round() as usize;
    let len = len.clamp(1, w);
    // Window start range keeping the anchor center inside [c0, c0 + len).
    let lo = (anchor.floor() as isize + 1 - len as isize).max(0) as usize;
    let hi = (anchor.floor() as usize).min(w - len);
    if lo > hi {
        return Ok(sample.clone());
    }
    let c0 = rng.gen_range(lo..=hi);
    let cropped = crop_cols(&sample.image, c0, c0 + len)?;
    let image = resample_width(&cropped, w)?;

    let mut gts = Vec::new();
    for &(b, label) in &sample.gts {
        let center = b.cx * w as f64;
        if center < c0 as f64 || center >= (c0 + len) as f64 {
            continue;
        }
        let x0 = ((b.cx - 0.5 * b.w) * w as f64 - c0 as f64) / len as f64;
        let x1 = ((b.cx + 0.5 * b.w) * w as f64 - c0 as f64) / len as f64;
        let (x0, x1) = (x0.max(0.0), x1.min(1.0));
        // Drop slivers narrower than one column of the output image.
        if x1 - x0 < 1.0 / w as f64 {
            continue;
        }
        gts.push((BBox { cx: 0.5 * (x0 + x1), cy: b.cy, w: x1 - x0, h: b.h }, label));
    }
    if gts.is_empty() {
        return Ok(sample.clone());
    }
    Ok(TrainSample { image, gts })
}

/// Train a freshly initialized network on `samples`. Initialization draws
/// from PRNG stream 0 of `cfg.seed`; shuffling and augmentation draw from
/// stream 1.
pub fn train(samples: &[TrainSample], net_cfg: &NetConfig, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Validation("training set is empty".to_string()));
    }
    let mut net = Network::init(net_cfg.clone(), cfg.seed)?;
    let priors = generate_priors(&net.config().prior_config()?);
    let mut velocity: Vec<Tensor> =
        net.param_tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut schedule = PlateauSchedule::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = Vec::with_capacity(cfg.max_epochs);

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        // Fisher-Yates shuffle from the epoch stream.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut part_sums = [0.0f64; 3];
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            // Augmentation decisions are sequential (deterministic); the
            // heavy per-sample passes then run in parallel.
            let mut prepared = Vec::with_capacity(batch.len());
            for &si in batch {
                let s = &samples[si];
                if cfg.augment_prob > 0.0 && rng.gen_range(0.0..1.0) < cfg.augment_prob {
                    prepared.push(sample_patch(s, &mut rng)?);
                } else {
                    prepared.push(s.clone());
                }
            }
            let results: Vec<([f64; 3], Grads)> = prepared
                .par_iter()
                .map(|s| -> Result<([f64; 3], Grads)> {
                    let input = net.image_to_input(&s.image)?;
                    let fwd = net.forward(&input)?;
                    if fwd.loc.iter().chain(fwd.conf.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::Validation(
                            "network output is not finite".to_string(),
                        ));
                    }
                    let gt_boxes: Vec<BBox> = s.gts.iter().map(|&(b, _)| b).collect();
                    let matched = match_gt(&priors, &gt_boxes, cfg.match_threshold);
                    let (report, d_loc, d_conf) = multibox_loss(
                        &fwd.loc,
                        &fwd.conf,
                        &priors,
                        &s.gts,
                        &matched,
                        net.config().num_classes,
                        cfg.loc_weight,
                        cfg.neg_pos_ratio,
                    )?;
                    let grads = net.backward(&fwd, &d_loc, &d_conf)?;
                    // Normalized term breakdown: total == conf/N + α·loc/N.
                    let parts = if report.n_matched > 0 {
                        let inv_n = 1.0 / report.n_matched as f64;
                        [
                            report.total,
                            report.conf * inv_n,
                            cfg.loc_weight * report.loc * inv_n,
                        ]
                    } else {
                        [0.0; 3]
                    };
                    Ok((parts, grads))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Train { epoch, batch: batch_idx, message: e.to_string() })?;

            // Fixed-order reduction keeps results worker-count independent.
            let mut iter = results.into_iter();
            let (mut batch_parts, mut batch_grads) = iter.next().expect("nonempty batch");
            for (p, g) in iter {
                for (acc, v) in batch_parts.iter_mut().zip(p) {
                    *acc += v;
                }
                batch_grads.add(&g);
            }
            let inv = 1.0 / batch.len() as f64;
            batch_grads.scale(inv);
            if !(batch_parts[0] * inv).is_finite() {
                return Err(Error::Train {
                    epoch,
                    batch: batch_idx,
                    message: format!("loss diverged to {}", batch_parts[0] * inv),
                });
            }
            for (acc, v) in part_sums.iter_mut().zip(batch_parts) {
                *acc += v;
            }
            let mut params = net.param_tensors_mut();
            sgd_step(&mut params, &batch_grads.tensors, &mut velocity, cfg, lr)?;
        }
        let inv = 1.0 / samples.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: part_sums[0] * inv,
            conf: part_sums[1] * inv,
            loc: part_sums[2] * inv,
            lr,
        };
        log.push(stats);
        log::info!(
            "epoch {:3}: loss {:.6} (conf {:.6}, loc {:.6}, lr {:.2e})",
            epoch,
            stats.loss,
            stats.conf,
            stats.loc,
            lr
        );
        schedule.observe(stats.loss);
    }
    Ok(Trained { net, velocity, log })
}
