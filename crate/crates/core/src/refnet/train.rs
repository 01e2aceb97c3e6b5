//! SGD-with-momentum training over labeled patches, plus per-patch
//! prediction into the aggregator's record format.

use crate::aggregate::{ClassLabel, PredictionRecord, NUM_CLASSES};
use crate::augment::{augment_batch, AugmentConfig};
use crate::error::{Error, Result};
use crate::patching::{to_classifier_input, Patch};
use crate::rng::stream_for_purpose;

use super::net::{argmax, forward, loss_and_grad, CnnParameters};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's optimization steps (augmented
    /// data when augmentation is on).
    pub loss: f64,
    /// Accuracy over the clean (un-augmented) training patches after the
    /// epoch's updates.
    pub patch_accuracy: f64,
}

impl EpochMetrics {
    /// One CSV line in the `epoch,loss,patch_acc` contract.
    pub fn csv_line(&self) -> String {
        format!("{},{},{}", self.epoch, self.loss, self.patch_accuracy)
    }
}

pub const EPOCH_METRICS_HEADER: &str = "epoch,loss,patch_acc";

fn patch_tensor(patch: &Patch, side: u32) -> Vec<f64> {
    to_classifier_input(patch, side)
        .data()
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect()
}

/// Train with SGD + momentum. Shuffling, augmentation and init all derive
/// from seeds, so identical (seed, data, config) give bitwise-identical
/// parameter trajectories. Returns the final parameters and one metrics
/// row per epoch.
pub fn train(
    params: CnnParameters,
    dataset: &[(Patch, ClassLabel)],
    cfg: &TrainConfig,
    augment_cfg: Option<&AugmentConfig>,
) -> Result<(CnnParameters, Vec<EpochMetrics>)> {
    train_with_progress(params, dataset, cfg, augment_cfg, |_| {})
}

/// As `train`, invoking `on_epoch` after each epoch's metrics are known.
pub fn train_with_progress(
    mut params: CnnParameters,
    dataset: &[(Patch, ClassLabel)],
    cfg: &TrainConfig,
    augment_cfg: Option<&AugmentConfig>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(CnnParameters, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let side = params.arch().input_side() as u32;
    let n = dataset.len();

    let clean: Vec<Vec<f64>> = dataset
        .iter()
        .map(|(p, _)| patch_tensor(p, side))
        .collect();
    let labels: Vec<usize> = dataset.iter().map(|(_, l)| l.index()).collect();

    let mut velocity = params.zeros_like();
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        stream_for_purpose(cfg.seed, "epoch-shuffle", epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let tensors: Vec<Vec<f64>> = match augment_cfg {
                Some(acfg) => {
                    let batch_patches: Vec<Patch> =
                        chunk.iter().map(|&i| dataset[i].0.clone()).collect();
                    augment_batch(&batch_patches, acfg, cfg.seed, epoch as u32)
                        .iter()
                        .map(|p| patch_tensor(p, side))
                        .collect()
                }
                None => chunk.iter().map(|&i| clean[i].clone()).collect(),
            };
            let batch: Vec<(&[f64], usize)> = tensors
                .iter()
                .zip(chunk)
                .map(|(t, &i)| (t.as_slice(), labels[i]))
                .collect();

            let (loss, grads) = loss_and_grad(&params, &batch).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    context: format!("epoch {epoch}, step {step}"),
                },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;

            for (lp, (v, g)) in params
                .layers_mut()
                .iter_mut()
                .zip(velocity.iter_mut().zip(&grads))
            {
                for (w, (vw, gw)) in lp
                    .weights
                    .iter_mut()
                    .zip(v.weights.iter_mut().zip(&g.weights))
                {
                    *vw = cfg.momentum * *vw - cfg.learning_rate * gw;
                    *w += *vw;
                }
                for (b, (vb, gb)) in lp
                    .biases
                    .iter_mut()
                    .zip(v.biases.iter_mut().zip(&g.biases))
                {
                    *vb = cfg.momentum * *vb - cfg.learning_rate * gb;
                    *b += *vb;
                }
            }
        }

        let mut correct = 0usize;
        for (tensor, &label) in clean.iter().zip(&labels) {
            let (probs, _) = forward(&params, tensor)?;
            if argmax(&probs) == label {
                correct += 1;
            }
        }
        let row = EpochMetrics {
            epoch,
            loss: loss_sum / n as f64,
            patch_accuracy: correct as f64 / n as f64,
        };
        on_epoch(&row);
        metrics.push(row);
    }
    Ok((params, metrics))
}

/// Resize, normalize and classify one patch. The record carries the full
/// probability vector; the label is the argmax with ties broken toward
/// the lowest class index.
pub fn predict_patch(
    params: &CnnParameters,
    patch: &Patch,
    side: u32,
    model_id: &str,
) -> Result<PredictionRecord> {
    if params.arch().num_classes() != NUM_CLASSES {
        return Err(Error::ShapeMismatch {
            context: format!(
                "classifier has {} outputs, prediction records need {NUM_CLASSES}",
                params.arch().num_classes()
            ),
        });
    }
    let tensor = patch_tensor(patch, side);
    let (probs, _) = forward(params, &tensor)?;
    let probs4: [f64; NUM_CLASSES] = std::array::from_fn(|i| probs[i]);
    Ok(PredictionRecord::from_probs(
        patch.image_id.clone(),
        patch.grid_index,
        model_id,
        probs4,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterImage;
    use crate::refnet::arch::CnnArchitecture;
    use crate::refnet::net::init_params;

    fn constant_color_dataset(per_class: usize, side: u32) -> Vec<(Patch, ClassLabel)> {
        let colors = [
            [230u8, 40, 40],
            [40, 230, 40],
            [40, 40, 230],
            [230, 230, 40],
        ];
        let mut out = Vec::new();
        for (ci, class) in ClassLabel::ALL.iter().enumerate() {
            for k in 0..per_class {
                let img = RasterImage::filled(side, side, colors[ci]);
                out.push((
                    Patch::new(format!("c{ci}i{k}"), k as u32, img),
                    *class,
                ));
            }
        }
        out
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 4).unwrap();
        let params = init_params(&arch, 1);
        let dataset = constant_color_dataset(1, 17);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, metrics) = train(params.clone(), &dataset, &cfg, None).unwrap();
        assert_eq!(out, params);
        assert!(metrics.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let arch = CnnArchitecture::baseline(17, 2, 2, 2, 8).unwrap();
        let dataset = constant_color_dataset(2, 20);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 3,
            batch_size: 4,
            seed: 7,
            ..Default::default()
        };
        let run = || {
            train(init_params(&arch, 5), &dataset, &cfg, None)
                .unwrap()
        };
        let (pa, ma) = run();
        let (pb, mb) = run();
        assert_eq!(ma, mb);
        for (la, lb) in pa.layers().iter().zip(pb.layers()) {
            let bits_a: Vec<u64> = la.weights.iter().map(|w| w.to_bits()).collect();
            let bits_b: Vec<u64> = lb.weights.iter().map(|w| w.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "weights differ bitwise");
        }
    }

    #[test]
    fn training_with_augmentation_is_deterministic() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 4).unwrap();
        let dataset = constant_color_dataset(2, 20);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 3,
            ..Default::default()
        };
        let acfg = AugmentConfig::default();
        let (pa, _) = train(init_params(&arch, 5), &dataset, &cfg, Some(&acfg)).unwrap();
        let (pb, _) = train(init_params(&arch, 5), &dataset, &cfg, Some(&acfg)).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 4).unwrap();
        let params = init_params(&arch, 1);
        assert!(matches!(
            train(params, &[], &TrainConfig::default(), None),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn predict_patch_zero_net_gives_uniform_and_label_zero() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 4).unwrap();
        let mut params = init_params(&arch, 1);
        for lp in params.layers_mut() {
            for w in lp.weights.iter_mut() {
                *w = 0.0;
            }
        }
        let patch = Patch::new("img9", 4, RasterImage::filled(30, 30, [9, 9, 9]));
        let rec = predict_patch(&params, &patch, 17, "zeronet").unwrap();
        assert_eq!(rec.label, ClassLabel::Normal);
        assert_eq!(rec.image_id, "img9");
        assert_eq!(rec.patch_index, 4);
        let probs = rec.probs.unwrap();
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_shift_leaves_label_unchanged() {
        // Adding a constant to every output bias shifts all logits
        // equally; softmax is shift-invariant so the label holds.
        let arch = CnnArchitecture::baseline(17, 2, 2, 2, 6).unwrap();
        let params = init_params(&arch, 33);
        let patch = Patch::new("p", 0, RasterImage::from_fn(25, 25, |x, y| {
            [(x * 11) as u8, (y * 7) as u8, ((x + y) * 3) as u8]
        }));
        let base = predict_patch(&params, &patch, 17, "m").unwrap();
        let mut shifted = params.clone();
        let last = shifted.layers_mut().len() - 1;
        for b in shifted.layers_mut()[last].biases.iter_mut() {
            *b += 3.5;
        }
        let moved = predict_patch(&shifted, &patch, 17, "m").unwrap();
        assert_eq!(base.label, moved.label);
    }

    #[test]
    fn separable_dataset_reaches_high_accuracy() {
        // Four constant colors are linearly separable; a small net fits
        // them within a few epochs. Channel width matters: very narrow
        // stacks can lose whole classes to dead ReLU paths.
        let arch = CnnArchitecture::baseline(17, 8, 8, 8, 16).unwrap();
        let dataset = constant_color_dataset(4, 17);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 4,
            epochs: 30,
            seed: 2,
        };
        let (_, metrics) = train(init_params(&arch, 9), &dataset, &cfg, None).unwrap();
        let best = metrics
            .iter()
            .map(|m| m.patch_accuracy)
            .fold(0.0f64, f64::max);
        assert!(best >= 0.95, "best accuracy {best}");
        let first = &metrics[0];
        assert!(first.loss.is_finite());
    }
}
