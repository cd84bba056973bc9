use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{forward, NetworkSpec, NetworkWeights, Tensor};

use super::adam::AdamState;
use super::backprop::{backward, update_running_stats};
use super::config::{lr_schedule, TrainConfig};
use super::dataset::{Dataset, TrainingExample};
use super::loss::Loss;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss over the epoch's steps.
    pub train_loss: f64,
    /// Inference-mode loss over the whole validation set.
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    pub optimizer: AdamState,
    pub trace: Vec<EpochRecord>,
    /// Batch loss at every optimizer step, before that step's update.
    pub step_losses: Vec<f64>,
}

pub fn trace_csv(trace: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_loss\n");
    for r in trace {
        writeln!(s, "{},{},{},{}", r.epoch, r.lr, r.train_loss, r.val_loss).unwrap();
    }
    s
}

/// Loss of the network in inference mode (running batch-norm statistics).
pub fn evaluate_loss(spec: &NetworkSpec, weights: &NetworkWeights, examples: &[TrainingExample], loss: Loss) -> Result<f64> {
    use rayon::prelude::*;
    if examples.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let preds: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|e| forward(spec, weights, &e.input).map(|p| p.into_data()))
        .collect::<Result<_>>()?;
    let p: Vec<&[f64]> = preds.iter().map(|v| v.as_slice()).collect();
    let l: Vec<&[f64]> = examples.iter().map(|e| e.label.data()).collect();
    loss.value(&p, &l)
}

/// Train freshly He-initialized weights; `cfg.seed` drives both the
/// initialization and the batch order.
pub fn train(spec: &NetworkSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = NetworkWeights::he_init(spec, &mut rng);
    train_from(spec, weights, None, data, cfg, &mut rng)
}

/// Continue training from `weights` (and optionally a saved optimizer state).
pub fn train_from(
    spec: &NetworkSpec,
    mut weights: NetworkWeights,
    optimizer: Option<AdamState>,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    weights.check(spec)?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    let loss = cfg.loss_for(spec.target);
    let mut opt = optimizer.unwrap_or_else(|| AdamState::for_shapes(weights.trainable()));
    let mut trace = Vec::new();
    let mut step_losses = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let diverged = |what: String, trace: &[EpochRecord]| {
        Error::Numeric(format!("training diverged: {what}\n{}", trace_csv(trace)))
    };

    'epochs: for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| step_losses.len() >= m) {
                break;
            }
            let inputs: Vec<Tensor> = chunk.iter().map(|&i| data.train[i].input.clone()).collect();
            let labels: Vec<&[f64]> = chunk.iter().map(|&i| data.train[i].label.data()).collect();
            let (value, grads, pass) = match backward(spec, &weights, &inputs, &labels, loss) {
                Ok(v) => v,
                Err(Error::Numeric(m)) => return Err(diverged(m, &trace)),
                Err(e) => return Err(e),
            };
            if !grads.max_abs().is_finite() {
                return Err(diverged(format!("non-finite gradient at epoch {epoch}"), &trace));
            }
            opt.step(weights.trainable_mut(), &grads.slices(), lr, &cfg.adam)?;
            update_running_stats(&mut weights, &pass.stats, cfg.bn_momentum);
            step_losses.push(value);
            sum += value;
            steps += 1;
        }
        if steps == 0 {
            break 'epochs;
        }
        let val_loss = if data.val.is_empty() { f64::NAN } else { evaluate_loss(spec, &weights, &data.val, loss)? };
        let rec = EpochRecord { epoch, lr, train_loss: sum / steps as f64, val_loss };
        log::info!(
            "{} epoch {epoch}: lr {lr:.3e} train {:.6} val {:.6}",
            spec.target,
            rec.train_loss,
            rec.val_loss
        );
        trace.push(rec);
        if !rec.train_loss.is_finite() || (!data.val.is_empty() && !val_loss.is_finite()) {
            return Err(diverged(format!("non-finite loss at epoch {epoch}"), &trace));
        }
    }
    Ok(TrainOutcome { weights, optimizer: opt, trace, step_losses })
}
