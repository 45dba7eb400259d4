//! Plain SGD with global-norm clipping and per-epoch learning-rate decay.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{accumulate_gradients, token_accuracy};
use super::{EncoderMode, ModelConfig, ModelError, ModelParams};
use crate::corpus::EncodedExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Mean example loss seen during the epoch, before each update.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

/// Trains from a fresh seeded initialisation.
pub fn train(corpus: &[EncodedExample], config: &ModelConfig) -> Result<TrainOutcome, ModelError> {
    train_from(ModelParams::init(config), corpus, config, |_, _| {
        ControlFlow::Continue(())
    })
}

/// Trains starting from `params`, calling `on_epoch` after every epoch.
///
/// Returning `ControlFlow::Break` from `on_epoch` ends training after that epoch.
///
/// Examples are visited in a seeded shuffled order; gradients of a batch are
/// summed in that order, so the run is bitwise reproducible for a given seed.
pub fn train_from(
    mut params: ModelParams,
    corpus: &[EncodedExample],
    config: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams) -> ControlFlow<()>,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut grad = params.clone();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut lr = config.learning_rate;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill_zero();
            for &i in batch {
                total_loss += accumulate_gradients(&params, config.mode, &corpus[i], &mut grad)?;
            }
            if batch.len() > 1 {
                grad.scale(1.0 / batch.len() as f64);
            }
            let norm = grad.squared_norm().sqrt();
            if norm > config.grad_clip_norm {
                grad.scale(config.grad_clip_norm / norm);
            }
            params.add_scaled(-lr, &grad);
        }
        let entry = EpochLog {
            epoch,
            lr,
            mean_loss: total_loss / corpus.len() as f64,
        };
        let flow = on_epoch(&entry, &params);
        log.push(entry);
        if flow.is_break() {
            break;
        }
        lr *= config.lr_decay;
    }
    Ok(TrainOutcome { params, log })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_loss: f64,
    /// Share of target tokens predicted correctly under teacher forcing.
    pub token_accuracy: f64,
    pub tokens: usize,
}

pub fn evaluate(
    params: &ModelParams,
    mode: EncoderMode,
    examples: &[EncodedExample],
) -> Result<Evaluation, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let (mut loss, mut correct, mut tokens) = (0.0, 0, 0);
    for ex in examples {
        let (l, c, t) = token_accuracy(params, mode, ex)?;
        loss += l;
        correct += c;
        tokens += t;
    }
    Ok(Evaluation {
        mean_loss: loss / examples.len() as f64,
        token_accuracy: correct as f64 / tokens as f64,
        tokens,
    })
}
