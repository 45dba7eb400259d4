//! Dual-encoder GRU sequence-to-sequence model for code summarization.
//!
//! One GRU encodes the Prüfer encoder input, a second GRU encodes the
//! context sequence. At every decoder step each encoder is read with additive
//! attention, the two reads are merged by a `tanh` combiner and the result is
//! fed with the decoder state to the output projection. The decoder starts
//! from the last Prüfer-encoder state. All gradients are written out by hand.

mod attention;
mod gru;
pub mod linalg;
mod network;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attention::{attend_and_combine, attention_weights, AttentionWeights};
pub use gru::{gru_step, GruWeights};
pub use linalg::Matrix;
pub use network::{
    decode_step, encode_inputs, encode_sequence, greedy_decode, loss_and_gradients, token_accuracy,
    EncoderStates,
};
pub use train::{evaluate, train, train_from, EpochLog, Evaluation, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("no {0} encoder states to attend over")]
    EmptyEncoderStates(String),
    #[error("token id {id} outside vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("target needs at least START and EOS")]
    TargetTooShort,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Which encoders feed the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    #[default]
    Dual,
    /// Ablation: the context encoder is dropped and its attention read is zero.
    PruferOnly,
}

impl std::fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderMode::Dual => "dual",
            EncoderMode::PruferOnly => "prufer-only",
        })
    }
}

impl std::str::FromStr for EncoderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dual" => Ok(EncoderMode::Dual),
            "prufer-only" => Ok(EncoderMode::PruferOnly),
            other => Err(format!(
                "unknown encoder mode {other:?} (expected dual or prufer-only)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub prufer_vocab: usize,
    pub context_vocab: usize,
    pub target_vocab: usize,
    pub max_decode_len: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
    pub mode: EncoderMode,
}

impl ModelConfig {
    /// Desk-scale defaults: hidden and embedding size 64.
    pub fn desk(prufer_vocab: usize, context_vocab: usize, target_vocab: usize) -> Self {
        Self {
            hidden_dim: 64,
            embed_dim: 64,
            prufer_vocab,
            context_vocab,
            target_vocab,
            max_decode_len: 30,
            learning_rate: 0.5,
            lr_decay: 0.99,
            grad_clip_norm: 5.0,
            epochs: 60,
            batch_size: 1,
            init_scale: 0.08,
            seed: 0,
            mode: EncoderMode::Dual,
        }
    }

    /// Sizes and schedule of the full-scale setting: 256-unit GRUs, 60 epochs.
    pub fn full_scale(prufer_vocab: usize, context_vocab: usize, target_vocab: usize) -> Self {
        Self {
            hidden_dim: 256,
            embed_dim: 256,
            ..Self::desk(prufer_vocab, context_vocab, target_vocab)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let sizes = [
            self.hidden_dim,
            self.embed_dim,
            self.prufer_vocab,
            self.context_vocab,
            self.target_vocab,
            self.batch_size,
        ];
        if sizes.contains(&0) {
            return Err(ModelError::DimensionMismatch(
                "model sizes and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.lr_decay > 0.0 && self.grad_clip_norm > 0.0) {
            return Err(ModelError::DimensionMismatch(
                "learning rate, decay and clip norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub emb_prufer: Matrix,
    pub emb_context: Matrix,
    pub emb_target: Matrix,
    pub enc_prufer: GruWeights,
    pub enc_context: GruWeights,
    pub decoder: GruWeights,
    pub att_prufer: AttentionWeights,
    pub att_context: AttentionWeights,
    /// `H × 2H`, acting on `[c_prufer; c_context]`.
    pub combiner: Matrix,
    /// `V × 2H`, acting on `[decoder state; combined context]`.
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

/// Names of the flattened tensors, in flattening order.
pub const TENSOR_NAMES: [&str; TENSOR_COUNT] = [
    "emb_prufer",
    "emb_context",
    "emb_target",
    "enc_prufer.w_r",
    "enc_prufer.b_r",
    "enc_prufer.w_z",
    "enc_prufer.b_z",
    "enc_prufer.w_h",
    "enc_prufer.b_h",
    "enc_context.w_r",
    "enc_context.b_r",
    "enc_context.w_z",
    "enc_context.b_z",
    "enc_context.w_h",
    "enc_context.b_h",
    "decoder.w_r",
    "decoder.b_r",
    "decoder.w_z",
    "decoder.b_z",
    "decoder.w_h",
    "decoder.b_h",
    "att_prufer.w_a",
    "att_prufer.v",
    "att_context.w_a",
    "att_context.v",
    "combiner",
    "w_out",
    "b_out",
];

pub const TENSOR_COUNT: usize = 28;

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (h, e) = (config.hidden_dim, config.embed_dim);
        Self {
            emb_prufer: Matrix::zeros(config.prufer_vocab, e),
            emb_context: Matrix::zeros(config.context_vocab, e),
            emb_target: Matrix::zeros(config.target_vocab, e),
            enc_prufer: GruWeights::zeros(e, h),
            enc_context: GruWeights::zeros(e, h),
            decoder: GruWeights::zeros(e, h),
            att_prufer: AttentionWeights::zeros(h),
            att_context: AttentionWeights::zeros(h),
            combiner: Matrix::zeros(h, 2 * h),
            w_out: Matrix::zeros(config.target_vocab, 2 * h),
            b_out: vec![0.0; config.target_vocab],
        }
    }

    /// Uniform initialisation in `[-init_scale, init_scale]` from `config.seed`.
    pub fn init(config: &ModelConfig) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.init_scale;
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = if scale > 0.0 {
                    rng.gen_range(-scale..=scale)
                } else {
                    0.0
                };
            }
        }
        params
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            &self.emb_prufer.data,
            &self.emb_context.data,
            &self.emb_target.data,
        ];
        out.extend(self.enc_prufer.tensors());
        out.extend(self.enc_context.tensors());
        out.extend(self.decoder.tensors());
        out.extend(self.att_prufer.tensors());
        out.extend(self.att_context.tensors());
        out.extend([
            self.combiner.data.as_slice(),
            self.w_out.data.as_slice(),
            self.b_out.as_slice(),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.emb_prufer.data,
            &mut self.emb_context.data,
            &mut self.emb_target.data,
        ];
        out.extend(self.enc_prufer.tensors_mut());
        out.extend(self.enc_context.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out.extend(self.att_prufer.tensors_mut());
        out.extend(self.att_context.tensors_mut());
        out.extend([
            self.combiner.data.as_mut_slice(),
            self.w_out.data.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Writes a flat vector produced by [`ModelParams::flatten`] back into this shape.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.num_params() {
            return Err(ModelError::DimensionMismatch(format!(
                "flat vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Flat index ranges of each tensor, keyed by name.
    pub fn tensor_ranges(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let mut offset = 0;
        self.tensors()
            .iter()
            .zip(TENSOR_NAMES)
            .map(|(t, name)| {
                let r = offset..offset + t.len();
                offset += t.len();
                (name, r)
            })
            .collect()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum()
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// `self += alpha · other`
    pub(crate) fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "astprufer-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: configuration plus flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, params: &ModelParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            params: params.flatten(),
        }
    }

    pub fn restore(&self) -> Result<(ModelConfig, ModelParams), ModelError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(ModelError::BadCheckpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let mut params = ModelParams::zeros(&self.config);
        params
            .unflatten(&self.params)
            .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        Ok((self.config.clone(), params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip_and_coverage() {
        let mut config = ModelConfig::desk(7, 5, 9);
        config.hidden_dim = 3;
        config.embed_dim = 2;
        let params = ModelParams::init(&config);
        let flat = params.flatten();
        assert_eq!(flat.len(), params.num_params());
        let mut back = ModelParams::zeros(&config);
        back.unflatten(&flat).unwrap();
        assert_eq!(back, params);
        assert_eq!(params.tensors().len(), TENSOR_COUNT);
        let ranges = params.tensor_ranges();
        assert_eq!(ranges.last().unwrap().1.end, flat.len());
        // Every coordinate belongs to exactly one tensor: perturbing one changes one tensor only.
        for i in [0, flat.len() / 2, flat.len() - 1] {
            let mut f = flat.clone();
            f[i] += 1.0;
            back.unflatten(&f).unwrap();
            let changed = back
                .tensors()
                .iter()
                .zip(params.tensors())
                .filter(|(a, b)| **a != *b)
                .count();
            assert_eq!(changed, 1);
        }
        assert!(back.unflatten(&flat[1..]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let config = ModelConfig::desk(4, 4, 4);
        let a = ModelParams::init(&config);
        assert_eq!(a, ModelParams::init(&config));
        assert!(a.flatten().iter().all(|v| v.abs() <= 0.08));
        let other = ModelConfig { seed: 1, ..config };
        assert_ne!(a, ModelParams::init(&other));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut config = ModelConfig::desk(4, 4, 4);
        config.hidden_dim = 2;
        config.embed_dim = 2;
        let params = ModelParams::init(&config);
        let json = serde_json::to_string(&Checkpoint::new(&config, &params)).unwrap();
        let ck: Checkpoint = serde_json::from_str(&json).unwrap();
        let (c, p) = ck.restore().unwrap();
        assert_eq!((c, p), (config, params));
    }

    #[test]
    fn presets() {
        let p = ModelConfig::full_scale(10, 10, 10);
        assert_eq!((p.hidden_dim, p.embed_dim, p.epochs), (256, 256, 60));
        assert_eq!(
            (p.learning_rate, p.lr_decay, p.grad_clip_norm),
            (0.5, 0.99, 5.0)
        );
        assert!(ModelConfig { batch_size: 0, ..p }.validate().is_err());
    }
}
