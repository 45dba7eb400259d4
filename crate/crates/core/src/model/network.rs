//! Forward pass, teacher-forced loss with exact gradients, and greedy decoding.

use serde::{Deserialize, Serialize};

use super::attention::{self, AttentionCache};
use super::gru::{self, GruCache, GruWeights};
use super::linalg::{argmax, softmax, Matrix};
use super::{EncoderMode, ModelError, ModelParams};
use crate::corpus::{EncodedExample, EOS_ID, START_ID};

/// Per-position hidden states of both encoders.
///
/// `context` is empty when the context sequence is empty or the context
/// encoder is disabled; the decoder then reads a zero context vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderStates {
    pub prufer: Vec<Vec<f64>>,
    pub context: Vec<Vec<f64>>,
}

fn check_ids(ids: &[u32], embedding: &Matrix) -> Result<(), ModelError> {
    match ids.iter().find(|&&id| id as usize >= embedding.rows) {
        Some(&id) => Err(ModelError::TokenOutOfRange {
            id,
            size: embedding.rows,
        }),
        None => Ok(()),
    }
}

fn run_encoder(ids: &[u32], embedding: &Matrix, weights: &GruWeights) -> Vec<GruCache> {
    let mut state = vec![0.0; weights.hidden()];
    let mut caches = Vec::with_capacity(ids.len());
    for &id in ids {
        let cache = gru::forward(weights, embedding.row(id as usize), &state);
        state.clone_from(&cache.h);
        caches.push(cache);
    }
    caches
}

/// Runs one GRU encoder from a zero state and returns every hidden state.
pub fn encode_sequence(
    ids: &[u32],
    embedding: &Matrix,
    weights: &GruWeights,
) -> Result<Vec<Vec<f64>>, ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if embedding.cols != weights.input() {
        return Err(ModelError::DimensionMismatch(
            "embedding width differs from GRU input".into(),
        ));
    }
    check_ids(ids, embedding)?;
    Ok(run_encoder(ids, embedding, weights)
        .into_iter()
        .map(|c| c.h)
        .collect())
}

pub fn encode_inputs(
    params: &ModelParams,
    mode: EncoderMode,
    prufer_ids: &[u32],
    context_ids: &[u32],
) -> Result<EncoderStates, ModelError> {
    let prufer = encode_sequence(prufer_ids, &params.emb_prufer, &params.enc_prufer)?;
    let context = if mode == EncoderMode::Dual && !context_ids.is_empty() {
        encode_sequence(context_ids, &params.emb_context, &params.enc_context)?
    } else {
        Vec::new()
    };
    Ok(EncoderStates { prufer, context })
}

struct StepCache {
    gru: GruCache,
    att_prufer: AttentionCache,
    att_context: Option<AttentionCache>,
    combined: Vec<f64>,
    logits: Vec<f64>,
}

struct Projections {
    prufer: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
}

impl Projections {
    fn new(params: &ModelParams, states: &EncoderStates) -> Self {
        Self {
            prufer: attention::project_states(&params.att_prufer, &states.prufer),
            context: attention::project_states(&params.att_context, &states.context),
        }
    }
}

fn step_forward(
    params: &ModelParams,
    prev: u32,
    dec_state: &[f64],
    states: &EncoderStates,
    proj: &Projections,
) -> StepCache {
    let hidden = dec_state.len();
    let gru = gru::forward(
        &params.decoder,
        params.emb_target.row(prev as usize),
        dec_state,
    );
    let att_prufer = attention::forward(&params.att_prufer, &gru.h, &states.prufer, &proj.prufer);
    let att_context = (!states.context.is_empty())
        .then(|| attention::forward(&params.att_context, &gru.h, &states.context, &proj.context));
    let zero = vec![0.0; hidden];
    let c_context = att_context.as_ref().map_or(&zero, |a| &a.context);
    let combined = attention::combine(&params.combiner, &att_prufer.context, c_context);
    let mut logits = params.b_out.clone();
    params.w_out.mul_acc(0, &gru.h, &mut logits);
    params.w_out.mul_acc(hidden, &combined, &mut logits);
    StepCache {
        gru,
        att_prufer,
        att_context,
        combined,
        logits,
    }
}

fn check_states(
    params: &ModelParams,
    dec_state: &[f64],
    states: &EncoderStates,
) -> Result<(), ModelError> {
    let hidden = params.decoder.hidden();
    if dec_state.len() != hidden {
        return Err(ModelError::DimensionMismatch(format!(
            "decoder state has {} entries, expected {hidden}",
            dec_state.len()
        )));
    }
    if states.prufer.is_empty() {
        return Err(ModelError::EmptyEncoderStates("prufer".into()));
    }
    if states
        .prufer
        .iter()
        .chain(&states.context)
        .any(|s| s.len() != hidden)
    {
        return Err(ModelError::DimensionMismatch("encoder state size".into()));
    }
    Ok(())
}

/// One decoder step: returns the logits over the target vocabulary and the new decoder state.
pub fn decode_step(
    params: &ModelParams,
    prev_token: u32,
    dec_state: &[f64],
    states: &EncoderStates,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    check_states(params, dec_state, states)?;
    check_ids(&[prev_token], &params.emb_target)?;
    let step = step_forward(
        params,
        prev_token,
        dec_state,
        states,
        &Projections::new(params, states),
    );
    Ok((step.logits, step.gru.h))
}

/// Greedy decoding from `START`; stops at `EOS` (not emitted) or after `max_len` tokens.
pub fn greedy_decode(
    params: &ModelParams,
    mode: EncoderMode,
    prufer_ids: &[u32],
    context_ids: &[u32],
    max_len: usize,
) -> Result<Vec<u32>, ModelError> {
    let states = encode_inputs(params, mode, prufer_ids, context_ids)?;
    let proj = Projections::new(params, &states);
    let mut dec = states.prufer.last().expect("nonempty").clone();
    let mut prev = START_ID;
    let mut out = Vec::new();
    while out.len() < max_len {
        let step = step_forward(params, prev, &dec, &states, &proj);
        let next = argmax(&step.logits) as u32;
        if next == EOS_ID {
            break;
        }
        out.push(next);
        prev = next;
        dec = step.gru.h;
    }
    Ok(out)
}

fn check_example(params: &ModelParams, example: &EncodedExample) -> Result<(), ModelError> {
    if example.comment_ids.len() < 2 {
        return Err(ModelError::TargetTooShort);
    }
    check_ids(&example.prufer_ids, &params.emb_prufer)?;
    check_ids(&example.context_ids, &params.emb_context)?;
    check_ids(&example.comment_ids, &params.emb_target)
}

/// Teacher-forced pass without gradients: `(mean loss, correct argmax predictions, targets)`.
pub fn token_accuracy(
    params: &ModelParams,
    mode: EncoderMode,
    example: &EncodedExample,
) -> Result<(f64, usize, usize), ModelError> {
    check_example(params, example)?;
    let states = encode_inputs(params, mode, &example.prufer_ids, &example.context_ids)?;
    let proj = Projections::new(params, &states);
    let mut dec = states.prufer.last().expect("nonempty").clone();
    let targets = &example.comment_ids[1..];
    let (mut loss, mut correct) = (0.0, 0);
    for (t, &target) in targets.iter().enumerate() {
        let step = step_forward(params, example.comment_ids[t], &dec, &states, &proj);
        let probs = softmax(&step.logits);
        loss -= probs[target as usize].ln();
        correct += usize::from(argmax(&step.logits) == target as usize);
        dec = step.gru.h;
    }
    Ok((loss / targets.len() as f64, correct, targets.len()))
}

/// Mean teacher-forced cross-entropy and its exact gradient.
pub fn loss_and_gradients(
    params: &ModelParams,
    mode: EncoderMode,
    example: &EncodedExample,
) -> Result<(f64, ModelParams), ModelError> {
    let mut grad = params.clone();
    grad.fill_zero();
    let loss = accumulate_gradients(params, mode, example, &mut grad)?;
    Ok((loss, grad))
}

/// Adds the example's loss gradient into `grad` and returns its loss.
pub(crate) fn accumulate_gradients(
    params: &ModelParams,
    mode: EncoderMode,
    example: &EncodedExample,
    grad: &mut ModelParams,
) -> Result<f64, ModelError> {
    check_example(params, example)?;
    if example.prufer_ids.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let hidden = params.decoder.hidden();
    let prufer_caches = run_encoder(&example.prufer_ids, &params.emb_prufer, &params.enc_prufer);
    let context_caches = if mode == EncoderMode::Dual {
        run_encoder(
            &example.context_ids,
            &params.emb_context,
            &params.enc_context,
        )
    } else {
        Vec::new()
    };
    let states = EncoderStates {
        prufer: prufer_caches.iter().map(|c| c.h.clone()).collect(),
        context: context_caches.iter().map(|c| c.h.clone()).collect(),
    };
    let proj = Projections::new(params, &states);

    // Forward through the decoder.
    let inputs = &example.comment_ids[..example.comment_ids.len() - 1];
    let targets = &example.comment_ids[1..];
    let steps_count = targets.len() as f64;
    let mut steps = Vec::with_capacity(targets.len());
    let mut dec = states.prufer.last().expect("nonempty").clone();
    let mut loss = 0.0;
    let mut probs_per_step = Vec::with_capacity(targets.len());
    for (&input, &target) in inputs.iter().zip(targets) {
        let step = step_forward(params, input, &dec, &states, &proj);
        let probs = softmax(&step.logits);
        loss -= probs[target as usize].ln();
        dec.clone_from(&step.gru.h);
        probs_per_step.push(probs);
        steps.push(step);
    }

    // Backward through the decoder.
    let mut d_prufer = vec![vec![0.0; hidden]; states.prufer.len()];
    let mut d_context = vec![vec![0.0; hidden]; states.context.len()];
    let mut d_proj_prufer = vec![vec![0.0; hidden]; states.prufer.len()];
    let mut d_proj_context = vec![vec![0.0; hidden]; states.context.len()];
    let mut d_dec_next = vec![0.0; hidden];
    let zero = vec![0.0; hidden];
    for t in (0..steps.len()).rev() {
        let step = &steps[t];
        let mut d_logits = probs_per_step[t].clone();
        d_logits[targets[t] as usize] -= 1.0;
        d_logits.iter_mut().for_each(|g| *g /= steps_count);

        grad.w_out.outer_acc(0, &d_logits, &step.gru.h);
        grad.w_out.outer_acc(hidden, &d_logits, &step.combined);
        grad.b_out
            .iter_mut()
            .zip(&d_logits)
            .for_each(|(g, d)| *g += d);
        let mut d_dec = d_dec_next.clone();
        params.w_out.t_mul_acc(0, &d_logits, &mut d_dec);
        let mut d_combined = vec![0.0; hidden];
        params.w_out.t_mul_acc(hidden, &d_logits, &mut d_combined);

        let d_comb_pre: Vec<f64> = d_combined
            .iter()
            .zip(&step.combined)
            .map(|(g, c)| g * (1.0 - c * c))
            .collect();
        let c_context = step.att_context.as_ref().map_or(&zero, |a| &a.context);
        grad.combiner
            .outer_acc(0, &d_comb_pre, &step.att_prufer.context);
        grad.combiner.outer_acc(hidden, &d_comb_pre, c_context);
        let mut d_c_prufer = vec![0.0; hidden];
        params.combiner.t_mul_acc(0, &d_comb_pre, &mut d_c_prufer);
        attention::backward(
            &params.att_prufer,
            &step.att_prufer,
            &step.gru.h,
            &states.prufer,
            &d_c_prufer,
            &mut grad.att_prufer,
            &mut d_dec,
            &mut d_prufer,
            &mut d_proj_prufer,
        );
        if let Some(att) = &step.att_context {
            let mut d_c_context = vec![0.0; hidden];
            params
                .combiner
                .t_mul_acc(hidden, &d_comb_pre, &mut d_c_context);
            attention::backward(
                &params.att_context,
                att,
                &step.gru.h,
                &states.context,
                &d_c_context,
                &mut grad.att_context,
                &mut d_dec,
                &mut d_context,
                &mut d_proj_context,
            );
        }

        let (dx, dh_prev) = gru::backward(&params.decoder, &step.gru, &d_dec, &mut grad.decoder);
        let row = grad.emb_target.row_mut(inputs[t] as usize);
        row.iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
        d_dec_next = dh_prev;
    }
    // The decoder starts from the last Prüfer state.
    let last = d_prufer.len() - 1;
    d_prufer[last]
        .iter_mut()
        .zip(&d_dec_next)
        .for_each(|(g, d)| *g += d);

    attention::finish_backward(
        &params.att_prufer,
        &states.prufer,
        &d_proj_prufer,
        &mut grad.att_prufer,
        &mut d_prufer,
    );
    attention::finish_backward(
        &params.att_context,
        &states.context,
        &d_proj_context,
        &mut grad.att_context,
        &mut d_context,
    );

    backprop_encoder(
        &params.enc_prufer,
        &prufer_caches,
        &example.prufer_ids,
        &d_prufer,
        &mut grad.enc_prufer,
        &mut grad.emb_prufer,
    );
    backprop_encoder(
        &params.enc_context,
        &context_caches,
        &example.context_ids,
        &d_context,
        &mut grad.enc_context,
        &mut grad.emb_context,
    );
    Ok(loss / steps_count)
}

fn backprop_encoder(
    weights: &GruWeights,
    caches: &[GruCache],
    ids: &[u32],
    d_states: &[Vec<f64>],
    grad: &mut GruWeights,
    grad_emb: &mut Matrix,
) {
    let Some(hidden) = d_states.first().map(Vec::len) else {
        return;
    };
    let mut carry = vec![0.0; hidden];
    for t in (0..caches.len()).rev() {
        let dh: Vec<f64> = d_states[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let (dx, dh_prev) = gru::backward(weights, &caches[t], &dh, grad);
        let row = grad_emb.row_mut(ids[t] as usize);
        row.iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
        carry = dh_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gru_step, ModelConfig};

    fn small_config() -> ModelConfig {
        let mut c = ModelConfig::desk(12, 10, 20);
        c.hidden_dim = 8;
        c.embed_dim = 6;
        c.init_scale = 0.3;
        c.seed = 11;
        c
    }

    fn example(prufer: &[u32], context: &[u32], comment: &[u32]) -> EncodedExample {
        EncodedExample {
            prufer_ids: prufer.to_vec(),
            context_ids: context.to_vec(),
            comment_ids: comment.to_vec(),
            prufer_len: prufer.len(),
            context_len: context.len(),
            comment_len: comment.len(),
            nodes: prufer.len() + 2,
        }
    }

    #[test]
    fn encode_sequence_traces_gru_steps() {
        let params = ModelParams::init(&small_config());
        let ids = [4, 7, 5];
        let states = encode_sequence(&ids, &params.emb_prufer, &params.enc_prufer).unwrap();
        let mut s = vec![0.0; 8];
        for (&id, got) in ids.iter().zip(&states) {
            s = gru_step(params.emb_prufer.row(id as usize), &s, &params.enc_prufer).unwrap();
            assert_eq!(got, &s);
        }
        let one = encode_sequence(&[9], &params.emb_prufer, &params.enc_prufer).unwrap();
        assert_eq!(
            one,
            vec![gru_step(params.emb_prufer.row(9), &[0.0; 8], &params.enc_prufer).unwrap()]
        );
        assert!(matches!(
            encode_sequence(&[], &params.emb_prufer, &params.enc_prufer),
            Err(ModelError::EmptyInput)
        ));
        assert!(matches!(
            encode_sequence(&[12], &params.emb_prufer, &params.enc_prufer),
            Err(ModelError::TokenOutOfRange { id: 12, size: 12 })
        ));
    }

    #[test]
    fn zero_weights_give_zero_states_and_uniform_logits() {
        let params = ModelParams::zeros(&small_config());
        let states = encode_inputs(&params, EncoderMode::Dual, &[4, 5, 6], &[4]).unwrap();
        assert!(states
            .prufer
            .iter()
            .chain(&states.context)
            .flatten()
            .all(|&v| v == 0.0));
        let (logits, next) = decode_step(&params, START_ID, &[0.0; 8], &states).unwrap();
        assert_eq!(logits.len(), 20);
        let probs = softmax(&logits);
        assert!(probs.iter().all(|p| (p - 1.0 / 20.0).abs() < 1e-15));
        assert_eq!(next, vec![0.0; 8]);
        assert!(decode_step(&params, START_ID, &[0.0; 7], &states).is_err());
    }

    #[test]
    fn uniform_model_loss_is_log_vocab() {
        let params = ModelParams::zeros(&small_config());
        let (loss, _) = loss_and_gradients(
            &params,
            EncoderMode::Dual,
            &example(&[4], &[], &[START_ID, EOS_ID]),
        )
        .unwrap();
        assert!((loss - 20f64.ln()).abs() < 1e-12);
        assert!(matches!(
            loss_and_gradients(&params, EncoderMode::Dual, &example(&[4], &[], &[START_ID])),
            Err(ModelError::TargetTooShort)
        ));
    }

    #[test]
    fn pad_rows_do_not_affect_loss() {
        let params = ModelParams::init(&small_config());
        let ex = example(&[4, 5, 6, 4], &[7, 8, 7], &[START_ID, 5, 9, EOS_ID]);
        let (base, grad) = loss_and_gradients(&params, EncoderMode::Dual, &ex).unwrap();
        let mut doubled = params.clone();
        for emb in [
            &mut doubled.emb_prufer,
            &mut doubled.emb_context,
            &mut doubled.emb_target,
        ] {
            emb.row_mut(0).iter_mut().for_each(|v| *v *= 2.0);
        }
        let (again, _) = loss_and_gradients(&doubled, EncoderMode::Dual, &ex).unwrap();
        assert_eq!(base, again);
        assert!(grad.emb_prufer.row(0).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn prufer_only_ignores_context_parameters() {
        let params = ModelParams::init(&small_config());
        let ex = example(&[4, 5], &[7, 8], &[START_ID, 5, EOS_ID]);
        let (_, grad) = loss_and_gradients(&params, EncoderMode::PruferOnly, &ex).unwrap();
        assert!(grad
            .emb_context
            .data
            .iter()
            .chain(&grad.att_context.v)
            .all(|&g| g == 0.0));
        assert!(grad
            .enc_context
            .tensors()
            .iter()
            .all(|t| t.iter().all(|&g| g == 0.0)));
    }

    fn mean_loss(params: &ModelParams, mode: EncoderMode, ex: &EncodedExample) -> f64 {
        token_accuracy(params, mode, ex).unwrap().0
    }

    fn check_group(mode: EncoderMode, prefixes: &[&str]) {
        let params = ModelParams::init(&small_config());
        let ex = example(
            &[4, 5, 6, 4, 9],
            &[7, 8, 7, 3],
            &[START_ID, 5, 9, 5, 11, EOS_ID],
        );
        let (_, grad) = loss_and_gradients(&params, mode, &ex).unwrap();
        let analytic = grad.flatten();
        let flat = params.flatten();
        let mut probe = params.clone();
        let eps = 1e-4;
        let mut checked = 0;
        for (name, range) in params.tensor_ranges() {
            if !prefixes.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            let stride = (range.len() / 15).max(1);
            for i in range.step_by(stride) {
                let mut f = flat.clone();
                f[i] = flat[i] + eps;
                probe.unflatten(&f).unwrap();
                let up = mean_loss(&probe, mode, &ex);
                f[i] = flat[i] - eps;
                probe.unflatten(&f).unwrap();
                let down = mean_loss(&probe, mode, &ex);
                let numeric = (up - down) / (2.0 * eps);
                let err =
                    (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
                assert!(
                    err < 1e-4,
                    "{name}[{i}]: analytic {} numeric {numeric}",
                    analytic[i]
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn gradients_prufer_encoder() {
        check_group(EncoderMode::Dual, &["emb_prufer", "enc_prufer"]);
    }

    #[test]
    fn gradients_context_encoder() {
        check_group(EncoderMode::Dual, &["emb_context", "enc_context"]);
    }

    #[test]
    fn gradients_attention_and_combiner() {
        check_group(EncoderMode::Dual, &["att_", "combiner"]);
    }

    #[test]
    fn gradients_decoder_and_output() {
        check_group(
            EncoderMode::Dual,
            &["emb_target", "decoder", "w_out", "b_out"],
        );
    }

    #[test]
    fn gradients_prufer_only_mode() {
        check_group(
            EncoderMode::PruferOnly,
            &[
                "emb_prufer",
                "enc_prufer",
                "att_prufer",
                "combiner",
                "decoder",
            ],
        );
    }

    #[test]
    fn greedy_decode_edge_cases() {
        let params = ModelParams::zeros(&small_config());
        assert!(greedy_decode(&params, EncoderMode::Dual, &[4], &[5], 0)
            .unwrap()
            .is_empty());
        // Uniform logits: argmax picks id 0 every step.
        assert_eq!(
            greedy_decode(&params, EncoderMode::Dual, &[4], &[5], 7).unwrap(),
            vec![0; 7]
        );
    }
}
