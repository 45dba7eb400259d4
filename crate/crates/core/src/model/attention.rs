//! Additive attention over one encoder's states and the two-encoder combiner.

use serde::{Deserialize, Serialize};

use super::linalg::{dot, softmax, Matrix};
use super::ModelError;

/// `score_i = vᵀ tanh(W_a [d; s_i])`. Columns `0..H` of `w_a` act on the decoder
/// state, columns `H..2H` on the encoder state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub w_a: Matrix,
    pub v: Vec<f64>,
}

impl AttentionWeights {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w_a: Matrix::zeros(hidden, 2 * hidden),
            v: vec![0.0; hidden],
        }
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 2] {
        [&self.w_a.data, &self.v]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.w_a.data, &mut self.v]
    }
}

/// `W_a[:, H..] · s_i` for every state; independent of the decoder step.
pub(crate) fn project_states(att: &AttentionWeights, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hidden = att.v.len();
    states
        .iter()
        .map(|s| {
            let mut p = vec![0.0; hidden];
            att.w_a.mul_acc(hidden, s, &mut p);
            p
        })
        .collect()
}

pub(crate) struct AttentionCache {
    pub activations: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

pub(crate) fn forward(
    att: &AttentionWeights,
    dec: &[f64],
    states: &[Vec<f64>],
    projected: &[Vec<f64>],
) -> AttentionCache {
    let hidden = att.v.len();
    let mut dec_part = vec![0.0; hidden];
    att.w_a.mul_acc(0, dec, &mut dec_part);
    let activations: Vec<Vec<f64>> = projected
        .iter()
        .map(|p| {
            p.iter()
                .zip(&dec_part)
                .map(|(a, b)| (a + b).tanh())
                .collect()
        })
        .collect();
    let scores: Vec<f64> = activations.iter().map(|a| dot(&att.v, a)).collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; hidden];
    for (w, s) in weights.iter().zip(states) {
        context.iter_mut().zip(s).for_each(|(c, x)| *c += w * x);
    }
    AttentionCache {
        activations,
        weights,
        context,
    }
}

/// Backward through one attention read given `d_context`.
///
/// Gradients w.r.t. the state-side projections are accumulated into
/// `d_projected` and folded into `W_a` and the states once per example by
/// [`finish_backward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    att: &AttentionWeights,
    cache: &AttentionCache,
    dec: &[f64],
    states: &[Vec<f64>],
    d_context: &[f64],
    grad: &mut AttentionWeights,
    d_dec: &mut [f64],
    d_states: &mut [Vec<f64>],
    d_projected: &mut [Vec<f64>],
) {
    let hidden = att.v.len();
    let d_weights: Vec<f64> = states.iter().map(|s| dot(d_context, s)).collect();
    for (ds, &w) in d_states.iter_mut().zip(&cache.weights) {
        ds.iter_mut().zip(d_context).for_each(|(a, b)| *a += w * b);
    }
    let mean: f64 = cache
        .weights
        .iter()
        .zip(&d_weights)
        .map(|(w, d)| w * d)
        .sum();
    let mut d_dec_part = vec![0.0; hidden];
    for (i, act) in cache.activations.iter().enumerate() {
        let d_score = cache.weights[i] * (d_weights[i] - mean);
        if d_score == 0.0 {
            continue;
        }
        grad.v
            .iter_mut()
            .zip(act)
            .for_each(|(g, a)| *g += d_score * a);
        for k in 0..hidden {
            let d_pre = d_score * att.v[k] * (1.0 - act[k] * act[k]);
            d_dec_part[k] += d_pre;
            d_projected[i][k] += d_pre;
        }
    }
    grad.w_a.outer_acc(0, &d_dec_part, dec);
    att.w_a.t_mul_acc(0, &d_dec_part, d_dec);
}

pub(crate) fn finish_backward(
    att: &AttentionWeights,
    states: &[Vec<f64>],
    d_projected: &[Vec<f64>],
    grad: &mut AttentionWeights,
    d_states: &mut [Vec<f64>],
) {
    let hidden = att.v.len();
    for ((s, dp), ds) in states.iter().zip(d_projected).zip(d_states.iter_mut()) {
        grad.w_a.outer_acc(hidden, dp, s);
        att.w_a.t_mul_acc(hidden, dp, ds);
    }
}

fn check_states(states: &[Vec<f64>], hidden: usize, which: &str) -> Result<(), ModelError> {
    if states.is_empty() {
        return Err(ModelError::EmptyEncoderStates(which.to_owned()));
    }
    if states.iter().any(|s| s.len() != hidden) {
        return Err(ModelError::DimensionMismatch(format!(
            "{which} states must have {hidden} entries"
        )));
    }
    Ok(())
}

/// Softmax attention weights of `dec_state` over `states`.
pub fn attention_weights(
    dec_state: &[f64],
    states: &[Vec<f64>],
    att: &AttentionWeights,
) -> Result<Vec<f64>, ModelError> {
    check_states(states, att.v.len(), "encoder")?;
    if dec_state.len() != att.v.len() {
        return Err(ModelError::DimensionMismatch("decoder state size".into()));
    }
    Ok(forward(att, dec_state, states, &project_states(att, states)).weights)
}

/// Attends over both encoders and combines: `c* = tanh(W_c [c_prufer; c_context])`.
pub fn attend_and_combine(
    dec_state: &[f64],
    prufer_states: &[Vec<f64>],
    context_states: &[Vec<f64>],
    att_prufer: &AttentionWeights,
    att_context: &AttentionWeights,
    combiner: &Matrix,
) -> Result<Vec<f64>, ModelError> {
    let hidden = att_prufer.v.len();
    check_states(prufer_states, hidden, "prufer")?;
    check_states(context_states, hidden, "context")?;
    if dec_state.len() != hidden || combiner.rows != hidden || combiner.cols != 2 * hidden {
        return Err(ModelError::DimensionMismatch(
            "decoder state or combiner shape".into(),
        ));
    }
    let cp = forward(
        att_prufer,
        dec_state,
        prufer_states,
        &project_states(att_prufer, prufer_states),
    );
    let cc = forward(
        att_context,
        dec_state,
        context_states,
        &project_states(att_context, context_states),
    );
    Ok(combine(combiner, &cp.context, &cc.context))
}

pub(crate) fn combine(combiner: &Matrix, c_prufer: &[f64], c_context: &[f64]) -> Vec<f64> {
    let hidden = c_prufer.len();
    let mut out = vec![0.0; combiner.rows];
    combiner.mul_acc(0, c_prufer, &mut out);
    combiner.mul_acc(hidden, c_context, &mut out);
    out.iter_mut().for_each(|v| *v = v.tanh());
    out
}
