//! Gated recurrent unit: forward step, cached state and exact backward pass.

use serde::{Deserialize, Serialize};

use super::linalg::{sigmoid, Matrix};
use super::ModelError;

/// Weights of one GRU. Every gate matrix acts on `[x; s_prev]` (or `[x; r ⊙ s_prev]`
/// for the candidate), so it has `embed + hidden` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub w_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_h: Matrix,
    pub b_h: Vec<f64>,
}

impl GruWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_r: Matrix::zeros(hidden, input + hidden),
            b_r: vec![0.0; hidden],
            w_z: Matrix::zeros(hidden, input + hidden),
            b_z: vec![0.0; hidden],
            w_h: Matrix::zeros(hidden, input + hidden),
            b_h: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_r.len()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols - self.hidden()
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.w_r.data,
            &self.b_r,
            &self.w_z.data,
            &self.b_z,
            &self.w_h.data,
            &self.b_h,
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w_r.data,
            &mut self.b_r,
            &mut self.w_z.data,
            &mut self.b_z,
            &mut self.w_h.data,
            &mut self.b_h,
        ]
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn forward(w: &GruWeights, x: &[f64], h_prev: &[f64]) -> GruCache {
    let input = x.len();
    let mut r = w.b_r.clone();
    w.w_r.mul_acc(0, x, &mut r);
    w.w_r.mul_acc(input, h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut z = w.b_z.clone();
    w.w_z.mul_acc(0, x, &mut z);
    w.w_z.mul_acc(input, h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let reset: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut candidate = w.b_h.clone();
    w.w_h.mul_acc(0, x, &mut candidate);
    w.w_h.mul_acc(input, &reset, &mut candidate);
    candidate.iter_mut().for_each(|v| *v = v.tanh());

    let h = (0..h_prev.len())
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
        .collect();
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        candidate,
        h,
    }
}

/// Accumulates parameter gradients into `grad` and returns `(dx, dh_prev)`.
pub(crate) fn backward(
    w: &GruWeights,
    cache: &GruCache,
    dh: &[f64],
    grad: &mut GruWeights,
) -> (Vec<f64>, Vec<f64>) {
    let input = cache.x.len();
    let hidden = dh.len();
    let mut dx = vec![0.0; input];
    let mut dh_prev: Vec<f64> = (0..hidden).map(|i| dh[i] * (1.0 - cache.z[i])).collect();

    let d_cand_pre: Vec<f64> = (0..hidden)
        .map(|i| dh[i] * cache.z[i] * (1.0 - cache.candidate[i] * cache.candidate[i]))
        .collect();
    let d_z_pre: Vec<f64> = (0..hidden)
        .map(|i| dh[i] * (cache.candidate[i] - cache.h_prev[i]) * cache.z[i] * (1.0 - cache.z[i]))
        .collect();

    let reset: Vec<f64> = cache
        .r
        .iter()
        .zip(&cache.h_prev)
        .map(|(a, b)| a * b)
        .collect();
    grad.w_h.outer_acc(0, &d_cand_pre, &cache.x);
    grad.w_h.outer_acc(input, &d_cand_pre, &reset);
    add(&mut grad.b_h, &d_cand_pre);
    w.w_h.t_mul_acc(0, &d_cand_pre, &mut dx);
    let mut d_reset = vec![0.0; hidden];
    w.w_h.t_mul_acc(input, &d_cand_pre, &mut d_reset);
    let d_r_pre: Vec<f64> = (0..hidden)
        .map(|i| {
            dh_prev[i] += d_reset[i] * cache.r[i];
            d_reset[i] * cache.h_prev[i] * cache.r[i] * (1.0 - cache.r[i])
        })
        .collect();

    for (wm, gm, gb, d) in [
        (&w.w_z, &mut grad.w_z, &mut grad.b_z, &d_z_pre),
        (&w.w_r, &mut grad.w_r, &mut grad.b_r, &d_r_pre),
    ] {
        gm.outer_acc(0, d, &cache.x);
        gm.outer_acc(input, d, &cache.h_prev);
        add(gb, d);
        wm.t_mul_acc(0, d, &mut dx);
        wm.t_mul_acc(input, d, &mut dh_prev);
    }
    (dx, dh_prev)
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// One GRU step `s = (1 − z) ⊙ s_prev + z ⊙ tanh(W_h [x; r ⊙ s_prev] + b_h)`.
pub fn gru_step(x: &[f64], s_prev: &[f64], weights: &GruWeights) -> Result<Vec<f64>, ModelError> {
    if s_prev.len() != weights.hidden() || x.len() != weights.input() {
        return Err(ModelError::DimensionMismatch(format!(
            "gru expects input {} and state {}, got {} and {}",
            weights.input(),
            weights.hidden(),
            x.len(),
            s_prev.len()
        )));
    }
    Ok(forward(weights, x, s_prev).h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(input: usize, hidden: usize, seed: u64) -> GruWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = GruWeights::zeros(input, hidden);
        for t in w.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        w
    }

    // Straight transcription of the gate equations, one output unit at a time.
    fn oracle(x: &[f64], s: &[f64], w: &GruWeights) -> Vec<f64> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let cat: Vec<f64> = x.iter().chain(s).copied().collect();
        let row = |m: &Matrix, i: usize, v: &[f64]| -> f64 {
            (0..m.cols).map(|j| m.data[i * m.cols + j] * v[j]).sum()
        };
        let h = s.len();
        let r: Vec<f64> = (0..h)
            .map(|i| sig(row(&w.w_r, i, &cat) + w.b_r[i]))
            .collect();
        let z: Vec<f64> = (0..h)
            .map(|i| sig(row(&w.w_z, i, &cat) + w.b_z[i]))
            .collect();
        let gated: Vec<f64> = x
            .iter()
            .copied()
            .chain((0..h).map(|i| r[i] * s[i]))
            .collect();
        (0..h)
            .map(|i| {
                let cand = (row(&w.w_h, i, &gated) + w.b_h[i]).tanh();
                (1.0 - z[i]) * s[i] + z[i] * cand
            })
            .collect()
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let w = GruWeights::zeros(2, 3);
        let s = gru_step(&[0.3, -1.0], &[1.0, -2.0, 4.0], &w).unwrap();
        assert_eq!(s, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_is_a_fixed_point_without_bias() {
        let mut w = random_weights(2, 3, 1);
        w.b_r.fill(0.0);
        w.b_z.fill(0.0);
        w.b_h.fill(0.0);
        assert_eq!(gru_step(&[0.0, 0.0], &[0.0; 3], &w).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn matches_formula_oracle() {
        let w = random_weights(4, 5, 7);
        let x = [0.1, -0.7, 0.4, 0.9];
        let s = [0.2, -0.3, 0.05, 0.6, -0.9];
        let got = gru_step(&x, &s, &w).unwrap();
        for (a, b) in got.iter().zip(oracle(&x, &s, &w)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let w = GruWeights::zeros(2, 3);
        assert!(matches!(
            gru_step(&[0.0], &[0.0; 3], &w),
            Err(ModelError::DimensionMismatch(_))
        ));
        assert!(gru_step(&[0.0; 2], &[0.0; 2], &w).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let w = random_weights(3, 4, 3);
        let x = [0.3, -0.2, 0.8];
        let s = [0.1, 0.5, -0.4, 0.2];
        let dh = [0.7, -1.1, 0.3, 0.9];
        let objective = |w: &GruWeights, x: &[f64], s: &[f64]| -> f64 {
            forward(w, x, s).h.iter().zip(&dh).map(|(a, b)| a * b).sum()
        };
        let mut grad = GruWeights::zeros(3, 4);
        let (dx, ds) = backward(&w, &forward(&w, &x, &s), &dh, &mut grad);
        let eps = 1e-6;
        for i in 0..3 {
            let (mut p, mut m) = (x, x);
            p[i] += eps;
            m[i] -= eps;
            assert!(
                ((objective(&w, &p, &s) - objective(&w, &m, &s)) / (2.0 * eps) - dx[i]).abs()
                    < 1e-8
            );
        }
        for i in 0..4 {
            let (mut p, mut m) = (s, s);
            p[i] += eps;
            m[i] -= eps;
            assert!(
                ((objective(&w, &x, &p) - objective(&w, &x, &m)) / (2.0 * eps) - ds[i]).abs()
                    < 1e-8
            );
        }
        for t in 0..6 {
            for k in 0..w.tensors()[t].len() {
                let (mut p, mut m) = (w.clone(), w.clone());
                p.tensors_mut()[t][k] += eps;
                m.tensors_mut()[t][k] -= eps;
                let num = (objective(&p, &x, &s) - objective(&m, &x, &s)) / (2.0 * eps);
                assert!(
                    (num - grad.tensors()[t][k]).abs() < 1e-8,
                    "tensor {t} entry {k}"
                );
            }
        }
    }
}
