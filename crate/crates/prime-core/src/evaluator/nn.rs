//! Minimal dense layers and scaled dot-product attention with analytic
//! gradients, enough to train the trajectory evaluator from scratch.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer y = W x + b with out x in weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Linear {
    /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for weights and bias.
    pub fn new<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            w: (0..out_dim)
                .map(|_| (0..in_dim).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect(),
            b: (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            w: self.w.iter().map(|r| vec![0.0; r.len()]).collect(),
            b: vec![0.0; self.b.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates weight/bias gradients into `grad` and returns dL/dx.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for (i, g) in dy.iter().enumerate() {
            grad.b[i] += g;
            for (j, xv) in x.iter().enumerate() {
                grad.w[i][j] += g * xv;
                dx[j] += g * self.w[i][j];
            }
        }
        dx
    }
}

/// Numerically safe softmax (max subtraction).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Raw scaled dot-product attention softmax(Q K^T / sqrt(width)) V.
/// Returns the outputs and the attention matrix for the backward pass.
pub fn attention(
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    width: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert_eq!(k.len(), v.len());
    assert!(!k.is_empty());
    let scale = 1.0 / (width as f64).sqrt();
    let attn: Vec<Vec<f64>> = q
        .iter()
        .map(|qi| {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            softmax(&logits)
        })
        .collect();
    let out = attn
        .iter()
        .map(|row| {
            let mut o = vec![0.0; v[0].len()];
            for (a, vj) in row.iter().zip(v) {
                for (ov, x) in o.iter_mut().zip(vj) {
                    *ov += a * x;
                }
            }
            o
        })
        .collect();
    (out, attn)
}

/// Backward of `attention`: gradients w.r.t. Q, K, V given dL/dOut.
pub fn attention_backward(
    dout: &[Vec<f64>],
    attn: &[Vec<f64>],
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    width: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let scale = 1.0 / (width as f64).sqrt();
    let w = q[0].len();
    let mut dq = vec![vec![0.0; w]; q.len()];
    let mut dk = vec![vec![0.0; w]; k.len()];
    let mut dv = vec![vec![0.0; v[0].len()]; v.len()];
    for (i, doi) in dout.iter().enumerate() {
        // dV += a_ij dO_i; dA_ij = dO_i . V_j
        let da: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(j, vj)| {
                for (dvx, g) in dv[j].iter_mut().zip(doi) {
                    *dvx += attn[i][j] * g;
                }
                doi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        // softmax jacobian: dS = A ∘ (dA − sum_j dA_j A_j)
        let dot: f64 = da.iter().zip(&attn[i]).map(|(a, b)| a * b).sum();
        for (j, kj) in k.iter().enumerate() {
            let ds = attn[i][j] * (da[j] - dot) * scale;
            for x in 0..w {
                dq[i][x] += ds * kj[x];
                dk[j][x] += ds * q[i][x];
            }
        }
    }
    (dq, dk, dv)
}

/// Attention block with learned query/key/value projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnBlock {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl AttnBlock {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Self {
        AttnBlock {
            q: Linear::new(width, width, rng),
            k: Linear::new(width, width, rng),
            v: Linear::new(width, width, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttnBlock {
            q: self.q.zeros_like(),
            k: self.k.zeros_like(),
            v: self.v.zeros_like(),
        }
    }

    /// Residual attention: out = queries_in + softmax(QK^T/sqrt(W)) V.
    /// The skip connection keeps each query's own identity in its output,
    /// which the downstream scoring needs to tell near-uniformly attended
    /// items apart.
    pub fn forward(&self, queries_in: &[Vec<f64>], kv_in: &[Vec<f64>]) -> AttnPass {
        let q: Vec<Vec<f64>> = queries_in.iter().map(|x| self.q.forward(x)).collect();
        let k: Vec<Vec<f64>> = kv_in.iter().map(|x| self.k.forward(x)).collect();
        let v: Vec<Vec<f64>> = kv_in.iter().map(|x| self.v.forward(x)).collect();
        let width = self.q.b.len();
        let (mut out, attn) = attention(&q, &k, &v, width);
        for (o, x) in out.iter_mut().zip(queries_in) {
            for (ov, xv) in o.iter_mut().zip(x) {
                *ov += xv;
            }
        }
        AttnPass {
            q,
            k,
            v,
            attn,
            out,
        }
    }

    /// Backward through projections and attention; returns gradients
    /// w.r.t. the query inputs and the (shared) key/value inputs.
    pub fn backward(
        &self,
        pass: &AttnPass,
        queries_in: &[Vec<f64>],
        kv_in: &[Vec<f64>],
        dout: &[Vec<f64>],
        grad: &mut AttnBlock,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let width = self.q.b.len();
        let (dq, dk, dv) = attention_backward(dout, &pass.attn, &pass.q, &pass.k, &pass.v, width);
        // skip connection passes dout straight to the query inputs
        let dqin: Vec<Vec<f64>> = queries_in
            .iter()
            .zip(&dq)
            .zip(dout)
            .map(|((x, g), dres)| {
                let mut d = self.q.backward(x, g, &mut grad.q);
                for (a, r) in d.iter_mut().zip(dres) {
                    *a += r;
                }
                d
            })
            .collect();
        let mut dkvin: Vec<Vec<f64>> = kv_in
            .iter()
            .zip(&dk)
            .map(|(x, g)| self.k.backward(x, g, &mut grad.k))
            .collect();
        for ((x, g), acc) in kv_in.iter().zip(&dv).zip(dkvin.iter_mut()) {
            for (a, d) in acc.iter_mut().zip(self.v.backward(x, g, &mut grad.v)) {
                *a += d;
            }
        }
        (dqin, dkvin)
    }
}

/// Intermediates of one attention-block forward pass.
#[derive(Debug, Clone)]
pub struct AttnPass {
    pub q: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub attn: Vec<Vec<f64>>,
    pub out: Vec<Vec<f64>>,
}
