//! Learned trajectory evaluator: dual-coordinate sequence encoding,
//! attention interaction blocks (path-to-track, agent-to-agent,
//! path-to-future, future-to-future), max-entropy scoring and
//! cross-entropy training with hand-derived gradients.

pub mod nn;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frenet::FrenetFrame;
use crate::scene::{Point, Track, Trajectory};
use nn::{softmax, AttnBlock, AttnPass, Linear};

pub const TRACK_FEATURES: usize = 5; // x, y, s, d, observed
pub const PATH_FEATURES: usize = 4; // x, y, s, d
pub const FUTURE_FEATURES: usize = 4; // x, y, s, d

/// All learned weights plus the model width and init seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub width: usize,
    pub seed: u64,
    pub embed_path: Linear,
    pub embed_track: Linear,
    pub embed_future: Linear,
    pub p2t: AttnBlock,
    pub a2a: AttnBlock,
    pub p2f: AttnBlock,
    pub f2f: AttnBlock,
    pub head1: Linear,
    pub head2: Linear,
    pub head3: Linear,
}

impl ModelParams {
    pub fn new(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            width,
            seed,
            embed_path: Linear::new(width, PATH_FEATURES, &mut rng),
            embed_track: Linear::new(width, TRACK_FEATURES, &mut rng),
            embed_future: Linear::new(width, FUTURE_FEATURES, &mut rng),
            p2t: AttnBlock::new(width, &mut rng),
            a2a: AttnBlock::new(width, &mut rng),
            p2f: AttnBlock::new(width, &mut rng),
            f2f: AttnBlock::new(width, &mut rng),
            head1: Linear::new(width, 3 * width, &mut rng),
            head2: Linear::new(width, width, &mut rng),
            head3: Linear::new(1, width, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            width: self.width,
            seed: self.seed,
            embed_path: self.embed_path.zeros_like(),
            embed_track: self.embed_track.zeros_like(),
            embed_future: self.embed_future.zeros_like(),
            p2t: self.p2t.zeros_like(),
            a2a: self.a2a.zeros_like(),
            p2f: self.p2f.zeros_like(),
            f2f: self.f2f.zeros_like(),
            head1: self.head1.zeros_like(),
            head2: self.head2.zeros_like(),
            head3: self.head3.zeros_like(),
        }
    }

    fn linears(&self) -> [&Linear; 15] {
        [
            &self.embed_path,
            &self.embed_track,
            &self.embed_future,
            &self.p2t.q,
            &self.p2t.k,
            &self.p2t.v,
            &self.a2a.q,
            &self.a2a.k,
            &self.a2a.v,
            &self.p2f.q,
            &self.p2f.k,
            &self.p2f.v,
            &self.f2f.q,
            &self.f2f.k,
            &self.f2f.v,
        ]
    }

    fn linears_mut(&mut self) -> [&mut Linear; 18] {
        let ModelParams {
            embed_path,
            embed_track,
            embed_future,
            p2t,
            a2a,
            p2f,
            f2f,
            head1,
            head2,
            head3,
            ..
        } = self;
        [
            embed_path,
            embed_track,
            embed_future,
            &mut p2t.q,
            &mut p2t.k,
            &mut p2t.v,
            &mut a2a.q,
            &mut a2a.k,
            &mut a2a.v,
            &mut p2f.q,
            &mut p2f.k,
            &mut p2f.v,
            &mut f2f.q,
            &mut f2f.k,
            &mut f2f.v,
            head1,
            head2,
            head3,
        ]
    }

    /// Flattens every parameter in a fixed deterministic order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut all: Vec<&Linear> = self.linears().to_vec();
        all.push(&self.head1);
        all.push(&self.head2);
        all.push(&self.head3);
        for lin in all {
            for row in &lin.w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&lin.b);
        }
        out
    }

    /// Inverse of `to_flat`.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for lin in self.linears_mut() {
            for row in &mut lin.w {
                for v in row {
                    *v = *it.next().expect("flat length");
                }
            }
            for v in &mut lin.b {
                *v = *it.next().expect("flat length");
            }
        }
        assert!(it.next().is_none(), "flat length mismatch");
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ModelParams =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("params: {e}")))?;
        for v in p.to_flat() {
            if !v.is_finite() {
                return Err(Error::invalid("params", "non-finite weight"));
            }
        }
        Ok(p)
    }
}

/// Raw feature sequences for one scene, grouped per reference path.
/// Track groups put the target agent first; future groups follow the
/// generator's trajectory order so the flattened scores line up with the
/// feasible set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalInputs {
    pub paths: Vec<Vec<Vec<f64>>>,
    pub tracks: Vec<Vec<Vec<Vec<f64>>>>,
    pub futures: Vec<Vec<Vec<Vec<f64>>>>,
}

impl EvalInputs {
    pub fn num_futures(&self) -> usize {
        self.futures.iter().map(|f| f.len()).sum()
    }
}

/// Coordinates are fed to the network in decameters: meter-scale scene
/// extents (~100 m) would otherwise saturate the attention softmax and the
/// tanh head at initialization and stall training.
pub const COORD_SCALE: f64 = 0.1;

/// Per-step (x, y, s, d, observed) features of a track in a path's frame,
/// with Cartesian and curvilinear coordinates both shifted so the target's
/// last observed position maps to the origin of each system.
pub fn track_representation(track: &Track, frame: &FrenetFrame, origin: Point) -> Vec<Vec<f64>> {
    let (s0, d0) = frame.project_point(origin);
    track
        .samples
        .iter()
        .map(|sample| {
            let (s, d) = frame.project_point(sample.position);
            vec![
                (sample.position.x - origin.x) * COORD_SCALE,
                (sample.position.y - origin.y) * COORD_SCALE,
                (s - s0) * COORD_SCALE,
                (d - d0) * COORD_SCALE,
                if sample.observed { 1.0 } else { 0.0 },
            ]
        })
        .collect()
}

/// Per-step (x, y, s, d) features of a generated trajectory; curvilinear
/// values come straight from the generator output, shifted like tracks.
pub fn future_representation(traj: &Trajectory, frame: &FrenetFrame, origin: Point) -> Vec<Vec<f64>> {
    let (s0, d0) = frame.project_point(origin);
    traj.steps
        .iter()
        .map(|st| {
            vec![
                (st.x - origin.x) * COORD_SCALE,
                (st.y - origin.y) * COORD_SCALE,
                (st.s - s0) * COORD_SCALE,
                (st.d - d0) * COORD_SCALE,
            ]
        })
        .collect()
}

/// Per-waypoint (x, y, s, d) features of a reference path itself (d is the
/// constant lateral offset of the origin, negated).
pub fn path_representation(frame: &FrenetFrame, origin: Point) -> Vec<Vec<f64>> {
    let (s0, d0) = frame.project_point(origin);
    frame
        .path
        .points
        .iter()
        .zip(&frame.path.cum_arclength)
        .map(|(p, &s)| {
            vec![
                (p.x - origin.x) * COORD_SCALE,
                (p.y - origin.y) * COORD_SCALE,
                (s - s0) * COORD_SCALE,
                -d0 * COORD_SCALE,
            ]
        })
        .collect()
}

/// Multiplicative sinusoidal position gains: step t scales channel pairs
/// by 1 + 0.5 sin(t w_i) and 1 + 0.5 cos(t w_i). Keeps a zero embedding
/// zero while making the pooled encoding order-sensitive.
fn position_gains(t: usize, width: usize) -> Vec<f64> {
    let mut g = vec![1.0; width];
    for c in 0..width {
        let pair = (c / 2) as f64;
        let omega = 1.0 / 10000f64.powf(2.0 * pair / width as f64);
        let phase = t as f64 * omega;
        g[c] = if c % 2 == 0 {
            1.0 + 0.5 * phase.sin()
        } else {
            1.0 + 0.5 * phase.cos()
        };
    }
    g
}

/// Per-step embedded sequence with position gains applied.
fn embed_steps(lin: &Linear, seq: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    seq.iter()
        .enumerate()
        .map(|(t, x)| {
            let g = position_gains(t, width);
            lin.forward(x)
                .into_iter()
                .zip(g)
                .map(|(v, gv)| v * gv)
                .collect()
        })
        .collect()
}

fn mean_pool(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v / n;
        }
    }
    out
}

/// Backward of embed_steps + mean_pool for one sequence.
fn pooled_embed_backward(
    lin: &Linear,
    seq: &[Vec<f64>],
    width: usize,
    dpooled: &[f64],
    grad: &mut Linear,
) {
    let n = seq.len() as f64;
    for (t, x) in seq.iter().enumerate() {
        let g = position_gains(t, width);
        let dstep: Vec<f64> = dpooled
            .iter()
            .zip(&g)
            .map(|(d, gv)| d / n * gv)
            .collect();
        lin.backward(x, &dstep, grad);
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardPass {
    path_enc: Vec<Vec<Vec<f64>>>,
    track_enc: Vec<Vec<Vec<f64>>>,
    fut_enc: Vec<Vec<Vec<f64>>>,
    p2t: Vec<AttnPass>,
    a2a: Vec<AttnPass>,
    p2f: Vec<AttnPass>,
    f2f: AttnPass,
    u: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    /// Raw head outputs f(U) per trajectory, flattened in generator order.
    pub logits: Vec<f64>,
}

/// Full forward pass producing the raw scores f(U_{i,j}).
pub fn forward(params: &ModelParams, inputs: &EvalInputs) -> ForwardPass {
    let w = params.width;
    let l = inputs.paths.len();
    assert!(l >= 1, "need at least one path");
    assert_eq!(inputs.tracks.len(), l);
    assert_eq!(inputs.futures.len(), l);
    let path_enc: Vec<Vec<Vec<f64>>> = inputs
        .paths
        .iter()
        .map(|p| embed_steps(&params.embed_path, p, w))
        .collect();
    let track_enc: Vec<Vec<Vec<f64>>> = inputs
        .tracks
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|seq| mean_pool(&embed_steps(&params.embed_track, seq, w)))
                .collect()
        })
        .collect();
    let fut_enc: Vec<Vec<Vec<f64>>> = inputs
        .futures
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|seq| mean_pool(&embed_steps(&params.embed_future, seq, w)))
                .collect()
        })
        .collect();
    let mut p2t = Vec::with_capacity(l);
    let mut a2a = Vec::with_capacity(l);
    let mut p2f = Vec::with_capacity(l);
    let mut fut_p2f_all: Vec<Vec<f64>> = Vec::new();
    for i in 0..l {
        let tp = params.p2t.forward(&track_enc[i], &path_enc[i]);
        let ap = params.a2a.forward(&tp.out, &tp.out);
        let fp = if fut_enc[i].is_empty() {
            AttnPass {
                q: vec![],
                k: vec![],
                v: vec![],
                attn: vec![],
                out: vec![],
            }
        } else {
            params.p2f.forward(&fut_enc[i], &path_enc[i])
        };
        fut_p2f_all.extend(fp.out.iter().cloned());
        p2t.push(tp);
        a2a.push(ap);
        p2f.push(fp);
    }
    let f2f = params.f2f.forward(&fut_p2f_all, &fut_p2f_all);
    let mut u = Vec::new();
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    let mut logits = Vec::new();
    let mut flat = 0usize;
    for i in 0..l {
        for _ in 0..fut_enc[i].len() {
            let mut uj = Vec::with_capacity(3 * w);
            uj.extend_from_slice(&p2t[i].out[0]);
            uj.extend_from_slice(&a2a[i].out[0]);
            uj.extend_from_slice(&f2f.out[flat]);
            let a1: Vec<f64> = params.head1.forward(&uj).iter().map(|v| v.tanh()).collect();
            let a2: Vec<f64> = params.head2.forward(&a1).iter().map(|v| v.tanh()).collect();
            let f = params.head3.forward(&a2)[0];
            u.push(uj);
            h1.push(a1);
            h2.push(a2);
            logits.push(f);
            flat += 1;
        }
    }
    ForwardPass {
        path_enc,
        track_enc,
        fut_enc,
        p2t,
        a2a,
        p2f,
        f2f,
        u,
        h1,
        h2,
        logits,
    }
}

/// Scores all trajectories: softmax over the head outputs.
pub fn score(params: &ModelParams, inputs: &EvalInputs) -> Vec<f64> {
    softmax(&forward(params, inputs).logits)
}

/// Backpropagates dL/dlogits through the whole model, accumulating
/// parameter gradients into `grad`.
pub fn backward(
    params: &ModelParams,
    inputs: &EvalInputs,
    pass: &ForwardPass,
    dlogits: &[f64],
    grad: &mut ModelParams,
) {
    let w = params.width;
    let l = inputs.paths.len();
    let total: usize = pass.fut_enc.iter().map(|g| g.len()).sum();
    assert_eq!(dlogits.len(), total);
    // head backward per trajectory, splitting dU into its three segments
    let mut dx_target = vec![vec![0.0; w]; l]; // dL/d p2t.out[0] (direct U part)
    let mut dy_target = vec![vec![0.0; w]; l]; // dL/d a2a.out[0]
    let mut dz = vec![vec![0.0; w]; total]; // dL/d f2f.out
    let mut flat = 0usize;
    for i in 0..l {
        for _ in 0..pass.fut_enc[i].len() {
            let df = dlogits[flat];
            let dh2 = params.head3.backward(&pass.h2[flat], &[df], &mut grad.head3);
            let dh2pre: Vec<f64> = dh2
                .iter()
                .zip(&pass.h2[flat])
                .map(|(d, a)| d * (1.0 - a * a))
                .collect();
            let dh1 = params.head2.backward(&pass.h1[flat], &dh2pre, &mut grad.head2);
            let dh1pre: Vec<f64> = dh1
                .iter()
                .zip(&pass.h1[flat])
                .map(|(d, a)| d * (1.0 - a * a))
                .collect();
            let du = params.head1.backward(&pass.u[flat], &dh1pre, &mut grad.head1);
            for c in 0..w {
                dx_target[i][c] += du[c];
                dy_target[i][c] += du[w + c];
                dz[flat][c] += du[2 * w + c];
            }
            flat += 1;
        }
    }
    // F2F backward over the flattened future encodings
    let fut_p2f_all: Vec<Vec<f64>> = pass.p2f.iter().flat_map(|p| p.out.iter().cloned()).collect();
    let (dq_f2f, dkv_f2f) = params
        .f2f
        .backward(&pass.f2f, &fut_p2f_all, &fut_p2f_all, &dz, &mut grad.f2f);
    let mut dfut_p2f: Vec<Vec<f64>> = dq_f2f;
    for (acc, extra) in dfut_p2f.iter_mut().zip(dkv_f2f) {
        for (a, e) in acc.iter_mut().zip(extra) {
            *a += e;
        }
    }
    let mut offset = 0usize;
    for i in 0..l {
        let n_i = pass.fut_enc[i].len();
        let mut dpath = vec![vec![0.0; w]; pass.path_enc[i].len()];
        // P2F backward
        if n_i > 0 {
            let dp2f_out = &dfut_p2f[offset..offset + n_i];
            let (dfut_enc, dkv) = params.p2f.backward(
                &pass.p2f[i],
                &pass.fut_enc[i],
                &pass.path_enc[i],
                dp2f_out,
                &mut grad.p2f,
            );
            for (acc, e) in dpath.iter_mut().zip(dkv) {
                for (a, v) in acc.iter_mut().zip(e) {
                    *a += v;
                }
            }
            for (seq, dh) in inputs.futures[i].iter().zip(&dfut_enc) {
                pooled_embed_backward(&params.embed_future, seq, w, dh, &mut grad.embed_future);
            }
        }
        offset += n_i;
        // A2A backward: only the target row carries loss gradient
        let mut da2a_out = vec![vec![0.0; w]; pass.a2a[i].out.len()];
        da2a_out[0] = dy_target[i].clone();
        let (dq_a2a, dkv_a2a) = params.a2a.backward(
            &pass.a2a[i],
            &pass.p2t[i].out,
            &pass.p2t[i].out,
            &da2a_out,
            &mut grad.a2a,
        );
        // total gradient on the P2T outputs
        let mut dp2t_out = dq_a2a;
        for (acc, e) in dp2t_out.iter_mut().zip(dkv_a2a) {
            for (a, v) in acc.iter_mut().zip(e) {
                *a += v;
            }
        }
        for (a, v) in dp2t_out[0].iter_mut().zip(&dx_target[i]) {
            *a += v;
        }
        // P2T backward
        let (dtrack_enc, dkv_p2t) = params.p2t.backward(
            &pass.p2t[i],
            &pass.track_enc[i],
            &pass.path_enc[i],
            &dp2t_out,
            &mut grad.p2t,
        );
        for (acc, e) in dpath.iter_mut().zip(dkv_p2t) {
            for (a, v) in acc.iter_mut().zip(e) {
                *a += v;
            }
        }
        for (seq, dh) in inputs.tracks[i].iter().zip(&dtrack_enc) {
            pooled_embed_backward(&params.embed_track, seq, w, dh, &mut grad.embed_track);
        }
        // path embedding backward (per-step sequence, no pooling)
        for (t, (x, dstep)) in inputs.paths[i].iter().zip(&dpath).enumerate() {
            let g = position_gains(t, w);
            let d: Vec<f64> = dstep.iter().zip(&g).map(|(v, gv)| v * gv).collect();
            params.embed_path.backward(x, &d, &mut grad.embed_path);
        }
    }
}

/// Soft labels from ground truth: psi = softmax(-Dist / tau) with Dist the
/// per-step sum of squared Euclidean errors.
pub fn make_labels(trajectories: &[Trajectory], ground_truth: &[Point], tau: f64) -> Result<Vec<f64>> {
    assert!(!trajectories.is_empty());
    let mut neg = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        if t.steps.len() != ground_truth.len() {
            return Err(Error::LengthMismatch {
                expected: ground_truth.len(),
                got: t.steps.len(),
            });
        }
        let dist: f64 = t
            .steps
            .iter()
            .zip(ground_truth)
            .map(|(s, g)| {
                let dx = s.x - g.x;
                let dy = s.y - g.y;
                dx * dx + dy * dy
            })
            .sum();
        neg.push(-dist / tau);
    }
    Ok(softmax(&neg))
}

/// Cross entropy -sum psi ln(gamma), gamma floored at 1e-12.
pub fn loss(gamma: &[f64], psi: &[f64]) -> f64 {
    assert_eq!(gamma.len(), psi.len());
    gamma
        .iter()
        .zip(psi)
        .map(|(g, p)| -p * g.max(1e-12).ln())
        .sum()
}

/// One training example: encoded scene plus its soft labels.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub inputs: EvalInputs,
    pub labels: Vec<f64>,
}

/// Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the mean
/// cross-entropy; returns the mean loss per epoch. Aborts with a
/// diagnostic if the loss stops being finite.
pub fn train(
    examples: &[TrainExample],
    params: &mut ModelParams,
    epochs: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    assert!(!examples.is_empty());
    let mut history = Vec::with_capacity(epochs);
    let mut last_finite = f64::NAN;
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; params.to_flat().len()];
    let mut v = vec![0.0; m.len()];
    for epoch in 0..epochs {
        let mut grad = params.zeros_like();
        let mut total_loss = 0.0;
        for ex in examples {
            let pass = forward(params, &ex.inputs);
            if !pass.logits.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged { epoch, last_finite });
            }
            let gamma = softmax(&pass.logits);
            total_loss += loss(&gamma, &ex.labels);
            // dL/df for softmax + cross entropy
            let dlogits: Vec<f64> = gamma.iter().zip(&ex.labels).map(|(g, p)| g - p).collect();
            backward(params, &ex.inputs, &pass, &dlogits, &mut grad);
        }
        let mean_loss = total_loss / examples.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch, last_finite });
        }
        last_finite = mean_loss;
        history.push(mean_loss);
        let flat_p = params.to_flat();
        let flat_g = grad.to_flat();
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let n = examples.len() as f64;
        let updated: Vec<f64> = flat_p
            .iter()
            .zip(flat_g.iter().map(|g| g / n))
            .enumerate()
            .map(|(i, (p, g))| {
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps)
            })
            .collect();
        params.assign_flat(&updated);
    }
    Ok(history)
}
