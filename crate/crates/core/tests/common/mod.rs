//! Brute-force oracles shared by the integration tests.
//!
//! Everything here is written from the definitions by direct enumeration or
//! direct summation and does not call the library routine it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

use ramix::mdnn::{self, Layer, Model, ModelConfig, Tensor};
use ramix::metrics::EvalBatch;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ramix::seed::rng_from(seed)
}

// ---------------------------------------------------------------- metrics

/// Dense copy of an [`EvalBatch`] for the oracles.
pub struct Rows {
    pub n: usize,
    pub q: usize,
    pub scores: Vec<Vec<f64>>,
    pub preds: Vec<Vec<bool>>,
    pub truths: Vec<Vec<bool>>,
}

impl Rows {
    pub fn batch(&self) -> EvalBatch {
        EvalBatch::new(self.n, self.q, self.scores.concat(), self.preds.concat(), self.truths.concat()).unwrap()
    }
}

/// Random batch with `N <= 8`, `q <= 4`. Scores are drawn from a coarse grid
/// half of the time so ties are common.
pub fn random_rows(r: &mut ChaCha8Rng) -> Rows {
    let n = r.random_range(1..=8);
    let q = r.random_range(1..=4);
    let coarse = r.random_bool(0.5);
    let mut rows = Rows { n, q, scores: vec![], preds: vec![], truths: vec![] };
    for _ in 0..n {
        let s: Vec<f64> = (0..q).map(|_| if coarse { r.random_range(0..4) as f64 / 4.0 } else { r.random::<f64>() }).collect();
        let mut t: Vec<bool> = (0..q).map(|_| r.random_bool(0.5)).collect();
        if !t.contains(&true) {
            let j = r.random_range(0..q);
            t[j] = true;
        }
        let p: Vec<bool> = (0..q).map(|_| r.random_bool(0.5)).collect();
        rows.scores.push(s);
        rows.preds.push(p);
        rows.truths.push(t);
    }
    rows
}

/// 1-based rank: higher score first, ties by lower label index.
pub fn oracle_rank(s: &[f64], j: usize) -> usize {
    1 + (0..s.len()).filter(|&k| s[k] > s[j] || (s[k] == s[j] && k < j)).count()
}

pub fn oracle_hamming(r: &Rows) -> f64 {
    let mut wrong = 0;
    for i in 0..r.n {
        for j in 0..r.q {
            if r.preds[i][j] != r.truths[i][j] {
                wrong += 1;
            }
        }
    }
    wrong as f64 / (r.n * r.q) as f64
}

pub fn oracle_one_error(r: &Rows) -> f64 {
    let mut bad = 0;
    for i in 0..r.n {
        let top = (0..r.q).find(|&j| oracle_rank(&r.scores[i], j) == 1).unwrap();
        if !r.truths[i][top] {
            bad += 1;
        }
    }
    bad as f64 / r.n as f64
}

pub fn oracle_coverage(r: &Rows) -> f64 {
    let mut total = 0.0;
    for i in 0..r.n {
        let deepest = (0..r.q).filter(|&j| r.truths[i][j]).map(|j| oracle_rank(&r.scores[i], j)).max().unwrap();
        total += (deepest - 1) as f64;
    }
    total / r.n as f64
}

/// Mean over samples with at least one irrelevant label, and the skip count.
pub fn oracle_ranking_loss(r: &Rows) -> (f64, usize) {
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..r.n {
        let rel: Vec<usize> = (0..r.q).filter(|&j| r.truths[i][j]).collect();
        let irr: Vec<usize> = (0..r.q).filter(|&j| !r.truths[i][j]).collect();
        if irr.is_empty() {
            continue;
        }
        let mut bad = 0;
        for &a in &rel {
            for &b in &irr {
                if r.scores[i][a] <= r.scores[i][b] {
                    bad += 1;
                }
            }
        }
        total += bad as f64 / (rel.len() * irr.len()) as f64;
        used += 1;
    }
    (if used == 0 { 0.0 } else { total / used as f64 }, r.n - used)
}

pub fn oracle_avg_precision(r: &Rows) -> f64 {
    let mut total = 0.0;
    for i in 0..r.n {
        let s = &r.scores[i];
        let rel: Vec<usize> = (0..r.q).filter(|&j| r.truths[i][j]).collect();
        let mut acc = 0.0;
        for &y in &rel {
            let ry = oracle_rank(s, y);
            let above = rel.iter().filter(|&&k| oracle_rank(s, k) <= ry).count();
            acc += above as f64 / ry as f64;
        }
        total += acc / rel.len() as f64;
    }
    total / r.n as f64
}

/// `(tp, fp, tn, fn)` for label `j`.
pub fn oracle_counts(r: &Rows, j: usize) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for i in 0..r.n {
        match (r.truths[i][j], r.preds[i][j]) {
            (true, true) => c.0 += 1,
            (false, true) => c.1 += 1,
            (false, false) => c.2 += 1,
            (true, false) => c.3 += 1,
        }
    }
    c
}

fn f1_of(tp: usize, fp: usize, fn_: usize) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        0.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

pub fn oracle_f1_macro(r: &Rows) -> f64 {
    (0..r.q)
        .map(|j| {
            let (tp, fp, _, fn_) = oracle_counts(r, j);
            f1_of(tp, fp, fn_)
        })
        .sum::<f64>()
        / r.q as f64
}

pub fn oracle_f1_micro(r: &Rows) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for j in 0..r.q {
        let c = oracle_counts(r, j);
        tp += c.0;
        fp += c.1;
        fn_ += c.3;
    }
    f1_of(tp, fp, fn_)
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + ½·P(tie). `None` if degenerate.
pub fn oracle_auc(r: &Rows, j: usize) -> Option<f64> {
    let pos: Vec<f64> = (0..r.n).filter(|&i| r.truths[i][j]).map(|i| r.scores[i][j]).collect();
    let neg: Vec<f64> = (0..r.n).filter(|&i| !r.truths[i][j]).map(|i| r.scores[i][j]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// `(fpr, tpr)` at threshold `thr`, calling scores `>= thr` positive.
pub fn oracle_roc_point(r: &Rows, j: usize, thr: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut p, mut n) = (0, 0, 0, 0);
    for i in 0..r.n {
        let hit = r.scores[i][j] >= thr;
        if r.truths[i][j] {
            p += 1;
            tp += hit as usize;
        } else {
            n += 1;
            fp += hit as usize;
        }
    }
    (fp as f64 / n as f64, tp as f64 / p as f64)
}

// ---------------------------------------------------------------- signals

/// Naive O(N²) DFT.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| x.iter().enumerate().map(|(t, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64)).sum())
        .collect()
}

pub fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            x.iter().enumerate().map(|(k, &v)| v * Complex64::from_polar(1.0, 2.0 * PI * (k * t) as f64 / n as f64)).sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// Analytic signal from the naive DFT with the one-sided spectral mask.
pub fn naive_analytic(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut s = naive_dft(&x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
    for (k, v) in s.iter_mut().enumerate() {
        let g = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if 2 * k < n {
            2.0
        } else {
            0.0
        };
        *v *= g;
    }
    naive_idft(&s)
}

/// Direct-sum WVD value at row `k` (frequency `k/(2N)`), time `t`.
pub fn naive_wvd_at(z: &[Complex64], k: usize, t: usize) -> f64 {
    let n = z.len();
    let m = t.min(n - 1 - t).min(n / 2 - 1) as isize;
    let mut acc = Complex64::new(0.0, 0.0);
    for tau in -m..=m {
        let r = z[(t as isize + tau) as usize] * z[(t as isize - tau) as usize].conj();
        acc += r * Complex64::from_polar(1.0, -2.0 * PI * (k as f64) * tau as f64 / n as f64);
    }
    acc.re
}

/// Morlet mother wavelet.
pub fn morlet(x: f64, w0: f64) -> Complex64 {
    Complex64::from_polar(PI.powf(-0.25) * (-0.5 * x * x).exp(), w0 * x)
}

pub fn mexican_hat(x: f64) -> f64 {
    2.0 / (3f64.sqrt() * PI.powf(0.25)) * (1.0 - x * x) * (-0.5 * x * x).exp()
}

/// Direct-sum CWT magnitude at scale `a`, position `b` (zero outside the signal).
pub fn naive_cwt_at(f: &[f64], a: f64, b: usize, psi: impl Fn(f64) -> Complex64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, &v) in f.iter().enumerate() {
        acc += v * psi((t as f64 - b as f64) / a).conj();
    }
    a.powf(-0.5) * acc.norm()
}

// ---------------------------------------------------------------- network

/// Smallest legal network: 32×32 input, one 1-filter conv per module.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { input_hw: (32, 32), convs_per_module: vec![1; 5], filters_per_module: vec![1; 5], dense_units: vec![2], n_labels: 3 }
}

/// Tiny model with small positive biases so no ReLU starts dead.
pub fn tiny_model(seed: u64) -> Model {
    let mut m = mdnn::build_model(&tiny_config(), seed).unwrap();
    for layer in m.layers_mut() {
        match layer {
            Layer::Conv(c) => c.bias.value.fill(0.1),
            Layer::Dense(d) => d.bias.value.fill(0.1),
            _ => {}
        }
    }
    m
}

pub fn random_tensor(r: &mut ChaCha8Rng, dims: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let len = dims.iter().product();
    Tensor::new(dims, (0..len).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Relative error with a floor on the denominator so that two near-zero
/// gradients compare as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub const FD_EPS: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-3;

/// Compares every model parameter's backprop gradient with central finite
/// differences of `loss(probs)`. `grad_probs` gives `dloss/dprobs`.
/// Returns the largest relative error and the number of parameters checked.
pub fn model_grad_check(
    model: &mut Model,
    x: &Tensor,
    loss: &dyn Fn(&Tensor) -> f64,
    grad_probs: &dyn Fn(&Tensor) -> Tensor,
) -> (f64, usize) {
    let probs = model.forward(x).unwrap();
    model.zero_grad();
    model.backward(&grad_probs(&probs)).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &g) in grads.iter().enumerate() {
            let orig = model.params()[pi].value[k];
            model.params_mut()[pi].value[k] = orig + FD_EPS;
            let up = loss(&model.infer(x).unwrap());
            model.params_mut()[pi].value[k] = orig - FD_EPS;
            let down = loss(&model.infer(x).unwrap());
            model.params_mut()[pi].value[k] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(g, numeric));
            count += 1;
        }
    }
    (worst, count)
}

/// Input-gradient check for a single layer under the loss `Σ c·y`.
pub fn layer_input_grad_check(layer: &mut Layer, x: &Tensor, r: &mut ChaCha8Rng) -> f64 {
    let (y, aux) = layer.forward(x);
    let c = random_tensor(r, y.dims().to_vec(), -1.0, 1.0);
    let dx = layer.backward(x, &y, &aux, &c, true).unwrap();
    let loss = |t: &Tensor| -> f64 { layer.forward(t).0.data().iter().zip(c.data()).map(|(a, b)| a * b).sum() };
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let mut up = x.clone();
        up.data_mut()[k] += FD_EPS;
        let mut down = x.clone();
        down.data_mut()[k] -= FD_EPS;
        let numeric = (loss(&up) - loss(&down)) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(dx.data()[k], numeric));
    }
    worst
}

/// Parameter-gradient check for a single layer under the loss `Σ c·y`.
pub fn layer_param_grad_check(layer: &mut Layer, x: &Tensor, r: &mut ChaCha8Rng) -> f64 {
    let (y, aux) = layer.forward(x);
    let c = random_tensor(r, y.dims().to_vec(), -1.0, 1.0);
    layer.params_mut().into_iter().for_each(|p| p.zero_grad());
    layer.backward(x, &y, &aux, &c, false);
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &g) in grads.iter().enumerate() {
            let orig = layer.params()[pi].value[k];
            let mut eval = |v: f64| -> f64 {
                layer.params_mut()[pi].value[k] = v;
                layer.forward(x).0.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
            };
            let numeric = (eval(orig + FD_EPS) - eval(orig - FD_EPS)) / (2.0 * FD_EPS);
            layer.params_mut()[pi].value[k] = orig;
            worst = worst.max(rel_err(g, numeric));
        }
    }
    worst
}
