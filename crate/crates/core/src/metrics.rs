//! Multi-label evaluation: label-based F1 (macro/micro), the example-based
//! losses (Hamming, one-error, coverage, ranking loss, average precision),
//! and per-label ROC curves with trapezoidal AUC.
//!
//! Ranking convention everywhere: higher score ranks higher, ties are broken
//! by label index (earlier index ranks higher), ranks are 1-based.

use std::io::Write;

use crate::error::{Error, Result};

/// Scores, thresholded predictions and ground truth for `n` samples over `q` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch {
    n: usize,
    q: usize,
    scores: Vec<f64>,
    predictions: Vec<bool>,
    truths: Vec<bool>,
}

impl EvalBatch {
    /// All three matrices are row-major `n × q`. Every truth row needs at
    /// least one relevant label.
    pub fn new(n: usize, q: usize, scores: Vec<f64>, predictions: Vec<bool>, truths: Vec<bool>) -> Result<Self> {
        if q == 0 {
            return Err(Error::param("q", "need at least one label"));
        }
        let len = n * q;
        for (name, got) in [("scores", scores.len()), ("predictions", predictions.len()), ("truths", truths.len())] {
            if got != len {
                return Err(Error::shape(format!("{name} of {n}x{q}"), format!("{got} entries")));
            }
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("scores", "must be finite"));
        }
        if let Some(i) = (0..n).find(|&i| !truths[i * q..(i + 1) * q].iter().any(|&t| t)) {
            return Err(Error::param("truths", format!("sample {i} has no relevant label")));
        }
        Ok(EvalBatch { n, q, scores, predictions, truths })
    }

    /// Predictions derived as `score >= threshold`.
    pub fn from_scores(n: usize, q: usize, scores: Vec<f64>, truths: Vec<bool>, threshold: f64) -> Result<Self> {
        let predictions = scores.iter().map(|&s| s >= threshold).collect();
        Self::new(n, q, scores, predictions, truths)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn scores(&self, i: usize) -> &[f64] {
        &self.scores[i * self.q..(i + 1) * self.q]
    }

    pub fn predictions(&self, i: usize) -> &[bool] {
        &self.predictions[i * self.q..(i + 1) * self.q]
    }

    pub fn truths(&self, i: usize) -> &[bool] {
        &self.truths[i * self.q..(i + 1) * self.q]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `2tp / (2tp + fp + fn)`; zero when the denominator vanishes.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionPerLabel {
    pub labels: Vec<LabelCounts>,
}

pub fn confusion(batch: &EvalBatch) -> ConfusionPerLabel {
    let mut labels = vec![LabelCounts::default(); batch.q];
    for i in 0..batch.n {
        for (j, (&t, &p)) in batch.truths(i).iter().zip(batch.predictions(i)).enumerate() {
            let c = &mut labels[j];
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    ConfusionPerLabel { labels }
}

pub fn f1_macro(conf: &ConfusionPerLabel) -> f64 {
    if conf.labels.is_empty() {
        return 0.0;
    }
    conf.labels.iter().map(LabelCounts::f1).sum::<f64>() / conf.labels.len() as f64
}

pub fn f1_micro(conf: &ConfusionPerLabel) -> f64 {
    let sum = conf.labels.iter().fold(LabelCounts::default(), |a, c| LabelCounts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        tn: a.tn + c.tn,
        fn_: a.fn_ + c.fn_,
    });
    sum.f1()
}

fn mean(total: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn hamming_loss(batch: &EvalBatch) -> f64 {
    let wrong = batch.truths.iter().zip(&batch.predictions).filter(|(t, p)| t != p).count();
    mean(wrong as f64, batch.n * batch.q)
}

/// Label indices ordered from rank 1 downwards.
fn ranked_labels(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps the lower index first among equal scores
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// 1-based rank of every label.
pub fn label_ranks(scores: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; scores.len()];
    for (pos, &j) in ranked_labels(scores).iter().enumerate() {
        ranks[j] = pos + 1;
    }
    ranks
}

pub fn one_error(batch: &EvalBatch) -> f64 {
    let misses = (0..batch.n)
        .filter(|&i| {
            let top = ranked_labels(batch.scores(i))[0];
            !batch.truths(i)[top]
        })
        .count();
    mean(misses as f64, batch.n)
}

pub fn coverage(batch: &EvalBatch) -> f64 {
    let total: usize = (0..batch.n)
        .map(|i| {
            let order = ranked_labels(batch.scores(i));
            let truths = batch.truths(i);
            order.iter().rposition(|&j| truths[j]).expect("every sample has a relevant label")
        })
        .sum();
    mean(total as f64, batch.n)
}

/// Ranking loss and the number of samples skipped because every label was
/// relevant. A pair (relevant y′, irrelevant y″) is wrongly ordered when
/// `score(y′) <= score(y″)`.
pub fn ranking_loss_with_skips(batch: &EvalBatch) -> (f64, usize) {
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..batch.n {
        let s = batch.scores(i);
        let t = batch.truths(i);
        let mut irrelevant: Vec<f64> = s.iter().zip(t).filter(|(_, &r)| !r).map(|(&v, _)| v).collect();
        if irrelevant.is_empty() {
            continue;
        }
        irrelevant.sort_by(f64::total_cmp);
        let n_rel = t.iter().filter(|&&r| r).count();
        let bad: usize = s
            .iter()
            .zip(t)
            .filter(|(_, &r)| r)
            .map(|(&v, _)| {
                // irrelevant scores >= v
                let below = irrelevant.partition_point(|&x| x < v);
                irrelevant.len() - below
            })
            .sum();
        total += bad as f64 / (n_rel * irrelevant.len()) as f64;
        used += 1;
    }
    (mean(total, used), batch.n - used)
}

pub fn ranking_loss(batch: &EvalBatch) -> f64 {
    ranking_loss_with_skips(batch).0
}

pub fn average_precision(batch: &EvalBatch) -> f64 {
    let total: f64 = (0..batch.n)
        .map(|i| {
            let order = ranked_labels(batch.scores(i));
            let truths = batch.truths(i);
            let mut hits = 0usize;
            let mut acc = 0.0;
            for (pos, &j) in order.iter().enumerate() {
                if truths[j] {
                    hits += 1;
                    acc += hits as f64 / (pos + 1) as f64;
                }
            }
            acc / hits as f64
        })
        .sum();
    mean(total, batch.n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub label: usize,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// ROC curve over every distinct score of label `j`, and its trapezoidal area.
pub fn roc_auc(batch: &EvalBatch, label: usize) -> Result<(RocCurve, f64)> {
    if label >= batch.q {
        return Err(Error::param("label", format!("label {label} out of range for q = {}", batch.q)));
    }
    let mut pairs: Vec<(f64, bool)> = (0..batch.n).map(|i| (batch.scores(i)[label], batch.truths(i)[label])).collect();
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabel(label));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < pairs.len() {
        let thr = pairs[k].0;
        while k < pairs.len() && pairs[k].0 == thr {
            if pairs[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint { threshold: thr, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5).sum();
    Ok((RocCurve { label, points }, auc))
}

/// Every metric for one evaluation run. `roc[j]`/`auc[j]` are `None` when
/// label `j` has only positives or only negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub n_labels: usize,
    pub hamming_loss: f64,
    pub one_error: f64,
    pub coverage: f64,
    pub ranking_loss: f64,
    pub ranking_loss_skipped: usize,
    pub average_precision: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub confusion: ConfusionPerLabel,
    pub roc: Vec<Option<RocCurve>>,
    pub auc: Vec<Option<f64>>,
}

impl MetricsReport {
    pub fn compute(batch: &EvalBatch) -> Self {
        let conf = confusion(batch);
        let (rloss, skipped) = ranking_loss_with_skips(batch);
        let (roc, auc) = (0..batch.q)
            .map(|j| match roc_auc(batch, j) {
                Ok((c, a)) => (Some(c), Some(a)),
                Err(_) => (None, None),
            })
            .unzip();
        MetricsReport {
            n_samples: batch.n,
            n_labels: batch.q,
            hamming_loss: hamming_loss(batch),
            one_error: one_error(batch),
            coverage: coverage(batch),
            ranking_loss: rloss,
            ranking_loss_skipped: skipped,
            average_precision: average_precision(batch),
            f1_macro: f1_macro(&conf),
            f1_micro: f1_micro(&conf),
            confusion: conf,
            roc,
            auc,
        }
    }

    /// `(metric, value)` rows in the order they are written to CSV.
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("n_samples".to_string(), self.n_samples.to_string()),
            ("hamming_loss".to_string(), self.hamming_loss.to_string()),
            ("one_error".to_string(), self.one_error.to_string()),
            ("coverage".to_string(), self.coverage.to_string()),
            ("ranking_loss".to_string(), self.ranking_loss.to_string()),
            ("ranking_loss_skipped".to_string(), self.ranking_loss_skipped.to_string()),
            ("average_precision".to_string(), self.average_precision.to_string()),
            ("f1_macro".to_string(), self.f1_macro.to_string()),
            ("f1_micro".to_string(), self.f1_micro.to_string()),
        ];
        for (j, a) in self.auc.iter().enumerate() {
            let v = a.map_or_else(|| "undefined".to_string(), |v| v.to_string());
            rows.push((format!("auc_label_{j}"), v));
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,value")?;
        for (k, v) in self.rows() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}
