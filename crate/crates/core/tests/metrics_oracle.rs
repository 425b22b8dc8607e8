mod common;

use common::*;
use ramix::metrics::*;
use rand::Rng;

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn every_metric_matches_its_oracle_on_random_batches() {
    let mut r = rng(0x5eed);
    for case in 0..500 {
        let rows = random_rows(&mut r);
        let b = rows.batch();
        let ctx = || format!("case {case}: scores {:?} truths {:?}", rows.scores, rows.truths);
        assert!(close(hamming_loss(&b), oracle_hamming(&rows)), "hamming {}", ctx());
        assert!(close(one_error(&b), oracle_one_error(&rows)), "one-error {}", ctx());
        assert!(close(coverage(&b), oracle_coverage(&rows)), "coverage {}", ctx());
        let (rl, skipped) = ranking_loss_with_skips(&b);
        let (orl, oskipped) = oracle_ranking_loss(&rows);
        assert!(close(rl, orl) && skipped == oskipped, "ranking loss {}", ctx());
        assert!(close(average_precision(&b), oracle_avg_precision(&rows)), "avg precision {}", ctx());
        let conf = confusion(&b);
        for j in 0..rows.q {
            let c = &conf.labels[j];
            assert_eq!((c.tp, c.fp, c.tn, c.fn_), oracle_counts(&rows, j), "confusion {}", ctx());
        }
        assert!(close(f1_macro(&conf), oracle_f1_macro(&rows)), "f1 macro {}", ctx());
        assert!(close(f1_micro(&conf), oracle_f1_micro(&rows)), "f1 micro {}", ctx());
        for j in 0..rows.q {
            match (roc_auc(&b, j), oracle_auc(&rows, j)) {
                (Ok((curve, auc)), Some(want)) => {
                    assert!(close(auc, want), "auc label {j} {}", ctx());
                    for p in &curve.points[1..] {
                        let (fpr, tpr) = oracle_roc_point(&rows, j, p.threshold);
                        assert!(close(p.fpr, fpr) && close(p.tpr, tpr), "roc point {}", ctx());
                    }
                    let distinct: std::collections::BTreeSet<u64> = rows.scores.iter().map(|s| s[j].to_bits()).collect();
                    assert_eq!(curve.points.len(), distinct.len() + 1);
                }
                (Err(ramix::Error::DegenerateLabel(l)), None) => assert_eq!(l, j),
                (got, want) => panic!("label {j}: library {got:?} vs oracle {want:?}"),
            }
        }
    }
}

#[test]
fn perfect_classifier_fixture() {
    let truths = [[true, false, true], [false, true, false], [true, true, true], [false, false, true]];
    let mut scores = vec![];
    for t in &truths {
        scores.extend(t.iter().map(|&b| if b { 0.9 } else { 0.1 }));
    }
    let flat: Vec<bool> = truths.iter().flatten().copied().collect();
    let b = EvalBatch::from_scores(4, 3, scores, flat, 0.5).unwrap();
    let m = MetricsReport::compute(&b);
    assert_eq!(m.hamming_loss, 0.0);
    assert_eq!(m.one_error, 0.0);
    assert_eq!(m.ranking_loss, 0.0);
    assert_eq!(m.average_precision, 1.0);
    assert_eq!(m.f1_macro, 1.0);
    assert_eq!(m.f1_micro, 1.0);
    let mean_size = truths.iter().map(|t| t.iter().filter(|&&b| b).count()).sum::<usize>() as f64 / 4.0;
    assert_eq!(m.coverage, mean_size - 1.0);
    assert_eq!(m.auc, vec![Some(1.0); 3]);
}

#[test]
fn metrics_lie_in_their_ranges() {
    let mut r = rng(17);
    for _ in 0..300 {
        let rows = random_rows(&mut r);
        let m = MetricsReport::compute(&rows.batch());
        assert!((0.0..=1.0).contains(&m.hamming_loss));
        assert!((0.0..=1.0).contains(&m.one_error));
        assert!((0.0..=1.0).contains(&m.ranking_loss));
        assert!((0.0..=(rows.q - 1) as f64).contains(&m.coverage));
        assert!(m.average_precision > 0.0 && m.average_precision <= 1.0);
        for c in &m.confusion.labels {
            assert_eq!(c.total(), rows.n);
        }
    }
}

#[test]
fn rank_metrics_ignore_monotone_score_maps() {
    let mut r = rng(23);
    for _ in 0..200 {
        let rows = random_rows(&mut r);
        let a = rows.batch();
        let scale: f64 = r.random_range(0.5..3.0);
        let mut warped = Rows { n: rows.n, q: rows.q, scores: vec![], preds: rows.preds.clone(), truths: rows.truths.clone() };
        // one strictly increasing map shared by all samples, so per-label ROC also keeps its order
        warped.scores = rows.scores.iter().map(|s| s.iter().map(|&v| (scale * v).exp() - 0.3).collect()).collect();
        let b = warped.batch();
        assert_eq!(one_error(&a), one_error(&b));
        assert_eq!(coverage(&a), coverage(&b));
        assert_eq!(ranking_loss(&a), ranking_loss(&b));
        assert_eq!(average_precision(&a), average_precision(&b));
        for j in 0..rows.q {
            assert_eq!(roc_auc(&a, j).ok().map(|x| x.1), roc_auc(&b, j).ok().map(|x| x.1));
        }
    }
}

#[test]
fn auc_examples() {
    let make = |scores: Vec<f64>, truths: Vec<bool>| {
        // second label always relevant so every row is admissible
        let n = scores.len();
        let scores: Vec<f64> = scores.iter().flat_map(|&s| [s, 0.5]).collect();
        let truths: Vec<bool> = truths.iter().flat_map(|&t| [t, true]).collect();
        EvalBatch::from_scores(n, 2, scores, truths, 0.5).unwrap()
    };
    // separating
    let b = make(vec![0.9, 0.8, 0.2, 0.1], vec![true, true, false, false]);
    assert_eq!(roc_auc(&b, 0).unwrap().1, 1.0);
    // all scores equal: one diagonal step
    let b = make(vec![0.4; 4], vec![true, false, true, false]);
    let (curve, auc) = roc_auc(&b, 0).unwrap();
    assert_eq!(auc, 0.5);
    assert_eq!(curve.points.len(), 2);
    // hand case: pos {0.8, 0.3}, neg {0.5, 0.3}: pairs 1 + 1 + 0 + 0.5 = 2.5 of 4
    let b = make(vec![0.8, 0.5, 0.3, 0.3], vec![true, false, true, false]);
    assert_eq!(roc_auc(&b, 0).unwrap().1, 0.625);
}

#[test]
fn degenerate_labels_are_reported() {
    let b = EvalBatch::from_scores(2, 2, vec![0.9, 0.1, 0.8, 0.7], vec![true, false, true, true], 0.5).unwrap();
    assert!(matches!(roc_auc(&b, 0), Err(ramix::Error::DegenerateLabel(0))));
    let m = MetricsReport::compute(&b);
    assert_eq!(m.auc[0], None);
    assert!(m.auc[1].is_some());
    let csv = {
        let mut v = vec![];
        m.write_csv(&mut v).unwrap();
        String::from_utf8(v).unwrap()
    };
    assert!(csv.starts_with("metric,value\n"));
    assert!(csv.contains("auc_label_0,undefined\n"));
}

#[test]
fn samples_without_relevant_labels_are_rejected() {
    assert!(EvalBatch::new(1, 2, vec![0.1, 0.2], vec![false, false], vec![false, false]).is_err());
}
