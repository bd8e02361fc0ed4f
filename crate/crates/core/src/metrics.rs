//! Classification quality indicators: accuracy, precision, specificity,
//! F1-score, recall.

use crate::error::{Error, Result};

/// One row of classification metrics, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub acc: f64,
    pub pre: f64,
    pub spe: f64,
    pub f1: f64,
    pub rec: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    // Degenerate denominators (e.g. no predicted positives) report 0.
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn one_vs_rest(predictions: &[usize], labels: &[usize], positive: usize) -> ClassMetrics {
    let (mut tp, mut fp, mut tn, mut fal_n) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fal_n += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let pre = ratio(tp, tp + fp);
    let rec = ratio(tp, tp + fal_n);
    ClassMetrics {
        acc: ratio(tp + tn, tp + tn + fp + fal_n),
        pre,
        spe: ratio(tn, tn + fp),
        f1: ratio(2.0 * pre * rec, pre + rec),
        rec,
    }
}

/// Binary metrics with class 1 as positive; for more than two classes,
/// precision/recall/specificity/F1 are macro-averaged one-vs-rest and
/// accuracy is the plain fraction of correct predictions.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<ClassMetrics> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "need equal non-empty prediction/label sequences, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    if classes < 2 {
        return Err(Error::Contract("need at least two classes".into()));
    }
    if classes == 2 {
        return Ok(one_vs_rest(predictions, labels, 1));
    }
    let mut acc_sum = ClassMetrics {
        acc: 0.0,
        pre: 0.0,
        spe: 0.0,
        f1: 0.0,
        rec: 0.0,
    };
    for class in 0..classes {
        let m = one_vs_rest(predictions, labels, class);
        acc_sum.pre += m.pre;
        acc_sum.spe += m.spe;
        acc_sum.f1 += m.f1;
        acc_sum.rec += m.rec;
    }
    let k = classes as f64;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count() as f64;
    Ok(ClassMetrics {
        acc: correct / predictions.len() as f64,
        pre: acc_sum.pre / k,
        spe: acc_sum.spe / k,
        f1: acc_sum.f1 / k,
        rec: acc_sum.rec / k,
    })
}
