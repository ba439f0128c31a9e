//! Confusion-matrix evaluation: per-class and macro precision, recall, F1,
//! and overall accuracy.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{predict, Network};
use crate::signal::{RhythmClass, Window};

/// Per-class scores. `None` marks an undefined metric: precision with no
/// predictions of the class, recall with no true instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: RhythmClass,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: f64,
    /// False when any per-class metric is undefined.
    pub complete: bool,
}

/// Runs eval-mode prediction over the test set and reduces to metrics.
/// Prediction is read-only and parallel; the reduction is a plain
/// confusion-matrix sum.
pub fn evaluate<N: Network + Sync>(net: &N, data: &[Window]) -> Result<Metrics> {
    if data.is_empty() {
        return Err(crate::error::Error::Contract(
            "evaluation set is empty".to_string(),
        ));
    }
    let predictions: Vec<Result<usize>> = data
        .par_iter()
        .map(|w| predict(net, &w.samples).map(|(class, _)| class))
        .collect();
    let n = RhythmClass::COUNT;
    let mut confusion = vec![vec![0usize; n]; n];
    for (w, p) in data.iter().zip(predictions) {
        confusion[w.label.index()][p?] += 1;
    }
    Ok(metrics_from_confusion(confusion))
}

/// Metric arithmetic, exposed separately so the scores can be tested
/// without a model.
pub fn metrics_from_confusion(confusion: Vec<Vec<usize>>) -> Metrics {
    let n = confusion.len();
    let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n).map(|r| confusion[r][c]).sum();
        let tp = confusion[c][c];
        let precision = if predicted > 0 {
            Some(tp as f64 / predicted as f64)
        } else {
            None
        };
        let recall = if support > 0 {
            Some(tp as f64 / support as f64)
        } else {
            None
        };
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        per_class.push(ClassMetrics {
            class: RhythmClass::from_index(c).expect("class count matches"),
            precision,
            recall,
            f1,
            support,
        });
    }
    let macro_of = |f: fn(&ClassMetrics) -> Option<f64>| -> Option<f64> {
        let defined: Vec<f64> = per_class.iter().filter_map(f).collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    };
    let complete = per_class
        .iter()
        .all(|m| m.precision.is_some() && m.recall.is_some() && m.f1.is_some());
    Metrics {
        macro_precision: macro_of(|m| m.precision),
        macro_recall: macro_of(|m| m.recall),
        macro_f1: macro_of(|m| m.f1),
        accuracy: if total > 0 {
            correct as f64 / total as f64
        } else {
            0.0
        },
        confusion,
        per_class,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal(count: usize) -> Vec<Vec<usize>> {
        let n = RhythmClass::COUNT;
        let mut m = vec![vec![0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = count;
        }
        m
    }

    #[test]
    fn perfect_predictions() {
        let m = metrics_from_confusion(diagonal(5));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_precision, Some(1.0));
        assert_eq!(m.macro_recall, Some(1.0));
        assert_eq!(m.macro_f1, Some(1.0));
        assert!(m.complete);
    }

    #[test]
    fn all_normal_predictor_on_balanced_data() {
        let n = RhythmClass::COUNT;
        let mut confusion = vec![vec![0; n]; n];
        for row in confusion.iter_mut() {
            row[0] = 10; // everything predicted as class 0
        }
        let m = metrics_from_confusion(confusion);
        assert!((m.accuracy - 0.125).abs() < 1e-12);
        // precision undefined for never-predicted classes
        assert!(!m.complete);
        assert!(m.per_class[1].precision.is_none());
        assert_eq!(m.per_class[1].recall, Some(0.0));
        assert_eq!(m.per_class[0].recall, Some(1.0));
    }

    #[test]
    fn rows_sum_to_support() {
        let mut confusion = diagonal(3);
        confusion[2][4] = 7;
        let m = metrics_from_confusion(confusion);
        assert_eq!(m.per_class[2].support, 10);
        assert_eq!(m.per_class[4].support, 3);
        assert!(m.per_class[2].recall.unwrap() < 1.0);
    }
}
