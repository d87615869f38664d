use serde::{Deserialize, Serialize};

use crate::error::{Result, WetError};

/// Counts with "positive" as the class of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts with the other class taken as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

pub fn confusion(preds: &[bool], truth: &[bool]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(WetError::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p, t) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    /// Names of quantities whose denominator was zero; those are reported as 0.
    pub degenerate: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

fn prf(tp: u64, fp: u64, fn_: u64, prefix: &str, flags: &mut Vec<String>) -> (f64, f64, f64) {
    let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
    let p = ratio(tp, tp + fp, &format!("{prefix}precision"), flags);
    let r = ratio(tp, tp + fn_, &format!("{prefix}recall"), flags);
    // the harmonic mean of equal values is that value; 2pr/(p+r) can round away from it
    let f = if p == r && p > 0.0 {
        p
    } else {
        ratio(2.0 * p * r, p + r, &format!("{prefix}f1"), flags)
    };
    (p, r, f)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(WetError::invalid("confusion matrix is empty"));
    }
    let mut degenerate = Vec::new();
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let (precision, recall, f1) = prf(cm.tp, cm.fp, cm.fn_, "", &mut degenerate);
    let mut class_flags = Vec::new();
    let (np, nr, nf) = prf(cm.tn, cm.fn_, cm.fp, "negative.", &mut class_flags);
    let per_class = vec![
        ClassMetrics {
            class: "positive".into(),
            precision,
            recall,
            f1,
            support: cm.tp + cm.fn_,
        },
        ClassMetrics {
            class: "negative".into(),
            precision: np,
            recall: nr,
            f1: nf,
            support: cm.tn + cm.fp,
        },
    ];
    degenerate.extend(class_flags);
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        per_class,
        confusion: *cm,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let truth = [true, false, true, false];
        assert_eq!(
            confusion(&truth, &truth).unwrap(),
            ConfusionMatrix::new(2, 0, 2, 0)
        );
        assert_eq!(confusion(&[true; 4], &truth).unwrap().fp, 2);
        // hand-counted ten-item case
        let p = [
            true, true, false, false, true, false, true, false, false, true,
        ];
        let t = [
            true, false, false, true, true, false, true, true, false, false,
        ];
        assert_eq!(confusion(&p, &t).unwrap(), ConfusionMatrix::new(3, 2, 3, 2));
        assert!(confusion(&p, &t[..9]).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix::new(50, 0, 50, 0)).unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        let m = metrics(&ConfusionMatrix::new(25, 25, 25, 25)).unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (0.5, 0.5, 0.5, 0.5)
        );
        let m = metrics(&ConfusionMatrix::new(3, 1, 4, 2)).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy), (0.75, 0.6, 0.7));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn degenerate_cases_flagged() {
        let m = metrics(&ConfusionMatrix::new(0, 0, 10, 5)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate.contains(&"precision".to_string()));
        assert!(m.degenerate.contains(&"f1".to_string()));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }
}
