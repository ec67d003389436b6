use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::Label;

/// 3×3 counts, rows indexed by gold label and columns by predicted label,
/// both in `Accept, Deny, Question` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn record(&mut self, gold: Label, predicted: Label) {
        self.0[gold.index()][predicted.index()] += 1;
    }

    pub fn get(&self, gold: Label, predicted: Label) -> u64 {
        self.0[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, class: Label) -> u64 {
        self.0[class.index()].iter().sum()
    }

    pub fn predicted_count(&self, class: Label) -> u64 {
        self.0.iter().map(|row| row[class.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// `num / den`, with a zero denominator giving 0.
pub fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// One-vs-rest precision, recall and F1 for each class.
pub fn per_class_metrics(m: &ConfusionMatrix) -> [ClassMetrics; 3] {
    Label::ALL.map(|class| {
        let tp = m.get(class, class);
        let precision = ratio(tp, m.predicted_count(class));
        let recall = ratio(tp, m.support(class));
        ClassMetrics { class, precision, recall, f1: f1_score(precision, recall), support: m.support(class) }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptySupport;

impl fmt::Display for EmptySupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("class supports sum to zero")
    }
}

/// Support-weighted average of the per-class metrics.
pub fn weighted_metrics(classes: &[ClassMetrics]) -> Result<WeightedMetrics, EmptySupport> {
    let total: u64 = classes.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(EmptySupport);
    }
    let avg = |pick: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| c.support as f64 * pick(c)).sum::<f64>() / total as f64
    };
    Ok(WeightedMetrics { precision: avg(|c| c.precision), recall: avg(|c| c.recall), f1: avg(|c| c.f1) })
}
