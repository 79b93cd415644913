use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parsed classifier output. `Invalid` marks an unparseable completion and
/// always counts as wrong.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Label(String),
    Invalid,
}

impl Prediction {
    pub fn as_label(&self) -> Option<&str> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Invalid => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
}

/// Accuracy and one-vs-rest macro-F1 over `label_set`.
///
/// A class absent from both gold and predictions scores F1 = 0 and still
/// counts in the macro mean.
pub fn classification_metrics(
    preds: &BTreeMap<String, Prediction>,
    gold: &BTreeMap<String, String>,
    label_set: &[String],
) -> Result<ClassificationMetrics> {
    if label_set.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let only_pred = preds.keys().filter(|k| !gold.contains_key(*k)).count();
    let only_gold = gold.keys().filter(|k| !preds.contains_key(*k)).count();
    if only_pred + only_gold > 0 {
        return Err(Error::KeyMismatch {
            only_pred,
            only_gold,
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels: BTreeSet<&str> = label_set.iter().map(String::as_str).collect();
    let index: BTreeMap<&str, usize> = label_set
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    // tp, fp, fn per class
    let mut counts = vec![(0u64, 0u64, 0u64); label_set.len()];
    let mut correct = 0u64;
    for (item, g) in gold {
        if !labels.contains(g.as_str()) {
            return Err(Error::UnknownLabel(g.clone()));
        }
        let gi = index[g.as_str()];
        match &preds[item] {
            Prediction::Label(p) => {
                let pi = *index
                    .get(p.as_str())
                    .ok_or_else(|| Error::UnknownLabel(p.clone()))?;
                if pi == gi {
                    correct += 1;
                    counts[gi].0 += 1;
                } else {
                    counts[pi].1 += 1;
                    counts[gi].2 += 1;
                }
            }
            Prediction::Invalid => counts[gi].2 += 1,
        }
    }

    let per_class_f1: BTreeMap<String, f64> = label_set
        .iter()
        .zip(&counts)
        .map(|(l, &(tp, fp, fn_))| {
            let denom = 2 * tp + fp + fn_;
            let f1 = if denom == 0 {
                0.0
            } else {
                (2 * tp) as f64 / denom as f64
            };
            (l.clone(), f1)
        })
        .collect();
    // mean in label_set order, independent of map ordering
    let macro_f1 = label_set.iter().map(|l| per_class_f1[l]).sum::<f64>() / label_set.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1,
        per_class_f1,
    })
}
