use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ReprMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCosine {
    pub x_id: String,
    pub y_id: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub x_id: String,
    pub y_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub pairs: Vec<PairCosine>,
    /// Mean over `pairs`; 0 when every pair was skipped.
    pub mean: f64,
    pub skipped: Vec<SkippedPair>,
}

// Mean of the in-answer-span rows of `example_id`, or None without such rows.
fn pooled(m: &ReprMatrix, example_id: &str) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; m.d()];
    let mut count = 0usize;
    for (i, meta) in m.meta().iter().enumerate() {
        if meta.in_answer_span && meta.example_id == example_id {
            for (s, &v) in sum.iter_mut().zip(m.row(i)) {
                *s += f64::from(v);
            }
            count += 1;
        }
    }
    (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
}

/// Cosine similarity between the mean-pooled answer-span rows of each paired
/// example. Pairs missing answer rows on either side, or pooling to a zero
/// vector, are skipped and reported.
pub fn answer_span_cosine(
    x: &ReprMatrix,
    y: &ReprMatrix,
    pairing: &BTreeMap<String, String>,
) -> Result<CosineReport> {
    if x.d() != y.d() {
        return Err(Error::Argument(format!(
            "dimensions differ: {} vs {}",
            x.d(),
            y.d()
        )));
    }
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (x_id, y_id) in pairing {
        let skip = |reason: &str| SkippedPair {
            x_id: x_id.clone(),
            y_id: y_id.clone(),
            reason: reason.to_owned(),
        };
        let (Some(a), Some(b)) = (pooled(x, x_id), pooled(y, y_id)) else {
            skipped.push(skip("no answer-span rows"));
            continue;
        };
        let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            skipped.push(skip("zero pooled vector"));
            continue;
        }
        pairs.push(PairCosine {
            x_id: x_id.clone(),
            y_id: y_id.clone(),
            cosine: (dot / (na * nb)).clamp(-1.0, 1.0),
        });
    }
    let mean = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.cosine).sum::<f64>() / pairs.len() as f64
    };
    Ok(CosineReport {
        pairs,
        mean,
        skipped,
    })
}
