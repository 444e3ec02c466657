//! SQuAD-style EM/F1 for English-like, CJK and mixed-script answers, and the
//! one-way ANOVA used to rank experimental factors.

mod anova;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::RcDataset;
use crate::script::{is_cjk, is_punct};
use crate::{Error, Execution, Result};

pub use anova::{anova_oneway, AnovaResult, FStatistic};

/// Normalization family used before comparing answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LangClass {
    EnglishLike,
    Cjk,
    #[default]
    Mixed,
}

impl FromStr for LangClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" | "english" | "english-like" => Ok(LangClass::EnglishLike),
            "cjk" => Ok(LangClass::Cjk),
            "mixed" => Ok(LangClass::Mixed),
            other => Err(Error::Argument(format!("unknown language class `{other}`"))),
        }
    }
}

impl fmt::Display for LangClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LangClass::EnglishLike => "english-like",
            LangClass::Cjk => "cjk",
            LangClass::Mixed => "mixed",
        })
    }
}

/// Lowercases, strips punctuation, drops the articles `a`/`an`/`the`
/// (English-like and mixed), spaces out CJK characters (CJK and mixed) and
/// collapses whitespace.
pub fn normalize_answer(text: &str, class: LangClass) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|&c| !is_punct(c))
        .collect();
    let split_cjk = matches!(class, LangClass::Cjk | LangClass::Mixed);
    let drop_articles = matches!(class, LangClass::EnglishLike | LangClass::Mixed);
    let mut units: Vec<String> = Vec::new();
    for word in lowered.split_whitespace() {
        if drop_articles && matches!(word, "a" | "an" | "the") {
            continue;
        }
        if !split_cjk {
            units.push(word.to_owned());
            continue;
        }
        let mut run = String::new();
        for c in word.chars() {
            if is_cjk(c) {
                if !run.is_empty() {
                    units.push(std::mem::take(&mut run));
                }
                units.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        if !run.is_empty() {
            units.push(run);
        }
    }
    units.join(" ")
}

/// Bag-of-tokens F1 with multiplicity over normalized tokens.
pub fn token_f1(prediction: &str, gold: &str, class: LangClass) -> f64 {
    let pred = normalize_answer(prediction, class);
    let gold = normalize_answer(gold, class);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(prediction: &str, gold: &str, class: LangClass) -> bool {
    normalize_answer(prediction, class) == normalize_answer(gold, class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub em: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noise: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Percentages in [0, 100].
    pub em: f64,
    pub f1: f64,
    pub evaluated: usize,
    pub noise_count: usize,
    pub missing: Vec<String>,
    pub per_example: Vec<ExampleScore>,
}

/// Reads a predictions document: a JSON object mapping qa id to answer.
pub fn parse_predictions(bytes: &[u8]) -> Result<BTreeMap<String, String>> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// [`evaluate_with`] using the default execution strategy.
pub fn evaluate(
    predictions: &BTreeMap<String, String>,
    d: &RcDataset,
    class: LangClass,
) -> MetricReport {
    evaluate_with(predictions, d, class, Execution::default())
}

/// Scores every qa of `d`. EM and F1 are maxima over gold answers; missing
/// predictions score zero and are listed. Noise-flagged entries are scored
/// against their best-effort golds and stay in the denominator.
pub fn evaluate_with(
    predictions: &BTreeMap<String, String>,
    d: &RcDataset,
    class: LangClass,
    exec: Execution,
) -> MetricReport {
    let qas: Vec<_> = d.qas().collect();
    let per_example = exec.map(&qas, |qa| {
        let Some(pred) = predictions.get(&qa.id) else {
            return ExampleScore {
                id: qa.id.clone(),
                em: 0.0,
                f1: 0.0,
                noise: qa.noise_flag,
                missing: true,
            };
        };
        let em = qa.answers.iter().any(|a| exact_match(pred, &a.text, class));
        let f1 = qa
            .answers
            .iter()
            .map(|a| token_f1(pred, &a.text, class))
            .fold(0.0, f64::max);
        ExampleScore {
            id: qa.id.clone(),
            em: if em { 1.0 } else { 0.0 },
            f1,
            noise: qa.noise_flag,
            missing: false,
        }
    });
    let n = per_example.len();
    MetricReport {
        em: percent_mean(per_example.iter().map(|e| e.em)),
        f1: percent_mean(per_example.iter().map(|e| e.f1)),
        evaluated: n,
        noise_count: per_example.iter().filter(|e| e.noise).count(),
        missing: per_example
            .iter()
            .filter(|e| e.missing)
            .map(|e| e.id.clone())
            .collect(),
        per_example,
    }
}

// Summed in ascending order so the result is independent of example order.
fn percent_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut values: Vec<f64> = values.collect();
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    100.0 * values.iter().sum::<f64>() / values.len() as f64
}
