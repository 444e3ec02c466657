//! Artificial code-switching by word-for-word dictionary substitution.
//!
//! A word is replaced if and only if its lowercased form is a key of the
//! bilingual dictionary. The substituted word is written exactly as listed
//! in the dictionary.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    tokenize, Answer, CharIndex, RcDataset, Snap, TokenSpan, TokenizerPolicy, TransformTag,
};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    pub source_lang: String,
    pub target_lang: String,
    entries: HashMap<String, Vec<String>>,
}

impl BilingualDictionary {
    pub fn new(source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        BilingualDictionary {
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, source: &str, target: &str) {
        let targets = self.entries.entry(source.to_lowercase()).or_default();
        if !targets.iter().any(|t| t == target) {
            targets.push(target.to_owned());
        }
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// Number of distinct source words.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads a MUSE-style dictionary: one `source target` pair per line,
/// separated by whitespace. Blank lines are skipped.
pub fn load_dictionary(
    bytes: &[u8],
    source_lang: &str,
    target_lang: &str,
) -> Result<BilingualDictionary> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut dict = BilingualDictionary::new(source_lang, target_lang);
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (None, _, _) => continue,
            (Some(src), Some(tgt), None) => dict.insert(src, tgt),
            _ => {
                return Err(Error::Line {
                    line: i + 1,
                    message: format!("expected `source target`, got {line:?}"),
                })
            }
        }
    }
    Ok(dict)
}

/// Which translation to use when a word has several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    #[default]
    First,
    /// Uniform choice from a generator seeded with the given value.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Context,
    Question,
    #[default]
    Both,
}

impl Scope {
    fn contexts(self) -> bool {
        matches!(self, Scope::Context | Scope::Both)
    }

    fn questions(self) -> bool {
        matches!(self, Scope::Question | Scope::Both)
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(Scope::Context),
            "question" => Ok(Scope::Question),
            "both" => Ok(Scope::Both),
            other => Err(Error::Argument(format!("unknown scope `{other}`"))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Context => "context",
            Scope::Question => "question",
            Scope::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeSwitchReport {
    pub total_word_tokens: usize,
    pub substituted_tokens: usize,
    pub ratio: f64,
}

impl CodeSwitchReport {
    fn from_counts(total: usize, substituted: usize) -> Self {
        CodeSwitchReport {
            total_word_tokens: total,
            substituted_tokens: substituted,
            ratio: if total == 0 {
                0.0
            } else {
                substituted as f64 / total as f64
            },
        }
    }

    pub fn merge(self, other: CodeSwitchReport) -> CodeSwitchReport {
        Self::from_counts(
            self.total_word_tokens + other.total_word_tokens,
            self.substituted_tokens + other.substituted_tokens,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    /// Same gaps as the input, substituted tokens in place.
    pub span: TokenSpan,
    /// One flag per input token.
    pub flags: Vec<bool>,
    pub word_tokens: usize,
}

impl Substitution {
    pub fn text(&self) -> &str {
        &self.span.source
    }

    pub fn substituted(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Replaces each word token found in `dict`; gaps and all other tokens are
/// preserved verbatim.
pub fn substitute_tokens(
    span: &TokenSpan,
    dict: &BilingualDictionary,
    choice: Choice,
) -> Substitution {
    let mut rng = match choice {
        Choice::First => None,
        Choice::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut flags = vec![false; span.len()];
    let mut word_tokens = 0;
    let new = span.rewrite(|i, token| {
        if !token.is_word() {
            return None;
        }
        word_tokens += 1;
        let targets = dict.lookup(&token.text)?;
        let pick = match rng.as_mut() {
            Some(rng) => rng.random_range(0..targets.len()),
            None => 0,
        };
        flags[i] = true;
        Some(targets[pick].clone())
    });
    Substitution {
        span: new,
        flags,
        word_tokens,
    }
}

// Per-field seed so that results do not depend on visiting order.
fn field_seed(seed: u64, ordinal: u64) -> u64 {
    let mut z = seed ^ ordinal.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn field_choice(choice: Choice, ordinal: u64) -> Choice {
    match choice {
        Choice::First => Choice::First,
        Choice::Seeded(seed) => Choice::Seeded(field_seed(seed, ordinal)),
    }
}

/// [`codeswitch_dataset_with`] using the default execution strategy.
pub fn codeswitch_dataset(
    d: &RcDataset,
    dict: &BilingualDictionary,
    scope: Scope,
    choice: Choice,
    policy: TokenizerPolicy,
) -> (RcDataset, CodeSwitchReport) {
    codeswitch_dataset_with(d, dict, scope, choice, policy, Execution::default())
}

/// Substitutes dictionary words in contexts, questions or both.
///
/// Gold answers are re-derived from the substituted context at the same
/// token positions, so they may contain target-language words.
pub fn codeswitch_dataset_with(
    d: &RcDataset,
    dict: &BilingualDictionary,
    scope: Scope,
    choice: Choice,
    policy: TokenizerPolicy,
    exec: Execution,
) -> (RcDataset, CodeSwitchReport) {
    let mut tag = TransformTag::new("codeswitch")
        .with("scope", scope)
        .with("source_lang", &dict.source_lang)
        .with("target_lang", &dict.target_lang);
    tag = match choice {
        Choice::First => tag.with("choice", "first"),
        Choice::Seeded(seed) => tag.with("choice", "seeded").with("seed", seed),
    };

    // Ordinals number every paragraph, then every question, in dataset order.
    let mut jobs = Vec::new();
    let mut ordinal = 0u64;
    for (ai, article) in d.articles.iter().enumerate() {
        for pi in 0..article.paragraphs.len() {
            jobs.push((ai, pi, ordinal));
            ordinal += 1 + article.paragraphs[pi].qas.len() as u64;
        }
    }

    let results = exec.map(&jobs, |&(ai, pi, ordinal)| {
        let mut paragraph = d.articles[ai].paragraphs[pi].clone();
        let mut report = CodeSwitchReport::default();
        if scope.contexts() {
            let old = tokenize(&paragraph.context, policy);
            let sub = substitute_tokens(&old, dict, field_choice(choice, ordinal));
            report = report.merge(CodeSwitchReport::from_counts(
                sub.word_tokens,
                sub.substituted(),
            ));
            let index = CharIndex::new(sub.text());
            for qa in &mut paragraph.qas {
                for answer in &mut qa.answers {
                    let end = answer.answer_start + answer.text.chars().count();
                    let s = old.map_boundary(&sub.span, answer.answer_start, Snap::Left);
                    let e = old.map_boundary(&sub.span, end, Snap::Right);
                    *answer = Answer {
                        text: index.slice(s, e).to_owned(),
                        answer_start: s,
                    };
                }
            }
            paragraph.context = sub.span.source;
        }
        for (qi, qa) in paragraph.qas.iter_mut().enumerate() {
            if scope.questions() {
                let old = tokenize(&qa.question, policy);
                let sub =
                    substitute_tokens(&old, dict, field_choice(choice, ordinal + 1 + qi as u64));
                report = report.merge(CodeSwitchReport::from_counts(
                    sub.word_tokens,
                    sub.substituted(),
                ));
                qa.question = sub.span.source;
            }
            qa.lineage.push(tag.clone());
        }
        (paragraph, report)
    });

    let mut out = d.clone();
    let mut total = CodeSwitchReport::default();
    for (&(ai, pi, _), (paragraph, report)) in jobs.iter().zip(results) {
        out.articles[ai].paragraphs[pi] = paragraph;
        total = total.merge(report);
    }
    (out, total)
}
