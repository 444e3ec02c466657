//! Fuzzy answer-span recovery in translated or rewritten contexts.
//!
//! A translated answer is located in its translated context by minimal
//! Levenshtein distance over all substrings. Matches whose distance exceeds
//! `min(cap, m - 1)` (for an answer of `m` code points) are dropped when
//! building training data and kept as noise when building test data.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Answer, Article, CharIndex, Paragraph, QaEntry, RcDataset, TransformTag};
use crate::{Error, Execution, Result};

/// Levenshtein distance over code points with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanMatch {
    /// Code-point offsets `[start, end)` into the searched context.
    pub start: usize,
    pub end: usize,
    pub distance: usize,
    pub matched_text: String,
}

/// [`best_span_search_with_hint`] with the hint at offset 0.
pub fn best_span_search(context: &str, answer: &str) -> Result<SpanMatch> {
    best_span_search_with_hint(context, answer, 0)
}

/// Finds the non-empty substring of `context` closest to `answer` in edit
/// distance.
///
/// Ties are broken by shorter span, then by start closest to `hint`, then by
/// leftmost start. Runs one O(|context|·|answer|) free-start alignment that
/// carries, for every cell, the largest span start reaching its optimal cost.
pub fn best_span_search_with_hint(context: &str, answer: &str, hint: usize) -> Result<SpanMatch> {
    let ctx: Vec<char> = context.chars().collect();
    let ans: Vec<char> = answer.chars().collect();
    if ctx.is_empty() {
        return Err(Error::NoMatch("empty context".into()));
    }
    if ans.is_empty() {
        return Err(Error::Argument("answer must be non-empty".into()));
    }
    let n = ctx.len();

    // Cells hold (cost, Reverse(start)) so that the tuple minimum prefers the
    // lower cost and then the later start, i.e. the shorter span.
    type Cell = (usize, Reverse<usize>);
    let mut prev: Vec<Cell> = (0..=n).map(|j| (0, Reverse(j))).collect();
    let mut cur: Vec<Cell> = vec![(0, Reverse(0)); n + 1];
    for (i, &a) in ans.iter().enumerate() {
        cur[0] = (i + 1, Reverse(0));
        for j in 1..=n {
            let (dc, ds) = prev[j - 1];
            let diag = (dc + usize::from(ctx[j - 1] != a), ds);
            let (uc, us) = prev[j];
            let up = (uc + 1, us);
            let (lc, ls) = cur[j - 1];
            let left = (lc + 1, ls);
            cur[j] = diag.min(up).min(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    // Best non-empty span per end position. An empty alignment costs exactly
    // m, in which case the one-character span ending there also costs m.
    let mut best: Option<(usize, usize, usize, usize, usize)> = None;
    for (end, &(cost, Reverse(mut start))) in prev.iter().enumerate().skip(1) {
        if start == end {
            start = end - 1;
        }
        let key = (cost, end - start, start.abs_diff(hint), start, end);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    let (distance, _, _, start, end) = best.expect("context is non-empty");
    let matched_text = CharIndex::new(context).slice(start, end).to_owned();
    Ok(SpanMatch {
        start,
        end,
        distance,
        matched_text,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMode {
    /// Over-threshold examples are removed.
    #[default]
    Train,
    /// Over-threshold examples are kept with `noise_flag` set.
    Test,
}

impl FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "train-drop" => Ok(RecoveryMode::Train),
            "test" | "test-keep" => Ok(RecoveryMode::Test),
            other => Err(Error::Argument(format!("unknown recovery mode `{other}`"))),
        }
    }
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecoveryMode::Train => "train",
            RecoveryMode::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryPolicy {
    pub cap: usize,
    pub mode: RecoveryMode,
}

impl Default for RecoveryPolicy {
    fn default() -> Self {
        RecoveryPolicy {
            cap: 10,
            mode: RecoveryMode::Train,
        }
    }
}

impl RecoveryPolicy {
    pub fn new(mode: RecoveryMode) -> Self {
        RecoveryPolicy {
            mode,
            ..Default::default()
        }
    }

    /// Largest accepted distance for an answer of `answer_len` code points:
    /// `min(cap, answer_len - 1)`.
    pub fn threshold(&self, answer_len: usize) -> usize {
        self.cap.min(answer_len.saturating_sub(1))
    }
}

/// Outcome of locating one answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Located {
    /// Within threshold.
    Accepted(SpanMatch),
    /// Over threshold (or nothing to search for); the best-effort span, if any.
    Rejected(Option<SpanMatch>),
}

/// Searches `answer` in `context` and applies the threshold rule. An empty
/// answer is always rejected without a span.
pub fn locate_answer(
    context: &str,
    answer: &str,
    policy: &RecoveryPolicy,
    hint: usize,
) -> Result<Located> {
    if answer.is_empty() {
        if context.is_empty() {
            return Err(Error::NoMatch("empty context".into()));
        }
        return Ok(Located::Rejected(None));
    }
    let span = best_span_search_with_hint(context, answer, hint)?;
    if span.distance <= policy.threshold(answer.chars().count()) {
        Ok(Located::Accepted(span))
    } else {
        Ok(Located::Rejected(Some(span)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recovery {
    Recovered {
        qa: QaEntry,
        span: SpanMatch,
    },
    Noise {
        qa: QaEntry,
        span: Option<SpanMatch>,
    },
    Dropped {
        id: String,
        span: Option<SpanMatch>,
    },
}

impl Recovery {
    pub fn qa(&self) -> Option<&QaEntry> {
        match self {
            Recovery::Recovered { qa, .. } | Recovery::Noise { qa, .. } => Some(qa),
            Recovery::Dropped { .. } => None,
        }
    }

    pub fn into_qa(self) -> Option<QaEntry> {
        match self {
            Recovery::Recovered { qa, .. } | Recovery::Noise { qa, .. } => Some(qa),
            Recovery::Dropped { .. } => None,
        }
    }
}

/// Applies located answers to `qa` under `policy`, appending `tag`.
///
/// Every accepted span becomes a gold answer. When none is accepted the
/// entry is dropped (train) or kept as noise with the best-effort spans
/// (test).
pub(crate) fn apply_located(
    qa: &QaEntry,
    located: Vec<Located>,
    policy: &RecoveryPolicy,
    tag: TransformTag,
) -> Recovery {
    let answer_of = |span: &SpanMatch| Answer {
        text: span.matched_text.clone(),
        answer_start: span.start,
    };
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for l in located {
        match l {
            Located::Accepted(span) => accepted.push(span),
            Located::Rejected(Some(span)) => rejected.push(span),
            Located::Rejected(None) => {}
        }
    }
    if let Some(first) = accepted.first().cloned() {
        let mut qa = qa.clone();
        qa.answers = accepted.iter().map(answer_of).collect();
        qa.noise_flag = false;
        let distance = accepted.iter().map(|s| s.distance).max().unwrap_or(0);
        qa.lineage
            .push(tag.with("distance", distance).with("status", "recovered"));
        return Recovery::Recovered { qa, span: first };
    }
    let span = rejected.first().cloned();
    match policy.mode {
        RecoveryMode::Train => Recovery::Dropped {
            id: qa.id.clone(),
            span,
        },
        RecoveryMode::Test => {
            let mut qa = qa.clone();
            qa.answers = rejected.iter().map(answer_of).collect();
            qa.noise_flag = true;
            let mut tag = tag.with("status", "noise");
            if let Some(s) = &span {
                tag = tag.with("distance", s.distance);
            }
            qa.lineage.push(tag);
            Recovery::Noise { qa, span }
        }
    }
}

/// Re-anchors `qa` in `new_context` using `translated_answer`.
///
/// Within threshold the answer becomes the matched span; otherwise the entry
/// is dropped (train mode) or flagged as noise with its best-effort span
/// (test mode).
pub fn recover_example(
    qa: &QaEntry,
    new_context: &str,
    translated_answer: &str,
    policy: &RecoveryPolicy,
    position_hint: usize,
) -> Result<Recovery> {
    let located = locate_answer(new_context, translated_answer, policy, position_hint)?;
    let tag = TransformTag::new("recover")
        .with("mode", policy.mode)
        .with("cap", policy.cap);
    Ok(apply_located(qa, vec![located], policy, tag))
}

/// Offset in a context of `new_len` code points at the same relative
/// position as `old_start` within `old_len`.
pub fn scaled_hint(old_start: usize, old_len: usize, new_len: usize) -> usize {
    if old_len == 0 {
        return 0;
    }
    ((old_start as f64 / old_len as f64) * new_len as f64).round() as usize
}

/// One translated example as produced by the translation adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationTriple {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    pub src_lang: String,
    pub tgt_lang: String,
}

/// Reads the tab-separated triples file (header row
/// `id context question answer src_lang tgt_lang`).
pub fn parse_triples(bytes: &[u8]) -> Result<Vec<TranslationTriple>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(bytes);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let triple: TranslationTriple = row.map_err(|e| Error::Line {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(triple);
    }
    Ok(out)
}

pub fn write_triples(triples: &[TranslationTriple]) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    for t in triples {
        writer.serialize(t)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub total: usize,
    pub recovered: usize,
    pub exact: usize,
    pub noise: usize,
    pub dropped: usize,
    /// qa entries of the source dataset without a triple.
    pub untranslated: usize,
}

impl RecoveryReport {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.recovered as f64 / self.total as f64
        }
    }

    pub(crate) fn count(&mut self, r: &Recovery) {
        self.total += 1;
        match r {
            Recovery::Recovered { span, .. } => {
                self.recovered += 1;
                if span.distance == 0 {
                    self.exact += 1;
                }
            }
            Recovery::Noise { .. } => self.noise += 1,
            Recovery::Dropped { .. } => self.dropped += 1,
        }
    }
}

/// Rebuilds `source` from translated triples.
///
/// Each qa takes the translated question and context of its triple; qas of
/// one source paragraph whose translated contexts are identical stay in one
/// paragraph. Output follows source order. A triple whose id is not in
/// `source` is an error; qas without a triple are omitted and counted.
pub fn recover_dataset(
    source: &RcDataset,
    triples: &[TranslationTriple],
    policy: &RecoveryPolicy,
    exec: Execution,
) -> Result<(RcDataset, RecoveryReport)> {
    let mut by_id: HashMap<&str, &TranslationTriple> = HashMap::with_capacity(triples.len());
    for t in triples {
        by_id.insert(t.id.as_str(), t);
    }
    let known: std::collections::HashSet<&str> = source.qas().map(|q| q.id.as_str()).collect();
    if let Some(t) = triples.iter().find(|t| !known.contains(t.id.as_str())) {
        return Err(Error::Argument(format!(
            "triple id `{}` is not in the source dataset",
            t.id
        )));
    }

    struct Job<'a> {
        article: usize,
        paragraph: usize,
        qa: &'a QaEntry,
        old_context: &'a str,
        triple: &'a TranslationTriple,
    }
    let mut jobs = Vec::new();
    let mut report = RecoveryReport::default();
    for (ai, article) in source.articles.iter().enumerate() {
        for (pi, paragraph) in article.paragraphs.iter().enumerate() {
            for qa in &paragraph.qas {
                match by_id.get(qa.id.as_str()) {
                    Some(triple) => jobs.push(Job {
                        article: ai,
                        paragraph: pi,
                        qa,
                        old_context: &paragraph.context,
                        triple,
                    }),
                    None => report.untranslated += 1,
                }
            }
        }
    }

    let results = exec.map(&jobs, |job| -> Result<Recovery> {
        let mut qa = job.qa.clone();
        qa.question = job.triple.question.clone();
        let hint = job
            .qa
            .answers
            .first()
            .map(|a| {
                scaled_hint(
                    a.answer_start,
                    job.old_context.chars().count(),
                    job.triple.context.chars().count(),
                )
            })
            .unwrap_or(0);
        let mut rec = recover_example(&qa, &job.triple.context, &job.triple.answer, policy, hint)?;
        if let Recovery::Recovered { qa, .. } | Recovery::Noise { qa, .. } = &mut rec {
            let tag = qa.lineage.last_mut().expect("recover tag");
            tag.params
                .insert("src_lang".into(), job.triple.src_lang.clone());
            tag.params
                .insert("tgt_lang".into(), job.triple.tgt_lang.clone());
        }
        Ok(rec)
    });

    let mut out = RcDataset::new(source.version.clone());
    let mut last: Option<(usize, usize)> = None;
    for (job, rec) in jobs.iter().zip(results) {
        let rec = rec?;
        report.count(&rec);
        let Some(qa) = rec.into_qa() else { continue };
        if last.map(|(a, _)| a) != Some(job.article) {
            out.articles.push(Article {
                title: source.articles[job.article].title.clone(),
                paragraphs: Vec::new(),
            });
        }
        let article = out.articles.last_mut().expect("article pushed");
        let same = last == Some((job.article, job.paragraph))
            && article.paragraphs.last().map(|p| p.context.as_str())
                == Some(job.triple.context.as_str());
        if !same {
            article.paragraphs.push(Paragraph {
                context: job.triple.context.clone(),
                qas: Vec::new(),
            });
        }
        article
            .paragraphs
            .last_mut()
            .expect("paragraph")
            .qas
            .push(qa);
        last = Some((job.article, job.paragraph));
    }
    Ok((out, report))
}
