//! Word-order manipulation: dependency trees are re-linearized into a target
//! subject/verb/object order and datasets are rebuilt from the result.
//!
//! The procedure is greedy and top-down. At every head with a subject or
//! object dependent, the subject block, the verb block (head plus remaining
//! dependents) and the object block are emitted in the target order. Every
//! subtree moves as one contiguous block.

mod conllu;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CharIndex, RcDataset, TransformTag};
use crate::recovery::{apply_located, locate_answer, RecoveryPolicy, RecoveryReport};
use crate::{Error, Execution, Result};

pub use conllu::{parse_conllu, write_conllu, DepSentence, DepToken};

pub const SUBJECT_RELATIONS: &[&str] = &["nsubj", "nsubj:pass", "csubj", "csubj:pass"];
pub const OBJECT_RELATIONS: &[&str] = &["obj", "dobj", "iobj"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Subject,
    Verb,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPattern {
    Svo,
    Sov,
    Vos,
    Vso,
    Osv,
    Ovs,
}

impl OrderPattern {
    pub const ALL: [OrderPattern; 6] = [
        OrderPattern::Svo,
        OrderPattern::Sov,
        OrderPattern::Vos,
        OrderPattern::Vso,
        OrderPattern::Osv,
        OrderPattern::Ovs,
    ];

    pub fn slots(self) -> [Slot; 3] {
        use Slot::*;
        match self {
            OrderPattern::Svo => [Subject, Verb, Object],
            OrderPattern::Sov => [Subject, Object, Verb],
            OrderPattern::Vos => [Verb, Object, Subject],
            OrderPattern::Vso => [Verb, Subject, Object],
            OrderPattern::Osv => [Object, Subject, Verb],
            OrderPattern::Ovs => [Object, Verb, Subject],
        }
    }
}

impl FromStr for OrderPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OrderPattern::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown order pattern `{s}`")))
    }
}

impl fmt::Display for OrderPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .slots()
            .iter()
            .map(|slot| match slot {
                Slot::Subject => 'S',
                Slot::Verb => 'V',
                Slot::Object => 'O',
            })
            .collect();
        f.write_str(&s)
    }
}

fn is_subject(deprel: &str) -> bool {
    SUBJECT_RELATIONS.contains(&deprel)
}

fn is_object(deprel: &str) -> bool {
    OBJECT_RELATIONS.contains(&deprel)
}

struct Linearizer<'a> {
    sentence: &'a DepSentence,
    children: Vec<Vec<usize>>,
    contiguous: Vec<bool>,
    pattern: OrderPattern,
}

impl Linearizer<'_> {
    fn deprel(&self, i: usize) -> &str {
        &self.sentence.tokens[i - 1].deprel
    }

    fn descendants(&self, h: usize, out: &mut Vec<usize>) {
        out.push(h);
        for &c in &self.children[h] {
            self.descendants(c, out);
        }
    }

    // Marks subtrees whose tokens form a contiguous index range; returns
    // (min, max, count) of the subtree of `h`.
    fn mark(&mut self, h: usize) -> (usize, usize, usize) {
        let (mut lo, mut hi, mut count) = (h, h, 1);
        for c in self.children[h].clone() {
            let (l, r, k) = self.mark(c);
            lo = lo.min(l);
            hi = hi.max(r);
            count += k;
        }
        self.contiguous[h] = hi - lo + 1 == count;
        (lo, hi, count)
    }

    fn visit(&self, h: usize, out: &mut Vec<usize>) {
        if !self.contiguous[h] {
            let mut all = Vec::new();
            self.descendants(h, &mut all);
            all.sort_unstable();
            out.extend(all);
            return;
        }
        let kids = &self.children[h];
        let subjects: Vec<usize> = kids
            .iter()
            .copied()
            .filter(|&k| is_subject(self.deprel(k)))
            .collect();
        let objects: Vec<usize> = kids
            .iter()
            .copied()
            .filter(|&k| is_object(self.deprel(k)))
            .collect();
        let mut verb: Vec<usize> = kids
            .iter()
            .copied()
            .filter(|&k| !is_subject(self.deprel(k)) && !is_object(self.deprel(k)))
            .chain(std::iter::once(h))
            .collect();
        verb.sort_unstable();

        if subjects.is_empty() && objects.is_empty() {
            self.emit(h, &verb, out);
            return;
        }
        for slot in self.pattern.slots() {
            match slot {
                Slot::Subject => subjects.iter().for_each(|&k| self.visit(k, out)),
                Slot::Verb => self.emit(h, &verb, out),
                Slot::Object => objects.iter().for_each(|&k| self.visit(k, out)),
            }
        }
    }

    fn emit(&self, h: usize, items: &[usize], out: &mut Vec<usize>) {
        for &i in items {
            if i == h {
                out.push(h);
            } else {
                self.visit(i, out);
            }
        }
    }
}

/// Token indices (1-based) of `s` in the order dictated by `pattern`.
///
/// Subjects are dependents labelled with one of [`SUBJECT_RELATIONS`],
/// objects one of [`OBJECT_RELATIONS`]; several of either keep their
/// relative order. A sentence-final `punct` token attached to the root stays
/// last. A non-projective subtree is emitted as its tokens in original order.
pub fn relinearize_sentence(s: &DepSentence, pattern: OrderPattern) -> Vec<usize> {
    let n = s.len();
    let root = s.root();
    let mut children = s.children();
    let last = &s.tokens[n - 1];
    let final_punct =
        (n >= 2 && last.deprel == "punct" && last.head == root && children[n].is_empty())
            .then_some(n);
    if let Some(p) = final_punct {
        children[root].retain(|&c| c != p);
    }
    let mut lin = Linearizer {
        sentence: s,
        children,
        contiguous: vec![true; n + 1],
        pattern,
    };
    lin.mark(root);
    let mut out = Vec::with_capacity(n);
    lin.visit(root, &mut out);
    out.extend(final_punct);
    out
}

/// Forms of `s` in re-linearized order.
pub fn relinearize_forms(s: &DepSentence, pattern: OrderPattern) -> Vec<String> {
    relinearize_sentence(s, pattern)
        .into_iter()
        .map(|i| s.tokens[i - 1].form.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderReport {
    pub sentences: usize,
    pub reordered_sentences: usize,
    #[serde(flatten)]
    pub answers: RecoveryReport,
}

// A parse sentence matched against a field of the dataset.
struct Aligned {
    sentence: usize,
    // Code-point span of each token in the field.
    spans: Vec<(usize, usize)>,
}

fn align(
    text: &str,
    parses: &[DepSentence],
    cursor: &mut usize,
    location: &str,
) -> Result<Vec<Aligned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut out = Vec::new();
    let skip_ws = |pos: &mut usize| {
        while *pos < chars.len() && chars[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    loop {
        skip_ws(&mut pos);
        if pos == chars.len() {
            return Ok(out);
        }
        let Some(sentence) = parses.get(*cursor) else {
            return Err(Error::Alignment {
                location: location.to_owned(),
                message: format!("parses exhausted with text left at offset {pos}"),
            });
        };
        let mut spans = Vec::with_capacity(sentence.len());
        for token in &sentence.tokens {
            skip_ws(&mut pos);
            let form: Vec<char> = token.form.chars().collect();
            if chars.len() < pos + form.len() || chars[pos..pos + form.len()] != form[..] {
                return Err(Error::Alignment {
                    location: location.to_owned(),
                    message: format!(
                        "parse sentence {} token {} `{}` does not match text at offset {pos}",
                        *cursor, token.index, token.form
                    ),
                });
            }
            spans.push((pos, pos + form.len()));
            pos += form.len();
        }
        out.push(Aligned {
            sentence: *cursor,
            spans,
        });
        *cursor += 1;
    }
}

struct Rebuilt {
    text: String,
    // New code-point start of every token, per aligned sentence.
    starts: Vec<Vec<usize>>,
    reordered: usize,
}

fn rebuild(aligned: &[Aligned], parses: &[DepSentence], pattern: OrderPattern) -> Rebuilt {
    let mut text = String::new();
    let mut pos = 0;
    let mut starts = Vec::with_capacity(aligned.len());
    let mut reordered = 0;
    for a in aligned {
        let sentence = &parses[a.sentence];
        let order = relinearize_sentence(sentence, pattern);
        if order.iter().enumerate().any(|(i, &t)| t != i + 1) {
            reordered += 1;
        }
        let mut start = vec![0; sentence.len()];
        for &t in &order {
            if pos > 0 {
                text.push(' ');
                pos += 1;
            }
            let form = &sentence.tokens[t - 1].form;
            start[t - 1] = pos;
            text.push_str(form);
            pos += form.chars().count();
        }
        starts.push(start);
    }
    Rebuilt {
        text,
        starts,
        reordered,
    }
}

/// [`reorder_dataset_with`] using the default execution strategy.
pub fn reorder_dataset(
    d: &RcDataset,
    parses: &[DepSentence],
    pattern: OrderPattern,
    policy: &RecoveryPolicy,
) -> Result<(RcDataset, ReorderReport)> {
    reorder_dataset_with(d, parses, pattern, policy, Execution::default())
}

/// Rebuilds contexts and questions from re-linearized parses.
///
/// `parses` must list, for every paragraph in order, the sentences of the
/// context followed by the sentences of each question. Token forms must
/// appear verbatim in the text, separated only by optional whitespace.
/// Rebuilt text joins tokens with single spaces. Each answer is mapped onto
/// the tokens it covers and searched for in the new context; the recovery
/// policy decides what happens when it no longer forms a contiguous match.
pub fn reorder_dataset_with(
    d: &RcDataset,
    parses: &[DepSentence],
    pattern: OrderPattern,
    policy: &RecoveryPolicy,
    exec: Execution,
) -> Result<(RcDataset, ReorderReport)> {
    struct Job {
        article: usize,
        paragraph: usize,
        context: Vec<Aligned>,
        questions: Vec<Vec<Aligned>>,
    }
    let mut cursor = 0;
    let mut jobs = Vec::new();
    for (ai, article) in d.articles.iter().enumerate() {
        for (pi, paragraph) in article.paragraphs.iter().enumerate() {
            let location = format!("context of article {ai} paragraph {pi}");
            let context = align(&paragraph.context, parses, &mut cursor, &location)?;
            let mut questions = Vec::with_capacity(paragraph.qas.len());
            for qa in &paragraph.qas {
                let location = format!("question of qa `{}`", qa.id);
                questions.push(align(&qa.question, parses, &mut cursor, &location)?);
            }
            jobs.push(Job {
                article: ai,
                paragraph: pi,
                context,
                questions,
            });
        }
    }
    if cursor != parses.len() {
        return Err(Error::Alignment {
            location: "end of dataset".into(),
            message: format!("{} unused parse sentences", parses.len() - cursor),
        });
    }

    let tag = TransformTag::new("reorder")
        .with("pattern", pattern)
        .with("mode", policy.mode)
        .with("cap", policy.cap);

    let results = exec.map(&jobs, |job| -> Result<_> {
        let source = &d.articles[job.article].paragraphs[job.paragraph];
        let old_chars = CharIndex::new(&source.context);
        let rebuilt = rebuild(&job.context, parses, pattern);
        let mut report = ReorderReport {
            sentences: job.context.len(),
            reordered_sentences: rebuilt.reordered,
            ..Default::default()
        };
        let mut qas = Vec::with_capacity(source.qas.len());
        for (qa, question) in source.qas.iter().zip(&job.questions) {
            let q = rebuild(question, parses, pattern);
            report.sentences += question.len();
            report.reordered_sentences += q.reordered;
            let mut qa = qa.clone();
            qa.question = q.text;

            let mut located = Vec::with_capacity(qa.answers.len());
            for answer in &qa.answers {
                let s = answer.answer_start;
                let e = s + answer.text.chars().count();
                let mut pieces = Vec::new();
                let mut hint = None;
                for (a, starts) in job.context.iter().zip(&rebuilt.starts) {
                    for (k, &(ts, te)) in a.spans.iter().enumerate() {
                        if ts < e && te > s {
                            let (cs, ce) = (ts.max(s), te.min(e));
                            pieces.push(old_chars.slice(cs, ce));
                            hint.get_or_insert(starts[k] + (cs - ts));
                        }
                    }
                }
                let query = if pieces.is_empty() {
                    answer.text.clone()
                } else {
                    pieces.join(" ")
                };
                located.push(locate_answer(
                    &rebuilt.text,
                    &query,
                    policy,
                    hint.unwrap_or(0),
                )?);
            }
            let outcome = apply_located(&qa, located, policy, tag.clone());
            report.answers.count(&outcome);
            qas.extend(outcome.into_qa());
        }
        Ok((rebuilt.text, qas, report))
    });

    let mut out = d.clone();
    let mut total = ReorderReport::default();
    for (job, result) in jobs.iter().zip(results) {
        let (context, qas, report) = result?;
        let paragraph = &mut out.articles[job.article].paragraphs[job.paragraph];
        paragraph.context = context;
        paragraph.qas = qas;
        total.sentences += report.sentences;
        total.reordered_sentences += report.reordered_sentences;
        let a = &mut total.answers;
        a.total += report.answers.total;
        a.recovered += report.answers.recovered;
        a.exact += report.answers.exact;
        a.noise += report.answers.noise;
        a.dropped += report.answers.dropped;
    }
    for article in &mut out.articles {
        article.paragraphs.retain(|p| !p.qas.is_empty());
    }
    out.articles.retain(|a| !a.paragraphs.is_empty());
    Ok((out, total))
}
