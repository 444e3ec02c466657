//! Artificial "unseen languages" built by a seeded bijection over the word
//! types of a corpus.
//!
//! Every word token of every context and question is replaced by its image;
//! punctuation and whitespace stay fixed. Answers are re-derived from the
//! permuted context at the same token positions.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, Answer, RcDataset, Snap, TokenSpan, TokenizerPolicy, TransformTag};
use crate::script::is_cjk;
use crate::{Error, Execution, Result};

/// With `derangement = false`, this seed yields the identity permutation.
pub const IDENTITY_SEED: u64 = u64::MAX;

/// Sorted, de-duplicated word types of all contexts and questions.
pub fn build_vocab(d: &RcDataset, policy: TokenizerPolicy) -> Vec<String> {
    let mut types = BTreeSet::new();
    let mut add = |text: &str| {
        for t in tokenize(text, policy).tokens {
            if t.is_word() {
                types.insert(t.text);
            }
        }
    };
    for paragraph in d.paragraphs() {
        add(&paragraph.context);
        for qa in &paragraph.qas {
            add(&qa.question);
        }
    }
    types.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationTable {
    vocabulary: Vec<String>,
    images: Vec<usize>,
    index: HashMap<String, usize>,
    pub seed: Option<u64>,
    pub policy: TokenizerPolicy,
    pub derangement_required: bool,
}

/// Seeded Fisher-Yates permutation of `vocab`. With `derangement`, shuffles
/// again until no word maps to itself.
///
/// Under the mixed policy single CJK characters are permuted among
/// themselves and all other words among themselves, so that every image
/// tokenizes exactly like its source and the inverse table restores the
/// original text.
pub fn build_permutation(
    vocab: &[String],
    seed: u64,
    derangement: bool,
    policy: TokenizerPolicy,
) -> Result<PermutationTable> {
    let n = vocab.len();
    let mut images: Vec<usize> = (0..n).collect();
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, w) in vocab.iter().enumerate() {
        classes[usize::from(policy == TokenizerPolicy::Mixed && is_cjk_char_token(w))].push(i);
    }
    classes.retain(|c| !c.is_empty());
    if derangement && classes.iter().any(|c| c.len() == 1) {
        return Err(Error::Argument(if classes.len() == 1 {
            "a single-type vocabulary has no derangement".into()
        } else {
            "a word class with a single type has no derangement".into()
        }));
    }
    if derangement || seed != IDENTITY_SEED {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in &classes {
            let mut shuffled = class.clone();
            loop {
                shuffled.shuffle(&mut rng);
                if !derangement || class.iter().zip(&shuffled).all(|(a, b)| a != b) {
                    break;
                }
            }
            for (&from, &to) in class.iter().zip(&shuffled) {
                images[from] = to;
            }
        }
    }
    PermutationTable::from_parts(vocab.to_vec(), images, Some(seed), policy, derangement)
}

fn is_cjk_char_token(w: &str) -> bool {
    let mut chars = w.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if is_cjk(c))
}

impl PermutationTable {
    fn from_parts(
        vocabulary: Vec<String>,
        images: Vec<usize>,
        seed: Option<u64>,
        policy: TokenizerPolicy,
        derangement_required: bool,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(vocabulary.len());
        for (i, w) in vocabulary.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Argument(format!("word `{w}` listed twice")));
            }
        }
        let mut seen = vec![false; vocabulary.len()];
        for &j in &images {
            if j >= vocabulary.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Argument("mapping is not a bijection".into()));
            }
        }
        Ok(PermutationTable {
            vocabulary,
            images,
            index,
            seed,
            policy,
            derangement_required,
        })
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn image(&self, word: &str) -> Option<&str> {
        self.index
            .get(word)
            .map(|&i| self.vocabulary[self.images[i]].as_str())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.vocabulary
            .iter()
            .zip(&self.images)
            .map(|(w, &j)| (w.as_str(), self.vocabulary[j].as_str()))
    }

    pub fn fixed_points(&self) -> usize {
        self.images
            .iter()
            .enumerate()
            .filter(|(i, j)| i == *j)
            .count()
    }

    pub fn inverse(&self) -> PermutationTable {
        let mut images = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        PermutationTable {
            vocabulary: self.vocabulary.clone(),
            images,
            index: self.index.clone(),
            seed: self.seed,
            policy: self.policy,
            derangement_required: self.derangement_required,
        }
    }

    /// Two-column `source<TAB>image` listing in vocabulary order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (w, img) in self.pairs() {
            out.push_str(w);
            out.push('\t');
            out.push_str(img);
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, policy: TokenizerPolicy) -> Result<Self> {
        let mut vocabulary = Vec::new();
        let mut targets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(src), Some(img), None) if !src.is_empty() && !img.is_empty() => {
                    vocabulary.push(src.to_owned());
                    targets.push(img.to_owned());
                }
                _ => {
                    return Err(Error::Line {
                        line: i + 1,
                        message: "expected `source<TAB>image`".into(),
                    })
                }
            }
        }
        let lookup: HashMap<&str, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        let images = targets
            .iter()
            .map(|t| {
                lookup
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::Argument(format!("image `{t}` is not a source word")))
            })
            .collect::<Result<Vec<_>>>()?;
        let derangement = images.iter().enumerate().all(|(i, &j)| i != j) && images.len() > 1;
        Self::from_parts(vocabulary, images, None, policy, derangement)
    }

    fn permute_text(&self, text: &str) -> Result<(TokenSpan, TokenSpan)> {
        let old = tokenize(text, self.policy);
        let mut missing = None;
        let new = old.rewrite(|_, t| {
            if !t.is_word() {
                return None;
            }
            match self.image(&t.text) {
                Some(img) => Some(img.to_owned()),
                None => {
                    missing.get_or_insert_with(|| t.text.clone());
                    None
                }
            }
        });
        match missing {
            Some(word) => Err(Error::Coverage(word)),
            None => Ok((old, new)),
        }
    }
}

/// [`apply_permutation_with`] using the default execution strategy.
pub fn apply_permutation(d: &RcDataset, table: &PermutationTable) -> Result<RcDataset> {
    apply_permutation_with(d, table, Execution::default())
}

/// Replaces every word token by its image. Answer boundaries are carried over
/// token-wise; a boundary inside a token widens to the whole token.
pub fn apply_permutation_with(
    d: &RcDataset,
    table: &PermutationTable,
    exec: Execution,
) -> Result<RcDataset> {
    let mut tag = TransformTag::new("permute")
        .with("policy", table.policy)
        .with("derangement", table.derangement_required);
    if let Some(seed) = table.seed {
        tag = tag.with("seed", seed);
    }

    let mut out = d.clone();
    for article in &mut out.articles {
        let results = exec.map(&article.paragraphs, |paragraph| -> Result<_> {
            let mut paragraph = paragraph.clone();
            let (old, new) = table.permute_text(&paragraph.context)?;
            let index = crate::corpus::CharIndex::new(&new.source);
            for qa in &mut paragraph.qas {
                for answer in &mut qa.answers {
                    let end = answer.answer_start + answer.text.chars().count();
                    let s = old.map_boundary(&new, answer.answer_start, Snap::Left);
                    let e = old.map_boundary(&new, end, Snap::Right);
                    *answer = Answer {
                        text: index.slice(s, e).to_owned(),
                        answer_start: s,
                    };
                }
                qa.question = table.permute_text(&qa.question)?.1.source;
                qa.lineage.push(tag.clone());
            }
            paragraph.context = new.source;
            Ok(paragraph)
        });
        article.paragraphs = results.into_iter().collect::<Result<_>>()?;
    }
    Ok(out)
}
