use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CharIndex;
use crate::script::{is_cjk, is_punct};
use crate::Error;

/// How text is cut into tokens.
///
/// * `SpaceDelimited`: maximal non-space runs, with leading and trailing
///   punctuation split off one character at a time.
/// * `CjkChar`: every non-space code point is a token.
/// * `Mixed`: CJK code points are single tokens, everything else follows the
///   space-delimited rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerPolicy {
    SpaceDelimited,
    CjkChar,
    #[default]
    Mixed,
}

impl FromStr for TokenizerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "space" | "space-delimited" => Ok(TokenizerPolicy::SpaceDelimited),
            "cjk" | "cjk-char" => Ok(TokenizerPolicy::CjkChar),
            "mixed" => Ok(TokenizerPolicy::Mixed),
            other => Err(Error::Argument(format!(
                "unknown tokenizer policy `{other}`"
            ))),
        }
    }
}

impl fmt::Display for TokenizerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerPolicy::SpaceDelimited => "space",
            TokenizerPolicy::CjkChar => "cjk",
            TokenizerPolicy::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Code-point offsets `[start, end)` in the source text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    /// A word token has at least one non-punctuation character.
    pub fn is_word(&self) -> bool {
        !self.text.chars().all(is_punct)
    }
}

/// Which way a boundary falling strictly inside a token is moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Snap {
    /// To the token start (used for span starts).
    Left,
    /// To the token end (used for span ends).
    Right,
}

/// Tokens of a text together with the text itself. Tokens are sorted and
/// non-overlapping; everything between them is a gap of whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub source: String,
    pub tokens: Vec<Token>,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// The `len() + 1` gaps around and between tokens.
    pub fn gaps(&self) -> Vec<&str> {
        let index = CharIndex::new(&self.source);
        let mut gaps = Vec::with_capacity(self.tokens.len() + 1);
        let mut prev = 0;
        for t in &self.tokens {
            gaps.push(index.slice(prev, t.start));
            prev = t.end;
        }
        gaps.push(index.slice(prev, index.len()));
        gaps
    }

    /// Interleaves gaps and tokens; equals `source` for any tokenizer output.
    pub fn reconstruct(&self) -> String {
        let gaps = self.gaps();
        let mut out = String::with_capacity(self.source.len());
        for (gap, token) in gaps.iter().zip(&self.tokens) {
            out.push_str(gap);
            out.push_str(&token.text);
        }
        out.push_str(gaps[self.tokens.len()]);
        out
    }

    /// Builds a new span with the same gaps, replacing each token for which
    /// `replace` returns `Some`.
    pub fn rewrite<F>(&self, mut replace: F) -> TokenSpan
    where
        F: FnMut(usize, &Token) -> Option<String>,
    {
        let gaps = self.gaps();
        let mut source = String::with_capacity(self.source.len());
        let mut tokens = Vec::with_capacity(self.tokens.len());
        let mut pos = 0;
        for (i, (gap, token)) in gaps.iter().zip(&self.tokens).enumerate() {
            source.push_str(gap);
            pos += gap.chars().count();
            let text = replace(i, token).unwrap_or_else(|| token.text.clone());
            let len = text.chars().count();
            source.push_str(&text);
            tokens.push(Token {
                text,
                start: pos,
                end: pos + len,
            });
            pos += len;
        }
        source.push_str(gaps[self.tokens.len()]);
        TokenSpan { source, tokens }
    }

    /// Maps a code-point boundary of this span's source onto `other`, which
    /// must have been produced by [`TokenSpan::rewrite`] (same token count,
    /// same gaps). Boundaries inside gaps keep their offset within the gap;
    /// boundaries strictly inside a token snap to its start or end.
    pub fn map_boundary(&self, other: &TokenSpan, pos: usize, snap: Snap) -> usize {
        debug_assert_eq!(self.tokens.len(), other.tokens.len());
        // First token that ends after `pos`.
        let k = self.tokens.partition_point(|t| t.end <= pos);
        let (prev_end, new_prev_end) = if k == 0 {
            (0, 0)
        } else {
            (self.tokens[k - 1].end, other.tokens[k - 1].end)
        };
        match self.tokens.get(k) {
            Some(t) if pos > t.start => match snap {
                Snap::Left => other.tokens[k].start,
                Snap::Right => other.tokens[k].end,
            },
            _ => new_prev_end + (pos - prev_end),
        }
    }
}

/// Splits `text` under `policy`. Lossless: see [`TokenSpan::reconstruct`].
pub fn tokenize(text: &str, policy: TokenizerPolicy) -> TokenSpan {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        match policy {
            TokenizerPolicy::SpaceDelimited => split_run(&chars, run_start, i, &mut tokens),
            TokenizerPolicy::CjkChar => {
                for j in run_start..i {
                    push(&chars, j, j + 1, &mut tokens);
                }
            }
            TokenizerPolicy::Mixed => {
                let mut j = run_start;
                while j < i {
                    if is_cjk(chars[j]) {
                        push(&chars, j, j + 1, &mut tokens);
                        j += 1;
                    } else {
                        let sub = j;
                        while j < i && !is_cjk(chars[j]) {
                            j += 1;
                        }
                        split_run(&chars, sub, j, &mut tokens);
                    }
                }
            }
        }
    }
    TokenSpan {
        source: text.to_owned(),
        tokens,
    }
}

fn split_run(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && is_punct(chars[lo]) {
        push(chars, lo, lo + 1, out);
        lo += 1;
    }
    if lo == hi {
        return;
    }
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    push(chars, lo, hi, out);
    for j in hi..end {
        push(chars, j, j + 1, out);
    }
}

fn push(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    out.push(Token {
        text: chars[start..end].iter().collect(),
        start,
        end,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn space_delimited_splits_punctuation() {
        let span = tokenize("John eats apples.", TokenizerPolicy::SpaceDelimited);
        assert_eq!(span.texts(), ["John", "eats", "apples", "."]);
        let span = tokenize("(don't) stop...", TokenizerPolicy::SpaceDelimited);
        assert_eq!(span.texts(), ["(", "don't", ")", "stop", ".", ".", "."]);
    }

    #[test]
    fn cjk_char_offsets() {
        let span = tokenize("熱力學", TokenizerPolicy::CjkChar);
        assert_eq!(span.texts(), ["熱", "力", "學"]);
        let starts: Vec<usize> = span.tokens.iter().map(|t| t.start).collect();
        assert_eq!(starts, [0, 1, 2]);
    }

    #[test]
    fn mixed_mode_table_string() {
        let span = tokenize("second 法律 of 熱力學", TokenizerPolicy::Mixed);
        assert_eq!(span.texts(), ["second", "法", "律", "of", "熱", "力", "學"]);
        let span = tokenize("電子的fermionic性質。", TokenizerPolicy::Mixed);
        assert_eq!(
            span.texts(),
            ["電", "子", "的", "fermionic", "性", "質", "。"]
        );
    }

    #[test]
    fn hangul_is_space_delimited() {
        let span = tokenize("the 차이점 in 잠재력", TokenizerPolicy::Mixed);
        assert_eq!(span.texts(), ["the", "차이점", "in", "잠재력"]);
    }

    #[test]
    fn word_tokens() {
        let span = tokenize("a , b .", TokenizerPolicy::SpaceDelimited);
        let words: Vec<bool> = span.tokens.iter().map(Token::is_word).collect();
        assert_eq!(words, [true, false, true, false]);
    }

    #[test]
    fn rewrite_and_map_boundaries() {
        let old = tokenize("  the cat sat.", TokenizerPolicy::SpaceDelimited);
        let new = old.rewrite(|_, t| (t.text == "cat").then(|| "elephant".to_string()));
        assert_eq!(new.source, "  the elephant sat.");
        assert_eq!(new.reconstruct(), new.source);
        // "cat" spans [6, 9) and becomes [6, 14).
        assert_eq!(old.map_boundary(&new, 6, Snap::Left), 6);
        assert_eq!(old.map_boundary(&new, 9, Snap::Right), 14);
        // "sat." [10, 14) -> [15, 19)
        assert_eq!(old.map_boundary(&new, 10, Snap::Left), 15);
        assert_eq!(old.map_boundary(&new, 14, Snap::Right), 19);
        // Inside a token snaps outward.
        assert_eq!(old.map_boundary(&new, 7, Snap::Left), 6);
        assert_eq!(old.map_boundary(&new, 7, Snap::Right), 14);
        // Leading gap.
        assert_eq!(old.map_boundary(&new, 1, Snap::Left), 1);
    }

    proptest! {
        #[test]
        fn tokenization_is_lossless(text in "\\PC{0,40}|[a-z 熱力學.,!\t\n]{0,40}") {
            for policy in [TokenizerPolicy::SpaceDelimited, TokenizerPolicy::CjkChar, TokenizerPolicy::Mixed] {
                let span = tokenize(&text, policy);
                prop_assert_eq!(span.reconstruct(), text.clone());
                for w in span.tokens.windows(2) {
                    prop_assert!(w[0].end <= w[1].start);
                }
                for t in &span.tokens {
                    prop_assert!(t.start < t.end);
                    prop_assert!(!t.text.chars().any(char::is_whitespace));
                    if policy != TokenizerPolicy::SpaceDelimited && t.text.chars().any(is_cjk) {
                        prop_assert_eq!(t.text.chars().count(), 1);
                    }
                }
            }
        }
    }
}
