use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    /// Index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

/// A validated dependency tree: exactly one root, heads in range, acyclic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepSentence {
    pub tokens: Vec<DepToken>,
}

impl DepSentence {
    /// Builds and validates a sentence; `sentence` only labels errors.
    pub fn new(tokens: Vec<DepToken>, sentence: usize) -> Result<Self> {
        let err = |message: String| Error::Structure { sentence, message };
        let n = tokens.len();
        if n == 0 {
            return Err(err("empty sentence".into()));
        }
        for (i, t) in tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(err(format!("token ids must run 1..{n}, found {}", t.index)));
            }
            if t.head > n {
                return Err(err(format!(
                    "head {} of token {} out of range",
                    t.head, t.index
                )));
            }
            if t.head == t.index {
                return Err(err(format!("token {} heads itself", t.index)));
            }
        }
        let roots: Vec<usize> = tokens
            .iter()
            .filter(|t| t.head == 0)
            .map(|t| t.index)
            .collect();
        match roots.len() {
            1 => {}
            0 => return Err(err("no root".into())),
            _ => return Err(err(format!("multiple roots: {roots:?}"))),
        }
        for t in &tokens {
            let mut cur = t.head;
            let mut steps = 0;
            while cur != 0 {
                steps += 1;
                if steps > n {
                    return Err(err(format!("cycle through token {}", t.index)));
                }
                cur = tokens[cur - 1].head;
            }
        }
        Ok(DepSentence { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    pub fn root(&self) -> usize {
        self.tokens
            .iter()
            .find(|t| t.head == 0)
            .map(|t| t.index)
            .expect("validated sentence has a root")
    }

    /// Dependents of every node (index 0 is the virtual root), ascending.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.tokens.len() + 1];
        for t in &self.tokens {
            children[t.head].push(t.index);
        }
        children
    }
}

/// Reads CoNLL-U. Only ID, FORM, HEAD and DEPREL are used; comment lines,
/// multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<Vec<DepSentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let flush = |tokens: &mut Vec<DepToken>, sentences: &mut Vec<DepSentence>| -> Result<()> {
        if !tokens.is_empty() {
            let idx = sentences.len();
            sentences.push(DepSentence::new(std::mem::take(tokens), idx)?);
        }
        Ok(())
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut sentences)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Structure {
            sentence: sentences.len(),
            message: format!("line {}: {message}", lineno + 1),
        };
        if cols.len() != 10 {
            return Err(bad(format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index = cols[0]
            .parse()
            .map_err(|_| bad(format!("bad token id `{}`", cols[0])))?;
        let head = cols[6]
            .parse()
            .map_err(|_| bad(format!("bad head `{}`", cols[6])))?;
        tokens.push(DepToken {
            index,
            form: cols[1].to_owned(),
            head,
            deprel: cols[7].to_owned(),
        });
    }
    flush(&mut tokens, &mut sentences)?;
    Ok(sentences)
}

/// Writes sentences back as CoNLL-U with unused columns set to `_`.
pub fn write_conllu(sentences: &[DepSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for t in &s.tokens {
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                t.index, t.form, t.head, t.deprel
            ));
        }
        out.push('\n');
    }
    out
}
