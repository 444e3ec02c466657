use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RcDataset, TransformTag};
use crate::{Error, Result};

/// Uniformly samples `target` qa entries without replacement.
///
/// Surviving entries keep their original order. Paragraphs left without
/// qas and articles left without paragraphs are removed.
pub fn downsample(d: &RcDataset, target: usize, seed: u64) -> Result<RcDataset> {
    let total = d.qa_count();
    if target > total {
        return Err(Error::Argument(format!(
            "target {target} exceeds the {total} qa entries available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; total];
    for i in rand::seq::index::sample(&mut rng, total, target) {
        keep[i] = true;
    }

    let tag = TransformTag::new("downsample")
        .with("target", target)
        .with("seed", seed);
    let mut out = RcDataset::new(d.version.clone());
    let mut ordinal = 0;
    for article in &d.articles {
        let mut paragraphs = Vec::new();
        for paragraph in &article.paragraphs {
            let mut qas = Vec::new();
            for qa in &paragraph.qas {
                if keep[ordinal] {
                    let mut qa = qa.clone();
                    qa.lineage.push(tag.clone());
                    qas.push(qa);
                }
                ordinal += 1;
            }
            if !qas.is_empty() {
                paragraphs.push(super::Paragraph {
                    context: paragraph.context.clone(),
                    qas,
                });
            }
        }
        if !paragraphs.is_empty() {
            out.articles.push(super::Article {
                title: article.title.clone(),
                paragraphs,
            });
        }
    }
    Ok(out)
}
