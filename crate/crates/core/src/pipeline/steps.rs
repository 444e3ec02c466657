use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{AnalyzeMethod, AnalyzeParams, ChoiceName, Step, StepOp, StepReport};
use crate::codeswitch::{codeswitch_dataset, load_dictionary, Choice};
use crate::corpus::{downsample, parse_dataset, serialize_dataset, RcDataset};
use crate::metrics::{evaluate, parse_predictions, LangClass, MetricReport};
use crate::permute::{apply_permutation, build_permutation, build_vocab, PermutationTable};
use crate::recovery::{parse_triples, recover_dataset, RecoveryPolicy};
use crate::repr::{
    answer_span_cosine, load_representations, pca_project, procrustes_align, svcca, ReprMatrix,
    SvccaConfig,
};
use crate::typology::{parse_conllu, reorder_dataset};
use crate::{Error, Execution, Result};

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Inputs {
    bytes: BTreeMap<String, Vec<u8>>,
}

impl Inputs {
    fn get(&self, role: &str) -> Option<&[u8]> {
        self.bytes.get(role).map(Vec::as_slice)
    }

    // Roles required by validation are always present.
    fn req(&self, role: &str) -> &[u8] {
        self.get(role).expect("validated input role")
    }

    fn text(&self, role: &str) -> Result<&str> {
        std::str::from_utf8(self.req(role))
            .map_err(|e| Error::Format(format!("input `{role}` is not UTF-8: {e}")))
    }

    fn dataset(&self) -> Result<RcDataset> {
        parse_dataset(self.req("dataset"))
    }
}

type Outputs = Vec<(&'static str, Vec<u8>)>;

pub(super) fn execute(step: &Step, base: &Path) -> Result<StepReport> {
    let mut bytes = BTreeMap::new();
    let mut digests = BTreeMap::new();
    for (role, rel) in &step.inputs {
        let data = fs::read(base.join(rel))
            .map_err(|e| Error::io(format!("reading input `{role}` from {rel}"), e))?;
        digests.insert(role.clone(), digest(&data));
        bytes.insert(role.clone(), data);
    }
    let inputs = Inputs { bytes };

    let (files, summary): (Outputs, serde_json::Value) = match &step.op {
        StepOp::Recover(p) => {
            let d = inputs.dataset()?;
            let triples = parse_triples(inputs.req("triples"))?;
            let policy = RecoveryPolicy {
                cap: p.cap,
                mode: p.mode,
            };
            let (mut out, report) = recover_dataset(&d, &triples, &policy, Execution::default())?;
            stamp(&mut out, step, &digests);
            let mut summary = serde_json::to_value(&report)?;
            summary["rate"] = json!(report.rate());
            (vec![("dataset", serialize_dataset(&out))], summary)
        }
        StepOp::Permute(p) => {
            let d = inputs.dataset()?;
            let table = match inputs.get("table") {
                Some(_) => PermutationTable::from_tsv(inputs.text("table")?, p.policy)?,
                None => {
                    let seed = step.seed.expect("built tables are seeded");
                    build_permutation(&build_vocab(&d, p.policy), seed, p.derangement, p.policy)?
                }
            };
            let table = if p.inverse { table.inverse() } else { table };
            let mut out = apply_permutation(&d, &table)?;
            stamp(&mut out, step, &digests);
            let mut files = vec![("dataset", serialize_dataset(&out))];
            if step.outputs.contains_key("table") {
                files.push(("table", table.to_tsv().into_bytes()));
            }
            let summary = json!({
                "qas": out.qa_count(),
                "vocabulary": table.len(),
                "fixed_points": table.fixed_points(),
            });
            (files, summary)
        }
        StepOp::Codeswitch(p) => {
            let d = inputs.dataset()?;
            let dict = load_dictionary(inputs.req("dict"), &p.source_lang, &p.target_lang)?;
            let choice = match p.choice {
                ChoiceName::First => Choice::First,
                ChoiceName::Seeded => Choice::Seeded(step.seed.expect("seeded choice")),
            };
            let (mut out, report) = codeswitch_dataset(&d, &dict, p.scope, choice, p.policy);
            stamp(&mut out, step, &digests);
            let mut summary = serde_json::to_value(report)?;
            summary["dictionary_entries"] = json!(dict.len());
            (vec![("dataset", serialize_dataset(&out))], summary)
        }
        StepOp::Reorder(p) => {
            let d = inputs.dataset()?;
            let parses = parse_conllu(inputs.text("parses")?)?;
            let policy = RecoveryPolicy {
                cap: p.cap,
                mode: p.mode,
            };
            let (mut out, report) = reorder_dataset(&d, &parses, p.pattern, &policy)?;
            stamp(&mut out, step, &digests);
            (
                vec![("dataset", serialize_dataset(&out))],
                serde_json::to_value(report)?,
            )
        }
        StepOp::Downsample(p) => {
            let d = inputs.dataset()?;
            let mut out = downsample(&d, p.target, step.seed.expect("downsampling is seeded"))?;
            stamp(&mut out, step, &digests);
            let summary = json!({ "source_qas": d.qa_count(), "kept_qas": out.qa_count() });
            (vec![("dataset", serialize_dataset(&out))], summary)
        }
        StepOp::Eval(p) => {
            let d = inputs.dataset()?;
            let predictions = parse_predictions(inputs.req("predictions"))?;
            let report = evaluate(&predictions, &d, p.lang);
            let summary = json!({
                "em": report.em,
                "f1": report.f1,
                "evaluated": report.evaluated,
                "noise_count": report.noise_count,
                "missing": report.missing.len(),
            });
            let mut files = Vec::new();
            if step.outputs.contains_key("report") {
                let doc = EvalDocument {
                    lang: p.lang,
                    inputs: digests.clone(),
                    report,
                };
                let mut out = serde_json::to_vec_pretty(&doc)?;
                out.push(b'\n');
                files.push(("report", out));
            }
            (files, summary)
        }
        StepOp::Analyze(p) => analyze(p, &inputs)?,
    };

    let mut output_digests = BTreeMap::new();
    for (role, data) in files {
        let rel = &step.outputs[role];
        let path = base.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| Error::io(format!("creating directory for {rel}"), e))?;
        }
        fs::write(&path, &data).map_err(|e| Error::io(format!("writing {rel}"), e))?;
        output_digests.insert(role.to_owned(), digest(&data));
    }
    Ok(StepReport {
        index: step.index,
        kind: step.kind,
        params: step.params_json(),
        seed: step.seed,
        inputs: digests,
        outputs: output_digests,
        summary,
    })
}

#[derive(Serialize)]
struct EvalDocument {
    #[serde(serialize_with = "super::display")]
    lang: LangClass,
    inputs: BTreeMap<String, String>,
    #[serde(flatten)]
    report: MetricReport,
}

// Adds the step seed and input digests to the tag the step just appended.
fn stamp(d: &mut RcDataset, step: &Step, digests: &BTreeMap<String, String>) {
    for article in &mut d.articles {
        for paragraph in &mut article.paragraphs {
            for qa in &mut paragraph.qas {
                let Some(tag) = qa.lineage.last_mut().filter(|t| t.op == step.kind.name()) else {
                    continue;
                };
                if let Some(seed) = step.seed {
                    tag.params.insert("seed".into(), seed.to_string());
                }
                for (role, dg) in digests {
                    tag.params.insert(format!("input.{role}"), dg.clone());
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct PairRow {
    x_id: String,
    y_id: String,
}

fn tsv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn load_matrix(inputs: &Inputs, matrix: &str, meta: &str) -> Result<ReprMatrix> {
    load_representations(inputs.req(matrix), inputs.req(meta))
}

fn analyze(p: &AnalyzeParams, inputs: &Inputs) -> Result<(Outputs, serde_json::Value)> {
    let x = load_matrix(inputs, "x", "x_meta")?;
    let y = match inputs.get("y") {
        Some(_) => Some(load_matrix(inputs, "y", "y_meta")?),
        None => None,
    };
    let paired = || {
        let y = y.as_ref().expect("validated paired analysis");
        if p.check_alignment {
            x.check_row_alignment(y)?;
        }
        Ok::<_, Error>(y)
    };
    let mut w = tsv_writer();
    let summary = match p.method {
        AnalyzeMethod::Cosine => {
            let y = y.as_ref().expect("validated paired analysis");
            let pairing: BTreeMap<String, String> = match inputs.get("pairing") {
                Some(bytes) => {
                    let mut reader = csv::ReaderBuilder::new()
                        .delimiter(b'\t')
                        .from_reader(bytes);
                    let mut map = BTreeMap::new();
                    for (i, row) in reader.deserialize::<PairRow>().enumerate() {
                        let row = row.map_err(|e| Error::Line {
                            line: i + 2,
                            message: e.to_string(),
                        })?;
                        map.insert(row.x_id, row.y_id);
                    }
                    map
                }
                None => x
                    .meta()
                    .iter()
                    .filter(|m| m.in_answer_span)
                    .map(|m| m.example_id.clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .map(|id| (id.clone(), id))
                    .collect(),
            };
            let r = answer_span_cosine(&x, y, &pairing)?;
            w.write_record(["x_id", "y_id", "cosine"])?;
            for pair in &r.pairs {
                w.write_record([&pair.x_id, &pair.y_id, &pair.cosine.to_string()])?;
            }
            json!({ "pairs": r.pairs.len(), "mean": r.mean, "skipped": r.skipped })
        }
        AnalyzeMethod::Pca => {
            let r = pca_project(&x, p.components)?;
            let mut header: Vec<String> = [
                "row_index",
                "example_id",
                "token_index",
                "token_text",
                "in_answer_span",
                "language",
            ]
            .map(String::from)
            .to_vec();
            header.extend((1..=r.components).map(|c| format!("pc{c}")));
            w.write_record(&header)?;
            for (i, (meta, coords)) in x.meta().iter().zip(&r.coordinates).enumerate() {
                let mut row = vec![
                    i.to_string(),
                    meta.example_id.clone(),
                    meta.token_index.to_string(),
                    meta.token_text.clone(),
                    u8::from(meta.in_answer_span).to_string(),
                    meta.language.clone(),
                ];
                row.extend(coords.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            json!({
                "components": r.components,
                "explained_variance": r.explained_variance,
                "explained_variance_ratio": r.explained_variance_ratio,
                "warnings": r.warnings,
            })
        }
        AnalyzeMethod::Svcca => {
            let y = paired()?;
            let cfg = SvccaConfig {
                variance_fraction: p.variance_fraction,
                epsilon: p.epsilon,
            };
            let r = svcca(&x, y, cfg)?;
            w.write_record(["index", "correlation"])?;
            for (i, c) in r.correlations.iter().enumerate() {
                w.write_record([i.to_string(), c.to_string()])?;
            }
            json!({
                "mean_correlation": r.mean_correlation,
                "kept_dims": r.kept_dims,
                "warnings": r.warnings,
            })
        }
        AnalyzeMethod::Procrustes => {
            let y = paired()?;
            let r = procrustes_align(&x, y)?;
            let d = r.map.matrix.ncols();
            w.write_record((0..d).map(|j| format!("w{j}")))?;
            for row in r.map.rows() {
                w.write_record(row.iter().map(f64::to_string))?;
            }
            json!({
                "residual": r.residual,
                "orthogonality_error": r.map.orthogonality_error(),
                "warnings": r.warnings,
            })
        }
    };
    Ok((vec![("report", finish(w)?)], summary))
}
