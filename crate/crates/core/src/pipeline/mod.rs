//! Declarative multi-step pipelines.
//!
//! A manifest lists steps in execution order. Each step names its kind,
//! typed parameters and named input/output files (paths relative to the
//! manifest directory). Everything is validated before the first step runs;
//! steps then execute sequentially and every produced dataset carries a
//! lineage tag stamped with the step seed and SHA-256 digests of its inputs.
//! The run report holds no timestamps, so identical manifests and inputs
//! give byte-identical outputs and reports.

mod steps;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codeswitch::Scope;
use crate::corpus::TokenizerPolicy;
use crate::metrics::LangClass;
use crate::recovery::{RecoveryMode, RecoveryPolicy};
use crate::repr::{sidecar_path, SvccaConfig};
use crate::typology::OrderPattern;
use crate::{Error, Result, TOOLKIT_VERSION};

pub use steps::digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Recover,
    Permute,
    Codeswitch,
    Reorder,
    Downsample,
    Eval,
    Analyze,
}

impl StepKind {
    pub const ALL: [StepKind; 7] = [
        StepKind::Recover,
        StepKind::Permute,
        StepKind::Codeswitch,
        StepKind::Reorder,
        StepKind::Downsample,
        StepKind::Eval,
        StepKind::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::Recover => "recover",
            StepKind::Permute => "permute",
            StepKind::Codeswitch => "codeswitch",
            StepKind::Reorder => "reorder",
            StepKind::Downsample => "downsample",
            StepKind::Eval => "eval",
            StepKind::Analyze => "analyze",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown step kind `{s}`")))
    }
}

/// One step as written in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub kind: StepKind,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
}

impl StepSpec {
    pub fn new(kind: StepKind) -> Self {
        StepSpec {
            kind,
            params: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        if !self.params.is_object() {
            self.params = serde_json::Value::Object(Default::default());
        }
        let value = serde_json::to_value(value).expect("parameter serializes");
        self.params
            .as_object_mut()
            .expect("object")
            .insert(key.to_owned(), value);
        self
    }

    pub fn input(mut self, role: &str, path: impl Into<String>) -> Self {
        self.inputs.insert(role.to_owned(), path.into());
        self
    }

    pub fn output(mut self, role: &str, path: impl Into<String>) -> Self {
        self.outputs.insert(role.to_owned(), path.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolkit_version: Option<String>,
    pub steps: Vec<StepSpec>,
}

impl Manifest {
    pub fn new(seed: u64, steps: Vec<StepSpec>) -> Self {
        Manifest {
            seed,
            toolkit_version: Some(TOOLKIT_VERSION.to_owned()),
            steps,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::Manifest(format!("{}: {}", e.path(), e.inner())))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    /// Checks parameters, roles and data flow without touching any output.
    pub fn validate(&self, base: &Path) -> Result<Vec<Step>> {
        if self.steps.is_empty() {
            return Err(Error::Manifest("no steps".into()));
        }
        let mut produced: BTreeSet<PathBuf> = BTreeSet::new();
        let mut plan = Vec::with_capacity(self.steps.len());
        for (index, spec) in self.steps.iter().enumerate() {
            let step = Step::from_spec(index, spec, self.seed)?;
            let fail =
                |msg: String| Error::Manifest(format!("step {index} ({}): {msg}", spec.kind));
            let own_inputs: BTreeSet<PathBuf> =
                step.inputs.values().map(|p| base.join(p)).collect();
            for (role, path) in &step.inputs {
                let resolved = base.join(path);
                if !produced.contains(&resolved) && !resolved.is_file() {
                    return Err(fail(format!(
                        "input `{role}` = `{path}` neither exists nor is produced by an earlier step"
                    )));
                }
            }
            for (role, path) in &step.outputs {
                let resolved = base.join(path);
                if own_inputs.contains(&resolved) {
                    return Err(fail(format!(
                        "output `{role}` overwrites an input of the same step"
                    )));
                }
                if !produced.insert(resolved) {
                    return Err(fail(format!("output `{role}` = `{path}` is written twice")));
                }
            }
            plan.push(step);
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzeMethod {
    Cosine,
    Pca,
    Svcca,
    Procrustes,
}

impl fmt::Display for AnalyzeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnalyzeMethod::Cosine => "cosine",
            AnalyzeMethod::Pca => "pca",
            AnalyzeMethod::Svcca => "svcca",
            AnalyzeMethod::Procrustes => "procrustes",
        })
    }
}

impl FromStr for AnalyzeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(AnalyzeMethod::Cosine),
            "pca" => Ok(AnalyzeMethod::Pca),
            "svcca" => Ok(AnalyzeMethod::Svcca),
            "procrustes" => Ok(AnalyzeMethod::Procrustes),
            other => Err(Error::Argument(format!("unknown analysis `{other}`"))),
        }
    }
}

fn parse_str<'de, D, T>(de: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr<Err = Error>,
{
    let s = String::deserialize(de)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn display<S, T>(value: &T, ser: S) -> std::result::Result<S::Ok, S::Error>
where
    S: Serializer,
    T: fmt::Display,
{
    ser.collect_str(value)
}

fn default_cap() -> usize {
    RecoveryPolicy::default().cap
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverParams {
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub mode: RecoveryMode,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermuteParams {
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub policy: TokenizerPolicy,
    #[serde(default = "yes")]
    pub derangement: bool,
    /// Apply the inverse of the (built or loaded) table.
    #[serde(default)]
    pub inverse: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceName {
    #[default]
    First,
    Seeded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeswitchParams {
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub scope: Scope,
    #[serde(default)]
    pub choice: ChoiceName,
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub policy: TokenizerPolicy,
    #[serde(default = "default_source_lang")]
    pub source_lang: String,
    #[serde(default = "default_target_lang")]
    pub target_lang: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_source_lang() -> String {
    "en".into()
}

fn default_target_lang() -> String {
    "xx".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReorderParams {
    #[serde(deserialize_with = "parse_str", serialize_with = "display")]
    pub pattern: OrderPattern,
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub mode: RecoveryMode,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownsampleParams {
    pub target: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalParams {
    #[serde(default, deserialize_with = "parse_str", serialize_with = "display")]
    pub lang: LangClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeParams {
    #[serde(deserialize_with = "parse_str", serialize_with = "display")]
    pub method: AnalyzeMethod,
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default = "default_variance_fraction")]
    pub variance_fraction: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Require row metadata (example_id, token_index) to agree for
    /// position-paired methods.
    #[serde(default = "yes")]
    pub check_alignment: bool,
}

fn default_components() -> usize {
    2
}

fn default_variance_fraction() -> f64 {
    SvccaConfig::default().variance_fraction
}

fn default_epsilon() -> f64 {
    SvccaConfig::default().epsilon
}

/// Typed parameters of a validated step.
#[derive(Debug, Clone)]
pub enum StepOp {
    Recover(RecoverParams),
    Permute(PermuteParams),
    Codeswitch(CodeswitchParams),
    Reorder(ReorderParams),
    Downsample(DownsampleParams),
    Eval(EvalParams),
    Analyze(AnalyzeParams),
}

/// A validated step ready to execute.
#[derive(Debug, Clone)]
pub struct Step {
    pub index: usize,
    pub kind: StepKind,
    pub op: StepOp,
    /// Seed the step uses, if any.
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

struct Roles {
    inputs: &'static [&'static str],
    optional_inputs: &'static [&'static str],
    outputs: &'static [&'static str],
    optional_outputs: &'static [&'static str],
}

fn roles(kind: StepKind) -> Roles {
    let r = |inputs, optional_inputs, outputs, optional_outputs| Roles {
        inputs,
        optional_inputs,
        outputs,
        optional_outputs,
    };
    match kind {
        StepKind::Recover => r(&["dataset", "triples"], &[], &["dataset"], &[]),
        StepKind::Permute => r(&["dataset"], &["table"], &["dataset"], &["table"]),
        StepKind::Codeswitch => r(&["dataset", "dict"], &[], &["dataset"], &[]),
        StepKind::Reorder => r(&["dataset", "parses"], &[], &["dataset"], &[]),
        StepKind::Downsample => r(&["dataset"], &[], &["dataset"], &[]),
        StepKind::Eval => r(&["dataset", "predictions"], &[], &[], &["report"]),
        StepKind::Analyze => r(
            &["x"],
            &["x_meta", "y", "y_meta", "pairing"],
            &["report"],
            &[],
        ),
    }
}

fn typed<T: DeserializeOwned>(value: &serde_json::Value) -> std::result::Result<T, String> {
    let value = if value.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        value.clone()
    };
    serde_path_to_error::deserialize(value)
        .map_err(|e| format!("params.{}: {}", e.path(), e.inner()))
}

impl Step {
    fn from_spec(index: usize, spec: &StepSpec, manifest_seed: u64) -> Result<Step> {
        let kind = spec.kind;
        let fail = |msg: String| Error::Manifest(format!("step {index} ({kind}): {msg}"));
        let (op, seed) = match kind {
            StepKind::Recover => (StepOp::Recover(typed(&spec.params).map_err(fail)?), None),
            StepKind::Permute => {
                let p: PermuteParams = typed(&spec.params).map_err(fail)?;
                let seed =
                    (!spec.inputs.contains_key("table")).then(|| p.seed.unwrap_or(manifest_seed));
                (StepOp::Permute(p), seed)
            }
            StepKind::Codeswitch => {
                let p: CodeswitchParams = typed(&spec.params).map_err(fail)?;
                let seed =
                    (p.choice == ChoiceName::Seeded).then(|| p.seed.unwrap_or(manifest_seed));
                (StepOp::Codeswitch(p), seed)
            }
            StepKind::Reorder => (StepOp::Reorder(typed(&spec.params).map_err(fail)?), None),
            StepKind::Downsample => {
                let p: DownsampleParams = typed(&spec.params).map_err(fail)?;
                let seed = Some(p.seed.unwrap_or(manifest_seed));
                (StepOp::Downsample(p), seed)
            }
            StepKind::Eval => (StepOp::Eval(typed(&spec.params).map_err(fail)?), None),
            StepKind::Analyze => (StepOp::Analyze(typed(&spec.params).map_err(fail)?), None),
        };

        let mut inputs = spec.inputs.clone();
        let outputs = spec.outputs.clone();
        if let StepOp::Analyze(p) = &op {
            check_analyze(p, &inputs).map_err(fail)?;
            // Metadata defaults to the sidecar next to each matrix.
            for (matrix, meta) in [("x", "x_meta"), ("y", "y_meta")] {
                if let (Some(path), false) = (inputs.get(matrix), inputs.contains_key(meta)) {
                    let sidecar = sidecar_path(Path::new(path)).to_string_lossy().into_owned();
                    inputs.insert(meta.to_owned(), sidecar);
                }
            }
        }
        let r = roles(kind);
        check_roles("input", &inputs, r.inputs, r.optional_inputs).map_err(fail)?;
        check_roles("output", &outputs, r.outputs, r.optional_outputs).map_err(fail)?;
        Ok(Step {
            index,
            kind,
            op,
            seed,
            inputs,
            outputs,
        })
    }

    /// Parameters as executed, with defaults filled in.
    pub fn params_json(&self) -> serde_json::Value {
        let v = match &self.op {
            StepOp::Recover(p) => serde_json::to_value(p),
            StepOp::Permute(p) => serde_json::to_value(p),
            StepOp::Codeswitch(p) => serde_json::to_value(p),
            StepOp::Reorder(p) => serde_json::to_value(p),
            StepOp::Downsample(p) => serde_json::to_value(p),
            StepOp::Eval(p) => serde_json::to_value(p),
            StepOp::Analyze(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }
}

fn check_analyze(
    p: &AnalyzeParams,
    inputs: &BTreeMap<String, String>,
) -> std::result::Result<(), String> {
    let paired = p.method != AnalyzeMethod::Pca;
    if paired && !inputs.contains_key("y") {
        return Err(format!("{} analysis needs input `y`", p.method));
    }
    if !paired && (inputs.contains_key("y") || inputs.contains_key("y_meta")) {
        return Err("pca analysis takes a single matrix".into());
    }
    if p.method != AnalyzeMethod::Cosine && inputs.contains_key("pairing") {
        return Err("`pairing` applies to cosine analysis only".into());
    }
    if p.method == AnalyzeMethod::Pca && p.components == 0 {
        return Err("components must be positive".into());
    }
    SvccaConfig {
        variance_fraction: p.variance_fraction,
        epsilon: p.epsilon,
    }
    .validate()
    .map_err(|e| e.to_string())
}

fn check_roles(
    what: &str,
    given: &BTreeMap<String, String>,
    required: &[&str],
    optional: &[&str],
) -> std::result::Result<(), String> {
    if let Some(role) = required.iter().find(|r| !given.contains_key(**r)) {
        return Err(format!("missing {what} `{role}`"));
    }
    if let Some(role) = given.iter().find(|(_, p)| p.is_empty()).map(|(r, _)| r) {
        return Err(format!("empty path for {what} `{role}`"));
    }
    if let Some(role) = given
        .keys()
        .find(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
    {
        return Err(format!("unknown {what} `{role}`"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub kind: StepKind,
    pub params: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Role to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Step-specific counts and metrics.
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub kind: StepKind,
    pub error_kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit_version: String,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<StepFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

/// Validates `m` and runs its steps in order, resolving paths against
/// `base`. Validation errors are returned before anything is written; a
/// failing step stops the run, keeps earlier outputs and is recorded in the
/// report.
pub fn run_manifest(m: &Manifest, base: &Path) -> Result<RunReport> {
    let plan = m.validate(base)?;
    let mut report = RunReport {
        toolkit_version: TOOLKIT_VERSION.to_owned(),
        seed: m.seed,
        steps: Vec::with_capacity(plan.len()),
        failure: None,
        warnings: Vec::new(),
    };
    if let Some(v) = m
        .toolkit_version
        .as_deref()
        .filter(|v| *v != TOOLKIT_VERSION)
    {
        report.warnings.push(format!(
            "manifest written for toolkit {v}, running {TOOLKIT_VERSION}"
        ));
    }
    for step in &plan {
        match steps::execute(step, base) {
            Ok(r) => report.steps.push(r),
            Err(e) => {
                report.failure = Some(StepFailure {
                    step: step.index,
                    kind: step.kind,
                    error_kind: e.kind().to_owned(),
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(report)
}
