use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use xforge::pipeline::{run_manifest, Manifest, RunReport, StepKind, StepSpec};
use xforge::Error;

/// Forge artificial cross-lingual QA corpora and analyze representations.
#[derive(Parser)]
#[command(name = "forge", version)]
struct Cli {
    /// Seed for seeded steps; overrides the manifest seed under `run`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the run report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,

    /// Save the one-step manifest a step command runs, for replay with `run`.
    #[arg(long, global = true, value_name = "PATH")]
    save_manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every step of a JSON manifest in order. Paths resolve against the
    /// manifest's directory.
    Run { manifest: PathBuf },
    /// Locate translated answers in translated contexts.
    Recover {
        #[command(flatten)]
        io: DatasetIo,
        /// Triples TSV with translated questions and answers.
        #[arg(long)]
        triples: String,
        /// `test` keeps fuzzy matches as golds; `train` drops them.
        #[arg(long)]
        mode: Option<String>,
        /// Maximum edit distance for a fuzzy match.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Apply a seeded vocabulary permutation.
    Permute {
        #[command(flatten)]
        io: DatasetIo,
        /// Tokenizer policy: space, cjk or mixed.
        #[arg(long)]
        policy: Option<String>,
        /// Allow tokens to map to themselves.
        #[arg(long)]
        allow_fixed_points: bool,
        /// Reuse a saved permutation table instead of building one.
        #[arg(long)]
        table: Option<String>,
        /// Apply the inverse of the table.
        #[arg(long)]
        inverse: bool,
        /// Save the table that was applied.
        #[arg(long)]
        table_out: Option<String>,
    },
    /// Substitute words through a bilingual dictionary.
    Codeswitch {
        #[command(flatten)]
        io: DatasetIo,
        /// Dictionary with one `source target` pair per line.
        #[arg(long)]
        dict: String,
        /// context, question or both.
        #[arg(long)]
        scope: Option<String>,
        /// How to pick among several translations.
        #[arg(long, value_enum)]
        choice: Option<ChoiceArg>,
        /// Tokenizer policy: space, cjk or mixed.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        source_lang: Option<String>,
        #[arg(long)]
        target_lang: Option<String>,
    },
    /// Re-linearize sentences into another word order.
    Reorder {
        #[command(flatten)]
        io: DatasetIo,
        /// CoNLL-U dependency parses of contexts and questions.
        #[arg(long)]
        parses: String,
        /// Target order, e.g. sov or vso.
        #[arg(long)]
        pattern: String,
        /// Recovery mode for answers that no longer match: train or test.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Keep a seeded random subset of questions.
    Downsample {
        #[command(flatten)]
        io: DatasetIo,
        /// Number of questions to keep.
        #[arg(long)]
        target: usize,
    },
    /// Score predictions with EM and F1.
    Eval {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        predictions: String,
        /// Language class used for normalization: space, cjk or mixed.
        #[arg(long)]
        lang: Option<String>,
        /// Write the full metric document here.
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare exported token representations.
    Analyze {
        #[arg(value_enum)]
        method: MethodArg,
        /// Representation matrix (REPM).
        #[arg(long)]
        x: String,
        /// Metadata TSV for `x`; defaults to the sidecar path.
        #[arg(long)]
        x_meta: Option<String>,
        /// Second representation matrix; required except for pca.
        #[arg(long)]
        y: Option<String>,
        /// Metadata TSV for `y`; defaults to the sidecar path.
        #[arg(long)]
        y_meta: Option<String>,
        /// TSV of `x_id`/`y_id` example pairs for cosine.
        #[arg(long)]
        pairing: Option<String>,
        /// Principal components to keep.
        #[arg(long)]
        components: Option<usize>,
        /// SVCCA share of squared singular mass kept per side.
        #[arg(long)]
        variance_fraction: Option<f64>,
        /// SVCCA ridge, relative to each side's largest variance.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Skip the row alignment check for SVCCA and Procrustes.
        #[arg(long)]
        no_alignment_check: bool,
        /// TSV report path.
        #[arg(long)]
        out: String,
    },
}

#[derive(Args)]
struct DatasetIo {
    /// Input dataset (SQuAD JSON).
    #[arg(long)]
    dataset: String,
    /// Output dataset path.
    #[arg(long)]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChoiceArg {
    First,
    Seeded,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cosine,
    Pca,
    Svcca,
    Procrustes,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Cosine => "cosine",
            MethodArg::Pca => "pca",
            MethodArg::Svcca => "svcca",
            MethodArg::Procrustes => "procrustes",
        }
    }
}

fn opt<T: Into<serde_json::Value>>(step: StepSpec, key: &str, value: Option<T>) -> StepSpec {
    match value {
        Some(v) => step.param(key, v.into()),
        None => step,
    }
}

fn opt_input(step: StepSpec, role: &str, path: Option<String>) -> StepSpec {
    match path {
        Some(p) => step.input(role, p),
        None => step,
    }
}

fn dataset_step(kind: StepKind, io: DatasetIo) -> StepSpec {
    StepSpec::new(kind)
        .input("dataset", io.dataset)
        .output("dataset", io.out)
}

fn step_spec(command: Command) -> StepSpec {
    match command {
        Command::Run { .. } => unreachable!("handled separately"),
        Command::Recover {
            io,
            triples,
            mode,
            cap,
        } => {
            let s = dataset_step(StepKind::Recover, io).input("triples", triples);
            opt(opt(s, "mode", mode), "cap", cap)
        }
        Command::Permute {
            io,
            policy,
            allow_fixed_points,
            table,
            inverse,
            table_out,
        } => {
            let mut s = opt(dataset_step(StepKind::Permute, io), "policy", policy);
            if allow_fixed_points {
                s = s.param("derangement", false);
            }
            if inverse {
                s = s.param("inverse", true);
            }
            s = opt_input(s, "table", table);
            match table_out {
                Some(p) => s.output("table", p),
                None => s,
            }
        }
        Command::Codeswitch {
            io,
            dict,
            scope,
            choice,
            policy,
            source_lang,
            target_lang,
        } => {
            let s = dataset_step(StepKind::Codeswitch, io).input("dict", dict);
            let choice = choice.map(|c| match c {
                ChoiceArg::First => "first",
                ChoiceArg::Seeded => "seeded",
            });
            let s = opt(
                opt(opt(s, "scope", scope), "choice", choice),
                "policy",
                policy,
            );
            opt(
                opt(s, "source_lang", source_lang),
                "target_lang",
                target_lang,
            )
        }
        Command::Reorder {
            io,
            parses,
            pattern,
            mode,
            cap,
        } => {
            let s = dataset_step(StepKind::Reorder, io)
                .input("parses", parses)
                .param("pattern", pattern);
            opt(opt(s, "mode", mode), "cap", cap)
        }
        Command::Downsample { io, target } => {
            dataset_step(StepKind::Downsample, io).param("target", target)
        }
        Command::Eval {
            dataset,
            predictions,
            lang,
            out,
        } => {
            let s = StepSpec::new(StepKind::Eval)
                .input("dataset", dataset)
                .input("predictions", predictions);
            let s = opt(s, "lang", lang);
            match out {
                Some(p) => s.output("report", p),
                None => s,
            }
        }
        Command::Analyze {
            method,
            x,
            x_meta,
            y,
            y_meta,
            pairing,
            components,
            variance_fraction,
            epsilon,
            no_alignment_check,
            out,
        } => {
            let mut s = StepSpec::new(StepKind::Analyze)
                .param("method", method.name())
                .input("x", x)
                .output("report", out);
            s = opt_input(s, "x_meta", x_meta);
            s = opt_input(s, "y", y);
            s = opt_input(s, "y_meta", y_meta);
            s = opt_input(s, "pairing", pairing);
            s = opt(s, "components", components);
            s = opt(s, "variance_fraction", variance_fraction);
            s = opt(s, "epsilon", epsilon);
            if no_alignment_check {
                s = s.param("check_alignment", false);
            }
            s
        }
    }
}

enum Failure {
    Setup(Error),
    Step(Box<RunReport>),
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (manifest, base) = match cli.command {
        Command::Run { manifest: path } => {
            let bytes = fs::read(&path)
                .map_err(|e| Failure::Setup(Error::io(format!("reading {}", path.display()), e)))?;
            let mut m = Manifest::from_json(&bytes).map_err(Failure::Setup)?;
            if let Some(seed) = cli.seed {
                m.seed = seed;
            }
            let base = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf();
            (m, base)
        }
        command => {
            let m = Manifest::new(cli.seed.unwrap_or(0), vec![step_spec(command)]);
            (m, PathBuf::from("."))
        }
    };
    if let Some(path) = &cli.save_manifest {
        fs::write(path, manifest.to_json())
            .map_err(|e| Failure::Setup(Error::io(format!("writing {}", path.display()), e)))?;
    }
    let report = run_manifest(&manifest, &base).map_err(Failure::Setup)?;
    let json = report.to_json();
    match &cli.report {
        Some(path) => fs::write(path, &json)
            .map_err(|e| Failure::Setup(Error::io(format!("writing {}", path.display()), e)))?,
        None => print!("{}", String::from_utf8_lossy(&json)),
    }
    if report.succeeded() {
        Ok(())
    } else {
        Err(Failure::Step(Box::new(report)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let error = match execute(cli) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Setup(e)) => json!({
            "status": "error",
            "kind": e.kind(),
            "message": e.to_string(),
        }),
        Err(Failure::Step(report)) => {
            let f = report
                .failure
                .as_ref()
                .expect("failed report has a failure");
            json!({
                "status": "error",
                "kind": f.error_kind,
                "message": f.message,
                "step": f.step,
                "step_kind": f.kind,
            })
        }
    };
    eprintln!("{error}");
    ExitCode::FAILURE
}
