//! Acceptance suite. Every criterion prints one PASS or FAIL line; the
//! process exits nonzero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xforge::codeswitch::{
    codeswitch_dataset, codeswitch_dataset_with, substitute_tokens, BilingualDictionary, Choice,
    Scope,
};
use xforge::corpus::{
    parse_dataset, serialize_dataset, tokenize, Answer, Article, Paragraph, QaEntry, RcDataset,
    TokenizerPolicy,
};
use xforge::metrics::{anova_oneway, evaluate, evaluate_with, FStatistic, LangClass};
use xforge::permute::{apply_permutation, build_permutation, build_vocab};
use xforge::pipeline::{run_manifest, Manifest, RunReport, StepKind, StepSpec};
use xforge::recovery::{
    best_span_search_with_hint, locate_answer, recover_dataset, Located, RecoveryMode,
    RecoveryPolicy, TranslationTriple,
};
use xforge::repr::{
    procrustes_align_matrix, store_representations, svcca_matrix, ReprMatrix, RowMeta, SvccaConfig,
};
use xforge::typology::{
    parse_conllu, relinearize_forms, relinearize_sentence, DepSentence, DepToken, OrderPattern,
};
use xforge::Execution;

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    ensure!(elapsed < limit, "took {elapsed:?}, limit {limit:?}");
    Ok(())
}

fn threshold_rule() -> Outcome {
    let started = Instant::now();
    let policy = RecoveryPolicy::default();
    for (m, t) in [(1, 0), (2, 1), (11, 10), (100, 10)] {
        ensure!(
            policy.threshold(m) == t,
            "T({m}) = {}, expected {t}",
            policy.threshold(m)
        );
    }
    let accepted = |ctx: &str, ans: &str| {
        matches!(
            locate_answer(ctx, ans, &policy, 0),
            Ok(Located::Accepted(_))
        )
    };
    ensure!(accepted("a cat", "c"), "exact single character rejected");
    ensure!(
        !accepted("a cat", "x"),
        "single character accepted at distance 1"
    );
    ensure!(
        accepted("a cat", "ca"),
        "length 2 answer at distance 0 rejected"
    );
    ensure!(
        accepted("a cot", "ca"),
        "length 2 answer at distance 1 rejected"
    );
    within(started.elapsed(), Duration::from_secs(1))
}

// Exhaustive argmin over every non-empty substring, with one Levenshtein
// table per start position.
fn oracle_span(ctx: &[char], ans: &[char], hint: usize) -> (usize, usize, usize) {
    let n = ctx.len();
    let m = ans.len();
    let mut best = None::<(usize, usize, usize, usize, usize)>;
    for s in 0..n {
        let mut prev: Vec<usize> = (0..=m).collect();
        for e in s + 1..=n {
            let mut cur = vec![e - s; m + 1];
            for j in 1..=m {
                let sub = prev[j - 1] + usize::from(ctx[e - 1] != ans[j - 1]);
                cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            }
            let key = (cur[m], e - s, s.abs_diff(hint), s, e);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
            prev = cur;
        }
    }
    let (dist, _, _, s, e) = best.unwrap();
    (s, e, dist)
}

fn span_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let alphabet: Vec<char> = "abcab 熱能".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..500 {
        let n = rng.random_range(1..=60);
        let m = rng.random_range(1..=12);
        let ctx: Vec<char> = (0..n)
            .map(|_| *alphabet.choose(&mut rng).unwrap())
            .collect();
        let ans: Vec<char> = if rng.random_bool(0.5) && m <= n {
            let s = rng.random_range(0..=n - m);
            let mut a = ctx[s..s + m].to_vec();
            let i = rng.random_range(0..m);
            a[i] = *alphabet.choose(&mut rng).unwrap();
            a
        } else {
            (0..m)
                .map(|_| *alphabet.choose(&mut rng).unwrap())
                .collect()
        };
        let hint = rng.random_range(0..=n);
        let context: String = ctx.iter().collect();
        let answer: String = ans.iter().collect();
        let got = best_span_search_with_hint(&context, &answer, hint).map_err(|e| e.to_string())?;
        let expected = oracle_span(&ctx, &ans, hint);
        ensure!(
            (got.start, got.end, got.distance) == expected,
            "case {case}: {context:?} / {answer:?} hint {hint}: got {:?}, oracle {expected:?}",
            (got.start, got.end, got.distance)
        );
        let text: String = ctx[got.start..got.end].iter().collect();
        ensure!(
            got.matched_text == text,
            "case {case}: matched text disagrees with offsets"
        );
    }
    within(started.elapsed(), Duration::from_secs(30))
}

// At least five characters, so two deletions still leave m >= 3.
const WORDS: &[&str] = &[
    "energy",
    "bodies",
    "system",
    "entropy",
    "state",
    "pressure",
    "volume",
    "temperature",
    "cycle",
    "engine",
    "piston",
    "vapour",
];

fn perturb(answer: &str, edits: usize, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = answer.chars().collect();
    for _ in 0..edits {
        let c = *['q', 'z', 'x', 'e'].choose(rng).unwrap();
        match rng.random_range(0..3) {
            0 => {
                let i = rng.random_range(0..chars.len());
                chars[i] = c;
            }
            1 => chars.insert(rng.random_range(0..=chars.len()), c),
            _ if chars.len() > 1 => {
                chars.remove(rng.random_range(0..chars.len()));
            }
            _ => chars.push(c),
        }
    }
    chars.into_iter().collect()
}

// Source dataset plus translated triples whose answers are built by
// `translate` from each gold answer.
fn synthetic_pair(
    count: usize,
    seed: u64,
    mut translate: impl FnMut(&str, &mut ChaCha8Rng) -> String,
) -> (RcDataset, Vec<TranslationTriple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::new();
    let mut triples = Vec::new();
    for i in 0..count {
        let tokens: Vec<&str> = (0..12).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
        let context = tokens.join(" ");
        let at = rng.random_range(0..tokens.len());
        let take = rng.random_range(1..=2).min(tokens.len() - at);
        let answer = tokens[at..at + take].join(" ");
        let start = tokens[..at].iter().map(|t| t.chars().count() + 1).sum();
        let id = format!("s{i}");
        triples.push(TranslationTriple {
            id: id.clone(),
            context: context.clone(),
            question: "which?".into(),
            answer: translate(&answer, &mut rng),
            src_lang: "en".into(),
            tgt_lang: "xx".into(),
        });
        let qa = QaEntry::new(
            id,
            "which?",
            vec![Answer {
                text: answer,
                answer_start: start,
            }],
        );
        articles.push(Article {
            title: format!("t{i}"),
            paragraphs: vec![Paragraph {
                context,
                qas: vec![qa],
            }],
        });
    }
    (
        RcDataset {
            version: "1.1".into(),
            articles,
        },
        triples,
    )
}

fn synthetic_recovery_rate() -> Outcome {
    let (source, triples) = synthetic_pair(300, 7, |a, rng| {
        let edits = rng.random_range(0..=2);
        perturb(a, edits, rng)
    });
    ensure!(
        triples.iter().all(|t| t.answer.chars().count() >= 3),
        "fixture produced an answer shorter than 3"
    );
    for mode in [RecoveryMode::Train, RecoveryMode::Test] {
        let (_, report) = recover_dataset(
            &source,
            &triples,
            &RecoveryPolicy::new(mode),
            Execution::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            report.rate() == 1.0,
            "{mode}: ≤2 edits recovered {}/{}",
            report.recovered,
            report.total
        );
    }

    // Every character replaced by one absent from the contexts, plus five
    // insertions: m + 5 edits from the original answer.
    let (source, triples) = synthetic_pair(300, 8, |a, _| "Ж".repeat(a.chars().count() + 5));
    let (out, train) = recover_dataset(
        &source,
        &triples,
        &RecoveryPolicy::new(RecoveryMode::Train),
        Execution::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        train.recovered == 0 && train.dropped == 300,
        "train mode: {train:?}"
    );
    ensure!(out.qa_count() == 0, "dropped examples were kept");
    let (out, test) = recover_dataset(
        &source,
        &triples,
        &RecoveryPolicy::new(RecoveryMode::Test),
        Execution::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        test.recovered == 0 && test.noise == 300,
        "test mode: {test:?}"
    );
    ensure!(
        out.qas().all(|q| q.noise_flag),
        "kept examples are not noise-flagged"
    );
    Ok(())
}

fn fixture_dataset() -> Result<(Vec<u8>, RcDataset), String> {
    let bytes = fs::read(fixtures().join("squad_small.json")).map_err(|e| e.to_string())?;
    let d = parse_dataset(&bytes).map_err(|e| e.to_string())?;
    Ok((bytes, d))
}

fn clear_lineage(mut d: RcDataset) -> RcDataset {
    for a in &mut d.articles {
        for p in &mut a.paragraphs {
            for q in &mut p.qas {
                q.lineage.clear();
            }
        }
    }
    d
}

fn permutation_round_trip() -> Outcome {
    let (_, d) = fixture_dataset()?;
    let policy = TokenizerPolicy::Mixed;
    let vocab = build_vocab(&d, policy);
    let expected = serialize_dataset(&d);
    for seed in 0..100 {
        let table = build_permutation(&vocab, seed, true, policy).map_err(|e| e.to_string())?;
        let fixed = table.pairs().filter(|(a, b)| a == b).count();
        ensure!(fixed == 0, "seed {seed}: {fixed} fixed points");
        ensure!(
            table.fixed_points() == 0,
            "seed {seed}: table reports fixed points"
        );
        let there = apply_permutation(&d, &table).map_err(|e| e.to_string())?;
        let back = apply_permutation(&there, &table.inverse()).map_err(|e| e.to_string())?;
        ensure!(
            serialize_dataset(&clear_lineage(back)) == expected,
            "seed {seed}: round trip differs"
        );
    }
    Ok(())
}

fn codeswitch_exactness() -> Outcome {
    let context = "the cat sat on the warm red mat";
    let d = RcDataset {
        version: "1.1".into(),
        articles: vec![Article {
            title: "cs".into(),
            paragraphs: vec![Paragraph {
                context: context.into(),
                qas: vec![QaEntry::new(
                    "q",
                    "where",
                    vec![Answer {
                        text: "red mat".into(),
                        answer_start: 24,
                    }],
                )],
            }],
        }],
    };
    let mut dict = BilingualDictionary::new("en", "es");
    dict.insert("cat", "gato");
    dict.insert("warm", "caliente");
    dict.insert("mat", "alfombra");
    let (out, report) = codeswitch_dataset(
        &d,
        &dict,
        Scope::Context,
        Choice::First,
        TokenizerPolicy::Mixed,
    );
    ensure!(
        report.total_word_tokens == 8,
        "counted {} word tokens",
        report.total_word_tokens
    );
    ensure!(report.ratio == 0.375, "ratio {}", report.ratio);
    let p = &out.articles[0].paragraphs[0];
    ensure!(
        p.context == "the gato sat on the caliente red alfombra",
        "context {:?}",
        p.context
    );
    ensure!(
        p.qas[0].answers[0].text == "red alfombra",
        "answer {:?}",
        p.qas[0].answers[0].text
    );

    let vocab = [
        "cat", "Dog", "sun", "moon", "熱", "能量", "run", "fast", "red", "blue", ",", ".",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let len = rng.random_range(0..20);
        let text = (0..len)
            .map(|_| *vocab.choose(&mut rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ");
        let mut dict = BilingualDictionary::new("en", "xx");
        let mut known: HashMap<String, Vec<String>> = HashMap::new();
        for w in vocab {
            if !rng.random_bool(0.4) {
                continue;
            }
            let target = format!("T{}", rng.random_range(0..3));
            dict.insert(w, &target);
            known.entry(w.to_lowercase()).or_default().push(target);
        }
        let span = tokenize(&text, TokenizerPolicy::Mixed);
        let seed = rng.random();
        let sub = substitute_tokens(&span, &dict, Choice::Seeded(seed));
        ensure!(
            sub.span.tokens.len() == span.tokens.len(),
            "case {case}: token count changed"
        );
        for (i, (before, after)) in span.tokens.iter().zip(&sub.span.tokens).enumerate() {
            let entry = known
                .get(&before.text.to_lowercase())
                .filter(|_| before.is_word());
            match entry {
                Some(targets) => ensure!(
                    sub.flags[i] && targets.contains(&after.text),
                    "case {case}: dictionary token {:?} became {:?}",
                    before.text,
                    after.text
                ),
                None => ensure!(
                    !sub.flags[i] && after.text == before.text,
                    "case {case}: non-dictionary token {:?} changed to {:?}",
                    before.text,
                    after.text
                ),
            }
        }
    }
    Ok(())
}

const RELATIONS: &[&str] = &[
    "nsubj", "obj", "iobj", "amod", "det", "obl", "advmod", "nmod", "punct",
];

// Random tree grown by attaching each node to an earlier one, then laid out
// projectively by placing every node's children on random sides.
fn random_projective_tree(rng: &mut ChaCha8Rng) -> DepSentence {
    let n = rng.random_range(1..=15);
    let parent: Vec<Option<usize>> = (0..n)
        .map(|i| (i > 0).then(|| rng.random_range(0..i)))
        .collect();
    let mut children = vec![Vec::new(); n];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    fn layout(v: usize, children: &[Vec<usize>], rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        let mut kids = children[v].clone();
        kids.shuffle(rng);
        let split = rng.random_range(0..=kids.len());
        for &c in &kids[..split] {
            layout(c, children, rng, out);
        }
        out.push(v);
        for &c in &kids[split..] {
            layout(c, children, rng, out);
        }
    }
    let mut order = Vec::with_capacity(n);
    layout(0, &children, rng, &mut order);
    let mut position = vec![0; n];
    for (pos, &v) in order.iter().enumerate() {
        position[v] = pos + 1;
    }
    let tokens = order
        .iter()
        .enumerate()
        .map(|(pos, &v)| DepToken {
            index: pos + 1,
            form: format!("w{v}"),
            head: parent[v].map_or(0, |p| position[p]),
            deprel: if parent[v].is_none() {
                "root".into()
            } else {
                (*RELATIONS.choose(rng).unwrap()).into()
            },
        })
        .collect();
    DepSentence::new(tokens, 0).expect("generated tree is valid")
}

fn typology_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let s = random_projective_tree(&mut rng);
        let n = s.len();
        let mut subtree: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for t in &s.tokens {
            let mut cur = t.index;
            loop {
                subtree[cur].push(t.index);
                cur = s.tokens[cur - 1].head;
                if cur == 0 {
                    break;
                }
            }
        }
        for pattern in OrderPattern::ALL {
            let order = relinearize_sentence(&s, pattern);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            ensure!(
                sorted == (1..=n).collect::<Vec<_>>(),
                "case {case} {pattern}: not a permutation: {order:?}"
            );
            let mut forms = relinearize_forms(&s, pattern);
            let mut original: Vec<String> = s.tokens.iter().map(|t| t.form.clone()).collect();
            forms.sort();
            original.sort();
            ensure!(
                forms == original,
                "case {case} {pattern}: token multiset changed"
            );
            let mut at = vec![0; n + 1];
            for (pos, &i) in order.iter().enumerate() {
                at[i] = pos;
            }
            for (head, members) in subtree.iter().enumerate().skip(1) {
                let lo = members.iter().map(|&i| at[i]).min().unwrap();
                let hi = members.iter().map(|&i| at[i]).max().unwrap();
                ensure!(
                    hi - lo + 1 == members.len(),
                    "case {case} {pattern}: subtree of {head} is not contiguous in {order:?}"
                );
            }
        }
    }
    let conllu = fs::read_to_string(fixtures().join("john.conllu")).map_err(|e| e.to_string())?;
    let parses = parse_conllu(&conllu).map_err(|e| e.to_string())?;
    let sov = relinearize_forms(&parses[0], OrderPattern::Sov).join(" ");
    ensure!(sov.starts_with("John apples eats"), "SOV gave {sov:?}");
    Ok(())
}

fn metrics_parity() -> Outcome {
    let qa = |id: &str, golds: &[&str], noise: bool| {
        let mut q = QaEntry::new(
            id,
            "?",
            golds
                .iter()
                .map(|g| Answer {
                    text: g.to_string(),
                    answer_start: 0,
                })
                .collect(),
        );
        q.noise_flag = noise;
        q
    };
    let qas = vec![
        qa("e1", &["The Cat sat"], false),
        qa("e2", &["熱力學", "熱學"], false),
        qa("e3", &["能量守恆"], false),
        qa("e4", &["the 差異 in energy"], false),
        qa("e5", &["polonium"], true),
        qa("e6", &["1898"], false),
        qa("e7", &["red apple", "apple pie"], false),
    ];
    let d = RcDataset {
        version: "1.1".into(),
        articles: vec![Article {
            title: "m".into(),
            paragraphs: vec![Paragraph {
                context: "x".into(),
                qas,
            }],
        }],
    };
    let predictions: BTreeMap<String, String> = [
        ("e1", "cat sat"),
        ("e2", "熱學"),
        ("e3", "能量"),
        ("e4", "差異 energy"),
        ("e5", "radium"),
        ("e7", "apple pie recipe"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect();
    let report = evaluate(&predictions, &d, LangClass::Mixed);
    // Per example (EM, F1):
    // e1 (1, 1); e2 (1, 1) via the second gold; e3 p = 1, r = 1/2; e4 the
    // gold normalizes to 差 異 in energy, p = 1, r = 3/4; e5 noise, scored 0;
    // e6 missing; e7 best gold apple pie, p = 2/3, r = 1.
    let f1s = [1.0, 1.0, 2.0 / 3.0, 6.0 / 7.0, 0.0, 0.0, 0.8];
    let ems = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let expected_f1 = 100.0 * f1s.iter().sum::<f64>() / 7.0;
    let expected_em = 100.0 * ems.iter().sum::<f64>() / 7.0;
    ensure!(
        (report.em - expected_em).abs() < 1e-9,
        "EM {} vs {expected_em}",
        report.em
    );
    ensure!(
        (report.f1 - expected_f1).abs() < 1e-9,
        "F1 {} vs {expected_f1}",
        report.f1
    );
    for (e, (&f1, &em)) in report.per_example.iter().zip(f1s.iter().zip(&ems)) {
        ensure!(
            (e.f1 - f1).abs() < 1e-9 && e.em == em,
            "{}: ({}, {}) vs ({em}, {f1})",
            e.id,
            e.em,
            e.f1
        );
    }
    ensure!(report.evaluated == 7, "evaluated {}", report.evaluated);
    ensure!(
        report.noise_count == 1,
        "noise count {}",
        report.noise_count
    );
    ensure!(report.missing == ["e6"], "missing {:?}", report.missing);
    Ok(())
}

fn f_of(groups: &[Vec<f64>]) -> Result<f64, String> {
    match anova_oneway(groups).map_err(|e| e.to_string())?.f_statistic {
        FStatistic::Finite(f) => Ok(f),
        other => Err(format!("non-finite F: {other:?}")),
    }
}

fn anova() -> Outcome {
    let f = f_of(&[vec![1.0, 2.0], vec![3.0, 4.0]])?;
    ensure!(f == 8.0, "F = {f}");
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let k = rng.random_range(2..6);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|g| {
                (0..rng.random_range(2..9))
                    .map(|_| g as f64 * 0.3 + rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let base = f_of(&groups)?;
        // Direct textbook computation as an independent reference.
        let all: Vec<f64> = groups.concat();
        let grand = all.iter().sum::<f64>() / all.len() as f64;
        let (mut ssb, mut ssw) = (0.0, 0.0);
        for g in &groups {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            ssb += g.len() as f64 * (m - grand).powi(2);
            ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        }
        let direct = (ssb / (k - 1) as f64) / (ssw / (all.len() - k) as f64);
        ensure!(
            ((base - direct) / direct).abs() < 1e-9,
            "case {case}: F {base} vs direct {direct}"
        );
        let shift: f64 = rng.random_range(-100.0..100.0);
        let scale: f64 =
            rng.random_range(0.1..50.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let moved: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|v| v * scale + shift).collect())
            .collect();
        let f = f_of(&moved)?;
        ensure!(
            ((f - base) / base).abs() < 1e-9,
            "case {case}: F {base} became {f}"
        );
    }
    Ok(())
}

fn random(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

// Classical CCA: squared canonical correlations are the eigenvalues of
// L⁻¹ Σxy Σyy⁻¹ Σyx L⁻ᵀ with Σxx = L Lᵀ.
fn cca_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let (xc, yc) = (center(x), center(y));
    let sxx = xc.transpose() * &xc;
    let syy = yc.transpose() * &yc;
    let sxy = xc.transpose() * &yc;
    let l = sxx.cholesky().expect("full-rank x").l();
    let l_inv = l.try_inverse().unwrap();
    let m = &l_inv * &sxy * syy.try_inverse().unwrap() * sxy.transpose() * l_inv.transpose();
    let mut rho: Vec<f64> = m
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    rho.truncate(x.ncols().min(y.ncols()));
    rho
}

fn svcca() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(50, 8, &mut rng);
    let r = svcca_matrix(&x, &x, SvccaConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        (r.mean_correlation - 1.0).abs() <= 1e-9,
        "self mean {}",
        r.mean_correlation
    );

    for case in 0..10 {
        let x = random(50, 8, &mut rng);
        let y = random(50, 6, &mut rng);
        let q = random(6, 6, &mut rng).qr().q();
        let a = svcca_matrix(&x, &y, SvccaConfig::default()).map_err(|e| e.to_string())?;
        let b = svcca_matrix(&x, &(&y * q), SvccaConfig::default()).map_err(|e| e.to_string())?;
        ensure!(
            a.correlations.len() == b.correlations.len(),
            "case {case}: kept dims changed"
        );
        for (p, q) in a.correlations.iter().zip(&b.correlations) {
            ensure!(
                (p - q).abs() <= 1e-6,
                "case {case}: orthogonal transform moved {p} to {q}"
            );
        }
    }

    let full = SvccaConfig {
        variance_fraction: 1.0,
        epsilon: 0.0,
    };
    for case in 0..20 {
        let x = random(50, 8, &mut rng);
        let y = random(50, 6, &mut rng);
        let got = svcca_matrix(&x, &y, full).map_err(|e| e.to_string())?;
        let expected = cca_oracle(&x, &y);
        ensure!(
            got.correlations.len() == expected.len(),
            "case {case}: {} correlations",
            got.correlations.len()
        );
        for (p, q) in got.correlations.iter().zip(&expected) {
            ensure!((p - q).abs() <= 1e-6, "case {case}: {p} vs oracle {q}");
        }
    }
    within(started.elapsed(), Duration::from_secs(10))
}

fn procrustes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..20 {
        let d = rng.random_range(2..10);
        let x = random(40, d, &mut rng);
        let q = random(d, d, &mut rng).qr().q();
        let r = procrustes_align_matrix(&x, &(&x * &q)).map_err(|e| e.to_string())?;
        ensure!(r.residual < 1e-8, "case {case}: residual {}", r.residual);
        ensure!(
            r.map.orthogonality_error() < 1e-8,
            "case {case}: ‖WᵀW − I‖ = {}",
            r.map.orthogonality_error()
        );
        ensure!(
            (&r.map.matrix - &q).norm() < 1e-8,
            "case {case}: planted map not recovered"
        );
    }
    Ok(())
}

fn write_repr(dir: &Path, name: &str, rows: &DMatrix<f64>) {
    let meta = (0..rows.nrows())
        .map(|i| RowMeta {
            example_id: format!("e{}", i / 4),
            token_index: i % 4,
            token_text: format!("t{i}"),
            in_answer_span: i % 4 < 2,
            language: name.into(),
        })
        .collect();
    let values = rows.transpose().iter().map(|&v| v as f32).collect();
    let m = ReprMatrix::new(rows.nrows(), rows.ncols(), values, meta).unwrap();
    let (bin, tsv) = store_representations(&m).unwrap();
    fs::write(dir.join(format!("{name}.repm")), bin).unwrap();
    fs::write(dir.join(format!("{name}.tsv")), tsv).unwrap();
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixtures()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    write_repr(dir.path(), "en", &random(24, 5, &mut rng));
    write_repr(dir.path(), "zh", &random(24, 5, &mut rng));
    dir
}

fn full_manifest(seed: u64) -> Manifest {
    Manifest::new(
        seed,
        vec![
            StepSpec::new(StepKind::Recover)
                .param("mode", "test")
                .input("dataset", "squad_small.json")
                .input("triples", "triples.tsv")
                .output("dataset", "out/recovered.json"),
            StepSpec::new(StepKind::Permute)
                .input("dataset", "squad_small.json")
                .output("dataset", "out/permuted.json")
                .output("table", "out/table.tsv"),
            StepSpec::new(StepKind::Codeswitch)
                .param("choice", "seeded")
                .input("dataset", "out/permuted.json")
                .input("dict", "dict.txt")
                .output("dataset", "out/switched.json"),
            StepSpec::new(StepKind::Reorder)
                .param("pattern", "vso")
                .input("dataset", "john.json")
                .input("parses", "john.conllu")
                .output("dataset", "out/vso.json"),
            StepSpec::new(StepKind::Downsample)
                .param("target", 4)
                .input("dataset", "out/switched.json")
                .output("dataset", "out/small.json"),
            StepSpec::new(StepKind::Eval)
                .input("dataset", "out/small.json")
                .input("predictions", "predictions.json")
                .output("report", "out/eval.json"),
            StepSpec::new(StepKind::Analyze)
                .param("method", "cosine")
                .input("x", "en.repm")
                .input("y", "zh.repm")
                .output("report", "out/cosine.tsv"),
            StepSpec::new(StepKind::Analyze)
                .param("method", "pca")
                .input("x", "en.repm")
                .output("report", "out/pca.tsv"),
            StepSpec::new(StepKind::Analyze)
                .param("method", "svcca")
                .input("x", "en.repm")
                .input("y", "zh.repm")
                .output("report", "out/svcca.tsv"),
            StepSpec::new(StepKind::Analyze)
                .param("method", "procrustes")
                .input("x", "en.repm")
                .input("y", "zh.repm")
                .output("report", "out/w.tsv"),
        ],
    )
}

fn run_in(dir: &Path, m: &Manifest) -> Result<(RunReport, BTreeMap<String, Vec<u8>>), String> {
    let report = run_manifest(m, dir).map_err(|e| e.to_string())?;
    ensure!(report.succeeded(), "run failed: {:?}", report.failure);
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir.join("out")).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok((report, files))
}

fn determinism() -> Outcome {
    for seed in [0, 42] {
        let m = full_manifest(seed);
        let (a, b) = (workspace(), workspace());
        let (ra, fa) = run_in(a.path(), &m)?;
        let (rb, fb) = run_in(b.path(), &m)?;
        ensure!(
            ra.to_json() == rb.to_json(),
            "seed {seed}: run reports differ"
        );
        ensure!(fa == fb, "seed {seed}: output files differ");
        ensure!(fa.len() == 11, "seed {seed}: {} output files", fa.len());
        let (rerun, fc) = run_in(a.path(), &m)?;
        ensure!(
            rerun.to_json() == ra.to_json() && fc == fa,
            "seed {seed}: rerun in place differs"
        );
        let digests: Vec<_> = ra.steps.iter().map(|s| &s.outputs).collect();
        let again: Vec<_> = rb.steps.iter().map(|s| &s.outputs).collect();
        ensure!(digests == again, "seed {seed}: digests differ");
    }
    let (r0, f0) = run_in(workspace().path(), &full_manifest(0))?;
    let (r1, f1) = run_in(workspace().path(), &full_manifest(1))?;
    ensure!(
        f0["permuted.json"] != f1["permuted.json"] && r0.steps[1].outputs != r1.steps[1].outputs,
        "different seeds gave the same permutation"
    );

    // Scheduling never changes batch results.
    let (_, d) = fixture_dataset()?;
    let triples =
        xforge::recovery::parse_triples(&fs::read(fixtures().join("triples.tsv")).unwrap())
            .map_err(|e| e.to_string())?;
    let policy = RecoveryPolicy::new(RecoveryMode::Test);
    let seq =
        recover_dataset(&d, &triples, &policy, Execution::Sequential).map_err(|e| e.to_string())?;
    let par =
        recover_dataset(&d, &triples, &policy, Execution::Parallel).map_err(|e| e.to_string())?;
    ensure!(seq == par, "recovery depends on execution strategy");
    let mut dict = BilingualDictionary::new("en", "xx");
    dict.insert("energy", "能量");
    dict.insert("bodies", "物體");
    let cs = |exec| {
        codeswitch_dataset_with(
            &d,
            &dict,
            Scope::Both,
            Choice::Seeded(3),
            TokenizerPolicy::Mixed,
            exec,
        )
    };
    ensure!(
        cs(Execution::Sequential) == cs(Execution::Parallel),
        "code-switching depends on execution strategy"
    );
    let preds: BTreeMap<String, String> = d
        .qas()
        .map(|q| (q.id.clone(), q.answers[0].text.clone()))
        .collect();
    let ev = |exec| evaluate_with(&preds, &d, LangClass::Mixed, exec);
    ensure!(
        ev(Execution::Sequential) == ev(Execution::Parallel),
        "evaluation depends on execution strategy"
    );
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("threshold rule", threshold_rule),
        ("span-recovery oracle equivalence", span_oracle_equivalence),
        ("synthetic recovery rate", synthetic_recovery_rate),
        ("permutation round trip", permutation_round_trip),
        ("code-switch exactness", codeswitch_exactness),
        ("typology properties", typology_properties),
        ("metrics parity", metrics_parity),
        ("anova", anova),
        ("svcca", svcca),
        ("procrustes", procrustes),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("PASS {name} ({ms} ms)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({ms} ms): {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
