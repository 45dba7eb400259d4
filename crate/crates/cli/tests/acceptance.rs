//! Acceptance checks, one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use astprufer::baselines::{bfs_sequence, sbt_sequence};
use astprufer::corpus::{
    encode_tokens, example_tokens, split_corpus, EncodeConfig, EncodedExample, ExampleTokens,
    Vocabs,
};
use astprufer::metrics::{corpus_bleu, meteor, rouge_l, sentence_bleu_s4};
use astprufer::model::{evaluate, train_from, EncoderMode, ModelConfig, ModelParams};
use astprufer::prufer::{build_encoder_input, context_sequence, decode, encode, LabelEntry};
use astprufer::synth::{
    self, context_signal_corpus, random_tree, toy_corpus, SynthExample, SynthKind,
};
use astprufer::{PruferCode, TokenRole};
use astprufer_testkit::{
    all_ordered_trees, brute_meteor, brute_rouge_l, finite_difference_check, random_tokens,
    reference_sentence_bleu_s4, sample_coordinates,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut exhaustive = 0;
    for n in 2..=7 {
        for tree in all_ordered_trees(n, &["a", "b"]) {
            let code = encode(&tree).map_err(|e| e.to_string())?;
            check(
                decode(&code).as_ref() == Ok(&tree),
                format!("exhaustive n={n} mismatch"),
            )?;
            exhaustive += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let n = rng.gen_range(2..=200);
        let tree = random_tree(&mut rng, n);
        let code = encode(&tree).map_err(|e| e.to_string())?;
        check(
            decode(&code).as_ref() == Ok(&tree),
            format!("random tree {i} mismatch"),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "{exhaustive} exhaustive + 10000 random trees, {secs:.2}s"
    ))
}

fn cayley() -> Outcome {
    let start = Instant::now();
    for (n, expected) in [(4usize, 16usize), (5, 125)] {
        let mut seen = HashSet::new();
        for code_index in 0..n.pow(n as u32 - 2) {
            let mut c = code_index;
            let sequence: Vec<usize> = (0..n - 2)
                .map(|_| {
                    let v = c % n + 1;
                    c /= n;
                    v
                })
                .collect();
            let labels = (1..=n)
                .map(|id| {
                    let internal = id == 1 || sequence.contains(&id);
                    LabelEntry {
                        id,
                        token: format!("t{id}"),
                        role: if internal {
                            TokenRole::Syntactic
                        } else {
                            TokenRole::Lexical
                        },
                    }
                })
                .collect();
            let code = PruferCode {
                n,
                sequence: sequence.clone(),
                labels,
            };
            let tree = decode(&code).map_err(|e| format!("{sequence:?}: {e}"))?;
            let mut edges = tree.edges();
            edges.sort_unstable();
            seen.insert(edges);
            let again = encode(&tree).map_err(|e| e.to_string())?;
            check(
                again.sequence == sequence,
                format!("{sequence:?} re-encodes to {:?}", again.sequence),
            )?;
        }
        check(
            seen.len() == expected,
            format!("n={n}: {} distinct trees", seen.len()),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 1.0, format!("took {secs:.2}s"))?;
    Ok(format!("16 and 125 distinct trees, {secs:.3}s"))
}

fn random_corpus() -> Vec<SynthExample> {
    synth::corpus(SynthKind::Random, 1000, 3)
}

fn length_identities(corpus: &[SynthExample]) -> Outcome {
    for (i, ex) in corpus.iter().enumerate() {
        let t = &ex.tree;
        let n = t.len();
        let prufer = encode(t).map_err(|e| e.to_string())?.sequence.len();
        let input = build_encoder_input(t).map_err(|e| e.to_string())?.len();
        check(
            prufer == n - 2,
            format!("tree {i}: |prufer| = {prufer}, n = {n}"),
        )?;
        check(
            sbt_sequence(t).len() == 3 * n,
            format!("tree {i}: sbt length"),
        )?;
        check(bfs_sequence(t).len() == n, format!("tree {i}: bfs length"))?;
        check(
            input <= 2 * n - 3,
            format!("tree {i}: encoder input {input} > 2n-3"),
        )?;
    }
    Ok(format!("{} trees", corpus.len()))
}

fn degree_laws(corpus: &[SynthExample]) -> Outcome {
    for (i, ex) in corpus.iter().enumerate() {
        let t = &ex.tree;
        let code = encode(t).map_err(|e| e.to_string())?;
        let mut occurrences = vec![0usize; t.len() + 1];
        for &v in &code.sequence {
            occurrences[v] += 1;
        }
        for (v, &count) in occurrences.iter().enumerate().skip(1) {
            check(
                count + 1 == t.degree(v).unwrap(),
                format!("tree {i}: node {v}"),
            )?;
        }
        let ctx = context_sequence(t, &code).map_err(|e| e.to_string())?;
        let mut per_leaf: HashMap<usize, usize> = HashMap::new();
        for &leaf in &ctx.leaf_ids {
            *per_leaf.entry(leaf).or_default() += 1;
        }
        for leaf in t.leaf_ids() {
            let parent = t.parent(leaf).unwrap().expect("leaves are not the root");
            let got = per_leaf.get(&leaf).copied().unwrap_or(0);
            check(
                got + 1 == t.degree(parent).unwrap(),
                format!("tree {i}: leaf {leaf} occurs {got} times"),
            )?;
        }
        // Token-level count: a token's frequency is the sum over the leaves it labels.
        let mut token_counts: HashMap<&str, usize> = HashMap::new();
        for tok in &ctx.tokens {
            *token_counts.entry(tok).or_default() += 1;
        }
        let mut expected: HashMap<&str, usize> = HashMap::new();
        for leaf in t.leaf_ids() {
            let parent = t.parent(leaf).unwrap().unwrap();
            *expected.entry(t.label(leaf)).or_default() += t.degree(parent).unwrap() - 1;
        }
        expected.retain(|_, c| *c > 0);
        check(
            token_counts == expected,
            format!("tree {i}: token frequencies"),
        )?;
    }
    Ok(format!("{} trees", corpus.len()))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet = ["a", "b", "c", "d", "e", "the", "of", "to"];
    let mut worst_bleu: f64 = 0.0;
    for _ in 0..200 {
        let h = random_tokens(&mut rng, 1, 15, &alphabet);
        let r = random_tokens(&mut rng, 1, 15, &alphabet);
        let got = sentence_bleu_s4(&h, &r).map_err(|e| e.to_string())?;
        worst_bleu = worst_bleu.max((got - reference_sentence_bleu_s4(&h, &r)).abs());
    }
    check(
        worst_bleu < 1e-6,
        format!("S-BLEU differs by {worst_bleu:e}"),
    )?;
    let mut worst_other: f64 = 0.0;
    for _ in 0..50 {
        let h = random_tokens(&mut rng, 1, 8, &alphabet);
        let r = random_tokens(&mut rng, 1, 8, &alphabet);
        worst_other = worst_other.max((rouge_l(&h, &r).unwrap() - brute_rouge_l(&h, &r)).abs());
        worst_other = worst_other.max((meteor(&h, &r).unwrap() - brute_meteor(&h, &r)).abs());
    }
    check(
        worst_other < 1e-9,
        format!("ROUGE-L/METEOR differ by {worst_other:e}"),
    )?;
    let refs: Vec<Vec<String>> = (0..30)
        .map(|_| random_tokens(&mut rng, 4, 20, &alphabet))
        .collect();
    let c_bleu = corpus_bleu(&refs, &refs).map_err(|e| e.to_string())?;
    check(
        c_bleu == 100.0,
        format!("corpus BLEU of identical corpora = {c_bleu}"),
    )?;
    Ok(format!(
        "S-BLEU max diff {worst_bleu:.1e}, ROUGE-L/METEOR max diff {worst_other:.1e}, C-BLEU 100"
    ))
}

fn prepare(examples: &[SynthExample], cap: usize) -> (Vec<ExampleTokens>, Vocabs) {
    let config = EncodeConfig::default();
    let tokens: Vec<ExampleTokens> = examples
        .iter()
        .map(|e| example_tokens(&e.tree, &e.comment, &config).expect("synthetic trees encode"))
        .collect();
    let vocabs = Vocabs::build(&tokens, cap);
    (tokens, vocabs)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let examples = context_signal_corpus(4, 21);
    let (tokens, vocabs) = prepare(&examples, 20);
    let mut config = ModelConfig::desk(
        vocabs.prufer.len(),
        vocabs.context.len(),
        vocabs.comment.len(),
    );
    config.hidden_dim = 8;
    config.embed_dim = 8;
    config.init_scale = 0.3;
    let params = ModelParams::init(&config);
    let example = encode_tokens(&tokens[0], &vocabs, examples[0].tree.len());
    let coords = sample_coordinates(&mut ChaCha8Rng::seed_from_u64(6), &params, &example, 200);
    let result = finite_difference_check(&params, EncoderMode::Dual, &example, &coords, 1e-4, 1e-6);
    let secs = start.elapsed().as_secs_f64();
    check(
        result.coordinates == 200,
        format!("{} coordinates sampled", result.coordinates),
    )?;
    check(
        result.max_rel_error < 1e-4,
        format!("max relative error {:e}", result.max_rel_error),
    )?;
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "max relative error {:.2e} over 200 coordinates, {secs:.2}s",
        result.max_rel_error
    ))
}

/// Epoch at which teacher-forced accuracy first reached 0.95 (checked every 10 epochs), and the final params.
fn overfit_once() -> Result<(Option<usize>, f64, Vec<f64>), String> {
    let examples = toy_corpus(50, 7);
    let (tokens, vocabs) = prepare(&examples, 30000);
    let data: Vec<EncodedExample> = tokens
        .iter()
        .zip(&examples)
        .map(|(t, e)| encode_tokens(t, &vocabs, e.tree.len()))
        .collect();
    let mut config = ModelConfig::desk(
        vocabs.prufer.len(),
        vocabs.context.len(),
        vocabs.comment.len(),
    );
    config.epochs = 500;
    config.seed = 7;
    let (mut reached, mut accuracy) = (None, 0.0);
    let outcome = train_from(ModelParams::init(&config), &data, &config, |log, params| {
        if log.epoch % 10 == 0 {
            accuracy = evaluate(params, config.mode, &data)
                .expect("valid corpus")
                .token_accuracy;
            if accuracy >= 0.95 {
                reached = Some(log.epoch);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })
    .map_err(|e| e.to_string())?;
    Ok((reached, accuracy, outcome.params.flatten()))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let (reached, accuracy, params) = overfit_once()?;
    let epoch = reached.ok_or(format!("accuracy {accuracy:.3} after 500 epochs"))?;
    let first = start.elapsed().as_secs_f64();
    let (reached_again, _, params_again) = overfit_once()?;
    check(
        reached_again == reached && params_again == params,
        "second run differs",
    )?;
    check(first < 600.0, format!("took {first:.0}s"))?;
    Ok(format!(
        "accuracy {accuracy:.3} at epoch {epoch}, {first:.1}s per run, rerun bitwise identical"
    ))
}

fn ablation() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let examples = context_signal_corpus(800, 100 + seed);
        let config = EncodeConfig::default();
        let tokens: Vec<(ExampleTokens, usize)> = examples
            .iter()
            .map(|e| {
                (
                    example_tokens(&e.tree, &e.comment, &config).expect("encodes"),
                    e.tree.len(),
                )
            })
            .collect();
        let (train, valid, _) = split_corpus(tokens, seed).map_err(|e| e.to_string())?;
        let train_tokens: Vec<ExampleTokens> = train.iter().map(|(t, _)| t.clone()).collect();
        let vocabs = Vocabs::build(&train_tokens, 30000);
        let encode_all = |split: &[(ExampleTokens, usize)]| -> Vec<EncodedExample> {
            split
                .iter()
                .map(|(t, n)| encode_tokens(t, &vocabs, *n))
                .collect()
        };
        let (train_set, valid_set) = (encode_all(&train), encode_all(&valid));
        let mut accuracy = [0.0; 2];
        for (slot, mode) in [EncoderMode::Dual, EncoderMode::PruferOnly]
            .into_iter()
            .enumerate()
        {
            let mut model = ModelConfig::desk(
                vocabs.prufer.len(),
                vocabs.context.len(),
                vocabs.comment.len(),
            );
            model.hidden_dim = 32;
            model.embed_dim = 32;
            model.learning_rate = 0.2;
            model.epochs = 20;
            model.seed = seed;
            model.mode = mode;
            let outcome = train_from(ModelParams::init(&model), &train_set, &model, |_, _| {
                ControlFlow::Continue(())
            })
            .map_err(|e| e.to_string())?;
            accuracy[slot] = evaluate(&outcome.params, mode, &valid_set)
                .map_err(|e| e.to_string())?
                .token_accuracy;
        }
        if accuracy[0] > accuracy[1] {
            wins += 1;
        }
        rows.push(format!("{:.3}/{:.3}", accuracy[0], accuracy[1]));
    }
    let detail = format!(
        "dual/prufer-only validation accuracy per seed [{}], {wins}/5 wins, {:.0}s",
        rows.join(", "),
        start.elapsed().as_secs_f64()
    );
    check(wins >= 4, detail.clone())?;
    Ok(detail)
}

fn run_cli(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_astprufer"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ASTPRUFER_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        output.status.success(),
        format!(
            "`astprufer {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&output.stderr)
        ),
    )
}

fn pipeline(cwd: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let steps: [&[&str]; 6] = [
        &[
            "synth",
            "--kind",
            "toy",
            "--count",
            "60",
            "--seed",
            "4",
            "-o",
            "corpus.jsonl",
        ],
        &["encode", "corpus.jsonl", "-o", "codes.jsonl"],
        &["dataset", "codes.jsonl", "--seed", "4", "-o", "data"],
        &[
            "train", "--data", "data", "--seed", "4", "--hidden", "16", "--embed", "16",
            "--epochs", "5", "-o", "model",
        ],
        &[
            "decode",
            "--model",
            "model/model.json",
            "--data",
            "data",
            "-o",
            "hyps.jsonl",
        ],
        &[
            "score",
            "--hyps",
            "hyps.jsonl",
            "--refs",
            "data/test.refs.jsonl",
            "--lengths",
            "data/test.jsonl",
            "-o",
            "scores.json",
        ],
    ];
    for step in steps {
        run_cli(cwd, step)?;
    }
    let mut files = BTreeMap::new();
    let mut stack = vec![cwd.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).map_err(|e| e.to_string())?;
                files.insert(
                    path.strip_prefix(cwd).expect("under cwd").to_path_buf(),
                    bytes,
                );
            }
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    check(
        first.keys().eq(second.keys()),
        format!(
            "file sets differ: {:?} vs {:?}",
            first.keys(),
            second.keys()
        ),
    )?;
    for (path, bytes) in &first {
        check(
            second[path] == *bytes,
            format!("{} differs", path.display()),
        )?;
    }
    let manifests = first
        .keys()
        .filter(|p| p.to_string_lossy().contains("manifest"))
        .count();
    check(manifests >= 6, format!("only {manifests} manifests"))?;
    Ok(format!(
        "{} files ({manifests} manifests) bitwise identical",
        first.len()
    ))
}

fn main() -> ExitCode {
    let corpus = random_corpus();
    let criteria: [Criterion; 9] = [
        ("round-trip", Box::new(round_trip)),
        ("Cayley bijection", Box::new(cayley)),
        ("length identities", Box::new(|| length_identities(&corpus))),
        ("degree/frequency laws", Box::new(|| degree_laws(&corpus))),
        ("metric oracles", Box::new(metric_oracles)),
        ("gradient check", Box::new(gradient_check)),
        ("overfit run", Box::new(overfit)),
        ("ablation ordering", Box::new(ablation)),
        ("pipeline determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
