//! Learning commands: dataset, train, decode.

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use anyhow::{bail, Context, Result};
use astprufer::corpus::{
    encode_tokens, example_tokens, split_corpus, tokenize_comment, EncodeConfig, EncodedExample,
    ExampleTokens, Vocabs, Vocabulary,
};
use astprufer::model::{
    evaluate, greedy_decode, train_from, Checkpoint, Evaluation, ModelConfig, ModelParams,
};
use serde::Serialize;

use crate::io::{self, ManifestBuilder, TreeRecord};
use crate::{DatasetArgs, DecodeArgs, TrainArgs};

const SPLITS: [&str; 3] = ["train", "valid", "test"];
const VOCAB_FILES: [&str; 3] = ["vocab.prufer.txt", "vocab.context.txt", "vocab.comment.txt"];

#[derive(Serialize)]
struct DatasetConfig<'a> {
    #[serde(flatten)]
    encode: &'a EncodeConfig,
    vocab_size: usize,
}

#[derive(Serialize)]
struct DatasetResults {
    train: usize,
    valid: usize,
    test: usize,
    prufer_vocab: usize,
    context_vocab: usize,
    comment_vocab: usize,
}

pub fn dataset(args: &DatasetArgs) -> Result<()> {
    if args.prufer_max == 0 {
        bail!("--prufer-max must be at least 1");
    }
    if args.vocab_size < 5 {
        bail!("--vocab-size must be at least 5 (four ids are reserved)");
    }
    let dir = io::output_path(args.out.output.as_deref(), "dataset");
    let config = EncodeConfig {
        prufer_max: args.prufer_max,
        context_max: args.context_max,
        comment_max: args.comment_max,
        split_identifiers: !args.no_split,
        input_repr: args.input_repr,
    };
    let loaded = io::load_records(&args.input, args.lenient, |line| {
        let TreeRecord { tree, comment } = io::parse_tree_record(line)?;
        let comment = comment.ok_or("record has no \"comment\"")?;
        if tokenize_comment(&comment).is_empty() {
            return Err("comment has no tokens".into());
        }
        let tokens = example_tokens(&tree, &comment, &config).map_err(|e| e.to_string())?;
        Ok((tokens, tree.len()))
    })?;
    let records = loaded.items.len();
    let (train, valid, test) = split_corpus(loaded.items, args.seed)?;
    let train_tokens: Vec<ExampleTokens> = train.iter().map(|(t, _)| t.clone()).collect();
    let vocabs = Vocabs::build(&train_tokens, args.vocab_size);

    let mut manifest = ManifestBuilder::new("dataset", args.out.timing);
    manifest.input(&args.input);
    for (name, split) in SPLITS.iter().zip([&train, &valid, &test]) {
        let path = dir.join(format!("{name}.jsonl"));
        io::write_jsonl(
            &path,
            split
                .iter()
                .map(|(t, nodes)| encode_tokens(t, &vocabs, *nodes)),
        )?;
        let refs = dir.join(format!("{name}.refs.jsonl"));
        io::write_jsonl(&refs, split.iter().map(|(t, _)| &t.comment))?;
        manifest.output(&path).output(&refs);
    }
    for (file, vocab) in VOCAB_FILES
        .iter()
        .zip([&vocabs.prufer, &vocabs.context, &vocabs.comment])
    {
        let path = dir.join(file);
        io::write_text(&path, &vocab.to_text())?;
        manifest.output(&path);
    }
    manifest
        .seed(args.seed)
        .config(&DatasetConfig {
            encode: &config,
            vocab_size: args.vocab_size,
        })?
        .results(&DatasetResults {
            train: train.len(),
            valid: valid.len(),
            test: test.len(),
            prufer_vocab: vocabs.prufer.len(),
            context_vocab: vocabs.context.len(),
            comment_vocab: vocabs.comment.len(),
        })?
        .records(records, loaded.skipped)
        .write(&dir.join("manifest.json"))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Vocabulary::from_text(&text).with_context(|| format!("in {}", path.display()))
}

fn read_vocabs(dir: &Path) -> Result<[Vocabulary; 3]> {
    Ok([
        read_vocab(&dir.join(VOCAB_FILES[0]))?,
        read_vocab(&dir.join(VOCAB_FILES[1]))?,
        read_vocab(&dir.join(VOCAB_FILES[2]))?,
    ])
}

/// Reads an encoded split; an empty file gives an empty split.
fn read_split(path: &Path) -> Result<Vec<EncodedExample>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

#[derive(Serialize)]
struct TrainResults {
    epochs_run: usize,
    final_loss: f64,
    train: Evaluation,
    valid: Option<Evaluation>,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let dir = io::output_path(args.out.output.as_deref(), "model");
    let [prufer_vocab, context_vocab, comment_vocab] = read_vocabs(&args.data)?;
    let train_path = args.data.join("train.jsonl");
    let valid_path = args.data.join("valid.jsonl");
    let train_set = read_split(&train_path)?;
    if train_set.is_empty() {
        bail!("EmptyCorpus: {} has no examples", train_path.display());
    }
    let valid_set = read_split(&valid_path)?;

    let (p, c, t) = (prufer_vocab.len(), context_vocab.len(), comment_vocab.len());
    let mut config = if args.full_scale {
        ModelConfig::full_scale(p, c, t)
    } else {
        ModelConfig::desk(p, c, t)
    };
    config.hidden_dim = args.hidden.unwrap_or(config.hidden_dim);
    config.embed_dim = args.embed.unwrap_or(config.embed_dim);
    config.learning_rate = args.lr;
    config.lr_decay = args.lr_decay;
    config.grad_clip_norm = args.clip;
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.init_scale = args.init_scale;
    config.max_decode_len = args.max_decode_len;
    config.seed = args.seed;
    config.mode = args.mode;
    config.validate()?;

    let outcome = train_from(ModelParams::init(&config), &train_set, &config, |log, _| {
        eprintln!(
            "epoch {:>4}  lr {:.6}  loss {:.6}",
            log.epoch, log.lr, log.mean_loss
        );
        ControlFlow::Continue(())
    })?;

    let model_path = dir.join("model.json");
    io::write_text(
        &model_path,
        &serde_json::to_string(&Checkpoint::new(&config, &outcome.params))?,
    )?;
    let loss_path = dir.join("loss.csv");
    let mut csv = String::from("epoch,lr,mean_loss\n");
    for e in &outcome.log {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.lr, e.mean_loss));
    }
    io::write_text(&loss_path, &csv)?;

    let results = TrainResults {
        epochs_run: outcome.log.len(),
        final_loss: outcome.log.last().map_or(f64::NAN, |e| e.mean_loss),
        train: evaluate(&outcome.params, config.mode, &train_set)?,
        valid: if valid_set.is_empty() {
            None
        } else {
            Some(evaluate(&outcome.params, config.mode, &valid_set)?)
        },
    };
    ManifestBuilder::new("train", args.out.timing)
        .input(&train_path)
        .input(&valid_path)
        .output(&model_path)
        .output(&loss_path)
        .seed(args.seed)
        .config(&config)?
        .results(&results)?
        .records(train_set.len(), Vec::new())
        .write(&dir.join("manifest.json"))
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    if !SPLITS.contains(&args.split.as_str()) {
        bail!("--split must be one of train, valid, test");
    }
    let out = io::output_path(args.out.output.as_deref(), "hyps.jsonl");
    let text = fs::read_to_string(&args.model)
        .with_context(|| format!("cannot read {}", args.model.display()))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a model checkpoint", args.model.display()))?;
    let (config, params) = checkpoint.restore()?;
    let comment_vocab = read_vocab(&args.data.join(VOCAB_FILES[2]))?;
    if comment_vocab.len() != config.target_vocab {
        bail!(
            "comment vocabulary has {} entries but the model expects {}",
            comment_vocab.len(),
            config.target_vocab
        );
    }
    let split_path = args.data.join(format!("{}.jsonl", args.split));
    let examples = read_split(&split_path)?;
    let max_len = args.max_len.unwrap_or(config.max_decode_len);
    let hyps = examples
        .iter()
        .map(|ex| {
            let ids = greedy_decode(
                &params,
                config.mode,
                &ex.prufer_ids,
                &ex.context_ids,
                max_len,
            )?;
            Ok(comment_vocab.decode(&ids))
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_jsonl(&out, &hyps)?;
    ManifestBuilder::new("decode", args.out.timing)
        .input(&args.model)
        .input(&split_path)
        .output(&out)
        .config(
            &serde_json::json!({ "split": args.split, "max_len": max_len, "mode": config.mode }),
        )?
        .records(hyps.len(), Vec::new())
        .write(&io::manifest_beside(&out))
}
