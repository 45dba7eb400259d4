//! Representation commands: encode, restore, represent, stats, synth.

use anyhow::{bail, Result};
use astprufer::baselines::{bfs_sequence, flat_tokens, leaf_paths, sbt_sequence};
use astprufer::corpus::{stats as length_stats, CorpusStats};
use astprufer::prufer::{self, PruferCode};
use astprufer::synth;
use astprufer::LabeledTree;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use crate::io::{self, InvariantViolation, ManifestBuilder, TreeRecord};
use crate::{EncodeArgs, ReprKind, RepresentArgs, RestoreArgs, StatsArgs, SynthArgs};

#[derive(Serialize)]
struct CodeRecord<'a> {
    #[serde(flatten)]
    code: &'a PruferCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    comment: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    syntactic: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    encoder_input: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<Vec<String>>,
}

/// Encodes and checks that decoding gives the tree back.
fn checked_code(tree: &LabeledTree) -> Result<PruferCode> {
    let code = prufer::encode(tree)?;
    if prufer::decode(&code)? != *tree {
        return Err(InvariantViolation("decode(encode(tree)) differs from the tree".into()).into());
    }
    Ok(code)
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let out = io::output_path(args.out.output.as_deref(), "codes.jsonl");
    let mut manifest = ManifestBuilder::new("encode", args.out.timing);
    let loaded = io::load_records(&args.input, args.lenient, io::parse_tree_record)?;
    let mut records = Vec::with_capacity(loaded.items.len());
    let codes = loaded
        .items
        .iter()
        .map(|r| checked_code(&r.tree))
        .collect::<Result<Vec<_>>>()?;
    for (rec, code) in loaded.items.iter().zip(&codes) {
        records.push(CodeRecord {
            code,
            comment: rec.comment.as_deref(),
            syntactic: args
                .syntactic
                .then(|| prufer::syntactic_sequence(code).map(|s| s.tokens))
                .transpose()?,
            encoder_input: args
                .encoder_input
                .then(|| prufer::build_encoder_input(&rec.tree))
                .transpose()?,
            context: args
                .context
                .then(|| prufer::context_sequence(&rec.tree, code).map(|c| c.tokens))
                .transpose()?,
        });
    }
    io::write_jsonl(&out, &records)?;
    manifest
        .input(&args.input)
        .output(&out)
        .config(&serde_json::json!({
            "syntactic": args.syntactic,
            "encoder_input": args.encoder_input,
            "context": args.context,
            "lenient": args.lenient,
        }))?
        .records(records.len(), loaded.skipped)
        .write(&io::manifest_beside(&out))
}

pub fn restore(args: &RestoreArgs) -> Result<()> {
    let out = io::output_path(args.out.output.as_deref(), "restored.jsonl");
    let loaded = io::load_records(&args.input, args.lenient, |line| {
        let value = io::parse_json(line)?;
        if value.get("sequence").is_none() {
            return Err("not a Prüfer code record (no \"sequence\" field)".into());
        }
        io::parse_tree_record(line)
    })?;
    let mut text = String::new();
    for TreeRecord { tree, comment } in &loaded.items {
        match comment {
            Some(c) => {
                text.push_str(&format!(
                    "{{\"ast\":{},\"comment\":{}}}",
                    tree.to_json(),
                    Value::String(c.clone())
                ));
            }
            None => text.push_str(&tree.to_json()),
        }
        text.push('\n');
    }
    io::write_text(&out, &text)?;
    ManifestBuilder::new("restore", args.out.timing)
        .input(&args.input)
        .output(&out)
        .records(loaded.items.len(), loaded.skipped)
        .write(&io::manifest_beside(&out))
}

fn representation(tree: &LabeledTree, args: &RepresentArgs) -> Result<Value> {
    let tokens = |v: Vec<String>| Value::from(v);
    Ok(match args.kind {
        ReprKind::Prufer => Value::from(prufer::encode(tree)?.sequence),
        ReprKind::Syntactic => tokens(prufer::syntactic_sequence(&prufer::encode(tree)?)?.tokens),
        ReprKind::EncoderInput => tokens(prufer::build_encoder_input(tree)?),
        ReprKind::Context => tokens(prufer::context_sequence(tree, &prufer::encode(tree)?)?.tokens),
        ReprKind::Sbt => tokens(sbt_sequence(tree)),
        ReprKind::Bfs => tokens(bfs_sequence(tree)),
        ReprKind::Flat => tokens(flat_tokens(tree)),
        ReprKind::Paths => {
            serde_json::to_value(leaf_paths(tree, args.max_paths, args.max_path_len).paths)?
        }
    })
}

pub fn represent(args: &RepresentArgs) -> Result<()> {
    let kind = args
        .kind
        .to_possible_value()
        .expect("every kind has a name")
        .get_name()
        .to_owned();
    let out = io::output_path(args.out.output.as_deref(), &format!("{kind}.jsonl"));
    let loaded = io::load_records(&args.input, args.lenient, io::parse_tree_record)?;
    let rows = loaded
        .items
        .iter()
        .map(|r| representation(&r.tree, args))
        .collect::<Result<Vec<_>>>()?;
    io::write_jsonl(&out, &rows)?;
    ManifestBuilder::new("represent", args.out.timing)
        .input(&args.input)
        .output(&out)
        .config(&serde_json::json!({
            "kind": kind,
            "max_paths": args.max_paths,
            "max_path_len": args.max_path_len,
        }))?
        .records(rows.len(), loaded.skipped)
        .write(&io::manifest_beside(&out))
}

#[derive(Serialize)]
struct StatsRow {
    representation: &'static str,
    #[serde(flatten)]
    stats: CorpusStats,
}

#[derive(Serialize)]
struct StatsReport {
    trees: usize,
    threshold: usize,
    rows: Vec<StatsRow>,
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let out = io::output_path(args.out.output.as_deref(), "stats.json");
    let loaded = io::load_records(&args.input, args.lenient, io::parse_tree_record)?;
    let names = [
        "nodes",
        "prufer",
        "encoder-input",
        "context",
        "sbt",
        "bfs",
        "flat",
    ];
    let mut lengths: Vec<Vec<usize>> = vec![Vec::with_capacity(loaded.items.len()); names.len()];
    for TreeRecord { tree, .. } in &loaded.items {
        let code = prufer::encode(tree)?;
        let row = [
            tree.len(),
            code.sequence.len(),
            prufer::build_encoder_input(tree)?.len(),
            prufer::context_sequence(tree, &code)?.tokens.len(),
            sbt_sequence(tree).len(),
            bfs_sequence(tree).len(),
            flat_tokens(tree).len(),
        ];
        for (col, len) in lengths.iter_mut().zip(row) {
            col.push(len);
        }
    }
    let rows = names
        .iter()
        .zip(&lengths)
        .map(|(&representation, col)| {
            Ok(StatsRow {
                representation,
                stats: length_stats(col, args.threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = StatsReport {
        trees: loaded.items.len(),
        threshold: args.threshold,
        rows,
    };
    io::write_json(&out, &report)?;
    ManifestBuilder::new("stats", args.out.timing)
        .input(&args.input)
        .output(&out)
        .config(&serde_json::json!({ "threshold": args.threshold }))?
        .records(report.trees, loaded.skipped)
        .write(&io::manifest_beside(&out))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    let out = io::output_path(args.out.output.as_deref(), "corpus.jsonl");
    let examples = synth::corpus(args.kind, args.count, args.seed);
    let mut text = String::new();
    for ex in &examples {
        text.push_str(&ex.to_record());
        text.push('\n');
    }
    io::write_text(&out, &text)?;
    ManifestBuilder::new("synth", args.out.timing)
        .output(&out)
        .seed(args.seed)
        .config(&serde_json::json!({ "kind": args.kind, "count": args.count }))?
        .records(examples.len(), Vec::new())
        .write(&io::manifest_beside(&out))
}
