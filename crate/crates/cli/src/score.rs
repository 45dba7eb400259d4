//! `score`: corpus metrics, per-length buckets and length/score correlation.

use anyhow::{bail, Result};
use astprufer::metrics::{
    bucket_scores, pair_scores, pearson, score_corpus, BucketScore, PairScores, ScoreReport,
};
use serde::Serialize;
use serde_json::Value;

use crate::io::{self, ManifestBuilder};
use crate::ScoreArgs;

#[derive(Serialize)]
struct Correlation {
    s_bleu: Option<f64>,
    meteor: Option<f64>,
    rouge_l: Option<f64>,
}

#[derive(Serialize)]
struct ScoreOutput {
    pairs: usize,
    report: ScoreReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bucket_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    buckets: Option<Vec<BucketScore>>,
    /// Pearson coefficient between code length and each sentence-level score.
    #[serde(skip_serializing_if = "Option::is_none")]
    length_correlation: Option<Correlation>,
}

fn parse_length(line: &str) -> Result<usize, String> {
    let value = io::parse_json(line)?;
    let n = match &value {
        Value::Number(_) => value.as_u64(),
        Value::Object(map) => map.get("nodes").and_then(Value::as_u64),
        _ => None,
    };
    n.map(|n| n as usize)
        .ok_or_else(|| "expected an integer or an object with an integer \"nodes\" field".into())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let out = io::output_path(args.out.output.as_deref(), "scores.json");
    let hyps = io::load_records(&args.hyps, false, io::parse_tokens)?.items;
    let refs = io::load_records(&args.refs, false, io::parse_tokens)?.items;
    if hyps.len() != refs.len() {
        bail!("{} hypotheses but {} references", hyps.len(), refs.len());
    }
    let report = score_corpus(&hyps, &refs)?;
    let mut output = ScoreOutput {
        pairs: hyps.len(),
        report,
        bucket_width: None,
        buckets: None,
        length_correlation: None,
    };
    let mut manifest = ManifestBuilder::new("score", args.out.timing);
    manifest.input(&args.hyps).input(&args.refs);
    if let Some(path) = &args.lengths {
        let lengths = io::load_records(path, false, parse_length)?.items;
        if lengths.len() != hyps.len() {
            bail!("{} lengths for {} pairs", lengths.len(), hyps.len());
        }
        let pairs = hyps
            .iter()
            .zip(&refs)
            .map(|(h, r)| pair_scores(h, r))
            .collect::<Result<Vec<PairScores>, _>>()?;
        let xs: Vec<f64> = lengths.iter().map(|&n| n as f64).collect();
        let column =
            |f: fn(&PairScores) -> f64| pearson(&xs, &pairs.iter().map(f).collect::<Vec<_>>());
        output.length_correlation = Some(Correlation {
            s_bleu: column(|p| p.s_bleu),
            meteor: column(|p| p.meteor),
            rouge_l: column(|p| p.rouge_l),
        });
        output.bucket_width = Some(args.bucket_width);
        output.buckets = Some(bucket_scores(&hyps, &refs, &lengths, args.bucket_width)?);
        manifest.input(path);
    }
    io::write_json(&out, &output)?;
    manifest
        .output(&out)
        .config(&serde_json::json!({ "bucket_width": args.bucket_width }))?
        .results(&output.report)?
        .records(output.pairs, Vec::new())
        .write(&io::manifest_beside(&out))
}
