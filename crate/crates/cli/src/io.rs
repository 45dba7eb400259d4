//! Record loading with skip-and-report, output paths and run manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use astprufer::prufer::{self, PruferCode};
use astprufer::tree::parse_tree_value;
use astprufer::LabeledTree;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable naming the directory used when `--output` is omitted.
pub const OUT_DIR_ENV: &str = "ASTPRUFER_OUT_DIR";

/// An internal consistency check failed; reported with exit code 2.
#[derive(Debug)]
pub struct InvariantViolation(pub String);

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub error: String,
}

pub struct Loaded<T> {
    pub items: Vec<T>,
    pub skipped: Vec<SkippedRecord>,
}

/// Parses every nonblank line of `path` with `parse`.
///
/// Each malformed line gets a diagnostic on stderr. Without `lenient` any
/// malformed line is an error; with it the line is skipped and recorded.
pub fn load_records<T>(
    path: &Path,
    lenient: bool,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<Loaded<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse(line) {
            Ok(item) => items.push(item),
            Err(error) => {
                eprintln!("warning: {}:{}: {}", path.display(), i + 1, error);
                skipped.push(SkippedRecord { line: i + 1, error });
            }
        }
    }
    if !skipped.is_empty() && !lenient {
        bail!(
            "{} malformed record(s) in {} (use --lenient to skip them)",
            skipped.len(),
            path.display()
        );
    }
    if items.is_empty() {
        bail!("EmptyInput: no usable records in {}", path.display());
    }
    Ok(Loaded { items, skipped })
}

pub fn parse_json(line: &str) -> Result<Value, String> {
    let mut de = serde_json::Deserializer::from_str(line);
    de.disable_recursion_limit();
    let value = Value::deserialize(&mut de).map_err(|e| format!("malformed JSON: {e}"))?;
    de.end().map_err(|e| format!("malformed JSON: {e}"))?;
    Ok(value)
}

/// One (tree, comment) record.
pub struct TreeRecord {
    pub tree: LabeledTree,
    pub comment: Option<String>,
}

/// Accepts a corpus record `{"ast": .., "comment": ..}`, a Prüfer code
/// record as written by `encode`, or a bare AST node.
pub fn parse_tree_record(line: &str) -> Result<TreeRecord, String> {
    let value = parse_json(line)?;
    let comment = match value.get("comment") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("\"comment\" is not a string".into()),
    };
    let tree = if let Some(ast) = value.get("ast") {
        parse_tree_value(ast).map_err(|e| e.to_string())?
    } else if value.get("sequence").is_some() {
        let code: PruferCode =
            serde_json::from_value(value).map_err(|e| format!("bad Prüfer code record: {e}"))?;
        prufer::decode(&code).map_err(|e| e.to_string())?
    } else {
        parse_tree_value(&value).map_err(|e| e.to_string())?
    };
    Ok(TreeRecord { tree, comment })
}

pub fn parse_tokens(line: &str) -> Result<Vec<String>, String> {
    serde_json::from_value(parse_json(line)?)
        .map_err(|e| format!("expected an array of strings: {e}"))
}

/// Output location: the explicit path, or `default_name` inside the output directory.
pub fn output_path(explicit: Option<&Path>, default_name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            dir.join(default_name)
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Reproducibility record written next to every command's outputs.
///
/// Paths are recorded exactly as given on the command line. The wall-clock
/// duration is only recorded with `--timing`, so manifests of repeated runs
/// compare equal byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub records: usize,
    pub skipped: usize,
    pub skipped_records: Vec<SkippedRecord>,
    pub results: Value,
    pub duration_secs: Option<f64>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    timing: bool,
}

impl ManifestBuilder {
    pub fn new(command: &str, timing: bool) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_owned(),
                version: env!("CARGO_PKG_VERSION"),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                config: Value::Null,
                records: 0,
                skipped: 0,
                skipped_records: Vec::new(),
                results: Value::Null,
                duration_secs: None,
            },
            started: Instant::now(),
            timing,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<&mut Self> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(self)
    }

    pub fn results<T: Serialize>(&mut self, results: &T) -> Result<&mut Self> {
        self.manifest.results = serde_json::to_value(results)?;
        Ok(self)
    }

    pub fn records(&mut self, count: usize, skipped: Vec<SkippedRecord>) -> &mut Self {
        self.manifest.records = count;
        self.manifest.skipped = skipped.len();
        self.manifest.skipped_records = skipped;
        self
    }

    /// Writes the manifest to `path`.
    pub fn write(&mut self, path: &Path) -> Result<()> {
        if self.timing {
            self.manifest.duration_secs = Some(self.started.elapsed().as_secs_f64());
        }
        write_json(path, &self.manifest)
    }
}

/// `out.jsonl` → `out.jsonl.manifest.json`.
pub fn manifest_beside(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
