//! Test-set and hypothesis loading.
//!
//! MT test sets come either as WMT-style XML/SGML (`<doc id><seg id>`,
//! selected by a `.xml` / `.sgm` extension) or as plain text with one segment
//! per line. OCR test sets are an image directory paired with a directory of
//! transcripts sharing the same basenames.
//!
//! All text is NFC-normalized and whitespace-trimmed on load. Casing is kept.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "tif", "tiff"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "MT")]
    Mt,
    #[serde(rename = "OCR")]
    Ocr,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Mt => "MT",
            Task::Ocr => "OCR",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(Task::Mt),
            "ocr" => Ok(Task::Ocr),
            other => Err(format!("unknown task {other:?} (expected mt or ocr)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("duplicate segment id {id:?} in {path}")]
    DuplicateId { id: String, path: PathBuf },
    #[error("segment {id:?} in {path} is empty")]
    EmptySegment { id: String, path: PathBuf },
    #[error("segment ids of {source_path} and {target_path} differ: {detail}")]
    IdMismatch {
        source_path: PathBuf,
        target_path: PathBuf,
        detail: String,
    },
    #[error("{0} contains no segments")]
    Empty(PathBuf),
    #[error("image {0:?} has no transcript")]
    MissingTranscript(String),
    #[error("transcript {0:?} has no image")]
    MissingImage(String),
    #[error("system {system}: {found} hypotheses for {expected} reference segments")]
    CountMismatch {
        system: String,
        found: usize,
        expected: usize,
    },
    #[error("system {system}: no prediction for segment {id:?}")]
    MissingPrediction { system: String, id: String },
    #[error("cannot aggregate an empty list of corpora")]
    NoParts,
    #[error("cannot aggregate corpora of different tasks ({0} and {1})")]
    MixedTasks(Task, Task),
}

type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Document-qualified id, e.g. `newstest#12`, `line#3` or an OCR basename.
    pub id: String,
    pub text: String,
}

impl Segment {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Segment {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub task: Task,
    pub segments: Vec<Segment>,
    pub source_files: Vec<PathBuf>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.id.as_str())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }
}

/// One system's predictions, aligned 1:1 with the reference corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub system_name: String,
    pub segments: Vec<Segment>,
    pub wall_time_seconds: Option<f64>,
}

impl HypothesisSet {
    pub fn texts(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }
}

/// NFC-normalizes and trims a segment.
pub fn normalize_text(text: &str) -> String {
    text.nfc().collect::<String>().trim().to_string()
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn is_markup(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("xml") | Some("sgm")
    )
}

/// Loads one side of an MT test set.
///
/// `.xml` / `.sgm` files are parsed as WMT-style markup; anything else is read
/// as plain text with ids `line#N` (1-based).
pub fn load_mt_file(path: &Path) -> Result<Corpus> {
    let content = read_to_string(path)?;
    let segments = if is_markup(path) {
        parse_wmt_xml(path, &content)?
    } else {
        content
            .lines()
            .enumerate()
            .map(|(i, line)| Segment::new(format!("line#{}", i + 1), normalize_text(line)))
            .collect()
    };
    if segments.is_empty() {
        return Err(CorpusError::Empty(path.to_path_buf()));
    }
    check_segments(path, &segments)?;
    Ok(Corpus {
        task: Task::Mt,
        segments,
        source_files: vec![path.to_path_buf()],
    })
}

fn parse_wmt_xml(path: &Path, content: &str) -> Result<Vec<Segment>> {
    let parse_err = |message: String| CorpusError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let options = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(content, options)
        .map_err(|e| parse_err(e.to_string()))?;

    let mut segments = Vec::new();
    let mut saw_doc = false;
    for doc_node in doc.descendants().filter(|n| n.has_tag_name("doc")) {
        saw_doc = true;
        let doc_id = doc_node
            .attribute("id")
            .or_else(|| doc_node.attribute("docid"))
            .ok_or_else(|| parse_err("<doc> element without id attribute".into()))?;
        for seg in doc_node.descendants().filter(|n| n.has_tag_name("seg")) {
            let seg_id = seg.attribute("id").ok_or_else(|| {
                parse_err(format!("<seg> without id attribute in doc {doc_id:?}"))
            })?;
            let text: String = seg
                .descendants()
                .filter(|n| n.is_text())
                .filter_map(|n| n.text())
                .collect();
            segments.push(Segment::new(format!("{doc_id}#{seg_id}"), normalize_text(&text)));
        }
    }
    if !saw_doc {
        return Err(parse_err("no <doc> elements found".into()));
    }
    Ok(segments)
}

fn check_segments(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut seen = HashSet::with_capacity(segments.len());
    for seg in segments {
        if !seen.insert(seg.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: seg.id.clone(),
                path: path.to_path_buf(),
            });
        }
        if seg.text.is_empty() {
            return Err(CorpusError::EmptySegment {
                id: seg.id.clone(),
                path: path.to_path_buf(),
            });
        }
    }
    Ok(())
}

/// Loads a parallel MT test set and checks both sides carry the same ids.
pub fn load_mt_testset(source_path: &Path, target_path: &Path) -> Result<(Corpus, Corpus)> {
    let source = load_mt_file(source_path)?;
    let target = load_mt_file(target_path)?;

    let mismatch = |detail: String| CorpusError::IdMismatch {
        source_path: source_path.to_path_buf(),
        target_path: target_path.to_path_buf(),
        detail,
    };
    let target_ids: HashSet<&str> = target.ids().collect();
    if let Some(missing) = source.ids().find(|id| !target_ids.contains(id)) {
        return Err(mismatch(format!("{missing} is missing from the target")));
    }
    let source_ids: HashSet<&str> = source.ids().collect();
    if let Some(extra) = target.ids().find(|id| !source_ids.contains(id)) {
        return Err(mismatch(format!("{extra} is missing from the source")));
    }
    if let Some((s, t)) = source.ids().zip(target.ids()).find(|(s, t)| s != t) {
        return Err(mismatch(format!("order differs ({s} vs {t})")));
    }
    Ok((source, target))
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    Ok(paths)
}

fn has_extension(path: &Path, wanted: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| wanted.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Maps basename → path for files in `dir` with one of `extensions`.
fn files_by_basename(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for path in list_dir(dir)? {
        if !has_extension(&path, extensions) {
            continue;
        }
        let name = stem(&path);
        if out.insert(name.clone(), path).is_some() {
            return Err(CorpusError::DuplicateId {
                id: name,
                path: dir.to_path_buf(),
            });
        }
    }
    Ok(out)
}

/// Loads the transcripts of an OCR test set, ordered by basename.
pub fn load_ocr_references(transcripts_dir: &Path) -> Result<Corpus> {
    let transcripts = files_by_basename(transcripts_dir, &["txt"])?;
    if transcripts.is_empty() {
        return Err(CorpusError::Empty(transcripts_dir.to_path_buf()));
    }
    let mut segments = Vec::with_capacity(transcripts.len());
    for (name, path) in &transcripts {
        segments.push(Segment::new(name.clone(), normalize_text(&read_to_string(path)?)));
    }
    check_segments(transcripts_dir, &segments)?;
    Ok(Corpus {
        task: Task::Ocr,
        segments,
        source_files: vec![transcripts_dir.to_path_buf()],
    })
}

/// Pairs images with transcripts by basename.
///
/// The manifest's segment text is the image path relative to `images_dir`.
pub fn load_ocr_testset(images_dir: &Path, transcripts_dir: &Path) -> Result<(Corpus, Corpus)> {
    let images = files_by_basename(images_dir, IMAGE_EXTENSIONS)?;
    if images.is_empty() {
        return Err(CorpusError::Empty(images_dir.to_path_buf()));
    }
    let transcripts = files_by_basename(transcripts_dir, &["txt"])?;
    if let Some(name) = images.keys().find(|k| !transcripts.contains_key(*k)) {
        return Err(CorpusError::MissingTranscript(name.clone()));
    }
    if let Some(name) = transcripts.keys().find(|k| !images.contains_key(*k)) {
        return Err(CorpusError::MissingImage(name.clone()));
    }

    let manifest = images
        .iter()
        .map(|(name, path)| {
            let rel = path.strip_prefix(images_dir).unwrap_or(path);
            Segment::new(name.clone(), rel.to_string_lossy().into_owned())
        })
        .collect();
    let references = load_ocr_references(transcripts_dir)?;
    Ok((
        Corpus {
            task: Task::Ocr,
            segments: manifest,
            source_files: vec![images_dir.to_path_buf()],
        },
        references,
    ))
}

/// Loads one system's predictions and aligns them with `reference`.
///
/// MT predictions are a text file with one hypothesis per line, aligned by
/// position. OCR predictions are a directory of `<basename>.txt` files.
pub fn load_hypotheses(
    path: &Path,
    task: Task,
    reference: &Corpus,
    system_name: &str,
) -> Result<HypothesisSet> {
    let segments = match task {
        Task::Mt => {
            let content = read_to_string(path)?;
            let lines: Vec<&str> = content.lines().collect();
            if lines.len() != reference.len() {
                return Err(CorpusError::CountMismatch {
                    system: system_name.to_string(),
                    found: lines.len(),
                    expected: reference.len(),
                });
            }
            reference
                .ids()
                .zip(lines)
                .map(|(id, line)| Segment::new(id, normalize_text(line)))
                .collect()
        }
        Task::Ocr => {
            let mut segments = Vec::with_capacity(reference.len());
            for id in reference.ids() {
                let file = path.join(format!("{id}.txt"));
                if !file.is_file() {
                    return Err(CorpusError::MissingPrediction {
                        system: system_name.to_string(),
                        id: id.to_string(),
                    });
                }
                segments.push(Segment::new(id, normalize_text(&read_to_string(&file)?)));
            }
            segments
        }
    };
    Ok(HypothesisSet {
        system_name: system_name.to_string(),
        segments,
        wall_time_seconds: None,
    })
}

/// Concatenates corpora in order.
///
/// When two parts share an id, every id is prefixed with the stem of its
/// part's first source file (`fileA#1`, `fileB#1`).
pub fn aggregate_corpora(parts: &[Corpus]) -> Result<Corpus> {
    let first = parts.first().ok_or(CorpusError::NoParts)?;
    if let Some(other) = parts.iter().find(|p| p.task != first.task) {
        return Err(CorpusError::MixedTasks(first.task, other.task));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for id in parts.iter().flat_map(|p| p.ids()) {
        *counts.entry(id).or_default() += 1;
    }
    let collide = counts.values().any(|&c| c > 1);

    let mut segments = Vec::with_capacity(parts.iter().map(Corpus::len).sum());
    let mut source_files = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let prefix = part
            .source_files
            .first()
            .map(|p| stem(p))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("part{}", i + 1));
        for seg in &part.segments {
            let id = if collide {
                format!("{prefix}#{}", seg.id)
            } else {
                seg.id.clone()
            };
            segments.push(Segment::new(id, seg.text.clone()));
        }
        source_files.extend(part.source_files.iter().cloned());
    }

    let mut seen = HashSet::with_capacity(segments.len());
    for seg in &segments {
        if !seen.insert(seg.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: seg.id.clone(),
                path: source_files.first().cloned().unwrap_or_default(),
            });
        }
    }
    Ok(Corpus {
        task: first.task,
        segments,
        source_files,
    })
}

/// Writes a corpus in the one-segment-per-line format.
pub fn write_plain_text(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for seg in &corpus.segments {
        out.push_str(&seg.text);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
