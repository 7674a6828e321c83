//! Results file persistence and table exports.
//!
//! The on-disk format is pretty-printed JSON with object keys sorted and every
//! floating-point number written with six decimals, so the same results always
//! serialize to the same bytes.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Corpus, HypothesisSet, Task};
use crate::metrics::{MetricError, MetricId, MetricReport};
use crate::significance::{cluster_systems, rank_by_score, ArtConfig, ClusterRanking, SignificanceError};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0:?} (expected \"1\")")]
    UnsupportedVersion(String),
    #[error("invalid results: {0}")]
    Invalid(String),
    #[error("metric {0} is not part of these results")]
    UnknownMetric(MetricId),
    #[error("unknown export format {0:?} (supported: csv, latex, json, html)")]
    UnknownFormat(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Significance(#[from] SignificanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub name: String,
    pub is_baseline: bool,
    pub wall_time_seconds: Option<f64>,
    pub corpus_scores: BTreeMap<MetricId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_scores: Option<BTreeMap<MetricId, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: String,
    pub task: Task,
    pub main_metric: MetricId,
    pub metrics: Vec<MetricId>,
    pub systems: Vec<SystemResult>,
    pub rankings: BTreeMap<MetricId, ClusterRanking>,
    pub art_config: ArtConfig,
    pub created_at: DateTime<Utc>,
}

fn invalid(msg: impl Into<String>) -> ResultsError {
    ResultsError::Invalid(msg.into())
}

impl ResultsFile {
    pub fn validate(&self) -> Result<(), ResultsError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ResultsError::UnsupportedVersion(self.schema_version.clone()));
        }
        if self.metrics.is_empty() {
            return Err(invalid("no metrics listed"));
        }
        let metrics: HashSet<MetricId> = self.metrics.iter().copied().collect();
        if metrics.len() != self.metrics.len() {
            return Err(invalid("metrics are listed more than once"));
        }
        if !metrics.contains(&self.main_metric) {
            return Err(invalid(format!("main metric {} is not listed", self.main_metric)));
        }
        self.art_config.validate()?;

        let mut names = HashSet::new();
        for s in &self.systems {
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("duplicate system {:?}", s.name)));
            }
            if let Some(t) = s.wall_time_seconds {
                if !t.is_finite() || t < 0.0 {
                    return Err(invalid(format!("{}: invalid wall time {t}", s.name)));
                }
            }
            for m in &self.metrics {
                match s.corpus_scores.get(m) {
                    None => return Err(invalid(format!("{} has no {} score", s.name, m))),
                    Some(v) if !v.is_finite() => {
                        return Err(invalid(format!("{}: {} score is not finite", s.name, m)))
                    }
                    Some(_) => {}
                }
            }
            if let Some(m) = s.corpus_scores.keys().find(|m| !metrics.contains(m)) {
                return Err(invalid(format!("{} has a score for unlisted metric {}", s.name, m)));
            }
            if let Some(seg) = &s.segment_scores {
                for (m, scores) in seg {
                    if !metrics.contains(m) {
                        return Err(invalid(format!("{} has segment scores for unlisted metric {}", s.name, m)));
                    }
                    if scores.iter().any(|v| !v.is_finite()) {
                        return Err(invalid(format!("{}: non-finite {} segment score", s.name, m)));
                    }
                }
            }
        }

        for m in &self.metrics {
            let ranking = self
                .rankings
                .get(m)
                .ok_or_else(|| invalid(format!("no ranking for {m}")))?;
            if ranking.metric != *m {
                return Err(invalid(format!("ranking stored under {m} is for {}", ranking.metric)));
            }
            let ranked: Vec<&str> = ranking.order().collect();
            let ranked_set: HashSet<&str> = ranked.iter().copied().collect();
            if ranked.len() != self.systems.len() || ranked_set != names {
                return Err(invalid(format!("{m} ranking does not cover exactly the listed systems")));
            }
            if ranking.clusters.iter().any(Vec::is_empty) {
                return Err(invalid(format!("{m} ranking has an empty cluster")));
            }
            if ranking.p_values.len() != self.systems.len().saturating_sub(1) {
                return Err(invalid(format!("{m} ranking has {} p-values for {} systems", ranking.p_values.len(), self.systems.len())));
            }
        }
        if let Some(m) = self.rankings.keys().find(|m| !metrics.contains(m)) {
            return Err(invalid(format!("ranking for unlisted metric {m}")));
        }
        Ok(())
    }

    /// Canonical serialization of a validated file.
    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, ResultsError> {
        self.validate()?;
        let value = serde_json::to_value(self)?;
        let mut out = String::new();
        write_canonical(&value, 0, &mut out);
        out.push('\n');
        Ok(out.into_bytes())
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, ResultsError> {
        let value: Value = serde_json::from_slice(bytes)?;
        match value.get("schema_version") {
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(Value::String(v)) => return Err(ResultsError::UnsupportedVersion(v.clone())),
            Some(other) => return Err(ResultsError::UnsupportedVersion(other.to_string())),
            None => return Err(invalid("missing schema_version")),
        }
        let r: ResultsFile = serde_json::from_value(value)?;
        r.validate()?;
        Ok(r)
    }

    /// The value obtained after one write/read cycle (floats rounded to six decimals).
    pub fn canonicalized(&self) -> Result<Self, ResultsError> {
        Self::from_slice(&self.to_canonical_bytes()?)
    }

    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.name == name)
    }

    /// System names sorted by the main metric, best first.
    pub fn sorted_names(&self) -> Vec<String> {
        let m = self.main_metric;
        rank_by_score(
            self.systems
                .iter()
                .map(|s| (s.name.as_str(), s.corpus_scores.get(&m).copied().unwrap_or(f64::NAN))),
            m.direction(),
        )
        .expect("system names are unique in a validated file")
    }
}

fn write_indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_canonical(value: &Value, level: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let _ = write!(out, "{:.6}", n.as_f64().unwrap_or_default());
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                write_indent(level + 1, out);
                write_canonical(item, level + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            write_indent(level, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push_str("{\n");
            for (i, (k, v)) in entries.iter().enumerate() {
                write_indent(level + 1, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_canonical(v, level + 1, out);
                out.push_str(if i + 1 < entries.len() { ",\n" } else { "\n" });
            }
            write_indent(level, out);
            out.push('}');
        }
    }
}

pub fn write_results(r: &ResultsFile, path: &Path) -> Result<(), ResultsError> {
    let bytes = r.to_canonical_bytes()?;
    fs::write(path, bytes).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_results(path: &Path) -> Result<ResultsFile, ResultsError> {
    let bytes = fs::read(path).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ResultsFile::from_slice(&bytes)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Metrics to compute; the first one is the main metric unless overridden.
    pub metrics: Vec<MetricId>,
    pub main_metric: Option<MetricId>,
    pub art: ArtConfig,
    pub segment_scores: bool,
}

impl EvalOptions {
    pub fn new(metrics: Vec<MetricId>) -> Self {
        EvalOptions {
            metrics,
            main_metric: None,
            art: ArtConfig::default(),
            segment_scores: true,
        }
    }
}

/// A system's hypotheses plus its baseline flag.
#[derive(Debug, Clone)]
pub struct EvalSystem {
    pub hypotheses: HypothesisSet,
    pub is_baseline: bool,
}

/// Scores every system with every metric, clusters them per metric and
/// assembles a validated [`ResultsFile`].
pub fn evaluate(
    task: Task,
    references: &Corpus,
    systems: &[EvalSystem],
    options: &EvalOptions,
) -> Result<ResultsFile, ResultsError> {
    let mut metrics: Vec<MetricId> = Vec::with_capacity(options.metrics.len());
    for m in &options.metrics {
        if !metrics.contains(m) {
            metrics.push(*m);
        }
    }
    let main_metric = options
        .main_metric
        .or_else(|| metrics.first().copied())
        .ok_or_else(|| invalid("no metrics requested"))?;
    if !metrics.contains(&main_metric) {
        return Err(invalid(format!("main metric {main_metric} is not among the requested metrics")));
    }
    options.art.validate()?;
    let refs = references.texts();

    let mut results: Vec<SystemResult> = systems
        .iter()
        .map(|s| SystemResult {
            name: s.hypotheses.system_name.clone(),
            is_baseline: s.is_baseline,
            wall_time_seconds: s.hypotheses.wall_time_seconds,
            corpus_scores: BTreeMap::new(),
            segment_scores: options.segment_scores.then(BTreeMap::new),
        })
        .collect();
    let mut rankings = BTreeMap::new();
    for &metric in &metrics {
        let mut reports: Vec<MetricReport> = Vec::with_capacity(systems.len());
        for (s, out) in systems.iter().zip(results.iter_mut()) {
            let report = metric
                .score(&s.hypotheses.texts(), &refs)?
                .named(s.hypotheses.system_name.clone());
            out.corpus_scores.insert(metric, report.corpus_score);
            if let Some(seg) = out.segment_scores.as_mut() {
                seg.insert(metric, report.segment_scores.clone());
            }
            reports.push(report);
        }
        let ranking = if reports.is_empty() {
            ClusterRanking {
                metric,
                clusters: Vec::new(),
                p_values: Vec::new(),
            }
        } else {
            cluster_systems(&reports, metric, &options.art)?
        };
        rankings.insert(metric, ranking);
    }

    let r = ResultsFile {
        schema_version: SCHEMA_VERSION.to_string(),
        task,
        main_metric,
        metrics,
        systems: results,
        rankings,
        art_config: options.art,
        created_at: Utc::now(),
    };
    r.validate()?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExportFormat {
    Csv,
    Latex,
    Json,
    Html,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 4] = [
        ExportFormat::Csv,
        ExportFormat::Latex,
        ExportFormat::Json,
        ExportFormat::Html,
    ];

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv; charset=utf-8",
            ExportFormat::Latex => "application/x-latex; charset=utf-8",
            ExportFormat::Json => "application/json",
            ExportFormat::Html => "text/html; charset=utf-8",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Latex => "tex",
            ExportFormat::Json => "json",
            ExportFormat::Html => "html",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ResultsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "latex" | "tex" => Ok(ExportFormat::Latex),
            "json" => Ok(ExportFormat::Json),
            "html" => Ok(ExportFormat::Html),
            _ => Err(ResultsError::UnknownFormat(s.to_string())),
        }
    }
}

const TIME_HEADER: &str = "Time (s)";

/// Two-decimal rendering shared by every export format.
pub fn fmt2(value: f64) -> String {
    format!("{value:.2}")
}

fn fmt_time(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), fmt2)
}

struct Table {
    header: Vec<String>,
    rows: Vec<Row>,
}

struct Row {
    name: String,
    is_baseline: bool,
    scores: Vec<f64>,
    time: Option<f64>,
}

fn build_table(r: &ResultsFile, metric_order: &[MetricId]) -> Result<Table, ResultsError> {
    let metrics: Vec<MetricId> = if metric_order.is_empty() {
        r.metrics.clone()
    } else {
        metric_order.to_vec()
    };
    if let Some(m) = metrics.iter().find(|m| !r.metrics.contains(m)) {
        return Err(ResultsError::UnknownMetric(*m));
    }
    let mut header = vec!["System".to_string()];
    header.extend(metrics.iter().map(|m| m.label().to_string()));
    header.push(TIME_HEADER.to_string());

    let rows = r
        .sorted_names()
        .into_iter()
        .map(|name| {
            let s = r.system(&name).expect("sorted names come from the file");
            Row {
                scores: metrics.iter().map(|m| s.corpus_scores[m]).collect(),
                time: s.wall_time_seconds,
                is_baseline: s.is_baseline,
                name,
            }
        })
        .collect();
    Ok(Table { header, rows })
}

fn export_csv(t: &Table) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| {
        w.write_record(rec).expect("writing to memory cannot fail");
    };
    write(&mut w, t.header.clone());
    for row in &t.rows {
        let mut rec = vec![row.name.clone()];
        rec.extend(row.scores.iter().map(|&v| fmt2(v)));
        rec.push(fmt_time(row.time));
        write(&mut w, rec);
    }
    w.into_inner().expect("writing to memory cannot fail")
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str(r"\textbackslash{}"),
            '~' => out.push_str(r"\textasciitilde{}"),
            '^' => out.push_str(r"\textasciicircum{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

fn export_latex(t: &Table) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(out, "\\begin{{tabular}}{{l{}}}", "r".repeat(t.header.len() - 1));
    out.push_str("\\hline\n");
    let header: Vec<String> = t.header.iter().map(|h| latex_escape(h)).collect();
    let _ = writeln!(out, "{} \\\\", header.join(" & "));
    out.push_str("\\hline\n");
    for row in &t.rows {
        let mut cells = vec![latex_escape(&row.name)];
        cells.extend(row.scores.iter().map(|&v| fmt2(v)));
        cells.push(fmt_time(row.time));
        let _ = writeln!(out, "{} \\\\", cells.join(" & "));
    }
    out.push_str("\\hline\n\\end{tabular}\n");
    out.into_bytes()
}

fn json_string(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn export_json(t: &Table) -> Vec<u8> {
    if t.rows.is_empty() {
        return b"[]\n".to_vec();
    }
    let mut out = String::from("[\n");
    for (i, row) in t.rows.iter().enumerate() {
        let mut fields = vec![format!("{}: {}", json_string(&t.header[0]), json_string(&row.name))];
        for (h, v) in t.header[1..].iter().zip(&row.scores) {
            fields.push(format!("{}: {}", json_string(h), fmt2(*v)));
        }
        let time = row.time.map_or_else(|| "null".to_string(), fmt2);
        fields.push(format!("{}: {}", json_string(TIME_HEADER), time));
        let _ = write!(out, "  {{{}}}", fields.join(", "));
        out.push_str(if i + 1 < t.rows.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out.into_bytes()
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn export_html(t: &Table) -> Vec<u8> {
    let mut out = String::from("<table>\n<thead>\n<tr>");
    for h in &t.header {
        let _ = write!(out, "<th>{}</th>", html_escape(h));
    }
    out.push_str("</tr>\n</thead>\n<tbody>\n");
    for row in &t.rows {
        out.push_str(if row.is_baseline { "<tr class=\"baseline\">" } else { "<tr>" });
        let _ = write!(out, "<td>{}</td>", html_escape(&row.name));
        for &v in &row.scores {
            let _ = write!(out, "<td>{}</td>", fmt2(v));
        }
        let _ = write!(out, "<td>{}</td>", fmt_time(row.time));
        out.push_str("</tr>\n");
    }
    out.push_str("</tbody>\n</table>\n");
    out.into_bytes()
}

/// Renders one row per system, best main-metric score first.
///
/// An empty `metric_order` selects all metrics in file order.
pub fn export_table(
    r: &ResultsFile,
    format: ExportFormat,
    metric_order: &[MetricId],
) -> Result<Vec<u8>, ResultsError> {
    let table = build_table(r, metric_order)?;
    Ok(match format {
        ExportFormat::Csv => export_csv(&table),
        ExportFormat::Latex => export_latex(&table),
        ExportFormat::Json => export_json(&table),
        ExportFormat::Html => export_html(&table),
    })
}
