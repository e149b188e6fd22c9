//! Raw bug-report corpora: ingestion from line-delimited JSON or Bugzilla XML
//! exports, plus the lifecycle and developer-frequency filters.
//!
//! The canonical interchange format is one JSON object per line:
//!
//! ```text
//! {"id":150001,"summary":"...","description":"...","developer":"a@x.org","status":"RESOLVED","resolution":"FIXED"}
//! ```
//!
//! `developer` may be `null` or omitted. Every other field is required.
//! Record order in the file is the chronological submit order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// One bug report as read from the tracker export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugReport {
    pub id: u64,
    /// The short description.
    pub summary: String,
    /// Text of the first long description.
    pub description: String,
    pub developer: Option<String>,
    pub status: String,
    pub resolution: String,
    /// Position in chronological order.
    pub submit_order: usize,
}

impl BugReport {
    /// Summary and description joined by a space; the text the tokenizer sees.
    pub fn text(&self) -> String {
        let mut text = String::with_capacity(self.summary.len() + self.description.len() + 1);
        text.push_str(&self.summary);
        text.push(' ');
        text.push_str(&self.description);
        text
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCorpus {
    /// Sorted ascending by `submit_order`.
    pub reports: Vec<BugReport>,
    pub source_note: String,
}

impl RawCorpus {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.reports.iter().filter(|r| r.developer.is_some()).count()
    }

    fn with_reports(&self, reports: Vec<BugReport>, step: &str) -> RawCorpus {
        let source_note = if self.source_note.is_empty() {
            step.to_string()
        } else {
            format!("{}; {}", self.source_note, step)
        };
        RawCorpus {
            reports,
            source_note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    BugzillaXml,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "bugzilla-xml" => Ok(CorpusFormat::BugzillaXml),
            other => Err(Error::Usage(format!(
                "unknown corpus format `{other}` (expected `jsonl` or `bugzilla-xml`)"
            ))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusFormat::Jsonl => f.write_str("jsonl"),
            CorpusFormat::BugzillaXml => f.write_str("bugzilla-xml"),
        }
    }
}

pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<RawCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut corpus = match format {
        CorpusFormat::Jsonl => read_jsonl(reader)?,
        CorpusFormat::BugzillaXml => read_bugzilla_xml(reader)?,
    };
    corpus.source_note = format!("{} ({format})", path.display());
    Ok(corpus)
}

/// Reads line-delimited JSON records. Blank lines are skipped; record
/// indices in errors count records, starting at 0.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<RawCorpus> {
    let mut reports = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format {
            what: "corpus",
            message: format!("line {}: {e}", line_no + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = reports.len();
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::record(record, "<record>", format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::record(record, "<record>", "expected a JSON object"))?;

        let id = match obj.get("id") {
            Some(Value::Number(n)) => n.as_u64().filter(|&id| id > 0),
            Some(Value::String(s)) => s.trim().parse::<u64>().ok().filter(|&id| id > 0),
            _ => None,
        }
        .ok_or_else(|| Error::record(record, "id", "missing or not a positive integer"))?;

        let text_field = |name: &str| -> Result<String> {
            match obj.get(name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(Error::record(record, name, "expected a string")),
                None => Err(Error::record(record, name, "missing")),
            }
        };
        let developer = match obj.get("developer") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.trim().is_empty() => None,
            Some(Value::String(s)) => Some(s.trim().to_string()),
            Some(_) => return Err(Error::record(record, "developer", "expected a string or null")),
        };

        reports.push(BugReport {
            id,
            summary: text_field("summary")?,
            description: text_field("description")?,
            developer,
            status: text_field("status")?,
            resolution: text_field("resolution")?,
            submit_order: record,
        });
    }
    check_unique_ids(&reports)?;
    Ok(RawCorpus {
        reports,
        source_note: String::new(),
    })
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    id: u64,
    summary: &'a str,
    description: &'a str,
    developer: Option<&'a str>,
    status: &'a str,
    resolution: &'a str,
}

pub fn write_jsonl<W: Write>(corpus: &RawCorpus, mut out: W) -> Result<()> {
    for r in &corpus.reports {
        let record = JsonlRecord {
            id: r.id,
            summary: &r.summary,
            description: &r.description,
            developer: r.developer.as_deref(),
            status: &r.status,
            resolution: &r.resolution,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

fn check_unique_ids(reports: &[BugReport]) -> Result<()> {
    let mut seen = HashSet::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        if !seen.insert(r.id) {
            return Err(Error::record(i, "id", format!("duplicate id {}", r.id)));
        }
    }
    Ok(())
}

#[derive(Default)]
struct XmlBug {
    id: Option<String>,
    summary: String,
    description: Option<String>,
    developer: Option<String>,
    status: String,
    resolution: String,
}

/// Best-effort reader for Bugzilla `show_bug.cgi?ctype=xml` exports.
///
/// Maps `short_desc` to the summary, the `thetext` of the first `long_desc`
/// to the description and `assigned_to` to the developer.
pub fn read_bugzilla_xml<R: BufRead>(reader: R) -> Result<RawCorpus> {
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<XmlBug> = None;
    let mut in_first_long_desc = false;
    let mut reports = Vec::new();

    let xml_err = |pos: u64, e: &dyn fmt::Display| Error::Format {
        what: "bugzilla xml",
        message: format!("at byte {pos}: {e}"),
    };

    loop {
        let pos = xml.buffer_position();
        match xml.read_event_into(&mut buf) {
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if name == "bug" {
                    current = Some(XmlBug::default());
                } else if name == "long_desc" {
                    if let Some(bug) = current.as_mut() {
                        in_first_long_desc = bug.description.is_none();
                        if in_first_long_desc {
                            bug.description = Some(String::new());
                        }
                    }
                }
                path.push(name);
            }
            Ok(Event::End(_)) => {
                let name = path.pop().unwrap_or_default();
                if name == "long_desc" {
                    in_first_long_desc = false;
                } else if name == "bug" {
                    if let Some(bug) = current.take() {
                        let record = reports.len();
                        reports.push(finish_xml_bug(bug, record)?);
                    }
                }
            }
            Ok(Event::Empty(e)) => {
                // `<bug/>` carries nothing usable.
                let _ = e;
            }
            Ok(Event::Text(t)) => {
                let text = t.unescape().map_err(|e| xml_err(pos, &e))?;
                append_xml_text(&mut current, &path, in_first_long_desc, &text);
            }
            Ok(Event::CData(t)) => {
                let text = String::from_utf8_lossy(&t.into_inner()).into_owned();
                append_xml_text(&mut current, &path, in_first_long_desc, &text);
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(xml_err(pos, &e)),
        }
        buf.clear();
    }
    if current.is_some() {
        return Err(Error::Format {
            what: "bugzilla xml",
            message: "unterminated <bug> element".into(),
        });
    }
    check_unique_ids(&reports)?;
    Ok(RawCorpus {
        reports,
        source_note: String::new(),
    })
}

fn append_xml_text(current: &mut Option<XmlBug>, path: &[String], in_long_desc: bool, text: &str) {
    let Some(bug) = current.as_mut() else { return };
    let Some(leaf) = path.last() else { return };
    let parent = path.len().checked_sub(2).map(|i| path[i].as_str());
    match (parent, leaf.as_str()) {
        (Some("bug"), "bug_id") => bug.id.get_or_insert_with(String::new).push_str(text),
        (Some("bug"), "short_desc") => bug.summary.push_str(text),
        (Some("bug"), "bug_status") => bug.status.push_str(text),
        (Some("bug"), "resolution") => bug.resolution.push_str(text),
        (Some("bug"), "assigned_to") => bug.developer.get_or_insert_with(String::new).push_str(text),
        (Some("long_desc"), "thetext") if in_long_desc => {
            if let Some(d) = bug.description.as_mut() {
                d.push_str(text);
            }
        }
        _ => {}
    }
}

fn finish_xml_bug(bug: XmlBug, record: usize) -> Result<BugReport> {
    let id = bug
        .id
        .as_deref()
        .map(str::trim)
        .and_then(|s| s.parse::<u64>().ok())
        .filter(|&id| id > 0)
        .ok_or_else(|| Error::record(record, "bug_id", "missing or not a positive integer"))?;
    Ok(BugReport {
        id,
        summary: bug.summary.trim().to_string(),
        description: bug.description.unwrap_or_default().trim().to_string(),
        developer: bug
            .developer
            .map(|d| d.trim().to_string())
            .filter(|d| !d.is_empty()),
        status: bug.status.trim().to_string(),
        resolution: bug.resolution.trim().to_string(),
        submit_order: record,
    })
}

const KEPT_STATUSES: [&str; 2] = ["resolved", "verified"];
const KEPT_RESOLUTIONS: [&str; 2] = ["fixed", "duplicate"];

/// True when the report is resolved or verified AND fixed or duplicate.
pub fn is_really_resolved(report: &BugReport) -> bool {
    let status = report.status.trim();
    let resolution = report.resolution.trim();
    KEPT_STATUSES.iter().any(|s| status.eq_ignore_ascii_case(s))
        && KEPT_RESOLUTIONS.iter().any(|s| resolution.eq_ignore_ascii_case(s))
}

pub fn filter_lifecycle(corpus: &RawCorpus) -> RawCorpus {
    let kept = corpus
        .reports
        .iter()
        .filter(|r| is_really_resolved(r))
        .cloned()
        .collect();
    corpus.with_reports(kept, "lifecycle filter")
}

/// Drops labeled reports whose developer fixed fewer than `min_fixed` reports
/// in this corpus. Counts are taken once on the input; unlabeled reports
/// always survive.
pub fn filter_developers(corpus: &RawCorpus, min_fixed: usize) -> Result<RawCorpus> {
    if min_fixed == 0 {
        return Err(Error::Usage("min_fixed must be at least 1".into()));
    }
    let counts = developer_counts(corpus);
    let kept = corpus
        .reports
        .iter()
        .filter(|r| match &r.developer {
            None => true,
            Some(d) => counts[d.as_str()] >= min_fixed,
        })
        .cloned()
        .collect();
    Ok(corpus.with_reports(kept, &format!("developer filter (min_fixed={min_fixed})")))
}

pub fn developer_counts(corpus: &RawCorpus) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for d in corpus.reports.iter().filter_map(|r| r.developer.as_deref()) {
        *counts.entry(d).or_insert(0) += 1;
    }
    counts
}
