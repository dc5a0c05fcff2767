//! Structured conversion reports.
//!
//! Every stage of the pipeline appends to a [`ConversionReport`]; the CLI
//! folds per-file reports into a [`BatchReport`]. Field order of the structs
//! is the JSON key order.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// Where in the source document an entry originated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Default)]
pub struct Location {
    /// 0-based index of the music section.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<usize>,
    /// 1-based voice index.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voice: Option<usize>,
    /// Depth-first event ordinal within the voice's event list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
}

impl Location {
    pub fn section(section: usize) -> Self {
        Location { section: Some(section), ..Default::default() }
    }

    pub fn event(section: usize, voice: usize, ordinal: usize) -> Self {
        Location { section: Some(section), voice: Some(voice), ordinal: Some(ordinal) }
    }

    pub fn voice(voice: usize) -> Self {
        Location { voice: Some(voice), ..Default::default() }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(s) = self.section {
            parts.push(format!("section {s}"));
        }
        if let Some(v) = self.voice {
            parts.push(format!("voice {v}"));
        }
        if let Some(o) = self.ordinal {
            parts.push(format!("event {o}"));
        }
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Code {
    UnsupportedElement,
    NonMensuralSection,
    IgnoredChild,
    LigatureUnterminated,
    MissingMensuration,
    UnknownReading,
    VoiceLengthMismatch,
    MissingVoice,
    LigatureAccidental,
    TypedAsGeneric,
    ClefFallback,
    MeterChangeSkipped,
    MeterChangeShifted,
    SignumAsFermata,
    EditorialDropped,
    SpanDropped,
    ChordMemberDropped,
    DirectiveDropped,
    UnrepresentableTuplet,
    MalformedXml,
    NotCmme,
    SchemaViolation,
    EmptyScore,
    NegativeState,
    Unrepresentable,
    Io,
    Internal,
}

/// One warning, note or error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub code: Code,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

/// Parser and converter warnings share the report entry shape.
pub type Warning = Entry;

impl Entry {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Entry { code, message: message.into(), location: None }
    }

    pub fn at(code: Code, message: impl Into<String>, location: Location) -> Self {
        Entry { code, message: message.into(), location: Some(location) }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "[{:?}] {} ({loc})", self.code, self.message),
            None => write!(f, "[{:?}] {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub events: u64,
    pub notes: u64,
    pub measures: u64,
    pub tuplets: u64,
    pub ties: u64,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.events += other.events;
        self.notes += other.notes;
        self.measures += other.measures;
        self.tuplets += other.tuplets;
        self.ties += other.ties;
    }
}

/// Per-file record of what happened during a conversion.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConversionReport {
    pub counts: Counts,
    pub warnings: Vec<Entry>,
    pub notes: Vec<Entry>,
    pub errors: Vec<Entry>,
    pub dropped_features: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

impl ConversionReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warn(&mut self, entry: Entry) {
        self.warnings.push(entry);
    }

    pub fn note(&mut self, entry: Entry) {
        self.notes.push(entry);
    }

    pub fn error(&mut self, entry: Entry) {
        self.errors.push(entry);
    }

    /// Records a dropped feature once, keeping first-seen order.
    pub fn drop_feature(&mut self, feature: impl Into<String>) {
        let feature = feature.into();
        if !self.dropped_features.contains(&feature) {
            self.dropped_features.push(feature);
        }
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    /// Appends another stage's findings. Counts are added.
    pub fn absorb(&mut self, other: ConversionReport) {
        self.counts.add(&other.counts);
        self.warnings.extend(other.warnings);
        self.notes.extend(other.notes);
        self.errors.extend(other.errors);
        for f in other.dropped_features {
            self.drop_feature(f);
        }
        if other.output.is_some() {
            self.output = other.output;
        }
        if let Some(t) = other.timing_ms {
            self.timing_ms = Some(self.timing_ms.unwrap_or(0) + t);
        }
    }

    pub fn count_by_code(&self, code: Code) -> usize {
        self.warnings
            .iter()
            .chain(&self.notes)
            .chain(&self.errors)
            .filter(|e| e.code == code)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Totals {
    pub files: u64,
    pub failed: u64,
    pub warnings: u64,
    pub errors: u64,
    pub counts: Counts,
}

/// Aggregate over many files, keyed by input path.
///
/// Merging is associative and commutative: files are stored in a sorted map
/// and totals are sums.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BatchReport {
    pub totals: Totals,
    pub files: BTreeMap<String, ConversionReport>,
}

impl BatchReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(path: impl Into<String>, report: ConversionReport) -> Self {
        let mut b = BatchReport::new();
        b.insert(path.into(), report);
        b
    }

    pub fn insert(&mut self, path: String, report: ConversionReport) {
        self.totals.files += 1;
        if report.has_errors() {
            self.totals.failed += 1;
        }
        self.totals.warnings += report.warnings.len() as u64;
        self.totals.errors += report.errors.len() as u64;
        self.totals.counts.add(&report.counts);
        if let Some(old) = self.files.insert(path, report) {
            // Re-inserting a path replaces it; undo the old contribution.
            self.totals.files -= 1;
            if old.has_errors() {
                self.totals.failed -= 1;
            }
            self.totals.warnings -= old.warnings.len() as u64;
            self.totals.errors -= old.errors.len() as u64;
            let c = &mut self.totals.counts;
            c.events -= old.counts.events;
            c.notes -= old.counts.notes;
            c.measures -= old.counts.measures;
            c.tuplets -= old.counts.tuplets;
            c.ties -= old.counts.ties;
        }
    }

    pub fn merge(mut self, other: BatchReport) -> BatchReport {
        for (path, report) in other.files {
            self.insert(path, report);
        }
        self
    }

    pub fn has_errors(&self) -> bool {
        self.totals.failed > 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (path, r) in &self.files {
            let status = if r.has_errors() { "FAILED" } else { "ok" };
            let _ = writeln!(
                out,
                "{path}: {status} ({} notes, {} measures, {} tuplets, {} ties)",
                r.counts.notes, r.counts.measures, r.counts.tuplets, r.counts.ties
            );
            for e in &r.errors {
                let _ = writeln!(out, "  error: {e}");
            }
            for w in &r.warnings {
                let _ = writeln!(out, "  warning: {w}");
            }
            for n in &r.notes {
                let _ = writeln!(out, "  note: {n}");
            }
            if !r.dropped_features.is_empty() {
                let _ = writeln!(out, "  dropped: {}", r.dropped_features.join(", "));
            }
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{} file(s), {} failed, {} warning(s), {} error(s)",
            t.files, t.failed, t.warnings, t.errors
        );
        out
    }
}
