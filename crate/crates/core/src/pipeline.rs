//! End-to-end conversion of one document and of whole directories.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use walkdir::WalkDir;

use crate::cmme::parse_document;
use crate::error::Error;
use crate::mei::cmn::{write_cmn, CmnWriteOptions};
use crate::mei::mensural::{write_mensural, MensuralWriteOptions};
use crate::report::{BatchReport, ConversionReport, Entry};
use crate::score::{build_score, VariantSelector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    #[default]
    Mensural,
    Cmn,
}

impl Target {
    pub fn suffix(self) -> &'static str {
        match self {
            Target::Mensural => ".mensural.mei",
            Target::Cmn => ".cmn.mei",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub target: Target,
    pub mei_basic: bool,
    pub reading: VariantSelector,
    pub id_prefix: String,
    pub fail_fast: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            target: Target::Mensural,
            mei_basic: false,
            reading: VariantSelector::Default,
            id_prefix: "m".into(),
            fail_fast: false,
        }
    }
}

fn record(report: &mut ConversionReport, err: Error) {
    let entry = match err.location() {
        Some(loc) => Entry::at(err.code(), err.to_string(), loc),
        None => Entry::new(err.code(), err.to_string()),
    };
    report.error(entry);
}

fn convert_inner(bytes: &[u8], cfg: &Config, report: &mut ConversionReport) -> Result<Vec<u8>, Error> {
    let doc = parse_document(bytes)?;
    let (ir, built) = build_score(&doc, &cfg.reading)?;
    report.absorb(built);
    let xml = match cfg.target {
        Target::Mensural => {
            let opt = MensuralWriteOptions { id_prefix: cfg.id_prefix.clone(), ..Default::default() };
            let (xml, r) = write_mensural(&ir, &opt)?;
            report.absorb(r);
            xml
        }
        Target::Cmn => {
            let (ms, r) = crate::cmn::convert(&ir, &cfg.reading);
            report.absorb(r);
            let opt = CmnWriteOptions { mei_basic: cfg.mei_basic, id_prefix: cfg.id_prefix.clone() };
            let (xml, r) = write_cmn(&ms, &opt)?;
            report.absorb(r);
            xml
        }
    };
    Ok(xml.to_document().into_bytes())
}

/// Converts an in-memory document. Output is `None` when a stage failed;
/// the failure is in the report.
pub fn convert_bytes(bytes: &[u8], cfg: &Config) -> (Option<Vec<u8>>, ConversionReport) {
    let start = Instant::now();
    let mut report = ConversionReport::new();
    let out = match convert_inner(bytes, cfg, &mut report) {
        Ok(out) => Some(out),
        Err(e) => {
            record(&mut report, e);
            None
        }
    };
    report.timing_ms = Some(start.elapsed().as_millis() as u64);
    (out, report)
}

pub fn convert_file(path: &Path, cfg: &Config) -> (Option<Vec<u8>>, ConversionReport) {
    log::debug!("converting {}", path.display());
    match std::fs::read(path) {
        Ok(bytes) => convert_bytes(&bytes, cfg),
        Err(source) => {
            let mut report = ConversionReport::new();
            record(&mut report, Error::Io { path: path.display().to_string(), source });
            (None, report)
        }
    }
}

/// File name without its `.cmme.xml` or `.xml` extension.
pub fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let lower = name.to_ascii_lowercase();
    for ext in [".cmme.xml", ".xml"] {
        if lower.ends_with(ext) {
            return name[..name.len() - ext.len()].to_string();
        }
    }
    name
}

/// True when the first element of the file is a CMME `Piece`.
pub fn sniff_cmme(path: &Path) -> bool {
    let Ok(text) = std::fs::read(path) else { return false };
    let head = String::from_utf8_lossy(&text[..text.len().min(8192)]).into_owned();
    let mut rest = head.as_str();
    while let Some(pos) = rest.find('<') {
        rest = &rest[pos + 1..];
        if rest.starts_with('?') || rest.starts_with('!') {
            continue;
        }
        let name: String = rest.chars().take_while(|c| !c.is_whitespace() && *c != '>' && *c != '/').collect();
        return name.rsplit(':').next() == Some("Piece");
    }
    false
}

/// CMME files under `dir`, sorted: every `*.cmme.xml` plus other `*.xml`
/// files whose root element is `Piece`.
pub fn discover(dir: &Path) -> Vec<PathBuf> {
    WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
            name.ends_with(".cmme.xml") || (name.ends_with(".xml") && sniff_cmme(p))
        })
        .collect()
}

/// Converts `input` and writes the result to `out`, recording the output
/// path or the write failure in the report.
pub fn convert_to(input: &Path, out: &Path, cfg: &Config) -> ConversionReport {
    let (bytes, mut report) = convert_file(input, cfg);
    if let Some(bytes) = bytes {
        let written = out
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .and_then(|()| std::fs::write(out, bytes));
        match written {
            Ok(()) => report.output = Some(out.display().to_string()),
            Err(source) => record(&mut report, Error::Io { path: out.display().to_string(), source }),
        }
    }
    report
}

/// Converts every CMME file under `dir`, mirroring its layout in `out_dir`.
pub fn batch(dir: &Path, out_dir: &Path, cfg: &Config) -> BatchReport {
    let files = discover(dir);
    log::info!("{} file(s) under {}", files.len(), dir.display());
    let job = |path: &PathBuf| {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        let target = out_dir.join(rel.parent().unwrap_or(Path::new(""))).join(format!("{}{}", stem(path), cfg.target.suffix()));
        (path.display().to_string(), convert_to(path, &target, cfg))
    };
    let mut report = BatchReport::new();
    if cfg.fail_fast {
        for path in &files {
            let (key, r) = job(path);
            let failed = r.has_errors();
            report.insert(key, r);
            if failed {
                break;
            }
        }
    } else {
        let parts: Vec<BatchReport> = files.par_iter().map(|p| {
            let (key, r) = job(p);
            BatchReport::single(key, r)
        }).collect();
        report = parts.into_iter().fold(report, BatchReport::merge);
    }
    report
}
