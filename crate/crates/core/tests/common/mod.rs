//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mensura::cmme::parse_document;
use mensura::score::{build_score, ScoreIR, VariantSelector};
use mensura::RationalDuration;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(format!("{name}.cmme.xml"))
}

/// Every fixture, sorted by name.
pub fn fixtures() -> Vec<PathBuf> {
    let mut all: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .expect("fixture dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.to_string_lossy().ends_with(".cmme.xml"))
        .collect();
    all.sort();
    all
}

pub fn name_of(path: &Path) -> String {
    mensura::pipeline::stem(path)
}

pub fn load(path: &Path, sel: &VariantSelector) -> ScoreIR {
    let bytes = std::fs::read(path).expect("read fixture");
    let doc = parse_document(&bytes).expect("fixture parses");
    build_score(&doc, sel).expect("fixture builds").0
}

pub fn r(n: i64, d: i64) -> RationalDuration {
    RationalDuration::new(n, d)
}

/// Value of an MEI `@dur` with `dots`, in half notes.
pub fn mei_dur(dur: &str, dots: u32) -> RationalDuration {
    let base = match dur {
        "breve" => r(4, 1),
        "long" => r(8, 1),
        n => r(2, n.parse::<i64>().expect("numeric dur")),
    };
    let mut total = base;
    let mut add = base;
    for _ in 0..dots {
        add = add * r(1, 2);
        total += add;
    }
    total
}

/// Elements whose `@type` is `ty`.
pub fn count_typed(xml: &str, ty: &str) -> usize {
    let doc = roxmltree::Document::parse(xml).expect("output parses");
    doc.descendants().filter(|n| n.attribute("type") == Some(ty)).count()
}

/// Values of every `xml:id` in the document.
pub fn ids(xml: &str) -> Vec<String> {
    let doc = roxmltree::Document::parse(xml).expect("output parses");
    doc.descendants()
        .filter_map(|n| n.attribute(("http://www.w3.org/XML/1998/namespace", "id")))
        .map(str::to_string)
        .collect()
}
