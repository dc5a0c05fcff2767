mod common;

use std::fs;
use std::path::Path;

use common::{fixture, fixtures};
use mensura::cli::run;
use mensura::pipeline::{batch, convert_file, Config, Target};
use mensura::report::{BatchReport, ConversionReport};

fn args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["mensura", "convert", "--report", "json"];
    v.extend_from_slice(extra);
    v
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn count_notes(file: &Path) -> usize {
    let text = fs::read_to_string(file).expect("output written");
    let doc = roxmltree::Document::parse(&text).expect("output parses");
    doc.descendants().filter(|n| n.has_tag_name("note")).count()
}

#[test]
fn single_file_writes_mensural_output_and_report() {
    let out = tempfile::tempdir().unwrap();
    let input = fixture("signum");
    assert_eq!(run(args(&[path(&input), "-o", path(out.path())])), 0);
    assert!(out.path().join("signum.mensural.mei").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["totals"]["files"], 1);
    assert_eq!(report["totals"]["failed"], 0);
}

#[test]
fn cmn_target_uses_its_own_suffix() {
    let out = tempfile::tempdir().unwrap();
    let input = fixture("coloration");
    assert_eq!(run(args(&["--to", "cmn", path(&input), "-o", path(out.path())])), 0);
    assert!(out.path().join("coloration.cmn.mei").is_file());
    assert!(!out.path().join("coloration.mensural.mei").exists());
}

#[test]
fn mei_basic_requires_cmn_target() {
    let out = tempfile::tempdir().unwrap();
    let input = fixture("signum");
    assert_eq!(run(args(&["--mei-basic", path(&input), "-o", path(out.path())])), 2);
    assert!(!out.path().join("report.json").exists());
}

#[test]
fn malformed_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.cmme.xml");
    fs::write(&bad, "<Piece xmlns=\"http://www.cmme.org\"><GeneralData>").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(args(&[path(&bad), "-o", path(&out)])), 1);
    assert!(!out.join("broken.mensural.mei").exists());
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("malformed_xml"), "{report}");
}

#[test]
fn batch_with_one_bad_file_converts_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(input.join("nested")).unwrap();
    fs::copy(fixture("signum"), input.join("signum.cmme.xml")).unwrap();
    fs::copy(fixture("ellipsis"), input.join("nested/ellipsis.cmme.xml")).unwrap();
    fs::write(input.join("broken.cmme.xml"), "not xml at all").unwrap();
    fs::write(input.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(args(&["--to", "cmn", path(&input), "-o", path(&out)])), 1);
    assert!(out.join("signum.cmn.mei").is_file());
    assert!(out.join("nested/ellipsis.cmn.mei").is_file());
    assert!(!out.join("broken.cmn.mei").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["totals"]["files"], 3);
    assert_eq!(report["totals"]["failed"], 1);
}

#[test]
fn fail_fast_stops_after_first_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    fs::write(input.join("a_broken.cmme.xml"), "<oops").unwrap();
    fs::copy(fixture("signum"), input.join("b_signum.cmme.xml")).unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(args(&["--fail-fast", path(&input), "-o", path(&out)])), 1);
    assert!(!out.join("b_signum.mensural.mei").exists());
}

#[test]
fn empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(args(&[path(dir.path()), "-o", path(&out)])), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["totals"]["files"], 0);
}

#[test]
fn plain_xml_is_sniffed_in_directories() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    fs::copy(fixture("signum"), input.join("piece.xml")).unwrap();
    fs::write(input.join("other.xml"), "<html/>").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(args(&[path(&input), "-o", path(&out)])), 0);
    assert!(out.join("piece.mensural.mei").is_file());
    assert!(!out.join("other.mensural.mei").exists());
}

#[test]
fn reading_selects_a_source() {
    let out = tempfile::tempdir().unwrap();
    let input = fixture("variants_lacuna");
    let a = out.path().join("a");
    let b = out.path().join("b");
    assert_eq!(run(args(&["--to", "cmn", path(&input), "-o", path(&a)])), 0);
    assert_eq!(run(args(&["--to", "cmn", "--reading", "B", path(&input), "-o", path(&b)])), 0);
    let default = count_notes(&a.join("variants_lacuna.cmn.mei"));
    let source_b = count_notes(&b.join("variants_lacuna.cmn.mei"));
    // Source B has four minims where the default reading has two semibreves.
    assert_eq!(source_b, default + 2);
}

#[test]
fn batch_report_is_the_sum_of_single_reports() {
    let cfg = Config { target: Target::Cmn, ..Config::default() };
    let out = tempfile::tempdir().unwrap();
    let whole = batch(&common::fixture_dir(), out.path(), &cfg);
    let summed = fixtures()
        .iter()
        .map(|p| {
            let (_, r): (_, ConversionReport) = convert_file(p, &cfg);
            BatchReport::single(p.display().to_string(), r)
        })
        .fold(BatchReport::new(), BatchReport::merge);
    assert_eq!(whole.totals.files, summed.totals.files);
    assert_eq!(whole.totals.warnings, summed.totals.warnings);
    assert_eq!(whole.totals.errors, summed.totals.errors);
    assert_eq!(whole.totals.counts, summed.totals.counts);
}
