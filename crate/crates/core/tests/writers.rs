mod common;

use std::collections::HashSet;

use common::{count_typed, fixture, fixtures, ids, load, mei_dur, name_of, r};
use mensura::mei::mensural::{write_mensural, MensuralWriteOptions};
use mensura::pipeline::{convert_bytes, Config, Target};
use mensura::score::VariantSelector;
use mensura::RationalDuration;
use roxmltree::Node;

fn convert(path: &std::path::Path, target: Target, mei_basic: bool) -> String {
    let cfg = Config { target, mei_basic, ..Config::default() };
    let (out, report) = convert_bytes(&std::fs::read(path).unwrap(), &cfg);
    assert!(!report.has_errors(), "{}: {:?}", path.display(), report.errors);
    String::from_utf8(out.expect("output")).unwrap()
}

fn dur_of(n: Node) -> RationalDuration {
    let dots = n.attribute("dots").map_or(0, |d| d.parse().unwrap());
    mei_dur(n.attribute("dur").expect("dur"), dots)
}

/// Time taken by a layer's children, with tuplets scaled by numbase/num.
fn layer_time(layer: Node) -> RationalDuration {
    let mut total = RationalDuration::ZERO;
    for c in layer.children().filter(Node::is_element) {
        match c.tag_name().name() {
            "tuplet" => {
                let num: i64 = c.attribute("num").unwrap().parse().unwrap();
                let numbase: i64 = c.attribute("numbase").unwrap().parse().unwrap();
                total += layer_time(c) * r(numbase, num);
            }
            "note" | "rest" | "space" | "chord" => total += dur_of(c),
            _ => {}
        }
    }
    total
}

#[test]
fn ids_are_unique_in_every_output() {
    for path in fixtures() {
        for (target, basic) in [(Target::Mensural, false), (Target::Cmn, false), (Target::Cmn, true)] {
            let xml = convert(&path, target, basic);
            let all = ids(&xml);
            let set: HashSet<_> = all.iter().collect();
            assert_eq!(set.len(), all.len(), "{} {target:?}", path.display());
        }
    }
}

#[test]
fn serialized_measures_fill_their_meter() {
    for path in fixtures() {
        let xml = convert(&path, Target::Cmn, false);
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let mut capacity = RationalDuration::ZERO;
        let measures: Vec<Node> = doc.descendants().filter(|n| n.has_tag_name("measure")).collect();
        let mut meters = doc.descendants().filter(|n| n.has_tag_name("meterSig") || n.has_tag_name("measure"));
        let mut caps = Vec::new();
        for n in &mut meters {
            if n.has_tag_name("meterSig") {
                let count: i64 = n.attribute("count").unwrap().parse().unwrap();
                let unit: i64 = n.attribute("unit").unwrap().parse().unwrap();
                capacity = r(count * 2, unit);
            } else {
                caps.push(capacity);
            }
        }
        assert_eq!(caps.len(), measures.len());
        for (k, (m, cap)) in measures.iter().zip(&caps).enumerate() {
            for layer in m.descendants().filter(|n| n.has_tag_name("layer")) {
                let t = layer_time(layer);
                if k + 1 < measures.len() {
                    assert_eq!(t, *cap, "{} measure {}", path.display(), k + 1);
                } else {
                    assert!(!t.is_zero() && t <= *cap, "{} last measure", path.display());
                }
            }
        }
    }
}

#[test]
fn cmn_output_preserves_total_sounding_time() {
    for path in fixtures() {
        let ir = load(&path, &VariantSelector::Default);
        let (flat, _) = mensura::cmn::flatten_editorial(&ir, &VariantSelector::Default);
        let longest = flat.voices.iter().map(|v| v.total_sounding()).max().unwrap();
        let xml = convert(&path, Target::Cmn, false);
        let doc = roxmltree::Document::parse(&xml).unwrap();
        for staff_n in 1..=flat.voices.len() {
            let n = staff_n.to_string();
            let total: RationalDuration = doc
                .descendants()
                .filter(|s| s.has_tag_name("staff") && s.attribute("n") == Some(n.as_str()))
                .flat_map(|s| s.children().filter(|c| c.has_tag_name("layer")).collect::<Vec<_>>())
                .map(layer_time)
                .sum();
            // Every voice is padded to the longest, then to the end of the bar.
            assert!(total >= longest, "{} staff {n}", name_of(&path));
        }
    }
}

#[test]
fn mensural_durations_follow_written_lengths() {
    // In C a brevis is four minims; an explicit length of 4 under O is
    // written as an imperfect brevis, i.e. ratio 3:2 against the nominal 6.
    let xml = convert(&fixture("explicit_lengths"), Target::Mensural, false);
    let doc = roxmltree::Document::parse(&xml).unwrap();
    let first = doc.descendants().find(|n| n.has_tag_name("note")).unwrap();
    assert_eq!(first.attribute("dur"), Some("brevis"));
    assert_eq!(first.attribute("num"), Some("3"));
    assert_eq!(first.attribute("numbase"), Some("2"));
}

#[test]
fn mensural_note_count_matches_score() {
    for path in fixtures() {
        let ir = load(&path, &VariantSelector::Default);
        let (xml, _) = write_mensural(&ir, &MensuralWriteOptions::default()).unwrap();
        let text = xml.to_document();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let in_main = doc
            .descendants()
            .filter(|n| n.has_tag_name("note") && n.parent().is_some_and(|p| !p.has_tag_name("chord")))
            .filter(|n| !n.ancestors().any(|a| a.has_tag_name("app")))
            .count();
        let expected: usize = ir
            .voices
            .iter()
            .flat_map(|v| &v.events)
            .filter(|e| e.is_note() && e.site.is_none())
            .count();
        assert_eq!(in_main, expected, "{}", name_of(&path));
    }
}

#[test]
fn apparatus_can_be_left_out() {
    let ir = load(&fixture("variants_lacuna"), &VariantSelector::Default);
    let opt = MensuralWriteOptions { include_apparatus: false, ..Default::default() };
    let (xml, _) = write_mensural(&ir, &opt).unwrap();
    let text = xml.to_document();
    assert_eq!(count_typed(&text, "lacuna"), 0);
    assert!(!text.contains("<app"));
}
