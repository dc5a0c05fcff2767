//! MEI output for the barred score.

use std::collections::BTreeMap;

use super::mensural::check_unique_ids;
use super::{mei_head, mei_root, MEI_VERSION};
use crate::cmn::{BracketKind, CmnKind, CmnNote, MeasuredScore, MeasuredVoice, Measure, MeterSig, NoteRef, Tie};
use crate::error::SerializationFailure;
use crate::music::Pitch;
use crate::report::{Code, ConversionReport, Entry};
use crate::xml::XmlNode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmnWriteOptions {
    pub mei_basic: bool,
    pub id_prefix: String,
}

impl Default for CmnWriteOptions {
    fn default() -> Self {
        CmnWriteOptions { mei_basic: false, id_prefix: "m".into() }
    }
}

fn note_id(prefix: &str, r: NoteRef) -> String {
    format!("{prefix}-v{}-n{}", r.voice, r.seq)
}

fn meter_sig(m: MeterSig) -> XmlNode {
    XmlNode::new("meterSig").attr("count", m.count).attr("unit", m.unit)
}

fn pitched(mut node: XmlNode, p: &Pitch) -> XmlNode {
    node.set_attr("pname", p.step.pname());
    node.set_attr("oct", p.octave);
    if let Some(acc) = p.accidental {
        node.push(XmlNode::new("accid").attr("accid", acc.mei()));
    }
    node
}

fn duration(mut node: XmlNode, n: &CmnNote) -> XmlNode {
    node.set_attr("dur", n.dur.mei());
    if n.dots > 0 {
        node.set_attr("dots", n.dots);
    }
    node
}

fn note_node(prefix: &str, n: &CmnNote) -> XmlNode {
    let id = note_id(prefix, n.id);
    match n.kind {
        CmnKind::Rest => duration(XmlNode::new("rest").attr("xml:id", id), n),
        CmnKind::Space => duration(XmlNode::new("space").attr("xml:id", id), n),
        CmnKind::Note if n.chord.is_empty() => {
            let node = duration(XmlNode::new("note").attr("xml:id", id), n);
            match &n.pitch {
                Some(p) => pitched(node, p),
                None => node,
            }
        }
        CmnKind::Note => {
            let mut chord = duration(XmlNode::new("chord").attr("xml:id", &id), n);
            let pitches = n.pitch.iter().chain(&n.chord);
            for (k, p) in pitches.enumerate() {
                chord.push(pitched(XmlNode::new("note").attr("xml:id", format!("{id}c{k}")), p));
            }
            chord
        }
    }
}

fn layer(prefix: &str, m: &Measure) -> XmlNode {
    let mut layer = XmlNode::new("layer").attr("n", 1);
    let by_index: BTreeMap<usize, &crate::cmn::TupletSpec> =
        m.tuplets.iter().flat_map(|t| t.members.first().map(|&i| (i, t))).collect();
    let mut i = 0;
    while i < m.notes.len() {
        match by_index.get(&i) {
            Some(t) => {
                let mut node = XmlNode::new("tuplet")
                    .attr("xml:id", format!("{prefix}-v{}-m{}-t{}", m.notes[i].id.voice, m.n, t.id))
                    .attr("num", t.num)
                    .attr("numbase", t.numbase);
                for &k in &t.members {
                    node.push(note_node(prefix, &m.notes[k]));
                }
                layer.push(node);
                i = t.members.last().map_or(i + 1, |&k| k + 1);
            }
            None => {
                layer.push(note_node(prefix, &m.notes[i]));
                i += 1;
            }
        }
    }
    layer
}

/// Serializes a barred score as MEI CMN.
pub fn write_cmn(ms: &MeasuredScore, opt: &CmnWriteOptions) -> Result<(XmlNode, ConversionReport), SerializationFailure> {
    let prefix = opt.id_prefix.as_str();
    let mut report = ConversionReport::new();

    let mut staff_grp = XmlNode::new("staffGrp");
    for v in &ms.voices {
        let (shape, line) = v.clef.shape_line();
        let mut clef = XmlNode::new("clef").attr("shape", shape).attr("line", line);
        if v.clef == crate::cmn::ClefChoice::G2OttavaBassa {
            clef.set_attr("dis", 8);
            clef.set_attr("dis.place", "below");
        }
        staff_grp.push(
            XmlNode::new("staffDef")
                .attr("n", v.index)
                .attr("lines", 5)
                .child(XmlNode::new("label").text(&v.name))
                .child(clef),
        );
    }
    let first_meter = ms.meter_map.entries.first().map_or(MeterSig::FOUR_TWO, |e| e.1);
    let score_def = XmlNode::new("scoreDef").child(meter_sig(first_meter)).child(staff_grp);

    // Control events keyed by 0-based measure index.
    let mut controls: BTreeMap<usize, Vec<XmlNode>> = BTreeMap::new();
    let mut measure_of: BTreeMap<NoteRef, usize> = BTreeMap::new();
    for v in &ms.voices {
        for (mi, m) in v.measures.iter().enumerate() {
            for n in &m.notes {
                measure_of.insert(n.id, mi);
            }
        }
    }
    for v in &ms.voices {
        ties_and_fermatas(prefix, v, &mut controls);
    }
    for (k, d) in ms.directives.iter().enumerate() {
        let mut dir = XmlNode::new("dir").attr("xml:id", format!("{prefix}-v{}-dir{k}", d.voice)).attr("staff", d.voice);
        match d.start {
            Some(r) => dir.set_attr("startid", format!("#{}", note_id(prefix, r))),
            None => dir.set_attr("tstamp", (d.offset + crate::RationalDuration::ONE).to_f64()),
        }
        controls.entry(d.measure).or_default().push(dir.text(&d.text));
    }
    let mut dropped: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, s) in ms.spans.iter().enumerate() {
        let func = match s.kind {
            BracketKind::Ligature => "ligature",
            BracketKind::Coloration => "coloration",
        };
        if opt.mei_basic {
            *dropped.entry(func).or_default() += 1;
            continue;
        }
        let mut node = XmlNode::new("bracketSpan")
            .attr("xml:id", format!("{prefix}-v{}-br{k}", s.start.voice))
            .attr("staff", s.start.voice)
            .attr("startid", format!("#{}", note_id(prefix, s.start)))
            .attr("endid", format!("#{}", note_id(prefix, s.end)))
            .attr("func", func)
            .attr("lform", "solid");
        if s.kind == BracketKind::Coloration {
            node.set_attr("lstartsym", "angledown");
            node.set_attr("lendsym", "angledown");
        }
        let mi = measure_of.get(&s.start).copied().unwrap_or(0);
        controls.entry(mi).or_default().push(node);
    }
    for (func, n) in dropped {
        report.warn(Entry::new(Code::SpanDropped, format!("{n} {func} bracket(s) dropped: not in MEI-Basic")));
        report.drop_feature(format!("{func} brackets"));
    }

    let mut section = XmlNode::new("section").attr("xml:id", format!("{prefix}-s0"));
    let count = ms.measure_count();
    let mut current = first_meter;
    for mi in 0..count {
        let meter = ms.voices[0].measures[mi].meter;
        if meter != current {
            section.push(XmlNode::new("scoreDef").child(meter_sig(meter)));
            current = meter;
        }
        let mut measure = XmlNode::new("measure").attr("xml:id", format!("{prefix}-m{}", mi + 1)).attr("n", mi + 1);
        for v in &ms.voices {
            let m = v.measures.get(mi).ok_or_else(|| {
                SerializationFailure(format!("voice {} has no measure {}", v.index, mi + 1))
            })?;
            measure.push(XmlNode::new("staff").attr("n", v.index).child(layer(prefix, m)));
        }
        for c in controls.remove(&mi).unwrap_or_default() {
            measure.push(c);
        }
        section.push(measure);
    }

    let score = XmlNode::new("score").child(score_def).child(section);
    let doc = mei_root(MEI_VERSION)
        .child(mei_head(&ms.title, &ms.composer, &ms.editor, &[], prefix))
        .child(XmlNode::new("music").child(XmlNode::new("body").child(XmlNode::new("mdiv").child(score))));
    check_unique_ids(&doc)?;
    if opt.mei_basic {
        if let Some(v) = super::basic::validate_basic_subset(&doc).first() {
            return Err(SerializationFailure(format!(
                "MEI-Basic output contains {}{}",
                v.path,
                v.attribute.as_ref().map(|a| format!("/@{a}")).unwrap_or_default()
            )));
        }
    }
    Ok((doc, report))
}

fn ties_and_fermatas(prefix: &str, v: &MeasuredVoice, controls: &mut BTreeMap<usize, Vec<XmlNode>>) {
    let notes: Vec<(usize, &CmnNote)> =
        v.measures.iter().enumerate().flat_map(|(mi, m)| m.notes.iter().map(move |n| (mi, n))).collect();
    for (k, &(mi, n)) in notes.iter().enumerate() {
        if matches!(n.tie, Tie::Start | Tie::Mid) {
            if let Some(&(_, next)) = notes.get(k + 1) {
                controls.entry(mi).or_default().push(
                    XmlNode::new("tie")
                        .attr("xml:id", format!("{prefix}-v{}-tie{}", v.index, n.id.seq))
                        .attr("staff", v.index)
                        .attr("startid", format!("#{}", note_id(prefix, n.id)))
                        .attr("endid", format!("#{}", note_id(prefix, next.id))),
                );
            }
        }
        if n.fermata {
            controls.entry(mi).or_default().push(
                XmlNode::new("fermata")
                    .attr("xml:id", format!("{prefix}-v{}-ferm{}", v.index, n.id.seq))
                    .attr("staff", v.index)
                    .attr("startid", format!("#{}", note_id(prefix, n.id)))
                    .attr("place", "above"),
            );
        }
    }
}
