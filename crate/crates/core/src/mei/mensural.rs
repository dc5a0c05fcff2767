//! MEI mensural output.
//!
//! Durations keep the source shapes under the minima equivalence; lengths
//! that differ from the shape's nominal value get an exact `num`/`numbase`
//! pair. CMME features without a native MEI element are kept as `@type`
//! values on the closest element and listed in the report.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{mei_head, mei_root, source_xml_id, MEI_VERSION};
use crate::cmme::DotKind;
use crate::error::SerializationFailure;
use crate::report::{Code, ConversionReport, Warning};
use crate::score::{nominal_minima, EventKind, Marker, Mensuration, Proportion, ScoreEvent, ScoreIR, VariantSite};
use crate::xml::XmlNode;

pub const TYPE_SIGNUM: &str = "signum_congruentiae";
pub const TYPE_ELLIPSIS: &str = "ellipsis";
pub const TYPE_LACUNA: &str = "lacuna";
pub const TYPE_TEMPO_CHANGE: &str = "cmme_tempo_change";
pub const TYPE_LIG_ACCID: &str = "cmme_lig_accid";

/// Durations are always expressed against the minima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Equivalence {
    #[default]
    Minima,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MensuralWriteOptions {
    pub equivalence: Equivalence,
    pub include_apparatus: bool,
    pub id_prefix: String,
}

impl Default for MensuralWriteOptions {
    fn default() -> Self {
        MensuralWriteOptions { equivalence: Equivalence::Minima, include_apparatus: true, id_prefix: "m".into() }
    }
}

/// Shape plus, when the written length is not the nominal one, the
/// `num`/`numbase` pair with `nominal × numbase / num = written`.
pub fn duration_attributes(ev: &ScoreEvent, m: &Mensuration) -> Vec<(&'static str, String)> {
    let Some(shape) = ev.shape else {
        return Vec::new();
    };
    let mut attrs = vec![("dur", shape.mei().to_string())];
    let nominal = nominal_minima(shape, m);
    if ev.written_minima != nominal && !ev.written_minima.is_zero() {
        let ratio = nominal / ev.written_minima;
        attrs.push(("num", ratio.numer().to_string()));
        attrs.push(("numbase", ratio.denom().to_string()));
    }
    attrs
}

pub fn encode_proportion(p: &Proportion) -> XmlNode {
    let mut node = XmlNode::new("proport").attr("num", p.num).attr("numbase", p.den);
    if p.tempo_change {
        node.set_attr("type", TYPE_TEMPO_CHANGE);
    }
    node
}

/// Accidental on a note inside a ligature. MEI has no native encoding for
/// it, so the accidental is attached as a child and the note typed.
pub fn encode_ligature_accidental(note: XmlNode, ev: &ScoreEvent) -> (XmlNode, Option<Warning>) {
    let Some(acc) = ev.pitch.and_then(|p| p.accidental) else {
        return (note, None);
    };
    let mut note = note.attr("type", TYPE_LIG_ACCID);
    note.push(XmlNode::new("accid").attr("accid", acc.mei()));
    let warning = Warning::at(
        Code::LigatureAccidental,
        "accidental inside a ligature kept as a typed note child",
        ev.source,
    );
    (note, Some(warning))
}

struct Writer<'a> {
    ir: &'a ScoreIR,
    opt: &'a MensuralWriteOptions,
    report: ConversionReport,
    typed: BTreeMap<&'static str, usize>,
    voice: usize,
}

impl Writer<'_> {
    fn id(&self, ordinal: usize) -> String {
        format!("{}-v{}-e{}", self.opt.id_prefix, self.voice, ordinal)
    }

    fn typed(&mut self, t: &'static str) {
        *self.typed.entry(t).or_default() += 1;
    }

    /// Renders events in order, wrapping ligature runs.
    fn render(&mut self, events: &[&ScoreEvent], out: &mut XmlNode) {
        let mut i = 0;
        while i < events.len() {
            let Some(lig) = events[i].ligature else {
                self.render_one(events[i], out);
                i += 1;
                continue;
            };
            let last = events.iter().rposition(|e| e.ligature == Some(lig)).unwrap_or(i);
            let mut node = XmlNode::new("ligature")
                .attr("xml:id", format!("{}-v{}-lig{}", self.opt.id_prefix, self.voice, lig));
            if let Some(form) = &events[i].ligature_form {
                node.set_attr("form", form.to_ascii_lowercase());
            }
            for ev in &events[i..=last] {
                self.render_one(ev, &mut node);
            }
            out.push(node);
            i = last + 1;
        }
    }

    fn render_one(&mut self, ev: &ScoreEvent, out: &mut XmlNode) {
        let id = self.id(ev.ordinal);
        match &ev.kind {
            EventKind::Note => {
                let mut node = XmlNode::new("note").attr("xml:id", &id);
                for (k, v) in duration_attributes(ev, &ev.mensuration) {
                    node.set_attr(k, v);
                }
                if let Some(p) = ev.pitch {
                    node.set_attr("pname", p.step.pname());
                    node.set_attr("oct", p.octave);
                }
                if ev.coloration.is_some() {
                    node.set_attr("colored", "true");
                }
                if ev.markers.contains(&Marker::Signum) {
                    node.set_attr("type", TYPE_SIGNUM);
                    self.typed(TYPE_SIGNUM);
                }
                if ev.markers.contains(&Marker::Corona) {
                    node.set_attr("fermata", "above");
                }
                let accidental = ev.pitch.and_then(|p| p.accidental);
                if ev.ligature.is_some() && accidental.is_some() {
                    // A signum type on the same note wins over the workaround type.
                    let signum = node.get_attr("type").map(str::to_string);
                    let (mut n, warning) = encode_ligature_accidental(node, ev);
                    if let Some(t) = signum {
                        n.set_attr("type", t);
                    } else {
                        self.typed(TYPE_LIG_ACCID);
                    }
                    self.report.warn(warning.expect("accidental present"));
                    node = n;
                } else if let Some(acc) = accidental {
                    node.push(XmlNode::new("accid").attr("accid", acc.mei()));
                }
                if let Some(syl) = &ev.syllable {
                    node.push(XmlNode::new("verse").child(XmlNode::new("syl").text(syl)));
                }
                out.push(node);
            }
            EventKind::Rest => {
                let mut node = XmlNode::new("rest").attr("xml:id", &id);
                for (k, v) in duration_attributes(ev, &ev.mensuration) {
                    node.set_attr(k, v);
                }
                out.push(node);
            }
            EventKind::Clef(c) => {
                if let Some(acc) = c.signature {
                    let mut ka = XmlNode::new("keyAccid").attr("accid", acc.mei());
                    if let Some(p) = c.pitch {
                        ka.set_attr("pname", p.step.pname());
                        ka.set_attr("oct", p.octave);
                    }
                    out.push(XmlNode::new("keySig").attr("xml:id", &id).child(ka));
                    return;
                }
                let shape = match c.appearance.chars().next().map(|ch| ch.to_ascii_uppercase()) {
                    Some(s @ ('C' | 'F' | 'G')) => s.to_string(),
                    _ => {
                        self.report.warn(Warning::at(
                            Code::ClefFallback,
                            format!("unknown clef appearance {:?}; written as C", c.appearance),
                            ev.source,
                        ));
                        "C".to_string()
                    }
                };
                out.push(
                    XmlNode::new("clef")
                        .attr("xml:id", &id)
                        .attr("shape", shape)
                        .attr("line", c.staff_line.clamp(1, 5)),
                );
            }
            EventKind::Mensur => {
                let m = &ev.mensuration;
                let mut node = XmlNode::new("mensur").attr("xml:id", &id);
                if let Some(sign) = m.sign {
                    node.set_attr("sign", format!("{sign:?}"));
                }
                if m.dot {
                    node.set_attr("dot", "true");
                }
                if m.cut {
                    node.set_attr("slash", 1);
                }
                if m.reversed {
                    node.set_attr("orient", "reversed");
                }
                if let Some(n) = m.number {
                    node.set_attr("num", n);
                }
                node.set_attr("tempus", if m.tempus == crate::score::Tempus::Perfect { 3 } else { 2 });
                node.set_attr("prolatio", if m.prolatio == crate::score::Prolatio::Major { 3 } else { 2 });
                out.push(node);
            }
            EventKind::Proport(p) => {
                let mut node = encode_proportion(p);
                node.attributes.insert(0, ("xml:id".into(), id));
                if p.tempo_change {
                    self.typed(TYPE_TEMPO_CHANGE);
                }
                out.push(node);
            }
            EventKind::Dot(kind) => {
                let form = if *kind == DotKind::Division { "div" } else { "aug" };
                out.push(XmlNode::new("dot").attr("xml:id", &id).attr("form", form));
            }
            EventKind::Custos => {
                let mut node = XmlNode::new("custos").attr("xml:id", &id);
                if let Some(p) = ev.pitch {
                    node.set_attr("pname", p.step.pname());
                    node.set_attr("oct", p.octave);
                }
                out.push(node);
            }
            EventKind::Text(_) => self.report.drop_feature("original text"),
            EventKind::ColorChange(_) => self.report.drop_feature("coloration change"),
            EventKind::LineEnd => out.push(XmlNode::new("sb").attr("xml:id", &id)),
            EventKind::Gap => {
                let mut node = XmlNode::new("gap").attr("xml:id", &id).attr("type", TYPE_ELLIPSIS);
                self.typed(TYPE_ELLIPSIS);
                if !ev.written_minima.is_zero() {
                    node.set_attr("unit", "minima");
                    node.set_attr("quantity", ev.written_minima.to_f64());
                }
                out.push(node);
            }
            EventKind::VariantAnchor(site) => {
                if self.opt.include_apparatus {
                    if let Some(site) = self.ir.site(*site) {
                        let app = self.apparatus(site);
                        out.push(app);
                    }
                }
            }
        }
    }

    fn apparatus(&mut self, site: &VariantSite) -> XmlNode {
        let base = format!("{}-v{}-app{}", self.opt.id_prefix, self.voice, site.id);
        let mut app = XmlNode::new("app").attr("xml:id", &base);
        let readings = std::iter::once(("lem".to_string(), &site.default))
            .chain(site.readings.iter().enumerate().map(|(k, r)| (format!("rdg{}", k + 1), r)));
        for (suffix, reading) in readings {
            let name = if suffix == "lem" { "lem" } else { "rdg" };
            let mut node = XmlNode::new(name).attr("xml:id", format!("{base}-{suffix}"));
            if !reading.sources.is_empty() {
                let refs: Vec<String> = reading
                    .sources
                    .iter()
                    .map(|s| format!("#{}", source_xml_id(&self.opt.id_prefix, s)))
                    .collect();
                node.set_attr("source", refs.join(" "));
            }
            if reading.lacuna {
                node.set_attr("type", TYPE_LACUNA);
                self.typed(TYPE_LACUNA);
            }
            let events: Vec<&ScoreEvent> = reading.events.iter().filter(|e| e.site == Some(site.id)).collect();
            self.render(&events, &mut node);
            app.push(node);
        }
        app
    }
}

/// Serializes the score as an MEI mensural document.
pub fn write_mensural(
    ir: &ScoreIR,
    opt: &MensuralWriteOptions,
) -> Result<(XmlNode, ConversionReport), SerializationFailure> {
    let mut w = Writer { ir, opt, report: ConversionReport::new(), typed: BTreeMap::new(), voice: 0 };
    if !opt.include_apparatus && !ir.apparatus.is_empty() {
        w.report.drop_feature("variant apparatus");
    }

    let mut staff_grp = XmlNode::new("staffGrp");
    for v in &ir.voices {
        let mut def = XmlNode::new("staffDef")
            .attr("n", v.index)
            .attr("lines", 5)
            .attr("notationtype", "mensural.white");
        def.push(XmlNode::new("label").text(&v.name));
        staff_grp.push(def);
    }
    let score_def = XmlNode::new("scoreDef").attr("notationtype", "mensural.white").child(staff_grp);
    let mut score = XmlNode::new("score").child(score_def);

    let sections: BTreeSet<usize> = ir
        .voices
        .iter()
        .flat_map(|v| v.events.iter().filter_map(|e| e.source.section))
        .collect();
    for si in sections {
        let mut section = XmlNode::new("section").attr("xml:id", format!("{}-s{si}", opt.id_prefix));
        for v in &ir.voices {
            w.voice = v.index;
            let events: Vec<&ScoreEvent> = v
                .events
                .iter()
                .filter(|e| e.source.section == Some(si))
                .filter(|e| {
                    if opt.include_apparatus {
                        e.site.is_none()
                    } else {
                        !matches!(e.kind, EventKind::VariantAnchor(_))
                    }
                })
                .collect();
            if events.is_empty() {
                continue;
            }
            let mut layer = XmlNode::new("layer").attr("n", 1);
            w.render(&events, &mut layer);
            section.push(XmlNode::new("staff").attr("n", v.index).child(layer));
        }
        score.push(section);
    }

    let sources = if opt.include_apparatus { ir.sources.as_slice() } else { &[] };
    let doc = mei_root(MEI_VERSION)
        .child(mei_head(&ir.title, &ir.composer, &ir.editor, sources, &opt.id_prefix))
        .child(XmlNode::new("music").child(
            XmlNode::new("body").child(XmlNode::new("mdiv").child(score)),
        ));

    check_unique_ids(&doc)?;
    let mut report = w.report;
    for (t, n) in &w.typed {
        report.note(Warning::new(Code::TypedAsGeneric, format!("{n} element(s) typed {t:?}")));
    }
    Ok((doc, report))
}

pub(crate) fn check_unique_ids(doc: &XmlNode) -> Result<(), SerializationFailure> {
    let mut seen = HashSet::new();
    let mut dup = None;
    doc.walk(&mut |_, n| {
        if let Some(id) = n.get_attr("xml:id") {
            if !seen.insert(id.to_string()) && dup.is_none() {
                dup = Some(id.to_string());
            }
        }
    });
    match dup {
        Some(id) => Err(SerializationFailure(format!("duplicate xml:id {id}"))),
        None => Ok(()),
    }
}
