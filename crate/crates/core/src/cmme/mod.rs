//! CMME-XML input: document model and parser.
//!
//! The parser accepts the part of the CMME schema the converter needs and
//! turns everything else into [`CmmeEvent::Unsupported`] events, so a
//! heterogeneous corpus degrades gracefully instead of failing.

mod parse;

use std::collections::BTreeMap;

pub use parse::{parse_document, parse_event, EventContext};

use crate::music::{NoteShape, Pitch};
use crate::rational::RationalDuration;
use crate::report::{Code, Location, Warning};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CmmeDocument {
    pub title: String,
    pub composer: String,
    pub editor: String,
    pub source_ids: Vec<SourceDecl>,
    pub voices: Vec<CmmeVoiceMeta>,
    pub sections: Vec<CmmeSection>,
    /// Unknown children of known elements, ignored during parsing.
    pub ignored: Vec<Warning>,
}

/// A variant source declared in the piece header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDecl {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmmeVoiceMeta {
    /// 1-based, consecutive.
    pub index: usize,
    pub name: String,
    pub editorial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SectionKind {
    Mensural,
    Plainchant,
    TextOnly,
}

impl SectionKind {
    pub fn name(self) -> &'static str {
        match self {
            SectionKind::Mensural => "mensural",
            SectionKind::Plainchant => "plainchant",
            SectionKind::TextOnly => "text-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeSection {
    pub kind: SectionKind,
    pub voice_event_lists: BTreeMap<usize, Vec<CmmeEvent>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LigatureFlag {
    #[default]
    None,
    Start,
    Mid,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeNote {
    pub shape: NoteShape,
    pub pitch: Pitch,
    pub explicit_length: Option<RationalDuration>,
    pub ligature: LigatureFlag,
    /// Ligature form as written in the source (`Recta`, `Obliqua`).
    pub ligature_form: Option<String>,
    pub colored: bool,
    pub corona: bool,
    pub signum: bool,
    /// Stem and flag details, kept verbatim.
    pub stem: Option<String>,
    pub syllable: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeRest {
    pub shape: NoteShape,
    pub explicit_length: Option<RationalDuration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DotKind {
    Addition,
    Division,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeClef {
    /// `C`, `F`, `G`, or an accidental sign such as `Bmol`.
    pub appearance: String,
    /// CMME staff location: 1 = bottom line, 2 = first space, ...
    pub staff_loc: i32,
    pub pitch: Option<Pitch>,
    pub signature: bool,
}

impl CmmeClef {
    /// 1-based staff line, rounding spaces down.
    pub fn staff_line(&self) -> i32 {
        (self.staff_loc + 1) / 2
    }

    /// Octave displacement carried by the clef's reference pitch.
    pub fn displacement(&self) -> Option<i32> {
        self.pitch.map(|p| p.octave)
    }

    /// True for key-signature accidentals encoded as clef events.
    pub fn is_signature_accidental(&self) -> bool {
        self.signature || self.accidental_sign().is_some()
    }

    pub fn accidental_sign(&self) -> Option<crate::music::Accidental> {
        use crate::music::Accidental;
        match self.appearance.to_ascii_lowercase().as_str() {
            "bmol" | "bmoldouble" | "flat" => Some(Accidental::Flat),
            "bqua" | "natural" => Some(Accidental::Natural),
            "diesis" | "sharp" => Some(Accidental::Sharp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MensSign {
    O,
    C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeMensuration {
    pub sign: Option<MensSign>,
    pub dot: bool,
    /// Number of vertical strokes (a cut sign has one).
    pub strokes: u8,
    pub reversed: bool,
    pub number: Option<u32>,
    /// 2 or 3 when stated explicitly.
    pub tempus: Option<u8>,
    pub prolatio: Option<u8>,
    /// A tempo change attached to the sign, as num:den.
    pub tempo_change: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CmmeProportion {
    pub num: u32,
    pub den: u32,
    pub tempo_change: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmeReading {
    pub source_refs: Vec<String>,
    pub events: Vec<CmmeEvent>,
    pub lacuna: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantGroup {
    pub default: Vec<CmmeEvent>,
    /// Sources that agree with the default reading.
    pub default_sources: Vec<String>,
    pub readings: Vec<CmmeReading>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CmmeEvent {
    Note(CmmeNote),
    Rest(CmmeRest),
    Dot(DotKind),
    Clef(CmmeClef),
    Mensuration(CmmeMensuration),
    Proportion(CmmeProportion),
    ColorChange(String),
    Custos(Pitch),
    OriginalText(String),
    LineEnd,
    MultiEventGroup(Vec<CmmeEvent>),
    VariantGroup(VariantGroup),
    EllipsisGap { extent: Option<RationalDuration> },
    Unsupported { tag: String, raw: String },
}

impl CmmeEvent {
    /// Pre-order visit of this event and every nested one. Nested lists are
    /// visited in the order the parser numbers them: group members, then the
    /// default reading, then the other readings.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a CmmeEvent)) {
        f(self);
        match self {
            CmmeEvent::MultiEventGroup(events) => events.iter().for_each(|e| e.visit(f)),
            CmmeEvent::VariantGroup(g) => {
                g.default.iter().for_each(|e| e.visit(f));
                for r in &g.readings {
                    r.events.iter().for_each(|e| e.visit(f));
                }
            }
            _ => {}
        }
    }
}

impl CmmeDocument {
    pub fn has_mensural_music(&self) -> bool {
        self.sections.iter().any(|s| s.kind == SectionKind::Mensural)
    }

    /// Number of events in all voice lists, nested events included.
    pub fn event_count(&self) -> usize {
        let mut n = 0;
        for s in &self.sections {
            for list in s.voice_event_lists.values() {
                for e in list {
                    e.visit(&mut |_| n += 1);
                }
            }
        }
        n
    }
}

/// One warning per unsupported event and per non-mensural section.
pub fn collect_warnings(doc: &CmmeDocument) -> Vec<Warning> {
    let mut out = Vec::new();
    for (si, section) in doc.sections.iter().enumerate() {
        if section.kind != SectionKind::Mensural {
            out.push(Warning::at(
                Code::NonMensuralSection,
                format!("{} section not converted", section.kind.name()),
                Location::section(si),
            ));
            continue;
        }
        for (&voice, events) in &section.voice_event_lists {
            let mut ordinal = 0;
            for e in events {
                e.visit(&mut |ev| {
                    if let CmmeEvent::Unsupported { tag, .. } = ev {
                        out.push(Warning::at(
                            Code::UnsupportedElement,
                            format!("unsupported element <{tag}>"),
                            Location::event(si, voice, ordinal),
                        ));
                    }
                    ordinal += 1;
                });
            }
        }
    }
    out
}
