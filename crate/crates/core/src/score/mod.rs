//! Normalized score: per-voice event streams with resolved mensuration,
//! proportions and exact durations in minima.

mod build;

use std::collections::BTreeSet;
use std::fmt;

pub use build::build_score;

use crate::cmme::{CmmeEvent, CmmeMensuration, DotKind, MensSign, SourceDecl};
pub use crate::music::{Accidental, NoteShape, Pitch, Step};
use crate::rational::RationalDuration;
use crate::report::{Code, Location, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tempus {
    Perfect,
    Imperfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prolatio {
    Major,
    Minor,
}

/// A resolved mensuration sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mensuration {
    pub sign: Option<MensSign>,
    pub dot: bool,
    pub cut: bool,
    pub reversed: bool,
    pub number: Option<u32>,
    pub tempus: Tempus,
    pub prolatio: Prolatio,
}

impl Mensuration {
    /// Plain `C`: imperfect tempus, minor prolation.
    pub const DEFAULT: Mensuration = Mensuration {
        sign: Some(MensSign::C),
        dot: false,
        cut: false,
        reversed: false,
        number: None,
        tempus: Tempus::Imperfect,
        prolatio: Prolatio::Minor,
    };

    /// Builds a sign with tempus/prolatio derived from its shape.
    pub fn from_sign(sign: MensSign, dot: bool, cut: bool, number: Option<u32>) -> Self {
        Mensuration {
            sign: Some(sign),
            dot,
            cut,
            reversed: false,
            number,
            tempus: if sign == MensSign::O { Tempus::Perfect } else { Tempus::Imperfect },
            prolatio: if dot { Prolatio::Major } else { Prolatio::Minor },
        }
    }

    /// Explicit tempus/prolatio values win over the shape of the sign.
    pub fn from_cmme(m: &CmmeMensuration) -> Self {
        let tempus = match (m.tempus, m.sign) {
            (Some(3), _) => Tempus::Perfect,
            (Some(_), _) => Tempus::Imperfect,
            (None, Some(MensSign::O)) => Tempus::Perfect,
            (None, _) => Tempus::Imperfect,
        };
        let prolatio = match m.prolatio {
            Some(3) => Prolatio::Major,
            Some(_) => Prolatio::Minor,
            None if m.dot => Prolatio::Major,
            None => Prolatio::Minor,
        };
        Mensuration {
            sign: m.sign,
            dot: m.dot,
            cut: m.strokes > 0,
            reversed: m.reversed,
            number: m.number,
            tempus,
            prolatio,
        }
    }

    /// Textual transcription of the sign, e.g. `O`, `C·`, `¢`, `C3`.
    pub fn sign_text(&self) -> String {
        let mut s = String::new();
        match (self.sign, self.cut) {
            (Some(MensSign::C), true) if self.reversed => s.push_str("Ↄ|"),
            (Some(MensSign::C), true) => s.push('¢'),
            (Some(MensSign::C), false) if self.reversed => s.push('Ↄ'),
            (Some(MensSign::C), false) => s.push('C'),
            (Some(MensSign::O), true) => s.push_str("O|"),
            (Some(MensSign::O), false) => s.push('O'),
            (None, _) => {}
        }
        if self.dot {
            s.push('·');
        }
        if let Some(n) = self.number {
            s.push_str(&n.to_string());
        }
        s
    }
}

impl fmt::Display for Mensuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sign_text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Proportion {
    pub num: u32,
    pub den: u32,
    pub tempo_change: bool,
}

impl Proportion {
    pub fn new(num: u32, den: u32) -> Self {
        Proportion { num, den, tempo_change: false }
    }

    pub fn tempo(num: u32, den: u32) -> Self {
        Proportion { num, den, tempo_change: true }
    }

    pub fn is_reset(&self) -> bool {
        self.num == 1 && self.den == 1
    }
}

/// Proportions in force, outermost first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProportionState {
    pub stack: Vec<Proportion>,
}

impl ProportionState {
    /// Stacks `p`; a 1:1 proportion clears the stack instead.
    pub fn apply(&mut self, p: Proportion) {
        if p.is_reset() {
            self.stack.clear();
        } else {
            self.stack.push(p);
        }
    }

    /// Product of den/num over the stack; tempo changes count as 1.
    pub fn factor(&self) -> RationalDuration {
        self.stack
            .iter()
            .filter(|p| !p.tempo_change)
            .fold(RationalDuration::ONE, |acc, p| {
                acc * RationalDuration::new(i64::from(p.den), i64::from(p.num))
            })
    }
}

/// Unproportioned length of a shape under a mensuration, in minimae.
///
/// Modus is taken as imperfect; CMME supplies explicit lengths where a
/// perfect longa or maxima occurs.
pub fn nominal_minima(shape: NoteShape, m: &Mensuration) -> RationalDuration {
    let semibrevis = if m.prolatio == Prolatio::Major { 3 } else { 2 };
    let brevis = semibrevis * if m.tempus == Tempus::Perfect { 3 } else { 2 };
    match shape {
        NoteShape::Semifusa => RationalDuration::new(1, 8),
        NoteShape::Fusa => RationalDuration::new(1, 4),
        NoteShape::Semiminima => RationalDuration::new(1, 2),
        NoteShape::Minima => RationalDuration::ONE,
        NoteShape::Semibrevis => RationalDuration::from_integer(semibrevis),
        NoteShape::Brevis => RationalDuration::from_integer(brevis),
        NoteShape::Longa => RationalDuration::from_integer(brevis * 2),
        NoteShape::Maxima => RationalDuration::from_integer(brevis * 4),
    }
}

/// Written length of a note or rest: the explicit CMME length when present,
/// else the nominal value. Returns `None` for other events.
pub fn written_minima(event: &CmmeEvent, m: &Mensuration) -> Option<RationalDuration> {
    let (shape, explicit) = match event {
        CmmeEvent::Note(n) => (n.shape, n.explicit_length),
        CmmeEvent::Rest(r) => (r.shape, r.explicit_length),
        _ => return None,
    };
    Some(explicit.unwrap_or_else(|| nominal_minima(shape, m)))
}

pub fn sounding_minima(written: RationalDuration, p: &ProportionState) -> RationalDuration {
    written * p.factor()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Marker {
    Signum,
    Corona,
    Ellipsis,
    Lacuna,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClefInfo {
    pub appearance: String,
    pub staff_line: i32,
    pub signature: Option<Accidental>,
    pub pitch: Option<Pitch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Note,
    Rest,
    Clef(ClefInfo),
    Mensur,
    Proport(Proportion),
    Dot(DotKind),
    Custos,
    /// Original text, a source for directives.
    Text(String),
    ColorChange(String),
    LineEnd,
    /// An ellipsis gap; may occupy time.
    Gap,
    /// Position of a variant site; the selected reading's events follow.
    VariantAnchor(usize),
}

pub type SpanId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreEvent {
    pub kind: EventKind,
    pub pitch: Option<Pitch>,
    pub shape: Option<NoteShape>,
    pub written_minima: RationalDuration,
    pub sounding_minima: RationalDuration,
    /// Voice-relative onset on the sounding timeline.
    pub onset_minima: RationalDuration,
    /// Mensuration in force at the onset.
    pub mensuration: Mensuration,
    /// sounding / written for proportioned durations (tempo changes excluded).
    pub proportion: RationalDuration,
    pub ligature: Option<SpanId>,
    pub ligature_form: Option<String>,
    pub coloration: Option<SpanId>,
    pub markers: BTreeSet<Marker>,
    pub syllable: Option<String>,
    /// Variant site this event belongs to, if any.
    pub site: Option<usize>,
    /// Sounds together with the preceding timeline event (multi-event
    /// member); does not advance the cursor.
    pub simultaneous: bool,
    /// Per-voice id, unique across the stream and the apparatus.
    pub ordinal: usize,
    pub source: Location,
}

impl ScoreEvent {
    /// A zero-length event of the given kind with neutral state.
    pub fn new(kind: EventKind) -> Self {
        ScoreEvent {
            kind,
            pitch: None,
            shape: None,
            written_minima: RationalDuration::ZERO,
            sounding_minima: RationalDuration::ZERO,
            onset_minima: RationalDuration::ZERO,
            mensuration: Mensuration::DEFAULT,
            proportion: RationalDuration::ONE,
            ligature: None,
            ligature_form: None,
            coloration: None,
            markers: BTreeSet::new(),
            syllable: None,
            site: None,
            simultaneous: false,
            ordinal: 0,
            source: Location::default(),
        }
    }

    pub fn is_note(&self) -> bool {
        self.kind == EventKind::Note
    }

    pub fn is_rest(&self) -> bool {
        self.kind == EventKind::Rest
    }

    /// Notes, rests and gaps occupy the timeline.
    pub fn is_timed(&self) -> bool {
        matches!(self.kind, EventKind::Note | EventKind::Rest | EventKind::Gap)
    }

    pub fn end_minima(&self) -> RationalDuration {
        self.onset_minima + self.sounding_minima
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoiceStream {
    pub index: usize,
    pub name: String,
    pub editorial: bool,
    pub events: Vec<ScoreEvent>,
}

impl VoiceStream {
    /// Timeline events: notes, rests and gaps that advance the cursor.
    pub fn timed(&self) -> impl Iterator<Item = &ScoreEvent> {
        self.events.iter().filter(|e| e.is_timed() && !e.simultaneous)
    }

    pub fn total_sounding(&self) -> RationalDuration {
        self.timed().map(|e| e.sounding_minima).sum()
    }

    pub fn end_minima(&self) -> RationalDuration {
        self.timed().last().map_or(RationalDuration::ZERO, ScoreEvent::end_minima)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteReading {
    pub sources: Vec<String>,
    pub events: Vec<ScoreEvent>,
    pub lacuna: bool,
    pub total_sounding: RationalDuration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSite {
    pub id: usize,
    pub voice: usize,
    pub onset: RationalDuration,
    pub default: SiteReading,
    pub readings: Vec<SiteReading>,
    /// Reading carried by the main stream: `None` for the default.
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum VariantSelector {
    #[default]
    Default,
    BySource(String),
}

impl VariantSelector {
    /// `default` (any case) selects the default reading; anything else is a
    /// source id.
    pub fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case("default") {
            VariantSelector::Default
        } else {
            VariantSelector::BySource(s.to_string())
        }
    }
}

/// Picks the reading of `site` matching `sel`.
///
/// Returns the reading index (`None` for the default) and a warning when a
/// source id is not attested at this site and the default is used instead.
pub fn select_reading_index(site: &VariantSite, sel: &VariantSelector) -> (Option<usize>, Option<Warning>) {
    let VariantSelector::BySource(id) = sel else {
        return (None, None);
    };
    if let Some(i) = site.readings.iter().position(|r| r.sources.iter().any(|s| s == id)) {
        return (Some(i), None);
    }
    if site.default.sources.iter().any(|s| s == id) {
        return (None, None);
    }
    let warning = Warning::at(
        Code::UnknownReading,
        format!("no reading from source {id:?} at variant site {}; using the default", site.id),
        Location::voice(site.voice),
    );
    (None, Some(warning))
}

/// Events of the reading of `site` matching `sel`, falling back to the
/// default reading with a warning.
pub fn select_reading<'a>(site: &'a VariantSite, sel: &VariantSelector) -> (&'a [ScoreEvent], Option<Warning>) {
    let (idx, warning) = select_reading_index(site, sel);
    let events = match idx {
        Some(i) => &site.readings[i].events,
        None => &site.default.events,
    };
    (events, warning)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreIR {
    pub title: String,
    pub composer: String,
    pub editor: String,
    pub sources: Vec<SourceDecl>,
    /// Top voice first, in declaration order.
    pub voices: Vec<VoiceStream>,
    pub apparatus: Vec<VariantSite>,
    /// Selector used to fill the main streams.
    pub selection: VariantSelector,
}

impl ScoreIR {
    pub fn site(&self, id: usize) -> Option<&VariantSite> {
        self.apparatus.iter().find(|s| s.id == id)
    }

    pub fn note_count(&self) -> usize {
        self.voices.iter().map(|v| v.events.iter().filter(|e| e.is_note()).count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmme::{CmmeNote, CmmeRest, LigatureFlag};

    fn r(n: i64, d: i64) -> RationalDuration {
        RationalDuration::new(n, d)
    }

    #[test]
    fn nominal_values() {
        let c = Mensuration::from_sign(MensSign::C, false, false, None);
        let o = Mensuration::from_sign(MensSign::O, false, false, None);
        let c_dot = Mensuration::from_sign(MensSign::C, true, false, None);
        let o_dot = Mensuration::from_sign(MensSign::O, true, false, None);
        for m in [c, o, c_dot, o_dot] {
            assert_eq!(nominal_minima(NoteShape::Minima, &m), r(1, 1));
            assert_eq!(nominal_minima(NoteShape::Semiminima, &m), r(1, 2));
            assert_eq!(nominal_minima(NoteShape::Fusa, &m), r(1, 4));
            assert_eq!(nominal_minima(NoteShape::Semifusa, &m), r(1, 8));
        }
        assert_eq!(nominal_minima(NoteShape::Semibrevis, &c_dot), r(3, 1));
        assert_eq!(nominal_minima(NoteShape::Brevis, &o), r(6, 1));
        assert_eq!(nominal_minima(NoteShape::Brevis, &c), r(4, 1));
        assert_eq!(nominal_minima(NoteShape::Brevis, &o_dot), r(9, 1));
        assert_eq!(nominal_minima(NoteShape::Longa, &c), r(8, 1));
        assert_eq!(nominal_minima(NoteShape::Maxima, &o), r(24, 1));
    }

    #[test]
    fn written_prefers_explicit() {
        let o = Mensuration::from_sign(MensSign::O, false, false, None);
        let note = |len| {
            CmmeEvent::Note(CmmeNote {
                shape: NoteShape::Brevis,
                pitch: Pitch::new(Step::G, 4),
                explicit_length: len,
                ligature: LigatureFlag::None,
                ligature_form: None,
                colored: false,
                corona: false,
                signum: false,
                stem: None,
                syllable: None,
            })
        };
        assert_eq!(written_minima(&note(Some(r(4, 1))), &o), Some(r(4, 1)));
        assert_eq!(written_minima(&note(None), &o), Some(r(6, 1)));
        let rest = CmmeEvent::Rest(CmmeRest { shape: NoteShape::Minima, explicit_length: None });
        assert_eq!(written_minima(&rest, &o), Some(r(1, 1)));
        assert_eq!(written_minima(&CmmeEvent::LineEnd, &o), None);
    }

    #[test]
    fn sounding_under_proportions() {
        let mut p = ProportionState::default();
        assert_eq!(sounding_minima(r(2, 1), &p), r(2, 1));
        p.apply(Proportion::new(3, 2));
        assert_eq!(sounding_minima(r(2, 1), &p), r(4, 3));
        let mut t = ProportionState::default();
        t.apply(Proportion::tempo(3, 2));
        assert_eq!(sounding_minima(r(2, 1), &t), r(2, 1));
        p.apply(Proportion::new(1, 1));
        assert!(p.stack.is_empty());
    }

    #[test]
    fn sign_texts() {
        let c = |dot, cut, n| Mensuration::from_sign(MensSign::C, dot, cut, n).sign_text();
        let o = |dot, cut, n| Mensuration::from_sign(MensSign::O, dot, cut, n).sign_text();
        assert_eq!(o(false, false, None), "O");
        assert_eq!(c(false, false, None), "C");
        assert_eq!(o(true, false, None), "O·");
        assert_eq!(c(true, false, None), "C·");
        assert_eq!(c(false, true, None), "¢");
        assert_eq!(o(false, false, Some(2)), "O2");
        assert_eq!(c(false, false, Some(3)), "C3");
    }

    #[test]
    fn tempus_prolatio_resolution() {
        let m = CmmeMensuration {
            sign: Some(MensSign::C),
            dot: false,
            strokes: 0,
            reversed: false,
            number: Some(3),
            tempus: Some(3),
            prolatio: None,
            tempo_change: None,
        };
        let r = Mensuration::from_cmme(&m);
        assert_eq!(r.tempus, Tempus::Perfect);
        assert_eq!(r.prolatio, Prolatio::Minor);
    }

    fn site() -> VariantSite {
        let mk = |pitch: Step| {
            let mut e = ScoreEvent::new(EventKind::Note);
            e.pitch = Some(Pitch::new(pitch, 4));
            e
        };
        VariantSite {
            id: 0,
            voice: 1,
            onset: RationalDuration::ZERO,
            default: SiteReading {
                sources: vec!["A".into()],
                events: vec![mk(Step::C)],
                lacuna: false,
                total_sounding: RationalDuration::ONE,
            },
            readings: vec![SiteReading {
                sources: vec!["B".into()],
                events: vec![mk(Step::D), mk(Step::E)],
                lacuna: false,
                total_sounding: RationalDuration::ONE,
            }],
            selected: None,
        }
    }

    #[test]
    fn reading_selection() {
        let s = site();
        let (ev, w) = select_reading(&s, &VariantSelector::Default);
        assert_eq!(ev.len(), 1);
        assert!(w.is_none());
        let (ev, w) = select_reading(&s, &VariantSelector::BySource("B".into()));
        assert_eq!(ev.len(), 2);
        assert!(w.is_none());
        let (ev, w) = select_reading(&s, &VariantSelector::BySource("Z".into()));
        assert_eq!(ev.len(), 1);
        assert_eq!(w.unwrap().code, Code::UnknownReading);
    }
}
