//! Barred common-music-notation model derived from a [`ScoreIR`].
//!
//! One minima maps to one half note, so onsets and spans keep the same
//! rational values on both sides; a meter `n/2` holds `n` minimae.

mod barring;
mod flatten;

use std::fmt;

pub use barring::{bar_voice, proportions_to_tuplets, to_measured, BarredVoice, Piece};
pub use flatten::flatten_editorial;

use crate::error::CmnError;
use crate::music::Pitch;
use crate::rational::RationalDuration;
use crate::report::{Code, ConversionReport, Location, Warning};
use crate::score::{EventKind, Mensuration, Prolatio, ScoreIR, Tempus, VoiceStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeterSig {
    pub count: u32,
    pub unit: u32,
}

impl MeterSig {
    pub const THREE_TWO: MeterSig = MeterSig { count: 3, unit: 2 };
    pub const FOUR_TWO: MeterSig = MeterSig { count: 4, unit: 2 };
    pub const SIX_TWO: MeterSig = MeterSig { count: 6, unit: 2 };

    /// Bar length in minimae.
    pub fn capacity(&self) -> RationalDuration {
        RationalDuration::from_integer(i64::from(self.count))
    }

    pub fn is_sanctioned(&self) -> bool {
        [Self::THREE_TWO, Self::FOUR_TWO, Self::SIX_TWO].contains(self)
    }
}

impl fmt::Display for MeterSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.count, self.unit)
    }
}

/// Major prolation bars at the semibrevis, otherwise at the brevis.
pub fn mensur_to_meter(m: &Mensuration) -> MeterSig {
    match (m.prolatio, m.tempus) {
        (Prolatio::Major, _) => MeterSig::THREE_TWO,
        (Prolatio::Minor, Tempus::Imperfect) => MeterSig::FOUR_TWO,
        (Prolatio::Minor, Tempus::Perfect) => MeterSig::SIX_TWO,
    }
}

/// Meter entries keyed by onset in minimae.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeterMap {
    pub entries: Vec<(RationalDuration, MeterSig)>,
}

/// One bar of the global grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bar {
    pub onset: RationalDuration,
    pub meter: MeterSig,
}

impl Bar {
    pub fn end(&self) -> RationalDuration {
        self.onset + self.meter.capacity()
    }
}

impl MeterMap {
    pub fn single(meter: MeterSig) -> Self {
        MeterMap { entries: vec![(RationalDuration::ZERO, meter)] }
    }

    pub fn meter_at(&self, t: RationalDuration) -> MeterSig {
        self.entries
            .iter()
            .take_while(|(onset, _)| *onset <= t)
            .last()
            .map_or(MeterSig::FOUR_TWO, |&(_, m)| m)
    }

    /// The bars covering `[0, end)`. The last bar may run past `end`.
    pub fn bars(&self, end: RationalDuration) -> Vec<Bar> {
        let mut bars = Vec::new();
        let mut t = RationalDuration::ZERO;
        while t < end {
            let meter = self.meter_at(t);
            bars.push(Bar { onset: t, meter });
            t += meter.capacity();
        }
        bars
    }

    /// Next bar boundary at or after `t`.
    fn boundary_at_or_after(&self, t: RationalDuration) -> RationalDuration {
        let (start, meter) = *self
            .entries
            .iter()
            .take_while(|(onset, _)| *onset <= t)
            .last()
            .expect("map starts at 0");
        let cap = meter.capacity();
        let bars = t.checked_sub(start).expect("entry precedes t") / cap;
        let whole = RationalDuration::from_integer(bars.floor());
        let b = start + whole * cap;
        if b == t {
            t
        } else {
            b + cap
        }
    }
}

fn mensur_events(v: &VoiceStream) -> impl Iterator<Item = (RationalDuration, &Mensuration)> {
    v.events
        .iter()
        .filter(|e| e.kind == EventKind::Mensur)
        .map(|e| (e.onset_minima, &e.mensuration))
}

/// Meter map from the top voice, changing only where every voice states a
/// sign at the same onset.
pub fn infer_meter_map(ir: &ScoreIR) -> (MeterMap, Vec<Warning>) {
    let mut warnings = Vec::new();
    let Some(top) = ir.voices.first() else {
        return (MeterMap::single(MeterSig::FOUR_TWO), warnings);
    };
    let initial = mensur_events(top)
        .take_while(|(t, _)| t.is_zero())
        .last()
        .map(|(_, m)| *m);
    let initial = initial.unwrap_or_else(|| {
        warnings.push(Warning::at(
            Code::MissingMensuration,
            "top voice has no opening mensuration; meter 4/2 assumed",
            Location::voice(top.index),
        ));
        Mensuration::DEFAULT
    });
    let mut map = MeterMap::single(mensur_to_meter(&initial));

    // Last sign per onset, per voice. Voices without music do not vote.
    let voting: Vec<&VoiceStream> = ir.voices.iter().filter(|v| v.timed().next().is_some()).collect();
    let per_voice: Vec<std::collections::BTreeMap<RationalDuration, MeterSig>> = voting
        .iter()
        .map(|v| {
            mensur_events(v)
                .filter(|(t, _)| !t.is_zero())
                .map(|(t, m)| (t, mensur_to_meter(m)))
                .collect()
        })
        .collect();
    let top_signs: std::collections::BTreeMap<RationalDuration, MeterSig> = mensur_events(top)
        .filter(|(t, _)| !t.is_zero())
        .map(|(t, m)| (t, mensur_to_meter(m)))
        .collect();
    let onsets: std::collections::BTreeSet<RationalDuration> =
        per_voice.iter().flat_map(|m| m.keys().copied()).chain(top_signs.keys().copied()).collect();

    for t in onsets {
        let current = map.meter_at(t);
        let carriers = per_voice.iter().filter(|m| m.contains_key(&t)).count();
        let all = carriers == voting.len() && top_signs.contains_key(&t);
        if !all {
            let differs = per_voice.iter().filter_map(|m| m.get(&t)).any(|m| *m != current)
                || top_signs.get(&t).is_some_and(|m| *m != current);
            if differs {
                warnings.push(Warning::new(
                    Code::MeterChangeSkipped,
                    format!(
                        "mensuration change at minima {t} carried by {carriers} of {} voices; meter kept",
                        voting.len()
                    ),
                ));
            }
            continue;
        }
        let meter = top_signs[&t];
        if meter == current {
            continue;
        }
        let at = map.boundary_at_or_after(t);
        if at != t {
            warnings.push(Warning::new(
                Code::MeterChangeShifted,
                format!("meter change to {meter} at minima {t} moved to the barline at {at}"),
            ));
        }
        push_entry(&mut map, at, meter);
    }
    (map, warnings)
}

fn push_entry(map: &mut MeterMap, at: RationalDuration, meter: MeterSig) {
    if let Some(last) = map.entries.last_mut() {
        if last.0 == at {
            last.1 = meter;
            let n = map.entries.len();
            if n >= 2 && map.entries[n - 2].1 == meter {
                map.entries.pop();
            }
            return;
        }
        if last.1 == meter {
            return;
        }
    }
    map.entries.push((at, meter));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClefChoice {
    G2,
    G2OttavaBassa,
    F4,
}

impl ClefChoice {
    /// MEI shape and line.
    pub fn shape_line(self) -> (&'static str, u8) {
        match self {
            ClefChoice::G2 | ClefChoice::G2OttavaBassa => ("G", 2),
            ClefChoice::F4 => ("F", 4),
        }
    }
}

/// Key numbers of the clef thresholds: middle C and the F below it.
pub const MIDDLE_C: i32 = 60;
pub const LOW_F: i32 = 53;

/// Clef from the median pitch of the voice's notes; with an even count the
/// upper middle value is used.
pub fn normalize_clef(voice: &VoiceStream) -> (ClefChoice, Option<Warning>) {
    let mut keys: Vec<i32> = voice
        .events
        .iter()
        .filter(|e| e.is_note())
        .filter_map(|e| e.pitch.map(|p| p.key_number()))
        .collect();
    if keys.is_empty() {
        let w = Warning::at(Code::ClefFallback, "voice has no pitched notes; G2 clef used", Location::voice(voice.index));
        return (ClefChoice::G2, Some(w));
    }
    keys.sort_unstable();
    let median = keys[keys.len() / 2];
    let clef = if median >= MIDDLE_C {
        ClefChoice::G2
    } else if median >= LOW_F {
        ClefChoice::G2OttavaBassa
    } else {
        ClefChoice::F4
    };
    (clef, None)
}

pub fn mensur_directive(m: &Mensuration) -> String {
    m.sign_text()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmnDur {
    Sixteenth,
    Eighth,
    Quarter,
    Half,
    Whole,
    Breve,
}

impl CmnDur {
    pub const ALL: [CmnDur; 6] =
        [CmnDur::Breve, CmnDur::Whole, CmnDur::Half, CmnDur::Quarter, CmnDur::Eighth, CmnDur::Sixteenth];

    /// Undotted value in half notes.
    pub fn value(self) -> RationalDuration {
        match self {
            CmnDur::Breve => RationalDuration::from_integer(4),
            CmnDur::Whole => RationalDuration::from_integer(2),
            CmnDur::Half => RationalDuration::ONE,
            CmnDur::Quarter => RationalDuration::new(1, 2),
            CmnDur::Eighth => RationalDuration::new(1, 4),
            CmnDur::Sixteenth => RationalDuration::new(1, 8),
        }
    }

    pub fn mei(self) -> &'static str {
        match self {
            CmnDur::Breve => "breve",
            CmnDur::Whole => "1",
            CmnDur::Half => "2",
            CmnDur::Quarter => "4",
            CmnDur::Eighth => "8",
            CmnDur::Sixteenth => "16",
        }
    }
}

/// Value of a symbol with `dots` dots, in half notes.
pub fn dotted_value(dur: CmnDur, dots: u8) -> RationalDuration {
    let factor = match dots {
        0 => RationalDuration::ONE,
        1 => RationalDuration::new(3, 2),
        _ => RationalDuration::new(7, 4),
    };
    dur.value() * factor
}

/// Every admissible symbol, largest first. The breve is never dotted.
pub fn symbols() -> Vec<(CmnDur, u8)> {
    let mut all: Vec<(CmnDur, u8)> = CmnDur::ALL
        .iter()
        .flat_map(|&d| {
            let max_dots = if d == CmnDur::Breve { 0 } else { 2 };
            (0..=max_dots).map(move |k| (d, k))
        })
        .collect();
    all.sort_by_key(|s| std::cmp::Reverse(dotted_value(s.0, s.1)));
    all
}

/// Splits `d` half notes into the shortest chain of tied symbols, longest
/// first. A value that is one symbol is returned as that symbol.
pub fn decompose_duration(d: RationalDuration) -> Result<Vec<(CmnDur, u8)>, CmnError> {
    if d.is_zero() {
        return Err(CmnError::Unrepresentable(d));
    }
    let all = symbols();
    if let Some(&s) = all.iter().find(|s| dotted_value(s.0, s.1) == d) {
        return Ok(vec![s]);
    }
    // Chains are built from symbols that are whole multiples of 1/8.
    let eighths = d * 8;
    if !eighths.is_integer() {
        return Err(CmnError::Unrepresentable(d));
    }
    let coins: Vec<((CmnDur, u8), usize)> = all
        .iter()
        .filter_map(|&s| {
            let v = dotted_value(s.0, s.1) * 8;
            v.is_integer().then(|| (s, v.numer() as usize))
        })
        .collect();
    let total = eighths.numer() as usize;
    // Long values are mostly breves; keep the table small.
    const LIMIT: usize = 256;
    let mut leading_breves = 0;
    let mut n = total;
    while n > LIMIT {
        n -= 32;
        leading_breves += 1;
    }
    let mut best = vec![usize::MAX; n + 1];
    best[0] = 0;
    for i in 1..=n {
        for &(_, c) in &coins {
            if c <= i && best[i - c] != usize::MAX {
                best[i] = best[i].min(best[i - c] + 1);
            }
        }
    }
    let mut out = vec![(CmnDur::Breve, 0); leading_breves];
    let mut rest = n;
    while rest > 0 {
        // Coins are sorted largest first, so the first fit keeps the chain
        // in descending order.
        let &(s, c) = coins
            .iter()
            .find(|&&(_, c)| c <= rest && best[rest - c] != usize::MAX && best[rest - c] + 1 == best[rest])
            .ok_or(CmnError::Unrepresentable(d))?;
        out.push(s);
        rest -= c;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tie {
    #[default]
    None,
    Start,
    Mid,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmnKind {
    Note,
    Rest,
    /// Invisible filler: ellipsis gaps and padding after a voice ends.
    Space,
}

/// Reference to a CMN note: voice index and per-voice sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NoteRef {
    pub voice: usize,
    pub seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmnNote {
    pub kind: CmnKind,
    pub pitch: Option<Pitch>,
    /// Further chord pitches from simultaneous events.
    pub chord: Vec<Pitch>,
    pub dur: CmnDur,
    pub dots: u8,
    pub tie: Tie,
    pub tuplet_ref: Option<usize>,
    /// Measure-relative onset in half notes.
    pub onset: RationalDuration,
    /// Time actually occupied, after tuplet scaling.
    pub span: RationalDuration,
    /// Ordinal of the score event this note came from.
    pub source_event: Option<usize>,
    pub id: NoteRef,
    pub fermata: bool,
}

impl CmnNote {
    pub fn notated(&self) -> RationalDuration {
        dotted_value(self.dur, self.dots)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupletSpec {
    pub id: usize,
    pub num: u64,
    pub numbase: u64,
    /// Indices into the measure's notes, consecutive.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measure {
    /// 1-based.
    pub n: usize,
    pub onset: RationalDuration,
    pub meter: MeterSig,
    pub notes: Vec<CmnNote>,
    pub tuplets: Vec<TupletSpec>,
}

impl Measure {
    /// Occupied time, tuplet scaling included.
    pub fn filled(&self) -> RationalDuration {
        self.notes.iter().map(|n| n.span).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketKind {
    Ligature,
    /// Drawn with angled ends.
    Coloration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BracketSpan {
    pub kind: BracketKind,
    pub start: NoteRef,
    pub end: NoteRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub voice: usize,
    /// Absolute onset in minimae.
    pub onset: RationalDuration,
    pub text: String,
    /// 0-based measure index.
    pub measure: usize,
    /// Onset within the measure.
    pub offset: RationalDuration,
    /// Note starting at the directive's onset, when there is one.
    pub start: Option<NoteRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasuredVoice {
    pub index: usize,
    pub name: String,
    pub clef: ClefChoice,
    pub measures: Vec<Measure>,
}

impl MeasuredVoice {
    pub fn notes(&self) -> impl Iterator<Item = &CmnNote> {
        self.measures.iter().flat_map(|m| &m.notes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasuredScore {
    pub title: String,
    pub composer: String,
    pub editor: String,
    pub meter_map: MeterMap,
    pub voices: Vec<MeasuredVoice>,
    pub spans: Vec<BracketSpan>,
    pub directives: Vec<Directive>,
}

impl MeasuredScore {
    pub fn measure_count(&self) -> usize {
        self.voices.first().map_or(0, |v| v.measures.len())
    }

    pub fn tuplet_count(&self) -> usize {
        self.voices.iter().flat_map(|v| &v.measures).map(|m| m.tuplets.len()).sum()
    }

    pub fn tie_count(&self) -> usize {
        self.voices
            .iter()
            .flat_map(MeasuredVoice::notes)
            .filter(|n| matches!(n.tie, Tie::Start))
            .count()
    }
}

/// Full CMN conversion: flatten, infer meters, bar and annotate.
pub fn convert(ir: &ScoreIR, sel: &crate::score::VariantSelector) -> (MeasuredScore, ConversionReport) {
    let (flat, mut report) = flatten_editorial(ir, sel);
    let (ms, more) = to_measured(&flat);
    report.absorb(more);
    (ms, report)
}
