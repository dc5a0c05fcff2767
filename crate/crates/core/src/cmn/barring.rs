use std::collections::BTreeMap;

use num_integer::Integer;
use rayon::prelude::*;

use super::*;
use crate::report::Entry;
use crate::score::{Marker, ScoreEvent};

/// Tuplet terms above this are legal but unreadable; they are reported.
pub const MAX_TUPLET_TERM: u64 = 32;

/// The part of an event that falls into one bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    /// 0-based bar index.
    pub bar: usize,
    /// Onset within the bar.
    pub offset: RationalDuration,
    pub span: RationalDuration,
}

/// Cuts `[onset, onset + len)` at every bar boundary.
pub fn cut(bars: &[Bar], onset: RationalDuration, len: RationalDuration) -> Vec<Piece> {
    let mut pieces = Vec::new();
    if len.is_zero() || bars.is_empty() {
        return pieces;
    }
    let end = onset + len;
    let mut bar = bars.partition_point(|b| b.onset <= onset).saturating_sub(1);
    let mut t = onset;
    while t < end {
        let b = bars[bar];
        let stop = if bar + 1 < bars.len() { end.min(b.end()) } else { end };
        pieces.push(Piece {
            bar,
            offset: t.checked_sub(b.onset).expect("bar starts before t"),
            span: stop.checked_sub(t).expect("stop after t"),
        });
        t = stop;
        bar += 1;
    }
    pieces
}

fn on_grid(d: RationalDuration) -> bool {
    (d * 8).is_integer()
}

fn is_power_of_two(r: RationalDuration) -> bool {
    (r.numer() as u64).is_power_of_two() && (r.denom() as u64).is_power_of_two()
}

/// Tuplet ratio (`num`, `numbase`) and notated length for a piece of
/// `span` half notes sounding at `factor` times its written length.
///
/// The notated length times `numbase / num` always equals `span`.
pub fn tuplet_for(span: RationalDuration, factor: RationalDuration) -> (Option<(u64, u64)>, RationalDuration) {
    if factor != RationalDuration::ONE && !factor.is_zero() {
        let notated = span / factor;
        if on_grid(notated) {
            if is_power_of_two(factor) && on_grid(span) {
                return (None, span);
            }
            return (Some((factor.denom() as u64, factor.numer() as u64)), notated);
        }
    }
    if on_grid(span) {
        return (None, span);
    }
    // Pick num:numbase = m·2^e with m the odd part of the denominator,
    // as close to 1 as the sixteenth grid allows.
    let den = span.denom() as u64;
    let k = den.trailing_zeros() as i64;
    let m = den >> k;
    let e0 = if m > 1 { -(i64::from(63 - (m - 1).leading_zeros() as i32)) } else { 0 };
    let e = e0.max(k - 3);
    let mut num = m << e.max(0);
    let mut numbase = 1u64 << (-e).max(0);
    let g = num.gcd(&numbase);
    num /= g;
    numbase /= g;
    let notated = span * RationalDuration::new(num as i64, numbase as i64);
    if num == numbase {
        (None, notated)
    } else {
        (Some((num, numbase)), notated)
    }
}

/// A voice cut into bars, before tuplets are grouped.
#[derive(Debug, Clone, Default)]
pub struct BarredVoice {
    pub measures: Vec<Measure>,
    /// Tuplet ratio of each note, parallel to `measures[i].notes`.
    pub ratios: Vec<Vec<Option<(u64, u64)>>>,
    /// First and last CMN note of every score event that produced notes.
    pub event_notes: BTreeMap<usize, (NoteRef, NoteRef)>,
    pub warnings: Vec<Entry>,
    pub errors: Vec<Entry>,
    /// Signa congruentiae rendered as fermatas.
    pub signa: usize,
}

struct Barrer<'a> {
    voice: usize,
    bars: &'a [Bar],
    out: BarredVoice,
    seq: usize,
}

impl Barrer<'_> {
    /// Emits one timed span as tied symbols, returning the note refs.
    fn emit(
        &mut self,
        kind: CmnKind,
        ev: Option<&ScoreEvent>,
        onset: RationalDuration,
        len: RationalDuration,
        factor: RationalDuration,
        chord: &[Pitch],
    ) -> Vec<NoteRef> {
        let mut refs = Vec::new();
        for piece in cut(self.bars, onset, len) {
            let (ratio, notated) = tuplet_for(piece.span, factor);
            if let Some((num, numbase)) = ratio {
                if num > MAX_TUPLET_TERM || numbase > MAX_TUPLET_TERM {
                    self.out.errors.push(Entry::at(
                        Code::UnrepresentableTuplet,
                        format!("tuplet {num}:{numbase} needed for a span of {} half notes", piece.span),
                        ev.map(|e| e.source).unwrap_or_default(),
                    ));
                }
            }
            let scale = ratio.map_or(RationalDuration::ONE, |(n, b)| RationalDuration::new(b as i64, n as i64));
            let symbols = decompose_duration(notated).expect("tuplet_for keeps the notated value on the grid");
            let mut at = piece.offset;
            for (dur, dots) in symbols {
                let span = dotted_value(dur, dots) * scale;
                let id = NoteRef { voice: self.voice, seq: self.seq };
                self.seq += 1;
                self.out.measures[piece.bar].notes.push(CmnNote {
                    kind,
                    pitch: if kind == CmnKind::Note { ev.and_then(|e| e.pitch) } else { None },
                    chord: chord.to_vec(),
                    dur,
                    dots,
                    tie: Tie::None,
                    tuplet_ref: None,
                    onset: at,
                    span,
                    source_event: ev.map(|e| e.ordinal),
                    id,
                    fermata: false,
                });
                self.out.ratios[piece.bar].push(ratio);
                at += span;
                refs.push(id);
            }
        }
        refs
    }

    fn note_mut(&mut self, r: NoteRef) -> &mut CmnNote {
        self.out
            .measures
            .iter_mut()
            .flat_map(|m| m.notes.iter_mut())
            .find(|n| n.id == r)
            .expect("note exists")
    }
}

/// Bars one voice on the global grid of `mm`, padding with spaces up to
/// `end` so every voice has the same measures.
pub fn bar_voice(voice: &VoiceStream, mm: &MeterMap, end: RationalDuration) -> BarredVoice {
    let bars = mm.bars(end);
    let mut b = Barrer {
        voice: voice.index,
        bars: &bars,
        out: BarredVoice {
            measures: bars
                .iter()
                .enumerate()
                .map(|(i, bar)| Measure {
                    n: i + 1,
                    onset: bar.onset,
                    meter: bar.meter,
                    notes: Vec::new(),
                    tuplets: Vec::new(),
                })
                .collect(),
            ratios: vec![Vec::new(); bars.len()],
            ..Default::default()
        },
        seq: 0,
    };

    let events = &voice.events;
    let mut i = 0;
    while i < events.len() {
        let ev = &events[i];
        i += 1;
        if !ev.is_timed() || ev.simultaneous {
            continue;
        }
        // Simultaneous members that follow sound with this event.
        let mut chord = Vec::new();
        while i < events.len() && events[i].simultaneous {
            let m = &events[i];
            i += 1;
            if ev.is_note() && m.is_note() && m.sounding_minima == ev.sounding_minima && m.pitch.is_some() {
                chord.extend(m.pitch);
            } else {
                b.out.warnings.push(Entry::at(
                    Code::ChordMemberDropped,
                    "simultaneous event does not match the main event's duration",
                    m.source,
                ));
            }
        }
        let kind = match ev.kind {
            EventKind::Note => CmnKind::Note,
            EventKind::Rest => CmnKind::Rest,
            _ => CmnKind::Space,
        };
        let refs = b.emit(kind, Some(ev), ev.onset_minima, ev.sounding_minima, ev.proportion, &chord);
        let (Some(&first), Some(&last)) = (refs.first(), refs.last()) else {
            continue;
        };
        if kind == CmnKind::Note && refs.len() > 1 {
            for (k, r) in refs.iter().enumerate() {
                b.note_mut(*r).tie = match k {
                    0 => Tie::Start,
                    k if k + 1 == refs.len() => Tie::End,
                    _ => Tie::Mid,
                };
            }
        }
        if kind == CmnKind::Note && (ev.markers.contains(&Marker::Signum) || ev.markers.contains(&Marker::Corona)) {
            b.note_mut(first).fermata = true;
            if ev.markers.contains(&Marker::Signum) {
                b.out.signa += 1;
            }
        }
        b.out.event_notes.insert(ev.ordinal, (first, last));
    }

    let voice_end = voice.end_minima();
    if let Some(pad) = end.checked_sub(voice_end).filter(|p| !p.is_zero()) {
        b.emit(CmnKind::Space, None, voice_end, pad, RationalDuration::ONE, &[]);
    }
    let mut out = b.out;
    proportions_to_tuplets(&mut out);
    out
}

/// Groups consecutive notes of equal ratio within each measure into one
/// tuplet.
pub fn proportions_to_tuplets(voice: &mut BarredVoice) {
    let mut next_id = 0;
    for (measure, ratios) in voice.measures.iter_mut().zip(&voice.ratios) {
        measure.tuplets.clear();
        let mut i = 0;
        while i < ratios.len() {
            let Some((num, numbase)) = ratios[i] else {
                i += 1;
                continue;
            };
            let start = i;
            while i < ratios.len() && ratios[i] == Some((num, numbase)) {
                i += 1;
            }
            for note in &mut measure.notes[start..i] {
                note.tuplet_ref = Some(next_id);
            }
            measure.tuplets.push(TupletSpec { id: next_id, num, numbase, members: (start..i).collect() });
            next_id += 1;
        }
    }
}

fn spans_for(voice: &VoiceStream, notes: &BTreeMap<usize, (NoteRef, NoteRef)>) -> Vec<BracketSpan> {
    let mut runs: BTreeMap<(u8, usize), (NoteRef, NoteRef)> = BTreeMap::new();
    for ev in voice.events.iter().filter(|e| e.is_note()) {
        let Some(&(first, last)) = notes.get(&ev.ordinal) else { continue };
        for (tag, id) in [(0u8, ev.ligature), (1u8, ev.coloration)] {
            if let Some(id) = id {
                runs.entry((tag, id)).and_modify(|r| r.1 = last).or_insert((first, last));
            }
        }
    }
    let mut spans: Vec<BracketSpan> = runs
        .into_iter()
        .map(|((tag, _), (start, end))| BracketSpan {
            kind: if tag == 0 { BracketKind::Ligature } else { BracketKind::Coloration },
            start,
            end,
        })
        .collect();
    spans.sort_by_key(|s| (s.start, s.kind == BracketKind::Coloration));
    spans
}

/// Bars a flattened score.
pub fn to_measured(ir: &ScoreIR) -> (MeasuredScore, ConversionReport) {
    let mut report = ConversionReport::new();
    let (meter_map, warnings) = infer_meter_map(ir);
    warnings.into_iter().for_each(|w| report.warn(w));
    let end = ir.voices.iter().map(VoiceStream::end_minima).max().unwrap_or(RationalDuration::ZERO);
    let bars = meter_map.bars(end);

    let barred: Vec<BarredVoice> = ir.voices.par_iter().map(|v| bar_voice(v, &meter_map, end)).collect();

    let mut voices = Vec::new();
    let mut spans = Vec::new();
    let mut directives = Vec::new();
    let mut signa = 0;
    for (v, bv) in ir.voices.iter().zip(barred) {
        let (clef, w) = normalize_clef(v);
        report.warnings.extend(w);
        report.warnings.extend(bv.warnings.iter().cloned());
        report.errors.extend(bv.errors.iter().cloned());
        signa += bv.signa;
        spans.extend(spans_for(v, &bv.event_notes));
        for ev in v.events.iter().filter(|e| e.kind == EventKind::Mensur) {
            let t = ev.onset_minima;
            let Some(idx) = bars.partition_point(|b| b.onset <= t).checked_sub(1) else { continue };
            let offset = t.checked_sub(bars[idx].onset).expect("bar starts before t");
            let start = bv.measures[idx]
                .notes
                .iter()
                .find(|n| n.onset == offset && n.kind != CmnKind::Space)
                .map(|n| n.id);
            directives.push(Directive { voice: v.index, onset: t, text: mensur_directive(&ev.mensuration), measure: idx, offset, start });
        }
        voices.push(MeasuredVoice { index: v.index, name: v.name.clone(), clef, measures: bv.measures });
    }
    if signa > 0 {
        report.note(Entry::new(Code::SignumAsFermata, format!("{signa} signum congruentiae mark(s) written as fermatas")));
    }

    let ms = MeasuredScore {
        title: ir.title.clone(),
        composer: ir.composer.clone(),
        editor: ir.editor.clone(),
        meter_map,
        voices,
        spans,
        directives,
    };
    report.counts.measures = ms.measure_count() as u64;
    report.counts.tuplets = ms.tuplet_count() as u64;
    report.counts.ties = ms.tie_count() as u64;
    (ms, report)
}
