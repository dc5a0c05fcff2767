use super::*;
use crate::cmme::{collect_warnings, CmmeDocument, CmmeReading, LigatureFlag, SectionKind};
use crate::error::BuildError;
use crate::report::ConversionReport;

/// Mensural state threaded left to right through a voice.
#[derive(Debug, Clone, Default)]
struct State {
    mensuration: Option<Mensuration>,
    proportions: ProportionState,
    cursor: RationalDuration,
    ligature: Option<SpanId>,
    coloration: Option<SpanId>,
}

/// Timing of a multi-event group: members share one onset and only the
/// first timed member advances the cursor.
#[derive(Debug, Clone, Copy)]
struct Group {
    start: RationalDuration,
    primary_seen: bool,
}

struct Shared {
    sites: Vec<VariantSite>,
    report: ConversionReport,
    sel: VariantSelector,
}

struct VoiceBuilder {
    voice: usize,
    section: usize,
    state: State,
    next_ordinal: usize,
    next_span: SpanId,
    /// Depth-first CMME ordinal within the current section's event list.
    cmme_ordinal: usize,
    warned_mensuration: bool,
}

impl VoiceBuilder {
    fn new(voice: usize) -> Self {
        VoiceBuilder {
            voice,
            section: 0,
            state: State::default(),
            next_ordinal: 0,
            next_span: 0,
            cmme_ordinal: 0,
            warned_mensuration: false,
        }
    }

    fn new_span(&mut self) -> SpanId {
        self.next_span += 1;
        self.next_span - 1
    }

    fn mensuration(&mut self, shared: &mut Shared) -> Mensuration {
        match self.state.mensuration {
            Some(m) => m,
            None => {
                if !self.warned_mensuration {
                    self.warned_mensuration = true;
                    shared.report.warn(Warning::at(
                        Code::MissingMensuration,
                        "note before any mensuration sign; assuming C",
                        Location::voice(self.voice),
                    ));
                }
                Mensuration::DEFAULT
            }
        }
    }

    fn event(&mut self, kind: EventKind, cmme_ordinal: usize) -> ScoreEvent {
        let mut ev = ScoreEvent::new(kind);
        ev.onset_minima = self.state.cursor;
        ev.mensuration = self.state.mensuration.unwrap_or(Mensuration::DEFAULT);
        ev.proportion = self.state.proportions.factor();
        ev.ordinal = self.next_ordinal;
        ev.source = Location::event(self.section, self.voice, cmme_ordinal);
        self.next_ordinal += 1;
        ev
    }

    /// Places a timed event on the timeline and advances the cursor.
    fn place(&mut self, ev: &mut ScoreEvent, written: RationalDuration, group: &mut Option<Group>) {
        let factor = self.state.proportions.factor();
        ev.written_minima = written;
        ev.sounding_minima = written * factor;
        ev.proportion = factor;
        match group {
            Some(g) => {
                ev.onset_minima = g.start;
                if g.primary_seen {
                    ev.simultaneous = true;
                } else {
                    g.primary_seen = true;
                    self.state.cursor = g.start + ev.sounding_minima;
                }
            }
            None => {
                ev.onset_minima = self.state.cursor;
                self.state.cursor += ev.sounding_minima;
            }
        }
    }

    fn build_list(
        &mut self,
        events: &[CmmeEvent],
        out: &mut Vec<ScoreEvent>,
        group: &mut Option<Group>,
        shared: &mut Shared,
    ) -> Result<(), BuildError> {
        for (i, event) in events.iter().enumerate() {
            let ord = self.cmme_ordinal;
            self.cmme_ordinal += 1;
            match event {
                CmmeEvent::Note(n) => {
                    let m = self.mensuration(shared);
                    let mut written = written_minima(event, &m).expect("note");
                    if n.explicit_length.is_none()
                        && matches!(events.get(i + 1), Some(CmmeEvent::Dot(DotKind::Addition)))
                    {
                        written = written * RationalDuration::new(3, 2);
                    }
                    let mut ev = self.event(EventKind::Note, ord);
                    ev.mensuration = m;
                    ev.pitch = Some(n.pitch);
                    ev.shape = Some(n.shape);
                    ev.syllable = n.syllable.clone();
                    ev.ligature_form = n.ligature_form.clone();
                    if n.signum {
                        ev.markers.insert(Marker::Signum);
                    }
                    if n.corona {
                        ev.markers.insert(Marker::Corona);
                    }
                    ev.ligature = match n.ligature {
                        LigatureFlag::None => {
                            self.state.ligature = None;
                            None
                        }
                        LigatureFlag::Start => {
                            let id = self.new_span();
                            self.state.ligature = Some(id);
                            Some(id)
                        }
                        LigatureFlag::Mid => match self.state.ligature {
                            Some(id) => Some(id),
                            None => {
                                let id = self.new_span();
                                self.state.ligature = Some(id);
                                Some(id)
                            }
                        },
                        LigatureFlag::End => {
                            let id = match self.state.ligature.take() {
                                Some(id) => id,
                                None => self.new_span(),
                            };
                            Some(id)
                        }
                    };
                    ev.coloration = if n.colored {
                        match self.state.coloration {
                            Some(id) => Some(id),
                            None => {
                                let id = self.new_span();
                                self.state.coloration = Some(id);
                                Some(id)
                            }
                        }
                    } else {
                        self.state.coloration = None;
                        None
                    };
                    self.place(&mut ev, written, group);
                    out.push(ev);
                }
                CmmeEvent::Rest(r) => {
                    let m = self.mensuration(shared);
                    let written = written_minima(event, &m).expect("rest");
                    let mut ev = self.event(EventKind::Rest, ord);
                    ev.mensuration = m;
                    ev.shape = Some(r.shape);
                    self.state.coloration = None;
                    self.place(&mut ev, written, group);
                    out.push(ev);
                }
                CmmeEvent::Dot(kind) => {
                    let ev = self.event(EventKind::Dot(*kind), ord);
                    out.push(ev);
                }
                CmmeEvent::Clef(c) => {
                    let info = ClefInfo {
                        appearance: c.appearance.clone(),
                        staff_line: c.staff_line(),
                        signature: if c.is_signature_accidental() { c.accidental_sign() } else { None },
                        pitch: c.pitch,
                    };
                    let ev = self.event(EventKind::Clef(info), ord);
                    out.push(ev);
                }
                CmmeEvent::Mensuration(cm) => {
                    let m = Mensuration::from_cmme(cm);
                    self.state.mensuration = Some(m);
                    let ev = self.event(EventKind::Mensur, ord);
                    out.push(ev);
                    if let Some((num, den)) = cm.tempo_change {
                        self.proportion(Proportion::tempo(num, den), ord, out)?;
                    }
                }
                CmmeEvent::Proportion(p) => {
                    let p = Proportion { num: p.num, den: p.den, tempo_change: p.tempo_change };
                    self.proportion(p, ord, out)?;
                }
                CmmeEvent::ColorChange(text) => {
                    let ev = self.event(EventKind::ColorChange(text.clone()), ord);
                    out.push(ev);
                }
                CmmeEvent::Custos(p) => {
                    let mut ev = self.event(EventKind::Custos, ord);
                    ev.pitch = Some(*p);
                    out.push(ev);
                }
                CmmeEvent::OriginalText(text) => {
                    let ev = self.event(EventKind::Text(text.clone()), ord);
                    out.push(ev);
                }
                CmmeEvent::LineEnd => {
                    let ev = self.event(EventKind::LineEnd, ord);
                    out.push(ev);
                }
                CmmeEvent::MultiEventGroup(members) => {
                    let mut inner = match group {
                        Some(g) => Some(*g),
                        None => Some(Group { start: self.state.cursor, primary_seen: false }),
                    };
                    self.build_list(members, out, &mut inner, shared)?;
                    if let (Some(outer), Some(inner)) = (group.as_mut(), inner) {
                        outer.primary_seen |= inner.primary_seen;
                    }
                }
                CmmeEvent::VariantGroup(g) => {
                    self.variant_site(g, ord, out, shared)?;
                }
                CmmeEvent::EllipsisGap { extent } => {
                    let mut ev = self.event(EventKind::Gap, ord);
                    ev.markers.insert(Marker::Ellipsis);
                    self.place(&mut ev, extent.unwrap_or(RationalDuration::ZERO), group);
                    out.push(ev);
                }
                CmmeEvent::Unsupported { .. } => {}
            }
        }
        Ok(())
    }

    fn proportion(&mut self, p: Proportion, ord: usize, out: &mut Vec<ScoreEvent>) -> Result<(), BuildError> {
        if p.num == 0 || p.den == 0 {
            return Err(BuildError::NegativeState {
                num: p.num,
                den: p.den,
                location: Location::event(self.section, self.voice, ord),
            });
        }
        self.state.proportions.apply(p);
        let ev = self.event(EventKind::Proport(p), ord);
        out.push(ev);
        Ok(())
    }

    fn variant_site(
        &mut self,
        g: &crate::cmme::VariantGroup,
        ord: usize,
        out: &mut Vec<ScoreEvent>,
        shared: &mut Shared,
    ) -> Result<(), BuildError> {
        let id = shared.sites.len();
        let onset = self.state.cursor;
        // Reserve the id before building readings, which may nest sites.
        shared.sites.push(VariantSite {
            id,
            voice: self.voice,
            onset,
            default: SiteReading {
                sources: Vec::new(),
                events: Vec::new(),
                lacuna: false,
                total_sounding: RationalDuration::ZERO,
            },
            readings: Vec::new(),
            selected: None,
        });
        let anchor = self.event(EventKind::VariantAnchor(id), ord);
        out.push(anchor);

        let start = self.state.clone();
        let default = CmmeReading {
            source_refs: g.default_sources.clone(),
            events: g.default.clone(),
            lacuna: false,
        };
        let mut built = Vec::new();
        for reading in std::iter::once(&default).chain(&g.readings) {
            self.state = start.clone();
            let mut events = Vec::new();
            self.build_list(&reading.events, &mut events, &mut None, shared)?;
            for e in &mut events {
                e.site.get_or_insert(id);
                if reading.lacuna {
                    e.markers.insert(Marker::Lacuna);
                }
            }
            let total = self.state.cursor.checked_sub(start.cursor).expect("cursor only advances");
            let site_reading = SiteReading {
                sources: reading.source_refs.clone(),
                events,
                lacuna: reading.lacuna,
                total_sounding: total,
            };
            built.push((site_reading, self.state.clone()));
        }

        let mut built = built.into_iter();
        let (default, default_state) = built.next().expect("default reading");
        let (readings, states): (Vec<_>, Vec<_>) = built.unzip();
        let site = &mut shared.sites[id];
        site.default = default;
        site.readings = readings;
        // Undeclared sources were already reported once; a declared source
        // missing here agrees with the default.
        let (selected, _) = select_reading_index(site, &shared.sel);
        site.selected = selected;
        let (events, state) = match selected {
            Some(i) => (&site.readings[i].events, &states[i]),
            None => (&site.default.events, &default_state),
        };
        out.extend(events.iter().cloned());
        self.state = state.clone();
        Ok(())
    }
}

/// Threads mensuration and proportion state through every mensural section
/// and produces the normalized score.
pub fn build_score(doc: &CmmeDocument, sel: &VariantSelector) -> Result<(ScoreIR, ConversionReport), BuildError> {
    if !doc.has_mensural_music() {
        return Err(BuildError::EmptyScore);
    }
    let mut report = ConversionReport::new();
    for w in collect_warnings(doc) {
        report.warn(w);
    }
    for w in &doc.ignored {
        report.warn(w.clone());
    }

    let effective = match sel {
        VariantSelector::BySource(id) if !doc.source_ids.iter().any(|s| &s.id == id) => {
            report.warn(Warning::new(
                Code::UnknownReading,
                format!("source {id:?} is not declared in the piece; using default readings"),
            ));
            VariantSelector::Default
        }
        other => other.clone(),
    };
    let mut shared = Shared { sites: Vec::new(), report, sel: effective };

    let mut builders: Vec<VoiceBuilder> = doc.voices.iter().map(|v| VoiceBuilder::new(v.index)).collect();
    let mut streams: Vec<Vec<ScoreEvent>> = vec![Vec::new(); doc.voices.len()];

    for (si, section) in doc.sections.iter().enumerate() {
        if section.kind != SectionKind::Mensural {
            continue;
        }
        let mut ends = Vec::new();
        for (b, stream) in builders.iter_mut().zip(streams.iter_mut()) {
            let Some(list) = section.voice_event_lists.get(&b.voice) else {
                shared.report.warn(Warning::at(
                    Code::MissingVoice,
                    format!("voice {} has no music in this section", b.voice),
                    Location::section(si),
                ));
                continue;
            };
            b.section = si;
            b.cmme_ordinal = 0;
            b.state.proportions = ProportionState::default();
            b.state.ligature = None;
            b.state.coloration = None;
            b.build_list(list, stream, &mut None, &mut shared)?;
            ends.push((b.voice, b.state.cursor));
        }
        if let Some(&(_, first)) = ends.first() {
            if ends.iter().any(|&(_, e)| e != first) {
                let detail = ends
                    .iter()
                    .map(|(v, e)| format!("voice {v} ends at {e}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                shared.report.warn(Warning::at(
                    Code::VoiceLengthMismatch,
                    format!("voices end at different times: {detail}"),
                    Location::section(si),
                ));
            }
        }
    }

    let voices = doc
        .voices
        .iter()
        .zip(streams)
        .map(|(meta, events)| VoiceStream {
            index: meta.index,
            name: meta.name.clone(),
            editorial: meta.editorial,
            events,
        })
        .collect();

    let Shared { sites, mut report, sel } = shared;
    let ir = ScoreIR {
        title: doc.title.clone(),
        composer: doc.composer.clone(),
        editor: doc.editor.clone(),
        sources: doc.source_ids.clone(),
        voices,
        apparatus: sites,
        selection: sel,
    };
    report.counts.events = doc.event_count() as u64;
    report.counts.notes = ir.note_count() as u64;
    Ok((ir, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmme::parse_document;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> RationalDuration {
        RationalDuration::new(n, d)
    }

    fn piece(voices: &[&str]) -> String {
        let decl: String = (1..=voices.len()).map(|i| format!("<Voice><Name>V{i}</Name></Voice>")).collect();
        let body: String = voices
            .iter()
            .enumerate()
            .map(|(i, ev)| format!("<Voice><VoiceNum>{}</VoiceNum><EventList>{ev}</EventList></Voice>", i + 1))
            .collect();
        format!(
            "<Piece><GeneralData><Title>t</Title>\
             <VariantVersion><ID>B</ID></VariantVersion></GeneralData>\
             <VoiceData>{decl}</VoiceData>\
             <MusicSection><MensuralMusic>{body}</MensuralMusic></MusicSection></Piece>"
        )
    }

    fn note(shape: &str) -> String {
        format!("<Note><Type>{shape}</Type><LetterName>G</LetterName><OctaveNum>4</OctaveNum></Note>")
    }

    fn mens(sign: &str) -> String {
        format!("<Mensuration><Sign><MainSymbol>{sign}</MainSymbol></Sign></Mensuration>")
    }

    fn prop(n: u32, d: u32) -> String {
        format!("<Proportion><Num>{n}</Num><Den>{d}</Den></Proportion>")
    }

    fn build(xml: &str, sel: &VariantSelector) -> (ScoreIR, ConversionReport) {
        build_score(&parse_document(xml.as_bytes()).unwrap(), sel).unwrap()
    }

    fn notes(ir: &ScoreIR, v: usize) -> Vec<&ScoreEvent> {
        ir.voices[v].events.iter().filter(|e| e.is_note()).collect()
    }

    #[test]
    fn semibreves_under_o() {
        let sb = note("Semibrevis");
        let (ir, _) = build(&piece(&[&format!("{}{sb}{sb}{sb}", mens("O"))]), &VariantSelector::Default);
        let n = notes(&ir, 0);
        let onsets: Vec<_> = n.iter().map(|e| e.onset_minima).collect();
        assert_eq!(onsets, [r(0, 1), r(2, 1), r(4, 1)]);
        assert!(n.iter().all(|e| e.sounding_minima == r(2, 1)));
    }

    #[test]
    fn sesquialtera_shortens() {
        let xml = piece(&[&format!("{}{}{}", mens("C"), prop(3, 2), note("Semibrevis"))]);
        let (ir, _) = build(&xml, &VariantSelector::Default);
        assert_eq!(notes(&ir, 0)[0].sounding_minima, r(4, 3));
        assert_eq!(notes(&ir, 0)[0].written_minima, r(2, 1));
    }

    #[test]
    fn tempo_change_on_mensuration_is_neutral() {
        let m = "<Mensuration><Sign><MainSymbol>C</MainSymbol></Sign><TempoChange><Num>3</Num><Den>2</Den></TempoChange></Mensuration>";
        let (ir, _) = build(&piece(&[&format!("{m}{}", note("Semibrevis"))]), &VariantSelector::Default);
        let ev = &ir.voices[0].events;
        assert!(matches!(ev[1].kind, EventKind::Proport(p) if p.tempo_change));
        assert_eq!(notes(&ir, 0)[0].sounding_minima, r(2, 1));
    }

    #[test]
    fn addition_dot_extends_nominal() {
        let xml = piece(&[&format!("{}{}<Dot/>{}", mens("C"), note("Semibrevis"), note("Minima"))]);
        let (ir, _) = build(&xml, &VariantSelector::Default);
        let n = notes(&ir, 0);
        assert_eq!(n[0].written_minima, r(3, 1));
        assert_eq!(n[1].onset_minima, r(3, 1));
    }

    #[test]
    fn zero_proportion_is_rejected() {
        let xml = piece(&[&format!("{}{}", mens("C"), prop(0, 2))]);
        let doc = parse_document(xml.as_bytes()).unwrap();
        assert!(matches!(build_score(&doc, &VariantSelector::Default), Err(BuildError::NegativeState { .. })));
    }

    #[test]
    fn empty_score() {
        let xml = "<Piece><VoiceData><Voice/></VoiceData><MusicSection><Text/></MusicSection></Piece>";
        let doc = parse_document(xml.as_bytes()).unwrap();
        assert_eq!(build_score(&doc, &VariantSelector::Default).unwrap_err(), BuildError::EmptyScore);
    }

    #[test]
    fn missing_mensuration_defaults_to_c_once() {
        let (ir, report) = build(&piece(&[&format!("{}{}", note("Brevis"), note("Brevis"))]), &VariantSelector::Default);
        assert_eq!(notes(&ir, 0)[0].sounding_minima, r(4, 1));
        assert_eq!(report.count_by_code(Code::MissingMensuration), 1);
    }

    fn variant_piece() -> String {
        let a = note("Minima");
        piece(&[&format!(
            "{}{}<VariantReadings><Reading><Music>{a}{a}</Music></Reading>\
             <Reading><VariantVersionID>B</VariantVersionID><Music>{}</Music></Reading></VariantReadings>{}",
            mens("C"),
            note("Semibrevis"),
            note("Semibrevis"),
            note("Brevis")
        )])
    }

    #[test]
    fn variant_site_default_and_by_source() {
        let (ir, _) = build(&variant_piece(), &VariantSelector::Default);
        assert_eq!(ir.apparatus.len(), 1);
        assert_eq!(ir.apparatus[0].selected, None);
        assert_eq!(notes(&ir, 0).len(), 4);
        let (ir_b, _) = build(&variant_piece(), &VariantSelector::BySource("B".into()));
        assert_eq!(ir_b.apparatus[0].selected, Some(0));
        assert_eq!(notes(&ir_b, 0).len(), 3);
        // Events before the site keep their onsets.
        assert_eq!(notes(&ir, 0)[0].onset_minima, notes(&ir_b, 0)[0].onset_minima);
        assert_eq!(ir.apparatus[0].default.total_sounding, r(2, 1));
    }

    #[test]
    fn undeclared_source_falls_back() {
        let (ir, report) = build(&variant_piece(), &VariantSelector::BySource("Z".into()));
        assert_eq!(ir.apparatus[0].selected, None);
        assert_eq!(report.count_by_code(Code::UnknownReading), 1);
    }

    #[test]
    fn spans_from_ligatures_and_coloration() {
        let lig = "<Note><Type>Brevis</Type><LetterName>D</LetterName><OctaveNum>4</OctaveNum><Lig>Recta</Lig></Note>";
        let col = "<Note><Type>Semibrevis</Type><LetterName>D</LetterName><OctaveNum>4</OctaveNum><Colored/></Note>";
        let xml = piece(&[&format!("{}{lig}{}{col}{col}{}", mens("C"), note("Brevis"), note("Minima"))]);
        let (ir, _) = build(&xml, &VariantSelector::Default);
        let n = notes(&ir, 0);
        assert!(n[0].ligature.is_some() && n[0].ligature == n[1].ligature);
        assert!(n[2].coloration.is_some() && n[2].coloration == n[3].coloration);
        assert_eq!(n[4].coloration, None);
        assert_ne!(n[0].ligature, n[2].coloration);
    }

    #[test]
    fn multi_event_members_share_onset() {
        let xml = piece(&[&format!(
            "{}<MultiEvent>{}{}</MultiEvent>{}",
            mens("C"),
            note("Semibrevis"),
            note("Semibrevis"),
            note("Minima")
        )]);
        let (ir, _) = build(&xml, &VariantSelector::Default);
        let n = notes(&ir, 0);
        assert_eq!(n[0].onset_minima, n[1].onset_minima);
        assert!(n[1].simultaneous);
        assert_eq!(n[2].onset_minima, r(2, 1));
        assert_eq!(ir.voices[0].total_sounding(), r(3, 1));
    }

    #[test]
    fn multiple_sections_concatenate() {
        let v = format!("{}{}", mens("C"), note("Brevis"));
        let xml = piece(&[&v]).replace(
            "</Piece>",
            &format!(
                "<MusicSection><MensuralMusic><Voice><VoiceNum>1</VoiceNum><EventList>{}</EventList></Voice></MensuralMusic></MusicSection></Piece>",
                note("Brevis")
            ),
        );
        let (ir, _) = build(&xml, &VariantSelector::Default);
        let n = notes(&ir, 0);
        assert_eq!(n[1].onset_minima, r(4, 1));
        assert_eq!(n[1].source.section, Some(1));
    }

    proptest! {
        #[test]
        fn push_then_inverse_restores_durations(n in 1u32..9, d in 1u32..9) {
            let sb = note("Semibrevis");
            let plain = piece(&[&format!("{}{sb}{sb}", mens("C"))]);
            let wrapped = piece(&[&format!("{}{}{}{sb}{sb}", mens("C"), prop(n, d), prop(d, n))]);
            let (a, _) = build(&plain, &VariantSelector::Default);
            let (b, _) = build(&wrapped, &VariantSelector::Default);
            let da: Vec<_> = notes(&a, 0).iter().map(|e| (e.onset_minima, e.sounding_minima)).collect();
            let db: Vec<_> = notes(&b, 0).iter().map(|e| (e.onset_minima, e.sounding_minima)).collect();
            prop_assert_eq!(da, db);
        }

        #[test]
        fn onsets_advance_by_sounding(shapes in proptest::collection::vec(0usize..8, 1..30), props in proptest::collection::vec((1u32..5, 1u32..5, any::<bool>()), 0..4)) {
            let mut body = mens("O");
            for (i, s) in shapes.iter().enumerate() {
                if let Some((n, d, t)) = props.get(i) {
                    body.push_str(&format!(
                        "<Proportion><Num>{n}</Num><Den>{d}</Den>{}</Proportion>",
                        if *t { "<TempoChange/>" } else { "" }
                    ));
                }
                body.push_str(&note(NoteShape::ALL[*s].mei()));
            }
            let (ir, _) = build(&piece(&[&body]), &VariantSelector::Default);
            let timed: Vec<_> = ir.voices[0].timed().collect();
            for w in timed.windows(2) {
                prop_assert!(w[0].onset_minima <= w[1].onset_minima);
                prop_assert_eq!(w[0].onset_minima + w[0].sounding_minima, w[1].onset_minima);
            }
        }

        #[test]
        fn tempo_only_voices_sound_as_written(shapes in proptest::collection::vec(0usize..8, 1..20), n in 1u32..7, d in 1u32..7) {
            let mut body = format!("{}<Proportion><Num>{n}</Num><Den>{d}</Den><TempoChange/></Proportion>", mens("C"));
            for s in &shapes {
                body.push_str(&note(NoteShape::ALL[*s].mei()));
            }
            let (ir, _) = build(&piece(&[&body]), &VariantSelector::Default);
            for e in ir.voices[0].timed() {
                prop_assert_eq!(e.sounding_minima, e.written_minima);
            }
        }
    }
}
