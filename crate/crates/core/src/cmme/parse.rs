use roxmltree::{Document, Node, ParsingOptions};

use super::*;
use crate::error::ParseError;
use crate::music::{Accidental, Step};

/// Position and sink state threaded through event parsing.
#[derive(Debug, Clone, Default)]
pub struct EventContext {
    pub section: usize,
    pub voice: usize,
    /// Next depth-first ordinal to hand out.
    pub ordinal: usize,
    pub warnings: Vec<Warning>,
}

impl EventContext {
    pub fn new(section: usize, voice: usize) -> Self {
        EventContext { section, voice, ..Default::default() }
    }

    fn location(&self, ordinal: usize) -> Location {
        Location::event(self.section, self.voice, ordinal)
    }
}

fn local<'a>(n: &Node<'a, '_>) -> &'a str {
    n.tag_name().name()
}

fn child<'a, 'i>(n: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    n.children().find(|c| c.is_element() && local(c) == name)
}

fn has_child(n: Node, name: &str) -> bool {
    child(n, name).is_some()
}

fn children_named<'a, 'i: 'a>(n: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    n.children().filter(move |c| c.is_element() && local(c) == name)
}

/// Concatenated descendant text, whitespace-normalized.
fn flat_text(n: Node) -> String {
    n.descendants()
        .filter(|d| d.is_text())
        .filter_map(|d| d.text())
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn child_text(n: Node, name: &str) -> Option<String> {
    child(n, name).map(flat_text)
}

fn child_int(n: Node, name: &str, loc: Option<Location>) -> Result<Option<i64>, ParseError> {
    match child_text(n, name) {
        None => Ok(None),
        Some(t) => t.parse::<i64>().map(Some).map_err(|_| {
            ParseError::schema(local(&n), format!("<{name}> is not an integer: {t:?}"), loc)
        }),
    }
}

fn required_int(n: Node, name: &str, loc: Option<Location>) -> Result<i64, ParseError> {
    child_int(n, name, loc)?
        .ok_or_else(|| ParseError::schema(local(&n), format!("missing <{name}>"), loc))
}

fn raw_source(n: Node) -> String {
    n.document().input_text()[n.range()].to_string()
}

/// Records an ignored-child warning for every element child of `n` whose
/// name is not listed.
fn check_children(n: Node, allowed: &[&str], warnings: &mut Vec<Warning>, loc: Location) {
    for c in n.children().filter(Node::is_element) {
        let name = local(&c);
        if !allowed.contains(&name) {
            warnings.push(Warning::at(
                Code::IgnoredChild,
                format!("ignored <{name}> inside <{}>", local(&n)),
                loc,
            ));
        }
    }
}

fn check_declared_encoding(text: &str) -> Result<(), ParseError> {
    let Some(rest) = text.strip_prefix("<?xml") else {
        return Ok(());
    };
    let decl = &rest[..rest.find("?>").unwrap_or(rest.len())];
    let Some(pos) = decl.find("encoding") else {
        return Ok(());
    };
    let value = decl[pos + "encoding".len()..]
        .trim_start()
        .trim_start_matches('=')
        .trim_start();
    let quote = value.chars().next().unwrap_or('"');
    let value = value.trim_start_matches(quote);
    let value = &value[..value.find(quote).unwrap_or(value.len())];
    match value.to_ascii_lowercase().as_str() {
        "utf-8" | "utf8" => Ok(()),
        other => Err(ParseError::MalformedXml(format!("unsupported encoding {other:?}; expected UTF-8"))),
    }
}

/// Parses CMME-XML bytes into a [`CmmeDocument`].
pub fn parse_document(bytes: &[u8]) -> Result<CmmeDocument, ParseError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseError::MalformedXml(format!("input is not UTF-8: {e}")))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    check_declared_encoding(text)?;
    let opts = ParsingOptions { allow_dtd: true, ..ParsingOptions::default() };
    let xml = Document::parse_with_options(text, opts)
        .map_err(|e| ParseError::MalformedXml(e.to_string()))?;
    let root = xml.root_element();
    if local(&root) != "Piece" {
        return Err(ParseError::NotCmme(local(&root).to_string()));
    }

    let mut doc = CmmeDocument::default();
    if let Some(general) = child(root, "GeneralData") {
        doc.title = child_text(general, "Title").unwrap_or_default();
        doc.composer = child_text(general, "Composer").unwrap_or_default();
        doc.editor = child_text(general, "Editor").unwrap_or_default();
        for v in general.descendants().filter(|d| d.is_element() && local(d) == "VariantVersion") {
            let id = child_text(v, "ID").or_else(|| child_text(v, "Abbreviation"));
            let Some(id) = id.filter(|s| !s.is_empty()) else {
                return Err(ParseError::schema("VariantVersion", "missing <ID>", None));
            };
            let name = child_text(v, "SourceName")
                .or_else(|| child_text(v, "Name"))
                .unwrap_or_else(|| id.clone());
            if !doc.source_ids.iter().any(|s| s.id == id) {
                doc.source_ids.push(SourceDecl { id, name });
            }
        }
    }

    if let Some(vd) = child(root, "VoiceData") {
        for (i, v) in children_named(vd, "Voice").enumerate() {
            doc.voices.push(CmmeVoiceMeta {
                index: i + 1,
                name: child_text(v, "Name").unwrap_or_else(|| format!("Voice {}", i + 1)),
                editorial: has_child(v, "Editorial") || has_child(v, "Suggested"),
            });
        }
    }

    for (si, ms) in children_named(root, "MusicSection").enumerate() {
        let section = parse_section(ms, si, &doc.voices, &mut doc.ignored)?;
        doc.sections.push(section);
    }

    let has_music = doc
        .sections
        .iter()
        .any(|s| s.voice_event_lists.values().any(|l| !l.is_empty()));
    if has_music && doc.voices.is_empty() {
        return Err(ParseError::schema("VoiceData", "music present but no voices declared", None));
    }
    Ok(doc)
}

fn parse_section(
    ms: Node,
    si: usize,
    voices: &[CmmeVoiceMeta],
    warnings: &mut Vec<Warning>,
) -> Result<CmmeSection, ParseError> {
    let loc = Location::section(si);
    let body = ms
        .children()
        .find(|c| c.is_element() && matches!(local(c), "MensuralMusic" | "Plainchant" | "Text"))
        .ok_or_else(|| ParseError::schema("MusicSection", "no recognized section content", Some(loc)))?;
    let kind = match local(&body) {
        "MensuralMusic" => SectionKind::Mensural,
        "Plainchant" => SectionKind::Plainchant,
        _ => SectionKind::TextOnly,
    };
    let mut section = CmmeSection { kind, voice_event_lists: BTreeMap::new() };
    if kind != SectionKind::Mensural {
        return Ok(section);
    }
    check_children(body, &["NumVoices", "Voice", "TacetInfo", "Taces"], warnings, loc);
    for v in children_named(body, "Voice") {
        let num = required_int(v, "VoiceNum", Some(loc))?;
        let index = usize::try_from(num).unwrap_or(0);
        if index == 0 || index > voices.len() {
            return Err(ParseError::schema(
                "Voice",
                format!("VoiceNum {num} does not name a declared voice"),
                Some(loc),
            ));
        }
        if section.voice_event_lists.contains_key(&index) {
            return Err(ParseError::schema("Voice", format!("voice {index} appears twice"), Some(loc)));
        }
        let mut ctx = EventContext::new(si, index);
        let events = match child(v, "EventList") {
            Some(list) => parse_event_list(list, &mut ctx)?,
            None => Vec::new(),
        };
        warnings.append(&mut ctx.warnings);
        section.voice_event_lists.insert(index, events);
    }
    Ok(section)
}

fn parse_event_list(parent: Node, ctx: &mut EventContext) -> Result<Vec<CmmeEvent>, ParseError> {
    let mut events = Vec::new();
    for c in parent.children().filter(Node::is_element) {
        events.push(parse_event(c, ctx)?);
    }
    resolve_ligatures(&mut events, ctx);
    Ok(events)
}

/// Turns per-note "ligated to the next note" marks into start/mid/end flags.
///
/// The parser marks each note carrying `<Lig>` as `Start`; here runs are
/// closed by the first following note without the mark. Runs interrupted by
/// a rest or by the end of the list are closed at their last note.
fn resolve_ligatures(events: &mut [CmmeEvent], ctx: &mut EventContext) {
    let mut open: Option<usize> = None;
    let mut run_len = 0;

    fn close(events: &mut [CmmeEvent], last: usize, run_len: usize) {
        if let CmmeEvent::Note(n) = &mut events[last] {
            n.ligature = if run_len <= 1 { LigatureFlag::None } else { LigatureFlag::End };
        }
    }

    for i in 0..events.len() {
        match &mut events[i] {
            CmmeEvent::Note(n) => {
                let ligated_to_next = n.ligature == LigatureFlag::Start;
                match (open.is_some(), ligated_to_next) {
                    (false, true) => {
                        open = Some(i);
                        run_len = 1;
                    }
                    (true, true) => {
                        n.ligature = LigatureFlag::Mid;
                        open = Some(i);
                        run_len += 1;
                    }
                    (true, false) => {
                        n.ligature = LigatureFlag::End;
                        open = None;
                    }
                    (false, false) => {}
                }
            }
            CmmeEvent::Rest(_) => {
                if let Some(last) = open.take() {
                    close(events, last, run_len);
                    ctx.warnings.push(Warning::new(
                        Code::LigatureUnterminated,
                        format!("ligature interrupted by a rest in voice {}", ctx.voice),
                    ));
                }
            }
            _ => {}
        }
    }
    if let Some(last) = open {
        close(events, last, run_len);
        ctx.warnings.push(Warning::new(
            Code::LigatureUnterminated,
            format!("ligature left open at end of an event list in voice {}", ctx.voice),
        ));
    }
}

fn read_pitch(n: Node, loc: Location) -> Result<Option<Pitch>, ParseError> {
    let holder = if has_child(n, "LetterName") {
        n
    } else if let Some(p) = child(n, "Pitch") {
        p
    } else {
        return Ok(None);
    };
    let letter = child_text(holder, "LetterName").unwrap_or_default();
    let step = letter
        .chars()
        .next()
        .and_then(Step::from_letter)
        .filter(|_| letter.chars().count() == 1)
        .ok_or_else(|| ParseError::schema(local(&n), format!("bad LetterName {letter:?}"), Some(loc)))?;
    let octave = required_int(holder, "OctaveNum", Some(loc))?;
    Ok(Some(Pitch::new(step, octave as i32)))
}

fn read_length(n: Node, loc: Location) -> Result<Option<RationalDuration>, ParseError> {
    let Some(len) = child(n, "Length") else {
        return Ok(None);
    };
    let num = required_int(len, "Num", Some(loc))?;
    let den = child_int(len, "Den", Some(loc))?.unwrap_or(1);
    match RationalDuration::try_new(num, den) {
        Some(r) if !r.is_zero() => Ok(Some(r)),
        _ => Err(ParseError::schema(
            local(&n),
            format!("length {num}/{den} is not a positive rational"),
            Some(loc),
        )),
    }
}

fn read_shape(n: Node, loc: Location) -> Result<NoteShape, ParseError> {
    let t = child_text(n, "Type")
        .ok_or_else(|| ParseError::schema(local(&n), "missing <Type>", Some(loc)))?;
    t.parse().map_err(|e: String| ParseError::schema(local(&n), e, Some(loc)))
}

fn read_accidental(n: Node, loc: Location) -> Result<Option<Accidental>, ParseError> {
    let Some(acc) = child(n, "ModernAccidental").or_else(|| child(n, "Accidental")) else {
        return Ok(None);
    };
    if let Some(offset) = child_int(acc, "PitchOffset", Some(loc))? {
        return Ok(Some(match offset.signum() {
            -1 => Accidental::Flat,
            0 => Accidental::Natural,
            _ => Accidental::Sharp,
        }));
    }
    let kind = child_text(acc, "AType").unwrap_or_default().to_ascii_lowercase();
    match kind.as_str() {
        "bmol" | "flat" => Ok(Some(Accidental::Flat)),
        "bqua" | "natural" => Ok(Some(Accidental::Natural)),
        "diesis" | "sharp" => Ok(Some(Accidental::Sharp)),
        _ => Err(ParseError::schema(local(&n), format!("unknown accidental {kind:?}"), Some(loc))),
    }
}

/// Parses one child of a voice event list.
pub fn parse_event(node: Node, ctx: &mut EventContext) -> Result<CmmeEvent, ParseError> {
    let ordinal = ctx.ordinal;
    ctx.ordinal += 1;
    let loc = ctx.location(ordinal);
    let tag = local(&node);
    let ev = match tag {
        "Note" => {
            check_children(
                node,
                &[
                    "Type", "LetterName", "OctaveNum", "Length", "Colored", "Lig", "Corona",
                    "Signum", "Stem", "Flag", "ModernText", "ModernAccidental", "Accidental",
                    "StaffLoc", "Pitch",
                ],
                &mut ctx.warnings,
                loc,
            );
            let shape = read_shape(node, loc)?;
            let mut pitch = read_pitch(node, loc)?
                .ok_or_else(|| ParseError::schema("Note", "missing pitch", Some(loc)))?;
            pitch.accidental = read_accidental(node, loc)?;
            let lig = child_text(node, "Lig");
            let stem = ["Stem", "Flag"]
                .iter()
                .filter_map(|name| child(node, name).map(|c| format!("{name}: {}", flat_text(c))))
                .collect::<Vec<_>>();
            CmmeEvent::Note(CmmeNote {
                shape,
                pitch,
                explicit_length: read_length(node, loc)?,
                ligature: if lig.is_some() { LigatureFlag::Start } else { LigatureFlag::None },
                ligature_form: lig.filter(|s| !s.is_empty()),
                colored: has_child(node, "Colored"),
                corona: has_child(node, "Corona"),
                signum: has_child(node, "Signum"),
                stem: (!stem.is_empty()).then(|| stem.join("; ")),
                syllable: child(node, "ModernText").and_then(|t| child_text(t, "Syllable")),
            })
        }
        "Rest" => {
            check_children(
                node,
                &["Type", "Length", "BottomStaffLine", "NumSpaces", "StaffLoc"],
                &mut ctx.warnings,
                loc,
            );
            CmmeEvent::Rest(CmmeRest { shape: read_shape(node, loc)?, explicit_length: read_length(node, loc)? })
        }
        "Dot" => {
            check_children(
                node,
                &["StaffLoc", "Pitch", "Addition", "Division", "RelativeTo"],
                &mut ctx.warnings,
                loc,
            );
            CmmeEvent::Dot(if has_child(node, "Division") { DotKind::Division } else { DotKind::Addition })
        }
        "Clef" => {
            check_children(
                node,
                &["Appearance", "StaffLoc", "Pitch", "Signature", "LetterName", "OctaveNum"],
                &mut ctx.warnings,
                loc,
            );
            let appearance = child_text(node, "Appearance")
                .filter(|s| !s.is_empty())
                .ok_or_else(|| ParseError::schema("Clef", "missing <Appearance>", Some(loc)))?;
            CmmeEvent::Clef(CmmeClef {
                appearance,
                staff_loc: child_int(node, "StaffLoc", Some(loc))?.unwrap_or(1) as i32,
                pitch: read_pitch(node, loc)?,
                signature: has_child(node, "Signature"),
            })
        }
        "Mensuration" => parse_mensuration(node, ctx, loc)?,
        "Proportion" => {
            check_children(node, &["Num", "Den", "TempoChange"], &mut ctx.warnings, loc);
            let num = required_int(node, "Num", Some(loc))?;
            let den = required_int(node, "Den", Some(loc))?;
            let (Ok(num), Ok(den)) = (u32::try_from(num), u32::try_from(den)) else {
                return Err(ParseError::schema("Proportion", "negative proportion term", Some(loc)));
            };
            CmmeEvent::Proportion(CmmeProportion { num, den, tempo_change: has_child(node, "TempoChange") })
        }
        "ColorChange" => CmmeEvent::ColorChange(flat_text(node)),
        "Custos" => {
            let pitch = read_pitch(node, loc)?
                .ok_or_else(|| ParseError::schema("Custos", "missing pitch", Some(loc)))?;
            CmmeEvent::Custos(pitch)
        }
        "OriginalText" => {
            CmmeEvent::OriginalText(child_text(node, "Phrase").unwrap_or_else(|| flat_text(node)))
        }
        "LineEnd" => CmmeEvent::LineEnd,
        "MultiEvent" => {
            let mut events = Vec::new();
            for c in node.children().filter(Node::is_element) {
                events.push(parse_event(c, ctx)?);
            }
            CmmeEvent::MultiEventGroup(events)
        }
        "VariantReadings" => parse_variants(node, ctx, loc)?,
        "MiscItem" if has_child(node, "Ellipsis") => {
            let ellipsis = child(node, "Ellipsis").expect("checked");
            let extent = match read_length(ellipsis, loc)? {
                Some(l) => Some(l),
                None => read_length(node, loc)?,
            };
            CmmeEvent::EllipsisGap { extent }
        }
        "Ellipsis" => CmmeEvent::EllipsisGap { extent: read_length(node, loc)? },
        _ => CmmeEvent::Unsupported { tag: tag.to_string(), raw: raw_source(node) },
    };
    Ok(ev)
}

fn parse_mensuration(node: Node, ctx: &mut EventContext, loc: Location) -> Result<CmmeEvent, ParseError> {
    check_children(
        node,
        &["Sign", "Number", "MensInfo", "TempoChange", "Small", "Vertical", "NoScoreSig", "StaffLoc"],
        &mut ctx.warnings,
        loc,
    );
    let mut m = CmmeMensuration {
        sign: None,
        dot: false,
        strokes: 0,
        reversed: false,
        number: None,
        tempus: None,
        prolatio: None,
        tempo_change: None,
    };
    let read_number = |n: Node| -> Result<u32, ParseError> {
        let text = child_text(n, "Num").unwrap_or_else(|| flat_text(n));
        text.parse()
            .map_err(|_| ParseError::schema("Mensuration", format!("bad number {text:?}"), Some(loc)))
    };
    if let Some(sign) = child(node, "Sign") {
        if let Some(sym) = child_text(sign, "MainSymbol") {
            m.sign = Some(match sym.as_str() {
                "O" => MensSign::O,
                "C" => MensSign::C,
                other => {
                    return Err(ParseError::schema(
                        "Mensuration",
                        format!("unknown main symbol {other:?}"),
                        Some(loc),
                    ))
                }
            });
        }
        m.dot = has_child(sign, "Dot");
        m.strokes = child_int(sign, "Strokes", Some(loc))?.unwrap_or(0).clamp(0, 9) as u8;
        m.reversed = child_text(sign, "Orientation").is_some_and(|o| o.eq_ignore_ascii_case("reversed"));
        if let Some(n) = child(sign, "Number") {
            m.number = Some(read_number(n)?);
        }
    }
    if let Some(n) = child(node, "Number") {
        m.number = Some(read_number(n)?);
    }
    if let Some(info) = child(node, "MensInfo") {
        let level = |name: &str| -> Result<Option<u8>, ParseError> {
            match child_int(info, name, Some(loc))? {
                None => Ok(None),
                Some(v @ (2 | 3)) => Ok(Some(v as u8)),
                Some(v) => Err(ParseError::schema("MensInfo", format!("{name} must be 2 or 3, got {v}"), Some(loc))),
            }
        };
        m.tempus = level("Tempus")?;
        m.prolatio = level("Prolatio")?;
    }
    if let Some(tc) = child(node, "TempoChange") {
        let num = required_int(tc, "Num", Some(loc))?;
        let den = required_int(tc, "Den", Some(loc))?;
        let (Ok(num), Ok(den)) = (u32::try_from(num), u32::try_from(den)) else {
            return Err(ParseError::schema("TempoChange", "negative term", Some(loc)));
        };
        m.tempo_change = Some((num, den));
    }
    if m.sign.is_none() && m.number.is_none() && m.tempus.is_none() && m.prolatio.is_none() {
        return Err(ParseError::schema("Mensuration", "neither sign, number nor MensInfo", Some(loc)));
    }
    Ok(CmmeEvent::Mensuration(m))
}

fn parse_variants(node: Node, ctx: &mut EventContext, loc: Location) -> Result<CmmeEvent, ParseError> {
    check_children(node, &["Reading"], &mut ctx.warnings, loc);
    let readings: Vec<Node> = children_named(node, "Reading").collect();
    if readings.is_empty() {
        return Err(ParseError::schema("VariantReadings", "no <Reading>", Some(loc)));
    }
    let default_idx = readings
        .iter()
        .position(|r| has_child(*r, "PreferredReading"))
        .unwrap_or(0);

    let parse_reading = |r: Node, ctx: &mut EventContext| -> Result<CmmeReading, ParseError> {
        check_children(
            r,
            &["VariantVersionID", "PreferredReading", "Lacuna", "Error", "Music"],
            &mut ctx.warnings,
            loc,
        );
        let events = match child(r, "Music") {
            Some(m) => parse_event_list(m, ctx)?,
            None => Vec::new(),
        };
        Ok(CmmeReading {
            source_refs: children_named(r, "VariantVersionID").map(flat_text).collect(),
            events,
            lacuna: has_child(r, "Lacuna"),
        })
    };

    let default = parse_reading(readings[default_idx], ctx)?;
    let mut others = Vec::new();
    for (i, r) in readings.iter().enumerate() {
        if i != default_idx {
            others.push(parse_reading(*r, ctx)?);
        }
    }
    Ok(CmmeEvent::VariantGroup(VariantGroup {
        default: default.events,
        default_sources: default.source_refs,
        readings: others,
    }))
}
