use crate::rational::RationalDuration;
use crate::report::ConversionReport;
use crate::score::{select_reading, EventKind, Marker, ScoreEvent, ScoreIR, VariantSelector};

/// Drops the editorial layer: every variant site is replaced by the reading
/// `sel` picks, lacuna markers are removed and onsets are recomputed.
pub fn flatten_editorial(ir: &ScoreIR, sel: &VariantSelector) -> (ScoreIR, ConversionReport) {
    let mut report = ConversionReport::new();
    let mut out = ir.clone();
    out.apparatus.clear();
    out.selection = sel.clone();
    for voice in &mut out.voices {
        let top: Vec<&ScoreEvent> = voice.events.iter().filter(|e| e.site.is_none()).collect();
        let mut events = Vec::with_capacity(voice.events.len());
        splice(ir, sel, &top, &mut events, &mut report);
        for e in &mut events {
            e.markers.remove(&Marker::Lacuna);
            e.site = None;
        }
        retime(&mut events);
        voice.events = events;
    }
    if !ir.apparatus.is_empty() {
        report.drop_feature("variant apparatus");
    }
    (out, report)
}

fn splice(
    ir: &ScoreIR,
    sel: &VariantSelector,
    list: &[&ScoreEvent],
    out: &mut Vec<ScoreEvent>,
    report: &mut ConversionReport,
) {
    for e in list {
        let EventKind::VariantAnchor(id) = e.kind else {
            out.push((*e).clone());
            continue;
        };
        let Some(site) = ir.site(id) else { continue };
        let (chosen, warning) = select_reading(site, sel);
        // Unknown sources were reported when the score was built.
        if let Some(w) = warning.filter(|_| sel != &ir.selection) {
            report.warn(w);
        }
        let own: Vec<&ScoreEvent> = chosen.iter().filter(|c| c.site == Some(id)).collect();
        splice(ir, sel, &own, out, report);
    }
}

/// Recomputes onsets from durations, so spliced readings of a different
/// length shift what follows.
fn retime(events: &mut [ScoreEvent]) {
    let mut cursor = RationalDuration::ZERO;
    let mut group_onset = RationalDuration::ZERO;
    for e in events {
        if e.is_timed() && e.simultaneous {
            e.onset_minima = group_onset;
            continue;
        }
        e.onset_minima = cursor;
        if e.is_timed() {
            group_onset = cursor;
            cursor += e.sounding_minima;
        }
    }
}
