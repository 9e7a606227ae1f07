//! Minimal partwise MusicXML: one part, pitched notes, rests, chords,
//! `<backup>`/`<forward>` and voices. Ties, tuplets and notation details
//! are ignored.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use num_integer::Integer;
use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::note::{Note, NoteId, Spelling, Step};
use crate::rational::{floor_div, format_rational, Rational};

fn location(doc: &Document<'_>, node: Node<'_, '_>) -> String {
    let pos = doc.text_pos_at(node.range().start);
    format!("line {}, column {}", pos.row, pos.col)
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

struct Reader<'d, 'i> {
    doc: &'d Document<'i>,
}

impl<'d, 'i> Reader<'d, 'i> {
    fn fail(&self, node: Node<'_, '_>, message: impl Into<String>) -> Error {
        Error::parse(location(self.doc, node), message)
    }

    fn int(&self, node: Node<'_, '_>, name: &str) -> Result<i64> {
        let text = child_text(node, name).ok_or_else(|| self.fail(node, format!("missing <{name}>")))?;
        text.parse()
            .map_err(|_| self.fail(node, format!("<{name}> is not an integer: `{text}`")))
    }

    fn pitch(&self, note: Node<'_, '_>) -> Result<Spelling> {
        let pitch = child(note, "pitch").ok_or_else(|| self.fail(note, "note has neither <pitch> nor <rest>"))?;
        let letter = child_text(pitch, "step").ok_or_else(|| self.fail(pitch, "missing <step>"))?;
        let step = Step::from_letter(letter).ok_or_else(|| self.fail(pitch, format!("invalid step `{letter}`")))?;
        let alter = match child_text(pitch, "alter") {
            None => 0.0,
            Some(t) => t
                .parse::<f64>()
                .map_err(|_| self.fail(pitch, format!("invalid <alter> `{t}`")))?,
        };
        if alter.fract() != 0.0 || !(-2.0..=2.0).contains(&alter) {
            return Err(self.fail(pitch, format!("unsupported alter {alter}")));
        }
        let octave = self.int(pitch, "octave")?;
        if !(-1..=9).contains(&octave) {
            return Err(self.fail(pitch, format!("octave {octave} out of range")));
        }
        Ok(Spelling {
            step,
            alter: alter as i8,
            octave: octave as i8,
        })
    }

    /// Nominal measure length in quarters from a `<time>` element.
    fn time_signature(&self, time: Node<'_, '_>) -> Result<Option<Rational>> {
        if time.has_attribute("symbol") && child(time, "beats").is_none() {
            return Ok(None);
        }
        let beats_text = child_text(time, "beats").ok_or_else(|| self.fail(time, "missing <beats>"))?;
        let mut beats = 0i64;
        for part in beats_text.split('+') {
            beats += part
                .trim()
                .parse::<i64>()
                .map_err(|_| self.fail(time, format!("invalid <beats> `{beats_text}`")))?;
        }
        let beat_type = self.int(time, "beat-type")?;
        if beats <= 0 || beat_type <= 0 {
            return Err(self.fail(time, "time signature must be positive"));
        }
        Ok(Some(Rational::new(beats * 4, beat_type)))
    }
}

/// Parses a single-part partwise document into notes.
///
/// Note ids come from the `id` attribute of `<note>`, or `n{k}` for the
/// k-th pitched note. Each measure starts where the previous one's time
/// signature says it ends; implicit measures and measures without a time
/// signature last as long as their content.
pub fn parse_musicxml(text: &str) -> Result<Vec<Note>> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::parse(format!("line {}, column {}", pos.row, pos.col), e.to_string())
    })?;
    let r = Reader { doc: &doc };
    let root = doc.root_element();
    if !root.has_tag_name("score-partwise") {
        return Err(r.fail(
            root,
            format!("expected <score-partwise>, found <{}>", root.tag_name().name()),
        ));
    }
    let parts: Vec<Node> = root.children().filter(|c| c.has_tag_name("part")).collect();
    let part = match parts.as_slice() {
        [] => return Ok(Vec::new()),
        [p] => *p,
        [_, second, ..] => return Err(r.fail(*second, "only single-part documents are supported")),
    };

    let mut notes: Vec<Note> = Vec::new();
    let mut ids = HashSet::new();
    let mut divisions = 1i64;
    let mut nominal: Option<Rational> = None;
    let mut measure_start = Rational::from_integer(0);
    let zero = Rational::from_integer(0);
    for measure in part.children().filter(|c| c.has_tag_name("measure")) {
        let mut cursor = zero;
        let mut extent = zero;
        let mut last_onset = zero;
        for el in measure.children().filter(Node::is_element) {
            match el.tag_name().name() {
                "attributes" => {
                    if child(el, "divisions").is_some() {
                        divisions = r.int(el, "divisions")?;
                        if divisions <= 0 {
                            return Err(r.fail(el, "<divisions> must be positive"));
                        }
                    }
                    if let Some(time) = child(el, "time") {
                        nominal = r.time_signature(time)?;
                    }
                }
                "backup" | "forward" => {
                    let d = Rational::new(r.int(el, "duration")?, divisions);
                    if el.has_tag_name("backup") {
                        cursor -= d;
                        if cursor < zero {
                            return Err(r.fail(el, "<backup> moves before the measure start"));
                        }
                    } else {
                        cursor += d;
                        extent = extent.max(cursor);
                    }
                }
                "note" => {
                    if child(el, "grace").is_some() || child(el, "cue").is_some() {
                        continue;
                    }
                    let d = Rational::new(r.int(el, "duration")?, divisions);
                    let onset = if child(el, "chord").is_some() {
                        last_onset
                    } else {
                        let at = cursor;
                        cursor += d;
                        at
                    };
                    last_onset = onset;
                    extent = extent.max(onset + d);
                    if child(el, "rest").is_some() {
                        continue;
                    }
                    let spelling = r.pitch(el)?;
                    let midi = spelling.midi();
                    if !(0..=127).contains(&midi) {
                        return Err(r.fail(el, format!("pitch {midi} outside the midi range")));
                    }
                    let id = match el.attribute("id") {
                        Some(id) => NoteId::new(id),
                        None => NoteId(format!("n{}", notes.len())),
                    };
                    if !ids.insert(id.clone()) {
                        return Err(Error::validation(format!(
                            "duplicate note id `{id}` at {}",
                            location(&doc, el)
                        )));
                    }
                    let voice = match child_text(el, "voice") {
                        Some(v) => Some(
                            v.parse::<u8>()
                                .map_err(|_| r.fail(el, format!("invalid <voice> `{v}`")))?,
                        ),
                        None => None,
                    };
                    let note = Note {
                        id,
                        onset: measure_start + onset,
                        duration: d,
                        midi_pitch: midi as u8,
                        spelling: Some(spelling),
                        voice,
                        removed: false,
                    };
                    note.validate()?;
                    notes.push(note);
                }
                _ => {}
            }
        }
        let implicit = measure.attribute("implicit") == Some("yes");
        measure_start += match nominal {
            Some(len) if !implicit => len,
            _ => extent,
        };
    }
    Ok(notes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportOptions {
    /// Measure length in quarters; 4 when absent.
    pub measure_length: Option<Rational>,
    pub title: Option<String>,
    /// Notes written with `color` set to [`ExportOptions::color`].
    pub highlight: BTreeSet<NoteId>,
    pub color: String,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            measure_length: None,
            title: None,
            highlight: BTreeSet::new(),
            color: "#D62728".into(),
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// `(beats, beat_type)` for a measure of `len` quarters.
fn time_signature(len: Rational) -> Result<(i64, i64)> {
    for k in 0..5 {
        let beats = len * Rational::from_integer(1 << k);
        if beats.is_integer() {
            return Ok((beats.to_integer(), 4 << k));
        }
    }
    Err(Error::validation(format!(
        "measure length {} has no time signature",
        format_rational(&len)
    )))
}

/// Writes the non-removed notes as a single-part document. Notes are
/// placed with `<forward>`/`<backup>` rather than `<chord>`, so overlapping
/// notes of any duration survive a round trip exactly.
pub fn write_musicxml<'a>(notes: impl IntoIterator<Item = &'a Note>, opts: &ExportOptions) -> Result<String> {
    let len = opts.measure_length.unwrap_or(Rational::from_integer(4));
    if len <= Rational::from_integer(0) {
        return Err(Error::validation("measure length must be positive"));
    }
    let (beats, beat_type) = time_signature(len)?;
    let mut measures: BTreeMap<i64, Vec<&Note>> = BTreeMap::new();
    let mut divisions = *len.denom();
    for n in notes.into_iter().filter(|n| !n.removed) {
        n.validate()?;
        let m = floor_div(&n.onset, &len);
        let rel = n.onset - len * Rational::from_integer(m);
        divisions = divisions.lcm(rel.denom()).lcm(n.duration.denom());
        measures.entry(m).or_default().push(n);
    }
    let ticks = |x: Rational| (x * Rational::from_integer(divisions)).to_integer();

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    out.push_str("<score-partwise version=\"4.0\">\n");
    if let Some(title) = &opts.title {
        let _ = writeln!(
            out,
            "  <work>\n    <work-title>{}</work-title>\n  </work>",
            escape(title)
        );
    }
    out.push_str("  <part-list>\n    <score-part id=\"P1\">\n      <part-name>Music</part-name>\n    </score-part>\n  </part-list>\n");
    out.push_str("  <part id=\"P1\">\n");
    let last = measures.keys().next_back().copied().unwrap_or(0);
    for m in 0..=last {
        let _ = writeln!(out, "    <measure number=\"{}\">", m + 1);
        if m == 0 {
            let _ = writeln!(
                out,
                "      <attributes>\n        <divisions>{divisions}</divisions>\n        <time>\n          <beats>{beats}</beats>\n          <beat-type>{beat_type}</beat-type>\n        </time>\n      </attributes>"
            );
        }
        let mut group = measures.remove(&m).unwrap_or_default();
        group.sort_by_key(|n| n.onset);
        let start = len * Rational::from_integer(m);
        let mut cursor = Rational::from_integer(0);
        for n in group {
            let rel = n.onset - start;
            if rel > cursor {
                let _ = writeln!(
                    out,
                    "      <forward>\n        <duration>{}</duration>\n      </forward>",
                    ticks(rel - cursor)
                );
            } else if rel < cursor {
                let _ = writeln!(
                    out,
                    "      <backup>\n        <duration>{}</duration>\n      </backup>",
                    ticks(cursor - rel)
                );
            }
            let sp = n.spelling.unwrap_or_else(|| Spelling::simplest(n.midi_pitch));
            let color = if opts.highlight.contains(&n.id) {
                format!(" color=\"{}\"", escape(&opts.color))
            } else {
                String::new()
            };
            let _ = writeln!(out, "      <note id=\"{}\"{color}>", escape(n.id.as_str()));
            let _ = write!(out, "        <pitch>\n          <step>{}</step>\n", sp.step.letter());
            if sp.alter != 0 {
                let _ = writeln!(out, "          <alter>{}</alter>", sp.alter);
            }
            let _ = write!(out, "          <octave>{}</octave>\n        </pitch>\n", sp.octave);
            let _ = writeln!(out, "        <duration>{}</duration>", ticks(n.duration));
            if let Some(v) = n.voice {
                let _ = writeln!(out, "        <voice>{v}</voice>");
            }
            out.push_str("      </note>\n");
            cursor = rel + n.duration;
        }
        out.push_str("    </measure>\n");
    }
    out.push_str("  </part>\n</score-partwise>\n");
    Ok(out)
}
