use std::collections::HashSet;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::note::{Note, NoteId, Spelling};
use crate::rational::{parse_rational, Rational};

/// Onsets and durations may be given as `"p/q"` strings or plain integers.
#[derive(Deserialize)]
#[serde(untagged)]
enum Time {
    Text(String),
    Int(i64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNote {
    id: NoteId,
    onset: Time,
    duration: Time,
    midi_pitch: i64,
    #[serde(default)]
    spelling: Option<Spelling>,
    #[serde(default)]
    voice: Option<u8>,
    #[serde(default)]
    removed: bool,
}

fn time(value: Time, id: &NoteId, field: &str) -> Result<Rational> {
    match value {
        Time::Int(i) => Ok(Rational::from_integer(i)),
        Time::Text(s) => parse_rational(&s).map_err(|m| Error::parse(format!("note `{id}`, field `{field}`"), m)),
    }
}

/// Parses a JSON note list. Order is preserved; ids must be unique.
pub fn parse_notes_json(text: &str) -> Result<Vec<Note>> {
    let raw: Vec<RawNote> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    let mut notes = Vec::with_capacity(raw.len());
    for r in raw {
        if !(0..=127).contains(&r.midi_pitch) {
            return Err(Error::validation(format!(
                "note `{}` has midi pitch {} outside [0, 127]",
                r.id, r.midi_pitch
            )));
        }
        let note = Note {
            onset: time(r.onset, &r.id, "onset")?,
            duration: time(r.duration, &r.id, "duration")?,
            midi_pitch: r.midi_pitch as u8,
            spelling: r.spelling,
            voice: r.voice,
            removed: r.removed,
            id: r.id,
        };
        note.validate()?;
        if !seen.insert(note.id.clone()) {
            return Err(Error::validation(format!("duplicate note id `{}`", note.id)));
        }
        notes.push(note);
    }
    Ok(notes)
}

pub fn write_notes_json<'a>(notes: impl IntoIterator<Item = &'a Note>) -> String {
    let notes: Vec<&Note> = notes.into_iter().collect();
    serde_json::to_string_pretty(&notes).expect("notes serialize")
}
