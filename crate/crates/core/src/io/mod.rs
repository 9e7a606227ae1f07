//! Reading and writing scores and graphs.

mod dump;
mod json;
mod musicxml;

pub use dump::{GraphDump, HierarchyDump, DUMP_VERSION};
pub use json::{parse_notes_json, write_notes_json};
pub use musicxml::{parse_musicxml, write_musicxml, ExportOptions};

use std::path::Path;

use crate::error::{Error, Result};
use crate::note::Note;

/// Input document formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    MusicXml,
}

impl Format {
    /// Guesses from the file extension, then from the first non-blank byte.
    pub fn detect(path: &Path, text: &str) -> Format {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("json") => Format::Json,
            Some("xml" | "musicxml") => Format::MusicXml,
            _ if text.trim_start().starts_with('<') => Format::MusicXml,
            _ => Format::Json,
        }
    }
}

pub fn parse_notes(text: &str, format: Format) -> Result<Vec<Note>> {
    match format {
        Format::Json => parse_notes_json(text),
        Format::MusicXml => parse_musicxml(text),
    }
}

pub fn read_notes(path: &Path) -> Result<Vec<Note>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_notes(&text, Format::detect(path, &text))
}
