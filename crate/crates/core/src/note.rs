use std::fmt;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Stable note identifier, unique within a score.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoteId(pub String);

impl NoteId {
    pub fn new(id: impl Into<String>) -> Self {
        NoteId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NoteId {
    fn from(s: &str) -> Self {
        NoteId(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub fn pitch_class(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub fn from_letter(letter: &str) -> Option<Step> {
        Some(match letter.trim() {
            "C" => Step::C,
            "D" => Step::D,
            "E" => Step::E,
            "F" => Step::F,
            "G" => Step::G,
            "A" => Step::A,
            "B" => Step::B,
            _ => return None,
        })
    }

    pub fn letter(self) -> &'static str {
        match self {
            Step::C => "C",
            Step::D => "D",
            Step::E => "E",
            Step::F => "F",
            Step::G => "G",
            Step::A => "A",
            Step::B => "B",
        }
    }
}

/// Notated pitch: letter, accidental and octave (scientific pitch
/// notation, C4 = MIDI 60).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spelling {
    pub step: Step,
    pub alter: i8,
    pub octave: i8,
}

impl Spelling {
    pub fn pitch_class(&self) -> i32 {
        (self.step.pitch_class() + self.alter as i32).rem_euclid(12)
    }

    pub fn midi(&self) -> i32 {
        (self.octave as i32 + 1) * 12 + self.step.pitch_class() + self.alter as i32
    }

    /// Spelling with the fewest accidentals, sharps preferred on ties.
    pub fn simplest(midi_pitch: u8) -> Spelling {
        const TABLE: [(Step, i8); 12] = [
            (Step::C, 0),
            (Step::C, 1),
            (Step::D, 0),
            (Step::D, 1),
            (Step::E, 0),
            (Step::F, 0),
            (Step::F, 1),
            (Step::G, 0),
            (Step::G, 1),
            (Step::A, 0),
            (Step::A, 1),
            (Step::B, 0),
        ];
        let (step, alter) = TABLE[(midi_pitch % 12) as usize];
        Spelling {
            step,
            alter,
            octave: (midi_pitch / 12) as i8 - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: NoteId,
    #[serde(with = "rational::serde_str")]
    pub onset: Rational,
    #[serde(with = "rational::serde_str")]
    pub duration: Rational,
    pub midi_pitch: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spelling: Option<Spelling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice: Option<u8>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub removed: bool,
}

impl Note {
    pub fn new(id: impl Into<String>, onset: Rational, duration: Rational, midi_pitch: u8) -> Self {
        Note {
            id: NoteId::new(id),
            onset,
            duration,
            midi_pitch,
            spelling: None,
            voice: None,
            removed: false,
        }
    }

    pub fn end(&self) -> Rational {
        self.onset + self.duration
    }

    pub fn pitch_class(&self) -> u8 {
        self.midi_pitch % 12
    }

    pub fn validate(&self) -> Result<()> {
        if !self.duration.is_positive() {
            return Err(Error::validation(format!(
                "note `{}` has non-positive duration {}",
                self.id,
                rational::format_rational(&self.duration)
            )));
        }
        if self.onset.is_negative() {
            return Err(Error::validation(format!(
                "note `{}` has negative onset {}",
                self.id,
                rational::format_rational(&self.onset)
            )));
        }
        if self.midi_pitch > 127 {
            return Err(Error::validation(format!(
                "note `{}` has midi pitch {} outside [0, 127]",
                self.id, self.midi_pitch
            )));
        }
        if let Some(sp) = &self.spelling {
            if !(-2..=2).contains(&sp.alter) {
                return Err(Error::validation(format!(
                    "note `{}` has alter {} outside [-2, 2]",
                    self.id, sp.alter
                )));
            }
            if sp.pitch_class() != (self.midi_pitch % 12) as i32 {
                return Err(Error::validation(format!(
                    "note `{}` spelling {}{:+} does not match midi pitch {}",
                    self.id,
                    sp.step.letter(),
                    sp.alter,
                    self.midi_pitch
                )));
            }
        }
        Ok(())
    }
}
