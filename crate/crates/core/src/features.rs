//! Fixed per-note feature vector.
//!
//! Layout (width 15):
//!
//! | index  | feature                                         |
//! |--------|-------------------------------------------------|
//! | 0      | `midi_pitch / 127`                              |
//! | 1..=12 | pitch-class one-hot (C = 1, C# = 2, ...)        |
//! | 13     | `log2(duration) / 4` (quarter = 0, whole = 0.5) |
//! | 14     | onset position inside its beat, in `[0, 1)`     |
//!
//! Beats are quarter notes. Beat and measure nodes use [`hierarchy_features`].

use num_traits::ToPrimitive;

use crate::note::Note;

/// Identifier of the layout above; stored in graph metadata so that
/// distances are only computed between graphs sharing it.
pub const FEATURE_LAYOUT: &str = "pitch/127,pc-onehot-12,log2dur/4,beat-frac;v1";
pub const FEATURE_WIDTH: usize = 15;

pub const PITCH: usize = 0;
pub const PITCH_CLASS: usize = 1;
pub const LOG_DURATION: usize = 13;
pub const BEAT_POSITION: usize = 14;

pub type NoteFeatures = [f64; FEATURE_WIDTH];

pub fn note_features(note: &Note) -> NoteFeatures {
    let mut f = [0.0; FEATURE_WIDTH];
    f[PITCH] = note.midi_pitch as f64 / 127.0;
    f[PITCH_CLASS + note.pitch_class() as usize] = 1.0;
    let dur = note.duration.to_f64().unwrap_or(1.0);
    f[LOG_DURATION] = dur.log2() / 4.0;
    let frac = note.onset - note.onset.floor();
    f[BEAT_POSITION] = frac.to_f64().unwrap_or(0.0);
    f
}

pub fn hierarchy_features() -> NoteFeatures {
    [0.0; FEATURE_WIDTH]
}

pub fn l1_norm(f: &NoteFeatures) -> f64 {
    f.iter().map(|x| x.abs()).sum()
}

pub fn l1_distance(a: &NoteFeatures, b: &NoteFeatures) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
