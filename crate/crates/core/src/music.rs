//! Pitches and mensural note shapes shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
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
    pub fn from_letter(c: char) -> Option<Step> {
        Some(match c.to_ascii_uppercase() {
            'C' => Step::C,
            'D' => Step::D,
            'E' => Step::E,
            'F' => Step::F,
            'G' => Step::G,
            'A' => Step::A,
            'B' => Step::B,
            _ => return None,
        })
    }

    /// Diatonic index within the octave, C = 0.
    pub fn index(self) -> i32 {
        self as i32
    }

    pub fn semitones(self) -> i32 {
        [0, 2, 4, 5, 7, 9, 11][self as usize]
    }

    /// Lower-case pitch name as used by MEI `@pname`.
    pub fn pname(self) -> &'static str {
        ["c", "d", "e", "f", "g", "a", "b"][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Accidental {
    Flat,
    Natural,
    Sharp,
}

impl Accidental {
    pub fn semitones(self) -> i32 {
        match self {
            Accidental::Flat => -1,
            Accidental::Natural => 0,
            Accidental::Sharp => 1,
        }
    }

    /// MEI `@accid` value.
    pub fn mei(self) -> &'static str {
        match self {
            Accidental::Flat => "f",
            Accidental::Natural => "n",
            Accidental::Sharp => "s",
        }
    }
}

/// A written pitch. Octaves are numbered so that middle C is C4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Pitch {
    pub step: Step,
    pub octave: i32,
    pub accidental: Option<Accidental>,
}

impl Pitch {
    pub fn new(step: Step, octave: i32) -> Self {
        Pitch { step, octave, accidental: None }
    }

    pub fn with_accidental(mut self, accidental: Accidental) -> Self {
        self.accidental = Some(accidental);
        self
    }

    /// MIDI-style key number including the accidental (C4 = 60).
    pub fn key_number(&self) -> i32 {
        (self.octave + 1) * 12
            + self.step.semitones()
            + self.accidental.map_or(0, Accidental::semitones)
    }

    /// Staff-position number, ignoring accidentals.
    pub fn diatonic(&self) -> i32 {
        self.octave * 7 + self.step.index()
    }

    /// Same notated pitch, ignoring the accidental.
    pub fn same_letter(&self, other: &Pitch) -> bool {
        self.step == other.step && self.octave == other.octave
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.step)?;
        match self.accidental {
            Some(Accidental::Flat) => f.write_str("b")?,
            Some(Accidental::Sharp) => f.write_str("#")?,
            Some(Accidental::Natural) => f.write_str("n")?,
            None => {}
        }
        write!(f, "{}", self.octave)
    }
}

/// Mensural note values ordered from the smallest to the largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteShape {
    Semifusa,
    Fusa,
    Semiminima,
    Minima,
    Semibrevis,
    Brevis,
    Longa,
    Maxima,
}

impl NoteShape {
    pub const ALL: [NoteShape; 8] = [
        NoteShape::Semifusa,
        NoteShape::Fusa,
        NoteShape::Semiminima,
        NoteShape::Minima,
        NoteShape::Semibrevis,
        NoteShape::Brevis,
        NoteShape::Longa,
        NoteShape::Maxima,
    ];

    /// MEI mensural `@dur` value.
    pub fn mei(self) -> &'static str {
        match self {
            NoteShape::Maxima => "maxima",
            NoteShape::Longa => "longa",
            NoteShape::Brevis => "brevis",
            NoteShape::Semibrevis => "semibrevis",
            NoteShape::Minima => "minima",
            NoteShape::Semiminima => "semiminima",
            NoteShape::Fusa => "fusa",
            NoteShape::Semifusa => "semifusa",
        }
    }
}

impl FromStr for NoteShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        NoteShape::ALL
            .into_iter()
            .find(|shape| shape.mei() == lower)
            .ok_or_else(|| format!("unknown note type {s:?}"))
    }
}
