use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{default_label_names, NodeClassifier, Predictions};
use crate::error::{Error, Result};
use crate::graph::{EdgeType, ScoreGraph};
use crate::note::{Note, NoteId};
use crate::rational::{self, Rational};

/// Declarative note predicate. Each rule yields a signed margin: positive
/// means the rule holds. Boolean rules use a margin of exactly +1 / -1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// The note's pitch class is one of `classes`.
    PitchClassIn {
        classes: Vec<u8>,
    },
    /// Some note sounding from the same onset (the note itself included)
    /// has pitch class `class`.
    OnsetHasPitchClass {
        class: u8,
    },
    /// Duration of at least `duration` quarters.
    MinDuration {
        #[serde(with = "rational::serde_str")]
        duration: Rational,
    },
    /// Some note ends exactly where this one starts.
    HasPredecessor,
    /// At least `size` notes start together with this one (itself included).
    MinChordSize {
        size: usize,
    },
    /// The onset falls on a beat (integer quarter position).
    OnBeat,
    /// Graded rule: margin `(pitch - threshold) / 12`.
    PitchAbove {
        threshold: f64,
    },
    /// A tonic (pitch class C) on a beat, reached from a leading tone,
    /// supertonic or dominant note that ends exactly at its onset.
    CadenceLike,
    Not {
        inner: Box<Rule>,
    },
    All {
        rules: Vec<Rule>,
    },
    Any {
        rules: Vec<Rule>,
    },
}

/// Per-graph lookup tables shared by all rule evaluations.
struct Context<'a> {
    by_onset: BTreeMap<Rational, Vec<&'a Note>>,
    predecessors: HashMap<&'a NoteId, Vec<&'a Note>>,
}

impl<'a> Context<'a> {
    fn new(graph: &'a ScoreGraph) -> Self {
        let mut by_onset: BTreeMap<Rational, Vec<&Note>> = BTreeMap::new();
        for n in graph.active_notes() {
            by_onset.entry(n.onset).or_default().push(n);
        }
        let mut predecessors: HashMap<&NoteId, Vec<&Note>> = HashMap::new();
        for e in graph.edges().iter().filter(|e| e.kind == EdgeType::Consecutive) {
            if let (Some(src), Some(dst)) = (e.src.as_note(), e.dst.as_note()) {
                if let (Some(s), Some(d)) = (graph.note(src), graph.note(dst)) {
                    predecessors.entry(&d.id).or_default().push(s);
                }
            }
        }
        Context { by_onset, predecessors }
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

impl Rule {
    fn margin(&self, note: &Note, ctx: &Context<'_>) -> f64 {
        match self {
            Rule::PitchClassIn { classes } => truth(classes.contains(&note.pitch_class())),
            Rule::OnsetHasPitchClass { class } => truth(
                ctx.by_onset
                    .get(&note.onset)
                    .is_some_and(|ns| ns.iter().any(|n| n.pitch_class() == *class)),
            ),
            Rule::MinDuration { duration } => truth(note.duration >= *duration),
            Rule::HasPredecessor => truth(ctx.predecessors.get(&note.id).is_some_and(|p| !p.is_empty())),
            Rule::MinChordSize { size } => truth(ctx.by_onset.get(&note.onset).map_or(0, Vec::len) >= *size),
            Rule::OnBeat => truth(note.onset.is_integer()),
            Rule::PitchAbove { threshold } => (note.midi_pitch as f64 - threshold) / 12.0,
            Rule::CadenceLike => {
                let resolved_from = ctx
                    .predecessors
                    .get(&note.id)
                    .is_some_and(|p| p.iter().any(|w| matches!(w.pitch_class(), 11 | 2 | 7)));
                truth(note.pitch_class() == 0 && note.onset.is_integer() && resolved_from)
            }
            Rule::Not { inner } => -inner.margin(note, ctx),
            Rule::All { rules } => rules.iter().map(|r| r.margin(note, ctx)).fold(f64::INFINITY, f64::min),
            Rule::Any { rules } => rules
                .iter()
                .map(|r| r.margin(note, ctx))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Margins for every active note of `graph`.
    pub fn margins(&self, graph: &ScoreGraph) -> Vec<(NoteId, f64)> {
        let ctx = Context::new(graph);
        graph
            .active_notes()
            .map(|n| (n.id.clone(), self.margin(n, &ctx)))
            .collect()
    }

    pub fn holds(&self, graph: &ScoreGraph, id: &NoteId) -> Option<bool> {
        let n = graph.note(id).filter(|n| !n.removed)?;
        Some(self.margin(n, &Context::new(graph)) > 0.0)
    }
}

/// Transparent classifier: `positive_class` when its rule holds.
///
/// Probabilities are `sigmoid(gain * margin)` for the positive class, with
/// `gain` chosen so a margin of 1 gives probability `confidence`. The rest
/// of the mass goes to `negative_class`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleClassifier {
    pub rule: Rule,
    pub num_classes: usize,
    pub positive_class: usize,
    pub negative_class: usize,
    pub confidence: f64,
}

impl RuleClassifier {
    pub fn new(rule: Rule) -> Self {
        RuleClassifier {
            rule,
            num_classes: 2,
            positive_class: 1,
            negative_class: 0,
            confidence: 0.9,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    /// Rule-based stand-in for a cadence detector: PAC on [`Rule::CadenceLike`].
    pub fn cadence_like() -> Self {
        Self::new(Rule::CadenceLike)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.positive_class >= self.num_classes || self.negative_class >= self.num_classes {
            return Err(Error::validation("rule classifier classes out of range"));
        }
        if self.positive_class == self.negative_class {
            return Err(Error::validation("positive and negative class must differ"));
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::validation("rule confidence must lie in (0.5, 1)"));
        }
        Ok(())
    }

    fn distribution(&self, margin: f64) -> Vec<f64> {
        let gain = (self.confidence / (1.0 - self.confidence)).ln();
        let p = 1.0 / (1.0 + (-gain * margin).exp());
        let mut d = vec![0.0; self.num_classes];
        d[self.positive_class] = p;
        d[self.negative_class] = 1.0 - p;
        d
    }
}

impl NodeClassifier for RuleClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn label_names(&self) -> Vec<String> {
        default_label_names(self.num_classes)
    }

    fn classify(&self, graph: &ScoreGraph) -> Result<Predictions> {
        self.validate()?;
        Ok(self
            .rule
            .margins(graph)
            .into_iter()
            .map(|(id, m)| (id, self.distribution(m)))
            .collect())
    }
}
