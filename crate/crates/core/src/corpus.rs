//! Entity-annotated dialogue corpora.
//!
//! A corpus is a line-delimited stream with one dialogue per line:
//!
//! ```text
//! {"dialogue_id": "d1", "turns": [{"speaker": "patient", "text": "...",
//!   "entities": [{"label": "cough", "class": "symptom", "state": "mention"}]}]}
//! ```
//!
//! Entities arrive pre-annotated. Labels are canonicalised by trimming and
//! lower-casing; nothing fuzzier than that happens here.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown entity class '{value}'")]
    UnknownClass { line: usize, value: String },
    #[error("line {line}: unknown state '{value}'")]
    UnknownState { line: usize, value: String },
    #[error("line {line}: unknown speaker '{value}'")]
    UnknownSpeaker { line: usize, value: String },
    #[error("line {line}: empty entity label")]
    EmptyLabel { line: usize },
    #[error("line {line}: dialogue '{id}' has no turns")]
    EmptyDialogue { line: usize, id: String },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Attribute,
    Disease,
    Examination,
    Medicine,
    Symptom,
}

impl EntityClass {
    pub const ALL: [EntityClass; 5] = [
        EntityClass::Attribute,
        EntityClass::Disease,
        EntityClass::Examination,
        EntityClass::Medicine,
        EntityClass::Symptom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityClass::Attribute => "attribute",
            EntityClass::Disease => "disease",
            EntityClass::Examination => "examination",
            EntityClass::Medicine => "medicine",
            EntityClass::Symptom => "symptom",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "attribute" => Ok(EntityClass::Attribute),
            "disease" => Ok(EntityClass::Disease),
            "examination" => Ok(EntityClass::Examination),
            "medicine" => Ok(EntityClass::Medicine),
            "symptom" => Ok(EntityClass::Symptom),
            _ => Err(s.to_string()),
        }
    }
}

/// Whether an utterance asserts or negates an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionState {
    Mention,
    Deny,
}

impl MentionState {
    pub fn as_str(self) -> &'static str {
        match self {
            MentionState::Mention => "mention",
            MentionState::Deny => "deny",
        }
    }
}

impl FromStr for MentionState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "mention" => Ok(MentionState::Mention),
            "deny" => Ok(MentionState::Deny),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Doctor,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Patient => "patient",
            Speaker::Doctor => "doctor",
        }
    }
}

impl FromStr for Speaker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "patient" => Ok(Speaker::Patient),
            "doctor" => Ok(Speaker::Doctor),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub label: String,
    pub class: EntityClass,
    pub state: MentionState,
}

impl EntityMention {
    /// Builds a mention, canonicalising the label.
    pub fn new(label: &str, class: EntityClass, state: MentionState) -> Self {
        EntityMention {
            label: canonical_label(label),
            class,
            state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: Option<String>,
    pub mentions: Vec<EntityMention>,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: Option<String>, mentions: Vec<EntityMention>) -> Self {
        Utterance {
            speaker,
            text,
            mentions: collapse_duplicates(mentions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

/// Trim and case-fold.
pub fn canonical_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// A repeated label keeps its first position and takes the last state.
fn collapse_duplicates(mentions: Vec<EntityMention>) -> Vec<EntityMention> {
    let mut out: Vec<EntityMention> = Vec::with_capacity(mentions.len());
    for m in mentions {
        match out.iter_mut().find(|o| o.label == m.label) {
            Some(existing) => {
                existing.state = m.state;
                existing.class = m.class;
            }
            None => out.push(m),
        }
    }
    out
}

// Wire records. Enumerated fields are kept as strings so errors can name the bad value.

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    dialogue_id: String,
    turns: Vec<TurnRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default)]
    entities: Vec<EntityRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntityRecord {
    label: String,
    class: String,
    state: String,
}

/// Parses a single corpus line. `line` is the 1-based line number used in errors.
pub fn parse_dialogue_line(raw: &str, line: usize) -> Result<Dialogue, CorpusError> {
    let record: DialogueRecord =
        serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
    if record.turns.is_empty() {
        return Err(CorpusError::EmptyDialogue {
            line,
            id: record.dialogue_id,
        });
    }
    let mut turns = Vec::with_capacity(record.turns.len());
    for t in record.turns {
        let speaker = t
            .speaker
            .parse::<Speaker>()
            .map_err(|value| CorpusError::UnknownSpeaker { line, value })?;
        let mut mentions = Vec::with_capacity(t.entities.len());
        for e in t.entities {
            let class = e
                .class
                .parse::<EntityClass>()
                .map_err(|value| CorpusError::UnknownClass { line, value })?;
            let state = e
                .state
                .parse::<MentionState>()
                .map_err(|value| CorpusError::UnknownState { line, value })?;
            let label = canonical_label(&e.label);
            if label.is_empty() {
                return Err(CorpusError::EmptyLabel { line });
            }
            mentions.push(EntityMention { label, class, state });
        }
        turns.push(Utterance::new(speaker, t.text, mentions));
    }
    Ok(Dialogue {
        id: record.dialogue_id,
        turns,
    })
}

/// Parses a line-delimited corpus. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<Vec<Dialogue>, CorpusError> {
    let mut dialogues = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_text = line?;
        if line_text.trim().is_empty() {
            continue;
        }
        dialogues.push(parse_dialogue_line(&line_text, idx + 1)?);
    }
    Ok(dialogues)
}

pub fn parse_corpus_str(input: &str) -> Result<Vec<Dialogue>, CorpusError> {
    parse_corpus(input.as_bytes())
}

/// Serialises one dialogue as a single corpus line (no trailing newline).
pub fn serialize_dialogue(d: &Dialogue) -> String {
    let record = DialogueRecord {
        dialogue_id: d.id.clone(),
        turns: d
            .turns
            .iter()
            .map(|u| TurnRecord {
                speaker: u.speaker.as_str().to_string(),
                text: u.text.clone(),
                entities: u
                    .mentions
                    .iter()
                    .map(|m| EntityRecord {
                        label: m.label.clone(),
                        class: m.class.as_str().to_string(),
                        state: m.state.as_str().to_string(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&record).expect("dialogue record serialises")
}

pub fn serialize_corpus(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&serialize_dialogue(d));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    /// The same label was annotated with two different classes.
    ClassConflict {
        label: String,
        first_turn: usize,
        first_class: EntityClass,
        turn: usize,
        class: EntityClass,
    },
    NoEntities,
    /// Doctors rarely negate entities; allowed, but flagged.
    DoctorDeny { turn: usize, label: String },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::ClassConflict {
                label,
                first_turn,
                first_class,
                turn,
                class,
            } => write!(
                f,
                "class conflict: '{label}' is {first_class} in turn {first_turn} and {class} in turn {turn}"
            ),
            ValidationWarning::NoEntities => f.write_str("no entities"),
            ValidationWarning::DoctorDeny { turn, label } => {
                write!(f, "doctor deny: '{label}' negated by the doctor in turn {turn}")
            }
        }
    }
}

pub fn validate_dialogue(d: &Dialogue) -> Vec<ValidationWarning> {
    let mut warnings = Vec::new();
    let mut seen: BTreeMap<&str, (usize, EntityClass)> = BTreeMap::new();
    let mut any = false;
    for (turn, u) in d.turns.iter().enumerate() {
        for m in &u.mentions {
            any = true;
            match seen.get(m.label.as_str()) {
                Some(&(first_turn, first_class)) if first_class != m.class => {
                    warnings.push(ValidationWarning::ClassConflict {
                        label: m.label.clone(),
                        first_turn,
                        first_class,
                        turn,
                        class: m.class,
                    });
                }
                Some(_) => {}
                None => {
                    seen.insert(&m.label, (turn, m.class));
                }
            }
            if u.speaker == Speaker::Doctor && m.state == MentionState::Deny {
                warnings.push(ValidationWarning::DoctorDeny {
                    turn,
                    label: m.label.clone(),
                });
            }
        }
    }
    if !any {
        warnings.push(ValidationWarning::NoEntities);
    }
    warnings
}
