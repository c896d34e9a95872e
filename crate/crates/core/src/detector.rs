//! Hallucination detection over consecutive dialogue-graph snapshots.
//!
//! Only patient turns are inspected. Per entity change:
//!
//! * a new node with no edge into a non-empty graph is `Isolated`;
//! * removing a node whose component falls apart is `Denial`;
//! * removing a node while the rest stays connected is `Contradiction`,
//!   as is re-mentioning a negated entity.
//!
//! A patient "no" right after the doctor raised an entity the patient never
//! mentioned is an ordinary answer and is not reported.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{MentionState, Speaker};
use crate::dialogue_graph::{ChangeKind, ChangeRecord, EntityChange, GraphSnapshot, StateChange};
use crate::entropy::{connected_entropy_floor, split_entropy_ceiling, EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HallucinationKind {
    Isolated,
    Denial,
    Contradiction,
}

impl HallucinationKind {
    pub const ALL: [HallucinationKind; 3] = [
        HallucinationKind::Isolated,
        HallucinationKind::Denial,
        HallucinationKind::Contradiction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HallucinationKind::Isolated => "isolated",
            HallucinationKind::Denial => "denial",
            HallucinationKind::Contradiction => "contradiction",
        }
    }
}

impl fmt::Display for HallucinationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HallucinationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "isolated" => Ok(HallucinationKind::Isolated),
            "denial" => Ok(HallucinationKind::Denial),
            "contradiction" => Ok(HallucinationKind::Contradiction),
            _ => Err(s.to_string()),
        }
    }
}

/// How the entropy-threshold classifier compares with connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    EntropyOnlyDiffers,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct HallucinationEvent {
    pub turn: usize,
    pub kind: HallucinationKind,
    pub subject: String,
    pub delta_n: i64,
    pub delta_h1: f64,
    pub components_before: usize,
    pub components_after: usize,
    pub agreement: Agreement,
    /// Turn of the earlier, opposite statement about the subject, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_state: Option<MentionState>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("snapshots {prev} and {next} are not consecutive")]
    NonConsecutive { prev: usize, next: usize },
    #[error("change record is for turn {change} but snapshot is for turn {snapshot:?}")]
    TurnMismatch { change: usize, snapshot: Option<usize> },
}

/// Verdict of the entropy-threshold classifier for one removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyVerdict {
    Kind(HallucinationKind),
    /// Both or neither threshold matched.
    Ambiguous,
    /// Fewer than two survivors.
    NotApplicable,
}

/// Classifies a node removal from the survivors' unit-weight entropy alone.
///
/// `post_h1` is the structural entropy of the survivors and `post_degrees`
/// their unit degrees after the removal. Entropy at or above the connected
/// floor means the survivors still hang together (`Contradiction`); at or
/// below the split ceiling means they came apart (`Denial`).
pub fn classify_by_entropy(post_h1: f64, post_degrees: &[f64]) -> EntropyVerdict {
    if post_degrees.len() < 2 {
        return EntropyVerdict::NotApplicable;
    }
    let connected = post_h1 >= connected_entropy_floor(post_degrees) - EPSILON;
    let split = post_h1 <= split_entropy_ceiling(post_degrees) + EPSILON;
    match (connected, split) {
        (true, false) => EntropyVerdict::Kind(HallucinationKind::Contradiction),
        (false, true) => EntropyVerdict::Kind(HallucinationKind::Denial),
        _ => EntropyVerdict::Ambiguous,
    }
}

fn agreement(change: &EntityChange, kind: HallucinationKind) -> Agreement {
    let ChangeKind::Removed {
        unit_degrees,
        unit_h1,
        ..
    } = &change.kind
    else {
        return Agreement::NotApplicable;
    };
    match classify_by_entropy(*unit_h1, unit_degrees) {
        EntropyVerdict::NotApplicable => Agreement::NotApplicable,
        EntropyVerdict::Kind(k) if k == kind => Agreement::Agree,
        _ => Agreement::EntropyOnlyDiffers,
    }
}

/// Entries recorded strictly before `turn`.
fn before_turn(history: &[StateChange], turn: usize) -> &[StateChange] {
    let end = history.iter().position(|h| h.turn >= turn).unwrap_or(history.len());
    &history[..end]
}

fn patient_mentioned(prior: &[StateChange]) -> bool {
    prior
        .iter()
        .any(|h| h.speaker == Speaker::Patient && h.state == MentionState::Mention)
}

/// Doctor raised the entity in the previous turn and the patient never
/// claimed it.
fn answers_doctor(prior: &[StateChange], turn: usize) -> bool {
    match prior.last() {
        Some(last) => {
            last.speaker == Speaker::Doctor
                && last.state == MentionState::Mention
                && last.turn + 1 == turn
                && !patient_mentioned(prior)
        }
        None => false,
    }
}

fn latest_with_state(prior: &[StateChange], state: MentionState) -> Option<usize> {
    prior.iter().rev().find(|h| h.state == state).map(|h| h.turn)
}

/// Events raised by one applied utterance.
///
/// `history` is the session's per-entity state history after the utterance
/// was applied.
pub fn observe(
    prev: &GraphSnapshot,
    next: &GraphSnapshot,
    change: &ChangeRecord,
    history: &BTreeMap<String, Vec<StateChange>>,
) -> Result<Vec<HallucinationEvent>, DetectorError> {
    if next.seq != prev.seq + 1 {
        return Err(DetectorError::NonConsecutive {
            prev: prev.seq,
            next: next.seq,
        });
    }
    if next.turn != Some(change.turn) {
        return Err(DetectorError::TurnMismatch {
            change: change.turn,
            snapshot: next.turn,
        });
    }
    if change.speaker != Speaker::Patient {
        return Ok(Vec::new());
    }

    let turn = change.turn;
    let mut events = Vec::new();
    for c in &change.changes {
        let full = history.get(&c.label).map(Vec::as_slice).unwrap_or(&[]);
        let prior = before_turn(full, turn);
        let (kind, prior_state) = match &c.kind {
            ChangeKind::Added { neighbors, .. } if neighbors.is_empty() && c.n_before >= 1 => {
                (HallucinationKind::Isolated, None)
            }
            ChangeKind::Restored { .. } => (HallucinationKind::Contradiction, Some(MentionState::Deny)),
            ChangeKind::Removed { .. } => {
                if answers_doctor(prior, turn) {
                    continue;
                }
                let kind = if c.is_split() {
                    HallucinationKind::Denial
                } else {
                    HallucinationKind::Contradiction
                };
                (kind, Some(MentionState::Mention))
            }
            _ => continue,
        };
        let prior_turn = prior_state.and_then(|s| latest_with_state(prior, s));
        events.push(HallucinationEvent {
            turn,
            kind,
            subject: c.label.clone(),
            delta_n: c.n_after as i64 - c.n_before as i64,
            delta_h1: c.h1_after - c.h1_before,
            components_before: c.components_before,
            components_after: c.components_after,
            agreement: agreement(c, kind),
            prior_turn,
            prior_state: prior_turn.and(prior_state),
        });
    }
    Ok(events)
}

/// Replays a whole dialogue and collects every event.
pub fn detect_dialogue(
    kg: &crate::knowledge_graph::KnowledgeGraph,
    dialogue: &crate::corpus::Dialogue,
) -> Vec<HallucinationEvent> {
    let mut g = crate::dialogue_graph::new_session(kg);
    let mut events = Vec::new();
    for u in &dialogue.turns {
        let prev = g.last_snapshot().clone();
        let (next, change) = g.apply_utterance(u);
        events.extend(observe(&prev, &next, &change, g.history()).expect("consecutive by construction"));
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, EntityClass, EntityMention, Utterance};
    use crate::dialogue_graph::new_session;
    use crate::knowledge_graph::{EdgeSpec, EntityNode, KnowledgeGraph};

    fn kg_from(labels: &[&str], edges: &[(&str, &str)]) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            0.0,
            labels
                .iter()
                .map(|l| EntityNode {
                    label: l.to_string(),
                    class: EntityClass::Symptom,
                    freq: 1,
                })
                .collect(),
            edges
                .iter()
                .map(|(s, d)| EdgeSpec {
                    src: s.to_string(),
                    dst: d.to_string(),
                    cooc: 1,
                    weight: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn utt(speaker: Speaker, items: &[(&str, MentionState)]) -> Utterance {
        Utterance::new(
            speaker,
            None,
            items
                .iter()
                .map(|(l, s)| EntityMention::new(l, EntityClass::Symptom, *s))
                .collect(),
        )
    }

    fn p(labels: &[&str]) -> Utterance {
        let items: Vec<_> = labels.iter().map(|l| (*l, MentionState::Mention)).collect();
        utt(Speaker::Patient, &items)
    }

    fn pdeny(label: &str) -> Utterance {
        utt(Speaker::Patient, &[(label, MentionState::Deny)])
    }

    fn d(labels: &[&str]) -> Utterance {
        let items: Vec<_> = labels.iter().map(|l| (*l, MentionState::Mention)).collect();
        utt(Speaker::Doctor, &items)
    }

    fn run(kg: &KnowledgeGraph, turns: Vec<Utterance>) -> Vec<HallucinationEvent> {
        detect_dialogue(kg, &Dialogue { id: "t".into(), turns })
    }

    #[test]
    fn unlinked_mention_is_isolated() {
        let kg = kg_from(
            &["acid reflux", "bloating", "pneumonia"],
            &[("acid reflux", "bloating")],
        );
        let ev = run(&kg, vec![p(&["bloating", "acid reflux"]), p(&["pneumonia"])]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HallucinationKind::Isolated);
        assert_eq!(ev[0].subject, "pneumonia");
        assert_eq!(ev[0].turn, 1);
        assert_eq!(ev[0].delta_n, 1);
        assert!(ev[0].delta_h1.abs() <= EPSILON);
    }

    #[test]
    fn first_entity_is_not_isolated() {
        let kg = kg_from(&["a", "b"], &[]);
        assert!(run(&kg, vec![p(&["a"])]).is_empty());
        // second unlinked entity in the same opening utterance is
        let ev = run(&kg, vec![p(&["a", "b"])]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].subject, "b");
    }

    #[test]
    fn denying_path_middle_is_denial() {
        let kg = kg_from(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let ev = run(&kg, vec![p(&["a", "b", "c"]), pdeny("b")]);
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_eq!(e.kind, HallucinationKind::Denial);
        assert_eq!((e.components_before, e.components_after), (1, 2));
        assert_eq!(e.delta_n, -1);
        assert!((e.delta_h1 + 1.5).abs() <= EPSILON);
        assert_eq!(e.agreement, Agreement::Agree);
        assert_eq!(e.prior_turn, Some(0));
    }

    #[test]
    fn denying_leaf_of_chorded_cycle_is_contradiction() {
        // 4-cycle a-b-c-d with chord a-c, plus leaf e on a
        let kg = kg_from(
            &["a", "b", "c", "d", "e"],
            &[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a"), ("a", "c"), ("e", "a")],
        );
        let ev = run(&kg, vec![p(&["a", "b", "c", "d", "e"]), pdeny("e")]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HallucinationKind::Contradiction);
        assert_eq!(ev[0].agreement, Agreement::Agree);
        let ev = run(&kg, vec![p(&["a", "b", "c", "d", "e"]), pdeny("b")]);
        assert_eq!(ev[0].kind, HallucinationKind::Contradiction);
    }

    #[test]
    fn doctor_turns_never_raise_events() {
        let kg = kg_from(&["a", "b", "x"], &[("a", "b")]);
        let ev = run(
            &kg,
            vec![
                p(&["a", "b"]),
                d(&["x"]),
                utt(Speaker::Doctor, &[("b", MentionState::Deny)]),
            ],
        );
        assert!(ev.is_empty());
    }

    #[test]
    fn answering_no_to_doctor_question_is_exempt() {
        let kg = kg_from(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        // doctor asks about b, which would be the cut vertex
        let ev = run(&kg, vec![p(&["a", "c"]), d(&["b"]), pdeny("b")]);
        // c mentioned after a with no link: that one is isolated
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HallucinationKind::Isolated);
        assert_eq!(ev[0].subject, "c");
    }

    #[test]
    fn late_denial_of_doctor_entity_is_reported() {
        let kg = kg_from(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let ev = run(&kg, vec![p(&["a"]), d(&["b"]), p(&["c"]), pdeny("b")]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HallucinationKind::Denial);
    }

    #[test]
    fn patient_mentioned_entity_is_not_exempt() {
        let kg = kg_from(&["a", "b"], &[("a", "b")]);
        let ev = run(&kg, vec![p(&["a", "b"]), d(&["b"]), pdeny("b")]);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HallucinationKind::Contradiction);
    }

    #[test]
    fn re_mentioning_negated_entity_is_contradiction() {
        let kg = kg_from(&["a", "b"], &[("a", "b")]);
        let ev = run(&kg, vec![p(&["a"]), pdeny("b"), p(&["b"])]);
        assert_eq!(ev.len(), 1);
        let e = &ev[0];
        assert_eq!(e.kind, HallucinationKind::Contradiction);
        assert_eq!(e.delta_n, 1);
        assert_eq!(e.prior_turn, Some(1));
        assert_eq!(e.prior_state, Some(MentionState::Deny));
    }

    #[test]
    fn repeated_denial_emits_nothing() {
        let kg = kg_from(&["a", "b"], &[("a", "b")]);
        let ev = run(&kg, vec![p(&["a", "b"]), pdeny("b"), pdeny("b")]);
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn one_utterance_can_raise_several_events() {
        let kg = kg_from(&["a", "b", "x", "y"], &[("a", "b")]);
        let ev = run(&kg, vec![p(&["a", "b"]), p(&["x", "y"])]);
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.kind == HallucinationKind::Isolated));
    }

    #[test]
    fn non_consecutive_snapshots_are_rejected() {
        let kg = kg_from(&["a", "b"], &[("a", "b")]);
        let mut g = new_session(&kg);
        let s0 = g.last_snapshot().clone();
        g.apply_utterance(&p(&["a"]));
        let (s2, c2) = g.apply_utterance(&p(&["b"]));
        assert!(matches!(
            observe(&s0, &s2, &c2, g.history()),
            Err(DetectorError::NonConsecutive { .. })
        ));
    }

    #[test]
    fn entropy_classifier_examples() {
        // path(3) middle removal: two edgeless survivors
        assert_eq!(
            classify_by_entropy(0.0, &[0.0, 0.0]),
            EntropyVerdict::Kind(HallucinationKind::Denial)
        );
        // 4-cycle minus one node leaves path(3)
        assert_eq!(
            classify_by_entropy(1.5, &[1.0, 2.0, 1.0]),
            EntropyVerdict::Kind(HallucinationKind::Contradiction)
        );
        assert_eq!(classify_by_entropy(0.0, &[0.0]), EntropyVerdict::NotApplicable);
    }
}
