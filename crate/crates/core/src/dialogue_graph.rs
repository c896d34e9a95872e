//! Per-session dialogue entity graph.
//!
//! The graph is always the subgraph of the knowledge graph induced by the
//! entities currently `Present`: mentioning an entity pulls in every KG edge
//! (either direction) to the other present entities, denying it drops the
//! node with all incident edges. Connectivity ignores direction; a node's
//! degree is the summed weight of its incoming and outgoing edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::corpus::{MentionState, Speaker, Utterance};
use crate::entropy::structural_entropy;
use crate::knowledge_graph::{EntityId, KnowledgeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Present,
    Negated,
}

/// One annotated occurrence of an entity in the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StateChange {
    pub turn: usize,
    pub speaker: Speaker,
    pub state: MentionState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSnapshot {
    /// Position in the snapshot log; the empty initial snapshot is 0.
    #[serde(skip)]
    pub seq: usize,
    /// Turn that produced the snapshot, `None` for the initial one.
    pub turn: Option<usize>,
    pub n: usize,
    pub vol: f64,
    pub h1: f64,
    /// Weak components, each sorted by label, ordered by their first label.
    pub components: Vec<Vec<String>>,
}

impl GraphSnapshot {
    fn empty() -> Self {
        GraphSnapshot {
            seq: 0,
            turn: None,
            n: 0,
            vol: 0.0,
            h1: 0.0,
            components: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeKind {
    /// New node; `neighbors` are the present nodes it got edges to.
    Added { degree: f64, neighbors: Vec<String> },
    /// A negated entity mentioned again.
    Restored { degree: f64, neighbors: Vec<String> },
    /// A present node was denied and dropped.
    Removed {
        /// Survivors of the affected component, partitioned by the new
        /// weak components.
        survivors: Vec<Vec<String>>,
        /// Survivors' post-removal unit-weight degrees (distinct neighbours).
        unit_degrees: Vec<f64>,
        /// Structural entropy of the survivors with unit edge weights.
        unit_h1: f64,
    },
    /// Deny of an entity that was not in the graph.
    Negated,
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityChange {
    pub label: String,
    pub state: MentionState,
    #[serde(flatten)]
    pub kind: ChangeKind,
    pub n_before: usize,
    pub n_after: usize,
    pub h1_before: f64,
    pub h1_after: f64,
    pub components_before: usize,
    pub components_after: usize,
}

impl EntityChange {
    pub fn is_split(&self) -> bool {
        matches!(&self.kind, ChangeKind::Removed { survivors, .. } if survivors.len() >= 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeRecord {
    pub turn: usize,
    pub speaker: Speaker,
    pub changes: Vec<EntityChange>,
    /// Labels missing from the knowledge graph; skipped.
    pub unknown_labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DialogueEntityGraph<'kg> {
    kg: &'kg KnowledgeGraph,
    states: BTreeMap<EntityId, NodeState>,
    history: BTreeMap<String, Vec<StateChange>>,
    snapshots: Vec<GraphSnapshot>,
    next_turn: usize,
}

pub fn new_session(kg: &KnowledgeGraph) -> DialogueEntityGraph<'_> {
    DialogueEntityGraph::new(kg)
}

struct Measure {
    n: usize,
    vol: f64,
    h1: f64,
    components: Vec<Vec<EntityId>>,
}

impl<'kg> DialogueEntityGraph<'kg> {
    pub fn new(kg: &'kg KnowledgeGraph) -> Self {
        DialogueEntityGraph {
            kg,
            states: BTreeMap::new(),
            history: BTreeMap::new(),
            snapshots: vec![GraphSnapshot::empty()],
            next_turn: 0,
        }
    }

    pub fn kg(&self) -> &'kg KnowledgeGraph {
        self.kg
    }

    /// Turn index the next utterance will receive.
    pub fn next_turn(&self) -> usize {
        self.next_turn
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn last_snapshot(&self) -> &GraphSnapshot {
        self.snapshots.last().expect("snapshot log is never empty")
    }

    pub fn history(&self) -> &BTreeMap<String, Vec<StateChange>> {
        &self.history
    }

    pub fn entity_history(&self, label: &str) -> &[StateChange] {
        self.history.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn state(&self, label: &str) -> Option<NodeState> {
        self.kg.id(label).and_then(|id| self.states.get(&id).copied())
    }

    pub fn is_present(&self, label: &str) -> bool {
        self.state(label) == Some(NodeState::Present)
    }

    pub fn present_labels(&self) -> Vec<String> {
        self.present_ids().map(|id| self.kg.label(id).to_string()).collect()
    }

    pub fn negated_labels(&self) -> Vec<String> {
        self.states
            .iter()
            .filter(|(_, s)| **s == NodeState::Negated)
            .map(|(id, _)| self.kg.label(*id).to_string())
            .collect()
    }

    fn present_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.states
            .iter()
            .filter(|(_, s)| **s == NodeState::Present)
            .map(|(id, _)| *id)
    }

    fn present(&self, id: EntityId) -> bool {
        self.states.get(&id) == Some(&NodeState::Present)
    }

    /// Directed edges between present nodes as `(src, dst, weight)`.
    pub fn edges(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for id in self.present_ids() {
            for e in self.kg.out_edges(id) {
                if self.present(e.dst) {
                    out.push((
                        self.kg.label(id).to_string(),
                        self.kg.label(e.dst).to_string(),
                        e.weight,
                    ));
                }
            }
        }
        out
    }

    /// Weighted degree: incident weight over both directions.
    pub fn degree(&self, label: &str) -> Option<f64> {
        let id = self.kg.id(label)?;
        self.present(id).then(|| self.weighted_degree(id))
    }

    fn weighted_degree(&self, id: EntityId) -> f64 {
        let out: f64 = self
            .kg
            .out_edges(id)
            .iter()
            .filter(|e| self.present(e.dst))
            .map(|e| e.weight)
            .sum();
        let inc: f64 = self
            .kg
            .in_edges(id)
            .iter()
            .filter(|e| self.present(e.src))
            .map(|e| e.weight)
            .sum();
        out + inc
    }

    fn present_neighbors(&self, id: EntityId) -> Vec<EntityId> {
        let mut out: BTreeSet<EntityId> = BTreeSet::new();
        for e in self.kg.out_edges(id) {
            if self.present(e.dst) {
                out.insert(e.dst);
            }
        }
        for e in self.kg.in_edges(id) {
            if self.present(e.src) {
                out.insert(e.src);
            }
        }
        out.into_iter().collect()
    }

    /// Weak components over `nodes`, each sorted by id, in order of first id.
    fn components_of(&self, nodes: &BTreeSet<EntityId>) -> Vec<Vec<EntityId>> {
        let mut seen: BTreeSet<EntityId> = BTreeSet::new();
        let mut out = Vec::new();
        for &start in nodes {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for w in self.present_neighbors(v) {
                    if nodes.contains(&w) && seen.insert(w) {
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    fn measure(&self) -> Measure {
        let nodes: BTreeSet<EntityId> = self.present_ids().collect();
        let components = self.components_of(&nodes);
        let partition: Vec<Vec<f64>> = components
            .iter()
            .map(|c| c.iter().map(|&id| self.weighted_degree(id)).collect())
            .collect();
        let vol = partition.iter().flatten().sum();
        let h1 = structural_entropy(&partition).expect("weights are positive");
        Measure {
            n: nodes.len(),
            vol,
            h1,
            components,
        }
    }

    fn labels(&self, ids: &[EntityId]) -> Vec<String> {
        ids.iter().map(|&id| self.kg.label(id).to_string()).collect()
    }

    /// Current weak-component partition, as labels.
    pub fn components(&self) -> Vec<Vec<String>> {
        self.measure()
            .components
            .iter()
            .map(|c| self.labels(c))
            .collect()
    }

    /// Label sets of the weak components the survivors of removing `id`
    /// from its component fall into.
    fn removal_partition(&self, id: EntityId) -> Vec<Vec<EntityId>> {
        let nodes: BTreeSet<EntityId> = self.present_ids().collect();
        let comp = self
            .components_of(&nodes)
            .into_iter()
            .find(|c| c.contains(&id))
            .unwrap_or_default();
        let survivors: BTreeSet<EntityId> = comp.into_iter().filter(|&v| v != id).collect();
        // neighbours of the removed node are still marked present here, so
        // walk only inside the survivor set
        self.components_of(&survivors)
    }

    /// Whether denying `label` now would split its component into two or
    /// more parts.
    pub fn is_cut_vertex(&self, label: &str) -> bool {
        match self.kg.id(label) {
            Some(id) if self.present(id) => self.removal_partition(id).len() >= 2,
            _ => false,
        }
    }

    /// Labels in the same component as `label`, excluding it.
    pub fn component_of(&self, label: &str) -> Vec<String> {
        let Some(id) = self.kg.id(label) else {
            return Vec::new();
        };
        self.measure()
            .components
            .into_iter()
            .find(|c| c.contains(&id))
            .map(|c| {
                c.into_iter()
                    .filter(|&v| v != id)
                    .map(|v| self.kg.label(v).to_string())
                    .collect()
            })
            .unwrap_or_default()
    }

    fn unit_survivor_stats(&self, id: EntityId, parts: &[Vec<EntityId>]) -> (Vec<f64>, f64) {
        let mut unit_partition: Vec<Vec<f64>> = Vec::with_capacity(parts.len());
        for part in parts {
            let members: BTreeSet<EntityId> = part.iter().copied().collect();
            unit_partition.push(
                part.iter()
                    .map(|&v| {
                        self.present_neighbors(v)
                            .into_iter()
                            .filter(|w| *w != id && members.contains(w))
                            .count() as f64
                    })
                    .collect(),
            );
        }
        let h = structural_entropy(&unit_partition).expect("counts are non-negative");
        (unit_partition.into_iter().flatten().collect(), h)
    }

    /// Applies one utterance, mention by mention, and appends a snapshot.
    pub fn apply_utterance(&mut self, u: &Utterance) -> (GraphSnapshot, ChangeRecord) {
        let turn = self.next_turn;
        self.next_turn += 1;
        let mut changes = Vec::new();
        let mut unknown_labels = Vec::new();
        let mut before = self.measure();

        for m in &u.mentions {
            let Some(id) = self.kg.id(&m.label) else {
                unknown_labels.push(m.label.clone());
                continue;
            };
            self.history.entry(m.label.clone()).or_default().push(StateChange {
                turn,
                speaker: u.speaker,
                state: m.state,
            });
            let current = self.states.get(&id).copied();
            let kind = match (m.state, current) {
                (MentionState::Mention, Some(NodeState::Present)) => ChangeKind::NoOp,
                (MentionState::Mention, prior) => {
                    self.states.insert(id, NodeState::Present);
                    let neighbors = self.labels(&self.present_neighbors(id));
                    let degree = self.weighted_degree(id);
                    if prior == Some(NodeState::Negated) {
                        ChangeKind::Restored { degree, neighbors }
                    } else {
                        ChangeKind::Added { degree, neighbors }
                    }
                }
                (MentionState::Deny, Some(NodeState::Present)) => {
                    let parts = self.removal_partition(id);
                    let (unit_degrees, unit_h1) = self.unit_survivor_stats(id, &parts);
                    let survivors = parts.iter().map(|p| self.labels(p)).collect();
                    self.states.insert(id, NodeState::Negated);
                    ChangeKind::Removed {
                        survivors,
                        unit_degrees,
                        unit_h1,
                    }
                }
                (MentionState::Deny, Some(NodeState::Negated)) => ChangeKind::NoOp,
                (MentionState::Deny, None) => {
                    self.states.insert(id, NodeState::Negated);
                    ChangeKind::Negated
                }
            };
            let after = self.measure();
            changes.push(EntityChange {
                label: m.label.clone(),
                state: m.state,
                kind,
                n_before: before.n,
                n_after: after.n,
                h1_before: before.h1,
                h1_after: after.h1,
                components_before: before.components.len(),
                components_after: after.components.len(),
            });
            before = after;
        }

        let snapshot = GraphSnapshot {
            seq: self.snapshots.len(),
            turn: Some(turn),
            n: before.n,
            vol: before.vol,
            h1: before.h1,
            components: before.components.iter().map(|c| self.labels(c)).collect(),
        };
        self.snapshots.push(snapshot.clone());
        (
            snapshot,
            ChangeRecord {
                turn,
                speaker: u.speaker,
                changes,
                unknown_labels,
            },
        )
    }

    /// Snapshot log as line-delimited JSON.
    pub fn snapshot_log_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.snapshots {
            out.push_str(&serde_json::to_string(s).expect("snapshot serialises"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityClass, EntityMention};
    use crate::entropy::EPSILON;
    use crate::knowledge_graph::{EdgeSpec, EntityNode};
    use proptest::prelude::*;

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

    fn say(speaker: Speaker, items: &[(&str, MentionState)]) -> Utterance {
        Utterance::new(
            speaker,
            None,
            items
                .iter()
                .map(|(l, s)| EntityMention::new(l, EntityClass::Symptom, *s))
                .collect(),
        )
    }

    fn mention(labels: &[&str]) -> Utterance {
        let items: Vec<(&str, MentionState)> =
            labels.iter().map(|l| (*l, MentionState::Mention)).collect();
        say(Speaker::Patient, &items)
    }

    fn deny(label: &str) -> Utterance {
        say(Speaker::Patient, &[(label, MentionState::Deny)])
    }

    fn path3() -> KnowledgeGraph {
        kg_from(&["a", "b", "c", "x"], &[("a", "b"), ("b", "c")])
    }

    #[test]
    fn new_session_is_empty() {
        let kg = path3();
        let g = new_session(&kg);
        assert_eq!(g.snapshots().len(), 1);
        assert_eq!(g.last_snapshot().n, 0);
        assert_eq!(g.last_snapshot().h1, 0.0);
        assert!(g.components().is_empty());
    }

    #[test]
    fn sessions_are_independent() {
        let kg = path3();
        let mut g1 = new_session(&kg);
        let g2 = new_session(&kg);
        g1.apply_utterance(&mention(&["a", "b"]));
        assert_eq!(g1.last_snapshot().n, 2);
        assert_eq!(g2.last_snapshot().n, 0);
        assert_eq!(g2.snapshots().len(), 1);
    }

    #[test]
    fn unlinked_mention_keeps_entropy() {
        let kg = path3();
        let mut g = new_session(&kg);
        g.apply_utterance(&mention(&["a", "b"]));
        let h = g.last_snapshot().h1;
        let (snap, rec) = g.apply_utterance(&mention(&["x"]));
        assert_eq!(snap.h1, h);
        assert_eq!(snap.n, 3);
        match &rec.changes[0].kind {
            ChangeKind::Added { degree, neighbors } => {
                assert_eq!(*degree, 0.0);
                assert!(neighbors.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn denying_path_middle_strands_survivors() {
        let kg = path3();
        let mut g = new_session(&kg);
        let (snap, _) = g.apply_utterance(&mention(&["a", "b", "c"]));
        assert!((snap.h1 - 1.5).abs() <= EPSILON);
        assert_eq!(snap.components.len(), 1);
        let (snap, rec) = g.apply_utterance(&deny("b"));
        assert_eq!(snap.h1, 0.0);
        assert_eq!(snap.components, vec![vec!["a".to_string()], vec!["c".to_string()]]);
        let ch = &rec.changes[0];
        assert!(ch.is_split());
        assert_eq!((ch.components_before, ch.components_after), (1, 2));
        assert_eq!(g.state("b"), Some(NodeState::Negated));
    }

    #[test]
    fn repeated_mention_is_noop() {
        let kg = path3();
        let mut g = new_session(&kg);
        g.apply_utterance(&mention(&["a"]));
        let (_, rec) = g.apply_utterance(&mention(&["a"]));
        assert_eq!(rec.changes[0].kind, ChangeKind::NoOp);
        assert_eq!(g.entity_history("a").len(), 2);
    }

    #[test]
    fn deny_of_absent_entity_only_records_state() {
        let kg = path3();
        let mut g = new_session(&kg);
        let (snap, rec) = g.apply_utterance(&deny("c"));
        assert_eq!(snap.n, 0);
        assert_eq!(rec.changes[0].kind, ChangeKind::Negated);
        assert_eq!(g.negated_labels(), vec!["c"]);
        let (_, rec) = g.apply_utterance(&mention(&["c"]));
        assert!(matches!(rec.changes[0].kind, ChangeKind::Restored { .. }));
    }

    #[test]
    fn unknown_labels_are_reported_and_skipped() {
        let kg = path3();
        let mut g = new_session(&kg);
        let (snap, rec) = g.apply_utterance(&mention(&["a", "zebra"]));
        assert_eq!(snap.n, 1);
        assert_eq!(rec.unknown_labels, vec!["zebra"]);
        assert_eq!(rec.changes.len(), 1);
    }

    #[test]
    fn both_directions_count_toward_degree() {
        let kg = kg_from(&["a", "b"], &[("a", "b"), ("b", "a")]);
        let mut g = new_session(&kg);
        g.apply_utterance(&mention(&["a", "b"]));
        assert_eq!(g.degree("a"), Some(2.0));
        assert_eq!(g.last_snapshot().vol, 4.0);
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn cut_vertex_check() {
        let kg = path3();
        let mut g = new_session(&kg);
        g.apply_utterance(&mention(&["a", "b", "c"]));
        assert!(g.is_cut_vertex("b"));
        assert!(!g.is_cut_vertex("a"));
        assert_eq!(g.component_of("a"), vec!["b", "c"]);
    }

    #[test]
    fn snapshot_export_has_one_line_per_snapshot() {
        let kg = path3();
        let mut g = new_session(&kg);
        g.apply_utterance(&mention(&["a", "b"]));
        let log = g.snapshot_log_jsonl();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("{\"turn\":null,\"n\":0"));
        assert!(lines[1].contains("\"components\":[[\"a\",\"b\"]]"));
    }

    fn arb_session() -> impl Strategy<Value = (Vec<(usize, usize, u32)>, Vec<(usize, bool)>)> {
        (
            prop::collection::vec((0usize..7, 0usize..7, 1u32..4), 0..16),
            prop::collection::vec((0usize..7, any::<bool>()), 1..20),
        )
    }

    fn weighted_kg(raw: &[(usize, usize, u32)]) -> KnowledgeGraph {
        let labels: Vec<String> = (0..7).map(|i| format!("e{i}")).collect();
        let mut seen = BTreeSet::new();
        let edges = raw
            .iter()
            .filter(|(s, d, _)| s != d && seen.insert((*s, *d)))
            .map(|&(s, d, c)| EdgeSpec {
                src: labels[s].clone(),
                dst: labels[d].clone(),
                cooc: c,
                weight: c as f64 / 4.0,
            })
            .collect();
        let nodes = labels
            .iter()
            .map(|l| EntityNode {
                label: l.clone(),
                class: EntityClass::Symptom,
                freq: 4,
            })
            .collect();
        KnowledgeGraph::from_parts(0.0, nodes, edges).unwrap()
    }

    proptest! {
        #[test]
        fn snapshot_entropy_matches_recomputation((edges, steps) in arb_session()) {
            let kg = weighted_kg(&edges);
            let mut g = new_session(&kg);
            for (i, on) in steps {
                let label = format!("e{i}");
                let state = if on { MentionState::Mention } else { MentionState::Deny };
                let (snap, _) = g.apply_utterance(&say(Speaker::Patient, &[(&label, state)]));
                // recompute from the edge list
                let edges = g.edges();
                let partition: Vec<Vec<f64>> = snap
                    .components
                    .iter()
                    .map(|c| {
                        c.iter()
                            .map(|l| {
                                edges
                                    .iter()
                                    .filter(|(s, d, _)| s == l || d == l)
                                    .map(|e| e.2)
                                    .sum()
                            })
                            .collect()
                    })
                    .collect();
                let h = structural_entropy(&partition).unwrap();
                prop_assert!((snap.h1 - h).abs() <= EPSILON);
                let covered: usize = snap.components.iter().map(Vec::len).sum();
                prop_assert_eq!(covered, snap.n);
            }
        }

        #[test]
        fn remove_then_restore_gives_same_entropy((edges, steps) in arb_session(), pick in 0usize..7) {
            let kg = weighted_kg(&edges);
            let mut g = new_session(&kg);
            for (i, on) in steps {
                let label = format!("e{i}");
                let state = if on { MentionState::Mention } else { MentionState::Deny };
                g.apply_utterance(&say(Speaker::Patient, &[(&label, state)]));
            }
            let label = format!("e{pick}");
            prop_assume!(g.is_present(&label));
            let before = g.last_snapshot().clone();
            g.apply_utterance(&deny(&label));
            let (after, _) = g.apply_utterance(&mention(&[&label]));
            prop_assert_eq!(&after.components, &before.components);
            prop_assert!((after.h1 - before.h1).abs() <= EPSILON);
        }
    }
}
