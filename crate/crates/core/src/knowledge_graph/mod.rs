//! Static entity co-occurrence graph built from an annotated corpus.
//!
//! `freq(e)` counts dialogues in which `e` is mentioned (state `Mention`,
//! either speaker). `cooc(i, j)` counts dialogues where the first mention of
//! `i` is at or before the first mention of `j`; entities first mentioned in
//! the same turn count in both directions. The directed weight is
//! `w(i, j) = cooc(i, j) / freq(i)`, an estimate of `P(e_j | e_i)`. Edges
//! lighter than the threshold are dropped.

mod bridges;
mod io;
mod predict;

pub use bridges::{find_bridges, find_bridges_excluding, Bridge};
pub use io::{load_kg, save_kg, KG_FORMAT_VERSION};
pub use predict::{related_entities, PredictionResult, ScoredEntity, DEFAULT_DECAY, DEFAULT_TOP_K};

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::corpus::{Dialogue, EntityClass, MentionState};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("corpus contains no mentioned entities")]
    NoMentions,
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("duplicate entity '{0}'")]
    DuplicateEntity(String),
    #[error("invalid edge {src} -> {dst}: {reason}")]
    InvalidEdge {
        src: String,
        dst: String,
        reason: String,
    },
    #[error("top-k must be at least 1")]
    ZeroK,
    #[error("decay {0} is outside (0, 1]")]
    DecayOutOfRange(f64),
    #[error("unsupported knowledge graph version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("knowledge graph checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed knowledge graph file: {0}")]
    Malformed(String),
}

/// Dense index of an entity inside one [`KnowledgeGraph`]. Ids follow the
/// lexical order of labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub(crate) u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityNode {
    pub label: String,
    pub class: EntityClass,
    /// Number of dialogues mentioning the entity.
    pub freq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: EntityId,
    pub dst: EntityId,
    pub cooc: u32,
    pub weight: f64,
}

/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    threshold: f64,
    entities: Vec<EntityNode>,
    index: HashMap<String, EntityId>,
    outgoing: Vec<Vec<Edge>>,
    incoming: Vec<Vec<Edge>>,
}

/// Edge given by labels, as read from a file or merged from elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub cooc: u32,
    pub weight: f64,
}

fn check_threshold(threshold: f64) -> Result<(), KgError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(KgError::ThresholdOutOfRange(threshold))
    }
}

pub fn build_knowledge_graph(
    dialogues: &[Dialogue],
    threshold: f64,
) -> Result<KnowledgeGraph, KgError> {
    check_threshold(threshold)?;

    let mut freq: BTreeMap<&str, u32> = BTreeMap::new();
    let mut class_votes: BTreeMap<&str, [u32; 5]> = BTreeMap::new();
    let mut cooc: BTreeMap<(&str, &str), u32> = BTreeMap::new();

    for d in dialogues {
        let mut first: BTreeMap<&str, usize> = BTreeMap::new();
        for (turn, u) in d.turns.iter().enumerate() {
            for m in &u.mentions {
                if m.state != MentionState::Mention {
                    continue;
                }
                first.entry(m.label.as_str()).or_insert(turn);
                let votes = class_votes.entry(m.label.as_str()).or_default();
                votes[class_slot(m.class)] += 1;
            }
        }
        for (&label, _) in &first {
            *freq.entry(label).or_default() += 1;
        }
        for (&a, &ta) in &first {
            for (&b, &tb) in &first {
                if a != b && ta <= tb {
                    *cooc.entry((a, b)).or_default() += 1;
                }
            }
        }
    }

    if freq.is_empty() {
        return Err(KgError::NoMentions);
    }

    let entities: Vec<EntityNode> = freq
        .iter()
        .map(|(&label, &f)| EntityNode {
            label: label.to_string(),
            class: majority_class(&class_votes[label]),
            freq: f,
        })
        .collect();

    let mut edges = Vec::new();
    for (&(src, dst), &c) in &cooc {
        let weight = c as f64 / freq[src] as f64;
        if weight >= threshold {
            edges.push(EdgeSpec {
                src: src.to_string(),
                dst: dst.to_string(),
                cooc: c,
                weight,
            });
        }
    }
    KnowledgeGraph::from_parts(threshold, entities, edges)
}

fn class_slot(c: EntityClass) -> usize {
    EntityClass::ALL.iter().position(|&x| x == c).unwrap()
}

fn majority_class(votes: &[u32; 5]) -> EntityClass {
    let mut best = 0;
    for i in 1..5 {
        if votes[i] > votes[best] {
            best = i;
        }
    }
    EntityClass::ALL[best]
}

impl KnowledgeGraph {
    /// Assembles a graph from explicit parts, checking every invariant:
    /// endpoints exist, no self-loops, `cooc <= freq(src)`, and
    /// `weight == cooc / freq(src)` exactly.
    pub fn from_parts(
        threshold: f64,
        mut entities: Vec<EntityNode>,
        edges: Vec<EdgeSpec>,
    ) -> Result<Self, KgError> {
        check_threshold(threshold)?;
        entities.sort_by(|a, b| a.label.cmp(&b.label));
        let mut index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if index.insert(e.label.clone(), EntityId(i as u32)).is_some() {
                return Err(KgError::DuplicateEntity(e.label.clone()));
            }
        }
        let mut outgoing: Vec<Vec<Edge>> = vec![Vec::new(); entities.len()];
        let mut incoming: Vec<Vec<Edge>> = vec![Vec::new(); entities.len()];
        for spec in edges {
            let invalid = |reason: &str| KgError::InvalidEdge {
                src: spec.src.clone(),
                dst: spec.dst.clone(),
                reason: reason.to_string(),
            };
            let src = *index.get(&spec.src).ok_or_else(|| invalid("unknown source"))?;
            let dst = *index.get(&spec.dst).ok_or_else(|| invalid("unknown target"))?;
            if src == dst {
                return Err(invalid("self-loop"));
            }
            let f = entities[src.index()].freq;
            if spec.cooc == 0 || spec.cooc > f {
                return Err(invalid("co-occurrence count outside 1..=freq(src)"));
            }
            if spec.weight != spec.cooc as f64 / f as f64 {
                return Err(invalid("weight differs from cooc / freq(src)"));
            }
            if outgoing[src.index()].iter().any(|e| e.dst == dst) {
                return Err(invalid("duplicate edge"));
            }
            let edge = Edge {
                src,
                dst,
                cooc: spec.cooc,
                weight: spec.weight,
            };
            outgoing[src.index()].push(edge);
            incoming[dst.index()].push(edge);
        }
        for list in outgoing.iter_mut() {
            list.sort_by_key(|e| e.dst);
        }
        for list in incoming.iter_mut() {
            list.sort_by_key(|e| e.src);
        }
        Ok(KnowledgeGraph {
            threshold,
            entities,
            index,
            outgoing,
            incoming,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[EntityNode] {
        &self.entities
    }

    pub fn entity(&self, id: EntityId) -> &EntityNode {
        &self.entities[id.index()]
    }

    pub fn label(&self, id: EntityId) -> &str {
        &self.entities[id.index()].label
    }

    pub fn id(&self, label: &str) -> Option<EntityId> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn out_edges(&self, id: EntityId) -> &[Edge] {
        &self.outgoing[id.index()]
    }

    pub fn in_edges(&self, id: EntityId) -> &[Edge] {
        &self.incoming[id.index()]
    }

    pub fn weight(&self, src: EntityId, dst: EntityId) -> Option<f64> {
        self.outgoing[src.index()]
            .binary_search_by_key(&dst, |e| e.dst)
            .ok()
            .map(|i| self.outgoing[src.index()][i].weight)
    }

    /// Heavier of the two directed weights, if either edge exists.
    pub fn undirected_weight(&self, a: EntityId, b: EntityId) -> Option<f64> {
        match (self.weight(a, b), self.weight(b, a)) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        }
    }

    /// Neighbours in either direction with their undirected weight, ordered by id.
    pub fn neighbors(&self, id: EntityId) -> Vec<(EntityId, f64)> {
        let mut merged: BTreeMap<EntityId, f64> = BTreeMap::new();
        for e in self.out_edges(id) {
            merged.insert(e.dst, e.weight);
        }
        for e in self.in_edges(id) {
            let w = merged.entry(e.src).or_insert(e.weight);
            *w = w.max(e.weight);
        }
        merged.into_iter().collect()
    }

    pub fn edge_count(&self) -> usize {
        self.outgoing.iter().map(Vec::len).sum()
    }

    /// All edges, ordered by (source label, target label).
    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing.iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus_str, EntityMention, Speaker, Utterance};
    use proptest::prelude::*;

    fn mention(label: &str) -> EntityMention {
        EntityMention::new(label, EntityClass::Symptom, MentionState::Mention)
    }

    fn dialogue(id: &str, turns: Vec<Vec<&str>>) -> Dialogue {
        Dialogue {
            id: id.into(),
            turns: turns
                .into_iter()
                .map(|labels| {
                    Utterance::new(
                        Speaker::Patient,
                        None,
                        labels.into_iter().map(mention).collect(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn weight_is_cooc_over_freq() {
        // a appears in 10 dialogues, followed by b in 3 of them
        let mut ds = Vec::new();
        for i in 0..10 {
            let turns = if i < 3 {
                vec![vec!["a"], vec!["b"]]
            } else {
                vec![vec!["a"]]
            };
            ds.push(dialogue(&format!("d{i}"), turns));
        }
        let kg = build_knowledge_graph(&ds, 0.0).unwrap();
        let a = kg.id("a").unwrap();
        let b = kg.id("b").unwrap();
        assert_eq!(kg.weight(a, b), Some(0.3));
        assert_eq!(kg.weight(b, a), None);
    }

    #[test]
    fn lone_entity_has_no_edges() {
        let kg = build_knowledge_graph(&[dialogue("x", vec![vec!["fever"]])], 0.01).unwrap();
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.entities()[0].freq, 1);
        assert_eq!(kg.edge_count(), 0);
    }

    #[test]
    fn same_turn_counts_both_directions() {
        let kg = build_knowledge_graph(&[dialogue("x", vec![vec!["a", "b"]])], 0.0).unwrap();
        let (a, b) = (kg.id("a").unwrap(), kg.id("b").unwrap());
        assert_eq!(kg.weight(a, b), Some(1.0));
        assert_eq!(kg.weight(b, a), Some(1.0));
    }

    #[test]
    fn denied_entities_do_not_create_edges() {
        let raw = r#"{"dialogue_id":"x","turns":[{"speaker":"patient","entities":[{"label":"a","class":"symptom","state":"mention"},{"label":"b","class":"symptom","state":"deny"}]}]}"#;
        let kg = build_knowledge_graph(&parse_corpus_str(raw).unwrap(), 0.0).unwrap();
        assert_eq!(kg.len(), 1);
        assert!(!kg.contains("b"));
    }

    #[test]
    fn threshold_drops_light_edges() {
        let ds = vec![
            dialogue("1", vec![vec!["a"], vec!["b"]]),
            dialogue("2", vec![vec!["a"]]),
            dialogue("3", vec![vec!["a"]]),
        ];
        let kg = build_knowledge_graph(&ds, 0.5).unwrap();
        // a -> b is 1/3, b -> nothing (b after a only)
        assert_eq!(kg.edge_count(), 0);
        let kg = build_knowledge_graph(&ds, 1.0 / 3.0).unwrap();
        assert_eq!(kg.edge_count(), 1);
    }

    #[test]
    fn rejects_bad_threshold_and_empty_corpus() {
        assert!(matches!(
            build_knowledge_graph(&[dialogue("x", vec![vec!["a"]])], 1.5),
            Err(KgError::ThresholdOutOfRange(_))
        ));
        assert!(matches!(
            build_knowledge_graph(&[dialogue("x", vec![vec![]])], 0.1),
            Err(KgError::NoMentions)
        ));
    }

    #[test]
    fn from_parts_rejects_inconsistent_weight() {
        let entities = vec![
            EntityNode { label: "a".into(), class: EntityClass::Symptom, freq: 3 },
            EntityNode { label: "b".into(), class: EntityClass::Symptom, freq: 1 },
        ];
        let bad = vec![EdgeSpec { src: "a".into(), dst: "b".into(), cooc: 1, weight: 0.5 }];
        assert!(matches!(
            KnowledgeGraph::from_parts(0.0, entities.clone(), bad),
            Err(KgError::InvalidEdge { .. })
        ));
        let loop_edge = vec![EdgeSpec { src: "a".into(), dst: "a".into(), cooc: 1, weight: 1.0 / 3.0 }];
        assert!(KnowledgeGraph::from_parts(0.0, entities, loop_edge).is_err());
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Dialogue>> {
        let labels = prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]);
        let turn = prop::collection::vec(labels, 0..3);
        let dia = prop::collection::vec(turn, 1..5);
        prop::collection::vec(dia, 1..8).prop_map(|ds| {
            ds.into_iter()
                .enumerate()
                .map(|(i, turns)| dialogue(&format!("d{i}"), turns))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn edge_invariants_hold(ds in arb_corpus(), tau in 0.0f64..1.0) {
            prop_assume!(ds.iter().any(|d| d.turns.iter().any(|t| !t.mentions.is_empty())));
            let kg = build_knowledge_graph(&ds, tau).unwrap();
            for e in kg.edges() {
                let f = kg.entity(e.src).freq;
                prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
                prop_assert!(e.weight >= tau);
                prop_assert!(e.cooc <= f);
                prop_assert_eq!(e.weight * f as f64, e.cooc as f64);
                prop_assert!(e.src != e.dst);
            }
        }

        #[test]
        fn permutation_invariant(ds in arb_corpus(), seed in any::<u64>()) {
            prop_assume!(ds.iter().any(|d| d.turns.iter().any(|t| !t.mentions.is_empty())));
            let mut shuffled = ds.clone();
            // deterministic Fisher-Yates from the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(
                build_knowledge_graph(&ds, 0.01).unwrap(),
                build_knowledge_graph(&shuffled, 0.01).unwrap()
            );
        }
    }
}
