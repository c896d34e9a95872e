//! Bridge search: entities that link an isolated entity back to the
//! established part of the dialogue graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{EntityId, KnowledgeGraph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bridge {
    pub label: String,
    /// Product of undirected edge weights along the best path through this entity.
    pub score: f64,
}

/// Entities lying strictly inside a path of at most `max_hops` edges between
/// `isolated` and any anchor. Edges are walked in either direction.
pub fn find_bridges(
    kg: &KnowledgeGraph,
    isolated: &str,
    anchors: &BTreeSet<String>,
    max_hops: usize,
) -> Vec<Bridge> {
    find_bridges_excluding(kg, isolated, anchors, &BTreeSet::new(), max_hops)
}

/// As [`find_bridges`], with `excluded` entities never used as intermediates.
pub fn find_bridges_excluding(
    kg: &KnowledgeGraph,
    isolated: &str,
    anchors: &BTreeSet<String>,
    excluded: &BTreeSet<String>,
    max_hops: usize,
) -> Vec<Bridge> {
    let Some(start) = kg.id(isolated) else {
        return Vec::new();
    };
    if max_hops < 2 {
        return Vec::new();
    }
    let anchor_ids: BTreeSet<EntityId> = anchors
        .iter()
        .filter(|a| a.as_str() != isolated)
        .filter_map(|a| kg.id(a))
        .collect();
    if anchor_ids.is_empty() {
        return Vec::new();
    }
    let blocked: BTreeSet<EntityId> = excluded.iter().filter_map(|l| kg.id(l)).collect();

    let mut search = Search {
        kg,
        anchors: &anchor_ids,
        blocked: &blocked,
        max_hops,
        path: vec![start],
        best: BTreeMap::new(),
    };
    search.walk(start, 1.0);

    let mut out: Vec<Bridge> = search
        .best
        .into_iter()
        .map(|(id, score)| Bridge {
            label: kg.label(id).to_string(),
            score,
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    out
}

struct Search<'a> {
    kg: &'a KnowledgeGraph,
    anchors: &'a BTreeSet<EntityId>,
    blocked: &'a BTreeSet<EntityId>,
    max_hops: usize,
    path: Vec<EntityId>,
    best: BTreeMap<EntityId, f64>,
}

impl Search<'_> {
    fn walk(&mut self, at: EntityId, score: f64) {
        let hops = self.path.len() - 1;
        if hops == self.max_hops {
            return;
        }
        for (next, w) in self.kg.neighbors(at) {
            if self.path.contains(&next) {
                continue;
            }
            let s = score * w;
            if self.anchors.contains(&next) {
                // path complete; everything strictly between is a bridge
                for &mid in &self.path[1..] {
                    let slot = self.best.entry(mid).or_insert(s);
                    if s > *slot {
                        *slot = s;
                    }
                }
                continue;
            }
            if self.blocked.contains(&next) {
                continue;
            }
            self.path.push(next);
            self.walk(next, s);
            self.path.pop();
        }
    }
}
