//! Next-entity prediction from the dialogue history.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use super::{KgError, KnowledgeGraph};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_DECAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredEntity {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub entries: Vec<ScoredEntity>,
    /// History the prediction was made from, as `(label, turn)`.
    pub context: Vec<(String, usize)>,
}

/// Ranks candidate next entities.
///
/// `score(e) = max_h w(h -> e) * decay^age(h)`, where `age(h)` is the number
/// of turns between `h` and the most recent history turn. Candidates already
/// in the history are skipped. Equal scores are ordered by the turn of the
/// contributing history entity (latest first) and then by label.
pub fn related_entities(
    kg: &KnowledgeGraph,
    history: &[(String, usize)],
    k: usize,
    decay: f64,
) -> Result<PredictionResult, KgError> {
    if k == 0 {
        return Err(KgError::ZeroK);
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(KgError::DecayOutOfRange(decay));
    }

    // latest turn per history entity
    let mut latest: BTreeMap<&str, usize> = BTreeMap::new();
    for (label, turn) in history {
        if !kg.contains(label) {
            return Err(KgError::UnknownEntity(label.clone()));
        }
        let t = latest.entry(label.as_str()).or_insert(*turn);
        *t = (*t).max(*turn);
    }
    let now = latest.values().copied().max().unwrap_or(0);

    // candidate -> (score, contributing turn)
    let mut best: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (&label, &turn) in &latest {
        let src = kg.id(label).expect("checked above");
        let factor = decay.powi((now - turn) as i32);
        for e in kg.out_edges(src) {
            let dst = kg.label(e.dst);
            if latest.contains_key(dst) {
                continue;
            }
            let score = e.weight * factor;
            let slot = best.entry(dst).or_insert((score, turn));
            if score > slot.0 || (score == slot.0 && turn > slot.1) {
                *slot = (score, turn);
            }
        }
    }

    let mut ranked: Vec<(&str, f64, usize)> =
        best.into_iter().map(|(l, (s, t))| (l, s, t)).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(b.0))
    });
    ranked.truncate(k);

    Ok(PredictionResult {
        entries: ranked
            .into_iter()
            .map(|(label, score, _)| ScoredEntity {
                label: label.to_string(),
                score,
            })
            .collect(),
        context: history.to_vec(),
    })
}
