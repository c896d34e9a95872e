//! Exemplar doctor responses per entity.
//!
//! Each response `s_i` in the set `S` of doctor utterances annotated with an
//! entity is scored by its mean cosine similarity to the other members of
//! `S`; the top `k` are kept. A singleton set keeps its response at 1.0.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vectors::{sentence_vector, TfIdf, VectorSource};
use super::MitigationError;
use crate::corpus::{Dialogue, MentionState, Speaker};
use crate::persist::{checksum, probe_version};

pub const DEFAULT_EXEMPLARS: usize = 3;
pub const RK_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKnowledge {
    k: usize,
    entries: BTreeMap<String, Vec<Exemplar>>,
}

impl ResponseKnowledge {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, label: &str) -> &[Exemplar] {
        self.entries.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores each text by mean similarity to the others and returns the best
/// `k`, highest score first, ties by text.
pub fn rank_exemplars(
    texts: &[String],
    source: &dyn VectorSource,
    k: usize,
) -> Result<Vec<Exemplar>, MitigationError> {
    if k == 0 {
        return Err(MitigationError::ZeroK);
    }
    let mut sorted: Vec<&String> = texts.iter().collect();
    sorted.sort();
    let vectors = sorted
        .iter()
        .map(|t| sentence_vector(t, source))
        .collect::<Result<Vec<_>, _>>()?;

    let n = vectors.len();
    let mut scored: Vec<Exemplar> = Vec::with_capacity(n);
    for i in 0..n {
        let score = if n == 1 {
            1.0
        } else {
            // summed in value order so equal vectors get bit-equal scores
            let mut sims: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| vectors[i].cosine(&vectors[j]))
                .collect();
            sims.sort_by(f64::total_cmp);
            sims.iter().sum::<f64>() / (n - 1) as f64
        };
        scored.push(Exemplar {
            text: sorted[i].clone(),
            score,
        });
    }
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.text.cmp(&b.text))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Distinct doctor utterance texts, grouped by the entities they mention.
pub fn doctor_responses(dialogues: &[Dialogue]) -> BTreeMap<String, Vec<String>> {
    let mut sets: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for d in dialogues {
        for u in &d.turns {
            if u.speaker != Speaker::Doctor {
                continue;
            }
            let Some(text) = u.text.as_deref().filter(|t| !t.trim().is_empty()) else {
                continue;
            };
            for m in &u.mentions {
                if m.state == MentionState::Mention {
                    sets.entry(m.label.clone()).or_default().push(text.to_string());
                }
            }
        }
    }
    for texts in sets.values_mut() {
        texts.sort();
        texts.dedup();
    }
    sets
}

/// Builds the exemplar table with TF-IDF fit on all doctor texts.
pub fn build_response_knowledge(
    dialogues: &[Dialogue],
    k: usize,
) -> Result<ResponseKnowledge, MitigationError> {
    let texts: Vec<&str> = dialogues
        .iter()
        .flat_map(|d| &d.turns)
        .filter(|u| u.speaker == Speaker::Doctor)
        .filter_map(|u| u.text.as_deref())
        .filter(|t| !t.trim().is_empty())
        .collect();
    let model = TfIdf::fit(texts);
    build_response_knowledge_with(dialogues, k, &model)
}

pub fn build_response_knowledge_with(
    dialogues: &[Dialogue],
    k: usize,
    source: &dyn VectorSource,
) -> Result<ResponseKnowledge, MitigationError> {
    if k == 0 {
        return Err(MitigationError::ZeroK);
    }
    let mut entries = BTreeMap::new();
    for (label, texts) in doctor_responses(dialogues) {
        entries.insert(label, rank_exemplars(&texts, source, k)?);
    }
    Ok(ResponseKnowledge { k, entries })
}

#[derive(Serialize, Deserialize)]
struct Body {
    version: u64,
    k: usize,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    label: String,
    exemplars: Vec<Exemplar>,
}

#[derive(Serialize, Deserialize)]
struct File {
    #[serde(flatten)]
    body: Body,
    checksum: String,
}

pub fn save_rk(rk: &ResponseKnowledge) -> Vec<u8> {
    let body = Body {
        version: RK_FORMAT_VERSION,
        k: rk.k,
        entries: rk
            .entries
            .iter()
            .map(|(label, ex)| EntryRecord {
                label: label.clone(),
                exemplars: ex.clone(),
            })
            .collect(),
    };
    let sum = checksum(&serde_json::to_vec(&body).expect("rk body serialises"));
    let mut out = serde_json::to_vec_pretty(&File { body, checksum: sum }).expect("rk serialises");
    out.push(b'\n');
    out
}

pub fn load_rk(bytes: &[u8]) -> Result<ResponseKnowledge, MitigationError> {
    let version = probe_version(bytes).map_err(MitigationError::Malformed)?;
    if version != RK_FORMAT_VERSION {
        return Err(MitigationError::VersionMismatch {
            found: version,
            expected: RK_FORMAT_VERSION,
        });
    }
    let file: File =
        serde_json::from_slice(bytes).map_err(|e| MitigationError::Malformed(e.to_string()))?;
    if checksum(&serde_json::to_vec(&file.body).expect("rk body serialises")) != file.checksum {
        return Err(MitigationError::ChecksumMismatch);
    }
    if file.body.k == 0 {
        return Err(MitigationError::ZeroK);
    }
    let mut entries = BTreeMap::new();
    for e in file.body.entries {
        if e.exemplars.len() > file.body.k {
            return Err(MitigationError::Malformed(format!(
                "'{}' has more than k exemplars",
                e.label
            )));
        }
        entries.insert(e.label, e.exemplars);
    }
    Ok(ResponseKnowledge {
        k: file.body.k,
        entries,
    })
}
