//! Versioned JSON persistence for [`KnowledgeGraph`].
//!
//! Entities and edges are written in lexical order so files diff cleanly. A
//! SHA-256 of the compact body guards against truncation and hand edits.

use serde::{Deserialize, Serialize};

use super::{EdgeSpec, EntityNode, KgError, KnowledgeGraph};
use crate::corpus::EntityClass;
use crate::persist::{checksum, probe_version};

pub const KG_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Body {
    version: u64,
    threshold: f64,
    entities: Vec<EntityRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntityRecord {
    label: String,
    class: EntityClass,
    freq: u32,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    cooc: u32,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct File {
    #[serde(flatten)]
    body: Body,
    checksum: String,
}

pub fn save_kg(kg: &KnowledgeGraph) -> Vec<u8> {
    let body = Body {
        version: KG_FORMAT_VERSION,
        threshold: kg.threshold(),
        entities: kg
            .entities()
            .iter()
            .map(|e| EntityRecord {
                label: e.label.clone(),
                class: e.class,
                freq: e.freq,
            })
            .collect(),
        edges: kg
            .edges()
            .map(|e| EdgeRecord {
                src: kg.label(e.src).to_string(),
                dst: kg.label(e.dst).to_string(),
                cooc: e.cooc,
                weight: e.weight,
            })
            .collect(),
    };
    let sum = checksum(&serde_json::to_vec(&body).expect("kg body serialises"));
    let mut out = serde_json::to_vec_pretty(&File { body, checksum: sum }).expect("kg serialises");
    out.push(b'\n');
    out
}

pub fn load_kg(bytes: &[u8]) -> Result<KnowledgeGraph, KgError> {
    let version = probe_version(bytes).map_err(KgError::Malformed)?;
    if version != KG_FORMAT_VERSION {
        return Err(KgError::VersionMismatch {
            found: version,
            expected: KG_FORMAT_VERSION,
        });
    }
    let file: File =
        serde_json::from_slice(bytes).map_err(|e| KgError::Malformed(e.to_string()))?;
    let expected = checksum(&serde_json::to_vec(&file.body).expect("kg body serialises"));
    if expected != file.checksum {
        return Err(KgError::ChecksumMismatch);
    }
    let body = file.body;
    KnowledgeGraph::from_parts(
        body.threshold,
        body.entities
            .into_iter()
            .map(|e| EntityNode {
                label: e.label,
                class: e.class,
                freq: e.freq,
            })
            .collect(),
        body.edges
            .into_iter()
            .map(|e| EdgeSpec {
                src: e.src,
                dst: e.dst,
                cooc: e.cooc,
                weight: e.weight,
            })
            .collect(),
    )
}
