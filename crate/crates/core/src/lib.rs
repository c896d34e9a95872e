//! Turn-by-turn entity graphs for medical dialogues, structural-entropy based
//! detection of patient hallucinations, and clarifying-question planning.

pub mod corpus;
pub mod detector;
pub mod dialogue_graph;
pub mod entropy;
pub mod harness;
pub mod knowledge_graph;
pub mod mitigation;
pub mod persist;

pub use corpus::{Dialogue, EntityClass, EntityMention, MentionState, Speaker, Utterance};
pub use detector::{HallucinationEvent, HallucinationKind};
pub use dialogue_graph::{DialogueEntityGraph, GraphSnapshot};
pub use harness::{PatientScenario, SessionMetrics};
pub use knowledge_graph::KnowledgeGraph;
pub use mitigation::{ClarifyingPlan, ResponseKnowledge};
