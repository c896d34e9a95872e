//! Scripted-patient simulation, hallucination injection and evaluation
//! metrics.

mod metrics;
mod scenario;
mod simulate;
mod world;

pub use metrics::{aggregate, aggregate_metrics, entity_prf, Aggregate, EntitySet, Prf, PrfReport};
pub use scenario::{
    generate_base, generate_scenarios, inject_hallucination, parse_scenarios, Injection,
    PatientScenario,
};
pub use simulate::{
    scripted_patient, simulate_session, simulate_with, EventOutcome, Outcome, SessionMetrics,
    SimulationConfig, TranscriptMention, TranscriptTurn, DEFAULT_MAX_CLARIFYING_TURNS,
};
pub use world::{SyntheticWorld, DEFAULT_CORPUS_SIZE};

use thiserror::Error;

use crate::detector::HallucinationKind;
use crate::mitigation::MitigationError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("max clarifying turns must be at least 1")]
    ZeroTurns,
    #[error("entity '{0}' is not in the knowledge graph")]
    UnknownEntity(String),
    #[error("no admissible subject for a {0} injection")]
    NoAdmissibleSubject(HallucinationKind),
    #[error("base dialogue needs at least 2 patient turns, has {0}")]
    BaseTooShort(usize),
    #[error("knowledge graph has no entity with two neighbours")]
    KgTooSparse,
    #[error("no sessions to aggregate")]
    EmptyInput,
    #[error("{predicted} predicted turns but {gold} gold turns")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error(transparent)]
    Mitigation(#[from] MitigationError),
}
