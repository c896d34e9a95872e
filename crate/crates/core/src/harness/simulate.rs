//! Scripted clarification sessions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::PatientScenario;
use super::HarnessError;
use crate::corpus::{EntityClass, EntityMention, MentionState, Speaker, Utterance};
use crate::detector::{observe, HallucinationEvent, HallucinationKind};
use crate::dialogue_graph::{DialogueEntityGraph, NodeState};
use crate::knowledge_graph::KnowledgeGraph;
use crate::mitigation::{ClarifyingPlan, Planner, ResponseKnowledge};

pub const DEFAULT_MAX_CLARIFYING_TURNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationConfig {
    pub max_clarifying_turns: usize,
    pub mitigation: bool,
    /// Picks the patient's reply wording.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            max_clarifying_turns: DEFAULT_MAX_CLARIFYING_TURNS,
            mitigation: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Confirmed bridge connected the subject.
    Integrated,
    /// Subject removed after the patient's denial.
    Excluded,
    Restored,
    /// Patient repeated the denial.
    Upheld,
    Reconciled,
    Unresolved,
    /// No clarification was attempted.
    Unmitigated,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        !matches!(self, Outcome::Unresolved | Outcome::Unmitigated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventOutcome {
    pub turn: usize,
    pub kind: HallucinationKind,
    pub subject: String,
    pub outcome: Outcome,
    pub clarifying_turns: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bridge: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptMention {
    pub label: String,
    pub state: MentionState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptTurn {
    pub turn: usize,
    pub speaker: Speaker,
    pub text: Option<String>,
    pub mentions: Vec<TranscriptMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub scenario: String,
    /// H1 at the end minus H1 at the first event.
    pub delta_ge: f64,
    pub success: bool,
    pub clarifying_turns: usize,
    pub events: Vec<EventOutcome>,
    pub transcript: Vec<TranscriptTurn>,
}

const YES: &[&str] = &["Yes, I do have {e}.", "Yes, I have {e}.", "That's right, {e} too."];
const NO: &[&str] = &["No, I don't have {e}.", "No, no {e}.", "I haven't had any {e}."];

fn class_of(kg: &KnowledgeGraph, label: &str) -> EntityClass {
    kg.id(label).map(|id| kg.entity(id).class).unwrap_or(EntityClass::Symptom)
}

/// The oracle patient: confirms the plan's asked entity iff it is in the
/// truth set.
pub fn scripted_patient(
    scenario: &PatientScenario,
    kg: &KnowledgeGraph,
    plan: &ClarifyingPlan,
    rng: &mut ChaCha8Rng,
) -> Utterance {
    let target = &plan.asked;
    let (pool, state) = if scenario.truth.contains(target) {
        (YES, MentionState::Mention)
    } else {
        (NO, MentionState::Deny)
    };
    let text = pool.choose(rng).unwrap().replace("{e}", target);
    Utterance::new(
        Speaker::Patient,
        Some(text),
        vec![EntityMention::new(target, class_of(kg, target), state)],
    )
}

struct Session<'kg> {
    g: DialogueEntityGraph<'kg>,
    transcript: Vec<TranscriptTurn>,
}

impl Session<'_> {
    fn apply(&mut self, u: &Utterance) -> Vec<HallucinationEvent> {
        let prev = self.g.last_snapshot().clone();
        let (next, change) = self.g.apply_utterance(u);
        self.transcript.push(TranscriptTurn {
            turn: change.turn,
            speaker: u.speaker,
            text: u.text.clone(),
            mentions: u
                .mentions
                .iter()
                .map(|m| TranscriptMention {
                    label: m.label.clone(),
                    state: m.state,
                })
                .collect(),
        });
        observe(&prev, &next, &change, self.g.history()).expect("session snapshots are consecutive")
    }
}

/// Replays the scenario and runs the clarifying loop on each event.
///
/// Clarifying questions and answers go into the graph but are not fed to
/// the detector.
pub fn simulate_session(
    kg: &KnowledgeGraph,
    rk: &ResponseKnowledge,
    scenario: &PatientScenario,
    config: &SimulationConfig,
) -> Result<SessionMetrics, HarnessError> {
    simulate_with(&Planner::default(), kg, rk, scenario, config)
}

pub fn simulate_with(
    planner: &Planner,
    kg: &KnowledgeGraph,
    rk: &ResponseKnowledge,
    scenario: &PatientScenario,
    config: &SimulationConfig,
) -> Result<SessionMetrics, HarnessError> {
    if config.max_clarifying_turns == 0 {
        return Err(HarnessError::ZeroTurns);
    }
    scenario.check_against(kg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(scenario.seed);
    let mut s = Session {
        g: DialogueEntityGraph::new(kg),
        transcript: Vec::new(),
    };
    let mut start_h1: Option<f64> = None;
    let mut outcomes = Vec::new();

    for u in &scenario.dialogue(kg).turns {
        let events = s.apply(u);
        for event in events {
            start_h1.get_or_insert(s.g.last_snapshot().h1);
            let outcome = if config.mitigation {
                clarify(&mut s, planner, kg, rk, scenario, &event, config.max_clarifying_turns, &mut rng)?
            } else {
                EventOutcome {
                    turn: event.turn,
                    kind: event.kind,
                    subject: event.subject.clone(),
                    outcome: Outcome::Unmitigated,
                    clarifying_turns: 0,
                    bridge: None,
                }
            };
            outcomes.push(outcome);
        }
    }

    let delta_ge = start_h1.map_or(0.0, |h| s.g.last_snapshot().h1 - h);
    Ok(SessionMetrics {
        scenario: scenario.id.clone(),
        delta_ge,
        success: !outcomes.is_empty() && outcomes.iter().all(|o| o.outcome.is_success()),
        clarifying_turns: outcomes.iter().map(|o| o.clarifying_turns).sum(),
        events: outcomes,
        transcript: s.transcript,
    })
}

#[allow(clippy::too_many_arguments)]
fn clarify(
    s: &mut Session<'_>,
    planner: &Planner,
    kg: &KnowledgeGraph,
    rk: &ResponseKnowledge,
    scenario: &PatientScenario,
    event: &HallucinationEvent,
    max_turns: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EventOutcome, HarnessError> {
    let subject = event.subject.as_str();
    let mut used = 0;
    let mut bridge = None;
    let mut outcome = Outcome::Unresolved;

    while used < max_turns {
        let plan = planner.plan(event, kg, rk, &s.g)?;
        s.apply(&Utterance::new(Speaker::Doctor, Some(plan.question.clone()), Vec::new()));
        let reply = scripted_patient(scenario, kg, &plan, rng);
        let confirmed = reply.mentions[0].state == MentionState::Mention;
        s.apply(&reply);
        used += 1;

        match event.kind {
            HallucinationKind::Isolated if !plan.bridges.is_empty() => {
                bridge = Some(plan.asked.clone());
                if !confirmed {
                    let text = format!("Then {subject} is unlikely.");
                    let m = EntityMention::new(subject, class_of(kg, subject), MentionState::Deny);
                    s.apply(&Utterance::new(Speaker::Doctor, Some(text), vec![m]));
                    outcome = Outcome::Excluded;
                    break;
                }
                if s.g.is_present(subject) && !s.g.component_of(subject).is_empty() {
                    outcome = Outcome::Integrated;
                    break;
                }
            }
            HallucinationKind::Isolated => {
                if s.g.state(subject) == Some(NodeState::Negated) {
                    outcome = Outcome::Excluded;
                    break;
                }
            }
            HallucinationKind::Denial => {
                outcome = if confirmed { Outcome::Restored } else { Outcome::Upheld };
                break;
            }
            HallucinationKind::Contradiction => {
                outcome = Outcome::Reconciled;
                break;
            }
        }
    }

    Ok(EventOutcome {
        turn: event.turn,
        kind: event.kind,
        subject: subject.to_string(),
        outcome,
        clarifying_turns: used,
        bridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::generate_scenarios;
    use crate::harness::world::{SyntheticWorld, DEFAULT_CORPUS_SIZE};
    use crate::mitigation::build_response_knowledge;

    fn world() -> (KnowledgeGraph, ResponseKnowledge) {
        let w = SyntheticWorld::default();
        let corpus = w.generate_corpus(DEFAULT_CORPUS_SIZE, 1);
        (
            crate::knowledge_graph::build_knowledge_graph(&corpus, 0.01).unwrap(),
            build_response_knowledge(&corpus, 3).unwrap(),
        )
    }

    #[test]
    fn zero_turns_is_rejected() {
        let (kg, rk) = world();
        let s = &generate_scenarios(&kg, 1, 0).unwrap()[0];
        let cfg = SimulationConfig {
            max_clarifying_turns: 0,
            ..SimulationConfig::default()
        };
        assert!(matches!(simulate_session(&kg, &rk, s, &cfg), Err(HarnessError::ZeroTurns)));
    }

    #[test]
    fn unknown_entity_is_a_mismatch() {
        let (kg, rk) = world();
        let mut s = generate_scenarios(&kg, 1, 0).unwrap().remove(0);
        s.truth.insert("unicorn pox".into());
        let err = simulate_session(&kg, &rk, &s, &SimulationConfig::default()).unwrap_err();
        assert!(matches!(err, HarnessError::UnknownEntity(l) if l == "unicorn pox"));
    }

    #[test]
    fn unmitigated_sessions_never_succeed() {
        let (kg, rk) = world();
        let cfg = SimulationConfig {
            mitigation: false,
            ..SimulationConfig::default()
        };
        for s in generate_scenarios(&kg, 30, 2).unwrap() {
            let m = simulate_session(&kg, &rk, &s, &cfg).unwrap();
            assert!(!m.success);
            assert_eq!(m.delta_ge, 0.0);
            assert_eq!(m.clarifying_turns, 0);
        }
    }

    #[test]
    fn mitigated_sessions_resolve() {
        let (kg, rk) = world();
        for s in generate_scenarios(&kg, 60, 3).unwrap() {
            let m = simulate_session(&kg, &rk, &s, &SimulationConfig::default()).unwrap();
            assert!(m.success, "{}", s.to_json_line());
            let e = &m.events[0];
            match e.outcome {
                Outcome::Integrated => assert!(s.truth.contains(&s.injection.subject)),
                Outcome::Excluded => assert!(!s.truth.contains(&s.injection.subject)),
                Outcome::Restored => assert!(m.delta_ge > 0.0),
                _ => {}
            }
        }
    }

    #[test]
    fn sessions_are_deterministic() {
        let (kg, rk) = world();
        let cfg = SimulationConfig {
            seed: 42,
            ..SimulationConfig::default()
        };
        for s in generate_scenarios(&kg, 20, 4).unwrap() {
            let a = simulate_session(&kg, &rk, &s, &cfg).unwrap();
            let b = simulate_session(&kg, &rk, &s, &cfg).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::sync::OnceLock;

        fn shared() -> &'static (KnowledgeGraph, ResponseKnowledge) {
            static W: OnceLock<(KnowledgeGraph, ResponseKnowledge)> = OnceLock::new();
            W.get_or_init(world)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn confirmed_bridge_raises_entropy(seed in any::<u64>(), sim in any::<u64>()) {
                let (kg, rk) = shared();
                let cfg = SimulationConfig { seed: sim, ..SimulationConfig::default() };
                for s in generate_scenarios(kg, 8, seed).unwrap() {
                    let m = simulate_session(kg, rk, &s, &cfg).unwrap();
                    let e = &m.events[0];
                    if let Some(b) = &e.bridge {
                        if s.truth.contains(b) {
                            prop_assert_eq!(e.outcome, Outcome::Integrated);
                            prop_assert!(m.delta_ge > 0.0, "{} {}", s.to_json_line(), m.delta_ge);
                        }
                    }
                }
            }

            #[test]
            fn mitigation_never_lowers_mean_delta(seed in any::<u64>()) {
                let (kg, rk) = shared();
                let scenarios = generate_scenarios(kg, 10, seed).unwrap();
                let run = |mitigation| {
                    let cfg = SimulationConfig { mitigation, ..SimulationConfig::default() };
                    let ms: Vec<_> = scenarios.iter().map(|s| simulate_session(kg, rk, s, &cfg).unwrap()).collect();
                    crate::harness::aggregate_metrics(&ms).unwrap()
                };
                let (on, off) = (run(true), run(false));
                prop_assert_eq!(off.success_rate, 0.0);
                prop_assert!(off.mean_delta_ge <= on.mean_delta_ge);
            }

            #[test]
            fn same_seed_same_session(seed in any::<u64>(), sim in any::<u64>()) {
                let (kg, rk) = shared();
                let s = &generate_scenarios(kg, 1, seed).unwrap()[0];
                let cfg = SimulationConfig { seed: sim, ..SimulationConfig::default() };
                prop_assert_eq!(
                    simulate_session(kg, rk, s, &cfg).unwrap(),
                    simulate_session(kg, rk, s, &cfg).unwrap()
                );
            }
        }
    }
}
