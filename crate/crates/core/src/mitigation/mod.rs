//! Exemplar retrieval and clarifying questions for detected hallucinations.

mod plan;
mod response;
mod vectors;

pub use plan::{
    default_attributes, plan_clarification, render_question, ClarifyingPlan, Planner, TemplateKey,
    Templates, DEFAULT_MAX_HOPS,
};
pub use response::{
    build_response_knowledge, build_response_knowledge_with, doctor_responses, load_rk,
    rank_exemplars, save_rk, Exemplar, ResponseKnowledge, DEFAULT_EXEMPLARS, RK_FORMAT_VERSION,
};
pub use vectors::{sentence_vector, tokenize, EmbeddingTable, SentenceVector, TfIdf, VectorSource};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MitigationError {
    #[error("empty text")]
    EmptyText,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding has {got} dimensions, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("missing template for '{0}'")]
    MissingTemplate(&'static str),
    #[error("unsupported response knowledge version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("response knowledge checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed input: {0}")]
    Malformed(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, EntityClass, EntityMention, MentionState, Speaker, Utterance};
    use crate::detector::{detect_dialogue, HallucinationKind};
    use crate::dialogue_graph::new_session;
    use crate::knowledge_graph::{EdgeSpec, EntityNode, KnowledgeGraph};

    fn kg() -> KnowledgeGraph {
        let node = |l: &str| EntityNode {
            label: l.into(),
            class: EntityClass::Symptom,
            freq: 2,
        };
        let edge = |s: &str, d: &str| EdgeSpec {
            src: s.into(),
            dst: d.into(),
            cooc: 1,
            weight: 0.5,
        };
        KnowledgeGraph::from_parts(
            0.0,
            vec![
                node("acid reflux"),
                node("bloating"),
                node("cough"),
                node("pneumonia"),
                node("stomach ache"),
            ],
            vec![
                edge("acid reflux", "bloating"),
                edge("bloating", "stomach ache"),
                edge("cough", "acid reflux"),
                edge("cough", "pneumonia"),
            ],
        )
        .unwrap()
    }

    fn rk() -> ResponseKnowledge {
        let doc = |t: &str, l: &str| {
            Utterance::new(
                Speaker::Doctor,
                Some(t.into()),
                vec![EntityMention::new(l, EntityClass::Symptom, MentionState::Mention)],
            )
        };
        build_response_knowledge(
            &[Dialogue {
                id: "x".into(),
                turns: vec![
                    doc("Do you have a cough at night?", "cough"),
                    doc("Is your stomach ache worse after meals?", "stomach ache"),
                    doc("Does the acid reflux wake you at night?", "acid reflux"),
                ],
            }],
            3,
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

    fn replay(kg: &KnowledgeGraph, turns: Vec<Utterance>) -> (crate::dialogue_graph::DialogueEntityGraph<'_>, Vec<crate::detector::HallucinationEvent>) {
        let d = Dialogue { id: "s".into(), turns };
        let events = detect_dialogue(kg, &d);
        let mut g = new_session(kg);
        for u in &d.turns {
            g.apply_utterance(u);
        }
        (g, events)
    }

    use MentionState::{Deny as N, Mention as M};

    #[test]
    fn isolated_plan_asks_the_bridge() {
        let kg = kg();
        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("bloating", M), ("acid reflux", M)]),
                utt(Speaker::Patient, &[("pneumonia", M)]),
            ],
        );
        assert_eq!(ev[0].kind, HallucinationKind::Isolated);
        let plan = plan_clarification(&ev[0], &kg, &rk(), &g).unwrap();
        assert_eq!(plan.asked, "cough");
        assert_eq!(plan.bridges.len(), 1);
        assert_eq!(plan.question, "Do you have a cough?");
        assert_eq!(plan.exemplars[0].text, "Do you have a cough at night?");
        assert!(plan.emphasized_attributes.is_empty());
        let full = render_question(&plan, &Templates::default()).unwrap();
        assert!(full.starts_with("Do you have a cough?\n--- guidance ---\n"));
    }

    #[test]
    fn isolated_without_bridge_asks_the_target() {
        let kg = kg();
        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("bloating", M), ("acid reflux", M)]),
                utt(Speaker::Patient, &[("cough", N)]),
                utt(Speaker::Patient, &[("pneumonia", M)]),
            ],
        );
        let plan = plan_clarification(ev.last().unwrap(), &kg, &rk(), &g).unwrap();
        assert!(plan.bridges.is_empty());
        assert_eq!(plan.asked, "pneumonia");
        assert_eq!(plan.question, "Can you confirm that you have pneumonia?");
    }

    #[test]
    fn denial_plan_reuses_exemplar() {
        let kg = kg();
        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("acid reflux", M), ("bloating", M), ("stomach ache", M)]),
                utt(Speaker::Patient, &[("bloating", N)]),
            ],
        );
        assert_eq!(ev[0].kind, HallucinationKind::Denial);
        let plan = plan_clarification(&ev[0], &kg, &rk(), &g).unwrap();
        assert_eq!(plan.asked, "bloating");
        assert!(plan.exemplars.is_empty());
        assert_eq!(plan.question, "Are you sure you do not have bloating?");

        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("cough", M), ("acid reflux", M), ("bloating", M)]),
                utt(Speaker::Patient, &[("acid reflux", N)]),
            ],
        );
        assert_eq!(ev[0].kind, HallucinationKind::Denial);
        let plan = plan_clarification(&ev[0], &kg, &rk(), &g).unwrap();
        assert_eq!(
            plan.question,
            "Just to be sure about acid reflux: Does the acid reflux wake you at night?"
        );
    }

    #[test]
    fn contradiction_plan_cites_both_turns() {
        let kg = kg();
        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("acid reflux", M)]),
                utt(Speaker::Doctor, &[]),
                utt(Speaker::Patient, &[("stomach ache", M), ("bloating", M)]),
                utt(Speaker::Doctor, &[]),
                utt(Speaker::Patient, &[("stomach ache", N)]),
            ],
        );
        let e = ev.iter().find(|e| e.kind == HallucinationKind::Contradiction).unwrap();
        let plan = plan_clarification(e, &kg, &rk(), &g).unwrap();
        assert_eq!(plan.emphasized_attributes, ["duration", "medical history"]);
        assert_eq!(
            plan.question,
            "Earlier (turn 2) you mentioned stomach ache, later (turn 4) you denied it. \
             Which reflects your history? Please tell me about the duration and medical history."
        );
    }

    #[test]
    fn unknown_subject_gets_template_only_plan() {
        let kg = kg();
        let g = new_session(&kg);
        let event = crate::detector::HallucinationEvent {
            turn: 3,
            kind: HallucinationKind::Isolated,
            subject: "zebra".into(),
            delta_n: 1,
            delta_h1: 0.0,
            components_before: 1,
            components_after: 2,
            agreement: crate::detector::Agreement::NotApplicable,
            prior_turn: None,
            prior_state: None,
        };
        let plan = plan_clarification(&event, &kg, &rk(), &g).unwrap();
        assert!(plan.bridges.is_empty() && plan.exemplars.is_empty());
        assert_eq!(plan.question, "Can you confirm that you have zebra?");
    }

    #[test]
    fn missing_template_is_an_error() {
        let kg = kg();
        let (g, ev) = replay(
            &kg,
            vec![
                utt(Speaker::Patient, &[("bloating", M), ("acid reflux", M)]),
                utt(Speaker::Patient, &[("pneumonia", M)]),
            ],
        );
        let only = Templates::from_json(br#"{"denial": "Sure about {target}?"}"#).unwrap();
        let err = Planner::with_templates(only).plan(&ev[0], &kg, &rk(), &g).unwrap_err();
        assert!(err.to_string().contains("missing template"));
        assert!(Templates::from_json(br#"{"other": "x"}"#).is_err());
    }

    #[test]
    fn planning_is_deterministic() {
        let kg = kg();
        let turns = vec![
            utt(Speaker::Patient, &[("bloating", M), ("acid reflux", M)]),
            utt(Speaker::Patient, &[("pneumonia", M)]),
        ];
        let (g1, e1) = replay(&kg, turns.clone());
        let (g2, e2) = replay(&kg, turns);
        let rk = rk();
        assert_eq!(
            plan_clarification(&e1[0], &kg, &rk, &g1).unwrap(),
            plan_clarification(&e2[0], &kg, &rk, &g2).unwrap()
        );
    }
}
