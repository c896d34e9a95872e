//! Seeded patient scenarios: a hallucination-free base dialogue plus one
//! injected patient turn.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::fill;
use super::HarnessError;
use crate::corpus::{
    parse_dialogue_line, serialize_dialogue, Dialogue, EntityMention, MentionState, Speaker,
    Utterance,
};
use crate::detector::HallucinationKind;
use crate::dialogue_graph::new_session;
use crate::knowledge_graph::{find_bridges_excluding, KnowledgeGraph};
use crate::mitigation::DEFAULT_MAX_HOPS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: HallucinationKind,
    pub subject: String,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientScenario {
    pub id: String,
    pub seed: u64,
    /// Entities the simulated patient actually has.
    pub truth: BTreeSet<String>,
    pub base: Dialogue,
    pub injection: Injection,
}

const ISOLATED_TEXT: &str = "Could it be {e}?";
const DENIAL_TEXT: &str = "Actually, I don't have {e}.";
const CONTRADICTION_TEXT: &str = "No, I never had {e}.";

impl PatientScenario {
    pub fn injected_utterance(&self, kg: &KnowledgeGraph) -> Utterance {
        let s = &self.injection.subject;
        let (template, state) = match self.injection.kind {
            HallucinationKind::Isolated => (ISOLATED_TEXT, MentionState::Mention),
            HallucinationKind::Denial => (DENIAL_TEXT, MentionState::Deny),
            HallucinationKind::Contradiction => (CONTRADICTION_TEXT, MentionState::Deny),
        };
        let class = kg
            .id(s)
            .map(|id| kg.entity(id).class)
            .unwrap_or(crate::corpus::EntityClass::Symptom);
        Utterance::new(
            Speaker::Patient,
            Some(fill(template, s)),
            vec![EntityMention::new(s, class, state)],
        )
    }

    /// The base dialogue with the injected turn appended.
    pub fn dialogue(&self, kg: &KnowledgeGraph) -> Dialogue {
        let mut d = self.base.clone();
        d.turns.push(self.injected_utterance(kg));
        d
    }

    /// Every label the scenario uses must be a KG entity.
    pub fn check_against(&self, kg: &KnowledgeGraph) -> Result<(), HarnessError> {
        let labels = self
            .base
            .turns
            .iter()
            .flat_map(|u| u.mentions.iter().map(|m| m.label.as_str()))
            .chain(self.truth.iter().map(String::as_str))
            .chain(std::iter::once(self.injection.subject.as_str()));
        for l in labels {
            if !kg.contains(l) {
                return Err(HarnessError::UnknownEntity(l.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        let record = ScenarioRecord {
            id: self.id.clone(),
            seed: self.seed,
            truth: self.truth.iter().cloned().collect(),
            injection: self.injection.clone(),
            base: serde_json::from_str(&serialize_dialogue(&self.base))
                .expect("dialogue line is json"),
        };
        serde_json::to_string(&record).expect("scenario serialises")
    }

    pub fn from_json_line(line: &str) -> Result<Self, HarnessError> {
        let record: ScenarioRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::Malformed(e.to_string()))?;
        let base = parse_dialogue_line(&record.base.to_string(), 1)
            .map_err(|e| HarnessError::Malformed(e.to_string()))?;
        if record.injection.turn != base.turns.len() {
            return Err(HarnessError::Malformed(format!(
                "injection turn {} must follow the base dialogue ({} turns)",
                record.injection.turn,
                base.turns.len()
            )));
        }
        Ok(PatientScenario {
            id: record.id,
            seed: record.seed,
            truth: record.truth.into_iter().collect(),
            base,
            injection: record.injection,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ScenarioRecord {
    id: String,
    seed: u64,
    truth: Vec<String>,
    injection: Injection,
    base: serde_json::Value,
}

/// Parses one scenario per non-blank line.
pub fn parse_scenarios(text: &str) -> Result<Vec<PatientScenario>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            PatientScenario::from_json_line(l).map_err(|e| match e {
                HarnessError::Malformed(m) => HarnessError::Malformed(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

const OPEN: &[&str] = &["I have had {e} for a while.", "I keep getting {e}.", "I came in because of {e}."];
const ASK: &[&str] = &["Do you also have {e}?", "Any {e} lately?", "Have you noticed {e}?"];
const YES: &[&str] = &["Yes, I do.", "Yes, quite often.", "Yes, that too."];
const NO: &[&str] = &["No, not at all.", "No, I don't."];
const ALSO: &[&str] = &["I also have {e}.", "There is some {e} as well."];

fn utter(kg: &KnowledgeGraph, speaker: Speaker, text: String, label: &str, state: MentionState) -> Utterance {
    let class = kg.entity(kg.id(label).expect("label from kg")).class;
    Utterance::new(speaker, Some(text), vec![EntityMention::new(label, class, state)])
}

/// A base dialogue that walks KG edges and raises no events, with the set
/// of entities the patient confirmed.
///
/// The patient opens with an entity that has at least two neighbours; each
/// later round either answers a doctor question about a neighbour of the
/// current graph or volunteers one.
pub fn generate_base(kg: &KnowledgeGraph, seed: u64) -> Result<(Dialogue, BTreeSet<String>), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let openers: Vec<_> = kg.ids().filter(|&id| kg.neighbors(id).len() >= 2).collect();
    let first = *openers.choose(&mut rng).ok_or(HarnessError::KgTooSparse)?;
    let first = kg.label(first).to_string();

    let mut turns = vec![utter(
        kg,
        Speaker::Patient,
        fill(OPEN.choose(&mut rng).unwrap(), &first),
        &first,
        MentionState::Mention,
    )];
    let mut present = vec![first.clone()];
    let mut seen: BTreeSet<String> = BTreeSet::from([first.clone()]);
    let mut truth = BTreeSet::from([first]);

    let rounds = rng.gen_range(3..=5);
    for _ in 0..rounds {
        let mut frontier: BTreeSet<String> = BTreeSet::new();
        for p in &present {
            for (n, _) in kg.neighbors(kg.id(p).unwrap()) {
                let l = kg.label(n);
                if !seen.contains(l) {
                    frontier.insert(l.to_string());
                }
            }
        }
        let frontier: Vec<String> = frontier.into_iter().collect();
        let Some(next) = frontier.choose(&mut rng).cloned() else {
            break;
        };
        seen.insert(next.clone());
        if rng.gen_bool(0.5) {
            turns.push(utter(kg, Speaker::Doctor, fill(ASK.choose(&mut rng).unwrap(), &next), &next, MentionState::Mention));
            if rng.gen_bool(0.7) {
                turns.push(utter(kg, Speaker::Patient, YES.choose(&mut rng).unwrap().to_string(), &next, MentionState::Mention));
                present.push(next.clone());
                truth.insert(next);
            } else {
                turns.push(utter(kg, Speaker::Patient, NO.choose(&mut rng).unwrap().to_string(), &next, MentionState::Deny));
            }
        } else {
            turns.push(utter(kg, Speaker::Patient, fill(ALSO.choose(&mut rng).unwrap(), &next), &next, MentionState::Mention));
            present.push(next.clone());
            truth.insert(next);
        }
    }
    Ok((
        Dialogue {
            id: format!("base-{seed}"),
            turns,
        },
        truth,
    ))
}

fn patient_mentioned(base: &Dialogue) -> BTreeSet<String> {
    base.turns
        .iter()
        .filter(|u| u.speaker == Speaker::Patient)
        .flat_map(|u| &u.mentions)
        .filter(|m| m.state == MentionState::Mention)
        .map(|m| m.label.clone())
        .collect()
}

/// Appends one hallucination of `kind` to `base`.
///
/// `truth` is the patient's confirmed entity set for the base. An Isolated
/// subject has no KG edge to any entity the base mentions; the seed decides
/// whether it is real (the subject and its best bridge join the truth set)
/// or invented. A Denial subject is a patient-mentioned cut vertex of the
/// current graph and stays true. A Contradiction subject is a
/// patient-mentioned non-cut entity, true or not by seed.
pub fn inject_hallucination(
    base: &Dialogue,
    truth: &BTreeSet<String>,
    kind: HallucinationKind,
    kg: &KnowledgeGraph,
    seed: u64,
) -> Result<PatientScenario, HarnessError> {
    let patient_turns = base.turns.iter().filter(|u| u.speaker == Speaker::Patient).count();
    if patient_turns < 2 {
        return Err(HarnessError::BaseTooShort(patient_turns));
    }
    let mut g = new_session(kg);
    for u in &base.turns {
        for m in &u.mentions {
            if !kg.contains(&m.label) {
                return Err(HarnessError::UnknownEntity(m.label.clone()));
            }
        }
        g.apply_utterance(u);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = truth.clone();
    let mentioned: BTreeSet<String> = base
        .turns
        .iter()
        .flat_map(|u| &u.mentions)
        .map(|m| m.label.clone())
        .collect();

    let subject = match kind {
        HallucinationKind::Isolated => {
            let mentioned_ids: Vec<_> = mentioned.iter().filter_map(|l| kg.id(l)).collect();
            let candidates: Vec<String> = kg
                .ids()
                .filter(|&id| !mentioned.contains(kg.label(id)))
                .filter(|&id| mentioned_ids.iter().all(|&m| kg.undirected_weight(id, m).is_none()))
                .map(|id| kg.label(id).to_string())
                .collect();
            let subject = candidates
                .choose(&mut rng)
                .cloned()
                .ok_or(HarnessError::NoAdmissibleSubject(kind))?;
            let anchors: BTreeSet<String> = g.present_labels().into_iter().collect();
            let excluded: BTreeSet<String> = g.negated_labels().into_iter().collect();
            let bridges = find_bridges_excluding(kg, &subject, &anchors, &excluded, DEFAULT_MAX_HOPS);
            if rng.gen_bool(0.5) {
                if let Some(b) = bridges.first() {
                    truth.insert(subject.clone());
                    truth.insert(b.label.clone());
                }
            }
            subject
        }
        HallucinationKind::Denial | HallucinationKind::Contradiction => {
            let want_cut = kind == HallucinationKind::Denial;
            let candidates: Vec<String> = patient_mentioned(base)
                .into_iter()
                .filter(|l| g.is_present(l) && g.is_cut_vertex(l) == want_cut)
                .collect();
            let subject = candidates
                .choose(&mut rng)
                .cloned()
                .ok_or(HarnessError::NoAdmissibleSubject(kind))?;
            if kind == HallucinationKind::Contradiction && rng.gen_bool(0.5) {
                truth.remove(&subject);
            }
            subject
        }
    };

    Ok(PatientScenario {
        id: format!("{}-{kind}", base.id),
        seed,
        truth,
        base: base.clone(),
        injection: Injection {
            kind,
            subject,
            turn: base.turns.len(),
        },
    })
}

/// `count` scenarios with kinds drawn uniformly. Bases that admit no subject
/// for the drawn kind are replaced by fresh ones.
pub fn generate_scenarios(kg: &KnowledgeGraph, count: usize, seed: u64) -> Result<Vec<PatientScenario>, HarnessError> {
    const MAX_ATTEMPTS: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let kind = *HallucinationKind::ALL.choose(&mut rng).unwrap();
        let mut made = None;
        for _ in 0..MAX_ATTEMPTS {
            let (base, truth) = generate_base(kg, rng.next_u64())?;
            match inject_hallucination(&base, &truth, kind, kg, rng.next_u64()) {
                Ok(s) => {
                    made = Some(s);
                    break;
                }
                Err(HarnessError::NoAdmissibleSubject(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let mut s = made.ok_or(HarnessError::NoAdmissibleSubject(kind))?;
        s.id = format!("scn-{i:04}");
        s.base.id = s.id.clone();
        out.push(s);
    }
    Ok(out)
}
