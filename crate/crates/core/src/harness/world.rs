//! A small synthetic medical world: four clusters of related entities with a
//! couple of cross-links, and a corpus generator over it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, EntityClass, EntityMention, MentionState, Speaker, Utterance};
use crate::knowledge_graph::{build_knowledge_graph, KgError, KnowledgeGraph, DEFAULT_THRESHOLD};

use EntityClass::{Disease as D, Examination as E, Medicine as M, Symptom as S};

const ENTITIES: &[(&str, EntityClass)] = &[
    // digestive
    ("acid reflux", S),
    ("bloating", S),
    ("stomach ache", S),
    ("nausea", S),
    ("diarrhea", S),
    ("gastritis", D),
    ("omeprazole", M),
    ("gastroscopy", E),
    // respiratory
    ("cough", S),
    ("fever", S),
    ("sore throat", S),
    ("phlegm", S),
    ("pneumonia", D),
    ("cold", D),
    ("chest x-ray", E),
    ("amoxicillin", M),
    // neurological
    ("headache", S),
    ("dizziness", S),
    ("insomnia", S),
    ("fatigue", S),
    ("migraine", D),
    ("brain ct", E),
    ("ibuprofen", M),
    // skin
    ("rash", S),
    ("itching", S),
    ("skin redness", S),
    ("eczema", D),
    ("allergy test", E),
    ("loratadine", M),
];

const LINKS: &[(&str, &str)] = &[
    ("acid reflux", "bloating"),
    ("bloating", "stomach ache"),
    ("stomach ache", "nausea"),
    ("nausea", "diarrhea"),
    ("stomach ache", "gastritis"),
    ("acid reflux", "gastritis"),
    ("gastritis", "omeprazole"),
    ("gastritis", "gastroscopy"),
    ("cough", "phlegm"),
    ("cough", "pneumonia"),
    ("pneumonia", "fever"),
    ("pneumonia", "chest x-ray"),
    ("pneumonia", "amoxicillin"),
    ("cold", "sore throat"),
    ("cold", "fever"),
    ("sore throat", "cough"),
    ("headache", "dizziness"),
    ("headache", "migraine"),
    ("migraine", "ibuprofen"),
    ("migraine", "brain ct"),
    ("dizziness", "insomnia"),
    ("insomnia", "fatigue"),
    ("rash", "itching"),
    ("itching", "eczema"),
    ("eczema", "loratadine"),
    ("eczema", "allergy test"),
    ("rash", "skin redness"),
    // cross-cluster
    ("cough", "acid reflux"),
    ("fatigue", "fever"),
];

const PATIENT_OPEN: &[&str] = &[
    "I have been having {e} for a few days.",
    "Lately I keep getting {e}.",
    "My main problem is {e}.",
];

const DOCTOR_ASK: &[&str] = &[
    "Do you also have {e}?",
    "Have you noticed any {e} recently?",
    "Is there any {e} along with it?",
    "Any {e} at the same time?",
];

const DOCTOR_FOLLOW: &[&str] = &[
    "How long have you had the {e}?",
    "Does the {e} get worse at night?",
    "When did the {e} start?",
];

const PATIENT_YES: &[&str] = &["Yes, I have {e} too.", "Yes, some {e} as well."];

/// The synthetic world's entity table and latent links.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub entities: Vec<(String, EntityClass)>,
    pub links: Vec<(String, String)>,
}

impl Default for SyntheticWorld {
    fn default() -> Self {
        SyntheticWorld {
            entities: ENTITIES.iter().map(|(l, c)| (l.to_string(), *c)).collect(),
            links: LINKS
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }
}

pub(crate) fn fill(template: &str, entity: &str) -> String {
    template.replace("{e}", entity)
}

impl SyntheticWorld {
    pub fn class_of(&self, label: &str) -> EntityClass {
        self.entities
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, c)| *c)
            .unwrap_or(EntityClass::Symptom)
    }

    fn mention(&self, label: &str) -> EntityMention {
        EntityMention::new(label, self.class_of(label), MentionState::Mention)
    }

    /// A corpus where each dialogue discusses one linked pair, or one
    /// entity alone. Every link appears at least once.
    pub fn generate_corpus(&self, dialogues: usize, seed: u64) -> Vec<Dialogue> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(dialogues.max(self.links.len()));
        for i in 0..dialogues.max(self.links.len()) {
            let id = format!("syn-{i:05}");
            let single = i >= self.links.len() && rng.gen_bool(0.1);
            if single {
                let (label, _) = self.entities.choose(&mut rng).expect("world has entities");
                out.push(self.single_dialogue(id, label, &mut rng));
                continue;
            }
            let (a, b) = if i < self.links.len() {
                &self.links[i]
            } else {
                self.links.choose(&mut rng).expect("world has links")
            };
            let (first, second) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            out.push(self.pair_dialogue(id, first, second, &mut rng));
        }
        out
    }

    fn single_dialogue(&self, id: String, label: &str, rng: &mut ChaCha8Rng) -> Dialogue {
        Dialogue {
            id,
            turns: vec![
                Utterance::new(
                    Speaker::Patient,
                    Some(fill(PATIENT_OPEN.choose(rng).unwrap(), label)),
                    vec![self.mention(label)],
                ),
                Utterance::new(
                    Speaker::Doctor,
                    Some(fill(DOCTOR_FOLLOW.choose(rng).unwrap(), label)),
                    vec![self.mention(label)],
                ),
            ],
        }
    }

    fn pair_dialogue(&self, id: String, a: &str, b: &str, rng: &mut ChaCha8Rng) -> Dialogue {
        let mut turns = vec![
            Utterance::new(
                Speaker::Patient,
                Some(fill(PATIENT_OPEN.choose(rng).unwrap(), a)),
                vec![self.mention(a)],
            ),
            Utterance::new(
                Speaker::Doctor,
                Some(fill(DOCTOR_ASK.choose(rng).unwrap(), b)),
                vec![self.mention(b)],
            ),
            Utterance::new(
                Speaker::Patient,
                Some(fill(PATIENT_YES.choose(rng).unwrap(), b)),
                vec![self.mention(b)],
            ),
        ];
        if rng.gen_bool(0.5) {
            turns.push(Utterance::new(
                Speaker::Doctor,
                Some(fill(DOCTOR_FOLLOW.choose(rng).unwrap(), a)),
                vec![self.mention(a)],
            ));
        }
        Dialogue { id, turns }
    }

    pub fn knowledge_graph(&self, dialogues: usize, seed: u64) -> Result<KnowledgeGraph, KgError> {
        build_knowledge_graph(&self.generate_corpus(dialogues, seed), DEFAULT_THRESHOLD)
    }
}

/// Corpus size used when a synthetic KG is needed without further say.
pub const DEFAULT_CORPUS_SIZE: usize = 400;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_link_becomes_an_edge() {
        let world = SyntheticWorld::default();
        let kg = world.knowledge_graph(DEFAULT_CORPUS_SIZE, 7).unwrap();
        assert_eq!(kg.len(), world.entities.len());
        for (a, b) in &world.links {
            let (ia, ib) = (kg.id(a).unwrap(), kg.id(b).unwrap());
            assert!(kg.undirected_weight(ia, ib).is_some(), "{a} - {b}");
        }
        // nothing beyond the latent links
        let linked = |x: &str, y: &str| {
            world
                .links
                .iter()
                .any(|(a, b)| (a == x && b == y) || (a == y && b == x))
        };
        for e in kg.edges() {
            assert!(linked(kg.label(e.src), kg.label(e.dst)));
        }
    }

    #[test]
    fn corpus_is_seed_deterministic() {
        let w = SyntheticWorld::default();
        assert_eq!(w.generate_corpus(50, 3), w.generate_corpus(50, 3));
        assert_ne!(w.generate_corpus(50, 3), w.generate_corpus(50, 4));
    }
}
