//! Clarifying-question plans and template rendering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::response::{Exemplar, ResponseKnowledge};
use super::MitigationError;
use crate::corpus::MentionState;
use crate::detector::{HallucinationEvent, HallucinationKind};
use crate::dialogue_graph::DialogueEntityGraph;
use crate::knowledge_graph::{find_bridges_excluding, Bridge, KnowledgeGraph};

pub const DEFAULT_MAX_HOPS: usize = 2;

pub fn default_attributes() -> Vec<String> {
    vec!["duration".to_string(), "medical history".to_string()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKey {
    IsolatedBridge,
    IsolatedTarget,
    DenialExemplar,
    Denial,
    Contradiction,
}

impl TemplateKey {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKey::IsolatedBridge => "isolated_bridge",
            TemplateKey::IsolatedTarget => "isolated_target",
            TemplateKey::DenialExemplar => "denial_exemplar",
            TemplateKey::Denial => "denial",
            TemplateKey::Contradiction => "contradiction",
        }
    }
}

/// Per-kind question templates. Slots: `{target}`, `{bridge}`, `{turn_i}`,
/// `{turn_j}`, `{earlier}`, `{later}`, `{attribute}`, `{exemplar}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Templates(BTreeMap<TemplateKey, String>);

impl Default for Templates {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(TemplateKey::IsolatedBridge, "Do you have a {bridge}?".to_string());
        m.insert(
            TemplateKey::IsolatedTarget,
            "Can you confirm that you have {target}?".to_string(),
        );
        m.insert(
            TemplateKey::DenialExemplar,
            "Just to be sure about {target}: {exemplar}".to_string(),
        );
        m.insert(
            TemplateKey::Denial,
            "Are you sure you do not have {target}?".to_string(),
        );
        m.insert(
            TemplateKey::Contradiction,
            "Earlier (turn {turn_i}) you {earlier} {target}, later (turn {turn_j}) you {later} it. \
             Which reflects your history? Please tell me about the {attribute}."
                .to_string(),
        );
        Templates(m)
    }
}

impl Templates {
    /// Parses a JSON object keyed by template name. Absent keys are allowed
    /// and only fail when a plan needs them.
    pub fn from_json(bytes: &[u8]) -> Result<Self, MitigationError> {
        serde_json::from_slice(bytes).map_err(|e| MitigationError::Malformed(e.to_string()))
    }

    pub fn get(&self, key: TemplateKey) -> Result<&str, MitigationError> {
        self.0
            .get(&key)
            .map(String::as_str)
            .ok_or(MitigationError::MissingTemplate(key.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClarifyingPlan {
    pub event: HallucinationEvent,
    /// The event's subject.
    pub target: String,
    /// Entity the question is about: the top bridge, or the target.
    pub asked: String,
    pub bridges: Vec<Bridge>,
    pub exemplars: Vec<Exemplar>,
    pub emphasized_attributes: Vec<String>,
    pub question: String,
}

impl ClarifyingPlan {
    pub fn template_key(&self) -> TemplateKey {
        match self.event.kind {
            HallucinationKind::Isolated if !self.bridges.is_empty() => TemplateKey::IsolatedBridge,
            HallucinationKind::Isolated => TemplateKey::IsolatedTarget,
            HallucinationKind::Denial if !self.exemplars.is_empty() => TemplateKey::DenialExemplar,
            HallucinationKind::Denial => TemplateKey::Denial,
            HallucinationKind::Contradiction => TemplateKey::Contradiction,
        }
    }
}

fn state_verb(state: MentionState) -> &'static str {
    match state {
        MentionState::Mention => "mentioned",
        MentionState::Deny => "denied",
    }
}

fn fill(template: &str, plan: &ClarifyingPlan) -> String {
    let event = &plan.event;
    let earlier = event.prior_state.unwrap_or(MentionState::Mention);
    let later = match earlier {
        MentionState::Mention => MentionState::Deny,
        MentionState::Deny => MentionState::Mention,
    };
    let slots: [(&str, String); 8] = [
        ("{target}", plan.target.clone()),
        ("{bridge}", plan.bridges.first().map(|b| b.label.clone()).unwrap_or_default()),
        ("{turn_i}", event.prior_turn.unwrap_or(event.turn).to_string()),
        ("{turn_j}", event.turn.to_string()),
        ("{earlier}", state_verb(earlier).to_string()),
        ("{later}", state_verb(later).to_string()),
        ("{attribute}", plan.emphasized_attributes.join(" and ")),
        ("{exemplar}", plan.exemplars.first().map(|e| e.text.clone()).unwrap_or_default()),
    ];
    let mut out = template.to_string();
    for (slot, value) in &slots {
        out = out.replace(slot, value);
    }
    out
}

/// The plan's question followed by its exemplars as a delimited guidance block.
pub fn render_question(plan: &ClarifyingPlan, templates: &Templates) -> Result<String, MitigationError> {
    let mut out = fill(templates.get(plan.template_key())?, plan);
    if !plan.exemplars.is_empty() {
        out.push_str("\n--- guidance ---");
        for e in &plan.exemplars {
            out.push('\n');
            out.push_str(&e.text);
        }
        out.push_str("\n--- end guidance ---");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planner {
    pub templates: Templates,
    pub attributes: Vec<String>,
    pub max_hops: usize,
}

impl Default for Planner {
    fn default() -> Self {
        Planner {
            templates: Templates::default(),
            attributes: default_attributes(),
            max_hops: DEFAULT_MAX_HOPS,
        }
    }
}

impl Planner {
    pub fn with_templates(templates: Templates) -> Self {
        Planner {
            templates,
            ..Planner::default()
        }
    }

    pub fn plan(
        &self,
        event: &HallucinationEvent,
        kg: &KnowledgeGraph,
        rk: &ResponseKnowledge,
        g: &DialogueEntityGraph<'_>,
    ) -> Result<ClarifyingPlan, MitigationError> {
        let subject = event.subject.clone();
        let known = kg.contains(&subject);
        let exemplars_for = |label: &str| -> Vec<Exemplar> {
            if known {
                rk.get(label).to_vec()
            } else {
                Vec::new()
            }
        };

        let (asked, bridges, exemplars, attributes) = match event.kind {
            HallucinationKind::Isolated => {
                let anchors: BTreeSet<String> =
                    g.present_labels().into_iter().filter(|l| *l != subject).collect();
                let excluded: BTreeSet<String> = g.negated_labels().into_iter().collect();
                let bridges = if known {
                    find_bridges_excluding(kg, &subject, &anchors, &excluded, self.max_hops)
                } else {
                    Vec::new()
                };
                let asked = bridges
                    .first()
                    .map(|b| b.label.clone())
                    .unwrap_or_else(|| subject.clone());
                let exemplars = if bridges.is_empty() { Vec::new() } else { exemplars_for(&asked) };
                (asked, bridges, exemplars, Vec::new())
            }
            HallucinationKind::Denial => (subject.clone(), Vec::new(), exemplars_for(&subject), Vec::new()),
            HallucinationKind::Contradiction => (
                subject.clone(),
                Vec::new(),
                exemplars_for(&subject),
                self.attributes.clone(),
            ),
        };

        let mut plan = ClarifyingPlan {
            event: event.clone(),
            target: subject,
            asked,
            bridges,
            exemplars,
            emphasized_attributes: attributes,
            question: String::new(),
        };
        plan.question = fill(self.templates.get(plan.template_key())?, &plan);
        Ok(plan)
    }
}

/// Plans with the default templates, attributes and two-hop bridges.
pub fn plan_clarification(
    event: &HallucinationEvent,
    kg: &KnowledgeGraph,
    rk: &ResponseKnowledge,
    g: &DialogueEntityGraph<'_>,
) -> Result<ClarifyingPlan, MitigationError> {
    Planner::default().plan(event, kg, rk, g)
}
