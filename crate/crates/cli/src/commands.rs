use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use halluguard_core::corpus::{parse_corpus_str, serialize_corpus, Dialogue, EntityClass, MentionState, Speaker};
use halluguard_core::detector::{detect_dialogue, HallucinationEvent};
use halluguard_core::dialogue_graph::new_session;
use halluguard_core::entropy::verify_separation;
use halluguard_core::harness::{
    aggregate_metrics, entity_prf, generate_scenarios, parse_scenarios, simulate_session, EntitySet,
    SessionMetrics, SimulationConfig, SyntheticWorld,
};
use halluguard_core::knowledge_graph::{build_knowledge_graph, load_kg, related_entities, save_kg, KnowledgeGraph};
use halluguard_core::mitigation::{
    build_response_knowledge, build_response_knowledge_with, load_rk, render_question, save_rk,
    EmbeddingTable, Planner, ResponseKnowledge, Templates,
};

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn corpus(path: &Path) -> Result<Vec<Dialogue>> {
    parse_corpus_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn kg_file(path: &Path) -> Result<KnowledgeGraph> {
    load_kg(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn rk_file(path: &Path) -> Result<ResponseKnowledge> {
    load_rk(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

/// Newline-terminated JSON records.
#[derive(Default)]
struct Lines(String);

impl Lines {
    fn push<T: Serialize>(&mut self, record: &T) {
        self.0.push_str(&serde_json::to_string(record).expect("records serialise"));
        self.0.push('\n');
    }

    fn print(&self) -> Result<()> {
        let mut out = std::io::stdout().lock();
        out.write_all(self.0.as_bytes())
            .and_then(|_| out.flush())
            .context("writing stdout")
    }

    fn emit(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => write(p, self.0.as_bytes()),
            None => self.print(),
        }
    }
}

fn report<T: Serialize>(record: &T) -> Result<ExitCode> {
    let mut out = Lines::default();
    out.push(record);
    out.print()?;
    Ok(ExitCode::SUCCESS)
}

pub fn build_kg(corpus_path: &Path, threshold: f64, out: &Path) -> Result<ExitCode> {
    let kg = build_knowledge_graph(&corpus(corpus_path)?, threshold)?;
    write(out, &save_kg(&kg))?;
    report(&serde_json::json!({
        "entities": kg.len(),
        "edges": kg.edge_count(),
        "threshold": kg.threshold(),
    }))
}

pub fn build_rk(corpus_path: &Path, k: usize, out: &Path, embeddings: Option<&Path>) -> Result<ExitCode> {
    let dialogues = corpus(corpus_path)?;
    let rk = match embeddings {
        Some(p) => build_response_knowledge_with(&dialogues, k, &EmbeddingTable::parse(&read_text(p)?)?)?,
        None => build_response_knowledge(&dialogues, k)?,
    };
    write(out, &save_rk(&rk))?;
    report(&serde_json::json!({ "entities": rk.len(), "k": rk.k() }))
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    dialogue_id: String,
    #[serde(flatten)]
    event: HallucinationEvent,
}

pub fn detect(kg_path: &Path, dialogues: &Path, events: Option<&Path>) -> Result<ExitCode> {
    let kg = kg_file(kg_path)?;
    let mut out = Lines::default();
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    let ds = corpus(dialogues)?;
    for d in &ds {
        for event in detect_dialogue(&kg, d) {
            *by_kind.entry(event.kind.to_string()).or_default() += 1;
            out.push(&EventRecord {
                dialogue_id: d.id.clone(),
                event,
            });
        }
    }
    out.emit(events)?;
    if events.is_some() {
        report(&serde_json::json!({
            "dialogues": ds.len(),
            "events": by_kind.values().sum::<usize>(),
            "by_kind": by_kind,
        }))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

#[derive(Serialize, Deserialize)]
struct TurnEntity {
    label: String,
    class: EntityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    dialogue_id: String,
    turn: usize,
    entities: Vec<TurnEntity>,
}

pub fn predict(kg_path: &Path, dialogues: &Path, top_k: usize, decay: f64, gold_out: Option<&Path>) -> Result<ExitCode> {
    let kg = kg_file(kg_path)?;
    let mut out = Lines::default();
    let mut gold = Lines::default();
    for d in &corpus(dialogues)? {
        let mut history: Vec<(String, usize)> = Vec::new();
        for (turn, u) in d.turns.iter().enumerate() {
            if u.speaker == Speaker::Doctor {
                let entities = if history.is_empty() {
                    Vec::new()
                } else {
                    related_entities(&kg, &history, top_k, decay)?
                        .entries
                        .into_iter()
                        .map(|s| TurnEntity {
                            class: kg.entity(kg.id(&s.label).expect("predicted from kg")).class,
                            label: s.label,
                            score: Some(s.score),
                        })
                        .collect()
                };
                out.push(&TurnRecord {
                    dialogue_id: d.id.clone(),
                    turn,
                    entities,
                });
                gold.push(&TurnRecord {
                    dialogue_id: d.id.clone(),
                    turn,
                    entities: u
                        .mentions
                        .iter()
                        .filter(|m| m.state == MentionState::Mention)
                        .map(|m| TurnEntity {
                            label: m.label.clone(),
                            class: m.class,
                            score: None,
                        })
                        .collect(),
                });
            }
            for m in &u.mentions {
                if m.state == MentionState::Mention && kg.contains(&m.label) {
                    history.push((m.label.clone(), turn));
                }
            }
        }
    }
    if let Some(p) = gold_out {
        gold.emit(Some(p))?;
    }
    out.print()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ClarifyRecord<'a> {
    dialogue_id: &'a str,
    template: &'static str,
    #[serde(flatten)]
    plan: halluguard_core::mitigation::ClarifyingPlan,
    rendered: String,
}

pub fn clarify(
    kg_path: &Path,
    rk_path: &Path,
    events: &Path,
    dialogues: &Path,
    templates: Option<&Path>,
) -> Result<ExitCode> {
    let kg = kg_file(kg_path)?;
    let rk = rk_file(rk_path)?;
    let templates = match templates {
        Some(p) => Templates::from_json(&read(p)?)?,
        None => Templates::default(),
    };
    let planner = Planner::with_templates(templates.clone());
    let ds: BTreeMap<String, Dialogue> = corpus(dialogues)?.into_iter().map(|d| (d.id.clone(), d)).collect();

    let mut out = Lines::default();
    for (i, line) in read_text(events)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(line).with_context(|| format!("event line {}", i + 1))?;
        let Some(d) = ds.get(&record.dialogue_id) else {
            bail!("event line {}: unknown dialogue '{}'", i + 1, record.dialogue_id);
        };
        if record.event.turn >= d.turns.len() {
            bail!("event line {}: turn {} is past the end of '{}'", i + 1, record.event.turn, d.id);
        }
        let mut g = new_session(&kg);
        for u in &d.turns[..=record.event.turn] {
            g.apply_utterance(u);
        }
        let plan = planner.plan(&record.event, &kg, &rk, &g)?;
        let rendered = render_question(&plan, &templates)?;
        out.push(&ClarifyRecord {
            dialogue_id: &d.id,
            template: plan.template_key().as_str(),
            plan,
            rendered,
        });
    }
    out.print()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    record: &'static str,
    #[serde(flatten)]
    metrics: &'a SessionMetrics,
}

fn run_sessions(
    kg: &KnowledgeGraph,
    rk: &ResponseKnowledge,
    scenarios: &[halluguard_core::harness::PatientScenario],
    config: &SimulationConfig,
) -> Result<Vec<SessionMetrics>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = scenarios.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<SessionMetrics>, _>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|sc| simulate_session(kg, rk, sc, config)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("session thread")).collect()
    });
    let mut out = Vec::with_capacity(scenarios.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn simulate(kg_path: &Path, rk_path: &Path, scenarios: &Path, max_turns: usize, seed: u64, mitigation: bool) -> Result<ExitCode> {
    let kg = kg_file(kg_path)?;
    let rk = rk_file(rk_path)?;
    let scenarios = parse_scenarios(&read_text(scenarios)?)?;
    let config = SimulationConfig {
        max_clarifying_turns: max_turns,
        mitigation,
        seed,
    };
    let sessions = run_sessions(&kg, &rk, &scenarios, &config)?;
    let agg = aggregate_metrics(&sessions)?;

    let mut out = Lines::default();
    for m in &sessions {
        out.push(&SessionRecord {
            record: "session",
            metrics: m,
        });
    }
    out.push(&serde_json::json!({
        "record": "summary",
        "sessions": agg.sessions,
        "mean_delta_ge": agg.mean_delta_ge,
        "success_rate": agg.success_rate,
        "mitigation": mitigation,
        "max_turns": max_turns,
        "seed": seed,
    }));
    out.print()?;
    Ok(ExitCode::SUCCESS)
}

fn turn_sets(path: &Path) -> Result<Vec<((String, usize), EntitySet)>> {
    let mut out = Vec::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TurnRecord = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        let set = r.entities.into_iter().map(|e| (e.label, e.class)).collect();
        out.push(((r.dialogue_id, r.turn), set));
    }
    Ok(out)
}

pub fn eval_prf(pred: &Path, gold: &Path) -> Result<ExitCode> {
    let (p, g) = (turn_sets(pred)?, turn_sets(gold)?);
    if p.len() == g.len() {
        if let Some(((pk, _), (gk, _))) = p.iter().zip(&g).find(|((a, _), (b, _))| a != b) {
            bail!("prediction {}:{} does not line up with gold {}:{}", pk.0, pk.1, gk.0, gk.1);
        }
    }
    let p: Vec<EntitySet> = p.into_iter().map(|(_, s)| s).collect();
    let g: Vec<EntitySet> = g.into_iter().map(|(_, s)| s).collect();
    let r = entity_prf(&p, &g)?;

    #[derive(Serialize)]
    struct Row<'a> {
        scope: &'a str,
        #[serde(flatten)]
        prf: &'a halluguard_core::harness::Prf,
    }
    let mut out = Lines::default();
    out.push(&Row {
        scope: "overall",
        prf: &r.overall,
    });
    for (class, prf) in &r.per_class {
        out.push(&Row {
            scope: class.as_str(),
            prf,
        });
    }
    out.print()?;
    Ok(ExitCode::SUCCESS)
}

/// Largest `n` the exhaustive enumeration is run for.
const N_MAX_LIMIT: usize = 9;

pub fn verify_bounds(n_max: usize) -> Result<ExitCode> {
    if !(2..=N_MAX_LIMIT).contains(&n_max) {
        bail!("--n-max must be between 2 and {N_MAX_LIMIT}");
    }
    let report = verify_separation(n_max);
    let mut out = Lines::default();
    for row in &report.rows {
        out.push(&serde_json::json!({ "record": "row", "row": row }));
    }
    for v in &report.violations {
        out.push(&serde_json::json!({ "record": "violation", "violation": v }));
    }
    out.push(&serde_json::json!({
        "record": "summary",
        "n_max": report.n_max,
        "pairs_checked": report.pairs_checked,
        "violations": report.violations.len(),
        "min_margin_by_n": report.min_margin_by_n(),
    }));
    out.print()?;
    if let Some(v) = report.violations.first() {
        eprintln!(
            "separation violated: n={} lower {:?} = {} <= upper {:?} (vol {}) = {}",
            v.n, v.lower_degrees, v.lower, v.upper_degrees, v.upper_vol, v.upper
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn synth_corpus(dialogues: usize, seed: u64, out: &Path) -> Result<ExitCode> {
    let corpus = SyntheticWorld::default().generate_corpus(dialogues, seed);
    write(out, serialize_corpus(&corpus).as_bytes())?;
    report(&serde_json::json!({ "dialogues": corpus.len(), "seed": seed }))
}

pub fn gen_scenarios(kg_path: &Path, count: usize, seed: u64, out: &Path) -> Result<ExitCode> {
    let kg = kg_file(kg_path)?;
    let scenarios = generate_scenarios(&kg, count, seed)?;
    let mut lines = Lines::default();
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for s in &scenarios {
        *by_kind.entry(s.injection.kind.to_string()).or_default() += 1;
        lines.0.push_str(&s.to_json_line());
        lines.0.push('\n');
    }
    lines.emit(Some(out))?;
    report(&serde_json::json!({ "scenarios": scenarios.len(), "by_kind": by_kind }))
}
