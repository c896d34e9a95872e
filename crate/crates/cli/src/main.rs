use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "halluguard", version, about = "Entity-graph hallucination detection for medical dialogues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the co-occurrence knowledge graph from a corpus.
    BuildKg {
        corpus: PathBuf,
        #[arg(long, default_value_t = halluguard_core::knowledge_graph::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the exemplar response table from a corpus.
    BuildRk {
        corpus: PathBuf,
        #[arg(long, default_value_t = halluguard_core::mitigation::DEFAULT_EXEMPLARS)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Token embedding table (`token v1 v2 ...` per line) instead of TF-IDF.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Replay dialogues and report hallucination events.
    Detect {
        #[arg(long)]
        kg: PathBuf,
        dialogues: PathBuf,
        /// Event file; events go to stdout when omitted.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Predict the entities of each doctor turn from the preceding ones.
    Predict {
        #[arg(long)]
        kg: PathBuf,
        dialogues: PathBuf,
        #[arg(long, default_value_t = halluguard_core::knowledge_graph::DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value_t = halluguard_core::knowledge_graph::DEFAULT_DECAY)]
        decay: f64,
        /// Also write the doctor turns' annotated entities, for `eval prf`.
        #[arg(long)]
        gold_out: Option<PathBuf>,
    },
    /// Plan a clarifying question for each detected event.
    Clarify {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        rk: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Dialogues the events were detected in.
        #[arg(long)]
        dialogues: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Run scripted clarification sessions over scenarios.
    Simulate {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        rk: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = halluguard_core::harness::DEFAULT_MAX_CLARIFYING_TURNS)]
        max_turns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_mitigation: bool,
    },
    /// Evaluation metrics.
    Eval {
        #[command(subcommand)]
        metric: EvalCommand,
    },
    /// Check the entropy bound separation for small graphs.
    VerifyBounds {
        #[arg(long, default_value_t = 7)]
        n_max: usize,
    },
    /// Write a synthetic corpus.
    SynthCorpus {
        #[arg(long, default_value_t = halluguard_core::harness::DEFAULT_CORPUS_SIZE)]
        dialogues: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded hallucination scenarios over a knowledge graph.
    GenScenarios {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Entity precision, recall and F1.
    Prf {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildKg { corpus, threshold, out } => commands::build_kg(&corpus, threshold, &out),
        Command::BuildRk { corpus, k, out, embeddings } => {
            commands::build_rk(&corpus, k, &out, embeddings.as_deref())
        }
        Command::Detect { kg, dialogues, events } => commands::detect(&kg, &dialogues, events.as_deref()),
        Command::Predict { kg, dialogues, top_k, decay, gold_out } => {
            commands::predict(&kg, &dialogues, top_k, decay, gold_out.as_deref())
        }
        Command::Clarify { kg, rk, events, dialogues, templates } => {
            commands::clarify(&kg, &rk, &events, &dialogues, templates.as_deref())
        }
        Command::Simulate { kg, rk, scenarios, max_turns, seed, no_mitigation } => {
            commands::simulate(&kg, &rk, &scenarios, max_turns, seed, !no_mitigation)
        }
        Command::Eval { metric: EvalCommand::Prf { pred, gold } } => commands::eval_prf(&pred, &gold),
        Command::VerifyBounds { n_max } => commands::verify_bounds(n_max),
        Command::SynthCorpus { dialogues, seed, out } => commands::synth_corpus(dialogues, seed, &out),
        Command::GenScenarios { kg, count, seed, out } => commands::gen_scenarios(&kg, count, seed, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure_code(&e))
        }
    }
}

// unreadable or unwritable files are environment failures, the rest are bad
// input
fn failure_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        1
    } else {
        2
    }
}
