use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use lar_mock::{spawn_llm_at, spawn_tagger_at, Faults, LlmScript, RuleSet, TaggerScript};

#[derive(Parser)]
#[command(name = "lar-mock", about = "Mock tagger and chat-completions servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve POST /tag from a JSONL script of {"text", "label_text"} records.
    Tagger {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8701")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 0)]
        max_delay_ms: u64,
    },
    /// Serve POST /chat/completions from a JSON rule file {"rules": [{"contains", "reply"}], "default"}.
    Llm {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8702")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 0)]
        max_delay_ms: u64,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let server = match cli.command {
        Command::Tagger { script, listen, max_delay_ms } => {
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let mut script = TaggerScript::from_jsonl(&text)?;
            script.faults = Faults { fail_first: 0, max_delay_ms };
            spawn_tagger_at(script, listen).await?
        }
        Command::Llm { rules, listen, max_delay_ms } => {
            let text = std::fs::read_to_string(&rules).with_context(|| format!("reading {}", rules.display()))?;
            let rules: RuleSet = serde_json::from_str(&text)?;
            let mut script = LlmScript::from_rules(rules);
            script.faults.max_delay_ms = max_delay_ms;
            spawn_llm_at(script, listen).await?
        }
    };
    println!("listening on {}", server.base_url());
    tokio::signal::ctrl_c().await?;
    println!("served {} requests", server.hits());
    Ok(())
}
