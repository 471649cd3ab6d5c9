//! `lar`: command-line driver for the label alignment and reassignment
//! pipeline. Each subcommand is one step; the steps communicate through files
//! in the output directory.

pub mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lar_core::alignment::{self, build_mapping, tally_votes, AlignParams, MatchMode, Provenance, TypeMapping};
use lar_core::corpus::{self, AnnotatedSentence, ColumnFormat, TypeInventory};
use lar_core::evaluation::{continual_curve, span_f1, typewise_accuracy};
use lar_core::inference::{
    self, direct_infer, enhance, read_predictions, write_predictions, zero_shot_augment, AugmentOptions,
    EnhanceOptions,
};
use lar_core::label_codec::{build_instruction, emit_plain, emit_reassign, parse_plain, parse_reassign, Instruction};
use lar_core::llm::{LlmClient, ResponseCache};
use lar_core::tagger::{pseudo_label, HttpTagger, ScriptedTagger, Tagger, DEFAULT_PARALLELISM};

use crate::config::{DatasetConfig, PipelineConfig, TaggerConfig};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_OUT_DIR: &str = "lar-out";
pub const DEFAULT_AUGMENT_FRACTION: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(name = "lar", version, about = "Label alignment and reassignment for cross-domain NER")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Pipeline manifest (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Tagger endpoint for the command's model role (overrides the manifest).
    #[arg(long, global = true)]
    pub tagger_url: Option<String>,
    /// Scripted tagger: JSONL of {"id", "label_text"} records.
    #[arg(long, global = true)]
    pub tagger_script: Option<PathBuf>,
    /// Maximum in-flight tagger or chat requests.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub llm_url: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    #[arg(long, global = true, env = "LLM_CACHE_DIR")]
    pub llm_cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write plain-format training records for the source model.
    EmitSourceTrain {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pseudo-label the target training split with the source model.
    PseudoLabel {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the target→source type mapping.
    Align {
        /// Defaults to `<out-dir>/pseudo.jsonl` when present; otherwise the source tagger runs.
        #[arg(long)]
        pseudo: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "match")]
        match_mode: Option<MatchMode>,
        #[arg(long)]
        misc_label: Option<String>,
        /// Replace gold labels with chat-model annotations of a sample.
        #[arg(long)]
        synthetic: bool,
        /// Sample fraction for --synthetic.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write reassignment-format training records for the target model.
    EmitTargetTrain {
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        /// Low-resource subsample of the training split.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode target-model output into predictions.
    Predict {
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-type predictions through multiple-choice questions to a chat model.
    Enhance {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        sentences: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Only ask about predictions whose candidates include one of these types.
        #[arg(long, value_delimiter = ',')]
        only_types: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate a sample of the target split with a chat model.
    Augment {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Span-level precision, recall and F1.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// JSON report path; a text table is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-type accuracy of direct vs enhanced typing on recognized spans.
    Typewise {
        #[arg(long)]
        direct: Option<PathBuf>,
        #[arg(long)]
        enhanced: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// F1 of successive snapshots on one test set.
    Continual {
        /// `name=predictions.jsonl`, in stage order.
        #[arg(long = "stage")]
        stages: Vec<String>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// CSV path; a JSON curve is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One record of an emitted training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    pub instruction: String,
    pub input: String,
    pub output: String,
}

struct Ctx {
    cfg: PipelineConfig,
    global: GlobalArgs,
}

#[derive(Clone, Copy)]
enum Role {
    Source,
    Target,
}

fn load_corpus(path: &Path, split: &str, domain: &str, format: Option<&str>) -> Result<Vec<AnnotatedSentence>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl" || e == "json");
    let sentences = if is_jsonl {
        corpus::read_jsonl(&bytes)
    } else {
        let format: ColumnFormat = format.unwrap_or("auto").parse().map_err(|e: String| anyhow!(e))?;
        corpus::parse_column_file(&bytes, format, split, domain)
    };
    sentences.with_context(|| format!("ingesting {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    tracing::info!(path = %path.display(), "wrote");
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

impl Ctx {
    fn new(global: GlobalArgs) -> Result<Self> {
        let cfg = match &global.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        Ok(Ctx { cfg, global })
    }

    fn out_dir(&self) -> PathBuf {
        self.global
            .out_dir
            .clone()
            .or_else(|| self.cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn out(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir().join(default_name))
    }

    fn seed(&self) -> u64 {
        self.global.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn parallelism(&self) -> usize {
        self.global
            .parallelism
            .or(self.cfg.parallelism)
            .unwrap_or(DEFAULT_PARALLELISM)
            .max(1)
    }

    fn dataset(&self, role: Role) -> Option<&DatasetConfig> {
        match role {
            Role::Source => self.cfg.source.as_ref(),
            Role::Target => self.cfg.target.as_ref(),
        }
    }

    fn split(&self, role: Role, split: &str, explicit: &Option<PathBuf>) -> Result<Vec<AnnotatedSentence>> {
        let ds = self.dataset(role);
        let path = explicit
            .clone()
            .or_else(|| {
                ds.and_then(|d| match split {
                    "train" => d.train.clone(),
                    "dev" => d.dev.clone(),
                    _ => d.test.clone(),
                })
            })
            .ok_or_else(|| {
                let which = match role {
                    Role::Source => "source",
                    Role::Target => "target",
                };
                anyhow!("no {which} {split} split: pass a path or set [{which}].{split} in the config")
            })?;
        let domain = ds.map_or("corpus", |d| d.name.as_str());
        load_corpus(&path, split, domain, ds.and_then(|d| d.format.as_deref()))
    }

    fn inventory(&self, role: Role, observed_in: &[AnnotatedSentence]) -> Result<TypeInventory> {
        match self.dataset(role).and_then(|d| d.types.clone()) {
            Some(types) => Ok(TypeInventory::new(types)?),
            None => TypeInventory::observed(observed_in).context("cannot infer a type inventory from an unannotated split"),
        }
    }

    /// Source inventory from the config, else observed on the source train split.
    fn source_inventory(&self, fallback: &[AnnotatedSentence]) -> Result<TypeInventory> {
        if let Some(types) = self.cfg.source.as_ref().and_then(|d| d.types.clone()) {
            return Ok(TypeInventory::new(types)?);
        }
        if self.cfg.source.as_ref().is_some_and(|d| d.train.is_some()) {
            let train = self.split(Role::Source, "train", &None)?;
            return self.inventory(Role::Source, &train);
        }
        self.inventory(Role::Source, fallback)
    }

    /// Instruction for the target model: configured target types, else the
    /// mapping's target types in name order.
    fn target_instruction(&self, mapping: &TypeMapping) -> Result<Instruction> {
        let types = match self.cfg.target.as_ref().and_then(|d| d.types.clone()) {
            Some(t) => TypeInventory::new(t)?,
            None => TypeInventory::new(mapping.entries.iter().map(|e| e.target.clone()))?,
        };
        Ok(build_instruction(&types))
    }

    fn tagger(&self, role: Role) -> Result<Box<dyn Tagger>> {
        let configured = match role {
            Role::Source => self.cfg.source_tagger.clone(),
            Role::Target => self.cfg.target_tagger.clone(),
        }
        .unwrap_or_default();
        let chosen = if self.global.tagger_url.is_some() || self.global.tagger_script.is_some() {
            TaggerConfig {
                url: self.global.tagger_url.clone(),
                script: self.global.tagger_script.clone(),
            }
        } else {
            configured
        };
        match (chosen.url, chosen.script) {
            (Some(_), Some(_)) => bail!("give either a tagger URL or a tagger script, not both"),
            (Some(url), None) => Ok(Box::new(HttpTagger::from_env(&url)?)),
            (None, Some(script)) => {
                let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
                Ok(Box::new(ScriptedTagger::from_jsonl(&text)?))
            }
            (None, None) => bail!("no tagger configured: pass --tagger-url or --tagger-script"),
        }
    }

    fn llm(&self) -> Result<LlmClient> {
        let llm_cfg = self.cfg.llm.clone().unwrap_or_default();
        let url = self
            .global
            .llm_url
            .clone()
            .or(llm_cfg.url)
            .ok_or_else(|| anyhow!("no chat endpoint configured: pass --llm-url or set [llm].url"))?;
        let cache_dir = self
            .global
            .llm_cache_dir
            .clone()
            .or(llm_cfg.cache_dir)
            .unwrap_or_else(|| self.out_dir().join("llm-cache"));
        let cache = ResponseCache::open(&cache_dir)?;
        Ok(LlmClient::from_env(&url, cache)?)
    }

    fn llm_model(&self) -> String {
        self.global
            .llm_model
            .clone()
            .or_else(|| self.cfg.llm.as_ref().and_then(|l| l.model.clone()))
            .unwrap_or_else(|| DEFAULT_MODEL.to_string())
    }

    fn llm_parallelism(&self) -> usize {
        self.global
            .parallelism
            .or_else(|| self.cfg.llm.as_ref().and_then(|l| l.parallelism))
            .unwrap_or_else(|| self.parallelism())
            .max(1)
    }

    fn align_params(&self, tau: Option<f64>, mode: Option<MatchMode>, misc: Option<String>, provenance: Provenance) -> Result<AlignParams> {
        let a = &self.cfg.alignment;
        let match_mode = match mode {
            Some(m) => m,
            None => match &a.match_mode {
                Some(m) => m.parse().map_err(|e: String| anyhow!(e))?,
                None => MatchMode::Exact,
            },
        };
        let tau = tau.or(a.tau).unwrap_or(alignment::DEFAULT_TAU);
        if !(0.0..=1.0).contains(&tau) {
            bail!("tau {tau} is outside [0, 1]");
        }
        Ok(AlignParams {
            tau,
            misc_label: misc
                .or_else(|| a.misc_label.clone())
                .unwrap_or_else(|| alignment::DEFAULT_MISC_LABEL.to_string()),
            match_mode,
            provenance,
        })
    }

    fn mapping(&self, explicit: &Option<PathBuf>) -> Result<TypeMapping> {
        let path = self.out(explicit, "mapping.json");
        alignment::load_mapping(&path).with_context(|| format!("loading mapping {}", path.display()))
    }

    fn augment_fraction(&self, explicit: Option<f64>) -> f64 {
        explicit
            .or(self.cfg.augment.fraction)
            .unwrap_or(DEFAULT_AUGMENT_FRACTION)
    }
}

fn training_jsonl(records: &[TrainingRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn sentences_jsonl_read(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    load_corpus(path, "train", "corpus", None)
}

async fn run_pseudo_label(ctx: &Ctx, train: &[AnnotatedSentence], sources: &TypeInventory) -> Result<Vec<AnnotatedSentence>> {
    let tagger = ctx.tagger(Role::Source)?;
    let instruction = build_instruction(sources);
    let out = pseudo_label(train, &instruction, tagger.as_ref(), ctx.parallelism()).await?;
    eprintln!(
        "pseudo-labelled {} sentences ({} malformed lines, {} ungrounded, {} tagger errors)",
        out.sentences.len(),
        out.report.malformed,
        out.report.dropped,
        out.report.errors
    );
    Ok(out.sentences)
}

async fn run_augment(ctx: &Ctx, train: &[AnnotatedSentence], fraction: f64) -> Result<Vec<AnnotatedSentence>> {
    let types = ctx.inventory(Role::Target, train)?;
    let llm = ctx.llm()?;
    let options = AugmentOptions {
        fraction,
        seed: ctx.seed(),
        model: ctx.llm_model(),
        parallelism: ctx.llm_parallelism(),
    };
    let outcome = zero_shot_augment(train, &types, &llm, &options).await?;
    eprintln!(
        "prompted {} sentences: {} synthetic, {} excluded, {} ungrounded lines; {} network calls",
        outcome.prompted,
        outcome.synthetic.len(),
        outcome.excluded,
        outcome.dropped,
        llm.network_calls()
    );
    Ok(outcome.synthetic)
}

pub async fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::EmitSourceTrain { train, out } => {
            let train = ctx.split(Role::Source, "train", &train)?;
            if train.is_empty() {
                bail!("source training split is empty");
            }
            let types = ctx.inventory(Role::Source, &train)?;
            let instruction = build_instruction(&types);
            let records: Vec<TrainingRecord> = train
                .iter()
                .map(|s| TrainingRecord {
                    id: s.id.clone(),
                    instruction: instruction.text.clone(),
                    input: s.text(),
                    output: emit_plain(&s.entities),
                })
                .collect();
            for r in &records {
                if parse_plain(&r.output).malformed > 0 {
                    bail!("label for {} does not parse back", r.id);
                }
            }
            let path = ctx.out(&out, "source_train.jsonl");
            write_file(&path, training_jsonl(&records)?)?;
            eprintln!("{} source training records", records.len());
        }
        Command::PseudoLabel { train, out } => {
            let train = ctx.split(Role::Target, "train", &train)?;
            let sources = ctx.source_inventory(&[])?;
            let pseudo = run_pseudo_label(&ctx, &train, &sources).await?;
            write_file(&ctx.out(&out, "pseudo.jsonl"), corpus::write_jsonl(&pseudo))?;
        }
        Command::Align {
            pseudo,
            gold,
            tau,
            match_mode,
            misc_label,
            synthetic,
            fraction,
            out,
        } => {
            let provenance = if synthetic { Provenance::Synthetic } else { Provenance::Gold };
            let params = ctx.align_params(tau, match_mode, misc_label, provenance)?;
            let train = match &gold {
                Some(p) => sentences_jsonl_read(p)?,
                None => ctx.split(Role::Target, "train", &None)?,
            };
            let gold_sentences = if synthetic {
                let synthetic = run_augment(&ctx, &train, ctx.augment_fraction(fraction)).await?;
                write_file(&ctx.out_dir().join("synthetic.jsonl"), corpus::write_jsonl(&synthetic))?;
                synthetic
            } else {
                train
            };
            let pseudo = pseudo.or_else(|| Some(ctx.out_dir().join("pseudo.jsonl")).filter(|p| p.exists()));
            let pseudo_sentences = match &pseudo {
                Some(p) => sentences_jsonl_read(p)?,
                None => {
                    let sources = ctx.source_inventory(&[])?;
                    run_pseudo_label(&ctx, &gold_sentences, &sources).await?
                }
            };
            let keep: BTreeSet<&str> = gold_sentences.iter().map(|s| s.id.as_str()).collect();
            let pseudo_sentences: Vec<AnnotatedSentence> = if synthetic {
                pseudo_sentences.into_iter().filter(|s| keep.contains(s.id.as_str())).collect()
            } else {
                pseudo_sentences
            };
            let sources = ctx.source_inventory(&pseudo_sentences)?;
            let votes = tally_votes(&pseudo_sentences, &gold_sentences, params.match_mode)?;
            let mapping = build_mapping(&votes, &sources, &params)?;
            let path = ctx.out(&out, "mapping.json");
            alignment::save_mapping(&mapping, &path)?;
            for e in &mapping.entries {
                eprintln!("{:>24} -> {:<16} coverage {:.3}", e.target, e.source, e.coverage);
            }
        }
        Command::EmitTargetTrain { mapping, train, fraction, out } => {
            let mapping = ctx.mapping(&mapping)?;
            let train = ctx.split(Role::Target, "train", &train)?;
            if train.is_empty() {
                bail!("target training split is empty");
            }
            let train = match fraction {
                Some(f) => corpus::sample_fraction(&train, f, ctx.seed())?,
                None => train,
            };
            let instruction = ctx.target_instruction(&mapping)?;
            let mut records = Vec::with_capacity(train.len());
            for s in &train {
                let output = emit_reassign(&s.entities, &mapping).with_context(|| format!("sentence {}", s.id))?;
                let parsed = parse_reassign(&output);
                if parsed.malformed > 0 || parsed.lines.len() != s.entities.len() {
                    bail!("label for {} does not parse back", s.id);
                }
                records.push(TrainingRecord {
                    id: s.id.clone(),
                    instruction: instruction.text.clone(),
                    input: s.text(),
                    output,
                });
            }
            write_file(&ctx.out(&out, "target_train.jsonl"), training_jsonl(&records)?)?;
            eprintln!("{} target training records", records.len());
        }
        Command::Predict { mapping, input, out } => {
            let mapping = ctx.mapping(&mapping)?;
            let test = ctx.split(Role::Target, "test", &input)?;
            let instruction = ctx.target_instruction(&mapping)?;
            let tagger = ctx.tagger(Role::Target)?;
            let (records, report) = direct_infer(&test, tagger.as_ref(), &mapping, &instruction, ctx.parallelism()).await;
            write_file(&ctx.out(&out, "predictions.jsonl"), write_predictions(&records))?;
            eprintln!(
                "{} sentences decoded ({} malformed lines, {} ungrounded, {} tagger errors)",
                records.len(),
                report.malformed,
                report.dropped,
                report.errors
            );
        }
        Command::Enhance {
            predictions,
            sentences,
            mapping,
            only_types,
            out,
        } => {
            let mapping = ctx.mapping(&mapping)?;
            let pred_path = ctx.out(&predictions, "predictions.jsonl");
            let records = read_predictions(&std::fs::read(&pred_path).with_context(|| format!("reading {}", pred_path.display()))?)?;
            let sentences = ctx.split(Role::Target, "test", &sentences)?;
            let only_types = only_types
                .or_else(|| ctx.cfg.llm.as_ref().and_then(|l| l.only_types.clone()))
                .map(|v| v.into_iter().collect::<BTreeSet<_>>());
            let llm = ctx.llm()?;
            let options = EnhanceOptions {
                model: ctx.llm_model(),
                only_types,
                parallelism: ctx.llm_parallelism(),
            };
            let (enhanced, report) = enhance(&records, &sentences, &mapping, &llm, &options).await?;
            write_file(&ctx.out(&out, "predictions.enhanced.jsonl"), write_predictions(&enhanced))?;
            eprintln!(
                "asked {} questions: {} re-typed, {} unparsed answers, {} errors; {} network calls",
                report.asked,
                report.changed,
                report.unparsed,
                report.errors,
                llm.network_calls()
            );
        }
        Command::Augment { train, fraction, out } => {
            let train = ctx.split(Role::Target, "train", &train)?;
            let synthetic = run_augment(&ctx, &train, ctx.augment_fraction(fraction)).await?;
            write_file(&ctx.out(&out, "synthetic.jsonl"), corpus::write_jsonl(&synthetic))?;
        }
        Command::Evaluate { predictions, gold, out } => {
            let pred_path = ctx.out(&predictions, "predictions.jsonl");
            let preds = read_predictions(&std::fs::read(&pred_path).with_context(|| format!("reading {}", pred_path.display()))?)?;
            let gold = ctx.split(Role::Target, "test", &gold)?;
            let report = span_f1(&preds, &gold)?;
            let path = ctx.out(&out, "report.json");
            write_file(&path, report.to_json())?;
            let table = report.to_table();
            write_file(&sibling(&path, "txt"), &table)?;
            print!("{table}");
        }
        Command::Typewise { direct, enhanced, gold, out } => {
            let read = |p: PathBuf| -> Result<Vec<inference::SentencePredictions>> {
                read_predictions(&std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?).map_err(Into::into)
            };
            let direct = read(ctx.out(&direct, "predictions.jsonl"))?;
            let enhanced = read(ctx.out(&enhanced, "predictions.enhanced.jsonl"))?;
            let gold = ctx.split(Role::Target, "test", &gold)?;
            let report = typewise_accuracy(&direct, &enhanced, &gold)?;
            let path = ctx.out(&out, "typewise.json");
            write_file(&path, report.to_json())?;
            let table = report.to_table();
            write_file(&sibling(&path, "txt"), &table)?;
            print!("{table}");
        }
        Command::Continual { stages, gold, out } => {
            let mut named: Vec<(String, PathBuf)> = stages
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(n, p)| (n.to_string(), PathBuf::from(p)))
                        .ok_or_else(|| anyhow!("--stage expects name=path, got {s:?}"))
                })
                .collect::<Result<_>>()?;
            if named.is_empty() {
                if let Some(c) = &ctx.cfg.continual {
                    named = c.stages.iter().map(|s| (s.name.clone(), s.predictions.clone())).collect();
                }
            }
            let gold_path = gold.or_else(|| ctx.cfg.continual.as_ref().map(|c| c.gold.clone()));
            let gold = ctx.split(Role::Target, "test", &gold_path)?;
            let mut snapshots = Vec::with_capacity(named.len());
            for (name, path) in named {
                let bytes = std::fs::read(&path).with_context(|| format!("stage {name}: reading {}", path.display()))?;
                snapshots.push((name, read_predictions(&bytes)?));
            }
            let curve = continual_curve(&snapshots, &gold)?;
            let path = ctx.out(&out, "curve.csv");
            write_file(&path, curve.to_csv())?;
            let mut json = serde_json::to_string_pretty(&curve)?;
            json.push('\n');
            write_file(&sibling(&path, "json"), json)?;
            print!("{}", curve.to_csv());
        }
    }
    Ok(())
}
