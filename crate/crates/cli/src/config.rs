//! Declarative pipeline manifest (TOML). Relative paths resolve against the
//! manifest's directory; command-line flags override manifest values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub source: Option<DatasetConfig>,
    pub target: Option<DatasetConfig>,
    #[serde(default)]
    pub alignment: AlignmentConfig,
    pub source_tagger: Option<TaggerConfig>,
    pub target_tagger: Option<TaggerConfig>,
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub continual: Option<ContinualConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// `auto`, `two_col` or `last_col`; ignored for JSONL files.
    pub format: Option<String>,
    pub types: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    pub tau: Option<f64>,
    #[serde(rename = "match")]
    pub match_mode: Option<String>,
    pub misc_label: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggerConfig {
    pub url: Option<String>,
    /// JSONL `{"id", "label_text"}` script for an in-process scripted tagger.
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub url: Option<String>,
    pub model: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub only_types: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualConfig {
    pub gold: PathBuf,
    pub stages: Vec<StageConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub predictions: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.out_dir {
            fix(p);
        }
        for ds in [&mut self.source, &mut self.target].into_iter().flatten() {
            for p in [&mut ds.train, &mut ds.dev, &mut ds.test].into_iter().flatten() {
                fix(p);
            }
        }
        for t in [&mut self.source_tagger, &mut self.target_tagger].into_iter().flatten() {
            if let Some(p) = &mut t.script {
                fix(p);
            }
        }
        if let Some(p) = self.llm.as_mut().and_then(|l| l.cache_dir.as_mut()) {
            fix(p);
        }
        if let Some(c) = &mut self.continual {
            fix(&mut c.gold);
            for s in &mut c.stages {
                fix(&mut s.predictions);
            }
        }
    }

    /// Referenced input files must exist and inventories must be non-empty.
    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path, what: &str| -> Result<()> {
            if !p.exists() {
                bail!("{what} {} does not exist", p.display());
            }
            Ok(())
        };
        for (role, ds) in [("source", &self.source), ("target", &self.target)] {
            let Some(ds) = ds else { continue };
            for (split, p) in [("train", &ds.train), ("dev", &ds.dev), ("test", &ds.test)] {
                if let Some(p) = p {
                    must_exist(p, &format!("{role} {split} file"))?;
                }
            }
            if ds.types.as_ref().is_some_and(|t| t.is_empty()) {
                bail!("{role} type inventory is empty");
            }
        }
        for (role, t) in [("source_tagger", &self.source_tagger), ("target_tagger", &self.target_tagger)] {
            if let Some(p) = t.as_ref().and_then(|t| t.script.as_ref()) {
                must_exist(p, &format!("{role} script"))?;
            }
        }
        if let Some(c) = &self.continual {
            must_exist(&c.gold, "continual gold file")?;
            for s in &c.stages {
                must_exist(&s.predictions, &format!("stage {} predictions", s.name))?;
            }
        }
        if let Some(tau) = self.alignment.tau {
            if !(0.0..=1.0).contains(&tau) {
                bail!("alignment.tau {tau} is outside [0, 1]");
            }
        }
        Ok(())
    }
}
