//! Run configuration, read from a TOML document. Every key is optional;
//! omitted keys take the defaults below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MixTarget, OptionStyle};
use crate::llm::{ModelPrice, PriceTable, RateLimit, RetryPolicy};
use crate::prompts::{KnowledgeCategorySet, PromptFamily, OKVQA_CATEGORIES};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid config at `{key}`: {reason}")]
pub struct ConfigInvalid {
    pub key: String,
    pub reason: String,
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigInvalid {
    ConfigInvalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Flickr30kEntities,
    VisualGenome,
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub format: CorpusFormat,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub cross_modal: Option<CorpusSource>,
    pub outside_knowledge: Option<CorpusSource>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReformulationMode {
    /// Converted records take the place of their open-ended sources.
    #[default]
    Replace,
    /// Sources are kept next to their converted copies.
    KeepBoth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReformulationConfig {
    pub bool: f64,
    pub multi_choice: f64,
    pub mode: ReformulationMode,
}

impl Default for ReformulationConfig {
    fn default() -> Self {
        ReformulationConfig {
            bool: 0.25,
            multi_choice: 0.25,
            mode: ReformulationMode::Replace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub cross_modal: u64,
    pub outside_knowledge: u64,
    /// Dataset size after mixing; unset keeps every record.
    pub total: Option<usize>,
}

impl Default for MixConfig {
    fn default() -> Self {
        let t = MixTarget::default();
        MixConfig {
            cross_modal: t.cross_modal,
            outside_knowledge: t.outside_knowledge,
            total: None,
        }
    }
}

impl MixConfig {
    pub fn target(&self) -> MixTarget {
        MixTarget {
            cross_modal: self.cross_modal,
            outside_knowledge: self.outside_knowledge,
        }
    }
}

/// Model used by each pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageModels {
    pub synthesis: String,
    pub complication: String,
    pub verification: String,
    pub reformulation: String,
}

impl Default for StageModels {
    fn default() -> Self {
        StageModels {
            synthesis: "gpt-4".into(),
            complication: "gpt-4".into(),
            verification: "gpt-3.5-turbo".into(),
            reformulation: "gpt-3.5-turbo".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodingConfig {
    pub synthesis_temperature: f64,
    pub complication_temperature: f64,
    pub verification_temperature: f64,
    pub reformulation_temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            synthesis_temperature: 1.0,
            complication_temperature: 1.0,
            verification_temperature: 0.0,
            reformulation_temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub rate_limit: Option<RateLimit>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            rate_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnowledgeConfig {
    pub categories: Vec<String>,
    pub per_prompt: usize,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            categories: OKVQA_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            per_prompt: 2,
        }
    }
}

fn default_prices() -> PriceTable {
    PriceTable::from([
        ("gpt-4".to_string(), ModelPrice { prompt: 0.03, completion: 0.06 }),
        ("gpt-3.5-turbo".to_string(), ModelPrice { prompt: 0.0015, completion: 0.002 }),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run_id: Option<String>,
    pub seed: u64,
    pub caption_char_min: usize,
    pub object_count_max: usize,
    pub complication_rounds: u32,
    pub cross_modal_per_image: usize,
    pub outside_knowledge_per_image: usize,
    pub concurrency_limit: usize,
    /// Re-ask once when a generation does not parse.
    pub reask_on_parse_failure: bool,
    pub corpus: CorpusConfig,
    pub reformulation: ReformulationConfig,
    pub mix: MixConfig,
    pub knowledge: KnowledgeConfig,
    pub models: StageModels,
    pub decoding: DecodingConfig,
    pub provider: ProviderConfig,
    pub prices: PriceTable,
    pub templates: BTreeMap<PromptFamily, PathBuf>,
    pub option_style: OptionStyle,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run_id: None,
            seed: 0,
            caption_char_min: 700,
            object_count_max: 7,
            complication_rounds: 2,
            cross_modal_per_image: 3,
            outside_knowledge_per_image: 1,
            concurrency_limit: 4,
            reask_on_parse_failure: true,
            corpus: CorpusConfig::default(),
            reformulation: ReformulationConfig::default(),
            mix: MixConfig::default(),
            knowledge: KnowledgeConfig::default(),
            models: StageModels::default(),
            decoding: DecodingConfig::default(),
            provider: ProviderConfig::default(),
            prices: default_prices(),
            templates: BTreeMap::new(),
            option_style: OptionStyle::Dot,
        }
    }
}

/// Integer keys that must not be negative, checked before typed decoding so
/// the error can name the key.
const NON_NEGATIVE_KEYS: &[&str] = &[
    "seed",
    "caption_char_min",
    "object_count_max",
    "complication_rounds",
    "cross_modal_per_image",
    "outside_knowledge_per_image",
    "concurrency_limit",
    "mix.cross_modal",
    "mix.outside_knowledge",
    "mix.total",
    "knowledge.per_prompt",
    "decoding.max_tokens",
    "provider.timeout_secs",
    "provider.retry.max_attempts",
    "provider.retry.base_delay_ms",
    "provider.retry.jitter_seed",
    "provider.rate_limit.capacity",
];

fn lookup<'a>(root: &'a toml::Value, key: &str) -> Option<&'a toml::Value> {
    key.split('.').try_fold(root, |v, part| v.get(part))
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigInvalid> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| invalid("<document>", e.message()))?;
        for key in NON_NEGATIVE_KEYS {
            if let Some(v) = lookup(&raw, key).and_then(toml::Value::as_integer) {
                if v < 0 {
                    return Err(invalid(key, format!("must be >= 0, got {v}")));
                }
            }
        }
        let config: PipelineConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("<document>")
                .to_string();
            invalid(&key, msg)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if self.cross_modal_per_image == 0 {
            return Err(invalid("cross_modal_per_image", "must be >= 1"));
        }
        if self.outside_knowledge_per_image == 0 {
            return Err(invalid("outside_knowledge_per_image", "must be >= 1"));
        }
        if self.concurrency_limit == 0 {
            return Err(invalid("concurrency_limit", "must be >= 1"));
        }
        let r = &self.reformulation;
        for (key, v) in [("reformulation.bool", r.bool), ("reformulation.multi_choice", r.multi_choice)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, format!("fraction must be in [0, 1], got {v}")));
            }
        }
        if r.bool + r.multi_choice > 1.0 {
            return Err(invalid("reformulation", "bool + multi_choice must not exceed 1"));
        }
        if self.mix.cross_modal + self.mix.outside_knowledge == 0 {
            return Err(invalid("mix", "target ratio must have a positive weight"));
        }
        KnowledgeCategorySet::new(self.knowledge.categories.clone(), self.knowledge.per_prompt)
            .map_err(|e| invalid("knowledge", e))?;
        let d = &self.decoding;
        for (key, t) in [
            ("decoding.synthesis_temperature", d.synthesis_temperature),
            ("decoding.complication_temperature", d.complication_temperature),
            ("decoding.verification_temperature", d.verification_temperature),
            ("decoding.reformulation_temperature", d.reformulation_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(invalid(key, format!("temperature must be in [0, 2], got {t}")));
            }
        }
        if d.max_tokens == 0 {
            return Err(invalid("decoding.max_tokens", "must be >= 1"));
        }
        if self.provider.retry.max_attempts == 0 {
            return Err(invalid("provider.retry.max_attempts", "must be >= 1"));
        }
        if let Some(rl) = &self.provider.rate_limit {
            if rl.capacity == 0 || rl.refill_per_second <= 0.0 {
                return Err(invalid("provider.rate_limit", "capacity and refill rate must be positive"));
            }
        }
        let m = &self.models;
        for (key, model) in [
            ("models.synthesis", &m.synthesis),
            ("models.complication", &m.complication),
            ("models.verification", &m.verification),
            ("models.reformulation", &m.reformulation),
        ] {
            if !self.prices.contains_key(model) {
                return Err(invalid(key, format!("model {model:?} has no entry under [prices]")));
            }
        }
        Ok(())
    }

    pub fn knowledge_set(&self) -> KnowledgeCategorySet {
        KnowledgeCategorySet::new(self.knowledge.categories.clone(), self.knowledge.per_prompt)
            .expect("validated")
    }

    /// Makes relative corpus and template paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = self.corpus.cross_modal.as_mut() {
            fix(&mut c.path);
        }
        if let Some(c) = self.corpus.outside_knowledge.as_mut() {
            fix(&mut c.path);
        }
        for p in self.templates.values_mut() {
            fix(p);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigInvalid),
}

/// Reads a config file; relative paths inside it resolve against its directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = PipelineConfig::from_toml_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}
