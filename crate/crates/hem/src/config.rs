//! Run configuration: defaults, task presets, JSON config files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use hem_core::{Capacity, ModelConfig, PipelineConfig, SamplingScheme, SimilaritySource};
use serde::{Deserialize, Serialize};

/// Event-count presets per task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Vqa,
    Caption,
    Coin,
    Breakfast,
}

impl Preset {
    pub fn num_events(self) -> usize {
        match self {
            Preset::Vqa => 2,
            Preset::Caption | Preset::Coin => 3,
            Preset::Breakfast => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Source {
    #[default]
    #[serde(alias = "raw_avgpool")]
    #[value(name = "raw")]
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "feat_avg", alias = "feature_avgpool")]
    #[value(name = "feat_avg")]
    FeatAvg,
    #[serde(rename = "feat_cls", alias = "feature_cls")]
    #[value(name = "feat_cls")]
    FeatCls,
}

impl From<Source> for SimilaritySource {
    fn from(s: Source) -> Self {
        match s {
            Source::Raw => SimilaritySource::RawAvgpool,
            Source::FeatAvg => SimilaritySource::FeatureAvgpool,
            Source::FeatCls => SimilaritySource::FeatureCls,
        }
    }
}

/// Sampling scheme, `1` (max-length, default) or `2` (average split).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scheme {
    #[default]
    One,
    Two,
}

impl TryFrom<u8> for Scheme {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Scheme::One),
            2 => Ok(Scheme::Two),
            _ => Err(format!("scheme must be 1 or 2, got {v}")),
        }
    }
}

impl From<Scheme> for u8 {
    fn from(s: Scheme) -> u8 {
        match s {
            Scheme::One => 1,
            Scheme::Two => 2,
        }
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<u8>().map_err(|e| e.to_string())?.try_into()
    }
}

impl From<Scheme> for SamplingScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::One => SamplingScheme::MaxLength,
            Scheme::Two => SamplingScheme::AverageSplit,
        }
    }
}

/// Global memory capacity: a block count, or `"inf"` for unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CapValue", into = "CapValue")]
pub struct Cap(pub Capacity);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CapValue {
    Blocks(usize),
    Word(String),
}

impl TryFrom<CapValue> for Cap {
    type Error = String;
    fn try_from(v: CapValue) -> Result<Self, String> {
        match v {
            CapValue::Blocks(n) => Ok(Cap(Capacity::Blocks(n))),
            CapValue::Word(w) => w.parse(),
        }
    }
}

impl From<Cap> for CapValue {
    fn from(c: Cap) -> Self {
        match c.0 {
            Capacity::Blocks(n) => CapValue::Blocks(n),
            Capacity::Unbounded => CapValue::Word("inf".into()),
        }
    }
}

impl FromStr for Cap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inf" | "unbounded" | "none" => Ok(Cap(Capacity::Unbounded)),
            n => n
                .parse()
                .map(|n| Cap(Capacity::Blocks(n)))
                .map_err(|_| format!("invalid capacity {n:?}; expected a block count or \"inf\"")),
        }
    }
}

impl fmt::Display for Cap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Capacity::Blocks(n) => write!(f, "{n}"),
            Capacity::Unbounded => f.write_str("inf"),
        }
    }
}

impl Default for Cap {
    fn default() -> Self {
        Cap(Capacity::Blocks(Capacity::DEFAULT_BLOCKS))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_events: usize,
    pub source: Source,
    pub scheme: Scheme,
    pub global_memory_cap: Cap,
    pub d: usize,
    pub p: usize,
    pub q: usize,
    pub heads: usize,
    pub classes: usize,
    pub seed: u64,
    /// Class index for the toy head loss; no loss is reported without one.
    pub target: Option<usize>,
    pub preset: Option<Preset>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let pipeline = PipelineConfig::default();
        Self {
            num_events: pipeline.num_events,
            source: Source::Raw,
            scheme: Scheme::One,
            global_memory_cap: Cap(pipeline.capacity),
            d: model.dim,
            p: model.tokens_per_frame,
            q: model.queries,
            heads: model.heads,
            classes: model.classes,
            seed: model.seed,
            target: None,
            preset: None,
            input: None,
            output: None,
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub events: Option<usize>,
    pub scheme: Option<Scheme>,
    pub source: Option<Source>,
    pub cap: Option<Cap>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub target: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // A preset in the file applies only when the file leaves num_events unset.
        if let Some(preset) = config.preset {
            let raw: serde_json::Value = serde_json::from_str(&text)?;
            if raw.get("num_events").is_none() {
                config.num_events = preset.num_events();
            }
        }
        Ok(config)
    }

    /// Defaults, then the config file, then the preset flag, then individual flags.
    pub fn resolve(file: Option<&Path>, overrides: Overrides) -> anyhow::Result<Self> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(preset) = overrides.preset {
            config.preset = Some(preset);
            config.num_events = preset.num_events();
        }
        macro_rules! apply {
            ($($field:ident <- $flag:ident),* $(,)?) => {
                $(if let Some(v) = overrides.$flag { config.$field = v; })*
            };
        }
        apply!(
            num_events <- events,
            scheme <- scheme,
            source <- source,
            global_memory_cap <- cap,
            seed <- seed,
        );
        if overrides.input.is_some() {
            config.input = overrides.input;
        }
        if overrides.output.is_some() {
            config.output = overrides.output;
        }
        if overrides.target.is_some() {
            config.target = overrides.target;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.num_events == 0 {
            bail!("num_events must be at least 1");
        }
        self.model().validate()?;
        if let Some(t) = self.target {
            if t >= self.classes {
                bail!("target {t} out of range for {} classes", self.classes);
            }
        }
        for (name, path) in [("input", &self.input), ("output", &self.output)] {
            if path.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                bail!("{name} path is empty");
            }
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            dim: self.d,
            tokens_per_frame: self.p,
            queries: self.q,
            heads: self.heads,
            classes: self.classes,
            seed: self.seed,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            num_events: self.num_events,
            source: self.source.into(),
            capacity: self.global_memory_cap.0,
        }
    }
}
