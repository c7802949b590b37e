//! Run configuration: a JSON file with a schema version, overridable from the
//! command line through dotted paths. Unknown keys are rejected everywhere.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use saddleflow_core::{
    generate_dataset, BasisSpec, InitDraw, LabelSpec, OrthonormalDataset, TrainerConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: DatasetSource,
    pub init: InitSpec,
    pub trainer: TrainerConfig,
    /// Fail on zero labels or tied jump selections instead of recording them.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DatasetSource {
    /// Load a serialized dataset from a file.
    File { file: String },
    /// Generate from a seeded recipe.
    Generate(DatasetSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n: usize,
    pub d: usize,
    pub basis: BasisSpec,
    pub labels: LabelSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Log-domain representation; any alpha_log works, e.g. -500.
    Scaled,
    /// Plain floats from the same balanced draw; alpha must be representable.
    Dense,
    /// Uniform He initialization (plain floats, no scale parameter).
    HeUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub m: usize,
    pub alpha_log: f64,
    pub seed: u64,
    pub mode: InitMode,
}

impl Default for RunConfig {
    /// The 64-point reference experiment: six neurons, labels |N(0,1)|, scale
    /// e^-500, learning rate 0.01. The init seed is one where the mask
    /// assumption holds.
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSource::Generate(DatasetSpec {
                n: 64,
                d: 64,
                basis: BasisSpec::Identity,
                labels: LabelSpec::AbsGaussian,
                seed: 0,
            }),
            init: InitSpec {
                m: 6,
                alpha_log: -500.0,
                seed: 399,
                mode: InitMode::Scaled,
            },
            trainer: TrainerConfig::default(),
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.schema_version != SCHEMA_VERSION {
            bail!(
                "config schema_version {} unsupported (expected {SCHEMA_VERSION})",
                config.schema_version
            );
        }
        Ok(config)
    }

    /// Apply `key.path=value` overrides on the JSON representation, then
    /// re-validate against the schema (so typos in paths are rejected).
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut value = serde_json::to_value(&self)?;
        for entry in overrides {
            let Some((path, raw)) = entry.split_once('=') else {
                bail!("override {entry:?} is not of the form key.path=value");
            };
            let new = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let parts: Vec<&str> = path.split('.').collect();
            set_path(&mut value, &parts, new)
                .with_context(|| format!("applying override {entry:?}"))?;
        }
        let config: RunConfig =
            serde_json::from_value(value).context("config invalid after overrides")?;
        Ok(config)
    }

    pub fn dataset(&self) -> Result<OrthonormalDataset> {
        match &self.dataset {
            DatasetSource::File { file } => {
                let text = std::fs::read_to_string(file)
                    .with_context(|| format!("reading dataset {file}"))?;
                Ok(serde_json::from_str(&text)?)
            }
            DatasetSource::Generate(spec) => Ok(generate_dataset(
                spec.n,
                spec.d,
                &spec.labels,
                spec.basis,
                spec.seed,
            )?),
        }
    }

    pub fn init_draw(&self, d: usize) -> InitDraw {
        saddleflow_core::sample_init(self.init.m, d, self.init.alpha_log, self.init.seed)
    }
}

fn set_path(value: &mut serde_json::Value, parts: &[&str], new: serde_json::Value) -> Result<()> {
    let Some((first, rest)) = parts.split_first() else {
        bail!("empty key path");
    };
    let map = value
        .as_object_mut()
        .with_context(|| format!("{first:?} does not address an object"))?;
    if rest.is_empty() {
        map.insert((*first).to_string(), new);
        Ok(())
    } else {
        let child = map
            .entry((*first).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
        set_path(child, rest, new)
    }
}
