//! Experiment configuration: a single JSON document plus `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use fairfed_core::adapter::{AdapterConfig, SInit, Variant};
use fairfed_core::data::{AttributeSchema, SiteSpec, SyntheticSpec, DEFAULT_SPLIT};
use fairfed_core::federation::{FederationConfig, LrSchedule};
use fairfed_core::metrics::DEFAULT_THRESHOLD;
use fairfed_core::model::DEFAULT_TAU;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// A JSONL dataset; relative paths resolve against the config file.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    /// Embedding width of the frozen projection.
    pub m: usize,
    /// Input width; defaults to the dataset's feature dimension.
    pub n: Option<usize>,
    pub tau: f64,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            m: 16,
            n: None,
            tau: DEFAULT_TAU,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterSection {
    pub variant: Variant,
    pub rank: usize,
    pub lora_alpha: f64,
    pub s_init: SInit,
    /// Must equal `backbone.m` when given.
    pub out_dim: Option<usize>,
    /// Must equal the feature dimension when given.
    pub in_dim: Option<usize>,
}

impl Default for AdapterSection {
    fn default() -> Self {
        Self {
            variant: Variant::FairLora,
            rank: 12,
            lora_alpha: 2.0,
            s_init: SInit::HalfHalfCyclic,
            out_dim: None,
            in_dim: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicyKind {
    #[default]
    OracleGroup,
    PopulationMixture,
}

impl GatePolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GatePolicyKind::OracleGroup => "oracle_group",
            GatePolicyKind::PopulationMixture => "population_mixture",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub threshold: f64,
    pub gate_policy: GatePolicyKind,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            gate_policy: GatePolicyKind::OracleGroup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Federated,
    LocalOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Federated => "federated",
            Mode::LocalOnly => "local_only",
        }
    }
}

/// Axes swept by `compare`. An empty list means "use the base setting".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub variants: Vec<Variant>,
    pub modes: Vec<Mode>,
    pub s_inits: Vec<SInit>,
    pub gate_policies: Vec<GatePolicyKind>,
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub schema: AttributeSchema,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub adapter: AdapterSection,
    #[serde(default)]
    pub federation: FederationConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub compare: CompareConfig,
}

/// The three-site, three-group synthetic benchmark used throughout the tests.
pub fn default_benchmark() -> ExperimentConfig {
    let proportions = [[0.2, 0.2, 0.6], [0.1, 0.3, 0.6], [0.05, 0.15, 0.8]];
    ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSpec {
            feature_dim: 32,
            sites: proportions
                .iter()
                .map(|p| SiteSpec {
                    n_samples: 900,
                    group_proportions: p.to_vec(),
                    positive_rate: 0.5,
                    label_noise: 0.05,
                })
                .collect(),
            signal_strength: 1.0,
            group_shift_scale: 1.0,
            noise_sigma: 1.0,
            direction_sharing: 0.5,
            seed: 2025,
        }),
        schema: AttributeSchema {
            name: "race".into(),
            groups: vec!["Asian".into(), "Black".into(), "White".into()],
        },
        backbone: BackboneConfig::default(),
        adapter: AdapterSection::default(),
        federation: FederationConfig {
            lr: LrSchedule {
                initial: 1.0,
                ..LrSchedule::default()
            },
            ..FederationConfig::default()
        },
        metrics: MetricsConfig::default(),
        split: DEFAULT_SPLIT,
        seeds: vec![1, 2, 3, 4, 5],
        output_dir: default_output_dir(),
        compare: CompareConfig {
            variants: vec![Variant::Lora, Variant::FairLora],
            modes: vec![Mode::Federated, Mode::LocalOnly],
            s_inits: vec![],
            gate_policies: vec![
                GatePolicyKind::OracleGroup,
                GatePolicyKind::PopulationMixture,
            ],
        },
    }
}

/// Applies `a.b.c=value` to a JSON tree. The value is parsed as JSON when it
/// can be and taken as a string otherwise; numeric segments index arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set {assignment:?}: expected key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::config(format!(
            "--set {assignment:?}: empty key segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        let path = segments[..=depth].join(".");
        node = match node {
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    CliError::config(format!("--set {path}: expected an array index"))
                })?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| {
                    CliError::config(format!("--set {path}: index out of range (length {len})"))
                })?
            }
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => {
                return Err(CliError::config(format!(
                    "--set {path}: parent is not an object or array"
                )))
            }
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    unreachable!("loop returns on the last segment")
}

impl ExperimentConfig {
    /// Parses a config from JSON text, applying overrides in order. Relative
    /// data paths resolve against `base_dir`.
    pub fn from_json(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut root: Value = serde_json::from_str(text)
            .map_err(|e| CliError::config(format!("config is not valid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(format!("config {path}: {}", e.into_inner()))
        })?;
        if let DataSource::Path(p) = &mut cfg.data {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, overrides, base)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Feature dimension declared by the config, when it can be known
    /// without reading the dataset.
    fn declared_feature_dim(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic(spec) => Some(spec.feature_dim),
            DataSource::Path(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.schema
            .validate()
            .map_err(|e| CliError::config(format!("schema: {e}")))?;
        match &self.data {
            DataSource::Synthetic(spec) => spec
                .validate(self.schema.num_groups())
                .map_err(|e| CliError::config(format!("data.synthetic.{}", strip_kind(&e))))?,
            DataSource::Path(p) => {
                if !p.is_file() {
                    return bad(format!("data.path: {} does not exist", p.display()));
                }
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad(format!("seeds[{i}]: duplicate seed {s}"));
            }
        }
        if self.backbone.m == 0 {
            return bad("backbone.m: must be positive".into());
        }
        if !(self.backbone.tau.is_finite() && self.backbone.tau > 0.0) {
            return bad("backbone.tau: must be positive and finite".into());
        }
        if let Some(d) = self.declared_feature_dim() {
            self.check_feature_dim(d)?;
        }
        if let Some(out) = self.adapter.out_dim {
            if out != self.backbone.m {
                return bad(format!(
                    "adapter.out_dim: {out} does not match backbone.m = {}",
                    self.backbone.m
                ));
            }
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return bad(format!(
                "split: ratios must be non-negative and sum to 1, got {:?}",
                self.split
            ));
        }
        if !(self.metrics.threshold > 0.0 && self.metrics.threshold < 1.0) {
            return bad("metrics.threshold: must be in (0, 1)".into());
        }
        self.federation
            .validate()
            .map_err(|e| CliError::config(strip_kind(&e)))?;
        // Dimension checks run against the declared or configured widths; the
        // dataset width is checked again once a file has been read.
        let n = self
            .declared_feature_dim()
            .or(self.backbone.n)
            .or(self.adapter.in_dim)
            .unwrap_or(self.adapter.rank.max(1));
        self.adapter_config(n)
            .validate()
            .map_err(|e| CliError::config(format!("adapter: {}", strip_kind(&e))))?;
        Ok(())
    }

    /// Cross-checks every configured input width against the data.
    pub fn check_feature_dim(&self, feature_dim: usize) -> Result<()> {
        for (field, value) in [
            ("backbone.n", self.backbone.n),
            ("adapter.in_dim", self.adapter.in_dim),
        ] {
            if let Some(v) = value {
                if v != feature_dim {
                    return Err(CliError::config(format!(
                        "{field}: {v} does not match the data feature_dim {feature_dim}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn adapter_config(&self, feature_dim: usize) -> AdapterConfig {
        AdapterConfig {
            variant: self.adapter.variant,
            rank: self.adapter.rank,
            lora_alpha: self.adapter.lora_alpha,
            out_dim: self.backbone.m,
            in_dim: feature_dim,
            num_groups: self.schema.num_groups(),
            s_init: self.adapter.s_init,
        }
    }
}

/// Core error text without the "invalid configuration: " style prefix.
fn strip_kind(err: &fairfed_core::Error) -> String {
    use fairfed_core::Error as E;
    match err {
        E::InvalidArgument(m) | E::InvalidConfig(m) | E::Numeric(m) | E::UndefinedMetric(m) => {
            m.clone()
        }
    }
}
