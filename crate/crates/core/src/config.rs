//! Application configuration: a TOML file validated against a fully
//! defaulted schema, dotted-key overrides, a canonical config hash, and the
//! seed-derivation rule that fans the master seed out to every randomized
//! component.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeatureSet, SplitKind};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_KS;
use crate::mlp::TrainConfig;

/// Beam codebook and antenna-array settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub num_elements: usize,
    pub element_spacing_wavelengths: f64,
    pub num_beams: usize,
    pub fov_sine_half_width: f64,
}

impl Default for CodebookSection {
    fn default() -> Self {
        CodebookSection {
            num_elements: 16,
            element_spacing_wavelengths: 0.5,
            num_beams: 64,
            fov_sine_half_width: 0.866,
        }
    }
}

/// Received-power noise settings for the synthetic sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub noiseless: bool,
    pub snr_db: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            noiseless: true,
            snr_db: 30.0,
        }
    }
}

/// Serpentine sweep over a rectangle, repeated at each height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawnmowerSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub passes: usize,
    pub heights: Vec<f64>,
}

impl Default for LawnmowerSection {
    fn default() -> Self {
        LawnmowerSection {
            x_min: -40.0,
            x_max: 40.0,
            y_min: 20.0,
            y_max: 60.0,
            passes: 20,
            heights: vec![10.0, 40.0, 70.0, 100.0],
        }
    }
}

impl LawnmowerSection {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(Error::config("lawnmower rectangle must have positive area"));
        }
        if self.passes < 2 {
            return Err(Error::config("lawnmower needs at least 2 passes"));
        }
        if self.heights.is_empty() {
            return Err(Error::config("lawnmower needs at least one height"));
        }
        if self.heights.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return Err(Error::config("lawnmower heights must be positive"));
        }
        Ok(())
    }

    /// Waypoints of the serpentine sweep: straight passes alternating in x
    /// across evenly spaced rows of y, one full sweep per height.
    pub fn waypoints(&self) -> Vec<[f64; 3]> {
        let mut points = Vec::new();
        for &z in &self.heights {
            for row in 0..self.passes {
                let y = self.y_min
                    + (self.y_max - self.y_min) * row as f64 / (self.passes - 1) as f64;
                let (from, to) = if row % 2 == 0 {
                    (self.x_min, self.x_max)
                } else {
                    (self.x_max, self.x_min)
                };
                points.push([from, y, z]);
                points.push([to, y, z]);
            }
        }
        points
    }
}

/// Flight scenario and sensor settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub speed_range: [f64; 2],
    pub height_range: [f64; 2],
    pub sample_rate_hz: f64,
    pub gps_noise_sigma_m: f64,
    pub anchor_lat_deg: f64,
    pub anchor_lon_deg: f64,
    /// Explicit waypoints (east, north, up in meters); when empty the
    /// lawnmower pattern below is used.
    pub waypoints: Vec<[f64; 3]>,
    pub lawnmower: LawnmowerSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            speed_range: [2.0, 10.0],
            height_range: [10.0, 100.0],
            sample_rate_hz: 10.0,
            gps_noise_sigma_m: 2.5,
            anchor_lat_deg: 33.427,
            anchor_lon_deg: -111.939,
            waypoints: Vec::new(),
            lawnmower: LawnmowerSection::default(),
        }
    }
}

impl ScenarioSection {
    /// The waypoints actually flown: explicit ones when given, otherwise the
    /// expanded lawnmower sweep.
    pub fn effective_waypoints(&self) -> Result<Vec<[f64; 3]>> {
        if self.waypoints.is_empty() {
            self.lawnmower.validate()?;
            Ok(self.lawnmower.waypoints())
        } else {
            Ok(self.waypoints.clone())
        }
    }
}

/// Sky-facing camera settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub horizontal_fov_deg: f64,
    pub vertical_fov_deg: f64,
    pub reference_size_m: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        CameraSection {
            horizontal_fov_deg: 120.0,
            vertical_fov_deg: 120.0,
            reference_size_m: 1.0,
        }
    }
}

/// Dataset assembly settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub num_samples: usize,
    pub feature_set: FeatureSet,
    pub train_fraction: f64,
    pub split: SplitKind,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            num_samples: 12004,
            feature_set: FeatureSet::Position,
            train_fraction: 0.70,
            split: SplitKind::Random,
        }
    }
}

/// Classifier and optimizer settings (the seed is derived, not configured).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let cfg = TrainConfig::default();
        TrainSection {
            hidden: vec![512, 512],
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            decay_epochs: cfg.decay_epochs,
            decay_factor: cfg.decay_factor,
            epochs: cfg.epochs,
            adam_beta1: cfg.adam_beta1,
            adam_beta2: cfg.adam_beta2,
            adam_epsilon: cfg.adam_epsilon,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            decay_epochs: self.decay_epochs.clone(),
            decay_factor: self.decay_factor,
            epochs: self.epochs,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            seed,
        }
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

/// The complete application configuration. Every field has a default, so an
/// empty TOML file is the default run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub master_seed: u64,
    /// Active codebook size the dataset is labeled against (32 or 64).
    pub q: usize,
    pub codebook: CodebookSection,
    pub link: LinkSection,
    pub scenario: ScenarioSection,
    pub camera: CameraSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            master_seed: 1,
            q: 64,
            codebook: CodebookSection::default(),
            link: LinkSection::default(),
            scenario: ScenarioSection::default(),
            camera: CameraSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.q, 32 | 64) {
            return Err(Error::config(format!("q must be 32 or 64, got {}", self.q)));
        }
        if self.codebook.num_beams < self.q || self.codebook.num_beams % self.q != 0 {
            return Err(Error::config(format!(
                "num_beams ({}) must be a multiple of q ({})",
                self.codebook.num_beams, self.q
            )));
        }
        if self.dataset.num_samples < 10 {
            return Err(Error::config("num_samples must be at least 10"));
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must be in (0, 1)"));
        }
        if self.eval.ks.is_empty() {
            return Err(Error::config("eval.ks must not be empty"));
        }
        if self.eval.ks.iter().any(|&k| k == 0 || k > self.q) {
            return Err(Error::config(format!(
                "every eval k must be in 1..={}",
                self.q
            )));
        }
        self.scenario.effective_waypoints()?;
        self.to_train_config_template().validate()?;
        Ok(())
    }

    fn to_train_config_template(&self) -> TrainConfig {
        self.train.to_train_config(0)
    }

    /// Canonical 16-hex-digit digest of the effective configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed for one named component, derived from the master seed. Component
/// names in use: `trajectory`, `sensor`, `channel`, `noise`, `split`,
/// `train`, `init`.
pub fn derive_seed(master_seed: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(component.as_bytes());
    hasher.update(master_seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 8+ bytes"))
}

fn default_value() -> toml::Value {
    toml::Value::try_from(AppConfig::default()).expect("default config serializes")
}

/// Merge `file` over `base` recursively: tables merge key-wise, everything
/// else is replaced. Keys present only in `file` are kept (and rejected
/// later by schema validation).
fn merge(base: &mut toml::Value, file: toml::Value) {
    match (base, file) {
        (toml::Value::Table(base_table), toml::Value::Table(file_table)) => {
            for (key, file_value) in file_table {
                match base_table.get_mut(&key) {
                    Some(base_value) => merge(base_value, file_value),
                    None => {
                        base_table.insert(key, file_value);
                    }
                }
            }
        }
        (base_slot, file_value) => *base_slot = file_value,
    }
}

/// Parse a TOML config text into the full (defaults-backed) value tree.
pub fn parse_config(text: &str) -> Result<toml::Value> {
    let file: toml::Value = text
        .parse()
        .map_err(|e| Error::config(format!("bad config: {e}")))?;
    let mut tree = default_value();
    merge(&mut tree, file);
    Ok(tree)
}

pub fn load_config(path: &Path) -> Result<toml::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// The defaults-only tree (no config file given).
pub fn default_config_value() -> toml::Value {
    default_value()
}

/// Apply one `key=value` override to the tree. The dotted key must name an
/// existing leaf; the value is parsed to the leaf's TOML type.
pub fn apply_override(tree: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let mut slot = tree;
    for part in key.split('.') {
        slot = match slot {
            toml::Value::Table(table) => table.get_mut(part).ok_or_else(|| {
                Error::config(format!(
                    "unknown config key `{key}` (run with --help to list keys)"
                ))
            })?,
            _ => {
                return Err(Error::config(format!(
                    "config key `{key}` descends into a non-table value"
                )))
            }
        };
    }
    let parsed = parse_override_value(slot, raw)
        .ok_or_else(|| Error::config(format!("cannot parse `{raw}` for config key `{key}`")))?;
    *slot = parsed;
    Ok(())
}

fn parse_override_value(current: &toml::Value, raw: &str) -> Option<toml::Value> {
    match current {
        toml::Value::Boolean(_) => raw.parse().ok().map(toml::Value::Boolean),
        toml::Value::Integer(_) => raw.parse().ok().map(toml::Value::Integer),
        toml::Value::Float(_) => raw.parse().ok().map(toml::Value::Float),
        toml::Value::String(_) => Some(toml::Value::String(
            raw.trim_matches('"').to_string(),
        )),
        toml::Value::Array(_) => {
            let doc: toml::Value = format!("v = {raw}").parse().ok()?;
            let value = doc.get("v")?.clone();
            matches!(value, toml::Value::Array(_)).then_some(value)
        }
        _ => None,
    }
}

/// Deserialize the merged tree into the typed config, rejecting unknown
/// keys, then run semantic validation.
pub fn finalize(tree: toml::Value) -> Result<AppConfig> {
    let cfg: AppConfig = tree
        .try_into()
        .map_err(|e| Error::config(format!("bad config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Every overridable key (dotted paths to the leaves of the default tree),
/// sorted, with the default rendered next to each.
pub fn enumerate_keys() -> Vec<(String, String)> {
    fn walk(value: &toml::Value, prefix: &str, out: &mut Vec<(String, String)>) {
        match value {
            toml::Value::Table(table) => {
                for (key, child) in table {
                    let path = if prefix.is_empty() {
                        key.clone()
                    } else {
                        format!("{prefix}.{key}")
                    };
                    walk(child, &path, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.to_string())),
        }
    }
    let mut keys = Vec::new();
    walk(&default_value(), "", &mut keys);
    keys.sort();
    keys
}
