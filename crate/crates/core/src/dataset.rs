//! Labeled-example assembly: feature extraction per feature set, train/test
//! splitting with train-fitted min-max normalization, and CSV
//! ingest/export (including externally recorded logs via column mapping).
//!
//! Raw feature values are kept in the examples; normalization statistics are
//! fitted on the training split only and applied lazily, with test values
//! clamped to `[0, 1]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{optimal_beam, BeamLabel, PowerVector};
use crate::scenario::{SensorSample, VisualDetection};
use crate::{real, Real};

/// Which sensor columns feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Position,
    PositionHeight,
    PositionHeightDistance,
    Visual,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [
        FeatureSet::Position,
        FeatureSet::PositionHeight,
        FeatureSet::PositionHeightDistance,
        FeatureSet::Visual,
    ];

    pub fn feature_dim(&self) -> usize {
        match self {
            FeatureSet::Position => 2,
            FeatureSet::PositionHeight => 3,
            FeatureSet::PositionHeightDistance => 4,
            FeatureSet::Visual => 3,
        }
    }

    /// Raw feature vector of one sensor sample, or `None` when the set needs
    /// a visual detection the sample does not have.
    pub fn extract<T: Real>(&self, sample: &SensorSample<T>) -> Option<Vec<T>> {
        match self {
            FeatureSet::Position => Some(vec![sample.gps_lat_deg, sample.gps_lon_deg]),
            FeatureSet::PositionHeight => Some(vec![
                sample.gps_lat_deg,
                sample.gps_lon_deg,
                sample.height_m,
            ]),
            FeatureSet::PositionHeightDistance => Some(vec![
                sample.gps_lat_deg,
                sample.gps_lon_deg,
                sample.height_m,
                sample.distance_m,
            ]),
            FeatureSet::Visual => sample.visual.map(|d| vec![d.u, d.v, d.size]),
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            FeatureSet::Position => "position",
            FeatureSet::PositionHeight => "position-height",
            FeatureSet::PositionHeightDistance => "position-height-distance",
            FeatureSet::Visual => "visual",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(FeatureSet::Position),
            "position-height" => Ok(FeatureSet::PositionHeight),
            "position-height-distance" => Ok(FeatureSet::PositionHeightDistance),
            "visual" => Ok(FeatureSet::Visual),
            other => Err(Error::config(format!(
                "unknown feature set `{other}` (expected position, position-height, \
                 position-height-distance, or visual)"
            ))),
        }
    }
}

/// Raw covariates kept alongside every example for stratified evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta<T> {
    pub height_m: T,
    pub speed_mps: T,
    pub distance_m: T,
}

/// One (features, optimal beam) pair. Features are raw sensor values until a
/// normalizer is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample<T> {
    pub features: Vec<T>,
    pub label: BeamLabel,
    pub meta: ExampleMeta<T>,
}

/// Pair sensor samples with their (already downsampled) power vectors.
///
/// Returns the examples and the number of samples dropped because the
/// feature set required an absent visual detection. An all-absent input
/// yields an empty list with the full drop count.
pub fn build_examples<T: Real>(
    samples: &[SensorSample<T>],
    powers: &[PowerVector<T>],
    fs: FeatureSet,
) -> Result<(Vec<LabeledExample<T>>, usize)> {
    if samples.len() != powers.len() {
        return Err(Error::data(format!(
            "{} sensor samples but {} power vectors",
            samples.len(),
            powers.len()
        )));
    }
    let mut examples = Vec::with_capacity(samples.len());
    let mut dropped = 0usize;
    let mut q: Option<usize> = None;
    for (sample, power) in samples.iter().zip(powers) {
        match q {
            None => q = Some(power.len()),
            Some(expected) if power.len() != expected => {
                return Err(Error::data(format!(
                    "power vector length changed from {expected} to {}",
                    power.len()
                )));
            }
            _ => {}
        }
        match fs.extract(sample) {
            None => dropped += 1,
            Some(features) => examples.push(LabeledExample {
                features,
                label: optimal_beam(power),
                meta: ExampleMeta {
                    height_m: sample.height_m,
                    speed_mps: sample.speed_mps,
                    distance_m: sample.distance_m,
                },
            }),
        }
    }
    Ok((examples, dropped))
}

/// Per-feature min-max statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    mins: Vec<T>,
    maxs: Vec<T>,
    constant: Vec<bool>,
}

impl<T: Real> Normalizer<T> {
    pub fn fit<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
        T: 'a,
    {
        let mut mins = vec![T::infinity(); dim];
        let mut maxs = vec![T::neg_infinity(); dim];
        let mut any = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::data("feature row length mismatch"));
            }
            any = true;
            for (j, v) in row.iter().enumerate() {
                mins[j] = mins[j].min(*v);
                maxs[j] = maxs[j].max(*v);
            }
        }
        if !any {
            return Err(Error::data("cannot fit a normalizer on zero rows"));
        }
        let constant = mins.iter().zip(&maxs).map(|(a, b)| a == b).collect();
        Ok(Normalizer {
            mins,
            maxs,
            constant,
        })
    }

    /// Map a raw feature row to `[0,1]^dim`. Out-of-range values clamp;
    /// constant features map to 0.5.
    pub fn apply(&self, features: &[T]) -> Vec<T> {
        features
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if self.constant[j] {
                    real(0.5)
                } else {
                    ((*v - self.mins[j]) / (self.maxs[j] - self.mins[j]))
                        .max(T::zero())
                        .min(T::one())
                }
            })
            .collect()
    }

    /// Which features were constant on the training split (mapped to 0.5).
    pub fn constant_features(&self) -> &[bool] {
        &self.constant
    }

    pub fn has_constant_feature(&self) -> bool {
        self.constant.iter().any(|c| *c)
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }
}

/// How the train/test partition was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    /// Uniform random permutation by seed.
    Random,
    /// First fraction of the original (temporal) order.
    Temporal,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitKind::Random),
            "temporal" => Ok(SplitKind::Temporal),
            other => Err(Error::config(format!(
                "unknown split kind `{other}` (expected random or temporal)"
            ))),
        }
    }
}

/// Complete, serializable description of how a dataset is partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitKind,
    /// Permutation seed; ignored (and recorded as 0) for temporal splits.
    pub seed: u64,
    pub train_fraction: f64,
}

/// Dense feature matrix plus labels, ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMatrix<T> {
    pub features: Array2<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> ExampleMatrix<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A labeled dataset with its split and normalization state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    examples: Vec<LabeledExample<T>>,
    feature_set: FeatureSet,
    q: usize,
    normalizer: Option<Normalizer<T>>,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
    split_kind: Option<SplitKind>,
    split_seed: u64,
}

impl<T: Real> Dataset<T> {
    pub fn from_examples(
        examples: Vec<LabeledExample<T>>,
        q: usize,
        feature_set: FeatureSet,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::data("dataset needs at least one example"));
        }
        let dim = feature_set.feature_dim();
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(Error::data(format!(
                    "example {i} has {} features, expected {dim}",
                    ex.features.len()
                )));
            }
            if !ex.features.iter().all(|v| v.is_finite()) {
                return Err(Error::data(format!("example {i} has non-finite features")));
            }
            if ex.label.codebook_size() != q || ex.label.index() >= q {
                return Err(Error::data(format!(
                    "example {i} labeled for a {}-beam codebook, expected {q}",
                    ex.label.codebook_size()
                )));
            }
        }
        Ok(Dataset {
            examples,
            feature_set,
            q,
            normalizer: None,
            train_indices: Vec::new(),
            test_indices: Vec::new(),
            split_kind: None,
            split_seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    pub fn examples(&self) -> &[LabeledExample<T>] {
        &self.examples
    }

    pub fn normalizer(&self) -> Option<&Normalizer<T>> {
        self.normalizer.as_ref()
    }

    pub fn split_kind(&self) -> Option<SplitKind> {
        self.split_kind
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    fn partition_sizes(&self, train_fraction: f64) -> Result<usize> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        if self.len() < 10 {
            return Err(Error::data(format!(
                "need at least 10 examples to split, have {}",
                self.len()
            )));
        }
        Ok((train_fraction * self.len() as f64).floor() as usize)
    }

    fn fit_normalizer(&mut self) -> Result<()> {
        let rows = self
            .train_indices
            .iter()
            .map(|&i| self.examples[i].features.as_slice());
        self.normalizer = Some(Normalizer::fit(rows, self.feature_set.feature_dim())?);
        Ok(())
    }

    /// Randomly partition into train/test by seed and fit the normalizer on
    /// the training portion. The first `floor(train_fraction * U)` entries
    /// of the seeded permutation become the training split.
    pub fn split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        let n_train = self.partition_sizes(train_fraction)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        self.test_indices = order.split_off(n_train);
        self.train_indices = order;
        self.split_kind = Some(SplitKind::Random);
        self.split_seed = seed;
        self.fit_normalizer()
    }

    /// Temporal partition: the first `floor(train_fraction * U)` examples in
    /// original order train, the remainder tests. Stricter than a random
    /// split for trajectory data because test samples are from later flight
    /// segments.
    pub fn split_temporal(&mut self, train_fraction: f64) -> Result<()> {
        let n_train = self.partition_sizes(train_fraction)?;
        self.train_indices = (0..n_train).collect();
        self.test_indices = (n_train..self.len()).collect();
        self.split_kind = Some(SplitKind::Temporal);
        self.split_seed = 0;
        self.fit_normalizer()
    }

    /// Partition according to a [`SplitSpec`].
    pub fn apply_split(&mut self, spec: &SplitSpec) -> Result<()> {
        match spec.kind {
            SplitKind::Random => self.split(spec.train_fraction, spec.seed),
            SplitKind::Temporal => self.split_temporal(spec.train_fraction),
        }
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_indices
    }

    /// Normalized features of one example (requires a fitted split).
    pub fn normalized_features(&self, index: usize) -> Result<Vec<T>> {
        let norm = self
            .normalizer
            .as_ref()
            .ok_or_else(|| Error::data("dataset has not been split yet"))?;
        Ok(norm.apply(&self.examples[index].features))
    }

    fn matrix_of(&self, indices: &[usize]) -> Result<ExampleMatrix<T>> {
        let norm = self
            .normalizer
            .as_ref()
            .ok_or_else(|| Error::data("dataset has not been split yet"))?;
        let dim = self.feature_set.feature_dim();
        let mut features = Array2::zeros((indices.len(), dim));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let ex = &self.examples[i];
            for (col, v) in norm.apply(&ex.features).into_iter().enumerate() {
                features[(row, col)] = v;
            }
            labels.push(ex.label.index());
        }
        Ok(ExampleMatrix { features, labels })
    }

    pub fn train_matrix(&self) -> Result<ExampleMatrix<T>> {
        self.matrix_of(&self.train_indices)
    }

    pub fn test_matrix(&self) -> Result<ExampleMatrix<T>> {
        self.matrix_of(&self.test_indices)
    }

    pub fn train_meta(&self) -> Vec<ExampleMeta<T>> {
        self.train_indices
            .iter()
            .map(|&i| self.examples[i].meta)
            .collect()
    }

    pub fn test_meta(&self) -> Vec<ExampleMeta<T>> {
        self.test_indices
            .iter()
            .map(|&i| self.examples[i].meta)
            .collect()
    }
}

/// Canonical CSV column names, in file order (power columns follow).
const SCALAR_COLUMNS: [&str; 9] = [
    "time_s",
    "lat",
    "lon",
    "height_m",
    "distance_m",
    "speed_mps",
    "u",
    "v",
    "size",
];

/// Translation from canonical column names to the headers of an external
/// CSV. Keys are canonical (`time_s`, `lat`, ..., `beam_label`, or a power
/// prefix via `power_prefix`); values are the external names. Unmapped
/// canonical names fall back to themselves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// Prefix of the external per-beam power columns (`p` matches p0..p63).
    #[serde(default)]
    pub power_prefix: Option<String>,
}

impl ColumnMapping {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad column mapping: {e}")))
    }

    fn external(&self, canonical: &str) -> String {
        self.columns
            .get(canonical)
            .cloned()
            .unwrap_or_else(|| canonical.to_string())
    }

    fn power_column(&self, index: usize) -> String {
        match &self.power_prefix {
            Some(prefix) => format!("{prefix}{index}"),
            None => format!("p{index}"),
        }
    }
}

/// Everything parsed from one dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestResult<T> {
    pub times: Vec<T>,
    pub samples: Vec<SensorSample<T>>,
    pub powers: Vec<PowerVector<T>>,
    /// Rows dropped because a power (or label) cell was blank or NaN.
    pub skipped_rows: usize,
}

enum PowerColumns {
    PerBeam(Vec<usize>),
    Label(usize),
}

/// Read a dataset CSV in the documented schema
/// (`time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,p0,...,p63`, with
/// either per-beam power columns or a single `beam_label` column).
///
/// Column positions are free; extra columns are ignored so externally
/// recorded logs can be ingested directly once a [`ColumnMapping`] names
/// their headers. Blank `u`/`v`/`size` cells mean no visual detection; blank
/// or NaN power/label cells skip the whole row (counted).
pub fn ingest_csv<T: Real>(path: &Path, mapping: Option<&ColumnMapping>) -> Result<IngestResult<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    ingest_csv_reader(file, mapping)
}

pub fn ingest_csv_reader<T: Real, R: Read>(
    reader: R,
    mapping: Option<&ColumnMapping>,
) -> Result<IngestResult<T>> {
    let default_mapping = ColumnMapping::default();
    let mapping = mapping.unwrap_or(&default_mapping);
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::parse(1, format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut scalar_idx = [0usize; 6];
    for (slot, canonical) in scalar_idx.iter_mut().zip(&SCALAR_COLUMNS[..6]) {
        let external = mapping.external(canonical);
        *slot = find(&external).ok_or_else(|| {
            Error::parse(1, format!("missing column `{external}` (for `{canonical}`)"))
        })?;
    }

    // The visual trio is optional as a group: logs recorded without a camera
    // simply omit the columns, and every row gets no detection.
    let visual_idx: Option<[usize; 3]> = {
        let found: Vec<Option<usize>> = SCALAR_COLUMNS[6..9]
            .iter()
            .map(|canonical| find(&mapping.external(canonical)))
            .collect();
        match found.iter().filter(|f| f.is_some()).count() {
            0 => None,
            3 => Some([found[0].unwrap(), found[1].unwrap(), found[2].unwrap()]),
            _ => {
                return Err(Error::parse(
                    1,
                    "visual columns are all-or-none: provide all of `u`, `v`, `size` or none",
                ))
            }
        }
    };

    let power_columns = {
        let first_power = mapping.power_column(0);
        if find(&first_power).is_some() {
            let mut cols = Vec::new();
            loop {
                match find(&mapping.power_column(cols.len())) {
                    Some(idx) => cols.push(idx),
                    None => break,
                }
            }
            if !matches!(cols.len(), 32 | 64) {
                return Err(Error::parse(
                    1,
                    format!("found {} power columns, expected 32 or 64", cols.len()),
                ));
            }
            PowerColumns::PerBeam(cols)
        } else {
            let label_col = mapping.external("beam_label");
            match find(&label_col) {
                Some(idx) => PowerColumns::Label(idx),
                None => {
                    return Err(Error::parse(
                        1,
                        format!("need `{first_power}`.. power columns or `{label_col}`"),
                    ))
                }
            }
        }
    };

    let parse_cell = |row: usize, record: &csv::StringRecord, idx: usize, name: &str| -> Result<T> {
        let raw = record.get(idx).ok_or_else(|| {
            Error::parse(row, format!("row has {} fields, `{name}` missing", record.len()))
        })?;
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::parse(row, format!("bad value `{raw}` in column `{name}`")))?;
        Ok(real(value))
    };

    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut raw_powers: Vec<Vec<T>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut skipped = 0usize;

    for (i, record) in csv_reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::parse(row, format!("malformed row: {e}")))?;

        // Power (or label) cells decide whether the row is usable at all.
        let mut row_powers: Option<Vec<T>> = None;
        let mut row_label: Option<usize> = None;
        match &power_columns {
            PowerColumns::PerBeam(cols) => {
                let mut values = Vec::with_capacity(cols.len());
                let mut unusable = false;
                for (b, &idx) in cols.iter().enumerate() {
                    let raw = record.get(idx).ok_or_else(|| {
                        Error::parse(row, format!("row has {} fields, power column p{b} missing", record.len()))
                    })?;
                    if raw.is_empty() {
                        unusable = true;
                        break;
                    }
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::parse(row, format!("bad value `{raw}` in power column p{b}"))
                    })?;
                    if v.is_nan() {
                        unusable = true;
                        break;
                    }
                    values.push(real::<T>(v));
                }
                if unusable {
                    skipped += 1;
                    continue;
                }
                row_powers = Some(values);
            }
            PowerColumns::Label(idx) => {
                let raw = record.get(*idx).ok_or_else(|| {
                    Error::parse(row, format!("row has {} fields, label column missing", record.len()))
                })?;
                if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
                    skipped += 1;
                    continue;
                }
                let label: usize = raw.parse().map_err(|_| {
                    Error::parse(row, format!("bad beam label `{raw}`"))
                })?;
                row_label = Some(label);
            }
        }

        let time = parse_cell(row, &record, scalar_idx[0], "time_s")?;
        let lat = parse_cell(row, &record, scalar_idx[1], "lat")?;
        let lon = parse_cell(row, &record, scalar_idx[2], "lon")?;
        let height = parse_cell(row, &record, scalar_idx[3], "height_m")?;
        let distance = parse_cell(row, &record, scalar_idx[4], "distance_m")?;
        let speed = parse_cell(row, &record, scalar_idx[5], "speed_mps")?;

        let visual = match visual_idx {
            None => None,
            Some(idx) => {
                let vis_cells: Vec<&str> =
                    idx.iter().map(|&i| record.get(i).unwrap_or("")).collect();
                match vis_cells.iter().filter(|c| c.is_empty()).count() {
                    3 => None,
                    0 => Some(VisualDetection {
                        u: parse_cell(row, &record, idx[0], "u")?,
                        v: parse_cell(row, &record, idx[1], "v")?,
                        size: parse_cell(row, &record, idx[2], "size")?,
                    }),
                    _ => {
                        return Err(Error::parse(
                            row,
                            "u, v, size must be all present or all blank",
                        ))
                    }
                }
            }
        };

        times.push(time);
        samples.push(SensorSample {
            gps_lat_deg: lat,
            gps_lon_deg: lon,
            height_m: height,
            distance_m: distance,
            speed_mps: speed,
            visual,
        });
        match (&power_columns, row_powers, row_label) {
            (PowerColumns::PerBeam(_), Some(values), _) => raw_powers.push(values),
            (PowerColumns::Label(_), _, Some(label)) => labels.push(label),
            _ => unreachable!("row was validated above"),
        }
    }

    let powers = match power_columns {
        PowerColumns::PerBeam(_) => raw_powers
            .into_iter()
            .map(|values| PowerVector::new(values, 0))
            .collect::<Result<Vec<_>>>()?,
        PowerColumns::Label(_) => {
            let max = labels.iter().copied().max().unwrap_or(0);
            let q = if max < 32 {
                32
            } else if max < 64 {
                64
            } else {
                return Err(Error::data(format!(
                    "beam label {max} exceeds the largest supported codebook (64)"
                )));
            };
            labels
                .into_iter()
                .map(|label| {
                    let mut values = vec![T::zero(); q];
                    values[label] = T::one();
                    PowerVector::new(values, 0)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    Ok(IngestResult {
        times,
        samples,
        powers,
        skipped_rows: skipped,
    })
}

/// Write the canonical dataset CSV. Power vectors must share one length
/// (32 or 64), which sets the number of `p` columns.
pub fn export_csv<T: Real, W: Write>(
    writer: &mut W,
    times: &[T],
    samples: &[SensorSample<T>],
    powers: &[PowerVector<T>],
) -> Result<()> {
    if times.len() != samples.len() || samples.len() != powers.len() {
        return Err(Error::data("times, samples, and powers must align"));
    }
    if samples.is_empty() {
        return Err(Error::data("refusing to export an empty dataset"));
    }
    let q = powers[0].len();
    let mut header: Vec<String> = SCALAR_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..q).map(|b| format!("p{b}")));
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(&header)
        .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    for ((time, sample), power) in times.iter().zip(samples).zip(powers) {
        if power.len() != q {
            return Err(Error::data("power vectors must share one length"));
        }
        let mut record: Vec<String> = vec![
            format!("{time}"),
            format!("{}", sample.gps_lat_deg),
            format!("{}", sample.gps_lon_deg),
            format!("{}", sample.height_m),
            format!("{}", sample.distance_m),
            format!("{}", sample.speed_mps),
        ];
        match sample.visual {
            Some(d) => {
                record.push(format!("{}", d.u));
                record.push(format!("{}", d.v));
                record.push(format!("{}", d.size));
            }
            None => record.extend(["", "", ""].map(String::from)),
        }
        record.extend(power.values().iter().map(|p| format!("{p}")));
        out.write_record(&record)
            .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(lat: f64, visual: Option<(f64, f64, f64)>) -> SensorSample<f64> {
        SensorSample {
            gps_lat_deg: lat,
            gps_lon_deg: -111.9 + lat * 0.001,
            height_m: 30.0 + lat,
            distance_m: 50.0 + lat,
            speed_mps: 5.0,
            visual: visual.map(|(u, v, size)| VisualDetection { u, v, size }),
        }
    }

    fn power(hot: usize, q: usize) -> PowerVector<f64> {
        let mut values = vec![0.1; q];
        values[hot] = 1.0;
        PowerVector::new(values, 0).unwrap()
    }

    fn toy_examples(n: usize, q: usize) -> Vec<LabeledExample<f64>> {
        (0..n)
            .map(|i| LabeledExample {
                features: vec![i as f64, (n - i) as f64],
                label: BeamLabel::new(i % q, q).unwrap(),
                meta: ExampleMeta {
                    height_m: 10.0 + i as f64,
                    speed_mps: 2.0,
                    distance_m: 20.0,
                },
            })
            .collect()
    }

    #[test]
    fn single_pair_builds_one_position_example() {
        let samples = vec![sample(33.4, None)];
        let powers = vec![power(5, 32)];
        let (examples, dropped) =
            build_examples(&samples, &powers, FeatureSet::Position).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].features.len(), 2);
        assert_eq!(examples[0].label.index(), 5);
        assert_eq!(examples[0].label.codebook_size(), 32);
    }

    #[test]
    fn feature_dims_match_the_set() {
        let samples = vec![sample(33.4, Some((0.5, 0.6, 0.1)))];
        let powers = vec![power(2, 32)];
        for fs in FeatureSet::ALL {
            let (examples, _) = build_examples(&samples, &powers, fs).unwrap();
            assert_eq!(examples[0].features.len(), fs.feature_dim());
        }
        let (vis, _) = build_examples(&samples, &powers, FeatureSet::Visual).unwrap();
        assert_eq!(vis[0].features, vec![0.5, 0.6, 0.1]);
    }

    #[test]
    fn all_absent_visuals_drop_everything() {
        let samples = vec![sample(33.4, None), sample(33.5, None), sample(33.6, None)];
        let powers = vec![power(0, 32), power(1, 32), power(2, 32)];
        let (examples, dropped) = build_examples(&samples, &powers, FeatureSet::Visual).unwrap();
        assert!(examples.is_empty());
        assert_eq!(dropped, 3);
    }

    #[test]
    fn build_rejects_length_mismatch() {
        let samples = vec![sample(33.4, None)];
        assert!(build_examples(&samples, &[], FeatureSet::Position).is_err());
        let powers = vec![power(0, 32)];
        let two = vec![sample(33.4, None), sample(33.5, None)];
        assert!(build_examples(&two, &powers, FeatureSet::Position).is_err());
    }

    #[test]
    fn default_scale_split_sizes() {
        let mut ds = Dataset::from_examples(toy_examples(12004, 32), 32, FeatureSet::Position)
            .unwrap();
        ds.split(0.70, 1).unwrap();
        assert_eq!(ds.train_indices().len(), 8402);
        assert_eq!(ds.test_indices().len(), 3602);
    }

    #[test]
    fn ten_example_split_is_seven_three() {
        let mut ds =
            Dataset::from_examples(toy_examples(10, 32), 32, FeatureSet::Position).unwrap();
        ds.split(0.70, 1).unwrap();
        assert_eq!(ds.train_indices().len(), 7);
        assert_eq!(ds.test_indices().len(), 3);
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let mut a =
            Dataset::from_examples(toy_examples(100, 32), 32, FeatureSet::Position).unwrap();
        let mut b = a.clone();
        a.split(0.70, 42).unwrap();
        b.split(0.70, 42).unwrap();
        assert_eq!(a.train_indices(), b.train_indices());
        assert_eq!(a.test_indices(), b.test_indices());

        let mut seen = vec![false; 100];
        for &i in a.train_indices().iter().chain(a.test_indices()) {
            assert!(!seen[i], "index {i} appears twice");
            seen[i] = true;
        }
        assert!(seen.iter().all(|s| *s));

        let mut c = a.clone();
        c.split(0.70, 43).unwrap();
        assert_ne!(a.train_indices(), c.train_indices());
    }

    #[test]
    fn temporal_split_keeps_order() {
        let mut ds =
            Dataset::from_examples(toy_examples(10, 32), 32, FeatureSet::Position).unwrap();
        ds.split_temporal(0.70).unwrap();
        let expected: Vec<usize> = (0..7).collect();
        assert_eq!(ds.train_indices(), &expected[..]);
        let expected: Vec<usize> = (7..10).collect();
        assert_eq!(ds.test_indices(), &expected[..]);
        assert_eq!(ds.split_kind(), Some(SplitKind::Temporal));
    }

    #[test]
    fn split_validation() {
        let mut ds =
            Dataset::from_examples(toy_examples(9, 32), 32, FeatureSet::Position).unwrap();
        assert!(ds.split(0.70, 1).is_err());
        let mut ds =
            Dataset::from_examples(toy_examples(20, 32), 32, FeatureSet::Position).unwrap();
        assert!(ds.split(0.0, 1).is_err());
        assert!(ds.split(1.0, 1).is_err());
        assert!(ds.train_matrix().is_err());
    }

    #[test]
    fn normalizer_maps_train_range_to_unit_interval() {
        let rows: Vec<Vec<f64>> = vec![vec![33.4270], vec![33.4280]];
        let norm = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 1).unwrap();
        assert!((norm.apply(&[33.4275])[0] - 0.5).abs() < 1e-9);
        assert_eq!(norm.apply(&[33.4270]), vec![0.0]);
        assert_eq!(norm.apply(&[33.4280]), vec![1.0]);
        // Test values outside the train range clamp.
        assert_eq!(norm.apply(&[33.0]), vec![0.0]);
        assert_eq!(norm.apply(&[34.0]), vec![1.0]);
        assert!(!norm.has_constant_feature());

        // Exactly representable range: the midpoint lands on 0.5 exactly.
        let rows: Vec<Vec<f64>> = vec![vec![2.0], vec![4.0]];
        let norm = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 1).unwrap();
        assert_eq!(norm.apply(&[3.0]), vec![0.5]);
    }

    #[test]
    fn constant_feature_maps_to_half_with_warning() {
        let rows: Vec<Vec<f64>> = vec![vec![7.0, 1.0], vec![7.0, 2.0]];
        let norm = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        assert!(norm.has_constant_feature());
        assert_eq!(norm.constant_features(), &[true, false]);
        assert_eq!(norm.apply(&[7.0, 1.5]), vec![0.5, 0.5]);
        assert_eq!(norm.apply(&[9.0, 2.0]), vec![0.5, 1.0]);
    }

    #[test]
    fn normalization_is_monotone_and_bounded() {
        let mut ds =
            Dataset::from_examples(toy_examples(50, 32), 32, FeatureSet::Position).unwrap();
        ds.split(0.70, 3).unwrap();
        let mut previous = -1.0;
        for i in 0..ds.len() {
            let row = ds.normalized_features(i).unwrap();
            for v in &row {
                assert!((0.0..=1.0).contains(v));
            }
            // Feature 0 is increasing in the example index.
            assert!(row[0] >= previous);
            previous = row[0];
        }
    }

    #[test]
    fn matrices_use_normalized_features() {
        let mut ds =
            Dataset::from_examples(toy_examples(20, 32), 32, FeatureSet::Position).unwrap();
        ds.split(0.70, 3).unwrap();
        let train = ds.train_matrix().unwrap();
        let test = ds.test_matrix().unwrap();
        assert_eq!(train.features.nrows(), 14);
        assert_eq!(test.features.nrows(), 6);
        assert_eq!(train.features.ncols(), 2);
        assert_eq!(train.labels.len(), 14);
        for v in train.features.iter().chain(test.features.iter()) {
            assert!((0.0..=1.0).contains(v));
        }
        assert_eq!(ds.test_meta().len(), 6);
    }

    fn well_formed_csv() -> String {
        let mut text = String::from(
            "time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,p0,p1,p2,p3\n",
        );
        text.push_str("0.0,33.427,-111.939,30,50,5,0.5,0.5,0.02,0.1,0.9,0.2,0.1\n");
        text.push_str("0.1,33.428,-111.938,31,51,5,,,,0.8,0.1,0.2,0.1\n");
        text.push_str("0.2,33.429,-111.937,32,52,5,0.4,0.6,0.03,0.1,0.2,0.3,0.9\n");
        text
    }

    #[test]
    fn ingest_parses_well_formed_rows() {
        // 4 power columns are not a legal width; rebuild with 32.
        let mut text = String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size");
        for b in 0..32 {
            text.push_str(&format!(",p{b}"));
        }
        text.push('\n');
        for (i, vis) in [("0.5,0.5,0.02"), (",,"), ("0.4,0.6,0.03")].iter().enumerate() {
            text.push_str(&format!("{}.0,33.42{i},-111.93,30,50,5,{vis}", i));
            for b in 0..32 {
                text.push_str(if b == i { ",1.0" } else { ",0.1" });
            }
            text.push('\n');
        }
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap();
        assert_eq!(result.samples.len(), 3);
        assert_eq!(result.skipped_rows, 0);
        assert_eq!(result.powers[1].len(), 32);
        assert!(result.samples[1].visual.is_none());
        assert!(result.samples[0].visual.is_some());
        assert_eq!(optimal_beam(&result.powers[2]).index(), 2);
    }

    #[test]
    fn ingest_without_visual_columns_yields_no_detections() {
        let mut text = String::from("time_s,lat,lon,height_m,distance_m,speed_mps,beam_label\n");
        text.push_str("0.0,33.427,-111.939,30,50,5,3\n");
        text.push_str("0.1,33.428,-111.938,31,51,5,30\n");
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap();
        assert_eq!(result.samples.len(), 2);
        assert!(result.samples.iter().all(|s| s.visual.is_none()));
        assert_eq!(result.powers[0].len(), 32, "max label 30 one-hots into 32");
    }

    #[test]
    fn ingest_rejects_partial_visual_columns() {
        let mut text = String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,beam_label\n");
        text.push_str("0.0,33.427,-111.939,30,50,5,0.5,3\n");
        let err = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("all-or-none"), "{err}");
    }

    #[test]
    fn ingest_rejects_wrong_power_width() {
        let err = ingest_csv_reader::<f64, _>(well_formed_csv().as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("power columns"), "{err}");

        // A data row that is short one power value is named by row number.
        let mut text = String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size");
        for b in 0..32 {
            text.push_str(&format!(",p{b}"));
        }
        text.push('\n');
        text.push_str("0.0,33.4,-111.9,30,50,5,,,");
        for _ in 0..31 {
            text.push_str(",0.1");
        }
        text.push('\n');
        let err = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn ingest_skips_blank_and_nan_powers() {
        let mut text = String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size");
        for b in 0..32 {
            text.push_str(&format!(",p{b}"));
        }
        text.push('\n');
        let mut push_row = |p0: &str| {
            text.push_str(&format!("0.0,33.4,-111.9,30,50,5,,,,{p0}"));
            for _ in 1..32 {
                text.push_str(",0.1");
            }
            text.push('\n');
        };
        push_row("0.5");
        push_row("");
        push_row("NaN");
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap();
        assert_eq!(result.samples.len(), 1);
        assert_eq!(result.skipped_rows, 2);
    }

    #[test]
    fn ingest_accepts_label_only_files() {
        let mut text =
            String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,beam_label\n");
        text.push_str("0.0,33.4,-111.9,30,50,5,,,,7\n");
        text.push_str("0.1,33.4,-111.9,30,50,5,,,,31\n");
        text.push_str("0.2,33.4,-111.9,30,50,5,,,,\n");
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap();
        assert_eq!(result.samples.len(), 2);
        assert_eq!(result.skipped_rows, 1);
        assert_eq!(result.powers[0].len(), 32);
        assert_eq!(optimal_beam(&result.powers[0]).index(), 7);
        assert_eq!(optimal_beam(&result.powers[1]).index(), 31);

        // A label of 40 promotes the synthesized vectors to 64 beams.
        let mut text =
            String::from("time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,beam_label\n");
        text.push_str("0.0,33.4,-111.9,30,50,5,,,,40\n");
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), None).unwrap();
        assert_eq!(result.powers[0].len(), 64);
    }

    #[test]
    fn ingest_applies_column_mapping() {
        let mapping = ColumnMapping::from_toml_str(
            r#"
            power_prefix = "pwr_"

            [columns]
            time_s = "timestamp"
            lat = "gps_latitude"
            lon = "gps_longitude"
            "#,
        )
        .unwrap();
        let mut text =
            String::from("timestamp,gps_latitude,gps_longitude,height_m,distance_m,speed_mps,u,v,size");
        for b in 0..32 {
            text.push_str(&format!(",pwr_{b}"));
        }
        text.push('\n');
        text.push_str("0.0,33.4,-111.9,30,50,5,,,");
        for b in 0..32 {
            text.push_str(if b == 9 { ",2.0" } else { ",0.1" });
        }
        text.push('\n');
        let result = ingest_csv_reader::<f64, _>(text.as_bytes(), Some(&mapping)).unwrap();
        assert_eq!(result.samples.len(), 1);
        assert_eq!(optimal_beam(&result.powers[0]).index(), 9);
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let times = vec![0.0, 0.1, 0.2];
        let samples = vec![
            sample(33.4271, Some((0.25, 0.75, 0.031))),
            sample(33.4305, None),
            sample(33.4333, Some((0.5, 0.5, 0.011))),
        ];
        let powers = vec![power(3, 32), power(17, 32), power(31, 32)];
        let mut buf = Vec::new();
        export_csv(&mut buf, &times, &samples, &powers).unwrap();
        let back = ingest_csv_reader::<f64, _>(&buf[..], None).unwrap();
        assert_eq!(back.samples.len(), 3);
        assert_eq!(back.skipped_rows, 0);
        for (a, b) in samples.iter().zip(&back.samples) {
            assert_eq!(a, b);
        }
        for (a, b) in powers.iter().zip(&back.powers) {
            assert_eq!(optimal_beam(a).index(), optimal_beam(b).index());
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        assert_eq!(times, back.times);
    }

    #[test]
    fn feature_set_names_round_trip() {
        for fs in FeatureSet::ALL {
            let parsed: FeatureSet = fs.to_string().parse().unwrap();
            assert_eq!(parsed, fs);
        }
        assert!("bogus".parse::<FeatureSet>().is_err());
    }
}
