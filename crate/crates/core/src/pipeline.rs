//! End-to-end runs driven by an [`AppConfig`]: synthesize a labeled dataset
//! from the flight scenario, train a classifier, evaluate a checkpoint, and
//! run the four-way feature-set comparison. Every artifact is written
//! through a temporary file and renamed into place, and every random draw
//! comes from a seed derived from the master seed.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{los_channel, received_power_vector, LinkGeometry, NoiseModel};
use crate::codebook::{build_codebook, ArrayGeometry, BeamCodebook};
use crate::config::{derive_seed, AppConfig};
use crate::dataset::{
    build_examples, export_csv, ingest_csv, ColumnMapping, Dataset, FeatureSet, IngestResult,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_feature_sets, evaluate_model, write_report_csv, write_report_json, CompareConfig,
    ComparisonReport, ReportContext, REPORT_VERSION,
};
use crate::geom::Vec3;
use crate::mlp::{
    load_checkpoint_file, save_checkpoint_file, train, Checkpoint, MlpArchitecture, MlpModel,
    TrainConfig,
};
use crate::oracle::{downsample_power, PowerVector};
use crate::scenario::{generate_trajectory, sense, CameraModel, SensorSample, TrajectoryConfig};
use crate::{real, Real};

/// Write bytes through a sibling temporary file and rename into place, so an
/// interrupted run never leaves a truncated artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| Error::data(format!("cannot move {} into place: {e}", path.display())))?;
    Ok(())
}

/// A synthesized dataset before feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedData<T> {
    pub times: Vec<T>,
    pub samples: Vec<SensorSample<T>>,
    pub powers: Vec<PowerVector<T>>,
}

fn sky_array<T: Real>(cfg: &AppConfig) -> Result<ArrayGeometry<T>> {
    ArrayGeometry::new(
        cfg.codebook.num_elements,
        real(cfg.codebook.element_spacing_wavelengths),
        Vec3::from_f64(0.0, 0.0, 1.0),
        Vec3::from_f64(1.0, 0.0, 0.0),
    )
}

fn trajectory_config<T: Real>(cfg: &AppConfig) -> Result<TrajectoryConfig<T>> {
    let waypoints = cfg
        .scenario
        .effective_waypoints()?
        .into_iter()
        .map(|[x, y, z]| Vec3::from_f64(x, y, z))
        .collect();
    Ok(TrajectoryConfig {
        waypoints,
        speed_range: [real(cfg.scenario.speed_range[0]), real(cfg.scenario.speed_range[1])],
        height_range: [
            real(cfg.scenario.height_range[0]),
            real(cfg.scenario.height_range[1]),
        ],
        sample_rate_hz: real(cfg.scenario.sample_rate_hz),
        gps_noise_sigma_m: real(cfg.scenario.gps_noise_sigma_m),
        rng_seed: derive_seed(cfg.master_seed, "trajectory"),
        anchor_lat_deg: real(cfg.scenario.anchor_lat_deg),
        anchor_lon_deg: real(cfg.scenario.anchor_lon_deg),
    })
}

/// The full generated codebook and, when `q` is smaller, the kept-beam
/// subset actually used for labeling.
fn active_codebook<T: Real>(cfg: &AppConfig) -> Result<(BeamCodebook<T>, Option<BeamCodebook<T>>)> {
    let geometry = sky_array(cfg)?;
    let full = build_codebook(
        &geometry,
        cfg.codebook.num_beams,
        real(cfg.codebook.fov_sine_half_width),
    )?;
    let active = if cfg.q < cfg.codebook.num_beams {
        Some(full.keep_every(cfg.codebook.num_beams / cfg.q)?)
    } else {
        None
    };
    Ok((full, active))
}

/// Fly the configured scenario and record, for every sampled drone state,
/// the noisy sensor sample and the received power over the active codebook.
pub fn synthesize_dataset<T: Real>(cfg: &AppConfig) -> Result<SynthesizedData<T>> {
    cfg.validate()?;
    let geometry = sky_array::<T>(cfg)?;
    let (full_book, active_book) = active_codebook::<T>(cfg)?;
    let factor = cfg.codebook.num_beams / cfg.q;
    let traj_cfg = trajectory_config::<T>(cfg)?;
    let states = generate_trajectory(&traj_cfg)?;
    if states.len() < cfg.dataset.num_samples {
        return Err(Error::config(format!(
            "scenario yields only {} samples but {} were requested; extend the \
             trajectory (more passes or heights) or raise sample_rate_hz",
            states.len(),
            cfg.dataset.num_samples
        )));
    }

    let camera = CameraModel::new(
        Vec3::zero(),
        Vec3::from_f64(0.0, 0.0, 1.0),
        real(cfg.camera.horizontal_fov_deg),
        real(cfg.camera.vertical_fov_deg),
        real(cfg.camera.reference_size_m),
    )?;
    let noise = if cfg.link.noiseless {
        NoiseModel::noiseless()
    } else {
        NoiseModel::noisy(real(cfg.link.snr_db), derive_seed(cfg.master_seed, "noise"))
    };
    let mut rng_sensor = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, "sensor"));
    let mut rng_channel = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, "channel"));
    let mut rng_noise = ChaCha8Rng::seed_from_u64(noise.rng_seed);

    let mut times = Vec::with_capacity(cfg.dataset.num_samples);
    let mut samples = Vec::with_capacity(cfg.dataset.num_samples);
    let mut powers = Vec::with_capacity(cfg.dataset.num_samples);
    for state in states.iter().take(cfg.dataset.num_samples) {
        let sample = sense(state, &camera, &traj_cfg, &mut rng_sensor)?;
        let link = LinkGeometry::new(Vec3::zero(), state.position)?;
        let channel = los_channel(&link, &geometry, &mut rng_channel)?;
        let swept = received_power_vector(&channel, &full_book, &noise, &mut rng_noise)?;
        let power = match &active_book {
            Some(book) => downsample_power(&swept, factor)?.with_codebook_id(book.id()),
            None => swept,
        };
        times.push(state.time_s);
        samples.push(sample);
        powers.push(power);
    }
    Ok(SynthesizedData {
        times,
        samples,
        powers,
    })
}

/// Sidecar provenance written next to generated CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub q: usize,
    pub rows: usize,
}

/// Artifact paths produced by [`run_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutputs {
    pub dataset_csv: PathBuf,
    pub manifest_json: PathBuf,
}

/// Synthesize the configured dataset and write `dataset.csv` plus a
/// provenance manifest into `out_dir`.
pub fn run_generate<T: Real>(cfg: &AppConfig, out_dir: &Path) -> Result<GenerateOutputs> {
    let data = synthesize_dataset::<T>(cfg)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut csv_bytes = Vec::new();
    export_csv(&mut csv_bytes, &data.times, &data.samples, &data.powers)?;
    let dataset_csv = out_dir.join("dataset.csv");
    write_atomic(&dataset_csv, &csv_bytes)?;

    let manifest = DatasetManifest {
        version: REPORT_VERSION,
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        q: cfg.q,
        rows: data.samples.len(),
    };
    let manifest_json = out_dir.join("dataset.json");
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::data(format!("cannot serialize manifest: {e}")))?;
    write_atomic(&manifest_json, &manifest_bytes)?;
    Ok(GenerateOutputs {
        dataset_csv,
        manifest_json,
    })
}

fn split_spec(cfg: &AppConfig) -> SplitSpec {
    SplitSpec {
        kind: cfg.dataset.split,
        seed: derive_seed(cfg.master_seed, "split"),
        train_fraction: cfg.dataset.train_fraction,
    }
}

fn build_split_dataset<T: Real>(
    data: &IngestResult<T>,
    fs: FeatureSet,
    spec: &SplitSpec,
) -> Result<(Dataset<T>, usize)> {
    let (examples, dropped) = build_examples(&data.samples, &data.powers, fs)?;
    if examples.is_empty() {
        return Err(Error::data(format!(
            "no usable examples for feature set {fs} ({dropped} rows lacked a visual detection)"
        )));
    }
    let q = data.powers[0].len();
    let mut dataset = Dataset::from_examples(examples, q, fs)?;
    dataset.apply_split(spec)?;
    Ok((dataset, dropped))
}

/// Artifact paths produced by [`run_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutputs {
    pub checkpoint_json: PathBuf,
    pub history_csv: PathBuf,
    pub final_loss: f64,
}

/// Train a model on a dataset CSV and write the checkpoint plus a per-epoch
/// history CSV into `out_dir`.
pub fn run_train<T: Real>(cfg: &AppConfig, csv_path: &Path, out_dir: &Path) -> Result<TrainOutputs> {
    cfg.validate()?;
    let data = ingest_csv::<T>(csv_path, None)?;
    let q = data
        .powers
        .first()
        .map(|p| p.len())
        .ok_or_else(|| Error::data("dataset CSV has no usable rows"))?;
    if q != cfg.q {
        return Err(Error::config(format!(
            "dataset CSV carries {q} beams but the config expects q = {} \
             (override with --q {q})",
            cfg.q
        )));
    }
    let fs = cfg.dataset.feature_set;
    let spec = split_spec(cfg);
    let (dataset, _) = build_split_dataset(&data, fs, &spec)?;

    let arch = MlpArchitecture {
        input_dim: fs.feature_dim(),
        hidden: cfg.train.hidden.clone(),
        output_dim: dataset.q(),
    };
    let mut model = MlpModel::<T>::new(arch, derive_seed(cfg.master_seed, "init"))?;
    let train_cfg = cfg.train.to_train_config(derive_seed(cfg.master_seed, "train"));
    let report = train(&mut model, &dataset.train_matrix()?, &train_cfg)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let checkpoint = Checkpoint::new(
        model,
        fs,
        dataset
            .normalizer()
            .expect("split datasets always carry a normalizer")
            .clone(),
        train_cfg.clone(),
        spec,
        cfg.hash(),
        cfg.master_seed,
    )?;
    let checkpoint_json = out_dir.join("checkpoint.json");
    save_checkpoint_file(&checkpoint_json, &checkpoint)?;

    let mut history = String::from("epoch,loss,learning_rate,config_hash,master_seed\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        let lr = train_cfg.learning_rate_for_epoch(epoch);
        history.push_str(&format!(
            "{epoch},{loss},{lr},{},{}\n",
            cfg.hash(),
            cfg.master_seed
        ));
    }
    let history_csv = out_dir.join("history.csv");
    write_atomic(&history_csv, history.as_bytes())?;

    let final_loss = report
        .epoch_losses
        .last()
        .map(|l| l.to_f64().unwrap_or(f64::NAN))
        .unwrap_or(f64::NAN);
    Ok(TrainOutputs {
        checkpoint_json,
        history_csv,
        final_loss,
    })
}

/// Artifact paths produced by evaluation and comparison runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutputs {
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub report: ComparisonReport,
}

fn write_reports(report: &ComparisonReport, out_dir: &Path) -> Result<ReportOutputs> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut json = Vec::new();
    write_report_json(&mut json, report)?;
    let report_json = out_dir.join("report.json");
    write_atomic(&report_json, &json)?;

    let mut csv = Vec::new();
    write_report_csv(&mut csv, report)?;
    let report_csv = out_dir.join("report.csv");
    write_atomic(&report_csv, &csv)?;
    Ok(ReportOutputs {
        report_json,
        report_csv,
        report: report.clone(),
    })
}

/// Evaluate a checkpoint against a dataset CSV, reconstructing the split the
/// checkpoint was trained under, and write the report files into `out_dir`.
pub fn run_evaluate<T: Real>(
    cfg: &AppConfig,
    csv_path: &Path,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<ReportOutputs> {
    let checkpoint: Checkpoint<T> = load_checkpoint_file(checkpoint_path)?;
    let data = ingest_csv::<T>(csv_path, None)?;
    let (dataset, _) = build_split_dataset(&data, checkpoint.feature_set, &checkpoint.split)?;
    if dataset.q() != checkpoint.model.arch().output_dim {
        return Err(Error::data(format!(
            "dataset carries {} beams but the checkpoint predicts {}",
            dataset.q(),
            checkpoint.model.arch().output_dim
        )));
    }
    if dataset.normalizer() != Some(&checkpoint.normalizer) {
        return Err(Error::data(
            "training-split statistics differ from the checkpoint normalizer; \
             this CSV is not the dataset the model was trained on",
        ));
    }

    let ctx = ReportContext {
        feature_set: checkpoint.feature_set,
        q: dataset.q(),
        config_hash: checkpoint.config_hash.clone(),
        master_seed: checkpoint.master_seed,
        split_seed: dataset.split_seed(),
    };
    let report = evaluate_model(
        &checkpoint.model,
        &dataset.test_matrix()?,
        &dataset.test_meta(),
        &cfg.eval.ks,
        &ctx,
    )?;
    write_reports(
        &ComparisonReport {
            version: REPORT_VERSION,
            config_hash: checkpoint.config_hash.clone(),
            master_seed: checkpoint.master_seed,
            reports: vec![report],
        },
        out_dir,
    )
}

/// Run the full four-way feature-set comparison from a config (optionally on
/// an already generated CSV) and write the report files into `out_dir`.
///
/// All feature sets see exactly the same rows: samples without a visual
/// detection are dropped for every set, not just the visual one, so the
/// comparison stays apples-to-apples.
pub fn run_compare<T: Real>(
    cfg: &AppConfig,
    csv_path: Option<&Path>,
    out_dir: &Path,
) -> Result<ReportOutputs> {
    cfg.validate()?;
    let data = match csv_path {
        Some(path) => ingest_csv::<T>(path, None)?,
        None => {
            let synth = synthesize_dataset::<T>(cfg)?;
            IngestResult {
                times: synth.times,
                samples: synth.samples,
                powers: synth.powers,
                skipped_rows: 0,
            }
        }
    };

    let kept: Vec<usize> = (0..data.samples.len())
        .filter(|&i| data.samples[i].visual.is_some())
        .collect();
    if kept.is_empty() {
        return Err(Error::data(
            "no sample has a visual detection; the comparison needs shared rows",
        ));
    }
    let samples: Vec<_> = kept.iter().map(|&i| data.samples[i]).collect();
    let powers: Vec<_> = kept.iter().map(|&i| data.powers[i].clone()).collect();

    let spec = split_spec(cfg);
    let mut datasets = Vec::with_capacity(FeatureSet::ALL.len());
    for fs in FeatureSet::ALL {
        let (examples, dropped) = build_examples(&samples, &powers, fs)?;
        debug_assert_eq!(dropped, 0, "visual-present rows never drop");
        let mut dataset = Dataset::from_examples(examples, powers[0].len(), fs)?;
        dataset.apply_split(&spec)?;
        datasets.push(dataset);
    }

    let compare_cfg = CompareConfig {
        hidden: cfg.train.hidden.clone(),
        train: cfg.train.to_train_config(derive_seed(cfg.master_seed, "train")),
        ks: cfg.eval.ks.clone(),
        init_seed: derive_seed(cfg.master_seed, "init"),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
    };
    let report = compare_feature_sets(&datasets, &compare_cfg)?;
    write_reports(&report, out_dir)
}

/// Convert an externally recorded CSV to the canonical schema.
pub fn run_ingest<T: Real>(
    csv_in: &Path,
    mapping_path: Option<&Path>,
    csv_out: &Path,
) -> Result<(usize, usize)> {
    let mapping = match mapping_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            Some(ColumnMapping::from_toml_str(&text)?)
        }
        None => None,
    };
    let data = ingest_csv::<T>(csv_in, mapping.as_ref())?;
    if data.samples.is_empty() {
        return Err(Error::data("no usable rows in the input CSV"));
    }
    if let Some(parent) = csv_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let mut bytes = Vec::new();
    export_csv(&mut bytes, &data.times, &data.samples, &data.powers)?;
    write_atomic(csv_out, &bytes)?;
    Ok((data.samples.len(), data.skipped_rows))
}

/// Train on a prepared dataset and return the trained model together with
/// the report context (used by tests and the comparison path).
pub fn train_and_evaluate<T: Real>(
    dataset: &Dataset<T>,
    hidden: &[usize],
    train_cfg: &TrainConfig,
    init_seed: u64,
    ks: &[usize],
    config_hash: String,
    master_seed: u64,
) -> Result<crate::eval::EvalReport> {
    let arch = MlpArchitecture {
        input_dim: dataset.feature_set().feature_dim(),
        hidden: hidden.to_vec(),
        output_dim: dataset.q(),
    };
    let mut model = MlpModel::<T>::new(arch, init_seed)?;
    train(&mut model, &dataset.train_matrix()?, train_cfg)?;
    let ctx = ReportContext {
        feature_set: dataset.feature_set(),
        q: dataset.q(),
        config_hash,
        master_seed,
        split_seed: dataset.split_seed(),
    };
    evaluate_model(
        &model,
        &dataset.test_matrix()?,
        &dataset.test_meta(),
        ks,
        &ctx,
    )
}
