//! Accuracy reporting: top-k rates, tertile-stratified breakdowns by height
//! and speed, sweep-overhead ratios, and the four-way feature-set
//! comparison, with versioned JSON and flat-CSV export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ExampleMeta, ExampleMatrix, FeatureSet};
use crate::error::{Error, Result};
use crate::mlp::{train, MlpArchitecture, MlpModel, TrainConfig};
use crate::{real, Real};

pub const REPORT_VERSION: u32 = 1;

/// k values reported by default.
pub const DEFAULT_KS: [usize; 4] = [1, 2, 3, 5];

/// Meta field a stratified breakdown buckets on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StratumDimension {
    Height,
    Speed,
}

impl StratumDimension {
    pub const ALL: [StratumDimension; 2] = [StratumDimension::Height, StratumDimension::Speed];

    fn value<T: Real>(&self, meta: &ExampleMeta<T>) -> T {
        match self {
            StratumDimension::Height => meta.height_m,
            StratumDimension::Speed => meta.speed_mps,
        }
    }

    fn bin_names(&self) -> [&'static str; 3] {
        match self {
            StratumDimension::Height => ["low", "medium", "high"],
            StratumDimension::Speed => ["slow", "medium", "fast"],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StratumDimension::Height => "height",
            StratumDimension::Speed => "speed",
        }
    }
}

/// Accuracy at one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkEntry {
    pub k: usize,
    pub accuracy: f64,
}

/// Share of a beam sweep still needed when only the top k beams are tried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadEntry {
    pub k: usize,
    pub ratio: f64,
}

/// One tertile bucket with its own top-k accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBin {
    pub name: String,
    pub count: usize,
    pub topk: Vec<TopkEntry>,
}

/// Per-dimension stratified breakdown. `fallback` marks the degenerate case
/// (fewer than three distinct meta values) where a single bucket holds
/// everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub dimension: StratumDimension,
    pub fallback: bool,
    pub bins: Vec<StratumBin>,
}

/// Evaluation results of one trained model on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub feature_set: FeatureSet,
    pub q: usize,
    pub n_test: usize,
    pub config_hash: String,
    pub master_seed: u64,
    pub split_seed: u64,
    pub topk: Vec<TopkEntry>,
    pub strata: Vec<StratumReport>,
    pub overhead: Vec<OverheadEntry>,
}

/// Provenance stamped into every report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportContext {
    pub feature_set: FeatureSet,
    pub q: usize,
    pub config_hash: String,
    pub master_seed: u64,
    pub split_seed: u64,
}

/// Fraction of samples whose label appears among the first `k` predictions.
pub fn topk_accuracy(predictions: &[Vec<usize>], labels: &[usize], k: usize) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::data("no predictions to score"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::data(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if k == 0 {
        return Err(Error::config("k must be positive"));
    }
    if let Some(short) = predictions.iter().find(|p| p.len() < k) {
        return Err(Error::data(format!(
            "a prediction lists only {} beams, need {k}",
            short.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p[..k].contains(y))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Tertile edges of `values` (linear-interpolation quantiles at 1/3 and
/// 2/3), or `None` when fewer than three distinct values exist.
pub fn tertile_edges<T: Real>(values: &[T]) -> Option<(T, T)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite meta values"));
    sorted.dedup();
    if sorted.len() < 3 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite meta values"));
    let quantile = |p: f64| -> T {
        let h = p * (sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let frac = real::<T>(h - h.floor());
        if lo + 1 < sorted.len() {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[lo]
        }
    };
    Some((quantile(1.0 / 3.0), quantile(2.0 / 3.0)))
}

/// Split the test set into tertiles of one meta dimension and score each
/// bucket independently. Values equal to a bin edge fall in the lower bin.
/// With fewer than three distinct values everything lands in one bucket and
/// `fallback` is set.
pub fn stratified_accuracy<T: Real>(
    meta: &[ExampleMeta<T>],
    predictions: &[Vec<usize>],
    labels: &[usize],
    dimension: StratumDimension,
    ks: &[usize],
) -> Result<StratumReport> {
    if meta.len() != labels.len() {
        return Err(Error::data(format!(
            "{} meta entries but {} labels",
            meta.len(),
            labels.len()
        )));
    }
    let values: Vec<T> = meta.iter().map(|m| dimension.value(m)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite meta values"));
    }

    let (fallback, memberships): (bool, Vec<Vec<usize>>) = match tertile_edges(&values) {
        None => (true, vec![(0..labels.len()).collect()]),
        Some((low_edge, mid_edge)) => {
            let mut bins = vec![Vec::new(), Vec::new(), Vec::new()];
            for (i, v) in values.iter().enumerate() {
                let bin = if *v <= low_edge {
                    0
                } else if *v <= mid_edge {
                    1
                } else {
                    2
                };
                bins[bin].push(i);
            }
            (false, bins)
        }
    };

    let names: Vec<String> = if fallback {
        vec!["all".to_string()]
    } else {
        dimension.bin_names().iter().map(|s| s.to_string()).collect()
    };
    let mut bins = Vec::with_capacity(memberships.len());
    for (name, members) in names.into_iter().zip(memberships) {
        let mut topk = Vec::with_capacity(ks.len());
        for &k in ks {
            let accuracy = if members.is_empty() {
                // A tertile can come up empty under heavy duplication; score
                // it zero rather than failing the whole report.
                0.0
            } else {
                let preds: Vec<Vec<usize>> =
                    members.iter().map(|&i| predictions[i].clone()).collect();
                let labs: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
                topk_accuracy(&preds, &labs, k)?
            };
            topk.push(TopkEntry { k, accuracy });
        }
        bins.push(StratumBin {
            name,
            count: members.len(),
            topk,
        });
    }
    Ok(StratumReport {
        dimension,
        fallback,
        bins,
    })
}

/// Fraction of an exhaustive `q`-beam sweep spent trying `k` candidates.
pub fn overhead_ratio(k: usize, q: usize) -> Result<f64> {
    if k == 0 || k > q {
        return Err(Error::config(format!("k = {k} outside 1..={q}")));
    }
    Ok(k as f64 / q as f64)
}

/// Score a trained model on a test matrix and assemble the full report.
pub fn evaluate_model<T: Real>(
    model: &MlpModel<T>,
    test: &ExampleMatrix<T>,
    meta: &[ExampleMeta<T>],
    ks: &[usize],
    ctx: &ReportContext,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::data("empty test split"));
    }
    if meta.len() != test.len() {
        return Err(Error::data("test meta does not align with the matrix"));
    }
    if ks.is_empty() {
        return Err(Error::config("no k values requested"));
    }
    let &k_max = ks.iter().max().expect("nonempty ks");
    if k_max > ctx.q {
        return Err(Error::config(format!("k = {k_max} exceeds q = {}", ctx.q)));
    }
    if model.arch().output_dim != ctx.q {
        return Err(Error::data(format!(
            "model predicts {} beams, report expects {}",
            model.arch().output_dim,
            ctx.q
        )));
    }

    let predictions = model.predict_topk(&test.features, k_max)?;
    let mut topk = Vec::with_capacity(ks.len());
    let mut overhead = Vec::with_capacity(ks.len());
    for &k in ks {
        topk.push(TopkEntry {
            k,
            accuracy: topk_accuracy(&predictions, &test.labels, k)?,
        });
        overhead.push(OverheadEntry {
            k,
            ratio: overhead_ratio(k, ctx.q)?,
        });
    }
    let strata = StratumDimension::ALL
        .iter()
        .map(|&dim| stratified_accuracy(meta, &predictions, &test.labels, dim, ks))
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        version: REPORT_VERSION,
        feature_set: ctx.feature_set,
        q: ctx.q,
        n_test: test.len(),
        config_hash: ctx.config_hash.clone(),
        master_seed: ctx.master_seed,
        split_seed: ctx.split_seed,
        topk,
        strata,
        overhead,
    })
}

/// Settings for the four-way feature-set comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub ks: Vec<usize>,
    pub init_seed: u64,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            hidden: vec![512, 512],
            train: TrainConfig::default(),
            ks: DEFAULT_KS.to_vec(),
            init_seed: 0,
            config_hash: String::new(),
            master_seed: 0,
        }
    }
}

/// Reports of every compared feature set, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub reports: Vec<EvalReport>,
}

impl ComparisonReport {
    pub fn report_for(&self, fs: FeatureSet) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.feature_set == fs)
    }

    pub fn top1(&self, fs: FeatureSet) -> Option<f64> {
        self.report_for(fs)?
            .topk
            .iter()
            .find(|e| e.k == 1)
            .map(|e| e.accuracy)
    }
}

/// Train one model per dataset (each dataset carries its feature set) and
/// evaluate all of them on their aligned test splits.
///
/// The comparison is only meaningful when every dataset covers the same
/// samples with the same split, so mismatched lengths, split seeds, split
/// kinds, labels, or meta are rejected.
pub fn compare_feature_sets<T: Real>(
    datasets: &[Dataset<T>],
    cfg: &CompareConfig,
) -> Result<ComparisonReport> {
    if datasets.is_empty() {
        return Err(Error::data("no datasets to compare"));
    }
    cfg.train.validate()?;
    let first = &datasets[0];
    for ds in datasets {
        if ds.split_kind().is_none() {
            return Err(Error::data(format!(
                "dataset for {} has not been split",
                ds.feature_set()
            )));
        }
        let aligned = ds.len() == first.len()
            && ds.q() == first.q()
            && ds.split_kind() == first.split_kind()
            && ds.split_seed() == first.split_seed()
            && ds.train_indices() == first.train_indices()
            && ds.test_indices() == first.test_indices();
        if !aligned {
            return Err(Error::data(format!(
                "dataset for {} is split differently than the one for {}; \
                 a comparison needs identical samples and split",
                ds.feature_set(),
                first.feature_set()
            )));
        }
        let same_samples = ds
            .examples()
            .iter()
            .zip(first.examples())
            .all(|(a, b)| a.label == b.label && a.meta == b.meta);
        if !same_samples {
            return Err(Error::data(format!(
                "datasets for {} and {} disagree on labels or meta; \
                 they must be built from the same samples",
                ds.feature_set(),
                first.feature_set()
            )));
        }
    }
    for (i, ds) in datasets.iter().enumerate() {
        if datasets[..i].iter().any(|d| d.feature_set() == ds.feature_set()) {
            return Err(Error::data(format!(
                "feature set {} appears twice",
                ds.feature_set()
            )));
        }
    }

    let mut reports = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let arch = MlpArchitecture {
            input_dim: ds.feature_set().feature_dim(),
            hidden: cfg.hidden.clone(),
            output_dim: ds.q(),
        };
        let mut model = MlpModel::new(arch, cfg.init_seed)?;
        let train_set = ds.train_matrix()?;
        train(&mut model, &train_set, &cfg.train)?;
        let ctx = ReportContext {
            feature_set: ds.feature_set(),
            q: ds.q(),
            config_hash: cfg.config_hash.clone(),
            master_seed: cfg.master_seed,
            split_seed: ds.split_seed(),
        };
        reports.push(evaluate_model(
            &model,
            &ds.test_matrix()?,
            &ds.test_meta(),
            &cfg.ks,
            &ctx,
        )?);
    }
    Ok(ComparisonReport {
        version: REPORT_VERSION,
        config_hash: cfg.config_hash.clone(),
        master_seed: cfg.master_seed,
        reports,
    })
}

/// Write the hierarchical report file (pretty JSON; keys and order are
/// stable, floats round-trip exactly).
pub fn write_report_json<W: Write>(writer: W, report: &ComparisonReport) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)
        .map_err(|e| Error::data(format!("cannot serialize report: {e}")))
}

pub fn read_report_json<R: std::io::Read>(reader: R) -> Result<ComparisonReport> {
    let report: ComparisonReport = serde_json::from_reader(reader)
        .map_err(|e| Error::data(format!("cannot parse report: {e}")))?;
    if report.version != REPORT_VERSION {
        return Err(Error::data(format!(
            "report version {} unsupported (expected {REPORT_VERSION})",
            report.version
        )));
    }
    Ok(report)
}

/// Flat CSV: one row per (feature set, k, stratum), overall rows included
/// under dimension `overall`.
pub fn write_report_csv<W: Write>(writer: W, report: &ComparisonReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "report_version",
        "config_hash",
        "master_seed",
        "feature_set",
        "q",
        "n_test",
        "split_seed",
        "dimension",
        "stratum",
        "count",
        "k",
        "accuracy",
        "overhead_ratio",
    ])
    .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    let mut push = |r: &EvalReport,
                    dimension: &str,
                    stratum: &str,
                    count: usize,
                    k: usize,
                    accuracy: f64|
     -> Result<()> {
        let ratio = overhead_ratio(k, r.q)?;
        out.write_record([
            report.version.to_string(),
            report.config_hash.clone(),
            report.master_seed.to_string(),
            r.feature_set.to_string(),
            r.q.to_string(),
            r.n_test.to_string(),
            r.split_seed.to_string(),
            dimension.to_string(),
            stratum.to_string(),
            count.to_string(),
            k.to_string(),
            format!("{accuracy}"),
            format!("{ratio}"),
        ])
        .map_err(|e| Error::data(format!("csv write failed: {e}")))
    };
    for r in &report.reports {
        for entry in &r.topk {
            push(r, "overall", "all", r.n_test, entry.k, entry.accuracy)?;
        }
        for stratum in &r.strata {
            for bin in &stratum.bins {
                for entry in &bin.topk {
                    push(
                        r,
                        stratum.dimension.name(),
                        &bin.name,
                        bin.count,
                        entry.k,
                        entry.accuracy,
                    )?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_examples, LabeledExample};
    use crate::oracle::{BeamLabel, PowerVector};
    use crate::scenario::SensorSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta(height: f64, speed: f64) -> ExampleMeta<f64> {
        ExampleMeta {
            height_m: height,
            speed_mps: speed,
            distance_m: 50.0,
        }
    }

    #[test]
    fn perfect_predictor_scores_one_for_every_k() {
        let labels = vec![3usize, 1, 2];
        let predictions: Vec<Vec<usize>> = labels
            .iter()
            .map(|&y| {
                let mut p = vec![y];
                p.extend((0..5).filter(|&b| b != y));
                p
            })
            .collect();
        for k in 1..=5 {
            assert_eq!(topk_accuracy(&predictions, &labels, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn fixed_predictor_on_uniform_labels_hits_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 64_000;
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..32)).collect();
        let fixed: Vec<usize> = (0..32).collect();
        let predictions = vec![fixed; n];
        let top1 = topk_accuracy(&predictions, &labels, 1).unwrap();
        assert!((top1 - 1.0 / 32.0).abs() < 0.005, "{top1}");
    }

    #[test]
    fn topk_accuracy_validates_input() {
        assert!(topk_accuracy(&[], &[], 1).is_err());
        assert!(topk_accuracy(&[vec![0]], &[0, 1], 1).is_err());
        assert!(topk_accuracy(&[vec![0]], &[0], 0).is_err());
        assert!(topk_accuracy(&[vec![0]], &[0], 2).is_err());
    }

    #[test]
    fn accuracy_is_nondecreasing_and_exhaustive_at_q() {
        let q = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..q)).collect();
            let predictions: Vec<Vec<usize>> = (0..n)
                .map(|_| {
                    let mut order: Vec<usize> = (0..q).collect();
                    for i in (1..q).rev() {
                        order.swap(i, rng.gen_range(0..=i));
                    }
                    order
                })
                .collect();
            let mut previous = 0.0;
            for k in 1..=q {
                let acc = topk_accuracy(&predictions, &labels, k).unwrap();
                assert!(acc >= previous);
                previous = acc;
            }
            assert_eq!(previous, 1.0);
        }
    }

    #[test]
    fn nine_heights_split_into_equal_tertiles() {
        let values: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let (low, mid) = tertile_edges(&values).unwrap();
        assert!((low - 11.0 / 3.0).abs() < 1e-12, "{low}");
        assert!((mid - 19.0 / 3.0).abs() < 1e-12, "{mid}");

        let meta: Vec<ExampleMeta<f64>> = values.iter().map(|&h| meta(h, 5.0)).collect();
        let labels = vec![0usize; 9];
        let predictions = vec![vec![0usize, 1]; 9];
        let report =
            stratified_accuracy(&meta, &predictions, &labels, StratumDimension::Height, &[1])
                .unwrap();
        assert!(!report.fallback);
        let counts: Vec<usize> = report.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![3, 3, 3]);
        assert_eq!(report.bins[0].name, "low");
        assert_eq!(report.bins[2].name, "high");
    }

    #[test]
    fn boundary_values_fall_in_the_lower_bin() {
        // Seven distinct values put the tertile edges exactly on 2 and 4.
        let values: Vec<f64> = (0..7).map(|v| v as f64).collect();
        let (low, mid) = tertile_edges(&values).unwrap();
        assert_eq!(low, 2.0);
        assert_eq!(mid, 4.0);
        let meta: Vec<ExampleMeta<f64>> = values.iter().map(|&h| meta(h, 5.0)).collect();
        let labels = vec![0usize; 7];
        let predictions = vec![vec![0usize]; 7];
        let report =
            stratified_accuracy(&meta, &predictions, &labels, StratumDimension::Height, &[1])
                .unwrap();
        let counts: Vec<usize> = report.bins.iter().map(|b| b.count).collect();
        // 0,1,2 (edge inclusive) | 3,4 (edge inclusive) | 5,6
        assert_eq!(counts, vec![3, 2, 2]);
    }

    #[test]
    fn equal_meta_values_fall_back_to_one_bin() {
        let meta: Vec<ExampleMeta<f64>> = (0..10).map(|_| meta(30.0, 5.0)).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let predictions = vec![vec![0usize, 1]; 10];
        let report =
            stratified_accuracy(&meta, &predictions, &labels, StratumDimension::Height, &[1])
                .unwrap();
        assert!(report.fallback);
        assert_eq!(report.bins.len(), 1);
        assert_eq!(report.bins[0].name, "all");
        assert_eq!(report.bins[0].count, 10);
        let overall = topk_accuracy(&predictions, &labels, 1).unwrap();
        assert_eq!(report.bins[0].topk[0].accuracy, overall);
    }

    #[test]
    fn stratum_counts_always_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(3..60);
            let meta: Vec<ExampleMeta<f64>> = (0..n)
                .map(|_| meta(rng.gen_range(0.0..100.0), rng.gen_range(0..4) as f64))
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let predictions = vec![vec![0usize, 1, 2, 3]; n];
            for dim in StratumDimension::ALL {
                let report =
                    stratified_accuracy(&meta, &predictions, &labels, dim, &[1, 2]).unwrap();
                let total: usize = report.bins.iter().map(|b| b.count).sum();
                assert_eq!(total, n);
            }
        }
    }

    #[test]
    fn overhead_ratios() {
        assert_eq!(overhead_ratio(1, 32).unwrap(), 0.03125);
        assert_eq!(overhead_ratio(3, 32).unwrap(), 0.09375);
        assert_eq!(overhead_ratio(32, 32).unwrap(), 1.0);
        assert_eq!(overhead_ratio(1, 64).unwrap() * 64.0, 1.0);
        assert!(overhead_ratio(0, 32).is_err());
        assert!(overhead_ratio(33, 32).is_err());
    }

    fn toy_dataset(fs: FeatureSet, n: usize) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut samples = Vec::new();
        let mut powers = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.gen_range(0.0..1.0);
            let y: f64 = rng.gen_range(0.0..1.0);
            samples.push(SensorSample {
                gps_lat_deg: x,
                gps_lon_deg: y,
                height_m: 10.0 + 80.0 * rng.gen::<f64>(),
                distance_m: 30.0 + 40.0 * rng.gen::<f64>(),
                speed_mps: rng.gen_range(2.0..10.0),
                visual: Some(crate::scenario::VisualDetection {
                    u: x,
                    v: y,
                    size: 0.05,
                }),
            });
            // Label depends on position only, so every feature set that sees
            // position can learn it.
            let label = ((x * 2.0) as usize).min(1) + 2 * ((y * 2.0) as usize).min(1);
            let mut values = vec![0.01; 4];
            values[label] = 1.0;
            powers.push(PowerVector::new(values, 0).unwrap());
        }
        let (examples, _) = build_examples(&samples, &powers, fs).unwrap();
        Dataset::from_examples(examples, 4, fs).unwrap()
    }

    fn split_all(mut datasets: Vec<Dataset<f64>>, seed: u64) -> Vec<Dataset<f64>> {
        for ds in &mut datasets {
            ds.split(0.70, seed).unwrap();
        }
        datasets
    }

    fn tiny_compare_cfg() -> CompareConfig {
        CompareConfig {
            hidden: vec![16],
            train: TrainConfig {
                epochs: 25,
                batch_size: 16,
                ..TrainConfig::default()
            },
            ks: vec![1, 2],
            init_seed: 3,
            config_hash: "abc123".to_string(),
            master_seed: 99,
        }
    }

    #[test]
    fn compare_trains_one_model_per_feature_set() {
        let datasets = split_all(
            vec![
                toy_dataset(FeatureSet::Position, 120),
                toy_dataset(FeatureSet::PositionHeight, 120),
            ],
            7,
        );
        let report = compare_feature_sets(&datasets, &tiny_compare_cfg()).unwrap();
        assert_eq!(report.reports.len(), 2);
        assert_eq!(report.reports[0].feature_set, FeatureSet::Position);
        assert_eq!(report.reports[0].n_test, 36);
        // The label is a clean function of position here, so both models
        // should do far better than the 25% chance level.
        for fs in [FeatureSet::Position, FeatureSet::PositionHeight] {
            assert!(report.top1(fs).unwrap() > 0.6, "{:?}", report.top1(fs));
        }
        assert_eq!(report.config_hash, "abc123");
        assert_eq!(report.master_seed, 99);

        // Determinism: the same inputs give an identical report.
        let again = compare_feature_sets(&datasets, &tiny_compare_cfg()).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn compare_rejects_mismatched_splits() {
        let a = split_all(vec![toy_dataset(FeatureSet::Position, 120)], 7);
        let b = split_all(vec![toy_dataset(FeatureSet::PositionHeight, 120)], 8);
        let datasets = vec![a.into_iter().next().unwrap(), b.into_iter().next().unwrap()];
        let err = compare_feature_sets(&datasets, &tiny_compare_cfg()).unwrap_err();
        assert!(err.to_string().contains("split"), "{err}");

        // Unsplit datasets are rejected too.
        let datasets = vec![toy_dataset(FeatureSet::Position, 120)];
        assert!(compare_feature_sets(&datasets, &tiny_compare_cfg()).is_err());

        // Duplicated feature sets are rejected.
        let datasets = split_all(
            vec![
                toy_dataset(FeatureSet::Position, 120),
                toy_dataset(FeatureSet::Position, 120),
            ],
            7,
        );
        assert!(compare_feature_sets(&datasets, &tiny_compare_cfg()).is_err());
    }

    #[test]
    fn compare_rejects_different_samples() {
        let mut a = toy_dataset(FeatureSet::Position, 120);
        // Same shape and split, but one label flipped: not the same samples.
        let mut examples = a.examples().to_vec();
        let flipped = (examples[0].label.index() + 1) % 4;
        examples[0] = LabeledExample {
            label: BeamLabel::new(flipped, 4).unwrap(),
            ..examples[0].clone()
        };
        let mut b = Dataset::from_examples(examples, 4, FeatureSet::Position).unwrap();
        a.split(0.70, 7).unwrap();
        b.split(0.70, 7).unwrap();
        let err = compare_feature_sets(&[a, b], &tiny_compare_cfg()).unwrap_err();
        assert!(err.to_string().contains("labels"), "{err}");
    }

    #[test]
    fn reports_round_trip_losslessly() {
        let datasets = split_all(vec![toy_dataset(FeatureSet::Position, 120)], 7);
        let report = compare_feature_sets(&datasets, &tiny_compare_cfg()).unwrap();
        let mut buf = Vec::new();
        write_report_json(&mut buf, &report).unwrap();
        let back = read_report_json(&buf[..]).unwrap();
        assert_eq!(report, back);

        let bad = String::from_utf8(buf).unwrap().replace("\"version\": 1", "\"version\": 7");
        assert!(read_report_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn csv_report_is_deterministic_and_complete() {
        let datasets = split_all(vec![toy_dataset(FeatureSet::Position, 120)], 7);
        let report = compare_feature_sets(&datasets, &tiny_compare_cfg()).unwrap();
        let mut first = Vec::new();
        write_report_csv(&mut first, &report).unwrap();
        let mut second = Vec::new();
        write_report_csv(&mut second, &report).unwrap();
        assert_eq!(first, second);

        let text = String::from_utf8(first).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Header + (overall + height bins + speed bins) rows for each k.
        let bins: usize = report.reports[0].strata.iter().map(|s| s.bins.len()).sum();
        assert_eq!(lines.len(), 1 + 2 * (1 + bins));
        assert!(lines[0].starts_with("report_version,config_hash,master_seed"));
        assert!(lines[1].contains("position"));
    }

    #[test]
    fn evaluate_model_validates_inputs() {
        let datasets = split_all(vec![toy_dataset(FeatureSet::Position, 120)], 7);
        let ds = &datasets[0];
        let arch = MlpArchitecture {
            input_dim: 2,
            hidden: vec![8],
            output_dim: 4,
        };
        let model = MlpModel::<f64>::new(arch, 0).unwrap();
        let test = ds.test_matrix().unwrap();
        let meta = ds.test_meta();
        let ctx = ReportContext {
            feature_set: FeatureSet::Position,
            q: 4,
            config_hash: String::new(),
            master_seed: 0,
            split_seed: 7,
        };
        assert!(evaluate_model(&model, &test, &meta, &[1, 2], &ctx).is_ok());
        assert!(evaluate_model(&model, &test, &meta, &[], &ctx).is_err());
        assert!(evaluate_model(&model, &test, &meta, &[5], &ctx).is_err());
        assert!(evaluate_model(&model, &test, &meta[1..], &[1], &ctx).is_err());
    }
}
