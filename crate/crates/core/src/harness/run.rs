use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{DetectorKind, ExperimentKind, ExperimentSpec, HarnessError};
use crate::detector::{
    calibrate_threshold, knn_score, nearest_rank_quantile, ocsvm_score, svdd_train, FeatureVector, KnnModel,
    Normalization, OcSvmModel, Phase, SvddModel, TrainConfig,
};
use crate::fmt_real;
use crate::metrics::{classification_metrics, confusion, ClassificationMetrics, ConfusionMatrix, Metric};
use crate::random::{derive_seed, rng_from_seed, stream};
use crate::scenario::{build_drop, make_datasets, position_ser, select_ser, Drop, LabeledSample, ScenarioConfig};
use crate::whitening::{write_bernstein_csv, BernsteinParams, BernsteinRow, BERNSTEIN_CSV_HEADER};
use crate::numerics::C64;

/// A detector fitted to one training set, with its decision threshold.
#[derive(Debug, Clone)]
pub enum TrainedDetector {
    Svdd(SvddModel),
    /// Anomalous where the decision value is positive.
    Ocsvm(OcSvmModel),
    /// Threshold is a quantile of leave-one-out training scores.
    Knn { model: KnnModel, threshold: f64 },
}

impl TrainedDetector {
    pub fn fit(kind: DetectorKind, train: &[FeatureVector], spec: &ExperimentSpec, seed: u64) -> Result<Self, HarnessError> {
        let q = spec.train.threshold_quantile;
        Ok(match kind {
            DetectorKind::ZrdSvdd | DetectorKind::SvddNoZscore => {
                let normalization =
                    if kind == DetectorKind::ZrdSvdd { Normalization::ZScore } else { Normalization::None };
                let cfg = TrainConfig { seed, normalization, ..spec.train.clone() };
                let (mut model, _) = svdd_train(train, &cfg)?;
                calibrate_threshold(&mut model, train, q)?;
                TrainedDetector::Svdd(model)
            }
            DetectorKind::Ocsvm => TrainedDetector::Ocsvm(spec.ocsvm.fit(train)?),
            DetectorKind::Knn5 | DetectorKind::Knn20 => {
                let k = kind.knn_k().expect("knn kind");
                let mut loo = Vec::with_capacity(train.len());
                for i in 0..train.len() {
                    let rest: Vec<FeatureVector> =
                        train.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
                    loo.push(knn_score(&rest, &train[i], k)?);
                }
                let threshold = nearest_rank_quantile(&loo, q)?;
                TrainedDetector::Knn { model: KnnModel::new(train.to_vec(), k)?, threshold }
            }
        })
    }

    pub fn is_anomalous(&self, x: &FeatureVector) -> Result<bool, HarnessError> {
        Ok(match self {
            TrainedDetector::Svdd(m) => m.is_anomalous(x)?,
            TrainedDetector::Ocsvm(m) => ocsvm_score(m, x)? > 0.0,
            TrainedDetector::Knn { model, threshold } => model.score(x)? > *threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRow {
    pub grid_value: f64,
    pub detector: DetectorKind,
    pub drop_index: usize,
    pub drop_seed: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassificationMetrics,
}

/// SER of one policy over all test positions of one drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerRow {
    pub radius_m: f64,
    pub policy: String,
    pub drop_index: usize,
    pub drop_seed: u64,
    pub ser: f64,
    pub activations: usize,
    pub fallbacks: usize,
    pub symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerPositionRow {
    pub radius_m: f64,
    pub policy: String,
    pub drop_index: usize,
    pub position: usize,
    pub ser: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Detection { kind: ExperimentKind, rows: Vec<DetectionRow> },
    Ser { rows: Vec<SerRow>, positions: Vec<SerPositionRow> },
    Bernstein { rows: Vec<BernsteinRow> },
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn drop_seed(spec: &ExperimentSpec, drop_index: usize) -> u64 {
    derive_seed(spec.master_seed(), drop_index as u64)
}

fn make_drop(spec: &ExperimentSpec, scenario: &ScenarioConfig, seed: u64) -> Result<Drop, HarnessError> {
    Ok(build_drop(&mut rng_from_seed(seed), scenario, &spec.channel)?)
}

/// `n_t` training samples drawn without replacement from the training split.
fn subsample(train: &[LabeledSample], n_t: usize, seed: u64) -> Vec<FeatureVector> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(derive_seed(seed, stream::SUBSET), n_t as u64)));
    idx[..n_t].iter().map(|&i| train[i].features.clone()).collect()
}

fn detection_rows(
    spec: &ExperimentSpec,
    grid_value: f64,
    drop_index: usize,
    seed: u64,
    train: &[FeatureVector],
    test: &[LabeledSample],
) -> Result<Vec<DetectionRow>, HarnessError> {
    let labels: Vec<bool> = test.iter().map(|s| s.label).collect();
    let mut rows = Vec::new();
    for &kind in &spec.experiment.detectors {
        let det = TrainedDetector::fit(kind, train, spec, derive_seed(seed, stream::TRAIN))?;
        let preds = test.iter().map(|s| det.is_anomalous(&s.features)).collect::<Result<Vec<_>, _>>()?;
        let cm = confusion(&preds, &labels)?;
        rows.push(DetectionRow {
            grid_value,
            detector: kind,
            drop_index,
            drop_seed: seed,
            confusion: cm,
            metrics: classification_metrics(&cm),
        });
    }
    Ok(rows)
}

fn run_f1_vs_nt(spec: &ExperimentSpec) -> Result<Vec<DetectionRow>, HarnessError> {
    let per_drop = (0..spec.experiment.n_drops)
        .into_par_iter()
        .map(|d| {
            let seed = drop_seed(spec, d);
            let drop = make_drop(spec, &spec.scenario, seed)?;
            let data = make_datasets(&drop, &spec.scenario)?;
            let mut rows = Vec::new();
            for &v in &spec.experiment.grid {
                let train = subsample(&data.train, v as usize, seed);
                rows.push(detection_rows(spec, v, d, seed, &train, &data.test)?);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(grid_major(per_drop))
}

fn run_detection_grid(
    spec: &ExperimentSpec,
    scenario_for: impl Fn(f64) -> ScenarioConfig + Sync,
) -> Result<Vec<DetectionRow>, HarnessError> {
    let n_t = spec.experiment.n_train;
    let per_drop = (0..spec.experiment.n_drops)
        .into_par_iter()
        .map(|d| {
            let seed = drop_seed(spec, d);
            let mut rows = Vec::new();
            for &v in &spec.experiment.grid {
                let scenario = scenario_for(v);
                let drop = make_drop(spec, &scenario, seed)?;
                let data = make_datasets(&drop, &scenario)?;
                let train = subsample(&data.train, n_t, seed);
                rows.push(detection_rows(spec, v, d, seed, &train, &data.test)?);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(grid_major(per_drop))
}

/// Reorders `[drop][grid][item]` into grid-major, then drop, then item order.
fn grid_major<T>(per_drop: Vec<Vec<Vec<T>>>) -> Vec<T> {
    let n_grid = per_drop.first().map_or(0, Vec::len);
    let mut by_grid: Vec<Vec<T>> = (0..n_grid).map(|_| Vec::new()).collect();
    for drop_rows in per_drop {
        for (g, rows) in drop_rows.into_iter().enumerate() {
            by_grid[g].extend(rows);
        }
    }
    by_grid.into_iter().flatten().collect()
}

fn run_ser(spec: &ExperimentSpec) -> Result<(Vec<SerRow>, Vec<SerPositionRow>), HarnessError> {
    let n_t = spec.experiment.n_train;
    let per_drop = (0..spec.experiment.n_drops)
        .into_par_iter()
        .map(|d| {
            let seed = drop_seed(spec, d);
            let mut out = Vec::new();
            for &radius in &spec.experiment.grid {
                let scenario = spec.scenario_at(radius);
                let drop = make_drop(spec, &scenario, seed)?;
                let data = make_datasets(&drop, &scenario)?;
                let train = subsample(&data.train, n_t, seed);
                let results = scenario
                    .test_indices
                    .as_slice()
                    .par_iter()
                    .map(|&p| position_ser(&drop, p, &scenario, scenario.symbols_per_position))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut policies: Vec<(String, Vec<bool>)> = vec![
                    ("always_on".into(), vec![true; results.len()]),
                    ("always_off".into(), vec![false; results.len()]),
                    ("genie".into(), results.iter().map(|r| r.sample.label).collect()),
                ];
                for &kind in &spec.experiment.detectors {
                    let det = TrainedDetector::fit(kind, &train, spec, derive_seed(seed, stream::TRAIN))?;
                    let act = results
                        .iter()
                        .map(|r| Ok(r.sample.trigger(Phase::Test, &spec.triggers) && det.is_anomalous(&r.sample.features)?))
                        .collect::<Result<Vec<_>, HarnessError>>()?;
                    policies.push((kind.name().into(), act));
                }
                let mut rows = Vec::new();
                let mut positions = Vec::new();
                for (policy, act) in policies {
                    let s = select_ser(&results, &act);
                    for &(position, ser, active) in &s.per_position {
                        positions.push(SerPositionRow { radius_m: radius, policy: policy.clone(), drop_index: d, position, ser, active });
                    }
                    rows.push(SerRow {
                        radius_m: radius,
                        policy,
                        drop_index: d,
                        drop_seed: seed,
                        ser: s.aggregate,
                        activations: s.activations,
                        fallbacks: s.fallbacks,
                        symbols: results.iter().map(|r| r.n_symbols).sum(),
                    });
                }
                out.push(vec![(rows, positions)]);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (rows, positions): (Vec<_>, Vec<_>) = grid_major(per_drop).into_iter().unzip();
    Ok((rows.into_iter().flatten().collect(), positions.into_iter().flatten().collect()))
}

fn run_bernstein(spec: &ExperimentSpec) -> Result<Vec<BernsteinRow>, HarnessError> {
    let b = &spec.bernstein;
    let g = vec![C64::new(b.g_amplitude, 0.0); b.n_r];
    let mut params = Vec::new();
    for &factor in &spec.experiment.grid {
        for &t_s in &b.t_s {
            for &sigma in &b.sigma_m {
                let c1 = b.g_amplitude * b.g_amplitude * b.n_r as f64 + b.n_r as f64 * sigma * sigma;
                params.push(BernsteinParams::new(factor * c1, t_s, sigma, g.clone())?);
            }
        }
    }
    let seed = spec.master_seed();
    Ok(params
        .par_iter()
        .enumerate()
        .map(|(i, p)| BernsteinRow::evaluate(derive_seed(seed, i as u64), p, b.trials))
        .collect())
}

/// Runs the sweep in memory.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let kind = spec.experiment.kind;
    Ok(match kind {
        ExperimentKind::F1VsNt => ExperimentOutput::Detection { kind, rows: run_f1_vs_nt(spec)? },
        ExperimentKind::F1VsNf => ExperimentOutput::Detection {
            kind,
            rows: run_detection_grid(spec, |v| ScenarioConfig { n_f_per_rb: v as usize, ..spec.scenario.clone() })?,
        },
        ExperimentKind::DetectionVsRadius => {
            ExperimentOutput::Detection { kind, rows: run_detection_grid(spec, |v| spec.scenario_at(v))? }
        }
        ExperimentKind::SerVsRadius => {
            let (rows, positions) = run_ser(spec)?;
            ExperimentOutput::Ser { rows, positions }
        }
        ExperimentKind::Bernstein => ExperimentOutput::Bernstein { rows: run_bernstein(spec)? },
    })
}

/// Undefined metrics count as zero in means; their number is reported alongside.
fn mean_metric(values: &[Metric]) -> (f64, usize) {
    let sum: f64 = values.iter().filter_map(|m| m.value()).sum();
    let undefined = values.iter().filter(|m| m.value().is_none()).count();
    (sum / values.len() as f64, undefined)
}

/// Groups rows by key in first-seen order.
fn group_by<T, K: PartialEq>(rows: &[T], key: impl Fn(&T) -> K) -> Vec<(K, Vec<&T>)> {
    let mut groups: Vec<(K, Vec<&T>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    groups
}

impl ExperimentOutput {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentOutput::Detection { kind, .. } => *kind,
            ExperimentOutput::Ser { .. } => ExperimentKind::SerVsRadius,
            ExperimentOutput::Bernstein { .. } => ExperimentKind::Bernstein,
        }
    }

    /// `(file name, contents)` of every data CSV.
    pub fn csv_files(&self) -> Vec<(String, String)> {
        let kind = self.kind().name();
        let mut files = vec![(format!("{kind}_raw.csv"), self.raw_csv()), (format!("{kind}_agg.csv"), self.agg_csv())];
        if let ExperimentOutput::Ser { positions, .. } = self {
            let mut s = String::from("position,radius_m,policy,drop,ser,activations\n");
            for p in positions {
                writeln!(s, "{},{},{},{},{},{}", p.position + 1, p.radius_m, p.policy, p.drop_index, fmt_real(p.ser), u8::from(p.active))
                    .unwrap();
            }
            files.push((format!("{kind}_positions.csv"), s));
        }
        files
    }

    pub fn raw_csv(&self) -> String {
        let mut s = String::new();
        match self {
            ExperimentOutput::Detection { rows, .. } => {
                s.push_str("grid_value,detector,drop,drop_seed,tp,fp,fn,tn,sensitivity,precision,f1\n");
                for r in rows {
                    let c = &r.confusion;
                    writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        r.grid_value,
                        r.detector,
                        r.drop_index,
                        r.drop_seed,
                        c.tp,
                        c.fp,
                        c.fn_,
                        c.tn,
                        r.metrics.sensitivity.csv_field(),
                        r.metrics.precision.csv_field(),
                        r.metrics.f1.csv_field()
                    )
                    .unwrap();
                }
            }
            ExperimentOutput::Ser { rows, .. } => {
                s.push_str("radius_m,policy,drop,drop_seed,ser,activations,fallbacks,symbols\n");
                for r in rows {
                    writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        r.radius_m,
                        r.policy,
                        r.drop_index,
                        r.drop_seed,
                        fmt_real(r.ser),
                        r.activations,
                        r.fallbacks,
                        r.symbols
                    )
                    .unwrap();
                }
            }
            ExperimentOutput::Bernstein { rows } => {
                let mut buf = Vec::new();
                write_bernstein_csv(&mut buf, rows).expect("in-memory write");
                s = String::from_utf8(buf).expect("ascii csv");
            }
        }
        s
    }

    pub fn agg_csv(&self) -> String {
        let mut s = String::new();
        match self {
            ExperimentOutput::Detection { rows, .. } => {
                s.push_str(
                    "grid_value,detector,n_drops,sensitivity,precision,f1,undefined_sensitivity,undefined_precision,undefined_f1\n",
                );
                for ((v, det), group) in group_by(rows, |r| (r.grid_value, r.detector)) {
                    let col = |f: fn(&ClassificationMetrics) -> Metric| {
                        mean_metric(&group.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
                    };
                    let (sens, us) = col(|m| m.sensitivity);
                    let (prec, up) = col(|m| m.precision);
                    let (f1, uf) = col(|m| m.f1);
                    writeln!(
                        s,
                        "{v},{det},{},{},{},{},{us},{up},{uf}",
                        group.len(),
                        fmt_real(sens),
                        fmt_real(prec),
                        fmt_real(f1)
                    )
                    .unwrap();
                }
            }
            ExperimentOutput::Ser { rows, .. } => {
                s.push_str("radius_m,policy,n_drops,ser,activations,symbols\n");
                for ((radius, policy), group) in group_by(rows, |r| (r.radius_m, r.policy.clone())) {
                    let n = group.len() as f64;
                    let ser = group.iter().map(|r| r.ser).sum::<f64>() / n;
                    let act = group.iter().map(|r| r.activations as f64).sum::<f64>() / n;
                    let symbols: usize = group.iter().map(|r| r.symbols).sum();
                    writeln!(s, "{radius},{policy},{},{},{},{symbols}", group.len(), fmt_real(ser), fmt_real(act)).unwrap();
                }
            }
            ExperimentOutput::Bernstein { rows } => {
                s.push_str(BERNSTEIN_CSV_HEADER);
                s.push_str(",binomial_sigma,violates_bound\n");
                for r in rows {
                    writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{}",
                        fmt_real(r.epsilon),
                        r.t_s,
                        fmt_real(r.sigma_m),
                        fmt_real(r.g_norm),
                        fmt_real(r.bound),
                        fmt_real(r.empirical_probability),
                        r.trials,
                        fmt_real(r.binomial_sigma()),
                        u8::from(r.violates_bound())
                    )
                    .unwrap();
                }
            }
        }
        s
    }
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    kind: ExperimentKind,
    master_seed: u64,
    config: &'a ExperimentSpec,
    files: Vec<FileEntry>,
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Writes the data CSVs, the resolved config and `manifest.json` into `dir`.
pub fn write_outputs(spec: &ExperimentSpec, output: &ExperimentOutput, dir: &Path) -> Result<RunSummary, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut contents = output.csv_files();
    contents.push(("config.toml".into(), spec.to_toml()));
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (name, body) in &contents {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        entries.push(FileEntry { name: name.clone(), bytes: body.len(), sha256: hex_sha256(body.as_bytes()) });
        files.push(path);
    }
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: spec.experiment.kind,
        master_seed: spec.master_seed(),
        config: spec,
        files: entries,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&manifest_path, json + "\n").map_err(|e| HarnessError::io(&manifest_path, e))?;
    Ok(RunSummary { output_dir: dir.to_path_buf(), files, manifest: manifest_path })
}

/// Runs the sweep and writes its outputs into `experiment.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunSummary, HarnessError> {
    let output = execute(spec)?;
    write_outputs(spec, &output, &spec.experiment.output_dir)
}
