//! Benchmark driver: one JSON config in, deterministic report files out.
//!
//! A run walks every (dataset, model, rate) cell of the protocol grid.
//! Per dataset: split, fit any discretizer on the train half only, draw one
//! test mask plan per rate. Mask plans depend on the dataset and rate but
//! not on the model, so every model answers exactly the same masked cells.
//! Per model: train once, then predict and score at every rate. Failures
//! below the config level (a model that cannot fit, a degenerate rate) are
//! recorded in the manifest and the run continues; the manifest's
//! `complete` flag reports whether every cell succeeded.
//!
//! Seeds form a tree rooted at the config seed, so any report row can be
//! replayed in isolation: dataset d gets `derive2(seed, SPLIT, d)`, which
//! seeds the split and fans out to per-rate mask seeds
//! (`derive2(_, TEST_MASK, r)`) and per-model train seeds
//! (`derive2(_, MODEL_INIT, m)`); imputation at rate r uses
//! `derive2(train_seed, IMPUTE, r)`, refined per instance inside
//! [`predict_chunked`]. Chunked prediction over i.i.d. instances therefore
//! yields the same table for any chunk count.

mod predict;
mod reports;

pub use predict::{
    chunk_ranges, predict_chunked, prepare_data, prepare_views, read_model, train_model,
    write_model, PreparedData, PreparedModel,
};
pub use reports::{emit_reports, write_rank_reports, MetricRow};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chordal::ScoreConfig;
use crate::data::{load_csv, DatasetKind};
use crate::error::{Error, Result};
use crate::mask::{make_mask_plan, MaskPlan, TEST_RATES};
use crate::metrics::{self, column_ranks, friedman_ranks, nemenyi_cd, MetricReport, PredictionTable, RankTable};
use crate::seed::{self, stage};
use crate::selfsup::{HyperGrid, ImputationConfig, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    MostFreq,
    Median,
    Chordal,
    Made,
    Dae,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::MostFreq,
        ModelName::Median,
        ModelName::Chordal,
        ModelName::Made,
        ModelName::Dae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::MostFreq => "most_freq",
            ModelName::Median => "median",
            ModelName::Chordal => "chordal",
            ModelName::Made => "made",
            ModelName::Dae => "dae",
        }
    }

    pub fn parse(s: &str) -> Result<ModelName> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown model {s:?}")))
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub kind: DatasetKind,
    /// Optional schema sidecar overriding CSV kind inference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

/// Neural-model knobs shared by both self-supervised imputers; each keeps
/// its own hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnSettings {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub grid_draws: usize,
    /// Overrides the grid's batch size when set.
    pub batch: Option<usize>,
    pub made_grid: HyperGrid,
    pub dae_grid: HyperGrid,
}

impl Default for NnSettings {
    fn default() -> NnSettings {
        let base = TrainConfig::made_default();
        NnSettings {
            epochs: base.epochs,
            patience: base.patience,
            lr: base.lr,
            grid_draws: base.grid_draws,
            batch: None,
            made_grid: HyperGrid::made_default(),
            dae_grid: HyperGrid::dae_default(),
        }
    }
}

impl NnSettings {
    pub(crate) fn train_config(&self, model: ModelName, mask_rate: f64) -> TrainConfig {
        let (grid, masked_reconstruction) = match model {
            ModelName::Dae => (self.dae_grid.clone(), true),
            _ => (self.made_grid.clone(), false),
        };
        TrainConfig {
            mask_rate,
            epochs: self.epochs,
            patience: self.patience,
            lr: self.lr,
            grid,
            grid_draws: self.grid_draws,
            batch: self.batch,
            masked_reconstruction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChordalSettings {
    pub alpha: f64,
    pub max_clique: usize,
    pub max_cells: usize,
    /// m-estimate smoothing mass spread over each clique table.
    pub m: f64,
}

impl Default for ChordalSettings {
    fn default() -> ChordalSettings {
        let s = ScoreConfig::default();
        ChordalSettings { alpha: s.alpha, max_clique: s.max_clique, max_cells: s.max_cells, m: 1.0 }
    }
}

impl ChordalSettings {
    pub(crate) fn score_config(&self) -> ScoreConfig {
        ScoreConfig { alpha: self.alpha, max_clique: self.max_clique, max_cells: self.max_cells }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub datasets: Vec<DatasetSpec>,
    pub models: Vec<ModelName>,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    /// Masking rate for self-supervised training epochs.
    #[serde(default = "default_train_mask_rate")]
    pub train_mask_rate: f64,
    /// Test-time rates, evaluated in the order given.
    #[serde(default = "default_test_rates")]
    pub test_rates: Vec<f64>,
    #[serde(default = "default_samples")]
    pub imputation_samples: usize,
    #[serde(default = "default_chunks")]
    pub chunks: usize,
    /// Equal-frequency bins for continuous data feeding categorical models.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// When false, every reported runtime is 0 and reruns of the same
    /// config are byte-identical.
    #[serde(default = "default_true")]
    pub timings: bool,
    #[serde(default)]
    pub nn: NnSettings,
    #[serde(default)]
    pub chordal: ChordalSettings,
}

fn default_split_ratio() -> f64 {
    0.8
}

fn default_train_mask_rate() -> f64 {
    0.2
}

fn default_test_rates() -> Vec<f64> {
    TEST_RATES.to_vec()
}

fn default_samples() -> usize {
    ImputationConfig::default().samples
}

fn default_chunks() -> usize {
    1
}

fn default_bins() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn kind_str(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Categorical => "categorical",
        DatasetKind::Continuous => "continuous",
        DatasetKind::Discretized => "discretized",
    }
}

impl BenchConfig {
    /// Defaults with no datasets or models; callers fill those in.
    pub fn new(seed: u64, out: impl Into<PathBuf>) -> BenchConfig {
        BenchConfig {
            version: CONFIG_VERSION,
            seed,
            out: out.into(),
            datasets: Vec::new(),
            models: Vec::new(),
            split_ratio: default_split_ratio(),
            train_mask_rate: default_train_mask_rate(),
            test_rates: default_test_rates(),
            imputation_samples: ImputationConfig::default().samples,
            chunks: default_chunks(),
            bins: default_bins(),
            timings: true,
            nn: NnSettings::default(),
            chordal: ChordalSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.version != CONFIG_VERSION {
            return Err(Error::FormatVersion { found: self.version, expected: CONFIG_VERSION });
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || d.name.contains([',', '"', '\n']) {
                return bad(format!("dataset name {:?} unusable in CSV reports", d.name));
            }
            if !names.insert(&d.name) {
                return bad(format!("duplicate dataset name {:?}", d.name));
            }
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m) {
                return bad(format!("duplicate model {m}"));
            }
        }
        for d in &self.datasets {
            for &m in &self.models {
                let mismatch = match m {
                    ModelName::MostFreq => d.kind == DatasetKind::Continuous,
                    ModelName::Median => d.kind != DatasetKind::Continuous,
                    _ => false,
                };
                if mismatch {
                    return bad(format!(
                        "model {m} does not apply to {} dataset {:?}",
                        kind_str(d.kind),
                        d.name
                    ));
                }
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio {} outside (0, 1)", self.split_ratio));
        }
        if !(self.train_mask_rate > 0.0 && self.train_mask_rate < 1.0) {
            return bad(format!("train mask rate {} outside (0, 1)", self.train_mask_rate));
        }
        if self.test_rates.is_empty() {
            return bad("no test rates".into());
        }
        for (i, &r) in self.test_rates.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("test rate {r} outside (0, 1)"));
            }
            if self.test_rates[..i].contains(&r) {
                return bad(format!("duplicate test rate {r}"));
            }
        }
        if self.imputation_samples == 0 {
            return bad("imputation samples must be positive".into());
        }
        if self.chunks == 0 {
            return bad("chunk count must be positive".into());
        }
        if self.bins < 2 {
            return bad(format!("{} bins, need at least 2", self.bins));
        }
        for m in [ModelName::Made, ModelName::Dae] {
            if self.models.contains(&m) {
                self.nn.train_config(m, self.train_mask_rate).validate()?;
            }
        }
        if self.models.contains(&ModelName::Chordal) {
            self.chordal.score_config().validate()?;
            if !(self.chordal.m >= 0.0 && self.chordal.m.is_finite()) {
                return bad(format!("smoothing mass {} must be finite and non-negative", self.chordal.m));
            }
        }
        Ok(())
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<BenchConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: BenchConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(cfg: &BenchConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateManifest {
    pub rate: f64,
    pub impute_seed: u64,
    pub predict_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model: ModelName,
    pub train_seed: u64,
    pub train_s: f64,
    pub rates: Vec<RateManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: DatasetKind,
    pub split_seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Per test rate, in schedule order; shared by every model.
    pub mask_seeds: Vec<u64>,
    pub models: Vec<ModelManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything needed to audit or replay a run: the config snapshot, the
/// derived seed of every stage, timings, and any per-stage errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub config: BenchConfig,
    pub datasets: Vec<DatasetManifest>,
    pub artifacts: Vec<String>,
    pub complete: bool,
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;

    let icfg = ImputationConfig { samples: cfg.imputation_samples };
    let mut rows: Vec<MetricRow> = Vec::new();
    let mut datasets: Vec<DatasetManifest> = Vec::new();
    let mut complete = true;

    for (d_idx, spec) in cfg.datasets.iter().enumerate() {
        let split_seed = seed::derive2(cfg.seed, stage::SPLIT, d_idx as u64);
        let mut dm = DatasetManifest {
            name: spec.name.clone(),
            kind: spec.kind,
            split_seed,
            train_rows: 0,
            test_rows: 0,
            mask_seeds: (0..cfg.test_rates.len())
                .map(|r| seed::derive2(split_seed, stage::TEST_MASK, r as u64))
                .collect(),
            models: Vec::new(),
            error: None,
        };

        let prepared = load_csv(&spec.path, spec.schema.as_deref())
            .and_then(|ds| prepare_data(&ds, spec.kind, cfg.bins, cfg.split_ratio, split_seed));
        let data = match prepared {
            Ok(d) => d,
            Err(e) => {
                dm.error = Some(e.to_string());
                complete = false;
                datasets.push(dm);
                continue;
            }
        };
        dm.train_rows = data.train.n();
        dm.test_rows = data.test.n();

        let plans: Result<Vec<MaskPlan>> = cfg
            .test_rates
            .iter()
            .zip(&dm.mask_seeds)
            .map(|(&rate, &ms)| make_mask_plan(data.test.n(), data.test.width(), rate, ms))
            .collect();
        let plans = match plans {
            Ok(p) => p,
            Err(e) => {
                dm.error = Some(e.to_string());
                complete = false;
                datasets.push(dm);
                continue;
            }
        };

        for (m_idx, &model_name) in cfg.models.iter().enumerate() {
            let train_seed = seed::derive2(split_seed, stage::MODEL_INIT, m_idx as u64);
            let mut mm = ModelManifest {
                model: model_name,
                train_seed,
                train_s: 0.0,
                rates: Vec::new(),
                error: None,
            };
            let started = Instant::now();
            let model = match train_model(model_name, &data, cfg, train_seed) {
                Ok(m) => {
                    if cfg.timings {
                        mm.train_s = started.elapsed().as_secs_f64();
                    }
                    m
                }
                Err(e) => {
                    mm.error = Some(e.to_string());
                    complete = false;
                    dm.models.push(mm);
                    continue;
                }
            };

            for (r_idx, (plan, &rate)) in plans.iter().zip(&cfg.test_rates).enumerate() {
                let impute_seed = seed::derive2(train_seed, stage::IMPUTE, r_idx as u64);
                let mut rm = RateManifest {
                    rate,
                    impute_seed,
                    predict_s: 0.0,
                    metric: None,
                    value: None,
                    m: None,
                    error: None,
                };
                let started = Instant::now();
                let scored = predict_chunked(&model, &data.test, plan, cfg.chunks, &icfg, impute_seed)
                    .and_then(|preds| score(&preds, &data, plan));
                if cfg.timings {
                    rm.predict_s = started.elapsed().as_secs_f64();
                }
                match scored {
                    Ok(report) => {
                        rm.metric = Some(report.metric.as_str().to_string());
                        rm.value = Some(report.value);
                        rm.m = Some(report.m_total);
                        rows.push(MetricRow {
                            dataset: spec.name.clone(),
                            model: model_name.as_str().to_string(),
                            rate,
                            metric: report.metric.as_str().to_string(),
                            value: report.value,
                            m: report.m_total,
                            runtime_s: rm.predict_s,
                        });
                    }
                    Err(e) => {
                        rm.error = Some(e.to_string());
                        complete = false;
                    }
                }
                mm.rates.push(rm);
            }
            dm.models.push(mm);
        }
        datasets.push(dm);
    }

    let ranks = rank_metric_rows(&rows)?;
    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        datasets,
        artifacts: reports::ARTIFACTS.iter().map(|s| s.to_string()).collect(),
        complete,
    };
    emit_reports(&rows, &ranks, &manifest, &cfg.out)?;
    Ok(manifest)
}

fn score(preds: &PredictionTable, data: &PreparedData, plan: &MaskPlan) -> Result<MetricReport> {
    match data.kind {
        DatasetKind::Continuous => metrics::wnrmse(preds, &data.test, plan, &data.sigmas),
        _ => metrics::wapmc(preds, &data.test, plan),
    }
}

/// One rank table per rate from report rows. Models and rates keep their
/// first-appearance order; a dataset enters a rate's table only when every
/// model scored it, since incomplete columns would bias the ranking.
pub fn rank_metric_rows(rows: &[MetricRow]) -> Result<Vec<(f64, RankTable)>> {
    let mut models: Vec<String> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    for r in rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !rates.contains(&r.rate) {
            rates.push(r.rate);
        }
    }
    let mut out = Vec::new();
    for &rate in &rates {
        let mut cell: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        let mut datasets: Vec<&str> = Vec::new();
        for r in rows.iter().filter(|r| r.rate == rate) {
            if cell.insert((&r.dataset, &r.model), r.value).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate row for ({}, {}) at rate {rate}",
                    r.dataset, r.model
                )));
            }
            if !datasets.contains(&r.dataset.as_str()) {
                datasets.push(&r.dataset);
            }
        }
        let mut names: Vec<String> = Vec::new();
        let mut scores: Vec<Vec<f64>> = vec![Vec::new(); models.len()];
        for d in datasets {
            let column: Option<Vec<f64>> =
                models.iter().map(|m| cell.get(&(d, m.as_str())).copied()).collect();
            if let Some(column) = column {
                names.push(d.to_string());
                for (m_idx, v) in column.into_iter().enumerate() {
                    scores[m_idx].push(v);
                }
            }
        }
        if names.is_empty() {
            continue;
        }
        let table = if models.len() >= 2 && names.len() >= 2 {
            friedman_ranks(&models, &names, &scores)?
        } else {
            degenerate_rank_table(&models, &names, &scores)
        };
        out.push((rate, table));
    }
    Ok(out)
}

/// Friedman's statistic is the same arithmetic below its k >= 2, N >= 2
/// preconditions; it just carries no significance there. Rank tables for
/// tiny runs stay useful as summaries.
fn degenerate_rank_table(models: &[String], datasets: &[String], scores: &[Vec<f64>]) -> RankTable {
    let k = models.len();
    let n = datasets.len();
    let mut ranks = vec![vec![0.0; n]; k];
    for d in 0..n {
        for (m, r) in column_ranks(scores, d).into_iter().enumerate() {
            ranks[m][d] = r;
        }
    }
    let mean_ranks: Vec<f64> =
        ranks.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let kf = k as f64;
    let nf = n as f64;
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let friedman_stat = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);
    let cd = nemenyi_cd(k, n);
    RankTable {
        models: models.to_vec(),
        datasets: datasets.to_vec(),
        scores: scores.to_vec(),
        ranks,
        mean_ranks,
        friedman_stat,
        cd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfsup::ImputationConfig;
    use rand::Rng;
    use std::fmt::Write as _;

    /// Five 3-valued attributes; a drives b and c, d and e are noise.
    fn cat_chain_csv(path: &Path, n: usize, seed: u64) {
        let mut rng = seed::rng(seed);
        let mut text = String::from("a,b,c,d,e\n");
        for _ in 0..n {
            let a: usize = rng.gen_range(0..3);
            let b = if rng.gen_bool(0.95) { a } else { rng.gen_range(0..3) };
            let c = if rng.gen_bool(0.95) { a } else { rng.gen_range(0..3) };
            let d: usize = rng.gen_range(0..3);
            let e: usize = rng.gen_range(0..3);
            writeln!(text, "v{a},v{b},v{c},v{d},v{e}").unwrap();
        }
        fs::write(path, text).unwrap();
    }

    /// Four strongly coupled continuous attributes plus one noise column.
    fn cont_chain_csv(path: &Path, n: usize, seed: u64) {
        let mut rng = seed::rng(seed);
        let mut text = String::from("x,y,z,u,w\n");
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y = x + 0.05 * rng.gen_range(-1.0..1.0);
            let z = -x + 0.05 * rng.gen_range(-1.0..1.0);
            let u = 2.0 * x + 0.05 * rng.gen_range(-1.0..1.0);
            let w: f64 = rng.gen_range(-1.0..1.0);
            writeln!(text, "{x},{y},{z},{u},{w}").unwrap();
        }
        fs::write(path, text).unwrap();
    }

    fn tiny_nn() -> NnSettings {
        NnSettings {
            epochs: 3,
            patience: 3,
            lr: 1e-2,
            grid_draws: 1,
            batch: Some(32),
            made_grid: HyperGrid {
                layers: vec![1],
                neurons: vec![32],
                batch: vec![32],
                dropout_ratio: vec![],
            },
            dae_grid: HyperGrid {
                layers: vec![1],
                neurons: vec![32],
                batch: vec![32],
                dropout_ratio: vec![0.5],
            },
        }
    }

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    /// metrics.csv rows as (dataset, model, rate, metric, value).
    fn parse_metrics(text: &str) -> Vec<(String, String, f64, String, f64)> {
        text.lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].into(), f[1].into(), f[2].parse().unwrap(), f[3].into(), f[4].parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn chunk_partition_is_balanced_and_contiguous() {
        assert_eq!(chunk_ranges(10, 3), vec![0..4, 4..7, 7..10]);
        assert_eq!(chunk_ranges(6, 3), vec![0..2, 2..4, 4..6]);
        // More chunks than instances: singletons then empties.
        let r = chunk_ranges(2, 5);
        assert_eq!(r, vec![0..1, 1..2, 2..2, 2..2, 2..2]);
        let total: usize = chunk_ranges(1234, 7).iter().map(|r| r.len()).sum();
        assert_eq!(total, 1234);
    }

    #[test]
    fn categorical_run_fills_the_grid_and_ranks_every_rate() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        cat_chain_csv(&csv, 700, 3);
        let out = dir.path().join("out");

        let mut cfg = BenchConfig::new(21, &out);
        cfg.datasets = vec![DatasetSpec {
            name: "chain".into(),
            path: csv,
            kind: DatasetKind::Categorical,
            schema: None,
        }];
        cfg.models = vec![ModelName::MostFreq, ModelName::Chordal];
        cfg.timings = false;

        let manifest = run_benchmark(&cfg).unwrap();
        assert!(manifest.complete);
        assert_eq!(manifest.datasets.len(), 1);
        let dm = &manifest.datasets[0];
        assert_eq!(dm.train_rows, 560);
        assert_eq!(dm.test_rows, 140);
        assert_eq!(dm.mask_seeds.len(), 5);
        assert_eq!(dm.split_seed, seed::derive2(21, stage::SPLIT, 0));
        for (m_idx, mm) in dm.models.iter().enumerate() {
            assert_eq!(mm.train_seed, seed::derive2(dm.split_seed, stage::MODEL_INIT, m_idx as u64));
            assert_eq!(mm.rates.len(), 5);
            for (r_idx, rm) in mm.rates.iter().enumerate() {
                assert_eq!(rm.impute_seed, seed::derive2(mm.train_seed, stage::IMPUTE, r_idx as u64));
                assert!(rm.error.is_none());
                assert_eq!(rm.metric.as_deref(), Some("wapmc"));
            }
        }

        let metrics = read(&out, "metrics.csv");
        let rows = parse_metrics(&metrics);
        assert!(metrics.starts_with("dataset,model,rate,metric,value,m,runtime_s\n"));
        assert_eq!(rows.len(), 10);

        let value = |model: &str, rate: f64| {
            rows.iter().find(|r| r.1 == model && r.2 == rate).map(|r| r.4).unwrap()
        };
        assert!(value("chordal", 0.2) < value("most_freq", 0.2));

        // k=2, N=1 per rate: ranks (1,2), chi2 = 1, CD = 1.96 exactly.
        let ranks = read(&out, "ranks.csv");
        assert!(ranks.starts_with("rate,model,mean_rank,friedman_stat,cd\n"));
        assert_eq!(ranks.lines().count(), 11);
        assert!(ranks.contains("0.2,chordal,1,1,1.96\n"));
        assert!(ranks.contains("0.2,most_freq,2,1,1.96\n"));
        let cd = read(&out, "cd_data.csv");
        assert!(cd.starts_with("rate,model,mean_rank,cd\n"));
        assert_eq!(cd.lines().count(), 11);
        assert!(read(&out, "ranks.md").contains("## rate 0.8"));
    }

    #[test]
    fn continuous_run_scores_wnrmse_through_bin_medians() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("cont.csv");
        cont_chain_csv(&csv, 500, 5);
        let out = dir.path().join("out");

        let mut cfg = BenchConfig::new(33, &out);
        cfg.datasets = vec![DatasetSpec {
            name: "cont".into(),
            path: csv,
            kind: DatasetKind::Continuous,
            schema: None,
        }];
        cfg.models = vec![ModelName::Median, ModelName::Chordal, ModelName::Dae];
        cfg.nn = tiny_nn();
        cfg.imputation_samples = 3;
        cfg.timings = false;

        let manifest = run_benchmark(&cfg).unwrap();
        assert!(manifest.complete, "{manifest:?}");

        let rows = parse_metrics(&read(&out, "metrics.csv"));
        assert_eq!(rows.len(), 15);
        assert!(rows.iter().all(|r| r.3 == "wnrmse" && r.4.is_finite()));

        // The constant predictor sits near 1 by construction of the metric.
        for r in rows.iter().filter(|r| r.1 == "median") {
            assert!((r.4 - 1.0).abs() < 0.15, "median wnrmse {} at rate {}", r.4, r.2);
        }
        // Strong dependencies: conditional bin medians beat the constant.
        let value = |model: &str, rate: f64| {
            rows.iter().find(|r| r.1 == model && r.2 == rate).map(|r| r.4).unwrap()
        };
        assert!(value("chordal", 0.2) < value("median", 0.2));
    }

    #[test]
    fn reruns_and_chunking_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        cat_chain_csv(&csv, 300, 7);

        let run = |out: &Path, chunks: usize| {
            let mut cfg = BenchConfig::new(55, out);
            cfg.datasets = vec![DatasetSpec {
                name: "chain".into(),
                path: csv.clone(),
                kind: DatasetKind::Categorical,
                schema: None,
            }];
            cfg.models = vec![ModelName::MostFreq, ModelName::Chordal, ModelName::Dae];
            cfg.nn = tiny_nn();
            cfg.imputation_samples = 3;
            cfg.test_rates = vec![0.2, 0.6];
            cfg.chunks = chunks;
            cfg.timings = false;
            let manifest = run_benchmark(&cfg).unwrap();
            assert!(manifest.complete);
        };

        let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
        run(&a, 1);
        run(&b, 1);
        run(&c, 5);
        for name in ["metrics.csv", "ranks.csv", "cd_data.csv", "ranks.md"] {
            assert_eq!(read(&a, name), read(&b, name), "{name} differs between reruns");
        }
        // Chunking is a parallelism knob, not a protocol change.
        assert_eq!(read(&a, "metrics.csv"), read(&c, "metrics.csv"));
    }

    #[test]
    fn chunk_count_never_changes_sampled_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        cat_chain_csv(&csv, 80, 11);
        let ds = crate::data::load_csv(&csv, None).unwrap();
        let data = prepare_data(&ds, DatasetKind::Categorical, 5, 0.8, 13).unwrap();

        let mut cfg = BenchConfig::new(0, dir.path());
        cfg.nn = tiny_nn();
        let plan = make_mask_plan(data.test.n(), data.test.width(), 0.4, 17).unwrap();
        let icfg = ImputationConfig { samples: 3 };

        for name in [ModelName::Made, ModelName::Dae] {
            let model = train_model(name, &data, &cfg, 19).unwrap();
            let one = predict_chunked(&model, &data.test, &plan, 1, &icfg, 23).unwrap();
            assert_eq!(one.entries.len(), data.test.n() * 2);
            for chunks in [3, 8, 64] {
                let many = predict_chunked(&model, &data.test, &plan, chunks, &icfg, 23).unwrap();
                assert_eq!(one, many, "{name} diverged at {chunks} chunks");
            }
        }
    }

    #[test]
    fn failures_are_recorded_and_the_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        cat_chain_csv(&good, 200, 9);
        let out = dir.path().join("out");

        let mut cfg = BenchConfig::new(77, &out);
        cfg.datasets = vec![
            DatasetSpec {
                name: "ghost".into(),
                path: dir.path().join("missing.csv"),
                kind: DatasetKind::Categorical,
                schema: None,
            },
            DatasetSpec { name: "good".into(), path: good, kind: DatasetKind::Categorical, schema: None },
        ];
        cfg.models = vec![ModelName::MostFreq];
        cfg.test_rates = vec![0.2];
        cfg.timings = false;

        let manifest = run_benchmark(&cfg).unwrap();
        assert!(!manifest.complete);
        assert!(manifest.datasets[0].error.is_some());
        assert!(manifest.datasets[0].models.is_empty());
        assert!(manifest.datasets[1].error.is_none());

        let rows = parse_metrics(&read(&out, "metrics.csv"));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].0, "good");
        // The failed dataset drops out of the ranking instead of biasing it.
        let ranks = read(&out, "ranks.csv");
        assert_eq!(ranks.lines().count(), 2);
        assert!(ranks.contains("0.2,most_freq,1,0,\n"));
    }

    #[test]
    fn no_models_means_header_only_reports() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        cat_chain_csv(&csv, 100, 1);
        let out = dir.path().join("out");

        let mut cfg = BenchConfig::new(5, &out);
        cfg.datasets = vec![DatasetSpec {
            name: "chain".into(),
            path: csv,
            kind: DatasetKind::Categorical,
            schema: None,
        }];
        cfg.timings = false;

        let manifest = run_benchmark(&cfg).unwrap();
        assert!(manifest.complete);
        assert_eq!(read(&out, "metrics.csv"), "dataset,model,rate,metric,value,m,runtime_s\n");
        assert_eq!(read(&out, "ranks.csv"), "rate,model,mean_rank,friedman_stat,cd\n");
        assert_eq!(read(&out, "cd_data.csv"), "rate,model,mean_rank,cd\n");
    }

    #[test]
    fn config_round_trips_and_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.json");
        let mut cfg = BenchConfig::new(42, "/tmp/out");
        cfg.models = vec![ModelName::Chordal, ModelName::Dae];
        cfg.datasets = vec![DatasetSpec {
            name: "d".into(),
            path: "/tmp/d.csv".into(),
            kind: DatasetKind::Continuous,
            schema: None,
        }];
        write_config(&cfg, &path).unwrap();
        assert_eq!(read_config(&path).unwrap(), cfg);

        let reject = |mutate: &dyn Fn(&mut BenchConfig)| {
            let mut bad = cfg.clone();
            mutate(&mut bad);
            bad.validate().unwrap_err()
        };
        assert!(matches!(
            reject(&|c| c.version = 2),
            Error::FormatVersion { found: 2, expected: CONFIG_VERSION }
        ));
        reject(&|c| c.models.push(ModelName::Dae));
        reject(&|c| c.models.push(ModelName::MostFreq)); // continuous dataset
        reject(&|c| c.datasets.push(c.datasets[0].clone()));
        reject(&|c| c.test_rates = vec![0.2, 1.0]);
        reject(&|c| c.test_rates = vec![0.2, 0.2]);
        reject(&|c| c.test_rates.clear());
        reject(&|c| c.chunks = 0);
        reject(&|c| c.imputation_samples = 0);
        reject(&|c| c.bins = 1);
        reject(&|c| c.split_ratio = 1.0);
        reject(&|c| c.nn.dae_grid.neurons = vec![31]);

        let mut json = serde_json::to_value(&cfg).unwrap();
        json["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<BenchConfig>(json).is_err());
    }

    #[test]
    fn stored_models_predict_identically_after_reload() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("cont.csv");
        cont_chain_csv(&csv, 240, 15);
        let ds = crate::data::load_csv(&csv, None).unwrap();
        let data = prepare_data(&ds, DatasetKind::Continuous, 5, 0.8, 29).unwrap();

        let mut cfg = BenchConfig::new(0, dir.path());
        cfg.nn = tiny_nn();
        let plan = make_mask_plan(data.test.n(), data.test.width(), 0.2, 31).unwrap();
        let icfg = ImputationConfig { samples: 3 };

        for name in [ModelName::Median, ModelName::Chordal, ModelName::Dae] {
            let model = train_model(name, &data, &cfg, 37).unwrap();
            let before = predict_chunked(&model, &data.test, &plan, 1, &icfg, 41).unwrap();
            let store = dir.path().join(format!("model-{name}"));
            write_model(&model, &store).unwrap();
            let reloaded = read_model(&store).unwrap();
            let after = predict_chunked(&reloaded, &data.test, &plan, 1, &icfg, 41).unwrap();
            assert_eq!(before, after, "{name} changed across reload");
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelName::ALL {
            assert_eq!(ModelName::parse(m.as_str()).unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{m}\""));
        }
        assert!(ModelName::parse("xgboost").is_err());
    }
}
