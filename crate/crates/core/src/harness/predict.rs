//! Dataset preparation, model training dispatch, chunk-parallel prediction.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::baseline::{fit_baseline, BaselineModel};
use crate::chordal::{fit_parameters, learn_structure, JunctionTreeModel};
use crate::data::{
    apply_discretizer, fit_discretizer, split_train_test, Cell, Dataset, DatasetKind, Discretizer,
};
use crate::error::{Error, Result};
use crate::mask::MaskPlan;
use crate::metrics::{train_sigmas, PredEntry, PredictionTable};
use crate::seed::{self, stage};
use crate::selfsup::{impute_dae, impute_made, train_dae, train_made, DaeModel, ImputationConfig, MadeModel};

use super::{BenchConfig, ModelName};

/// A split dataset plus whatever derived views the model mix needs.
///
/// Continuous data keeps its raw splits (the denoising imputer and both
/// metrics work on the original scale) alongside an equal-frequency
/// discretizer fitted on the train half and the binned train view the
/// categorical models fit on. Discretized data is binned once here, train
/// fitted, and then treated as categorical end to end, truth included.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub kind: DatasetKind,
    pub train: Dataset,
    pub test: Dataset,
    pub disc: Option<Discretizer>,
    pub train_binned: Option<Dataset>,
    /// Per-attribute training standard deviations (continuous data only).
    pub sigmas: BTreeMap<usize, f64>,
}

pub fn prepare_data(
    raw: &Dataset,
    kind: DatasetKind,
    bins: usize,
    split_ratio: f64,
    split_seed: u64,
) -> Result<PreparedData> {
    let (train, test) = split_train_test(raw, split_ratio, split_seed)?;
    prepare_views(train, test, kind, bins)
}

/// Builds the per-kind views from an existing train/test split.
pub fn prepare_views(
    train: Dataset,
    test: Dataset,
    kind: DatasetKind,
    bins: usize,
) -> Result<PreparedData> {
    let mismatch = match kind {
        DatasetKind::Categorical => train.schema.attrs.iter().any(|a| !a.kind.is_categorical()),
        DatasetKind::Continuous => train.schema.attrs.iter().any(|a| a.kind.is_categorical()),
        DatasetKind::Discretized => false,
    };
    if mismatch {
        return Err(Error::Schema(format!(
            "schema does not match declared {} kind",
            super::kind_str(kind)
        )));
    }
    match kind {
        DatasetKind::Categorical => Ok(PreparedData {
            kind,
            train,
            test,
            disc: None,
            train_binned: None,
            sigmas: BTreeMap::new(),
        }),
        DatasetKind::Continuous => {
            let disc = fit_discretizer(&train, bins)?;
            let train_binned = apply_discretizer(&disc, &train)?;
            let sigmas = train_sigmas(&train);
            Ok(PreparedData {
                kind,
                train,
                test,
                disc: Some(disc),
                train_binned: Some(train_binned),
                sigmas,
            })
        }
        DatasetKind::Discretized => {
            let disc = fit_discretizer(&train, bins)?;
            let train = apply_discretizer(&disc, &train)?;
            let test = apply_discretizer(&disc, &test)?;
            Ok(PreparedData { kind, train, test, disc: None, train_binned: None, sigmas: BTreeMap::new() })
        }
    }
}

#[derive(Debug)]
pub(crate) enum TrainedKind {
    Baseline(BaselineModel),
    Chordal(JunctionTreeModel),
    Made(MadeModel),
    Dae(DaeModel),
}

/// A trained model ready to answer mask plans over the matching test set.
#[derive(Debug)]
pub struct PreparedModel {
    pub name: ModelName,
    pub(crate) kind: TrainedKind,
    /// Present when the model consumed the binned view of continuous data:
    /// evidence discretizes on the way in and predicted bins back-project
    /// to their training medians on the way out.
    pub(crate) disc: Option<Discretizer>,
}

pub fn train_model(
    name: ModelName,
    data: &PreparedData,
    cfg: &BenchConfig,
    train_seed: u64,
) -> Result<PreparedModel> {
    let continuous = data.kind == DatasetKind::Continuous;
    let binned = data.train_binned.as_ref().unwrap_or(&data.train);
    let kind = match name {
        ModelName::MostFreq => {
            if continuous {
                return Err(Error::InvalidArgument(
                    "most_freq applies to categorical data only".into(),
                ));
            }
            TrainedKind::Baseline(fit_baseline(&data.train)?)
        }
        ModelName::Median => {
            if !continuous {
                return Err(Error::InvalidArgument(
                    "median applies to continuous data only".into(),
                ));
            }
            TrainedKind::Baseline(fit_baseline(&data.train)?)
        }
        ModelName::Chordal => {
            let structure = learn_structure(binned, &cfg.chordal.score_config())?;
            TrainedKind::Chordal(fit_parameters(&structure, binned, cfg.chordal.m)?)
        }
        ModelName::Made => {
            let tc = cfg.nn.train_config(name, cfg.train_mask_rate);
            TrainedKind::Made(train_made(binned, &tc, train_seed)?)
        }
        ModelName::Dae => {
            let tc = cfg.nn.train_config(name, cfg.train_mask_rate);
            TrainedKind::Dae(train_dae(&data.train, &tc, train_seed)?)
        }
    };
    let disc = match (continuous, name) {
        (true, ModelName::Chordal | ModelName::Made) => data.disc.clone(),
        _ => None,
    };
    Ok(PreparedModel { name, kind, disc })
}

/// Contiguous instance ranges; the first n % chunks ranges take the extra
/// instance, so sizes differ by at most one.
pub fn chunk_ranges(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / chunks;
    let rem = n % chunks;
    let mut start = 0;
    (0..chunks)
        .map(|c| {
            let len = base + usize::from(c < rem);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

/// Predicts every masked cell of `plan`, splitting instances into `chunks`
/// contiguous ranges evaluated in parallel. Instance i always draws from
/// `derive2(seed, IMPUTE, i)`, so the merged table is a pure function of
/// (model, test, plan, seed) no matter the chunk count.
pub fn predict_chunked(
    model: &PreparedModel,
    test: &Dataset,
    plan: &MaskPlan,
    chunks: usize,
    cfg: &ImputationConfig,
    seed: u64,
) -> Result<PredictionTable> {
    if chunks == 0 {
        return Err(Error::InvalidArgument("chunk count must be positive".into()));
    }
    if plan.n() != test.n() {
        return Err(Error::InvalidArgument(format!(
            "mask plan covers {} instances, dataset has {}",
            plan.n(),
            test.n()
        )));
    }
    let per_chunk: Result<Vec<Vec<PredEntry>>> = chunk_ranges(test.n(), chunks)
        .into_par_iter()
        .map(|range| {
            let mut out = Vec::new();
            for i in range {
                predict_into(model, test, plan, i, cfg, seed, &mut out)?;
            }
            Ok(out)
        })
        .collect();
    let mut table = PredictionTable { entries: per_chunk?.concat() };
    table.sort();
    Ok(table)
}

fn predict_into(
    model: &PreparedModel,
    test: &Dataset,
    plan: &MaskPlan,
    i: usize,
    cfg: &ImputationConfig,
    seed: u64,
    out: &mut Vec<PredEntry>,
) -> Result<()> {
    let targets = &plan.masked[i];
    if targets.is_empty() {
        return Ok(());
    }
    let row = model_view(model, &test.rows[i]);
    let inst_seed = seed::derive2(seed, stage::IMPUTE, i as u64);
    let cells: Vec<Cell> = match &model.kind {
        TrainedKind::Baseline(b) => targets
            .iter()
            .map(|&j| {
                b.constants.get(j).copied().flatten().ok_or_else(|| {
                    Error::InvalidArgument(format!("baseline has no constant for attribute {j}"))
                })
            })
            .collect::<Result<_>>()?,
        TrainedKind::Chordal(m) => m
            .predict_instance(&row, targets, targets)?
            .into_iter()
            .map(Cell::Cat)
            .collect(),
        TrainedKind::Made(m) => impute_made(m, &row, targets, cfg, inst_seed)?,
        TrainedKind::Dae(m) => impute_dae(m, &row, targets, cfg, inst_seed)?,
    };
    for (&attr, value) in targets.iter().zip(cells) {
        out.push(PredEntry { instance: i, attr, value: back_project(model, attr, value) });
    }
    Ok(())
}

/// The binned view a discretizing model sees in place of the raw row.
fn model_view(model: &PreparedModel, row: &[Cell]) -> Vec<Cell> {
    match &model.disc {
        None => row.to_vec(),
        Some(d) => row
            .iter()
            .enumerate()
            .map(|(j, c)| match (d.per_attr.get(&j), c) {
                (Some(spec), Cell::Num(x)) => Cell::Cat(spec.bin_of(*x)),
                _ => *c,
            })
            .collect(),
    }
}

fn back_project(model: &PreparedModel, attr: usize, value: Cell) -> Cell {
    match (&model.disc, value) {
        (Some(d), Cell::Cat(bin)) => match d.median(attr, bin) {
            Some(median) => Cell::Num(median),
            None => value,
        },
        _ => value,
    }
}

const MODEL_META: &str = "model.json";
const MODEL_FORMAT: &str = "omnitab-model";

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelMeta {
    format: String,
    version: u32,
    model: ModelName,
    file: String,
    discretizer: Option<Discretizer>,
}

/// Writes the model plus a model.json descriptor into `dir`. The neural
/// formats add their own weight sidecars next to the main file.
pub fn write_model(model: &PreparedModel, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = match &model.kind {
        TrainedKind::Baseline(_) => "baseline.txt",
        TrainedKind::Chordal(_) => "chordal.txt",
        TrainedKind::Made(_) => "made.json",
        TrainedKind::Dae(_) => "dae.json",
    };
    let path = dir.join(file);
    match &model.kind {
        TrainedKind::Baseline(b) => crate::baseline::write_baseline(b, &path)?,
        TrainedKind::Chordal(m) => crate::chordal::write_chordal_model(m, &path)?,
        TrainedKind::Made(m) => crate::selfsup::write_made(m, &path)?,
        TrainedKind::Dae(m) => crate::selfsup::write_dae(m, &path)?,
    }
    let meta = ModelMeta {
        format: MODEL_FORMAT.into(),
        version: 1,
        model: model.name,
        file: file.into(),
        discretizer: model.disc.clone(),
    };
    let meta_path = dir.join(MODEL_META);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec![path, meta_path])
}

pub fn read_model(dir: &std::path::Path) -> Result<PreparedModel> {
    let meta_path = dir.join(MODEL_META);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    if meta.format != MODEL_FORMAT {
        return Err(Error::Parse(format!("not a model descriptor: {:?}", meta.format)));
    }
    if meta.version != 1 {
        return Err(Error::FormatVersion { found: meta.version, expected: 1 });
    }
    let path = dir.join(&meta.file);
    let kind = match meta.model {
        ModelName::MostFreq | ModelName::Median => {
            TrainedKind::Baseline(crate::baseline::read_baseline(&path)?)
        }
        ModelName::Chordal => TrainedKind::Chordal(crate::chordal::read_chordal_model(&path)?),
        ModelName::Made => TrainedKind::Made(crate::selfsup::read_made(&path)?),
        ModelName::Dae => TrainedKind::Dae(crate::selfsup::read_dae(&path)?),
    };
    Ok(PreparedModel { name: meta.model, kind, disc: meta.discretizer })
}
