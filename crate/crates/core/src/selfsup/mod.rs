//! Self-supervised imputation models: a permutation-autoregressive network
//! with connectivity masks and a denoising autoencoder with dropout-driven
//! multiple imputation. Both train against 20%-masked instances and early
//! stop on validation-target loss.

mod dae;
mod io;
mod made;

pub use dae::{impute_dae, train_dae, DaeModel};
pub use io::{read_dae, read_made, sidecar_path, write_dae, write_made};
pub use made::{autoregressive_certificate, build_made_masks, impute_made, train_made, MadeModel};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset, EncodedMatrix, SpanKind, Standardizer};
use crate::error::{Error, Result};
use crate::mask::MaskPlan;
use crate::nn::Head;

/// Hyperparameter grid. Entries follow the published search ranges: 1 to 3
/// hidden layers, power-of-two neuron counts in 32..=2048, power-of-two
/// batch sizes in 8..=128, per-layer dropout ratios in {0.1,...,0.5}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub batch: Vec<usize>,
    /// Dropout ratio choices per hidden layer; empty for models without
    /// dropout.
    pub dropout_ratio: Vec<f64>,
}

impl HyperGrid {
    pub fn made_default() -> HyperGrid {
        HyperGrid {
            layers: vec![1, 2, 3],
            neurons: vec![32, 64, 128, 256, 512, 1024, 2048],
            batch: vec![8, 16, 32, 64, 128],
            dropout_ratio: vec![],
        }
    }

    pub fn dae_default() -> HyperGrid {
        HyperGrid {
            layers: vec![1, 2, 3],
            neurons: vec![32, 64, 128, 256, 512],
            batch: vec![8, 16, 32, 64],
            dropout_ratio: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("grid {what} outside the search ranges")));
        if self.layers.is_empty() || !self.layers.iter().all(|l| (1..=3).contains(l)) {
            return bad("layer counts");
        }
        if self.neurons.is_empty()
            || !self.neurons.iter().all(|n| n.is_power_of_two() && (32..=2048).contains(n))
        {
            return bad("neuron counts");
        }
        if self.batch.is_empty()
            || !self.batch.iter().all(|b| b.is_power_of_two() && (8..=128).contains(b))
        {
            return bad("batch sizes");
        }
        if !self
            .dropout_ratio
            .iter()
            .all(|r| (1..=5).any(|k| (r - k as f64 * 0.1).abs() < 1e-9))
        {
            return bad("dropout ratios");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Masking rate applied to training instances.
    pub mask_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub grid: HyperGrid,
    /// Random grid draws evaluated; the best validation loss wins.
    pub grid_draws: usize,
    /// Overrides the grid's batch size when set (mainly for tests).
    pub batch: Option<usize>,
    /// Score only the epoch's masked cells over zero-masked inputs instead
    /// of every known cell. The autoregressive model defaults to the full
    /// factorization (the two train comparably); the denoising model
    /// defaults to masked-only reconstruction.
    pub masked_reconstruction: bool,
}

impl TrainConfig {
    pub fn made_default() -> TrainConfig {
        TrainConfig {
            mask_rate: 0.2,
            epochs: 30,
            patience: 5,
            lr: 1e-3,
            grid: HyperGrid::made_default(),
            grid_draws: 8,
            batch: None,
            masked_reconstruction: false,
        }
    }

    pub fn dae_default() -> TrainConfig {
        TrainConfig {
            grid: HyperGrid::dae_default(),
            masked_reconstruction: true,
            ..TrainConfig::made_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::InvalidArgument(format!("mask rate {} outside (0, 1)", self.mask_rate)));
        }
        if self.epochs == 0 || self.grid_draws == 0 {
            return Err(Error::InvalidArgument("epochs and grid draws must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Imputation samples per target; predictions aggregate by mean for
    /// continuous attributes and majority vote for categorical ones.
    pub samples: usize,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig { samples: 10 }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("at least one imputation sample".into()));
        }
        Ok(())
    }
}

/// One sampled grid setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GridDraw {
    pub layers: usize,
    pub neurons: usize,
    pub batch: usize,
    /// Keep probabilities (1 - ratio) per hidden layer; empty when the grid
    /// has no dropout.
    pub keeps: Vec<f64>,
}

pub(crate) fn draw_setting(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> GridDraw {
    let grid = &cfg.grid;
    let layers = grid.layers[rng.gen_range(0..grid.layers.len())];
    let neurons = grid.neurons[rng.gen_range(0..grid.neurons.len())];
    let batch = cfg.batch.unwrap_or_else(|| grid.batch[rng.gen_range(0..grid.batch.len())]);
    let keeps = if grid.dropout_ratio.is_empty() {
        Vec::new()
    } else {
        (0..layers)
            .map(|_| 1.0 - grid.dropout_ratio[rng.gen_range(0..grid.dropout_ratio.len())])
            .collect()
    };
    GridDraw { layers, neurons, batch, keeps }
}

/// Output heads mirroring the one-hot layout: softmax per categorical span,
/// linear per raw column.
pub(crate) fn heads_from_layout(spans: &[(usize, usize)], kinds: &[SpanKind]) -> Vec<Head> {
    spans
        .iter()
        .zip(kinds)
        .enumerate()
        .map(|(attr, (&(start, len), kind))| match kind {
            SpanKind::OneHot => Head::Softmax { attr, lo: start, hi: start + len },
            SpanKind::Raw => {
                debug_assert_eq!(len, 1);
                Head::Linear { attr, col: start }
            }
        })
        .collect()
}

/// Encoded input under a mask plan, standardized where continuous.
pub(crate) fn encode_input(
    ds: &Dataset,
    standardizer: Option<&Standardizer>,
    plan: Option<&MaskPlan>,
) -> EncodedMatrix {
    let mut enc = crate::data::encode_one_hot(ds, plan);
    if let Some(s) = standardizer {
        s.apply(&mut enc, ds, plan);
    }
    enc
}

/// This epoch's plan: fresh masks and fresh validation targets, seeded from
/// the protocol seed (not the grid draw's) so every draw sees identical
/// masking and their validation losses stay comparable.
pub(crate) fn epoch_plan(
    n: usize,
    j: usize,
    rate: f64,
    seed: u64,
    epoch: usize,
) -> Result<MaskPlan> {
    let plan = crate::mask::make_mask_plan(
        n,
        j,
        rate,
        crate::seed::derive2(seed, crate::seed::stage::TRAIN_MASK, epoch as u64),
    )?;
    crate::mask::select_validation_targets(
        &plan,
        0.25,
        crate::seed::derive2(seed, crate::seed::stage::VALIDATION, epoch as u64),
    )
}

pub(crate) fn gather(enc: &EncodedMatrix, rows: &[usize]) -> crate::nn::Mat {
    let mut m = crate::nn::Mat::zeros(rows.len(), enc.width);
    for (k, &i) in rows.iter().enumerate() {
        m.data[k * enc.width..(k + 1) * enc.width].copy_from_slice(enc.row(i));
    }
    m
}

/// Single-row encoding for imputation: observed cells one-hot or
/// standardized, targets and Missing cells zero. Target cells in `row` are
/// never read, so callers may pass them as truth or Missing alike.
pub(crate) fn encode_row_observed(
    row: &[Cell],
    targets: &[usize],
    spans: &[(usize, usize)],
    standardizer: Option<&Standardizer>,
    width: usize,
) -> Vec<f64> {
    let mut base = vec![0.0; width];
    for (a, cell) in row.iter().enumerate() {
        if targets.binary_search(&a).is_ok() {
            continue;
        }
        let (start, _) = spans[a];
        match cell {
            Cell::Missing => {}
            Cell::Cat(v) => base[start + v] = 1.0,
            Cell::Num(x) => base[start] = standardizer.map_or(*x, |s| s.transform(a, *x)),
        }
    }
    base
}

/// Shared imputation argument checks.
pub(crate) fn check_impute_args(row: &[Cell], targets: &[usize], j: usize) -> Result<()> {
    if row.len() != j {
        return Err(Error::InvalidArgument(format!(
            "row has {} cells, model expects {j}",
            row.len()
        )));
    }
    if targets.windows(2).any(|w| w[0] >= w[1]) || targets.iter().any(|&t| t >= j) {
        return Err(Error::InvalidArgument("targets must be sorted, unique and in range".into()));
    }
    Ok(())
}

/// Attributes scorable as loss targets for a row: a target needs ground
/// truth, so Missing cells never qualify.
pub(crate) fn known(row: &[Cell]) -> Vec<usize> {
    (0..row.len()).filter(|&j| !row[j].is_missing()).collect()
}

/// Majority vote with ties to the lowest value index.
pub(crate) fn vote(samples: &[usize], card: usize) -> usize {
    let mut counts = vec![0usize; card];
    for &s in samples {
        counts[s] += 1;
    }
    let mut best = 0;
    for (v, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = v;
        }
    }
    best
}
