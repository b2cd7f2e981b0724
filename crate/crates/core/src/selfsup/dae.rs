use std::sync::Arc;

use rand::seq::SliceRandom;

use super::{
    check_impute_args, draw_setting, encode_input, encode_row_observed, epoch_plan, gather, known,
    vote, GridDraw, ImputationConfig, TrainConfig,
};
use crate::data::{encoding_layout, Cell, Dataset, EncodedMatrix, Schema, SpanKind, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, loss_and_grad, AdamState, DropoutSpec, Head, Mat, Network,
};
use crate::seed::{self, stage};

/// Denoising autoencoder over the one-hot encoding. Dropout stays active at
/// imputation time: the hidden-unit noise is what makes the multiple
/// imputation samples differ.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeModel {
    pub net: Network,
    pub schema: Arc<Schema>,
    pub spans: Vec<(usize, usize)>,
    pub kinds: Vec<SpanKind>,
    pub standardizer: Option<Standardizer>,
    /// Keep probability per hidden layer.
    pub keeps: Vec<f64>,
    /// Mean per-cell validation loss of the selected parameters.
    pub val_loss: f64,
}

/// Trains the denoising model: per epoch a fresh mask plan zeroes the
/// corrupted cells in the input, the loss reconstructs this epoch's masked
/// cells (every known cell under the full-reconstruction variant), and
/// hidden dropout stays on. Early stopping tracks the mean validation-cell
/// loss with dropout off and keeps the best parameters seen.
pub fn train_dae(train: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<DaeModel> {
    cfg.validate()?;
    if train.width() < 2 {
        return Err(Error::InvalidArgument(
            "denoising training needs at least 2 attributes to mask".into(),
        ));
    }
    if train.n() == 0 {
        return Err(Error::InvalidArgument("no training instances".into()));
    }

    let (spans, kinds, width) = encoding_layout(&train.schema);
    let heads = super::heads_from_layout(&spans, &kinds);
    let standardizer = train
        .schema
        .attrs
        .iter()
        .any(|a| !a.kind.is_categorical())
        .then(|| Standardizer::fit(train));
    let truth = encode_input(train, standardizer.as_ref(), None);

    let mut best: Option<DaeModel> = None;
    for d in 0..cfg.grid_draws {
        let sd = seed::derive2(seed, stage::GRID, d as u64);
        let draw = draw_setting(cfg, &mut seed::rng(sd));
        let candidate = train_one_dae(
            train, cfg, &draw, sd, seed, width, &spans, &kinds, &heads, &standardizer, &truth,
            true,
        )?;
        if best.as_ref().map_or(true, |b| candidate.val_loss < b.val_loss) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("grid_draws >= 1"))
}

/// Exposed to tests so keep=1 "dropout active" can be compared bitwise
/// against a plain run with dropout disabled.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_one_dae(
    train: &Dataset,
    cfg: &TrainConfig,
    draw: &GridDraw,
    sd: u64,
    seed: u64,
    width: usize,
    spans: &[(usize, usize)],
    kinds: &[SpanKind],
    heads: &[Head],
    standardizer: &Option<Standardizer>,
    truth: &EncodedMatrix,
    dropout_active: bool,
) -> Result<DaeModel> {
    let n = train.n();
    let j = train.width();
    let mut sizes = vec![width];
    sizes.extend(std::iter::repeat(draw.neurons).take(draw.layers));
    sizes.push(width);

    let mut net =
        Network::new(&sizes, heads.to_vec(), &mut seed::rng(seed::derive(sd, stage::MODEL_INIT)))?;
    let mut opt = AdamState::new(&net, cfg.lr);
    let keeps = if draw.keeps.is_empty() { vec![1.0; draw.layers] } else { draw.keeps.clone() };
    let dropout = DropoutSpec { keep: keeps.clone(), active: dropout_active };
    let no_drop = DropoutSpec::none(draw.layers);

    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed::derive2(sd, stage::EPOCH, epoch as u64));
        let plan = epoch_plan(n, j, cfg.mask_rate, seed, epoch)?;
        let masked_input = encode_input(train, standardizer.as_ref(), Some(&plan));
        let targets: Vec<Vec<usize>> = if cfg.masked_reconstruction {
            (0..n)
                .map(|i| {
                    plan.masked[i]
                        .iter()
                        .copied()
                        .filter(|&a| !train.rows[i][a].is_missing())
                        .collect()
                })
                .collect()
        } else {
            train.rows.iter().map(|r| known(r)).collect()
        };

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(draw.batch) {
            let batch = gather(&masked_input, chunk);
            let batch_truth = gather(truth, chunk);
            let batch_targets: Vec<Vec<usize>> =
                chunk.iter().map(|&i| targets[i].clone()).collect();
            let (out, cache) = forward(&net, &batch, &dropout, &mut rng)?;
            let (loss, og) = loss_and_grad(&out, &batch_truth, &net.heads, &batch_targets);
            if !loss.is_finite() {
                return Err(Error::NoConvergence(format!(
                    "non-finite training loss in epoch {epoch}"
                )));
            }
            let grads = backward(&net, &cache, &og);
            adam_step(&mut opt, &mut net, &grads)?;
        }

        // Validation cells, reconstructed from the same zero-masked inputs
        // with deterministic (disabled) dropout.
        let val_targets: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                plan.validation[i]
                    .iter()
                    .copied()
                    .filter(|&a| !train.rows[i][a].is_missing())
                    .collect()
            })
            .collect();
        let count: usize = val_targets.iter().map(Vec::len).sum();
        if count == 0 {
            return Err(Error::InvalidArgument("no validation targets with ground truth".into()));
        }
        let all: Vec<usize> = (0..n).collect();
        let (out, _) = forward(&net, &gather(&masked_input, &all), &no_drop, &mut rng)?;
        let (loss, _) = loss_and_grad(&out, &gather(truth, &all), &net.heads, &val_targets);
        let val = loss / count as f64;

        if val < best_val {
            best_val = val;
            best_net = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }

    Ok(DaeModel {
        net: best_net,
        schema: Arc::clone(&train.schema),
        spans: spans.to_vec(),
        kinds: kinds.to_vec(),
        standardizer: standardizer.clone(),
        keeps,
        val_loss: best_val,
    })
}

/// Multiple imputation: targets enter zero-encoded, each sample is one
/// forward pass with dropout active, categorical targets read out as the
/// head argmax, continuous as the head value. Aggregation is majority vote
/// or mean across samples; target cells in `row` are never read.
pub fn impute_dae(
    model: &DaeModel,
    row: &[Cell],
    targets: &[usize],
    cfg: &ImputationConfig,
    seed: u64,
) -> Result<Vec<Cell>> {
    cfg.validate()?;
    check_impute_args(row, targets, model.spans.len())?;
    if targets.is_empty() {
        return Ok(Vec::new());
    }

    let width = model.net.in_dim();
    let base = encode_row_observed(row, targets, &model.spans, model.standardizer.as_ref(), width);
    let x = Mat { rows: 1, cols: width, data: base };
    let dropout = DropoutSpec { keep: model.keeps.clone(), active: true };

    let mut cat_samples: Vec<Vec<usize>> = vec![Vec::new(); targets.len()];
    let mut num_samples: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    for s in 0..cfg.samples {
        let mut rng = seed::rng(seed::derive2(seed, stage::IMPUTE, s as u64));
        let (out, _) = forward(&model.net, &x, &dropout, &mut rng)?;
        for (slot, &t) in targets.iter().enumerate() {
            let (start, len) = model.spans[t];
            match model.kinds[t] {
                SpanKind::OneHot => {
                    let dist = &out.row(0)[start..start + len];
                    let mut v = 0;
                    for (k, p) in dist.iter().enumerate() {
                        if *p > dist[v] {
                            v = k;
                        }
                    }
                    cat_samples[slot].push(v);
                }
                SpanKind::Raw => num_samples[slot].push(out.at(0, start)),
            }
        }
    }

    Ok(targets
        .iter()
        .enumerate()
        .map(|(slot, &t)| match model.kinds[t] {
            SpanKind::OneHot => Cell::Cat(vote(&cat_samples[slot], model.spans[t].1)),
            SpanKind::Raw => {
                let mean = num_samples[slot].iter().sum::<f64>() / num_samples[slot].len() as f64;
                Cell::Num(model.standardizer.as_ref().map_or(mean, |s| s.invert(t, mean)))
            }
        })
        .collect())
}
