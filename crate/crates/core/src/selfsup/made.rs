use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_impute_args, draw_setting, encode_input, encode_row_observed, epoch_plan, gather,
    heads_from_layout, known, vote, GridDraw, ImputationConfig, TrainConfig,
};
use crate::data::{encoding_layout, Cell, Dataset, EncodedMatrix, Schema, SpanKind, Standardizer};
use crate::error::{Error, Result};
use crate::mask::MaskPlan;
use crate::nn::{
    adam_step, backward, forward, loss_and_grad, AdamState, DropoutSpec, Head, Mat, Network,
};
use crate::seed::{self, stage};

/// Permutation-autoregressive model. The installed layer masks satisfy the
/// autoregressive constraint for `ordering`; they are rebuilt from scratch
/// for every new ordering during training and imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct MadeModel {
    pub net: Network,
    pub schema: Arc<Schema>,
    pub spans: Vec<(usize, usize)>,
    pub kinds: Vec<SpanKind>,
    pub standardizer: Option<Standardizer>,
    /// Ordering the currently installed masks were built for.
    pub ordering: Vec<usize>,
    /// Connectivity numbers per hidden layer for that build.
    pub connectivity: Vec<Vec<usize>>,
    pub hidden: Vec<usize>,
    /// Mean per-cell validation loss of the selected parameters.
    pub val_loss: f64,
}

/// Connectivity-mask construction. Input columns of the attribute at
/// ordering position p carry number p; hidden unit numbers are drawn
/// uniformly from [min of the previous layer, J-2]; a hidden connection
/// needs m(out) >= m(in) and an output connection to attribute b needs
/// position(b) > m(in). Returns one mask per dense layer plus the hidden
/// connectivity numbers.
pub fn build_made_masks(
    ordering: &[usize],
    sizes: &[usize],
    spans: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Mat>, Vec<Vec<usize>>)> {
    let j = ordering.len();
    if j < 2 {
        return Err(Error::InvalidArgument("autoregressive masks need at least 2 attributes".into()));
    }
    if spans.len() != j {
        return Err(Error::InvalidArgument("ordering and span map disagree".into()));
    }
    let mut rank = vec![0usize; j];
    for (p, &a) in ordering.iter().enumerate() {
        rank[a] = p;
    }
    let width = sizes[0];
    debug_assert_eq!(*sizes.last().unwrap(), width);

    // Connectivity number per input column.
    let mut m_in = vec![0usize; width];
    for (a, &(start, len)) in spans.iter().enumerate() {
        for c in &mut m_in[start..start + len] {
            *c = rank[a];
        }
    }

    let mut masks = Vec::with_capacity(sizes.len() - 1);
    let mut connectivity = Vec::new();
    let mut prev = m_in;
    for l in 1..sizes.len() {
        let last = l + 1 == sizes.len();
        if last {
            let mut mask = Mat::zeros(width, sizes[l - 1]);
            for (b, &(start, len)) in spans.iter().enumerate() {
                for row in start..start + len {
                    for (k, &p) in prev.iter().enumerate() {
                        if rank[b] > p {
                            *mask.at_mut(row, k) = 1.0;
                        }
                    }
                }
            }
            masks.push(mask);
        } else {
            let floor = *prev.iter().min().expect("nonempty layer");
            let m_l: Vec<usize> = (0..sizes[l]).map(|_| rng.gen_range(floor..=j - 2)).collect();
            let mut mask = Mat::zeros(sizes[l], sizes[l - 1]);
            for (k, &mk) in m_l.iter().enumerate() {
                for (k2, &p) in prev.iter().enumerate() {
                    if mk >= p {
                        *mask.at_mut(k, k2) = 1.0;
                    }
                }
            }
            masks.push(mask);
            connectivity.push(m_l.clone());
            prev = m_l;
        }
    }
    Ok((masks, connectivity))
}

fn install_masks(net: &mut Network, masks: Vec<Mat>) {
    debug_assert_eq!(net.layers.len(), masks.len());
    for (layer, mask) in net.layers.iter_mut().zip(masks) {
        layer.set_mask(mask);
    }
}

fn zero_masks(net: &Network) -> Vec<Mat> {
    net.layers.iter().map(|l| Mat::zeros(l.w.rows, l.w.cols)).collect()
}

/// Boolean path certificate: multiplies the installed masks as boolean
/// matrices and verifies that no path reaches the head of attribute b from
/// the input columns of attribute a unless a strictly precedes b in
/// `ordering`.
pub fn autoregressive_certificate(
    net: &Network,
    spans: &[(usize, usize)],
    ordering: &[usize],
) -> bool {
    let j = ordering.len();
    let mut rank = vec![0usize; j];
    for (p, &a) in ordering.iter().enumerate() {
        rank[a] = p;
    }
    // reach[o][i]: any path from input column i to unit o so far.
    let width = net.in_dim();
    let mut reach: Vec<Vec<bool>> = (0..width)
        .map(|i| {
            let mut row = vec![false; width];
            row[i] = true;
            row
        })
        .collect();
    for layer in &net.layers {
        let ones;
        let mask = match &layer.mask {
            Some(m) => m,
            None => {
                ones = Mat {
                    rows: layer.w.rows,
                    cols: layer.w.cols,
                    data: vec![1.0; layer.w.rows * layer.w.cols],
                };
                &ones
            }
        };
        let mut next = vec![vec![false; width]; mask.rows];
        for o in 0..mask.rows {
            for k in 0..mask.cols {
                if mask.at(o, k) != 0.0 {
                    for i in 0..width {
                        next[o][i] = next[o][i] || reach[k][i];
                    }
                }
            }
        }
        reach = next;
    }
    for (b, &(bs, bl)) in spans.iter().enumerate() {
        for (a, &(as_, al)) in spans.iter().enumerate() {
            if rank[a] < rank[b] {
                continue;
            }
            for out in bs..bs + bl {
                for inp in as_..as_ + al {
                    if reach[out][inp] {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Trains the autoregressive model. Each grid draw trains a fresh network;
/// every epoch draws a fresh mask plan with fresh validation targets, every
/// minibatch draws a fresh ordering and rebuilds the connectivity masks.
/// The default loss is the full factorization (every known attribute given
/// its ordering predecessors, inputs unmasked); the masked-reconstruction
/// flag scores only this epoch's masked cells over zero-masked inputs.
/// Early stopping tracks the mean validation-cell loss, each validation
/// cell conditioned on its zero-masked instance with its attribute placed
/// last in the ordering, and keeps the best parameters seen.
pub fn train_made(train: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<MadeModel> {
    cfg.validate()?;
    let j = train.width();
    if j == 0 {
        return Err(Error::InvalidArgument("empty schema".into()));
    }
    if train.n() == 0 {
        return Err(Error::InvalidArgument("no training instances".into()));
    }

    let (spans, kinds, width) = encoding_layout(&train.schema);
    let heads = heads_from_layout(&spans, &kinds);
    let standardizer = train
        .schema
        .attrs
        .iter()
        .any(|a| !a.kind.is_categorical())
        .then(|| Standardizer::fit(train));
    let truth = encode_input(train, standardizer.as_ref(), None);

    let mut best: Option<MadeModel> = None;
    for d in 0..cfg.grid_draws {
        let sd = seed::derive2(seed, stage::GRID, d as u64);
        let draw = draw_setting(cfg, &mut seed::rng(sd));
        let candidate = train_one(
            train, cfg, &draw, sd, seed, width, &spans, &kinds, &heads, &standardizer, &truth,
        )?;
        if best.as_ref().map_or(true, |b| candidate.val_loss < b.val_loss) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("grid_draws >= 1"))
}

#[allow(clippy::too_many_arguments)]
fn train_one(
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
) -> Result<MadeModel> {
    let n = train.n();
    let j = train.width();
    let mut sizes = vec![width];
    sizes.extend(std::iter::repeat(draw.neurons).take(draw.layers));
    sizes.push(width);

    let mut net =
        Network::new(&sizes, heads.to_vec(), &mut seed::rng(seed::derive(sd, stage::MODEL_INIT)))?;
    let no_drop = DropoutSpec::none(draw.layers);
    let mut opt = AdamState::new(&net, cfg.lr);

    let full_targets: Vec<Vec<usize>> = train.rows.iter().map(|r| known(r)).collect();
    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed::derive2(sd, stage::EPOCH, epoch as u64));

        // The single-attribute degenerate model has nothing observable: no
        // mask plan exists, inputs are all zero and the heads learn the
        // marginal through bias paths under all-zero connectivity masks.
        let (plan, masked_input);
        if j >= 2 {
            let p = epoch_plan(n, j, cfg.mask_rate, seed, epoch)?;
            masked_input = encode_input(train, standardizer.as_ref(), Some(&p));
            plan = Some(p);
        } else {
            masked_input = EncodedMatrix {
                n,
                width,
                data: vec![0.0; n * width],
                spans: spans.to_vec(),
                kinds: kinds.to_vec(),
            };
            plan = None;
        }
        let (input, targets): (&EncodedMatrix, Vec<Vec<usize>>) = match (&plan, cfg.masked_reconstruction) {
            (Some(p), true) => {
                let t = (0..n)
                    .map(|i| {
                        p.masked[i]
                            .iter()
                            .copied()
                            .filter(|&a| !train.rows[i][a].is_missing())
                            .collect()
                    })
                    .collect();
                (&masked_input, t)
            }
            (Some(_), false) => (truth, full_targets.clone()),
            (None, _) => (&masked_input, full_targets.clone()),
        };

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(draw.batch) {
            if j >= 2 {
                let mut ordering: Vec<usize> = (0..j).collect();
                ordering.shuffle(&mut rng);
                let (masks, _) = build_made_masks(&ordering, &sizes, spans, &mut rng)?;
                install_masks(&mut net, masks);
            } else {
                let zeros = zero_masks(&net);
                install_masks(&mut net, zeros);
            }

            let batch = gather(input, chunk);
            let batch_truth = gather(truth, chunk);
            let batch_targets: Vec<Vec<usize>> =
                chunk.iter().map(|&i| targets[i].clone()).collect();
            let (out, cache) = forward(&net, &batch, &no_drop, &mut rng)?;
            let (loss, og) = loss_and_grad(&out, &batch_truth, &net.heads, &batch_targets);
            if !loss.is_finite() {
                return Err(Error::NoConvergence(format!(
                    "non-finite training loss in epoch {epoch}"
                )));
            }
            let grads = backward(&net, &cache, &og);
            adam_step(&mut opt, &mut net, &grads)?;
        }

        let val = match &plan {
            Some(p) => {
                validation_loss(&mut net, p, &sizes, spans, train, &masked_input, truth, sd, epoch)?
            }
            None => marginal_loss(&net, &masked_input, truth, &full_targets)?,
        };
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

    // Leave the returned model with masks for one concrete ordering so the
    // autoregressive certificate holds as stored.
    let mut final_rng = seed::rng(seed::derive2(sd, stage::EPOCH, cfg.epochs as u64));
    let (ordering, connectivity) = if j >= 2 {
        let mut ordering: Vec<usize> = (0..j).collect();
        ordering.shuffle(&mut final_rng);
        let (masks, conn) = build_made_masks(&ordering, &sizes, spans, &mut final_rng)?;
        install_masks(&mut best_net, masks);
        (ordering, conn)
    } else {
        let zeros = zero_masks(&best_net);
        install_masks(&mut best_net, zeros);
        (vec![0], Vec::new())
    };

    Ok(MadeModel {
        net: best_net,
        schema: Arc::clone(&train.schema),
        spans: spans.to_vec(),
        kinds: kinds.to_vec(),
        standardizer: standardizer.clone(),
        ordering,
        connectivity,
        hidden: vec![draw.neurons; draw.layers],
        val_loss: best_val,
    })
}

/// Mean loss over this epoch's validation cells, grouped by attribute: one
/// ordering per attribute with that attribute last, masks rebuilt, inputs
/// zero-masked. Cells without ground truth are skipped.
#[allow(clippy::too_many_arguments)]
fn validation_loss(
    net: &mut Network,
    plan: &MaskPlan,
    sizes: &[usize],
    spans: &[(usize, usize)],
    train: &Dataset,
    masked_input: &EncodedMatrix,
    truth: &EncodedMatrix,
    sd: u64,
    epoch: usize,
) -> Result<f64> {
    let j = spans.len();
    let mut rng = seed::rng(seed::derive2(sd, stage::VALIDATION_DRAW, epoch as u64));
    let mut scratch = seed::rng(0);
    let no_drop = DropoutSpec::none(net.layers.len() - 1);
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..j {
        let rows: Vec<usize> = (0..plan.n())
            .filter(|&i| plan.is_validation(i, a) && !train.rows[i][a].is_missing())
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mut ordering: Vec<usize> = (0..j).filter(|&x| x != a).collect();
        ordering.shuffle(&mut rng);
        ordering.push(a);
        let (masks, _) = build_made_masks(&ordering, sizes, spans, &mut rng)?;
        install_masks(net, masks);

        let batch = gather(masked_input, &rows);
        let batch_truth = gather(truth, &rows);
        let targets = vec![vec![a]; rows.len()];
        let (out, _) = forward(net, &batch, &no_drop, &mut scratch)?;
        let (loss, _) = loss_and_grad(&out, &batch_truth, &net.heads, &targets);
        total += loss;
        count += rows.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no validation targets with ground truth".into()));
    }
    Ok(total / count as f64)
}

/// J=1 fallback: mean marginal loss over all known cells on zero inputs.
fn marginal_loss(
    net: &Network,
    zero_input: &EncodedMatrix,
    truth: &EncodedMatrix,
    targets: &[Vec<usize>],
) -> Result<f64> {
    let all: Vec<usize> = (0..zero_input.n).collect();
    let batch = gather(zero_input, &all);
    let batch_truth = gather(truth, &all);
    let (out, _) =
        forward(net, &batch, &DropoutSpec::none(net.layers.len() - 1), &mut seed::rng(0))?;
    let (loss, _) = loss_and_grad(&out, &batch_truth, &net.heads, targets);
    let count: usize = targets.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::InvalidArgument("no scorable cells".into()));
    }
    Ok(loss / count as f64)
}

/// Multiple imputation: per sample, a fresh ordering places the observed
/// attributes first and the targets last, masks are rebuilt, and targets
/// are ancestrally sampled in ordering position (categorical heads sampled,
/// continuous heads read as their mean). Aggregation is majority vote or
/// mean across samples; target cells in `row` are never read.
pub fn impute_made(
    model: &MadeModel,
    row: &[Cell],
    targets: &[usize],
    cfg: &ImputationConfig,
    seed: u64,
) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let j = model.spans.len();
    check_impute_args(row, targets, j)?;
    if targets.is_empty() {
        return Ok(Vec::new());
    }

    let width = model.net.in_dim();
    let base =
        encode_row_observed(row, targets, &model.spans, model.standardizer.as_ref(), width);

    let sizes: Vec<usize> = std::iter::once(width)
        .chain(model.hidden.iter().copied())
        .chain(std::iter::once(width))
        .collect();
    let no_drop = DropoutSpec::none(model.net.layers.len() - 1);
    let mut net = model.net.clone();
    let mut cat_samples: Vec<Vec<usize>> = vec![Vec::new(); targets.len()];
    let mut num_samples: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];

    for s in 0..cfg.samples {
        let mut rng = seed::rng(seed::derive2(seed, stage::IMPUTE, s as u64));
        let mut observed: Vec<usize> =
            (0..j).filter(|a| targets.binary_search(a).is_err()).collect();
        observed.shuffle(&mut rng);
        let mut tail = targets.to_vec();
        tail.shuffle(&mut rng);
        let ordering: Vec<usize> = observed.into_iter().chain(tail.iter().copied()).collect();

        if j >= 2 {
            let (masks, _) = build_made_masks(&ordering, &sizes, &model.spans, &mut rng)?;
            install_masks(&mut net, masks);
        }

        let mut x = Mat { rows: 1, cols: width, data: base.clone() };
        for &t in &tail {
            let (out, _) = forward(&net, &x, &no_drop, &mut rng)?;
            let slot = targets.binary_search(&t).unwrap();
            let (start, len) = model.spans[t];
            match model.kinds[t] {
                SpanKind::OneHot => {
                    let dist = &out.row(0)[start..start + len];
                    let mut u: f64 = rng.gen();
                    let mut v = len - 1;
                    for (k, p) in dist.iter().enumerate() {
                        if u < *p {
                            v = k;
                            break;
                        }
                        u -= p;
                    }
                    cat_samples[slot].push(v);
                    for c in &mut x.data[start..start + len] {
                        *c = 0.0;
                    }
                    x.data[start + v] = 1.0;
                }
                SpanKind::Raw => {
                    let z = out.at(0, start);
                    num_samples[slot].push(z);
                    x.data[start] = z;
                }
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
