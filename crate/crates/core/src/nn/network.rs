use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let cols = rows.first().map_or(0, |r| r.len());
        debug_assert!(rows.iter().all(|r| r.len() == cols));
        Mat { rows: rows.len(), cols, data: rows.concat() }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer; the effective weight is w masked elementwise, and
/// masked positions get exactly zero gradient. Stored weights are never
/// destroyed by masking, so a position disabled under one mask keeps its
/// trained value and resumes from it when a later mask re-enables it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Mat,
    pub b: Vec<f64>,
    pub mask: Option<Mat>,
    pub act: Activation,
}

impl DenseLayer {
    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    /// Installs a 0/1 mask, replacing any previous one.
    pub fn set_mask(&mut self, mask: Mat) {
        debug_assert_eq!((mask.rows, mask.cols), (self.w.rows, self.w.cols));
        debug_assert!(mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
        self.mask = Some(mask);
    }
}

/// Output head over a slice of the final layer: a softmax distribution over
/// a categorical attribute's one-hot span, or a linear scalar for a
/// continuous attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Head {
    Softmax { attr: usize, lo: usize, hi: usize },
    Linear { attr: usize, col: usize },
}

impl Head {
    pub fn attr(&self) -> usize {
        match self {
            Head::Softmax { attr, .. } | Head::Linear { attr, .. } => *attr,
        }
    }

    fn span(&self) -> (usize, usize) {
        match *self {
            Head::Softmax { lo, hi, .. } => (lo, hi),
            Head::Linear { col, .. } => (col, col + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    /// One head per attribute, spans partitioning the output width.
    pub heads: Vec<Head>,
}

impl Network {
    /// Glorot-uniform initialization over `sizes` = [input, hidden..,
    /// output]; every layer but the last is relu.
    pub fn new(sizes: &[usize], heads: Vec<Head>, rng: &mut ChaCha8Rng) -> Result<Network> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidArgument("zero-width layer".into()));
            }
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for v in &mut w.data {
                *v = rng.gen_range(-bound..=bound);
            }
            let act =
                if k + 2 == sizes.len() { Activation::Identity } else { Activation::Relu };
            layers.push(DenseLayer { w, b: vec![0.0; fan_out], mask: None, act });
        }
        let net = Network { layers, heads };
        net.check_heads()?;
        Ok(net)
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    pub(crate) fn check_heads(&self) -> Result<()> {
        let mut covered = vec![false; self.out_dim()];
        for h in &self.heads {
            let (lo, hi) = h.span();
            if lo >= hi || hi > covered.len() {
                return Err(Error::InvalidArgument(format!("head span {lo}..{hi} out of range")));
            }
            for c in &mut covered[lo..hi] {
                if *c {
                    return Err(Error::InvalidArgument("head spans overlap".into()));
                }
                *c = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::InvalidArgument("head spans do not cover the output".into()));
        }
        Ok(())
    }
}

/// Per-hidden-layer keep probabilities; `active` distinguishes training and
/// stochastic inference from deterministic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub keep: Vec<f64>,
    pub active: bool,
}

impl DropoutSpec {
    pub fn none(hidden_layers: usize) -> DropoutSpec {
        DropoutSpec { keep: vec![1.0; hidden_layers], active: false }
    }

    pub fn validate(&self, hidden_layers: usize) -> Result<()> {
        if self.keep.len() != hidden_layers {
            return Err(Error::InvalidArgument(format!(
                "{} keep probabilities for {hidden_layers} hidden layers",
                self.keep.len()
            )));
        }
        if self.keep.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
            return Err(Error::InvalidArgument("keep probability outside (0, 1]".into()));
        }
        Ok(())
    }
}

pub struct ForwardCache {
    /// Input to layer l (after the previous layer's dropout); one extra
    /// entry holding the final layer's activation.
    xs: Vec<Mat>,
    /// Pre-activations per layer.
    zs: Vec<Mat>,
    /// Inverted-dropout scale per hidden layer output: 0 or 1/keep.
    drop: Vec<Option<Mat>>,
}

/// Forward pass over a batch; returns per-head-normalized outputs and the
/// cache for `backward`. Dropout applies to hidden layer outputs with
/// inverted scaling, so disabling it needs no rescaling.
pub fn forward(
    net: &Network,
    batch: &Mat,
    dropout: &DropoutSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Mat, ForwardCache)> {
    if batch.cols != net.in_dim() {
        return Err(Error::InvalidArgument(format!(
            "batch width {} does not match input width {}",
            batch.cols,
            net.in_dim()
        )));
    }
    dropout.validate(net.layers.len().saturating_sub(1))?;

    let mut xs = vec![batch.clone()];
    let mut zs = Vec::with_capacity(net.layers.len());
    let mut drop = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let x = xs.last().unwrap();
        let mut z = Mat::zeros(x.rows, layer.out_dim());
        for i in 0..x.rows {
            let xi = x.row(i);
            for o in 0..layer.out_dim() {
                let wrow = &layer.w.data[o * layer.w.cols..(o + 1) * layer.w.cols];
                let mut acc = layer.b[o];
                match &layer.mask {
                    Some(mask) => {
                        let mrow = &mask.data[o * mask.cols..(o + 1) * mask.cols];
                        for ((w, m), v) in wrow.iter().zip(mrow).zip(xi) {
                            acc += w * m * v;
                        }
                    }
                    None => {
                        for (w, v) in wrow.iter().zip(xi) {
                            acc += w * v;
                        }
                    }
                }
                *z.at_mut(i, o) = acc;
            }
        }
        let mut a = z.clone();
        if layer.act == Activation::Relu {
            for v in &mut a.data {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        zs.push(z);
        let hidden = l + 1 < net.layers.len();
        if hidden && dropout.active {
            let keep = dropout.keep[l];
            let mut scale = Mat::zeros(a.rows, a.cols);
            for (s, v) in scale.data.iter_mut().zip(&mut a.data) {
                *s = if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 };
                *v *= *s;
            }
            drop.push(Some(scale));
        } else {
            drop.push(None);
        }
        xs.push(a);
    }

    let mut out = xs.last().unwrap().clone();
    for head in &net.heads {
        if let Head::Softmax { lo, hi, .. } = *head {
            for i in 0..out.rows {
                let row = &mut out.data[i * out.cols + lo..i * out.cols + hi];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
        }
    }
    Ok((out, ForwardCache { xs, zs, drop }))
}

/// Composite loss over designated target attributes: cross-entropy for
/// softmax heads, squared error for linear heads, summed over
/// `targets[i]` per row. Returns the loss and its gradient with respect to
/// the final layer's raw output (softmax folded into the cross-entropy
/// gradient).
pub fn loss_and_grad(
    outputs: &Mat,
    truth: &Mat,
    heads: &[Head],
    targets: &[Vec<usize>],
) -> (f64, Mat) {
    debug_assert_eq!(outputs.rows, truth.rows);
    debug_assert_eq!(outputs.cols, truth.cols);
    debug_assert_eq!(outputs.rows, targets.len());
    let mut loss = 0.0;
    let mut grad = Mat::zeros(outputs.rows, outputs.cols);
    for (i, row_targets) in targets.iter().enumerate() {
        for &attr in row_targets {
            let head = heads.iter().find(|h| h.attr() == attr).expect("head per attribute");
            match *head {
                Head::Softmax { lo, hi, .. } => {
                    // truth row carries the one-hot; a designated target
                    // must have ground truth.
                    debug_assert!(
                        truth.row(i)[lo..hi].iter().sum::<f64>() > 0.5,
                        "target without truth"
                    );
                    for c in lo..hi {
                        let p = outputs.at(i, c).max(1e-300);
                        let t = truth.at(i, c);
                        if t > 0.0 {
                            loss -= t * p.ln();
                        }
                        *grad.at_mut(i, c) += outputs.at(i, c) - t;
                    }
                }
                Head::Linear { col, .. } => {
                    let d = outputs.at(i, col) - truth.at(i, col);
                    loss += d * d;
                    *grad.at_mut(i, col) += 2.0 * d;
                }
            }
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// (dW, db) per layer, shapes matching the network.
    pub layers: Vec<(Mat, Vec<f64>)>,
}

/// Exact backpropagation of `out_grad` (gradient at the final layer's raw
/// output) through the cache; masked weight positions get gradient zero.
pub fn backward(net: &Network, cache: &ForwardCache, out_grad: &Mat) -> Gradients {
    let mut grads: Vec<(Mat, Vec<f64>)> = net
        .layers
        .iter()
        .map(|l| (Mat::zeros(l.w.rows, l.w.cols), vec![0.0; l.b.len()]))
        .collect();
    let mut delta = out_grad.clone();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        // Through dropout on this layer's output (hidden layers only).
        if let Some(scale) = &cache.drop[l] {
            for (d, s) in delta.data.iter_mut().zip(&scale.data) {
                *d *= s;
            }
        }
        // Through the activation.
        if layer.act == Activation::Relu {
            for (d, z) in delta.data.iter_mut().zip(&cache.zs[l].data) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let x = &cache.xs[l];
        let (dw, db) = &mut grads[l];
        for i in 0..delta.rows {
            let di = delta.row(i);
            let xi = x.row(i);
            for o in 0..layer.out_dim() {
                db[o] += di[o];
                let wrow = &mut dw.data[o * dw.cols..(o + 1) * dw.cols];
                for (g, v) in wrow.iter_mut().zip(xi) {
                    *g += di[o] * v;
                }
            }
        }
        if let Some(mask) = &layer.mask {
            for (g, m) in dw.data.iter_mut().zip(&mask.data) {
                *g *= m;
            }
        }
        if l > 0 {
            let mut prev = Mat::zeros(delta.rows, layer.in_dim());
            for i in 0..delta.rows {
                let di = delta.row(i);
                for o in 0..layer.out_dim() {
                    if di[o] == 0.0 {
                        continue;
                    }
                    let wrow = &layer.w.data[o * layer.w.cols..(o + 1) * layer.w.cols];
                    let prow =
                        &mut prev.data[i * layer.in_dim()..(i + 1) * layer.in_dim()];
                    match &layer.mask {
                        Some(mask) => {
                            let mrow = &mask.data[o * mask.cols..(o + 1) * mask.cols];
                            for ((p, w), m) in prow.iter_mut().zip(wrow).zip(mrow) {
                                *p += di[o] * w * m;
                            }
                        }
                        None => {
                            for (p, w) in prow.iter_mut().zip(wrow) {
                                *p += di[o] * w;
                            }
                        }
                    }
                }
            }
            delta = prev;
        }
    }
    Gradients { layers: grads }
}
