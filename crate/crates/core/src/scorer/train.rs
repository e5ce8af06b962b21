//! Factorized maximum-likelihood training of the triple scorer.
//!
//! Each candidate triple is an independent Bernoulli event, so the negative
//! log-likelihood of a labelled candidate set is a sum of per-triple binary
//! cross-entropy terms computed from logits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graphsage::{sage_backward, sage_forward, SageEncoder, SageGraph};
use super::nn::{sigmoid, softplus, Activation, Adam, Network};

/// Probability that the triple with feature row `feature` is relevant.
pub fn mlp_forward(params: &Network, feature: &[f64]) -> Result<f64> {
    let out = params.forward_row(feature)?;
    Ok(sigmoid(out[0]))
}

/// Weighted BCE of one logit: `w*y*softplus(-z) + (1-y)*softplus(z)`.
#[inline]
pub fn bce_term(logit: f64, label: f64, positive_weight: f64) -> f64 {
    let mut l = 0.0;
    // skipped terms would be 0 * inf at infinite logits
    if label != 0.0 {
        l += positive_weight * label * softplus(-logit);
    }
    if label != 1.0 {
        l += (1.0 - label) * softplus(logit);
    }
    l
}

/// Derivative of [`bce_term`] with respect to the logit.
#[inline]
fn bce_grad(logit: f64, label: f64, positive_weight: f64) -> f64 {
    let p = sigmoid(logit);
    positive_weight * label * (p - 1.0) + (1.0 - label) * p
}

/// Adds the gradient of the summed loss into `grads`; returns the summed loss.
fn loss_grad_sum(net: &Network, features: &[f64], labels: &[f64], positive_weight: f64, grads: &mut [f64]) -> Result<f64> {
    let n = labels.len();
    let cache = net.forward_batch(features, n)?;
    let logits = cache.output();
    let mut total = 0.0;
    let mut gout = Vec::with_capacity(n);
    for (&z, &y) in logits.iter().zip(labels) {
        total += bce_term(z, y, positive_weight);
        gout.push(bce_grad(z, y, positive_weight));
    }
    net.backward_batch(&cache, &gout, grads, false);
    Ok(total)
}

fn check_shapes(net: &Network, features: &[f64], labels: &[f64]) -> Result<()> {
    if net.output_dim() != 1 {
        return Err(Error::Shape(format!("scorer must emit one logit, emits {}", net.output_dim())));
    }
    if features.len() != labels.len() * net.input_dim() {
        return Err(Error::Shape(format!(
            "{} feature values for {} labels of dim {}",
            features.len(),
            labels.len(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Mean weighted BCE over the rows and its exact gradient.
pub fn loss_and_grad(net: &Network, features: &[f64], labels: &[f64], positive_weight: f64) -> Result<(f64, Vec<f64>)> {
    check_shapes(net, features, labels)?;
    let mut grads = vec![0.0; net.param_count()];
    if labels.is_empty() {
        return Ok((0.0, grads));
    }
    let total = loss_grad_sum(net, features, labels, positive_weight, &mut grads)?;
    let inv = 1.0 / labels.len() as f64;
    grads.iter_mut().for_each(|g| *g *= inv);
    Ok((total * inv, grads))
}

/// Mean loss only.
pub fn loss(net: &Network, features: &[f64], labels: &[f64], positive_weight: f64) -> Result<f64> {
    check_shapes(net, features, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let cache = net.forward_batch(features, labels.len())?;
    let total: f64 = cache
        .output()
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_term(z, y, positive_weight))
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows per optimizer step (GraphSAGE: questions per step).
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub positive_weight: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Fraction of questions held out; when positive, the parameters with
    /// the lowest held-out loss are returned.
    pub val_fraction: f64,
    /// Data-parallel gradient computation inside each batch.
    pub parallel: bool,
    pub threads: usize,
    pub sage_hidden: usize,
    pub sage_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            positive_weight: 1.0,
            hidden: vec![1024, 1024],
            activation: Activation::Relu,
            val_fraction: 0.0,
            parallel: false,
            threads: 0,
            sage_hidden: 64,
            sage_layers: 1,
        }
    }
}

impl TrainConfig {
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn init_scorer(&self, input_dim: usize) -> Result<Network> {
        Network::init(&self.layer_dims(input_dim), self.activation, Activation::Identity, self.seed)
    }
}

/// Feature rows and binary labels for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Epoch (1-based) whose parameters were returned; 0 means initialization.
    pub selected_epoch: usize,
}

fn split_validation(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if fraction <= 0.0 || n < 2 {
        return (idx, Vec::new());
    }
    idx.shuffle(rng);
    let n_val = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

const PARALLEL_CHUNK: usize = 64;

/// Trains a fresh scorer. Deterministic for a fixed config (including in
/// parallel mode, which reduces fixed-size chunks in order).
pub fn train(samples: &[LabeledSample], input_dim: usize, config: &TrainConfig) -> Result<(Network, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut net = config.init_scorer(input_dim)?;
    for (i, s) in samples.iter().enumerate() {
        check_shapes(&net, &s.features, &s.labels).map_err(|e| Error::Shape(format!("sample {i}: {e}")))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = split_validation(samples.len(), config.val_fraction, &mut rng);
    let mut rows: Vec<(u32, u32)> = train_idx
        .iter()
        .flat_map(|&s| (0..samples[s].labels.len() as u32).map(move |r| (s as u32, r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("training set has no candidate triples".into()));
    }

    let pool = if config.parallel {
        let mut b = rayon::ThreadPoolBuilder::new();
        if config.threads > 0 {
            b = b.num_threads(config.threads);
        }
        Some(b.build().map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut opt = Adam::new(net.param_count(), config.learning_rate);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Network)> = None;
    let mut last_loss = f64::NAN;
    let mut xb = Vec::with_capacity(config.batch_size * input_dim);
    let mut yb = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        rows.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (b, batch) in rows.chunks(config.batch_size).enumerate() {
            xb.clear();
            yb.clear();
            for &(s, r) in batch {
                let s = &samples[s as usize];
                let r = r as usize;
                xb.extend_from_slice(&s.features[r * input_dim..(r + 1) * input_dim]);
                yb.push(s.labels[r]);
            }
            let n = yb.len();
            let mut grads = vec![0.0; net.param_count()];
            let total = match &pool {
                None => loss_grad_sum(&net, &xb, &yb, config.positive_weight, &mut grads)?,
                Some(pool) => {
                    let parts: Vec<(f64, Vec<f64>)> = pool.install(|| {
                        xb.par_chunks(PARALLEL_CHUNK * input_dim)
                            .zip(yb.par_chunks(PARALLEL_CHUNK))
                            .map(|(x, y)| {
                                let mut g = vec![0.0; net.param_count()];
                                loss_grad_sum(&net, x, y, config.positive_weight, &mut g).map(|l| (l, g))
                            })
                            .collect::<Result<_>>()
                    })?;
                    let mut total = 0.0;
                    for (l, g) in parts {
                        total += l;
                        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                    total
                }
            };
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    last_loss,
                });
            }
            last_loss = total / n as f64;
            let inv = 1.0 / n as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            opt.update(net.params_mut(), &grads);
            epoch_total += total;
        }
        if !net.all_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: 0,
                last_loss,
            });
        }
        let epoch_loss = epoch_total / rows.len() as f64;
        report.epoch_losses.push(epoch_loss);
        if val_idx.is_empty() {
            log::info!("epoch {epoch}: loss {epoch_loss:.6}");
            continue;
        }
        let (mut vt, mut vn) = (0.0, 0usize);
        for &i in &val_idx {
            let s = &samples[i];
            vt += loss(&net, &s.features, &s.labels, config.positive_weight)? * s.labels.len() as f64;
            vn += s.labels.len();
        }
        let val = if vn == 0 { 0.0 } else { vt / vn as f64 };
        log::info!("epoch {epoch}: loss {epoch_loss:.6}, held-out {val:.6}");
        report.val_losses.push(val);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, net.clone()));
            report.selected_epoch = epoch;
        }
    }
    if let Some((_, b)) = best {
        return Ok((b, report));
    }
    report.selected_epoch = config.epochs;
    Ok((net, report))
}

/// One question prepared for joint GraphSAGE + scorer training.
#[derive(Debug, Clone)]
pub struct SageSample {
    pub graph: SageGraph,
    pub query: Vec<f64>,
    /// `(head, relation vector, tail)` per candidate, heads/tails as local indices.
    pub triples: Vec<(usize, Vec<f64>, usize)>,
    /// Topic bit per local entity.
    pub topic: Vec<f64>,
    pub labels: Vec<f64>,
}

impl SageSample {
    /// Scorer input rows built from the encoder output `z` (`m × d`).
    pub fn features(&self, z: &[f64], d: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (h, zr, t) in &self.triples {
            out.extend_from_slice(&self.query);
            out.extend_from_slice(&z[h * d..(h + 1) * d]);
            out.extend_from_slice(zr);
            out.extend_from_slice(&z[t * d..(t + 1) * d]);
            out.push(self.topic[*h]);
            out.push(self.topic[*t]);
        }
        out
    }
}

/// Summed loss and gradients (scorer, encoder) for one question.
fn sage_grad_sum(
    scorer: &Network,
    encoder: &SageEncoder,
    sample: &SageSample,
    positive_weight: f64,
    g_scorer: &mut [f64],
    g_sage: &mut [f64],
) -> Result<f64> {
    let trace = sage_forward(encoder, &sample.graph)?;
    let d = encoder.output_dim();
    let x = sample.features(trace.output(), d);
    let n = sample.labels.len();
    check_shapes(scorer, &x, &sample.labels)?;
    let cache = scorer.forward_batch(&x, n)?;
    let mut total = 0.0;
    let mut gout = Vec::with_capacity(n);
    for (&z, &y) in cache.output().iter().zip(&sample.labels) {
        total += bce_term(z, y, positive_weight);
        gout.push(bce_grad(z, y, positive_weight));
    }
    let gx = scorer
        .backward_batch(&cache, &gout, g_scorer, true)
        .expect("input gradient requested");
    let dim = scorer.input_dim();
    let dq = sample.query.len();
    let mut gz = vec![0.0; sample.graph.len() * d];
    for (row, (h, zr, t)) in sample.triples.iter().enumerate() {
        let g = &gx[row * dim..(row + 1) * dim];
        let head_at = dq;
        let tail_at = dq + d + zr.len();
        for k in 0..d {
            gz[h * d + k] += g[head_at + k];
            gz[t * d + k] += g[tail_at + k];
        }
    }
    sage_backward(encoder, &sample.graph, &trace, &gz, g_sage);
    Ok(total)
}

/// Mean loss over one question and gradients for both networks.
pub fn sage_loss_and_grad(
    scorer: &Network,
    encoder: &SageEncoder,
    sample: &SageSample,
    positive_weight: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut gs = vec![0.0; scorer.param_count()];
    let mut ge = vec![0.0; encoder.param_count()];
    let n = sample.labels.len().max(1) as f64;
    let total = sage_grad_sum(scorer, encoder, sample, positive_weight, &mut gs, &mut ge)?;
    gs.iter_mut().chain(ge.iter_mut()).for_each(|g| *g /= n);
    Ok((total / n, gs, ge))
}

/// Jointly trains the GraphSAGE encoder and the scorer, one optimizer step
/// per `batch_size` questions (rows are averaged within each step).
pub fn train_graphsage(
    samples: &[SageSample],
    encoder_init: SageEncoder,
    input_dim: usize,
    config: &TrainConfig,
) -> Result<(Network, SageEncoder, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut scorer = config.init_scorer(input_dim)?;
    let mut encoder = encoder_init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut train_idx, val_idx) = split_validation(samples.len(), config.val_fraction, &mut rng);
    let ns = scorer.param_count();
    let mut opt = Adam::new(ns + encoder.param_count(), config.learning_rate);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Network, SageEncoder)> = None;
    let mut last_loss = f64::NAN;
    let per_step = config.batch_size.max(1);

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let (mut epoch_total, mut epoch_rows) = (0.0, 0usize);
        for (b, chunk) in train_idx.chunks(per_step).enumerate() {
            let mut gs = vec![0.0; ns];
            let mut ge = vec![0.0; encoder.param_count()];
            let mut total = 0.0;
            let mut rows = 0;
            for &i in chunk {
                total += sage_grad_sum(&scorer, &encoder, &samples[i], config.positive_weight, &mut gs, &mut ge)?;
                rows += samples[i].labels.len();
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    last_loss,
                });
            }
            if rows == 0 {
                continue;
            }
            last_loss = total / rows as f64;
            let mut params: Vec<f64> = scorer.params().to_vec();
            params.extend(encoder.params_flat());
            let mut grads = gs;
            grads.extend(ge);
            grads.iter_mut().for_each(|g| *g /= rows as f64);
            opt.update(&mut params, &grads);
            scorer.params_mut().copy_from_slice(&params[..ns]);
            encoder.set_params_flat(&params[ns..]);
            epoch_total += total;
            epoch_rows += rows;
        }
        let epoch_loss = epoch_total / epoch_rows.max(1) as f64;
        report.epoch_losses.push(epoch_loss);
        if val_idx.is_empty() {
            log::info!("epoch {epoch}: loss {epoch_loss:.6}");
            continue;
        }
        let (mut vt, mut vn) = (0.0, 0usize);
        for &i in &val_idx {
            let (l, _, _) = sage_loss_and_grad(&scorer, &encoder, &samples[i], config.positive_weight)?;
            vt += l * samples[i].labels.len() as f64;
            vn += samples[i].labels.len();
        }
        let val = vt / vn.max(1) as f64;
        report.val_losses.push(val);
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, scorer.clone(), encoder.clone()));
            report.selected_epoch = epoch;
        }
    }
    if let Some((_, s, e)) = best {
        return Ok((s, e, report));
    }
    report.selected_epoch = config.epochs;
    Ok((scorer, encoder, report))
}
