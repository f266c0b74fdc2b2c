//! Triplet margin loss, its analytic gradients through the bag-of-embeddings
//! encoder, and an AdamW training loop with linear warmup and gradient
//! accumulation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TextMode};
use crate::encoder::{EncoderParams, Pooling, Tokenizer};
use crate::error::{Error, Result};
use crate::miner::Triplet;
use crate::rng;

/// Denominator guard for distance gradients at zero distance.
const DIST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub validate_every: u64,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            margin: 1.0,
            epochs: 4,
            batch_size: 4,
            grad_accum: 8,
            warmup_fraction: 0.10,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validate_every: 50,
            seed: 0,
            pooling: Pooling::Mean,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            out.push(format!("margin must be positive, got {}", self.margin));
        }
        if self.epochs == 0 {
            out.push("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.grad_accum == 0 {
            out.push("grad_accum must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            out.push(format!("warmup_fraction must be in [0, 1), got {}", self.warmup_fraction));
        }
        if !(self.weight_decay >= 0.0) {
            out.push(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            out.push("beta1 and beta2 must be in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            out.push("epsilon must be positive".into());
        }
        if self.validate_every == 0 {
            out.push("validate_every must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(p.join("; ")))
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum
    }

    pub fn steps_per_epoch(&self, rows: usize) -> u64 {
        rows.div_ceil(self.effective_batch()) as u64
    }

    pub fn total_steps(&self, rows: usize) -> u64 {
        self.epochs as u64 * self.steps_per_epoch(rows)
    }

    pub fn warmup_steps(&self, rows: usize) -> u64 {
        (self.warmup_fraction * self.total_steps(rows) as f64).ceil() as u64
    }

    /// Learning rate at 1-based optimizer step `step`: linear ramp from 0
    /// over the warmup steps, then constant.
    pub fn learning_rate_at(&self, step: u64, rows: usize) -> f64 {
        let warmup = self.warmup_steps(rows);
        if warmup == 0 || step >= warmup {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / warmup as f64
        }
    }
}

/// One triplet as token-id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTriplet {
    pub focal: Vec<u32>,
    pub positive: Vec<u32>,
    pub negative: Vec<u32>,
}

/// Composes and tokenizes every patent named in `triplets`.
pub fn prepare_triplets(
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    triplets: &[Triplet],
    mode: TextMode,
) -> Result<Vec<TokenTriplet>> {
    let tok = |id: &str| -> Result<Vec<u32>> {
        let ids = tokenizer.tokenize(&corpus.compose_text(id, mode)?);
        if ids.is_empty() {
            return Err(Error::EmptyDocument(id.to_string()));
        }
        Ok(ids)
    };
    triplets
        .par_iter()
        .map(|t| {
            Ok(TokenTriplet {
                focal: tok(&t.focal_id)?,
                positive: tok(&t.positive_id)?,
                negative: tok(&t.negative_id)?,
            })
        })
        .collect()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max(‖vf − vp‖₂ − ‖vf − vn‖₂ + margin, 0)`.
pub fn triplet_loss(vf: &[f64], vp: &[f64], vn: &[f64], margin: f64) -> Result<f64> {
    if vp.len() != vf.len() || vn.len() != vf.len() {
        return Err(Error::DimensionMismatch {
            expected: vf.len(),
            actual: if vp.len() != vf.len() { vp.len() } else { vn.len() },
        });
    }
    if !(margin > 0.0) {
        return Err(Error::InvalidInput(format!("margin must be positive, got {margin}")));
    }
    Ok((l2(vf, vp) - l2(vf, vn) + margin).max(0.0))
}

/// Gradient buffers shaped like [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &EncoderParams) -> Self {
        Gradients {
            embedding: vec![0.0; params.embedding.len()],
            projection: vec![0.0; params.projection.len()],
            bias: vec![0.0; params.bias.len()],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.embedding.iter().chain(&self.projection).chain(&self.bias)
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.embedding.iter_mut().zip(&other.embedding) {
            *a += b;
        }
        for (a, b) in self.projection.iter_mut().zip(&other.projection) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    fn scale(&mut self, s: f64) {
        self.embedding.iter_mut().chain(self.projection.iter_mut()).chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }
}

/// Backpropagates `d_out` (gradient w.r.t. one document's output vector)
/// into `grads`.
fn backprop_document(params: &EncoderParams, ids: &[u32], hidden: &[f64], d_out: &[f64], pooling: Pooling, grads: &mut Gradients) {
    let out_dim = params.out_dim;
    for (b, g) in grads.bias.iter_mut().zip(d_out) {
        *b += g;
    }
    let mut d_hidden = vec![0.0; params.dim];
    for (i, dh) in d_hidden.iter_mut().enumerate() {
        let w_row = &params.projection[i * out_dim..(i + 1) * out_dim];
        let g_row = &mut grads.projection[i * out_dim..(i + 1) * out_dim];
        for j in 0..out_dim {
            g_row[j] += hidden[i] * d_out[j];
            *dh += w_row[j] * d_out[j];
        }
    }
    let dim = params.dim;
    let mut scatter = |token: u32, weight: f64| {
        let row = &mut grads.embedding[token as usize * dim..(token as usize + 1) * dim];
        for (r, dh) in row.iter_mut().zip(&d_hidden) {
            *r += weight * dh;
        }
    };
    match pooling {
        Pooling::First => scatter(ids[0], 1.0),
        Pooling::Mean => {
            let w = 1.0 / ids.len() as f64;
            for &t in ids {
                scatter(t, w);
            }
        }
    }
}

/// Adds the gradient of one triplet's loss into `grads` and returns the loss.
fn accumulate_triplet(params: &EncoderParams, t: &TokenTriplet, margin: f64, pooling: Pooling, grads: &mut Gradients) -> Result<f64> {
    let hf = params.pool(&t.focal, pooling)?;
    let hp = params.pool(&t.positive, pooling)?;
    let hn = params.pool(&t.negative, pooling)?;
    let (yf, yp, yn) = (params.project(&hf), params.project(&hp), params.project(&hn));
    let dp: Vec<f64> = yf.iter().zip(&yp).map(|(a, b)| a - b).collect();
    let dn: Vec<f64> = yf.iter().zip(&yn).map(|(a, b)| a - b).collect();
    let a = dp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = dn.iter().map(|v| v * v).sum::<f64>().sqrt();
    let loss = a - c + margin;
    if loss <= 0.0 {
        return Ok(0.0);
    }
    let ua: Vec<f64> = dp.iter().map(|v| v / a.max(DIST_EPS)).collect();
    let uc: Vec<f64> = dn.iter().map(|v| v / c.max(DIST_EPS)).collect();
    let g_focal: Vec<f64> = ua.iter().zip(&uc).map(|(x, y)| x - y).collect();
    let g_pos: Vec<f64> = ua.iter().map(|x| -x).collect();
    backprop_document(params, &t.focal, &hf, &g_focal, pooling, grads);
    backprop_document(params, &t.positive, &hp, &g_pos, pooling, grads);
    backprop_document(params, &t.negative, &hn, &uc, pooling, grads);
    Ok(loss)
}

fn batch_sums(params: &EncoderParams, batch: &[&TokenTriplet], margin: f64, pooling: Pooling) -> Result<(Gradients, f64)> {
    let mut grads = Gradients::zeros(params);
    let mut loss = 0.0;
    for t in batch {
        loss += accumulate_triplet(params, t, margin, pooling, &mut grads)?;
    }
    Ok((grads, loss))
}

/// Analytic gradients of the mean batch loss, and the mean loss.
pub fn loss_gradients(params: &EncoderParams, batch: &[TokenTriplet], margin: f64, pooling: Pooling) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Ok((Gradients::zeros(params), 0.0));
    }
    let refs: Vec<&TokenTriplet> = batch.iter().collect();
    let (mut grads, loss) = batch_sums(params, &refs, margin, pooling)?;
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((grads, loss / n))
}

/// Mean loss and triplet accuracy (strictly closer positive) without
/// touching the parameters.
pub fn validate(params: &EncoderParams, triplets: &[TokenTriplet], margin: f64, pooling: Pooling) -> Result<(f64, f64)> {
    if triplets.is_empty() {
        return Err(Error::Insufficient("empty validation set".into()));
    }
    let per: Vec<(f64, bool)> = triplets
        .par_iter()
        .map(|t| {
            let vf = params.encode(&t.focal, pooling)?;
            let vp = params.encode(&t.positive, pooling)?;
            let vn = params.encode(&t.negative, pooling)?;
            Ok((triplet_loss(&vf, &vp, &vn, margin)?, l2(&vf, &vp) < l2(&vf, &vn)))
        })
        .collect::<Result<_>>()?;
    let n = triplets.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Parameters, optimizer moments, and progress; enough to resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: EncoderParams,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub history: Vec<HistoryEntry>,
    loss_since_validation: f64,
    rows_since_validation: usize,
}

const CHECKPOINT_FORMAT: &str = "citembed-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: TrainConfig,
    state: TrainState,
}

impl TrainState {
    pub fn new(params: EncoderParams) -> Self {
        let n = params.num_values();
        TrainState {
            params,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
            history: Vec::new(),
            loss_since_validation: 0.0,
            rows_since_validation: 0,
        }
    }

    /// AdamW update at the next step with learning rate `lr`: moments and
    /// bias correction on `grads`, then decay applied to the parameters
    /// directly.
    pub fn apply_update(&mut self, grads: &Gradients, lr: f64, config: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        let decay = 1.0 - lr * config.weight_decay;
        let params = self.params.values_mut();
        for (((p, g), m), v) in params.zip(grads.values()).zip(&mut self.first_moment).zip(&mut self.second_moment) {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let adam = (*m / bc1) / ((*v / bc2).sqrt() + config.epsilon);
            *p = *p * decay - lr * adam;
        }
    }

    pub fn save_checkpoint(&self, path: &Path, config: &TrainConfig) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(
            &mut w,
            &CheckpointFile {
                format: CHECKPOINT_FORMAT.into(),
                config: config.clone(),
                state: self.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<(TrainState, TrainConfig)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: CheckpointFile = serde_json::from_reader(BufReader::new(file))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidInput(format!("{}: not a checkpoint", path.display())));
        }
        doc.state.params.validate()?;
        Ok((doc.state, doc.config))
    }
}

/// Writes `step train_loss val_loss val_accuracy` rows, tab separated.
pub fn write_history(path: &Path, history: &[HistoryEntry]) -> Result<()> {
    let mut out = String::from("step\ttrain_loss\tval_loss\tval_accuracy\n");
    for h in history {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", h.step, h.train_loss, h.val_loss, h.val_accuracy));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trains from fresh parameters.
pub fn train(params: EncoderParams, train_set: &[TokenTriplet], val_set: &[TokenTriplet], config: &TrainConfig) -> Result<TrainState> {
    resume(TrainState::new(params), train_set, val_set, config, None)
}

/// Continues training `state` up to `until` optimizer steps (default: the
/// full schedule). Rows are reshuffled per epoch from the seed, so a resumed
/// run follows the same trajectory as an uninterrupted one.
pub fn resume(
    mut state: TrainState,
    train_set: &[TokenTriplet],
    val_set: &[TokenTriplet],
    config: &TrainConfig,
    until: Option<u64>,
) -> Result<TrainState> {
    config.validate()?;
    state.params.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Insufficient("training and validation sets must be non-empty".into()));
    }
    let rows = train_set.len();
    let per_epoch = config.steps_per_epoch(rows);
    let total = config.total_steps(rows);
    let stop = until.unwrap_or(total).min(total);
    let eff = config.effective_batch();

    if state.history.is_empty() {
        let (train_loss, _) = validate(&state.params, train_set, config.margin, config.pooling)?;
        let (val_loss, val_accuracy) = validate(&state.params, val_set, config.margin, config.pooling)?;
        state.history.push(HistoryEntry {
            step: 0,
            train_loss,
            val_loss,
            val_accuracy,
        });
    }

    let mut order: Vec<usize> = Vec::new();
    let mut order_epoch = u64::MAX;
    while state.step < stop {
        let step = state.step + 1;
        let epoch = (step - 1) / per_epoch;
        if epoch != order_epoch {
            order = (0..rows).collect();
            rng::shuffle(&mut rng::stream(config.seed, &format!("epoch-{epoch}")), &mut order);
            order_epoch = epoch;
        }
        let k = ((step - 1) % per_epoch) as usize;
        let chunk: Vec<&TokenTriplet> = order[k * eff..((k + 1) * eff).min(rows)].iter().map(|&i| &train_set[i]).collect();

        let partials: Vec<(Gradients, f64)> = chunk
            .par_chunks(config.batch_size)
            .map(|micro| batch_sums(&state.params, micro, config.margin, config.pooling))
            .collect::<Result<_>>()?;
        let mut grads = Gradients::zeros(&state.params);
        let mut loss = 0.0;
        for (g, l) in &partials {
            grads.add(g);
            loss += l;
        }
        let lr = config.learning_rate_at(step, rows);
        if !loss.is_finite() || grads.values().any(|g| !g.is_finite()) {
            let max_abs = state.params.values().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::NonFinite(format!(
                "loss {loss} at step {step} (epoch {epoch}, lr {lr:e}, max |param| {max_abs:e})"
            )));
        }
        grads.scale(1.0 / chunk.len() as f64);
        state.apply_update(&grads, lr, config);
        state.loss_since_validation += loss;
        state.rows_since_validation += chunk.len();

        if state.step % config.validate_every == 0 || state.step == total {
            let (val_loss, val_accuracy) = validate(&state.params, val_set, config.margin, config.pooling)?;
            let train_loss = state.loss_since_validation / state.rows_since_validation.max(1) as f64;
            log::info!(
                "step {}/{}: train {train_loss:.4} val {val_loss:.4} acc {val_accuracy:.3}",
                state.step,
                total
            );
            state.history.push(HistoryEntry {
                step: state.step,
                train_loss,
                val_loss,
                val_accuracy,
            });
            state.loss_since_validation = 0.0;
            state.rows_since_validation = 0;
        }
    }
    Ok(state)
}
