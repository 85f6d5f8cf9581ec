use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{argmax, forward, predict};
use super::params::{init_params, ModelConfig, Variant};
use super::ModelError;
use crate::graph::HeteroGraph;
use crate::synthgen::Risk;
use crate::ndiff::{AdamConfig, AdamState, Bound, ParamStore, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
}

/// Shipped hyperparameter profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainProfile {
    /// d = 128, lr 1e-3, patience 20.
    Main,
    /// d = 256, 50 epochs, batch 256.
    PruningBench,
    /// Small and quick: d = 128, 10 epochs.
    Desk,
}

impl TrainProfile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "main" => Some(Self::Main),
            "pruning_bench" | "pruning-bench" => Some(Self::PruningBench),
            "desk" => Some(Self::Desk),
            _ => None,
        }
    }

    pub fn configs(self, variant: Variant, seed: u64) -> (ModelConfig, TrainConfig) {
        let (hidden, epochs, batch_size) = match self {
            TrainProfile::Main => (128, 100, 64),
            TrainProfile::PruningBench => (256, 50, 256),
            TrainProfile::Desk => (128, 10, 32),
        };
        (
            ModelConfig::new(variant, hidden),
            TrainConfig {
                epochs,
                batch_size,
                lr: 1e-3,
                patience: 20,
                seed,
            },
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

/// Stops after `patience` epochs without a strict improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    since: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since: 0,
        }
    }

    /// Record an epoch's score; true when it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since = 0;
            true
        } else {
            self.since += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since >= self.patience
    }
}

pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub seconds: f64,
}

/// `N / (3 · count_c)` over the given labels; absent classes get 0.
pub fn class_weights(labels: &[usize]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for &l in labels {
        counts[l] += 1;
    }
    counts.map(|c| if c == 0 { 0.0 } else { labels.len() as f64 / (3.0 * c as f64) })
}

/// One optimisation step on a closed batch. Only labeled reports enter the
/// loss; a batch without any returns `None` and leaves everything untouched.
pub(crate) fn train_step(
    params: &mut ParamStore<f32>,
    adam: &mut AdamState<f32>,
    cfg: &ModelConfig,
    batch: &HeteroGraph,
    weights: &[f32; 3],
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>, ModelError> {
    let rows: Vec<usize> = (0..batch.n_reports()).filter(|&i| batch.labeled[i]).collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let labels: Vec<usize> = rows.iter().map(|&i| batch.reports[i].risk.index()).collect();
    let mut tape = Tape::new();
    let p = Bound::bind(&mut tape, params, true);
    let out = forward(&mut tape, &p, cfg, batch, true, rng)?;
    let idx: Vec<Option<u32>> = rows.iter().map(|&i| Some(i as u32)).collect();
    let picked = tape.gather_rows(out.logits, &idx)?;
    let loss = tape.weighted_cross_entropy(picked, &labels, weights)?;
    let value = tape.value(loss).item() as f64;
    if !value.is_finite() {
        return Ok(Some(value));
    }
    let grads = tape.backward(loss)?;
    let mut g = ParamStore::new();
    for (name, t) in params.iter() {
        let v = p.var(name)?;
        g.insert(name.clone(), grads.get(v).cloned().unwrap_or_else(|_| Tensor::zeros(t.shape())));
    }
    adam.step(params, &g)?;
    Ok(Some(value))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; 3]; 3],
    pub predicted: Vec<usize>,
}

impl Evaluation {
    pub fn from_labels(truth: &[usize], predicted: Vec<usize>) -> Self {
        let mut confusion = [[0; 3]; 3];
        for (&t, &p) in truth.iter().zip(&predicted) {
            confusion[t][p] += 1;
        }
        let correct = (0..3).map(|c| confusion[c][c]).sum::<usize>();
        Self {
            accuracy: if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 },
            confusion,
            predicted,
        }
    }

    /// Precision of class `c`; 1.0 when the class is never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        let col: usize = (0..3).map(|t| self.confusion[t][c]).sum();
        if col == 0 {
            1.0
        } else {
            self.confusion[c][c] as f64 / col as f64
        }
    }

    /// `1 − precision(high)`, in percent.
    pub fn fp_high(&self) -> f64 {
        100.0 * (1.0 - self.precision(Risk::High.index()))
    }

    /// `1 − recall(high)`, in percent.
    pub fn fn_high(&self) -> f64 {
        100.0 * (1.0 - self.recall(Risk::High.index()))
    }

    /// Recall of class `c`; 1.0 when the class never occurs.
    pub fn recall(&self, c: usize) -> f64 {
        let row: usize = self.confusion[c].iter().sum();
        if row == 0 {
            1.0
        } else {
            self.confusion[c][c] as f64 / row as f64
        }
    }
}

const EVAL_CHUNK: usize = 512;

/// Inference over `reports` in closed chunks.
pub fn evaluate(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    g: &HeteroGraph,
    reports: &[usize],
) -> Result<Evaluation, ModelError> {
    let mut predicted = Vec::with_capacity(reports.len());
    for chunk in reports.chunks(EVAL_CHUNK) {
        let batch = g.closed_batch(chunk);
        let pred = predict(params, cfg, &batch)?;
        predicted.extend(pred.logits.iter().map(|l| argmax(l)));
    }
    let truth: Vec<usize> = reports.iter().map(|&i| g.reports[i].risk.index()).collect();
    Ok(Evaluation::from_labels(&truth, predicted))
}

/// Train on the labeled reports among `train_reports`, early-stopping on
/// validation accuracy and returning the best-validation parameters.
pub fn train(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    g: &HeteroGraph,
    train_reports: &[usize],
    val_reports: &[usize],
) -> Result<TrainOutcome, ModelError> {
    let start = Instant::now();
    let mut labeled: Vec<usize> = train_reports.iter().copied().filter(|&i| g.labeled[i]).collect();
    if labeled.is_empty() {
        return Err(ModelError::NoLabeled);
    }
    if val_reports.is_empty() {
        return Err(ModelError::EmptyVal);
    }
    if tc.batch_size == 0 {
        return Err(ModelError::Invalid("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut params = init_params::<f32, _>(cfg, &mut rng)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
    )?;
    let labels: Vec<usize> = labeled.iter().map(|&i| g.reports[i].risk.index()).collect();
    let weights = class_weights(&labels).map(|w| w as f32);

    let mut stop = EarlyStopping::new(tc.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    for epoch in 1..=tc.epochs {
        let t0 = Instant::now();
        labeled.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, chunk) in labeled.chunks(tc.batch_size).enumerate() {
            let batch = g.closed_batch(chunk);
            if let Some(loss) = train_step(&mut params, &mut adam, cfg, &batch, &weights, &mut rng)? {
                if !loss.is_finite() {
                    return Err(ModelError::NonFiniteLoss { epoch, batch: b });
                }
                total += loss;
                batches += 1;
            }
        }
        let val = evaluate(&params, cfg, g, val_reports)?;
        history.push(EpochLog {
            epoch,
            loss: total / batches.max(1) as f64,
            val_acc: val.accuracy,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if stop.observe(epoch, val.accuracy) {
            best = params.clone();
        }
        if stop.should_stop() {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stop.best_epoch,
        best_val_acc: stop.best,
        seconds: start.elapsed().as_secs_f64(),
    })
}
