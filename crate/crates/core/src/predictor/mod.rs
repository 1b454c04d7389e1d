//! Learned accuracy surrogate over the binary subnet encoding.

mod network;

pub use network::Shape;

use crate::rng_from_seed;
use crate::space::SearchSpace;
use crate::stats::{mean, spearman};
use crate::subnet::{encode, EncodingError, SubnetArch};
use network::{Network, SparseInput};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const PREDICTOR_FORMAT_VERSION: u32 = 1;

/// Anything that scores a subnet by (predicted) accuracy.
pub trait AccuracyModel: Sync {
    fn predict(&self, arch: &SubnetArch) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub arch: SubnetArch,
    pub accuracy: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("need at least {need} {what} pairs, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("label {value} of pair {index} is outside [0, 1]")]
    BadLabel { index: usize, value: f64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub channels: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            channels: 32,
            hidden: 32,
            kernel: 3,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl Hyper {
    fn check(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Hyper(m.to_string()));
        if self.channels == 0 || self.hidden == 0 {
            return bad("channels and hidden must be positive");
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel must be odd");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.hidden, self.kernel)
    }
}

/// A trained surrogate. It carries the space so that it can encode subnets
/// on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorModel {
    pub space: SearchSpace,
    pub hyper: Hyper,
    /// Targets are standardized with these before training.
    pub target_mean: f64,
    pub target_std: f64,
    pub params: Vec<f64>,
    /// Epoch (1-based) of the returned checkpoint; 0 for an untrained model.
    pub best_epoch: usize,
    pub best_val_spearman: f64,
}

impl PredictorModel {
    pub fn init(space: &SearchSpace, hyper: &Hyper) -> Result<Self, PredictorError> {
        hyper.check()?;
        let mut rng = rng_from_seed(hyper.seed);
        Ok(PredictorModel {
            space: space.clone(),
            hyper: hyper.clone(),
            target_mean: 0.0,
            target_std: 1.0,
            params: hyper.shape().init(&mut rng),
            best_epoch: 0,
            best_val_spearman: 0.0,
        })
    }

    fn net(&self) -> Network<'_> {
        Network {
            shape: self.hyper.shape(),
            params: &self.params,
        }
    }

    fn input(&self, arch: &SubnetArch) -> Result<SparseInput, EncodingError> {
        Ok(SparseInput::new(&encode(&self.space, arch)?))
    }

    fn raw(&self, x: &SparseInput) -> f64 {
        self.net().forward(x).0
    }

    pub fn try_predict(&self, arch: &SubnetArch) -> Result<f64, EncodingError> {
        let x = self.input(arch)?;
        Ok(self.raw(&x) * self.target_std + self.target_mean)
    }

    pub fn to_document(&self) -> ModelDocument {
        let mut at = 0;
        let tensors = self
            .hyper
            .shape()
            .tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = self.params[at..at + n].to_vec();
                at += n;
                NamedTensor {
                    name: name.to_string(),
                    shape,
                    data,
                }
            })
            .collect();
        ModelDocument {
            format_version: PREDICTOR_FORMAT_VERSION,
            space: self.space.clone(),
            hyper: self.hyper.clone(),
            target_mean: self.target_mean,
            target_std: self.target_std,
            best_epoch: self.best_epoch,
            best_val_spearman: self.best_val_spearman,
            tensors,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, PredictorError> {
        if doc.format_version != PREDICTOR_FORMAT_VERSION {
            return Err(PredictorError::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        doc.hyper.check()?;
        let expected = doc.hyper.shape().tensors();
        if expected.len() != doc.tensors.len() {
            return Err(PredictorError::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                doc.tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(doc.hyper.shape().num_params());
        for ((name, shape), t) in expected.into_iter().zip(&doc.tensors) {
            if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>()
            {
                return Err(PredictorError::Format(format!(
                    "tensor `{}` {:?} does not match `{name}` {shape:?}",
                    t.name, t.shape
                )));
            }
            params.extend_from_slice(&t.data);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PredictorError::Format("non-finite parameter".into()));
        }
        Ok(PredictorModel {
            space: doc.space,
            hyper: doc.hyper,
            target_mean: doc.target_mean,
            target_std: doc.target_std,
            params,
            best_epoch: doc.best_epoch,
            best_val_spearman: doc.best_val_spearman,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

impl AccuracyModel for PredictorModel {
    /// Subnets outside the model's space rank last.
    fn predict(&self, arch: &SubnetArch) -> f64 {
        self.try_predict(arch).unwrap_or(f64::NEG_INFINITY)
    }
}

pub fn predict(model: &PredictorModel, arch: &SubnetArch) -> f64 {
    model.predict(arch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub space: SearchSpace,
    pub hyper: Hyper,
    pub target_mean: f64,
    pub target_std: f64,
    pub best_epoch: usize,
    pub best_val_spearman: f64,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean absolute error in accuracy units.
    pub train_l1: f64,
    pub val_l1: f64,
    pub val_spearman: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub model: PredictorModel,
    pub curve: Vec<EpochStats>,
}

impl TrainReport {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,learning_rate,train_l1,val_l1,val_spearman\n");
        for e in &self.curve {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.learning_rate, e.train_l1, e.val_l1, e.val_spearman
            );
        }
        s
    }
}

pub const MIN_TRAIN: usize = 100;
pub const MIN_VAL: usize = 20;

/// Splits off the trailing `1 - train_fraction` of `pairs` for validation.
pub fn split_pairs(pairs: &[LabeledPair], train_fraction: f64) -> (&[LabeledPair], &[LabeledPair]) {
    let n = ((pairs.len() as f64) * train_fraction).round() as usize;
    pairs.split_at(n.min(pairs.len()))
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 5.0 / 6.0;

fn check_labels(pairs: &[LabeledPair]) -> Result<(), PredictorError> {
    match pairs
        .iter()
        .position(|p| !(0.0..=1.0).contains(&p.accuracy))
    {
        Some(index) => Err(PredictorError::BadLabel {
            index,
            value: pairs[index].accuracy,
        }),
        None => Ok(()),
    }
}

fn l1_sign(residual: f64) -> f64 {
    if residual > 0.0 {
        1.0
    } else if residual < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Minimizes mean absolute error with momentum SGD under a cosine learning
/// rate schedule and returns the epoch with the best validation Spearman
/// correlation (ties go to the lower validation error, then the earlier
/// epoch).
pub fn train(
    space: &SearchSpace,
    train_pairs: &[LabeledPair],
    val_pairs: &[LabeledPair],
    hyper: &Hyper,
) -> Result<TrainReport, PredictorError> {
    if train_pairs.len() < MIN_TRAIN {
        return Err(PredictorError::TooFew {
            what: "training",
            need: MIN_TRAIN,
            got: train_pairs.len(),
        });
    }
    if val_pairs.len() < MIN_VAL {
        return Err(PredictorError::TooFew {
            what: "validation",
            need: MIN_VAL,
            got: val_pairs.len(),
        });
    }
    check_labels(train_pairs)?;
    check_labels(val_pairs)?;
    let mut model = PredictorModel::init(space, hyper)?;
    let ys: Vec<f64> = train_pairs.iter().map(|p| p.accuracy).collect();
    let mu = mean(&ys);
    let var = ys.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / ys.len() as f64;
    model.target_mean = mu;
    model.target_std = if var > 0.0 { var.sqrt() } else { 1.0 };

    let encode_all = |pairs: &[LabeledPair]| -> Result<Vec<(SparseInput, f64)>, PredictorError> {
        pairs
            .iter()
            .map(|p| {
                Ok((
                    model.input(&p.arch)?,
                    (p.accuracy - model.target_mean) / model.target_std,
                ))
            })
            .collect()
    };
    let train_set = encode_all(train_pairs)?;
    let val_set = encode_all(val_pairs)?;
    let val_truth: Vec<f64> = val_pairs.iter().map(|p| p.accuracy).collect();

    let mut rng = rng_from_seed(hyper.seed ^ 0x5_eed0_f7a1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = vec![0.0; model.params.len()];
    let mut grad = vec![0.0; model.params.len()];
    let batches = train_set.len().div_ceil(hyper.batch_size);
    let total_steps = (hyper.epochs * batches) as f64;
    let mut step = 0usize;
    let mut curve = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, f64, Vec<f64>, usize)> = None;

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut train_abs = 0.0;
        let mut lr = hyper.learning_rate;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            lr = 0.5
                * hyper.learning_rate
                * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos());
            grad.iter_mut().for_each(|g| *g = 0.0);
            let net = model.net();
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let (x, y) = &train_set[i];
                let (out, cache) = net.forward(x);
                let r = out - y;
                loss += r.abs() * scale;
                net.backward(x, &cache, l1_sign(r) * scale, &mut grad);
            }
            if !loss.is_finite() {
                return Err(PredictorError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr,
                });
            }
            train_abs += loss * chunk.len() as f64;
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = hyper.momentum * *v + g;
                *p -= lr * *v;
            }
            step += 1;
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(PredictorError::NonFiniteLoss {
                epoch,
                batch: batches - 1,
                lr,
            });
        }
        let preds: Vec<f64> = val_set
            .iter()
            .map(|(x, _)| model.raw(x) * model.target_std + model.target_mean)
            .collect();
        let val_l1 = preds
            .iter()
            .zip(&val_truth)
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / preds.len() as f64;
        let rho = spearman(&preds, &val_truth).unwrap_or(0.0);
        curve.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_l1: train_abs / train_set.len() as f64 * model.target_std,
            val_l1,
            val_spearman: rho,
        });
        let better = match &best {
            None => true,
            Some((r, l, _, _)) => rho > *r || (rho == *r && val_l1 < *l),
        };
        if better {
            best = Some((rho, val_l1, model.params.clone(), epoch));
        }
    }
    let (rho, _, params, epoch) = best.expect("at least one epoch");
    model.params = params;
    model.best_epoch = epoch;
    model.best_val_spearman = rho;
    Ok(TrainReport { model, curve })
}

/// Mean L1 loss on standardized targets and its gradient.
/// Mean L1 loss of `batch`; optionally accumulates its gradient and records
/// the ReLU pattern and residual sign of every sample.
fn batch_loss(
    model: &PredictorModel,
    batch: &[(SparseInput, f64)],
    grad: Option<&mut [f64]>,
    mut pattern: Option<&mut Vec<bool>>,
) -> f64 {
    let net = model.net();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = grad;
    for (x, y) in batch {
        let (out, cache) = net.forward(x);
        let r = out - y;
        loss += r.abs() * scale;
        if let Some(p) = pattern.as_deref_mut() {
            p.extend(cache.pattern());
            p.push(r > 0.0);
        }
        if let Some(g) = grad.as_deref_mut() {
            net.backward(x, &cache, l1_sign(r) * scale, g);
        }
    }
    loss
}

/// Largest relative difference between the analytic gradient of the batch
/// L1 loss and central finite differences with step 1e-5. Coordinates whose
/// probes cross a kink of the loss (a ReLU switching or a residual changing
/// sign) are skipped, as are coordinates where both gradients are below
/// 1e-9.
pub fn grad_check(model: &PredictorModel, batch: &[LabeledPair]) -> Result<f64, PredictorError> {
    const H: f64 = 1e-5;
    let data = batch
        .iter()
        .map(|p| {
            Ok((
                model.input(&p.arch)?,
                (p.accuracy - model.target_mean) / model.target_std,
            ))
        })
        .collect::<Result<Vec<_>, PredictorError>>()?;
    let mut analytic = vec![0.0; model.params.len()];
    let mut base = Vec::new();
    batch_loss(model, &data, Some(&mut analytic), Some(&mut base));
    let mut probe = model.clone();
    let (mut up_pat, mut down_pat) = (Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = model.params[i];
        up_pat.clear();
        down_pat.clear();
        probe.params[i] = orig + H;
        let up = batch_loss(&probe, &data, None, Some(&mut up_pat));
        probe.params[i] = orig - H;
        let down = batch_loss(&probe, &data, None, Some(&mut down_pat));
        probe.params[i] = orig;
        if up_pat != base || down_pat != base {
            continue;
        }
        let numeric = (up - down) / (2.0 * H);
        let a = analytic[i];
        if !numeric.is_finite() || !a.is_finite() {
            return Ok(f64::INFINITY);
        }
        if a.abs() < 1e-9 && numeric.abs() < 1e-9 {
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
