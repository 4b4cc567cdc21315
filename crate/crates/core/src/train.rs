//! Loss, optimizer and training loop.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EncodedInstance};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::model::{Model, Network};
use crate::numeric::{sigmoid, Objective, ParamStore, Rng};

/// Binary log loss with `p` clamped into `[1e-12, 1 − 1e-12]`.
pub fn logloss(p: f64, y: u8) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Coefficient of `‖Θ‖₂²` over embedding, mask, FFN, MLP and head
    /// parameters (LN gains and biases are not penalized).
    pub l2: f64,
    pub max_epochs: usize,
    /// Epochs without a validation AUC improvement before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps, counted across epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            l2: 0.0,
            max_epochs: 30,
            patience: 3,
            max_steps: None,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update from the gradients currently in `store`.
pub fn adam_step(store: &mut ParamStore, cfg: &TrainConfig) {
    let (values, grads, m, v, step) = store.optimizer_view();
    *step += 1;
    let t = *step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in 0..values.len() {
        for i in 0..values[p].len() {
            let g = grads[p][i];
            m[p][i] = cfg.beta1 * m[p][i] + (1.0 - cfg.beta1) * g;
            v[p][i] = cfg.beta2 * v[p][i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[p][i] / c1;
            let v_hat = v[p][i] / c2;
            values[p][i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Mean log loss of a batch plus `λ‖Θ‖₂²`, with its ReLU fingerprint.
/// `Θ` excludes LayerNorm parameters.
pub fn objective(network: &Network, store: &ParamStore, batch: &[&EncodedInstance], l2: f64) -> Result<(f64, u64)> {
    let cache = network.forward(store.values(), batch)?;
    let data: f64 = cache
        .logits
        .iter()
        .zip(batch)
        .map(|(&s, inst)| logloss(sigmoid(s), inst.label))
        .sum::<f64>()
        / batch.len() as f64;
    let reg = if l2 > 0.0 { l2 * store.regularized_norm() } else { 0.0 };
    Ok((data + reg, cache.relu_fingerprint()))
}

/// Zeroes the gradients, accumulates `∂objective/∂θ` and returns
/// `(objective, mean log loss)`.
pub fn objective_and_grad(
    network: &Network,
    store: &mut ParamStore,
    batch: &[&EncodedInstance],
    l2: f64,
) -> Result<(f64, f64)> {
    store.zero_grads();
    let cache = network.forward(store.values(), batch)?;
    let n = batch.len() as f64;
    let mut data = 0.0;
    let d_logits: Vec<f64> = cache
        .logits
        .iter()
        .zip(batch)
        .map(|(&s, inst)| {
            let p = sigmoid(s);
            data += logloss(p, inst.label);
            (p - f64::from(inst.label)) / n
        })
        .collect();
    data /= n;
    let (values, mut grads) = store.split();
    network.backward(values, &mut grads, batch, &cache, &d_logits);
    let mut total = data;
    if l2 > 0.0 {
        total += l2 * store.regularized_norm();
        let ids: Vec<_> = store.ids().filter(|&id| store.info(id).regularized).collect();
        for id in ids {
            let delta: Vec<f64> = store.value(id).iter().map(|w| 2.0 * l2 * w).collect();
            let (_, mut g) = store.split();
            g.accumulate(id, &delta);
        }
    }
    Ok((total, data))
}

/// The training objective on a fixed batch, for gradient checking.
pub struct BatchObjective<'a> {
    pub network: &'a Network,
    pub batch: Vec<&'a EncodedInstance>,
    pub l2: f64,
}

impl Objective for BatchObjective<'_> {
    fn loss(&self, store: &ParamStore) -> (f64, u64) {
        objective(self.network, store, &self.batch, self.l2).unwrap_or((f64::NAN, 0))
    }

    fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
        objective_and_grad(self.network, store, &self.batch, self.l2).map_or(f64::NAN, |(l, _)| l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Data loss (without the L2 term) of every minibatch, in order.
    pub batch_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

impl History {
    /// `epoch,train_loss,valid_auc` rows.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("epoch,train_loss,valid_auc\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.valid_auc);
        }
        s
    }
}

/// Shuffled-minibatch Adam training with validation-AUC model selection.
/// On return `model` holds the parameters of the best validation epoch.
pub fn train(model: &mut Model, train: &Dataset, valid: &Dataset, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut rng = Rng::derived(cfg.seed, 0x7A41);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History {
        best_valid_auc: f64::NEG_INFINITY,
        ..History::default()
    };
    let mut best = model.params.snapshot();
    let mut since_best = 0;
    let valid_labels = valid.labels();

    'epochs: for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|m| history.steps >= m) {
                break;
            }
            let batch: Vec<&EncodedInstance> = chunk.iter().map(|&i| &train.instances[i]).collect();
            let (total, data) = objective_and_grad(&model.network, &mut model.params, &batch, cfg.l2)?;
            if !total.is_finite() || !model.params.all_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    loss: total,
                });
            }
            adam_step(&mut model.params, cfg);
            history.batch_losses.push(data);
            history.steps += 1;
            sum += data;
            batches += 1;
        }
        if batches == 0 {
            break;
        }
        let valid_auc = if !valid.is_empty() {
            auc(&model.logits(&valid.instances)?, &valid_labels)?
        } else {
            f64::NAN
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: sum / batches as f64,
            valid_auc,
        });
        // without a validation split, the latest epoch is kept
        if valid_auc > history.best_valid_auc || valid_auc.is_nan() {
            history.best_valid_auc = valid_auc;
            history.best_epoch = epoch;
            best = model.params.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience.max(1) {
                history.stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| history.steps >= m) {
            break;
        }
    }
    model.params.restore(&best)?;
    Ok(history)
}
