//! Adam with a warmup-then-linear-decay schedule, and a simple epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, TrainConfig};
use crate::encode::EncodedInput;
use crate::model::{loss_and_grad, ModelError};
use crate::params::Parameters;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-6;

/// Linear warmup from 0 to `peak` over `warmup` steps, then linear decay to 0 at `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
}

impl Schedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Schedule { peak: cfg.lr, warmup: cfg.warmup_steps, total: cfg.total_steps }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup {
            self.peak * step as f64 / self.warmup as f64
        } else if step >= self.total {
            0.0
        } else {
            self.peak * (self.total - step) as f64 / (self.total - self.warmup) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Parameters,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(params: Parameters) -> Self {
        let n = params.len();
        TrainState { params, step: 0, m: vec![0.0; n], v: vec![0.0; n], loss_history: Vec::new() }
    }
}

fn check_gradients(grads: &Parameters) -> Result<(), ModelError> {
    match grads.values().iter().position(|g| !g.is_finite()) {
        Some(i) => Err(ModelError::NonFiniteGradient { param: grads.name_of(i).to_string() }),
        None => Ok(()),
    }
}

/// One optimizer step on the summed loss of `batch`. Returns that loss.
pub fn train_step(
    state: &mut TrainState,
    batch: &[EncodedInput],
    cfg: &ModelConfig,
    schedule: &Schedule,
) -> Result<f64, ModelError> {
    let mut grads = state.params.zeros_like();
    let mut total = 0.0;
    for enc in batch {
        total += loss_and_grad(enc, &state.params, cfg, &mut grads)?;
    }
    check_gradients(&grads)?;
    let lr = schedule.lr(state.step);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let values = state.params.values_mut();
    for (i, &g) in grads.values().iter().enumerate() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    state.loss_history.push(total);
    Ok(total)
}

/// Runs `train.total_steps` steps over `data`, reshuffling with `seed` at each epoch.
/// `on_step` sees the step number and batch loss.
pub fn fit(
    state: &mut TrainState,
    data: &[EncodedInput],
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(u64, f64),
) -> Result<(), ModelError> {
    if data.is_empty() {
        return Ok(());
    }
    let schedule = Schedule::from_config(train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(train.batch_size);
    while state.step < train.total_steps {
        batch.clear();
        while batch.len() < train.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let loss = train_step(state, &batch, model, &schedule)?;
        on_step(state.step, loss);
    }
    Ok(())
}
