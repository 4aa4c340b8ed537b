use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fconv::NetworkParams;
use crate::error::{Error, Result};

/// Samples per gradient work unit. Fixed so the summation order, and with it
/// the trained parameters, does not depend on the number of worker threads.
const CHUNK: usize = 4;

/// A differentiable model trained by squared error against a flat target.
pub trait Model: Clone + Send + Sync {
    type Input: ?Sized + Sync;

    fn param_len(&self) -> usize;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn predict(&self, input: &Self::Input) -> Result<Vec<f64>>;
    /// Adds `∂/∂θ Σ (out - target)²` into `grad` and returns the sum itself.
    fn accumulate(&self, input: &Self::Input, target: &[f64], grad: &mut [f64]) -> f64;
}

impl Model for NetworkParams {
    type Input = [f64];

    fn param_len(&self) -> usize {
        self.len()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_raw(input)
    }

    fn accumulate(&self, input: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let trace = self.trace(input);
        let mut sse = 0.0;
        let d: Vec<f64> = trace
            .output()
            .iter()
            .zip(target)
            .map(|(o, t)| {
                sse += (o - t) * (o - t);
                2.0 * (o - t)
            })
            .collect();
        self.backprop(&trace, &d, grad, false);
        sse
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Used when training starts from a fresh initialization.
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            weight_init_scale: 6f64.sqrt(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// An input paired with its flat target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<I> {
    pub input: I,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Mean squared error and its gradient over a batch, summed in a fixed order.
pub(crate) fn loss_grad<M: Model>(model: &M, batch: &[(&M::Input, &[f64])]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let width = batch[0].1.len();
    if batch.iter().any(|(_, t)| t.len() != width) || width == 0 {
        return Err(Error::invalid("targets differ in length"));
    }
    let p = model.param_len();
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; p];
            let sse = chunk.iter().map(|(x, t)| model.accumulate(x, t, &mut g)).sum::<f64>();
            (sse, g)
        })
        .collect();
    let scale = 1.0 / (batch.len() * width) as f64;
    let mut grad = vec![0.0; p];
    let mut sse = 0.0;
    for (s, g) in parts {
        sse += s;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((sse * scale, grad))
}

pub(crate) fn batch_loss_and_grad(params: &NetworkParams, batch: &[(&[f64], &[f64])]) -> Result<(f64, Vec<f64>)> {
    loss_grad(params, batch)
}

pub(crate) fn batch_loss(params: &NetworkParams, batch: &[(&[f64], &[f64])]) -> f64 {
    mean_loss(params, batch.iter().map(|(x, t)| (*x, *t)))
}

fn mean_loss<'a, M>(model: &M, pairs: impl Iterator<Item = (&'a M::Input, &'a [f64])>) -> f64
where
    M: Model,
    M::Input: 'a,
{
    let mut sse = 0.0;
    let mut count = 0usize;
    for (x, t) in pairs {
        let out = model.predict(x).expect("shape checked by caller");
        sse += out.iter().zip(t).map(|(o, v)| (o - v) * (o - v)).sum::<f64>();
        count += t.len();
    }
    sse / count.max(1) as f64
}

/// Mean squared error of `model` over `examples`.
pub fn evaluate_loss<M, X>(model: &M, examples: &[Example<X>]) -> Result<f64>
where
    M: Model,
    X: Borrow<M::Input> + Sync,
{
    if examples.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    let parts: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|e| {
            let out = model.predict(e.input.borrow())?;
            if out.len() != e.target.len() {
                return Err(Error::invalid("target does not match the model output"));
            }
            Ok((out.iter().zip(&e.target).map(|(o, v)| (o - v) * (o - v)).sum::<f64>(), out.len()))
        })
        .collect::<Result<_>>()?;
    let (sse, n) = parts.iter().fold((0.0, 0), |(s, n), p| (s + p.0, n + p.1));
    Ok(sse / n as f64)
}

/// Mini-batch SGD with momentum; returns the per-epoch loss curve.
///
/// The training loss of an epoch is the mean of its batch losses weighted by
/// batch size, measured before each update.
pub fn train<M, X>(
    model: &mut M,
    train_set: &[Example<X>],
    val_set: &[Example<X>],
    config: &TrainConfig,
) -> Result<Vec<CurvePoint>>
where
    M: Model,
    X: Borrow<M::Input> + Sync,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = vec![0.0; model.param_len()];
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&M::Input, &[f64])> =
                chunk.iter().map(|&i| (train_set[i].input.borrow(), train_set[i].target.as_slice())).collect();
            let (loss, grad) = loss_grad(model, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch loss {loss} after {} updates", curve.len()),
                });
            }
            total += loss * chunk.len() as f64;
            velocity.iter_mut().zip(&grad).for_each(|(v, g)| *v = config.momentum * *v - config.learning_rate * g);
            let mut off = 0;
            for slice in model.param_slices_mut() {
                slice.iter_mut().zip(&velocity[off..]).for_each(|(p, v)| *p += v);
                off += slice.len();
            }
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() { None } else { Some(evaluate_loss(model, val_set)?) };
        if val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, message: "validation loss is not finite".into() });
        }
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        curve.push(CurvePoint { epoch, train_loss, val_loss });
    }
    Ok(curve)
}

/// Writes the curve as `epoch,train_loss,val_loss` CSV text.
pub fn curve_csv(curve: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for p in curve {
        let val = p.val_loss.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([p.epoch.to_string(), p.train_loss.to_string(), val])?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{net_init, NetConfig};
    use rand::Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn memorizes_one_pair() {
        let mut p = net_init(NetConfig::with_channels(32), 1).unwrap();
        let pose = crate::pose::Pose::from_flat(2, random(28, 3)).unwrap();
        let target = crate::edm::edm_from_pose(&pose).into_vec();
        let mask = crate::pose::JointMask::new([4, 9], 14).unwrap();
        let input = crate::represent::represent_zero(&pose, &mask).unwrap().into_vec();
        let set = vec![Example { input, target }];
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 500, batch_size: 1, ..Default::default() };
        let curve = train(&mut p, &set, &set, &cfg).unwrap();
        let last = curve.last().unwrap();
        assert!(last.val_loss.unwrap() < 1e-4, "{last:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let set: Vec<_> = (0..9).map(|i| Example { input: random(196, i), target: random(196, 100 + i) }).collect();
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, batch_size: 4, seed: 5, ..Default::default() };
        let run = || {
            let mut p = net_init(NetConfig::with_channels(3), 2).unwrap();
            let c = train(&mut p, &set, &[], &cfg).unwrap();
            (p, c)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert!(ca.iter().all(|c| c.val_loss.is_none()));
    }

    #[test]
    fn divergence_is_reported() {
        let mut p = net_init(NetConfig::with_channels(3), 2).unwrap();
        let set = vec![Example {
            input: random(196, 1).iter().map(|v| v * 1e3).collect::<Vec<f64>>(),
            target: random(196, 2),
        }];
        let cfg = TrainConfig { learning_rate: 1e6, momentum: 0.0, epochs: 50, batch_size: 1, ..Default::default() };
        assert!(matches!(train(&mut p, &set, &[], &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut p = net_init(NetConfig::with_channels(2), 2).unwrap();
        let set = vec![Example { input: random(196, 1), target: random(196, 2) }];
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(train(&mut p, &set, &[], &cfg).is_err());
        }
    }

    #[test]
    fn curve_csv_has_header() {
        let c = [CurvePoint { epoch: 1, train_loss: 0.5, val_loss: None }];
        let text = String::from_utf8(curve_csv(&c).unwrap()).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss\n1,0.5,\n");
    }
}
