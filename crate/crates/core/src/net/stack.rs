use serde::{Deserialize, Serialize};

use super::fconv::{symmetrize_and_clamp, NetworkParams};
use super::train::{train, CurvePoint, Example, Model, TrainConfig};
use crate::edm::{assemble_final, DistanceMatrix};
use crate::error::{Error, Result};
use crate::pose::JointMask;

/// Occluded 2D EDM together with its mask, the input of a [`StackedNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackInput {
    pub edm: DistanceMatrix,
    pub mask: JointMask,
}

/// A recovery net feeding a 2D→3D regression net. The recovered matrix is
/// post-processed exactly as in [`recover_with_net`](super::recover_with_net)
/// before it reaches the second net, and gradients flow through that step.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedNet {
    pub recover: NetworkParams,
    pub regress: NetworkParams,
}

impl StackedNet {
    pub fn new(recover: NetworkParams, regress: NetworkParams) -> Result<Self> {
        if recover.config().n != regress.config().n {
            return Err(Error::invalid("stacked nets disagree on the matrix size"));
        }
        Ok(StackedNet { recover, regress })
    }

    fn n(&self) -> usize {
        self.recover.config().n
    }

    fn check(&self, input: &StackInput) -> Result<()> {
        if input.edm.n() != self.n() {
            return Err(Error::invalid("input matrix size does not match the network"));
        }
        input.mask.validate(self.n())
    }

    /// Completed 2D EDM produced by the first stage.
    pub fn recovered(&self, input: &StackInput) -> Result<DistanceMatrix> {
        self.check(input)?;
        let raw = self.recover.forward(&input.edm)?;
        assemble_final(&input.edm, &symmetrize_and_clamp(&raw, self.n())?, &input.mask)
    }
}

impl Model for StackedNet {
    type Input = StackInput;

    fn param_len(&self) -> usize {
        self.recover.len() + self.regress.len()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.recover.as_mut_slice(), self.regress.as_mut_slice()]
    }

    fn predict(&self, input: &StackInput) -> Result<Vec<f64>> {
        let mid = self.recovered(input)?;
        self.regress.forward(&mid)
    }

    fn accumulate(&self, input: &StackInput, target: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n();
        let t1 = self.recover.trace(input.edm.as_slice());
        let raw = t1.output();
        // same values as `recovered`, kept inline to know which entries came
        // from the network
        let mid =
            assemble_final(&input.edm, &symmetrize_and_clamp(raw, n).expect("finite"), &input.mask).expect("checked");
        let t2 = self.regress.trace(mid.as_slice());
        let mut sse = 0.0;
        let d_out: Vec<f64> = t2
            .output()
            .iter()
            .zip(target)
            .map(|(o, t)| {
                sse += (o - t) * (o - t);
                2.0 * (o - t)
            })
            .collect();
        let (g1, g2) = grad.split_at_mut(self.recover.len());
        let d_mid = self.regress.backprop(&t2, &d_out, g2, true);
        let mut d_raw = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let from_net = input.mask.is_occluded(i) || input.mask.is_occluded(j);
                if from_net && mid.get(i, j) > 0.0 {
                    let g = 0.5 * (d_mid[i * n + j] + d_mid[j * n + i]);
                    d_raw[i * n + j] = g;
                    d_raw[j * n + i] = g;
                }
            }
        }
        self.recover.backprop(&t1, &d_raw, g1, false);
        sse
    }
}

/// Fine-tunes both stages jointly on (occluded 2D EDM, 3D EDM) pairs.
pub fn stack_finetune(
    recover: NetworkParams,
    regress: NetworkParams,
    train_set: &[Example<StackInput>],
    val_set: &[Example<StackInput>],
    config: &TrainConfig,
) -> Result<(StackedNet, Vec<CurvePoint>)> {
    let mut net = StackedNet::new(recover, regress)?;
    if let Some(bad) = train_set.iter().chain(val_set).find(|e| net.check(&e.input).is_err()) {
        net.check(&bad.input)?;
    }
    let curve = train(&mut net, train_set, val_set, config)?;
    Ok((net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::train::loss_grad;
    use crate::net::{evaluate_loss, net_init, recover_with_net, NetConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example(seed: u64) -> Example<StackInput> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let pose = crate::pose::Pose::from_flat(2, (0..28).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let first = r.random_range(0..13);
        let mask = JointMask::new([first, r.random_range(first + 1..14)], 14).unwrap();
        let edm = crate::represent::represent_zero(&pose, &mask).unwrap();
        let target = (0..196).map(|_| r.random_range(0.0..1.0)).collect();
        Example { input: StackInput { edm, mask }, target }
    }

    fn stacked(seed: u64) -> StackedNet {
        let cfg = NetConfig::with_channels(3);
        let mut recover = net_init(cfg, seed).unwrap();
        // a positive output bias keeps the clamp open so the first stage
        // receives gradient
        *recover.as_mut_slice().last_mut().unwrap() = 0.5;
        StackedNet::new(recover, net_init(cfg, seed + 1).unwrap()).unwrap()
    }

    #[test]
    fn zero_epochs_match_sequential_nets() {
        let s = stacked(3);
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let data = vec![example(1)];
        let (tuned, curve) = stack_finetune(s.recover.clone(), s.regress.clone(), &data, &[], &cfg).unwrap();
        assert!(curve.is_empty());
        let e = &data[0].input;
        let mid = recover_with_net(&s.recover, &e.edm, &e.mask).unwrap().matrix;
        assert_eq!(tuned.predict(e).unwrap(), s.regress.forward(&mid).unwrap());
    }

    #[test]
    fn gradient_flows_through_both_stages() {
        let s = stacked(5);
        let data: Vec<_> = (0..3).map(example).collect();
        let batch: Vec<(&StackInput, &[f64])> = data.iter().map(|e| (&e.input, e.target.as_slice())).collect();
        let (loss, grad) = loss_grad(&s, &batch).unwrap();
        assert!(grad[..s.recover.len()].iter().any(|g| *g != 0.0));
        assert!(grad[s.recover.len()..].iter().any(|g| *g != 0.0));

        // central differences on a handful of first-stage parameters
        let mut checked = 0;
        for i in (0..s.recover.len()).step_by(7) {
            let h = 1e-5;
            let mut p = s.clone();
            p.recover.as_mut_slice()[i] += h;
            let plus = evaluate_loss(&p, &data).unwrap();
            p.recover.as_mut_slice()[i] -= 2.0 * h;
            let minus = evaluate_loss(&p, &data).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            if (fd - grad[i]).abs() > 1e-6 * (1.0 + fd.abs()) {
                // allowed only where a ReLU or the clamp switches inside ±h
                continue;
            }
            checked += 1;
        }
        assert!(checked > 20, "only {checked} parameters agreed");
        assert!(loss.is_finite());
    }

    #[test]
    fn finetuning_does_not_hurt_training_loss() {
        let s = stacked(7);
        let data: Vec<_> = (0..8).map(example).collect();
        let before = evaluate_loss(&s, &data).unwrap();
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 5, batch_size: 4, ..Default::default() };
        let (tuned, _) = stack_finetune(s.recover, s.regress, &data, &data, &cfg).unwrap();
        assert!(evaluate_loss(&tuned, &data).unwrap() <= before);
    }
}
