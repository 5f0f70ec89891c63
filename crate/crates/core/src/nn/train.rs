use std::time::Instant;

use rand::seq::SliceRandom;

use super::dataset::Dataset;
use super::loss::{accuracy, cross_entropy};
use super::network::Network;
use super::tensor::Scalar;
use crate::error::{contract, Result};
use crate::optimizer::{update_tensor, OptimizerConfig};
use crate::rng::{Label, RngState, Role};

/// Mini-batch loop settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Shuffle seed.
    pub seed: u64,
    /// Evaluate the test set every this many minibatches; 0 evaluates only
    /// at the end of each epoch.
    pub eval_every: usize,
    pub run_id: String,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 256,
            seed: 0,
            eval_every: 0,
            run_id: "run".into(),
        }
    }
}

/// One minibatch worth of metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub run_id: String,
    pub epoch: usize,
    pub minibatch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub e_grad_stat: f64,
    pub wall_time_s: f64,
}

/// Append-only training log; minibatch indices run 1, 2, ... within each epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    records: Vec<MetricRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricRecord) -> Result<()> {
        let ok = match self.records.last() {
            None => r.minibatch == 1,
            Some(last) if last.epoch == r.epoch => r.minibatch == last.minibatch + 1,
            Some(last) => r.epoch == last.epoch + 1 && r.minibatch == 1,
        };
        if !ok {
            return Err(contract(format!(
                "metrics out of order at epoch {} minibatch {}",
                r.epoch, r.minibatch
            )));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    /// Gradient statistic of the first update.
    pub fn step1_e_grad(&self) -> Option<f64> {
        self.records.first().map(|r| r.e_grad_stat)
    }

    /// Most recent test accuracy.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_accuracy)
    }
}

/// Test-set accuracy in evaluation mode.
pub fn evaluate<T: Scalar>(net: &mut Network<T>, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0.0;
    let idx: Vec<usize> = (0..test.len()).collect();
    for chunk in idx.chunks(1000) {
        let (x, y) = test.batch::<T>(chunk);
        let (logits, _) = net.forward(&x, false)?;
        hits += accuracy(&logits, &y) * chunk.len() as f64;
    }
    Ok(hits / test.len() as f64)
}

/// Train `net` in place and return the per-minibatch log.
///
/// Every step runs forward, cross entropy, backward, and then routes each
/// trainable tensor through [`update_tensor`] with the batch-averaged
/// gradient. The test set is scored at the end of every epoch and, when
/// `eval_every > 0`, every `eval_every` minibatches.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset,
    test_set: &Dataset,
    opt: &OptimizerConfig,
    protocol: &ProtocolConfig,
) -> Result<MetricsLog> {
    if train_set.is_empty() {
        return Err(contract("training set is empty"));
    }
    if protocol.batch_size == 0 {
        return Err(contract("batch size must be positive"));
    }
    opt.validate()?;
    let start = Instant::now();
    let mut velocity: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
    let mut log = MetricsLog::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0u64;
    for epoch in 1..=protocol.epochs {
        let mut shuffle = RngState::new(protocol.seed, Label::new(0, epoch as u64, Role::Shuffle, 0));
        order.shuffle(&mut shuffle);
        let batches: Vec<&[usize]> = order.chunks(protocol.batch_size).collect();
        let n_batches = batches.len();
        for (bi, idx) in batches.into_iter().enumerate() {
            step += 1;
            let (x, y) = train_set.batch::<T>(idx);
            let (logits, cache) = net.forward(&x, true)?;
            let (loss, dlogits) = cross_entropy(&logits, &y)?;
            let grads = net.backward(&cache, &dlogits)?;
            let mut weighted = 0.0;
            let mut count = 0usize;
            for (t, ((p, g), v)) in net
                .params_mut()
                .into_iter()
                .zip(&grads)
                .zip(velocity.iter_mut())
                .enumerate()
            {
                let e = update_tensor(p, v, g, opt, t as u32, step, 1.0)?;
                weighted += e * g.len() as f64;
                count += g.len();
            }
            let last = bi + 1 == n_batches;
            let due = protocol.eval_every > 0 && (bi + 1) % protocol.eval_every == 0;
            let test_accuracy = if last || due {
                Some(evaluate(net, test_set)?)
            } else {
                None
            };
            log.push(MetricRecord {
                run_id: protocol.run_id.clone(),
                epoch,
                minibatch: bi + 1,
                train_loss: loss,
                test_accuracy,
                e_grad_stat: weighted / count as f64,
                wall_time_s: start.elapsed().as_secs_f64(),
            })?;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::ExecMode;

    fn record(epoch: usize, minibatch: usize) -> MetricRecord {
        MetricRecord {
            run_id: "r".into(),
            epoch,
            minibatch,
            train_loss: 0.0,
            test_accuracy: None,
            e_grad_stat: 0.5,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn log_requires_contiguous_minibatches() {
        let mut log = MetricsLog::default();
        assert!(log.push(record(1, 2)).is_err());
        log.push(record(1, 1)).unwrap();
        log.push(record(1, 2)).unwrap();
        assert!(log.push(record(1, 4)).is_err());
        assert!(log.push(record(2, 2)).is_err());
        log.push(record(2, 1)).unwrap();
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut net = Network::<f32>::mnist_cnn(&mut RngState::from_seed(1)).unwrap();
        let empty = Dataset::synthetic(0, 1);
        let r = train(&mut net, &empty, &empty, &OptimizerConfig::default(), &ProtocolConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn short_run_logs_every_minibatch() {
        let data = Dataset::synthetic(100, 2);
        let mut net = Network::<f32>::mnist_cnn(&mut RngState::from_seed(2)).unwrap();
        let opt = OptimizerConfig {
            exec: ExecMode::Float,
            eta: 0.1,
            ..Default::default()
        };
        let protocol = ProtocolConfig {
            epochs: 2,
            batch_size: 32,
            eval_every: 2,
            ..Default::default()
        };
        let log = train(&mut net, &data, &data.take(20), &opt, &protocol).unwrap();
        assert_eq!(log.records().len(), 8);
        let evaluated: Vec<(usize, usize)> = log
            .records()
            .iter()
            .filter(|r| r.test_accuracy.is_some())
            .map(|r| (r.epoch, r.minibatch))
            .collect();
        assert_eq!(evaluated, vec![(1, 2), (1, 4), (2, 2), (2, 4)]);
        assert!(log.records().iter().all(|r| r.train_loss.is_finite()));
    }
}
