use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::loss::{loss, loss_grad, LossKind};
use crate::data::{stack_batch, WindowSample};
use crate::diffmath::ParamSet;
use crate::error::{Error, Result};
use crate::model::Forecaster;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss_kind: LossKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 0.001,
            max_epochs: 100,
            patience: 20,
            loss_kind: LossKind::MeanAbsolute,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "batch_size, patience and max_epochs must all be at least 1",
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Elapsed time reported by the observer, 0 when it has no clock.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_loss
    }
}

/// Patience-based stopping on strict improvement of a monitored loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
    seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, value: f64) -> Verdict {
        self.seen += 1;
        if self.best.is_none_or(|b| value < b) {
            self.best = Some(value);
            self.best_epoch = self.seen;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Stale
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Progress hooks; the std layer supplies a clock and an epoch log.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}

    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

impl TrainObserver for () {}

/// Training stopped on an error; `best` holds the last good snapshot.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub best: Option<ParamSet>,
    pub epochs: Vec<EpochRecord>,
}

impl core::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "training aborted after {} epochs: {}",
            self.epochs.len(),
            self.error
        )
    }
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sample order for one epoch, seeded from `(shuffle_seed, epoch)`.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let seed = splitmix64(shuffle_seed ^ splitmix64(epoch as u64));
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Mean loss of `model` over `samples`, evaluated in batches without gradients.
pub fn evaluate_loss<M: Forecaster>(
    model: &M,
    samples: &[WindowSample],
    batch_size: usize,
    kind: LossKind,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::config("cannot evaluate on an empty sample set"));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let (x, y) = stack_batch(&refs)?;
        total += loss(&model.predict(&x)?, &y, kind)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam with early stopping on validation loss. Returns the
/// model carrying the best-validation snapshot.
pub fn train<M, O>(
    mut model: M,
    train_set: &[WindowSample],
    val_set: &[WindowSample],
    cfg: &TrainConfig,
    observer: &mut O,
) -> core::result::Result<(M, TrainReport), TrainFailure>
where
    M: Forecaster,
    O: TrainObserver + ?Sized,
{
    let fail = |error: Error, best: Option<ParamSet>, epochs: Vec<EpochRecord>| TrainFailure {
        error,
        best,
        epochs,
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, None, Vec::new()));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(fail(
            Error::config("training needs at least one train and one validation sample"),
            None,
            Vec::new(),
        ));
    }

    let mut opt = Adam::new(cfg.adam());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<ParamSet> = None;
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train_set.len(), cfg.shuffle_seed, epoch);
        let mut running = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&WindowSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let step = (|| -> Result<f64> {
                let (x, y) = stack_batch(&refs)?;
                let (pred, cache) = model.forward_cached(&x)?;
                let l = loss(&pred, &y, cfg.loss_kind)?;
                if !l.is_finite() {
                    return Err(Error::numeric(format!(
                        "training loss became {l} in epoch {epoch}"
                    )));
                }
                let d_out = loss_grad(&pred, &y, cfg.loss_kind)?;
                let grads = model.backward(&cache, &d_out)?;
                opt.step(model.params_mut(), &grads.params)?;
                Ok(l)
            })();
            match step {
                Ok(l) => running += l * chunk.len() as f64,
                Err(e) => return Err(fail(e, best, epochs)),
            }
        }
        let train_loss = running / train_set.len() as f64;
        let val_loss = match evaluate_loss(&model, val_set, cfg.batch_size, cfg.loss_kind) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                let e = Error::numeric(format!("validation loss became {v} in epoch {epoch}"));
                return Err(fail(e, best, epochs));
            }
            Err(e) => return Err(fail(e, best, epochs)),
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: observer.elapsed_seconds(),
        };
        epochs.push(record);
        observer.on_epoch(&record);
        match stopper.observe(val_loss) {
            Verdict::Improved => best = Some(model.params().clone()),
            Verdict::Stale => {}
            Verdict::Stop => {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }

    if let Some(b) = best {
        *model.params_mut() = b;
    }
    let report = TrainReport {
        epochs,
        best_epoch: stopper.best_epoch(),
        stop_reason,
        wall_seconds: observer.elapsed_seconds(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_stops_after_patience_plus_one() {
        let patience = 4;
        let mut s = EarlyStopping::new(patience);
        let mut epochs = 0;
        loop {
            epochs += 1;
            if s.observe(1.0) == Verdict::Stop {
                break;
            }
        }
        assert_eq!(epochs, patience + 1);
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn strictly_decreasing_never_stops() {
        let mut s = EarlyStopping::new(1);
        for i in 0..50 {
            assert_eq!(s.observe(100.0 - i as f64), Verdict::Improved);
        }
        assert_eq!(s.best_epoch(), 50);
    }

    #[test]
    fn equal_value_is_not_an_improvement() {
        let mut s = EarlyStopping::new(3);
        s.observe(2.0);
        assert_eq!(s.observe(2.0), Verdict::Stale);
        assert_eq!(s.observe(1.5), Verdict::Improved);
        assert_eq!(s.best_epoch(), 3);
    }

    #[test]
    fn epoch_orders_are_permutations_and_vary() {
        let a = epoch_order(20, 7, 1);
        let b = epoch_order(20, 7, 2);
        assert_eq!(a, epoch_order(20, 7, 1));
        assert_ne!(a, b);
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                patience: 0,
                ..Default::default()
            },
            TrainConfig {
                max_epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
