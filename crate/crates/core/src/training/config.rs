use crate::error::{Error, Result};
use crate::kv::{fmt_f64, KvFile};

/// Optimisation schedule: Adam with annealing and early stopping on the
/// validation NLL.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub anneal_factor: f64,
    pub anneal_patience_epochs: usize,
    pub stop_patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Fill the `seconds` column of the training log (makes it non-reproducible).
    pub record_timing: bool,
}

/// Minimum decrease of the validation NLL that counts as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-6;

impl TrainConfig {
    pub fn pretrain() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            batches_per_epoch: 200,
            anneal_factor: 3.0,
            anneal_patience_epochs: 8,
            stop_patience_epochs: 20,
            max_epochs: 500,
            seed: 0,
            record_timing: false,
        }
    }

    pub fn finetune() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            batches_per_epoch: 25,
            stop_patience_epochs: 30,
            max_epochs: 400,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidValue {
                key: "learning_rate".into(),
                value: self.learning_rate.to_string(),
            });
        }
        if !(self.anneal_factor > 1.0) {
            return Err(Error::InvalidValue {
                key: "anneal_factor".into(),
                value: self.anneal_factor.to_string(),
            });
        }
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("anneal_patience_epochs", self.anneal_patience_epochs),
            ("stop_patience_epochs", self.stop_patience_epochs),
        ] {
            if v == 0 {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    value: "0".into(),
                });
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("learning_rate", fmt_f64(self.learning_rate));
        kv.set("batch_size", self.batch_size);
        kv.set("batches_per_epoch", self.batches_per_epoch);
        kv.set("anneal_factor", fmt_f64(self.anneal_factor));
        kv.set("anneal_patience_epochs", self.anneal_patience_epochs);
        kv.set("stop_patience_epochs", self.stop_patience_epochs);
        kv.set("max_epochs", self.max_epochs);
        kv.set("seed", self.seed);
        kv.set("record_timing", self.record_timing);
        kv
    }

    /// Keys absent from `kv` keep their value in `base`.
    pub fn from_kv(kv: &KvFile, base: &TrainConfig) -> Result<Self> {
        let cfg = TrainConfig {
            learning_rate: kv.get_or("learning_rate", base.learning_rate)?,
            batch_size: kv.get_or("batch_size", base.batch_size)?,
            batches_per_epoch: kv.get_or("batches_per_epoch", base.batches_per_epoch)?,
            anneal_factor: kv.get_or("anneal_factor", base.anneal_factor)?,
            anneal_patience_epochs: kv.get_or("anneal_patience_epochs", base.anneal_patience_epochs)?,
            stop_patience_epochs: kv.get_or("stop_patience_epochs", base.stop_patience_epochs)?,
            max_epochs: kv.get_or("max_epochs", base.max_epochs)?,
            seed: kv.get_or("seed", base.seed)?,
            record_timing: kv.get_or("record_timing", base.record_timing)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
