//! Sim2Real adaptation of a pre-trained model: global fine-tuning of every
//! parameter, or FiLM adapters with the backbone frozen.

use std::fmt;
use std::str::FromStr;

use crate::convcnp::{ParamGroup, ParameterSet};
use crate::error::{Error, Result};
use crate::taskgen::{Task, TaskStream};
use crate::training::{run_training, Sim2RealModel, TrainConfig, TrainingOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdaptationKind {
    Global,
    Film,
}

impl AdaptationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdaptationKind::Global => "global",
            AdaptationKind::Film => "film",
        }
    }
}

impl fmt::Display for AdaptationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdaptationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(AdaptationKind::Global),
            "film" => Ok(AdaptationKind::Film),
            other => Err(Error::InvalidValue {
                key: "strategy".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationStrategy {
    pub kind: AdaptationKind,
    pub config: TrainConfig,
}

impl AdaptationStrategy {
    /// `kind` with the fine-tuning schedule.
    pub fn new(kind: AdaptationKind) -> Self {
        AdaptationStrategy {
            kind,
            config: TrainConfig::finetune(),
        }
    }
}

pub fn trainable_mask(params: &ParameterSet, kind: AdaptationKind) -> Vec<bool> {
    match kind {
        AdaptationKind::Global => vec![true; params.len()],
        AdaptationKind::Film => params.mask(&[ParamGroup::Film]),
    }
}

pub fn count_trainable(params: &ParameterSet, kind: AdaptationKind) -> usize {
    trainable_mask(params, kind).iter().filter(|&&t| t).count()
}

/// Adapts a copy of `pretrained`; the normaliser is carried over unchanged.
pub fn finetune(
    pretrained: &Sim2RealModel,
    strategy: &AdaptationStrategy,
    stream: &mut dyn TaskStream,
    val_tasks: &[Task],
) -> Result<(Sim2RealModel, TrainingOutcome)> {
    if strategy.kind == AdaptationKind::Film && !pretrained.net.config().film_enabled {
        return Err(Error::config("FiLM fine-tuning needs a checkpoint with FiLM sites"));
    }
    let mut model = pretrained.clone();
    let mask = trainable_mask(model.net.params(), strategy.kind);
    let outcome = run_training(&mut model, stream, val_tasks, &strategy.config, &mask)?;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convcnp::{ConvCnp, ModelConfig};

    #[test]
    fn full_preset_film_budget() {
        let net = ConvCnp::uninitialised(ModelConfig::full()).unwrap();
        assert_eq!(count_trainable(net.params(), AdaptationKind::Film), 3284);
        assert_eq!(count_trainable(net.params(), AdaptationKind::Global), net.params().len());
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in [AdaptationKind::Global, AdaptationKind::Film] {
            assert_eq!(k.as_str().parse::<AdaptationKind>().unwrap(), k);
        }
        assert!("lora".parse::<AdaptationKind>().is_err());
    }
}
