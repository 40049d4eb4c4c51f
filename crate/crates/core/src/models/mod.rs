//! The two acceleration predictors: a single-step edge-conditioned graph
//! convolution and a recurrent GNN-LSTM, plus the constant baselines.

mod gconv;
pub mod gradcheck;
mod recurrent;
mod single_step;

pub use gconv::{GConvLayer, TwoLayerMlp};
pub use recurrent::{RecurrentConfig, RecurrentModel};
pub use single_step::{SingleStepConfig, SingleStepModel};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diffcore::Checkpoint;
use crate::error::{Error, Result};
use crate::scenegraph::CooGraph;

/// Per-node predicted acceleration for the frame a model was run on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// m/s^2, aligned with the frame's node order.
    pub accel: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ModelOutput {
    pub fn dense(accel: Vec<f64>) -> ModelOutput {
        let mask = alloc::vec![true; accel.len()];
        ModelOutput { accel, mask }
    }
}

/// Checkpoint header identifying the model kind and configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelHeader {
    SingleStep { config: SingleStepConfig },
    Recurrent { config: RecurrentConfig },
}

/// A loaded model of either kind.
#[derive(Debug, Clone)]
pub enum AnyModel {
    SingleStep(SingleStepModel),
    Recurrent(RecurrentModel),
}

impl AnyModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<AnyModel> {
        let header: ModelHeader = serde_json::from_value(ckpt.model.clone())
            .map_err(|e| Error::data(format!("checkpoint model header: {e}")))?;
        match header {
            ModelHeader::SingleStep { config } => Ok(AnyModel::SingleStep(
                SingleStepModel::from_checkpoint(config, ckpt)?,
            )),
            ModelHeader::Recurrent { config } => Ok(AnyModel::Recurrent(
                RecurrentModel::from_checkpoint(config, ckpt)?,
            )),
        }
    }
}

/// Anything that can predict accelerations for the final frame of a
/// sequence (a single graph is a sequence of length 1).
pub trait Predictor {
    fn name(&self) -> String;
    /// Predictions aligned with the final frame's nodes.
    fn predict_sequence(&self, seq: &[CooGraph]) -> Result<ModelOutput>;
}

impl Predictor for AnyModel {
    fn name(&self) -> String {
        match self {
            AnyModel::SingleStep(m) => Predictor::name(m),
            AnyModel::Recurrent(m) => Predictor::name(m),
        }
    }

    fn predict_sequence(&self, seq: &[CooGraph]) -> Result<ModelOutput> {
        match self {
            AnyModel::SingleStep(m) => m.predict_sequence(seq),
            AnyModel::Recurrent(m) => m.predict_sequence(seq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mean,
    Zero,
}

/// A predictor that emits the same value for every entity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPredictor {
    pub name: String,
    pub value: f64,
}

/// The constant baselines: `Mean` over a label set, or `Zero`.
pub fn predict_baseline(kind: BaselineKind, labels: &[f64]) -> Result<ConstantPredictor> {
    match kind {
        BaselineKind::Zero => Ok(ConstantPredictor {
            name: "baseline_zero".into(),
            value: 0.0,
        }),
        BaselineKind::Mean => {
            if labels.is_empty() {
                return Err(Error::data("mean baseline needs a non-empty label set"));
            }
            Ok(ConstantPredictor {
                name: "baseline_mean".into(),
                value: labels.iter().sum::<f64>() / labels.len() as f64,
            })
        }
    }
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn predict_sequence(&self, seq: &[CooGraph]) -> Result<ModelOutput> {
        let last = seq.last().ok_or_else(|| Error::data("empty sequence"))?;
        Ok(ModelOutput::dense(alloc::vec![
            self.value;
            last.node_count()
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_baseline_is_zero() {
        let p = predict_baseline(BaselineKind::Zero, &[]).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn mean_baseline_averages_labels() {
        let p = predict_baseline(BaselineKind::Mean, &[1.0, 3.0]).unwrap();
        assert_eq!(p.value, 2.0);
    }

    #[test]
    fn mean_baseline_empty_errors() {
        assert!(predict_baseline(BaselineKind::Mean, &[]).is_err());
    }
}
