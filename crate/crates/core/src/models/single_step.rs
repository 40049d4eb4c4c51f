//! The single-step model: message passing over one scene graph followed by
//! a two-layer readout mapping each node state to an acceleration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gconv::{GConvLayer, TwoLayerMlp};
use super::{ModelHeader, ModelOutput, Predictor};
use crate::diffcore::{Binding, Checkpoint, Matrix, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scenegraph::{CooGraph, EDGE_FEATURES, NODE_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SingleStepConfig {
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub hidden_dim: usize,
    pub edge_mlp_hidden: usize,
    pub head_hidden: usize,
    /// Number of chained message-passing steps.
    pub message_steps: usize,
}

impl Default for SingleStepConfig {
    fn default() -> Self {
        SingleStepConfig {
            node_feature_dim: NODE_FEATURES,
            edge_feature_dim: EDGE_FEATURES,
            hidden_dim: 64,
            edge_mlp_hidden: 32,
            head_hidden: 128,
            message_steps: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleStepModel {
    pub config: SingleStepConfig,
    pub params: ParamStore,
    layers: Vec<GConvLayer>,
    head: TwoLayerMlp,
    seed: u64,
}

impl SingleStepModel {
    fn build_layers(config: &SingleStepConfig) -> (Vec<GConvLayer>, TwoLayerMlp) {
        let layers = (0..config.message_steps)
            .map(|s| {
                let input_dim = if s == 0 {
                    config.node_feature_dim
                } else {
                    config.hidden_dim
                };
                GConvLayer::new(
                    &format!("gconv{s}"),
                    input_dim,
                    config.hidden_dim,
                    config.edge_feature_dim,
                    config.edge_mlp_hidden,
                )
            })
            .collect();
        let head = TwoLayerMlp::new("head", config.hidden_dim, config.head_hidden, 1);
        (layers, head)
    }

    pub fn new(config: SingleStepConfig, seed: u64) -> SingleStepModel {
        assert!(config.message_steps >= 1);
        let (layers, head) = Self::build_layers(&config);
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &layers {
            layer.init(&mut params, &mut rng);
        }
        head.init(&mut params, &mut rng);
        SingleStepModel {
            config,
            params,
            layers,
            head,
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Node features of a COO graph as a constant tape matrix.
    pub fn node_features(&self, tape: &mut Tape, coo: &CooGraph) -> Var {
        tape.constant(Matrix::from_rows(&coo.node_matrix, self.config.node_feature_dim))
    }

    /// The stacked message-passing output (n x hidden), before the head.
    pub fn hidden_on_tape(&self, tape: &mut Tape, binding: &Binding, coo: &CooGraph) -> Result<Var> {
        let mut h = self.node_features(tape, coo);
        for layer in &self.layers {
            h = layer.forward(tape, binding, h, coo)?;
        }
        Ok(h)
    }

    /// Full forward to per-node accelerations (n x 1).
    pub fn forward_on_tape(&self, tape: &mut Tape, binding: &Binding, coo: &CooGraph) -> Result<Var> {
        let h = self.hidden_on_tape(tape, binding, coo)?;
        self.head.forward(tape, binding, h)
    }

    pub fn predict(&self, coo: &CooGraph) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let binding = self.params.bind(&mut tape);
        let out = self.forward_on_tape(&mut tape, &binding, coo)?;
        Ok(ModelOutput::dense(tape.value(out).data().to_vec()))
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader::SingleStep {
            config: self.config,
        }
    }

    pub fn to_checkpoint(&self, epoch: u64) -> Checkpoint {
        self.params.to_checkpoint(
            serde_json::to_value(self.header()).expect("header serializes"),
            epoch,
            self.seed,
        )
    }

    pub fn from_checkpoint(config: SingleStepConfig, ckpt: &Checkpoint) -> Result<SingleStepModel> {
        let (layers, head) = Self::build_layers(&config);
        let params = ParamStore::from_checkpoint(ckpt)?;
        let model = SingleStepModel {
            config,
            params,
            layers,
            head,
            seed: ckpt.rng_seed,
        };
        model.validate_shapes()?;
        Ok(model)
    }

    fn validate_shapes(&self) -> Result<()> {
        for layer in &self.layers {
            let root = self.params.get(&format!("{}.root", layer.prefix))?;
            if root.shape() != (layer.input_dim, layer.hidden_dim) {
                return Err(Error::data(format!(
                    "parameter {}.root has shape {:?}, expected {:?}",
                    layer.prefix,
                    root.shape(),
                    (layer.input_dim, layer.hidden_dim)
                )));
            }
        }
        Ok(())
    }
}

impl Predictor for SingleStepModel {
    fn name(&self) -> String {
        "single_step".into()
    }

    fn predict_sequence(&self, seq: &[CooGraph]) -> Result<ModelOutput> {
        let last = seq.last().ok_or_else(|| Error::data("empty sequence"))?;
        self.predict(last)
    }
}
