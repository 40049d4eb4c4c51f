//! The recurrent model: per-frame graph convolution feeding a per-track
//! LSTM cell; the final frame's LSTM states map to accelerations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gconv::{uniform_weights, GConvLayer, TwoLayerMlp};
use super::single_step::SingleStepConfig;
use super::{ModelHeader, ModelOutput, Predictor};
use crate::diffcore::{Binding, Checkpoint, Matrix, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scenegraph::CooGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RecurrentConfig {
    pub gconv: SingleStepConfig,
    pub lstm_hidden: usize,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        let gconv = SingleStepConfig::default();
        RecurrentConfig {
            gconv,
            lstm_hidden: gconv.hidden_dim,
        }
    }
}

const GATES: [char; 4] = ['i', 'f', 'g', 'o'];

#[derive(Debug, Clone)]
pub struct RecurrentModel {
    pub config: RecurrentConfig,
    pub params: ParamStore,
    layers: Vec<GConvLayer>,
    head: TwoLayerMlp,
    seed: u64,
}

impl RecurrentModel {
    fn build_layers(config: &RecurrentConfig) -> (Vec<GConvLayer>, TwoLayerMlp) {
        let g = &config.gconv;
        let layers = (0..g.message_steps)
            .map(|s| {
                let input_dim = if s == 0 { g.node_feature_dim } else { g.hidden_dim };
                GConvLayer::new(
                    &format!("gconv{s}"),
                    input_dim,
                    g.hidden_dim,
                    g.edge_feature_dim,
                    g.edge_mlp_hidden,
                )
            })
            .collect();
        let head = TwoLayerMlp::new("head", config.lstm_hidden, g.head_hidden, 1);
        (layers, head)
    }

    pub fn new(config: RecurrentConfig, seed: u64) -> RecurrentModel {
        assert_eq!(
            config.lstm_hidden, config.gconv.hidden_dim,
            "LSTM input is the gconv hidden state"
        );
        let (layers, head) = Self::build_layers(&config);
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &layers {
            layer.init(&mut params, &mut rng);
        }
        let h = config.lstm_hidden;
        for gate in GATES {
            params.insert(format!("lstm.w_x{gate}"), uniform_weights(&mut rng, h, h));
        }
        for gate in GATES {
            params.insert(format!("lstm.w_h{gate}"), uniform_weights(&mut rng, h, h));
        }
        for gate in GATES {
            // forget-gate bias starts at 1 so early training retains state
            let init = if gate == 'f' { 1.0 } else { 0.0 };
            let mut b = Matrix::zeros(1, h);
            b.fill(init);
            params.insert(format!("lstm.b_{gate}"), b);
        }
        head.init(&mut params, &mut rng);
        RecurrentModel {
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

    fn lstm_cell(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let gate = |tape: &mut Tape, name: char| -> Result<Var> {
            let wx = binding[&format!("lstm.w_x{name}")];
            let wh = binding[&format!("lstm.w_h{name}")];
            let b = binding[&format!("lstm.b_{name}")];
            let xa = tape.matmul(x, wx)?;
            let ha = tape.matmul(h_prev, wh)?;
            let sum = tape.add(xa, ha)?;
            tape.add_row(sum, b)
        };
        let i_pre = gate(tape, 'i')?;
        let f_pre = gate(tape, 'f')?;
        let g_pre = gate(tape, 'g')?;
        let o_pre = gate(tape, 'o')?;
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let retained = tape.mul(f, c_prev)?;
        let written = tape.mul(i, g)?;
        let c = tape.add(retained, written)?;
        let c_act = tape.tanh(c);
        let h = tape.mul(o, c_act)?;
        Ok((h, c))
    }

    /// Run the full sequence on a tape; returns per-node accelerations for
    /// the final frame together with that frame's LSTM states.
    ///
    /// Entities keep their last LSTM state across frames they are absent
    /// from and start from zeros on first appearance; only entities present
    /// in the final frame contribute to the output.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        seq: &[CooGraph],
    ) -> Result<Var> {
        if seq.is_empty() {
            return Err(Error::data("recurrent forward needs at least one frame"));
        }
        let hidden = self.config.lstm_hidden;
        let zero_state = tape.constant(Matrix::zeros(1, hidden));
        let mut states: BTreeMap<i64, (Var, Var)> = BTreeMap::new();

        let mut final_h: Option<Var> = None;
        for coo in seq {
            // graph convolution at this time step
            let mut h = tape.constant(Matrix::from_rows(
                &coo.node_matrix,
                self.config.gconv.node_feature_dim,
            ));
            for layer in &self.layers {
                h = layer.forward(tape, binding, h, coo)?;
            }

            // gather per-track LSTM states in node order
            let mut h_parts = Vec::with_capacity(coo.node_count());
            let mut c_parts = Vec::with_capacity(coo.node_count());
            for track in &coo.track_ids {
                let (hp, cp) = states.get(track).copied().unwrap_or((zero_state, zero_state));
                h_parts.push(hp);
                c_parts.push(cp);
            }
            let h_prev = tape.concat_rows(&h_parts)?;
            let c_prev = tape.concat_rows(&c_parts)?;

            let (h_new, c_new) = self.lstm_cell(tape, binding, h, h_prev, c_prev)?;

            // write the updated rows back into the state table
            for (k, track) in coo.track_ids.iter().enumerate() {
                let hr = tape.slice_rows(h_new, k, 1)?;
                let cr = tape.slice_rows(c_new, k, 1)?;
                states.insert(*track, (hr, cr));
            }
            final_h = Some(h_new);
        }

        self.head.forward(tape, binding, final_h.expect("non-empty sequence"))
    }

    pub fn predict(&self, seq: &[CooGraph]) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let binding = self.params.bind(&mut tape);
        let out = self.forward_on_tape(&mut tape, &binding, seq)?;
        Ok(ModelOutput::dense(tape.value(out).data().to_vec()))
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader::Recurrent {
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

    pub fn from_checkpoint(config: RecurrentConfig, ckpt: &Checkpoint) -> Result<RecurrentModel> {
        let (layers, head) = Self::build_layers(&config);
        let params = ParamStore::from_checkpoint(ckpt)?;
        for gate in GATES {
            let w = params.get(&format!("lstm.w_x{gate}"))?;
            if w.shape() != (config.lstm_hidden, config.lstm_hidden) {
                return Err(Error::data(format!(
                    "lstm.w_x{gate} has shape {:?}, expected {:?}",
                    w.shape(),
                    (config.lstm_hidden, config.lstm_hidden)
                )));
            }
        }
        Ok(RecurrentModel {
            config,
            params,
            layers,
            head,
            seed: ckpt.rng_seed,
        })
    }
}

impl Predictor for RecurrentModel {
    fn name(&self) -> String {
        "recurrent".into()
    }

    fn predict_sequence(&self, seq: &[CooGraph]) -> Result<ModelOutput> {
        self.predict(seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gradcheck::random_coo_graph;

    fn sequence(seed: u64, frames: usize, nodes: usize, edges: usize) -> Vec<CooGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..frames)
            .map(|i| {
                let mut coo = random_coo_graph(&mut rng, nodes, edges);
                coo.frame_index = i;
                coo
            })
            .collect()
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let m = RecurrentModel::new(RecurrentConfig::default(), 5);
        assert!(m.params.get("lstm.b_f").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(m.params.get("lstm.b_i").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_errors() {
        let m = RecurrentModel::new(RecurrentConfig::default(), 5);
        assert!(m.predict(&[]).is_err());
    }

    #[test]
    fn single_frame_equals_gconv_plus_one_lstm_step() {
        // With a one-frame sequence the model is the graph convolution
        // followed by one LSTM step from the zero state and the head.
        let model = RecurrentModel::new(RecurrentConfig::default(), 8);
        let seq = sequence(100, 1, 4, 7);
        let out = model.predict(&seq).unwrap();

        // manual composition on a fresh tape
        let mut tape = Tape::new();
        let binding = model.params.bind(&mut tape);
        let mut h = tape.constant(Matrix::from_rows(&seq[0].node_matrix, 8));
        for layer in &model.layers {
            h = layer.forward(&mut tape, &binding, h, &seq[0]).unwrap();
        }
        let zeros = tape.constant(Matrix::zeros(4, 64));
        let (h1, _c1) = model.lstm_cell(&mut tape, &binding, h, zeros, zeros).unwrap();
        let a = model.head.forward(&mut tape, &binding, h1).unwrap();
        let expected = tape.value(a).data().to_vec();
        assert_eq!(out.accel, expected);
    }

    #[test]
    fn entity_leaving_before_final_frame_is_masked_but_state_updates() {
        let model = RecurrentModel::new(RecurrentConfig::default(), 8);
        let mut seq = sequence(200, 3, 4, 6);
        // drop track of node 3 from the final frame
        let last = seq.last_mut().unwrap();
        let departing = last.track_ids[3];
        last.node_matrix.pop();
        last.track_ids.pop();
        last.label_vector.pop();
        last.label_mask.pop();
        let keep: Vec<usize> = (0..last.topology[0].len())
            .filter(|&k| last.topology[0][k] < 3 && last.topology[1][k] < 3)
            .collect();
        last.topology = [
            keep.iter().map(|&k| last.topology[0][k]).collect(),
            keep.iter().map(|&k| last.topology[1][k]).collect(),
        ];
        last.edge_matrix = keep.iter().map(|&k| last.edge_matrix[k].clone()).collect();

        let out = model.predict(&seq).unwrap();
        assert_eq!(out.accel.len(), 3);
        assert!(!seq.last().unwrap().track_ids.contains(&departing));

        // The departed entity still influenced earlier frames: removing it
        // from history changes the prediction of entities it related to.
        let mut without_history = seq.clone();
        for frame in &mut without_history[..2] {
            if let Some(idx) = frame.track_ids.iter().position(|&t| t == departing) {
                frame.node_matrix.remove(idx);
                frame.track_ids.remove(idx);
                frame.label_vector.remove(idx);
                frame.label_mask.remove(idx);
                let keep: Vec<usize> = (0..frame.topology[0].len())
                    .filter(|&k| frame.topology[0][k] != idx && frame.topology[1][k] != idx)
                    .collect();
                let remap = |v: usize| if v > idx { v - 1 } else { v };
                frame.topology = [
                    keep.iter().map(|&k| remap(frame.topology[0][k])).collect(),
                    keep.iter().map(|&k| remap(frame.topology[1][k])).collect(),
                ];
                frame.edge_matrix = keep.iter().map(|&k| frame.edge_matrix[k].clone()).collect();
            }
        }
        let out2 = model.predict(&without_history).unwrap();
        let diff: f64 = out
            .accel
            .iter()
            .zip(&out2.accel)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 0.0, "departed entity must have influenced the history");
    }

    #[test]
    fn repeated_identical_frame_keeps_outputs_finite_and_states_settling() {
        let model = RecurrentModel::new(RecurrentConfig::default(), 9);
        let frame = sequence(300, 1, 3, 4).pop().unwrap();
        let mut prev_h: Option<Vec<f64>> = None;
        let mut deltas = Vec::new();
        for t in 1..=10 {
            let seq: Vec<CooGraph> = (0..t).map(|_| frame.clone()).collect();
            let mut tape = Tape::new();
            let binding = model.params.bind(&mut tape);
            let out = model.forward_on_tape(&mut tape, &binding, &seq).unwrap();
            let accel = tape.value(out).data().to_vec();
            assert!(accel.iter().all(|v| v.is_finite()));
            if let Some(prev) = prev_h.replace(accel.clone()) {
                let delta: f64 = accel
                    .iter()
                    .zip(&prev)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                deltas.push(delta);
            }
        }
        // state updates settle: the late deltas are smaller than the early ones
        let early: f64 = deltas[..3].iter().sum();
        let late: f64 = deltas[deltas.len() - 3..].iter().sum();
        assert!(late < early, "deltas should shrink: early {early} late {late}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = RecurrentModel::new(RecurrentConfig::default(), 33);
        let json = model.to_checkpoint(2).to_json();
        let restored =
            match crate::models::AnyModel::from_checkpoint(&Checkpoint::from_json(&json).unwrap())
                .unwrap()
            {
                crate::models::AnyModel::Recurrent(m) => m,
                _ => panic!("wrong kind"),
            };
        assert_eq!(model.params, restored.params);
    }
}
