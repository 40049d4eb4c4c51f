//! Shared building blocks: two-layer perceptrons and the edge-conditioned
//! graph convolution layer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Binding, Matrix, ParamStore, Tape, Var};
use crate::error::Result;
use crate::scenegraph::CooGraph;

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization, row-major
/// draw order.
pub(crate) fn uniform_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (1.0 / rows as f64).sqrt();
    Matrix::from_flat(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect(),
    )
}

/// Two fully connected layers with an interposed ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerMlp {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl TwoLayerMlp {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        TwoLayerMlp {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
            output_dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        store.insert(
            format!("{}.w1", self.prefix),
            uniform_weights(rng, self.input_dim, self.hidden_dim),
        );
        store.insert(format!("{}.b1", self.prefix), Matrix::zeros(1, self.hidden_dim));
        store.insert(
            format!("{}.w2", self.prefix),
            uniform_weights(rng, self.hidden_dim, self.output_dim),
        );
        store.insert(format!("{}.b2", self.prefix), Matrix::zeros(1, self.output_dim));
    }

    pub fn forward(&self, tape: &mut Tape, binding: &Binding, x: Var) -> Result<Var> {
        let w1 = binding[&format!("{}.w1", self.prefix)];
        let b1 = binding[&format!("{}.b1", self.prefix)];
        let w2 = binding[&format!("{}.w2", self.prefix)];
        let b2 = binding[&format!("{}.b2", self.prefix)];
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h);
        let out = tape.matmul(h, w2)?;
        tape.add_row(out, b2)
    }
}

/// One edge-conditioned message-passing step.
///
/// Per edge (i -> j) the edge features pass through a two-layer MLP whose
/// output is reshaped to a (d_in x hidden) weight applied to the target
/// node's state; messages average over each node's outgoing edges (zero
/// for nodes without any), and the update adds the root-weight term:
/// `h_i' = h_i . root + mean_j(h_j . edge_mlp(e_ij))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GConvLayer {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub edge_feature_dim: usize,
    pub edge_mlp: TwoLayerMlp,
}

impl GConvLayer {
    pub fn new(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        edge_feature_dim: usize,
        edge_mlp_hidden: usize,
    ) -> GConvLayer {
        GConvLayer {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
            edge_feature_dim,
            edge_mlp: TwoLayerMlp::new(
                format!("{prefix}.edge_mlp"),
                edge_feature_dim,
                edge_mlp_hidden,
                input_dim * hidden_dim,
            ),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.edge_mlp.init(store, rng);
        store.insert(
            format!("{}.root", self.prefix),
            uniform_weights(rng, self.input_dim, self.hidden_dim),
        );
    }

    /// Edge feature rows of a COO graph as a constant tape matrix.
    pub fn edge_features(&self, tape: &mut Tape, coo: &CooGraph) -> Var {
        let rows: Vec<Vec<f64>> = coo.edge_matrix.clone();
        tape.constant(Matrix::from_rows(&rows, self.edge_feature_dim))
    }

    pub fn forward(&self, tape: &mut Tape, binding: &Binding, h: Var, coo: &CooGraph) -> Result<Var> {
        let root = binding[&format!("{}.root", self.prefix)];
        let edge_feats = self.edge_features(tape, coo);
        let edge_weights = self.edge_mlp.forward(tape, binding, edge_feats)?;
        let h_dst = tape.gather_rows(h, &coo.topology[1])?;
        let contrib = tape.rowwise_matmul(edge_weights, h_dst)?;
        let message = tape.scatter_mean(contrib, &coo.topology[0], coo.node_count())?;
        let updated = tape.matmul(h, root)?;
        tape.add(updated, message)
    }
}
