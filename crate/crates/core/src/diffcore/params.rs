//! Named parameters with gradient accumulators and Adam moments, plus the
//! JSON checkpoint format.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Param {
    value: Matrix,
    grad: Matrix,
    moment1: Matrix,
    moment2: Matrix,
}

/// Adam hyperparameters; defaults are the standard values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Name-indexed learnable parameters. Iteration order is the sorted name
/// order everywhere, which keeps training and serialization deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
    step: u64,
}

/// Tape handles for one binding of the whole store.
pub type Binding = BTreeMap<String, Var>;

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let name = name.into();
        let (r, c) = value.shape();
        let prev = self.entries.insert(
            name.clone(),
            Param {
                value,
                grad: Matrix::zeros(r, c),
                moment1: Matrix::zeros(r, c),
                moment2: Matrix::zeros(r, c),
            },
        );
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::data(format!("unknown parameter {name}")))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::data(format!("unknown parameter {name}")))
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        self.entries
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::data(format!("unknown parameter {name}")))
    }

    /// Insert every parameter into `tape` as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        self.entries
            .iter()
            .map(|(name, p)| (name.clone(), tape.parameter(p.value.clone())))
            .collect()
    }

    /// Accumulate the tape gradients of a binding into the store.
    pub fn accumulate_grads(&mut self, tape: &Tape, binding: &Binding) {
        for (name, var) in binding {
            if let Some(g) = tape.grad(*var) {
                let p = self.entries.get_mut(name).expect("binding matches store");
                p.grad.axpy(1.0, g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn global_grad_norm(&self) -> f64 {
        let sum: f64 = self
            .entries
            .values()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum();
        sum.sqrt()
    }

    /// Scale all gradients so the global norm does not exceed `max_norm`;
    /// returns the applied factor (1.0 when no clipping happened).
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_grad_norm();
        if norm <= max_norm || norm == 0.0 {
            return 1.0;
        }
        let factor = max_norm / norm;
        for p in self.entries.values_mut() {
            p.grad.scale_in_place(factor);
        }
        factor
    }

    /// One bias-corrected Adam update; increments the step counter and
    /// zeroes the gradients afterwards.
    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for p in self.entries.values_mut() {
            for i in 0..p.value.len() {
                let g = p.grad.data()[i];
                let m = cfg.beta1 * p.moment1.data()[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * p.moment2.data()[i] + (1.0 - cfg.beta2) * g * g;
                p.moment1.data_mut()[i] = m;
                p.moment2.data_mut()[i] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                p.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            p.grad.fill(0.0);
        }
    }
}

// --- checkpoint format ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TensorData {
    pub shape: [usize; 2],
    /// Row-major values.
    pub values: Vec<f64>,
}

impl TensorData {
    fn from_matrix(m: &Matrix) -> TensorData {
        TensorData {
            shape: [m.rows(), m.cols()],
            values: m.data().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        if self.values.len() != self.shape[0] * self.shape[1] {
            return Err(Error::data(format!(
                "tensor data length {} does not match shape {}x{}",
                self.values.len(),
                self.shape[0],
                self.shape[1]
            )));
        }
        Ok(Matrix::from_flat(
            self.shape[0],
            self.shape[1],
            self.values.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamStateData {
    pub step: u64,
    pub moment1: BTreeMap<String, Vec<f64>>,
    pub moment2: BTreeMap<String, Vec<f64>>,
}

/// The checkpoint file: parameters, optimizer state and a model header
/// (filled in by the model layer).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    #[serde(default)]
    pub model: serde_json::Value,
    pub params: BTreeMap<String, TensorData>,
    pub adam: AdamStateData,
    pub epoch: u64,
    pub rng_seed: u64,
}

pub const CHECKPOINT_FORMAT: u32 = 1;

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::data(format!("checkpoint JSON: {e}")))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!(
                "unsupported checkpoint format {}",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}

impl ParamStore {
    pub fn to_checkpoint(&self, model: serde_json::Value, epoch: u64, rng_seed: u64) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            model,
            params: self
                .entries
                .iter()
                .map(|(n, p)| (n.clone(), TensorData::from_matrix(&p.value)))
                .collect(),
            adam: AdamStateData {
                step: self.step,
                moment1: self
                    .entries
                    .iter()
                    .map(|(n, p)| (n.clone(), p.moment1.data().to_vec()))
                    .collect(),
                moment2: self
                    .entries
                    .iter()
                    .map(|(n, p)| (n.clone(), p.moment2.data().to_vec()))
                    .collect(),
            },
            epoch,
            rng_seed,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, tensor) in &ckpt.params {
            store.insert(name.clone(), tensor.to_matrix()?);
        }
        store.step = ckpt.adam.step;
        for (name, values) in &ckpt.adam.moment1 {
            let p = store
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::data(format!("adam state for unknown parameter {name}")))?;
            if values.len() != p.moment1.len() {
                return Err(Error::data(format!("adam moment shape mismatch for {name}")));
            }
            p.moment1 = Matrix::from_flat(p.value.rows(), p.value.cols(), values.clone());
        }
        for (name, values) in &ckpt.adam.moment2 {
            let p = store
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::data(format!("adam moment shape mismatch for {name}")))?;
            if values.len() != p.moment2.len() {
                return Err(Error::data(format!("adam moment shape mismatch for {name}")));
            }
            p.moment2 = Matrix::from_flat(p.value.rows(), p.value.cols(), values.clone());
        }
        Ok(store)
    }
}
