//! Central finite-difference verification of the analytic gradients of
//! both models, usable from tests and the CLI.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RecurrentConfig, RecurrentModel, SingleStepConfig, SingleStepModel};
use crate::diffcore::{Matrix, ParamStore, Tape, Var};
use crate::error::Result;
use crate::scenegraph::{CooGraph, EDGE_FEATURES, NODE_FEATURES};

/// A random but well-formed COO graph (dense labels, valid topology).
pub fn random_coo_graph(rng: &mut ChaCha8Rng, nodes: usize, edges: usize) -> CooGraph {
    assert!(nodes >= 1);
    let node_matrix: Vec<Vec<f64>> = (0..nodes)
        .map(|_| {
            let mut row = alloc::vec![0.0; NODE_FEATURES];
            let class = rng.random_range(0..7usize);
            row[class] = 1.0;
            row[NODE_FEATURES - 1] = rng.random_range(0.0..1.5);
            row
        })
        .collect();
    let mut src = Vec::with_capacity(edges);
    let mut dst = Vec::with_capacity(edges);
    let edge_matrix: Vec<Vec<f64>> = (0..edges)
        .map(|_| {
            let s = rng.random_range(0..nodes);
            let mut d = rng.random_range(0..nodes);
            if nodes > 1 {
                while d == s {
                    d = rng.random_range(0..nodes);
                }
            }
            src.push(s);
            dst.push(d);
            let mut row = alloc::vec![0.0; EDGE_FEATURES];
            row[rng.random_range(0..3usize)] = 1.0;
            row[3] = rng.random_range(0.05..1.0);
            row[4] = rng.random_range(-1.0..1.0);
            row
        })
        .collect();
    CooGraph {
        frame_index: 0,
        node_matrix,
        edge_matrix,
        topology: [src, dst],
        label_vector: (0..nodes).map(|_| rng.random_range(-2.0..2.0)).collect(),
        label_mask: alloc::vec![true; nodes],
        track_ids: (0..nodes as i64).collect(),
    }
}

/// Mean absolute error between predictions and the labeled entries.
pub fn l1_loss_on_tape(
    tape: &mut Tape,
    predictions: Var,
    labels: &[f64],
    indices: &[usize],
) -> Result<Var> {
    let picked = tape.gather_rows(predictions, indices)?;
    let targets = tape.constant(Matrix::from_flat(
        indices.len(),
        1,
        indices.iter().map(|&i| labels[i]).collect(),
    ));
    let diff = tape.sub(picked, targets)?;
    let absdiff = tape.abs(diff);
    tape.row_mean(absdiff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub scalar_count: usize,
}

/// Compare analytic gradients against central finite differences with
/// step `h`. Relative error uses `|fd - an| / max(|fd| + |an|, 1e-3)`; the
/// floor keeps finite-difference noise on near-zero gradients from
/// dominating the ratio.
pub fn finite_difference_check(
    params: &ParamStore,
    analytic: &BTreeMap<String, Matrix>,
    mut eval: impl FnMut(&ParamStore) -> Result<f64>,
    h: f64,
) -> Result<GradCheckReport> {
    let mut max_rel = 0.0f64;
    let mut scalar_count = 0;
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let len = params.get(&name)?.len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.value_mut(&name)?.data_mut()[i] += h;
            let mut minus = params.clone();
            minus.value_mut(&name)?.data_mut()[i] -= h;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let an = analytic[&name].data()[i];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-3);
            if rel > max_rel {
                max_rel = rel;
            }
            scalar_count += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        scalar_count,
    })
}

fn collect_grads(params: &ParamStore, tape: &Tape, binding: &crate::diffcore::Binding) -> BTreeMap<String, Matrix> {
    params
        .names()
        .map(|n| {
            let var = binding[n];
            let g = tape
                .grad(var)
                .cloned()
                .unwrap_or_else(|| {
                    let (r, c) = tape.value(var).shape();
                    Matrix::zeros(r, c)
                });
            (n.clone(), g)
        })
        .collect()
}

/// Kinked activations make central differences invalid near zero; only
/// accept fixtures whose smallest kink margin clears the probe step by a
/// wide factor.
const KINK_MARGIN: f64 = 1e-3;

/// Gradient check of the full single-step model on a random small graph.
pub fn gradcheck_single_step(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SingleStepModel::new(SingleStepConfig::default(), seed.wrapping_add(1));

    let (coo, indices, mut tape, binding, loss) = loop {
        let coo = random_coo_graph(&mut rng, 3, 4);
        let indices = coo.labeled_indices();
        let mut tape = Tape::new();
        let binding = model.params.bind(&mut tape);
        let pred = model.forward_on_tape(&mut tape, &binding, &coo)?;
        let loss = l1_loss_on_tape(&mut tape, pred, &coo.label_vector, &indices)?;
        if tape.kink_margin() > KINK_MARGIN {
            break (coo, indices, tape, binding, loss);
        }
    };
    tape.backward(loss)?;
    let analytic = collect_grads(&model.params, &tape, &binding);

    finite_difference_check(
        &model.params,
        &analytic,
        |store| {
            let mut tape = Tape::new();
            let binding = store.bind(&mut tape);
            let pred = model.forward_on_tape(&mut tape, &binding, &coo)?;
            let loss = l1_loss_on_tape(&mut tape, pred, &coo.label_vector, &indices)?;
            Ok(tape.value(loss).scalar_value())
        },
        1e-5,
    )
}

/// Gradient check of the recurrent model on a random 3-frame sequence.
pub fn gradcheck_recurrent(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = RecurrentModel::new(RecurrentConfig::default(), seed.wrapping_add(2));

    let (seq, indices, mut tape, binding, loss) = loop {
        let seq: Vec<CooGraph> = (0..3).map(|_| random_coo_graph(&mut rng, 3, 4)).collect();
        let indices = seq.last().unwrap().labeled_indices();
        let mut tape = Tape::new();
        let binding = model.params.bind(&mut tape);
        let pred = model.forward_on_tape(&mut tape, &binding, &seq)?;
        let loss = l1_loss_on_tape(&mut tape, pred, &seq.last().unwrap().label_vector, &indices)?;
        if tape.kink_margin() > KINK_MARGIN {
            break (seq, indices, tape, binding, loss);
        }
    };
    let last = seq.last().unwrap();
    tape.backward(loss)?;
    let analytic = collect_grads(&model.params, &tape, &binding);

    finite_difference_check(
        &model.params,
        &analytic,
        |store| {
            let mut tape = Tape::new();
            let binding = store.bind(&mut tape);
            let pred = model.forward_on_tape(&mut tape, &binding, &seq)?;
            let loss = l1_loss_on_tape(&mut tape, pred, &last.label_vector, &indices)?;
            Ok(tape.value(loss).scalar_value())
        },
        1e-5,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_gradients_match_finite_differences() {
        let report = gradcheck_single_step(1234).unwrap();
        assert!(
            report.max_rel_error < 1e-5,
            "max relative error {}",
            report.max_rel_error
        );
        assert!(report.scalar_count > 20_000);
    }

    #[test]
    fn recurrent_gradients_match_finite_differences() {
        let report = gradcheck_recurrent(5678).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max relative error {}",
            report.max_rel_error
        );
        assert!(report.scalar_count > 50_000);
    }
}
