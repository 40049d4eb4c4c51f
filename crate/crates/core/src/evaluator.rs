//! Metric computation and report assembly: L1/MSE against labels, the
//! displacement-error conversion, and relative improvements between rows.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::trainer::{LossMode, Sample};

/// Which entities contribute to the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityMode {
    All,
    EgoOnly,
}

impl From<LossMode> for EntityMode {
    fn from(mode: LossMode) -> EntityMode {
        match mode {
            LossMode::AllEntities => EntityMode::All,
            LossMode::EgoOnly => EntityMode::EgoOnly,
        }
    }
}

/// One evaluated model (or baseline) on one dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub dataset: String,
    /// Mean absolute error, m/s^2.
    pub l1: f64,
    /// Mean squared error, (m/s^2)^2.
    pub mse: f64,
    /// Number of evaluated (prediction, label) pairs.
    pub count: usize,
    /// Final displacement error at a 3 s horizon, meters.
    pub fde3: f64,
}

/// Displacement after `horizon_s` seconds of a constant acceleration
/// error: `l1 * t^2 / 2`.
pub fn fde(l1: f64, horizon_s: f64) -> f64 {
    debug_assert!(horizon_s >= 0.0);
    l1 * horizon_s * horizon_s / 2.0
}

/// Evaluate a predictor over samples, averaging per labeled entity (all
/// entities, or the ego entity only).
pub fn evaluate(
    predictor: &dyn Predictor,
    samples: &[Sample],
    mode: EntityMode,
    dataset: &str,
) -> Result<MetricsRow> {
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for sample in samples {
        let output = predictor.predict_sequence(&sample.frames)?;
        let coo = sample.final_frame();
        let indices: Vec<usize> = match mode {
            EntityMode::All => coo.labeled_indices(),
            EntityMode::EgoOnly => match sample.ego_track.and_then(|t| coo.node_index(t)) {
                Some(i) if coo.label_mask[i] => alloc::vec![i],
                _ => continue,
            },
        };
        for i in indices {
            let err = output.accel[i] - coo.label_vector[i];
            abs_sum += err.abs();
            sq_sum += err * err;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::data("no labeled entities to evaluate"));
    }
    let l1 = abs_sum / count as f64;
    Ok(MetricsRow {
        model: predictor.name(),
        dataset: dataset.to_string(),
        l1,
        mse: sq_sum / count as f64,
        count,
        fde3: fde(l1, 3.0),
    })
}

/// All labels visible to an entity mode over a sample set (for the Mean
/// baseline and label statistics).
pub fn collect_labels(samples: &[Sample], mode: EntityMode) -> Vec<f64> {
    let mut labels = Vec::new();
    for sample in samples {
        let coo = sample.final_frame();
        match mode {
            EntityMode::All => {
                labels.extend(coo.labeled_indices().iter().map(|&i| coo.label_vector[i]));
            }
            EntityMode::EgoOnly => {
                if let Some(i) = sample.ego_track.and_then(|t| coo.node_index(t)) {
                    if coo.label_mask[i] {
                        labels.push(coo.label_vector[i]);
                    }
                }
            }
        }
    }
    labels
}

/// Relative improvement of `a` over `b` per metric, in percent
/// (`(b - a) / b * 100`; positive when `a` is better). `None` when the
/// reference metric is zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Improvement {
    pub l1_percent: Option<f64>,
    pub mse_percent: Option<f64>,
}

pub fn compare(a: &MetricsRow, b: &MetricsRow) -> Result<Improvement> {
    if a.dataset != b.dataset {
        return Err(Error::data(format!(
            "cannot compare across datasets {} vs {}",
            a.dataset, b.dataset
        )));
    }
    let pct = |x: f64, reference: f64| {
        if reference == 0.0 {
            None
        } else {
            Some((reference - x) / reference * 100.0)
        }
    };
    Ok(Improvement {
        l1_percent: pct(a.l1, b.l1),
        mse_percent: pct(a.mse, b.mse),
    })
}

/// Full report: evaluated rows plus named pairwise improvements.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    /// (model, reference) -> improvement, keyed "model_vs_reference".
    pub improvements: alloc::collections::BTreeMap<String, Improvement>,
}

impl MetricsReport {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn row(&self, model: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn add_improvement(&mut self, model: &str, reference: &str) -> Result<()> {
        let a = self
            .row(model)
            .ok_or_else(|| Error::data(format!("no row for {model}")))?;
        let b = self
            .row(reference)
            .ok_or_else(|| Error::data(format!("no row for {reference}")))?;
        let improvement = compare(a, b)?;
        self.improvements
            .insert(format!("{model}_vs_{reference}"), improvement);
        Ok(())
    }

    /// Table-style CSV: `model,dataset,l1,mse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,dataset,l1,mse\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.model, r.dataset, r.l1, r.mse));
        }
        out
    }

    /// JSON report with counts, displacement errors and improvements.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<MetricsReport> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("report JSON: {e}")))
    }
}
