// Scratch probe: end-to-end benchmark training to size the learning gaps.
use std::time::Instant;

use tsg_core::evaluator::{collect_labels, evaluate, EntityMode};
use tsg_core::models::{predict_baseline, BaselineKind, RecurrentConfig, RecurrentModel, SingleStepConfig, SingleStepModel};
use tsg_core::scenegraph::{ablate_edges, GraphParams};
use tsg_core::synthgen::make_benchmark;
use tsg_core::trainer::{build_samples, train, DatasetSplit, Sample, SampleMode, TrainConfig};

fn ablate_split(split: &DatasetSplit) -> DatasetSplit {
    let ab = |samples: &[Sample]| -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample {
                recording_id: s.recording_id.clone(),
                frames: s.frames.iter().map(ablate_edges).collect(),
                ego_track: s.ego_track,
            })
            .collect()
    };
    DatasetSplit {
        train: ab(&split.train),
        val: ab(&split.val),
        test: ab(&split.test),
    }
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let t0 = Instant::now();
    println!("=== seed {seed} ===");
    let bench = make_benchmark(seed).unwrap();
    let recordings: Vec<_> = bench
        .entries
        .iter()
        .map(|e| (e.recording.clone(), bench.lane_maps[&e.lane_map_id].clone()))
        .collect();
    println!("benchmark: {} recordings, {} labeled frames, {:.1}s", recordings.len(), bench.manifest.total_labeled_frames, t0.elapsed().as_secs_f64());

    let params = GraphParams::default();
    let single_split = build_samples(&recordings, SampleMode::SingleStep, &params, 10, seed).unwrap();
    println!(
        "single split: {}/{}/{} ({:.1}s)",
        single_split.train.len(),
        single_split.val.len(),
        single_split.test.len(),
        t0.elapsed().as_secs_f64()
    );

    let config = TrainConfig { seed, ..TrainConfig::default() };

    // Single step
    let t1 = Instant::now();
    let mut single = SingleStepModel::new(SingleStepConfig::default(), seed);
    let mut clock = || t1.elapsed().as_secs_f64();
    let report = train(&mut single, &single_split, &config, &mut clock).unwrap();
    println!(
        "single: best val {:.4} at epoch {} ({} epochs, {:.1}s)",
        report.best_val,
        report.best_epoch,
        report.log.len(),
        t1.elapsed().as_secs_f64()
    );

    // Ablated twin
    let t2 = Instant::now();
    let ablated_split = ablate_split(&single_split);
    let mut ablated = SingleStepModel::new(SingleStepConfig::default(), seed);
    let mut clock = || t2.elapsed().as_secs_f64();
    let report_ab = train(&mut ablated, &ablated_split, &config, &mut clock).unwrap();
    println!(
        "ablated: best val {:.4} at epoch {} ({} epochs, {:.1}s)",
        report_ab.best_val,
        report_ab.best_epoch,
        report_ab.log.len(),
        t2.elapsed().as_secs_f64()
    );

    // Recurrent(10)
    let t3 = Instant::now();
    let rec_split = build_samples(&recordings, SampleMode::Recurrent(10), &params, 10, seed).unwrap();
    let mut recurrent = RecurrentModel::new(RecurrentConfig::default(), seed);
    let mut clock = || t3.elapsed().as_secs_f64();
    let report_rec = train(&mut recurrent, &rec_split, &config, &mut clock).unwrap();
    println!(
        "recurrent: best val {:.4} at epoch {} ({} epochs, {:.1}s)",
        report_rec.best_val,
        report_rec.best_epoch,
        report_rec.log.len(),
        t3.elapsed().as_secs_f64()
    );

    // Evaluation on test
    let labels = collect_labels(&single_split.test, EntityMode::All);
    let zero = predict_baseline(BaselineKind::Zero, &labels).unwrap();
    let mean = predict_baseline(BaselineKind::Mean, &labels).unwrap();
    let row_zero = evaluate(&zero, &single_split.test, EntityMode::All, "synth").unwrap();
    let row_mean = evaluate(&mean, &single_split.test, EntityMode::All, "synth").unwrap();
    let row_single = evaluate(&single, &single_split.test, EntityMode::All, "synth").unwrap();
    let row_ablated = evaluate(&ablated, &ablated_split.test, EntityMode::All, "synth").unwrap();
    let row_rec = evaluate(&recurrent, &rec_split.test, EntityMode::All, "synth").unwrap();

    println!("zero     l1 {:.4} mse {:.4} n {}", row_zero.l1, row_zero.mse, row_zero.count);
    println!("mean     l1 {:.4} mse {:.4}", row_mean.l1, row_mean.mse);
    println!("single   l1 {:.4} mse {:.4}", row_single.l1, row_single.mse);
    println!("ablated  l1 {:.4} mse {:.4}", row_ablated.l1, row_ablated.mse);
    println!("recurrent l1 {:.4} mse {:.4}", row_rec.l1, row_rec.mse);

    let gap = |a: f64, b: f64| (b - a) / b * 100.0;
    println!("single vs zero:    {:.1}% (need >=15)", gap(row_single.l1, row_zero.l1));
    println!("single vs ablated: {:.1}% (need >=10)", gap(row_single.l1, row_ablated.l1));
    println!("recurrent vs single: {:.1}% (need >=20)", gap(row_rec.l1, row_single.l1));
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
