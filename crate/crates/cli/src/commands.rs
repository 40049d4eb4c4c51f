//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use tsg_core::diffcore::Checkpoint;
use tsg_core::evaluator::{collect_labels, evaluate, EntityMode, MetricsReport};
use tsg_core::ingest::{
    dedup_frame, derive_speeds_from_positions, emit_tracks, parse_tracks, radius_filter,
    smooth_speeds, TrackFormat, DEFAULT_IOU_THRESHOLD,
};
use tsg_core::lanemap::{lane_map_to_json, load_lane_map};
use tsg_core::models::{
    gradcheck::{gradcheck_recurrent, gradcheck_single_step},
    predict_baseline, AnyModel, BaselineKind, RecurrentConfig, RecurrentModel,
    SingleStepConfig, SingleStepModel,
};
use tsg_core::scenegraph::{
    ablate_edges, build_graph, coo_to_json, graph_to_dot, GraphParams,
};
use tsg_core::synthgen::{
    make_benchmark, make_benchmark_with_mix, ScenarioTemplate, BENCHMARK_MIX,
};
use tsg_core::trainer::{
    build_samples, frames_to_coo, train as run_training, DatasetSplit, LossMode, Sample,
    SampleMode, TrainConfig,
};

use crate::dataset::{self, read_to_string};
use crate::{
    CliResult, ConvertArgs, EvalArgs, Failure, GradcheckArgs, GraphBuildArgs, GraphDotArgs,
    ReportArgs, SynthArgs, TrainArgs,
};

fn ensure_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, contents)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(crate::default_out_dir)
}

pub fn synth(args: SynthArgs) -> CliResult {
    let out = out_dir(&args.out);
    let bench = match args.recordings {
        None => make_benchmark(args.seed)?,
        Some(total) => {
            let default_total: usize = BENCHMARK_MIX.iter().map(|(_, n)| n).sum();
            let mix: Vec<(ScenarioTemplate, usize)> = BENCHMARK_MIX
                .iter()
                .map(|&(t, n)| (t, (n * total / default_total).max(1)))
                .collect();
            make_benchmark_with_mix(args.seed, &mix)?
        }
    };

    for (id, map) in &bench.lane_maps {
        write_file(&out.join("lanemaps").join(format!("{id}.json")), &lane_map_to_json(map))?;
    }
    for entry in &bench.entries {
        write_file(
            &out.join("recordings").join(format!("{}.csv", entry.recording.id)),
            &emit_tracks(std::slice::from_ref(&entry.recording)),
        )?;
    }
    let manifest_json = bench.manifest.to_json();
    write_file(&out.join("manifest.json"), &manifest_json)?;

    let hash = Sha256::digest(manifest_json.as_bytes());
    println!(
        "wrote {} recordings ({} labeled frames) to {}",
        bench.entries.len(),
        bench.manifest.total_labeled_frames,
        out.display()
    );
    println!("manifest sha256: {hash:x}");
    Ok(())
}

pub fn convert(args: ConvertArgs) -> CliResult {
    let (mut recordings, stats) =
        parse_tracks(&read_to_string(&args.input)?, TrackFormat::TrackCsv)?;
    if !(0.0..=1.0).contains(&args.smooth_alpha) || args.smooth_alpha == 0.0 {
        return Err(Failure::usage("--smooth-alpha must be in (0, 1]"));
    }
    let mut removed = 0;
    for recording in &mut recordings {
        for frame in &mut recording.frames {
            let (clean, dstats) = dedup_frame(frame, args.dedup_threshold);
            removed += dstats.removed;
            *frame = clean;
        }
    }
    let mut single_frame_tracks = 0;
    recordings = recordings
        .into_iter()
        .map(|r| {
            if args.derive_speeds {
                let (r, s) = derive_speeds_from_positions(r, args.smooth_alpha);
                single_frame_tracks += s.single_frame_tracks;
                r
            } else {
                smooth_speeds(r, args.smooth_alpha)
            }
        })
        .collect();
    if let Some(ego) = args.ego_id {
        for recording in &mut recordings {
            recording.ego_id = Some(ego);
            for frame in &mut recording.frames {
                *frame = radius_filter(frame, ego, args.radius)?;
            }
        }
    }
    write_file(&args.output, &emit_tracks(&recordings))?;
    println!(
        "converted {} recordings (removed {removed} duplicates, {} unknown classes, {} single-frame tracks)",
        recordings.len(),
        stats.unknown_class_rows,
        single_frame_tracks
    );
    Ok(())
}

pub fn graph_build(args: GraphBuildArgs) -> CliResult {
    let out = out_dir(&args.out);
    let map = load_lane_map(&read_to_string(&args.map)?)?;
    let (recordings, _) = parse_tracks(&read_to_string(&args.tracks)?, TrackFormat::TrackCsv)?;
    let params = GraphParams::default();
    let mut written = 0;
    for recording in &recordings {
        let frames = frames_to_coo(recording, &map, &params, args.delta)?;
        for coo in frames {
            if !coo.label_mask.iter().any(|&m| m) {
                continue;
            }
            let path = out.join(format!("{}_frame{:04}.json", recording.id, coo.frame_index));
            write_file(&path, &coo_to_json(&coo))?;
            written += 1;
        }
    }
    println!("wrote {written} COO graphs to {}", out.display());
    Ok(())
}

pub fn graph_dot(args: GraphDotArgs) -> CliResult {
    let map = load_lane_map(&read_to_string(&args.map)?)?;
    let (recordings, _) = parse_tracks(&read_to_string(&args.tracks)?, TrackFormat::TrackCsv)?;
    let recording = match &args.case {
        Some(id) => recordings
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| Failure::data(format!("no case {id} in the input")))?,
        None => recordings
            .first()
            .ok_or_else(|| Failure::data("input holds no recordings"))?,
    };
    let frame = recording
        .frames
        .iter()
        .find(|f| f.frame_index == args.frame)
        .ok_or_else(|| Failure::data(format!("no frame {} in {}", args.frame, recording.id)))?;
    let (frame, _) = dedup_frame(frame, DEFAULT_IOU_THRESHOLD);
    let graph = build_graph(&frame, &map, &GraphParams::default())?;
    let dot = graph_to_dot(&graph);
    match &args.out {
        Some(path) => {
            write_file(path, &dot)?;
            println!("wrote {}", path.display());
        }
        None => print!("{dot}"),
    }
    Ok(())
}

/// Flat key=value config file; '#' starts a comment line.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut values = BTreeMap::new();
    for (idx, line) in read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::data(format!(
                "{}:{}: expected key=value",
                path.display(),
                idx + 1
            )));
        };
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(values)
}

fn parse_config<T: std::str::FromStr>(
    values: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, Failure> {
    match values.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Failure::data(format!("config key {key}: invalid value '{raw}'"))),
    }
}

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

fn loss_mode(name: &str) -> Result<LossMode, Failure> {
    match name {
        "all" => Ok(LossMode::AllEntities),
        "ego" => Ok(LossMode::EgoOnly),
        other => Err(Failure::usage(format!("unknown loss mode '{other}'"))),
    }
}

pub fn train(args: TrainArgs) -> CliResult {
    let file_values = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    // explicit flags win over config-file values, which win over defaults
    let model_kind: String = match args.model.clone().or(parse_config(&file_values, "model")?) {
        Some(m) => m,
        None => return Err(Failure::usage("--model (or config key model) is required")),
    };
    let seq_len = args
        .seq_len
        .or(parse_config(&file_values, "seq_len")?)
        .unwrap_or(10);
    let loss = args
        .loss
        .clone()
        .or(parse_config(&file_values, "loss")?)
        .unwrap_or_else(|| "all".to_string());
    let seed = args.seed.or(parse_config(&file_values, "seed")?).unwrap_or(0);
    let epochs = args.epochs.or(parse_config(&file_values, "epochs")?);
    let lr = args.lr.or(parse_config(&file_values, "lr")?);
    let ablate = args.ablate_edges || parse_config(&file_values, "ablate_edges")?.unwrap_or(false);

    let mut config = TrainConfig {
        seed,
        loss_mode: loss_mode(&loss)?,
        ..TrainConfig::default()
    };
    if let Some(epochs) = epochs {
        config.max_epochs = epochs;
    }
    if let Some(lr) = lr {
        config.lr = lr;
    }

    let dataset = dataset::load(&args.data)?;
    let mode = match model_kind.as_str() {
        "single" => SampleMode::SingleStep,
        "recurrent" => SampleMode::Recurrent(seq_len),
        other => return Err(Failure::usage(format!("unknown model '{other}'"))),
    };
    let mut split = build_samples(&dataset.recordings, mode, &GraphParams::default(), 10, seed)?;
    if ablate {
        split = ablate_split(&split);
    }
    println!(
        "samples: {} train / {} val / {} test",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );

    let out = out_dir(&args.out);
    ensure_dir(&out)?;
    let started = Instant::now();
    let mut clock = || started.elapsed().as_secs_f64();
    let report = match model_kind.as_str() {
        "single" => {
            let mut model = SingleStepModel::new(SingleStepConfig::default(), seed);
            run_training(&mut model, &split, &config, &mut clock)?
        }
        _ => {
            let mut model = RecurrentModel::new(RecurrentConfig::default(), seed);
            run_training(&mut model, &split, &config, &mut clock)?
        }
    };

    let ckpt_path = out.join("checkpoint.json");
    write_file(&ckpt_path, &report.checkpoint.to_json())?;
    write_file(&out.join("train_log.csv"), &report.log_csv())?;
    println!(
        "trained {model_kind} for {} epochs; best val L1 {:.4} at epoch {}",
        report.log.len(),
        report.best_val,
        report.best_epoch
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> CliResult {
    let ckpt = Checkpoint::from_json(&read_to_string(&args.checkpoint)?)?;
    let model = AnyModel::from_checkpoint(&ckpt)?;
    let seed = ckpt.rng_seed;
    let mode = match &model {
        AnyModel::SingleStep(_) => SampleMode::SingleStep,
        AnyModel::Recurrent(_) => SampleMode::Recurrent(10),
    };

    let dataset = dataset::load(&args.data)?;
    let mut split = build_samples(&dataset.recordings, mode, &GraphParams::default(), 10, seed)?;
    if args.ablate_edges {
        split = ablate_split(&split);
    }
    if split.test.is_empty() {
        return Err(Failure::data("the dataset's test split is empty"));
    }
    let entity_mode = match loss_mode(&args.loss)? {
        LossMode::AllEntities => EntityMode::All,
        LossMode::EgoOnly => EntityMode::EgoOnly,
    };

    let mut report = MetricsReport::default();
    let model_row = evaluate(&model, &split.test, entity_mode, &args.dataset)?;
    let model_name = model_row.model.clone();
    report.push(model_row);
    if args.baselines {
        let labels = collect_labels(&split.test, entity_mode);
        for kind in [BaselineKind::Mean, BaselineKind::Zero] {
            let baseline = predict_baseline(kind, &labels)?;
            report.push(evaluate(&baseline, &split.test, entity_mode, &args.dataset)?);
        }
        report.add_improvement(&model_name, "baseline_mean")?;
        report.add_improvement(&model_name, "baseline_zero")?;
    }

    let out = out_dir(&args.out);
    let json_path = out.join(format!("eval_{model_name}.json"));
    write_file(&json_path, &report.to_json())?;
    write_file(&out.join(format!("eval_{model_name}.csv")), &report.to_csv())?;
    for row in &report.rows {
        println!(
            "{:<14} {:<10} l1 {:.4}  mse {:.4}  fde3 {:.4}  n {}",
            row.model, row.dataset, row.l1, row.mse, row.fde3, row.count
        );
    }
    println!("report: {}", json_path.display());
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> CliResult {
    let single = gradcheck_single_step(args.seed)?;
    println!(
        "single step: max relative error {:.3e} over {} parameters",
        single.max_rel_error, single.scalar_count
    );
    let recurrent = gradcheck_recurrent(args.seed)?;
    println!(
        "recurrent:   max relative error {:.3e} over {} parameters",
        recurrent.max_rel_error, recurrent.scalar_count
    );
    if single.max_rel_error >= 1e-5 || recurrent.max_rel_error >= 1e-4 {
        return Err(Failure::numerical("gradient check exceeded tolerance"));
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> CliResult {
    let mut merged = MetricsReport::default();
    for path in &args.inputs {
        let part = MetricsReport::from_json(&read_to_string(path)?)?;
        for row in part.rows {
            merged.push(row);
        }
        for (key, improvement) in part.improvements {
            merged.improvements.insert(key, improvement);
        }
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| crate::default_out_dir().join("report.csv"));
    write_file(&out, &merged.to_csv())?;
    let json_out = out.with_extension("json");
    write_file(&json_out, &merged.to_json())?;
    print!("{}", merged.to_csv());
    println!("report: {} and {}", out.display(), json_out.display());
    Ok(())
}
