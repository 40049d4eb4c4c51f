//! Dataset loading: the manifest layout written by `synth`, or a generic
//! track CSV (file or directory) with one shared lane map.

use std::fs;
use std::path::{Path, PathBuf};

use tsg_core::ingest::{dedup_frame, parse_tracks, Recording, TrackFormat, DEFAULT_IOU_THRESHOLD};
use tsg_core::lanemap::{load_lane_map, LaneMap};
use tsg_core::synthgen::Manifest;

use crate::Failure;

pub struct Dataset {
    pub recordings: Vec<(Recording, LaneMap)>,
}

pub fn read_to_string(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))
}

/// Deduplicate every frame; a no-op on conflict-free data.
fn dedup_recording(mut recording: Recording) -> Recording {
    for frame in &mut recording.frames {
        let (clean, _) = dedup_frame(frame, DEFAULT_IOU_THRESHOLD);
        *frame = clean;
    }
    recording
}

fn load_manifest_dir(dir: &Path, ego_id: Option<i64>) -> Result<Dataset, Failure> {
    let manifest = Manifest::from_json(&read_to_string(&dir.join("manifest.json"))?)?;
    let mut maps: std::collections::BTreeMap<String, LaneMap> = Default::default();
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let map = match maps.get(&entry.lane_map) {
            Some(m) => m.clone(),
            None => {
                let path = dir.join("lanemaps").join(format!("{}.json", entry.lane_map));
                let map = load_lane_map(&read_to_string(&path)?)?;
                maps.insert(entry.lane_map.clone(), map.clone());
                map
            }
        };
        let csv = read_to_string(&dir.join("recordings").join(format!("{}.csv", entry.id)))?;
        let (parsed, _) = parse_tracks(&csv, TrackFormat::TrackCsv)?;
        for mut recording in parsed {
            recording.ego_id = ego_id.or(recording.ego_id);
            recordings.push((dedup_recording(recording), map.clone()));
        }
    }
    Ok(Dataset { recordings })
}

fn csv_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Failure::data(format!("cannot list {}: {e}", path.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::data(format!(
            "no .csv files under {}",
            path.display()
        )));
    }
    Ok(files)
}

fn load_generic(tracks: &Path, map_path: &Path, ego_id: Option<i64>) -> Result<Dataset, Failure> {
    let map = load_lane_map(&read_to_string(map_path)?)?;
    let mut recordings = Vec::new();
    for file in csv_files(tracks)? {
        let (parsed, _) = parse_tracks(&read_to_string(&file)?, TrackFormat::TrackCsv)?;
        for mut recording in parsed {
            recording.ego_id = ego_id.or(recording.ego_id);
            recordings.push((dedup_recording(recording), map.clone()));
        }
    }
    Ok(Dataset { recordings })
}

pub fn load(args: &crate::DataArgs) -> Result<Dataset, Failure> {
    match (&args.data, &args.tracks, &args.map) {
        (Some(dir), None, None) => load_manifest_dir(dir, args.ego_id),
        (None, Some(tracks), Some(map)) => load_generic(tracks, map, args.ego_id),
        _ => Err(Failure::usage(
            "provide either --data DIR or both --tracks and --map",
        )),
    }
}
