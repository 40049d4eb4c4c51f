//! Track-recording ingestion: the common CSV track format, duplicate
//! removal, speed smoothing/derivation, radius filtering and acceleration
//! labels.

mod dedup;
mod track_csv;

pub use dedup::{
    brute_force_mis, build_conflict_graph, dedup_frame, rotated_iou, ConflictGraph, DedupStats,
    DEFAULT_IOU_THRESHOLD, MAX_EXACT_COMPONENT,
};
pub use track_csv::{emit_tracks, parse_tracks, ParseStats, TrackFormat};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Recording sample period. All recordings are fixed at 10 Hz.
pub const FRAME_STEP_MS: i64 = 100;
pub const FRAME_DT_S: f64 = 0.1;

/// Participant classification, in the fixed one-hot order used by the
/// scene-graph node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum AgentClass {
    Car,
    Truck,
    Bus,
    Pedestrian,
    Bicycle,
    Motorcycle,
    Other,
}

pub const AGENT_CLASS_COUNT: usize = 7;

impl AgentClass {
    /// Case-insensitive parse; unknown strings map to `Other`.
    pub fn parse_lenient(s: &str) -> (AgentClass, bool) {
        let lower = s.trim().to_ascii_lowercase();
        let class = match lower.as_str() {
            "car" => AgentClass::Car,
            "truck" => AgentClass::Truck,
            "bus" => AgentClass::Bus,
            "pedestrian" => AgentClass::Pedestrian,
            "bicycle" => AgentClass::Bicycle,
            "motorcycle" => AgentClass::Motorcycle,
            _ => return (AgentClass::Other, false),
        };
        (class, true)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentClass::Car => "car",
            AgentClass::Truck => "truck",
            AgentClass::Bus => "bus",
            AgentClass::Pedestrian => "pedestrian",
            AgentClass::Bicycle => "bicycle",
            AgentClass::Motorcycle => "motorcycle",
            AgentClass::Other => "other",
        }
    }

    /// Index into the 7-slot class one-hot.
    pub fn onehot_index(&self) -> usize {
        match self {
            AgentClass::Car => 0,
            AgentClass::Truck => 1,
            AgentClass::Bus => 2,
            AgentClass::Pedestrian => 3,
            AgentClass::Bicycle => 4,
            AgentClass::Motorcycle => 5,
            AgentClass::Other => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MotionState {
    Parked,
    Stopped,
    Driving,
}

impl MotionState {
    pub fn parse(s: &str) -> Option<MotionState> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parked" => Some(MotionState::Parked),
            "stopped" => Some(MotionState::Stopped),
            "driving" => Some(MotionState::Driving),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MotionState::Parked => "parked",
            MotionState::Stopped => "stopped",
            MotionState::Driving => "driving",
        }
    }
}

/// One tracked participant at one point in time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EntityState {
    pub track_id: i64,
    pub frame_index: usize,
    pub timestamp_ms: i64,
    pub class: AgentClass,
    /// Map-frame position, meters.
    pub x: f64,
    pub y: f64,
    /// Radians in (-pi, pi].
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    /// Scalar speed magnitude, m/s.
    pub speed: f64,
    pub motion_state: Option<MotionState>,
}

impl EntityState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// One scene snapshot: all entities sharing a timestamp.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Frame {
    pub frame_index: usize,
    pub timestamp_ms: i64,
    pub entities: Vec<EntityState>,
}

/// A full 10 Hz recording of one traffic case.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Recording {
    pub id: String,
    pub frequency_hz: f64,
    pub frames: Vec<Frame>,
    pub ego_id: Option<i64>,
}

impl Recording {
    /// Indices of the frames a given track appears in, with its speed there.
    fn track_speeds(&self) -> BTreeMap<i64, BTreeMap<usize, f64>> {
        let mut per_track: BTreeMap<i64, BTreeMap<usize, f64>> = BTreeMap::new();
        for frame in &self.frames {
            for e in &frame.entities {
                per_track
                    .entry(e.track_id)
                    .or_default()
                    .insert(e.frame_index, e.speed);
            }
        }
        per_track
    }
}

/// Future-difference acceleration label for one (track, frame).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccelerationLabel {
    pub track_id: i64,
    pub frame_index: usize,
    /// m/s^2
    pub value: f64,
}

/// Counters for lenient preprocessing paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    pub single_frame_tracks: usize,
}

/// Exponential-moving-average low-pass on per-track speeds. Positions are
/// untouched. `alpha = 1` is the identity filter.
pub fn smooth_speeds(mut recording: Recording, alpha: f64) -> Recording {
    debug_assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
    let mut state: BTreeMap<i64, f64> = BTreeMap::new();
    for frame in &mut recording.frames {
        for e in &mut frame.entities {
            let smoothed = match state.get(&e.track_id) {
                Some(prev) => alpha * e.speed + (1.0 - alpha) * prev,
                None => e.speed,
            };
            state.insert(e.track_id, smoothed);
            e.speed = smoothed;
        }
    }
    recording
}

/// Recompute speeds from positional finite differences at the recording
/// frequency, then apply [`smooth_speeds`]. The first observed frame of a
/// track copies the second frame's raw speed; single-frame tracks get
/// speed 0 and a warning counter.
pub fn derive_speeds_from_positions(
    mut recording: Recording,
    alpha: f64,
) -> (Recording, PreprocessStats) {
    let mut stats = PreprocessStats::default();

    // Gather (frame slot, entity slot, position) per track in frame order.
    let mut per_track: BTreeMap<i64, Vec<(usize, usize, Vec2)>> = BTreeMap::new();
    for (fi, frame) in recording.frames.iter().enumerate() {
        for (ei, e) in frame.entities.iter().enumerate() {
            per_track
                .entry(e.track_id)
                .or_default()
                .push((fi, ei, e.position()));
        }
    }

    for (_track, occurrences) in &per_track {
        if occurrences.len() == 1 {
            let (fi, ei, _) = occurrences[0];
            recording.frames[fi].entities[ei].speed = 0.0;
            stats.single_frame_tracks += 1;
            continue;
        }
        for i in 0..occurrences.len() {
            let (fi, ei, pos) = occurrences[i];
            let raw = if i == 0 {
                let (_, _, next) = occurrences[1];
                next.dist(pos) / FRAME_DT_S
            } else {
                let (_, _, prev) = occurrences[i - 1];
                pos.dist(prev) / FRAME_DT_S
            };
            recording.frames[fi].entities[ei].speed = raw;
        }
    }

    (smooth_speeds(recording, alpha), stats)
}

/// Keep the ego and every entity within `radius` meters (inclusive) of it.
pub fn radius_filter(frame: &Frame, ego_id: i64, radius: f64) -> Result<Frame> {
    let ego = frame
        .entities
        .iter()
        .find(|e| e.track_id == ego_id)
        .ok_or_else(|| {
            Error::data(alloc::format!(
                "ego track {ego_id} not present in frame {}",
                frame.frame_index
            ))
        })?;
    let ego_pos = ego.position();
    let entities = frame
        .entities
        .iter()
        .filter(|e| e.track_id == ego_id || e.position().dist(ego_pos) <= radius)
        .cloned()
        .collect();
    Ok(Frame {
        frame_index: frame.frame_index,
        timestamp_ms: frame.timestamp_ms,
        entities,
    })
}

/// Future speed-difference labels: for every (track, frame) whose track is
/// still present `delta_frames` later,
/// `value = (speed(t + delta) - speed(t)) / (delta * 0.1 s)`.
pub fn compute_labels(recording: &Recording, delta_frames: usize) -> Vec<AccelerationLabel> {
    debug_assert!(delta_frames >= 1);
    let horizon_s = delta_frames as f64 * FRAME_DT_S;
    let per_track = recording.track_speeds();
    let mut labels = Vec::new();
    for frame in &recording.frames {
        for e in &frame.entities {
            let speeds = &per_track[&e.track_id];
            if let Some(future) = speeds.get(&(e.frame_index + delta_frames)) {
                labels.push(AccelerationLabel {
                    track_id: e.track_id,
                    frame_index: e.frame_index,
                    value: (future - e.speed) / horizon_s,
                });
            }
        }
    }
    labels
}

/// Labels of one frame as a node-aligned lookup.
pub fn labels_for_frame(labels: &[AccelerationLabel], frame_index: usize) -> BTreeMap<i64, f64> {
    labels
        .iter()
        .filter(|l| l.frame_index == frame_index)
        .map(|l| (l.track_id, l.value))
        .collect()
}
