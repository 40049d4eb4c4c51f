//! The track CSV format: one row per (case, track, timestamp).
//!
//! Header:
//! `case_id,track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width`
//! with an optional trailing `motion_state` column. Comma-separated, decimal
//! point, UTF-8, LF line endings. Agent types `car,truck,bus,pedestrian,
//! bicycle,motorcycle` (case-insensitive); anything else maps to `Other`.
//! The `frame_id` column is carried for compatibility; frames are ordered
//! and indexed by timestamp.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use super::{AgentClass, EntityState, Frame, MotionState, Recording, FRAME_STEP_MS};
use crate::error::{Error, Result};
use crate::geom::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackFormat {
    TrackCsv,
}

/// Lenient-path counters reported alongside the parsed recordings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Rows whose agent type was unknown and mapped to `Other`.
    pub unknown_class_rows: usize,
    /// Rows whose motion state was unknown and dropped.
    pub unknown_motion_rows: usize,
}

const BASE_COLUMNS: [&str; 12] = [
    "case_id",
    "track_id",
    "frame_id",
    "timestamp_ms",
    "agent_type",
    "x",
    "y",
    "vx",
    "vy",
    "psi_rad",
    "length",
    "width",
];

fn parse_f64(field: &str, name: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name} value '{field}'"),
    })
}

fn parse_i64(field: &str, name: &str, line: usize) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name} value '{field}'"),
    })
}

/// Parse a track CSV stream into one `Recording` per case id (sorted by id).
///
/// Rows are grouped into frames by timestamp; entities within a frame are
/// sorted by track id. Duplicate (track, timestamp) rows are retained for
/// the deduplication stage. Frame steps must be a constant 100 ms.
pub fn parse_tracks(text: &str, format: TrackFormat) -> Result<(Vec<Recording>, ParseStats)> {
    let TrackFormat::TrackCsv = format;
    let mut stats = ParseStats::default();

    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".to_string(),
    })?;
    let columns: Vec<&str> = header.trim_end().split(',').map(str::trim).collect();
    let has_motion = match columns.len() {
        12 => false,
        13 if columns[12] == "motion_state" => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header '{}'", header.trim_end()),
            })
        }
    };
    if columns[..12] != BASE_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header '{}'", header.trim_end()),
        });
    }

    // case id -> timestamp -> entities
    let mut cases: BTreeMap<String, BTreeMap<i64, Vec<EntityState>>> = BTreeMap::new();

    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        let expected = if has_motion { 13 } else { 12 };
        if fields.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expected} fields, found {}", fields.len()),
            });
        }

        let case_id = fields[0].trim().to_string();
        let track_id = parse_i64(fields[1], "track_id", line)?;
        let timestamp_ms = parse_i64(fields[3], "timestamp_ms", line)?;
        let (class, known) = AgentClass::parse_lenient(fields[4]);
        if !known {
            stats.unknown_class_rows += 1;
        }
        let x = parse_f64(fields[5], "x", line)?;
        let y = parse_f64(fields[6], "y", line)?;
        let vx = parse_f64(fields[7], "vx", line)?;
        let vy = parse_f64(fields[8], "vy", line)?;
        let heading = wrap_angle(parse_f64(fields[9], "psi_rad", line)?);
        let length = parse_f64(fields[10], "length", line)?;
        let width = parse_f64(fields[11], "width", line)?;
        if length <= 0.0 || width <= 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("non-positive extents {length} x {width}"),
            });
        }
        let motion_state = if has_motion {
            let m = MotionState::parse(fields[12]);
            if m.is_none() && !fields[12].trim().is_empty() {
                stats.unknown_motion_rows += 1;
            }
            m
        } else {
            None
        };

        cases.entry(case_id).or_default().entry(timestamp_ms).or_default().push(EntityState {
            track_id,
            frame_index: 0, // assigned below from the timestamp rank
            timestamp_ms,
            class,
            x,
            y,
            heading,
            length,
            width,
            speed: (vx * vx + vy * vy).sqrt(),
            motion_state,
        });
    }

    let mut recordings = Vec::with_capacity(cases.len());
    for (id, by_time) in cases {
        let mut frames = Vec::with_capacity(by_time.len());
        let mut prev_ts: Option<i64> = None;
        for (frame_index, (timestamp_ms, mut entities)) in by_time.into_iter().enumerate() {
            if let Some(prev) = prev_ts {
                let step = timestamp_ms - prev;
                if step != FRAME_STEP_MS {
                    return Err(Error::data(format!(
                        "recording {id}: non-constant frame step ({step} ms between \
                         {prev} and {timestamp_ms}, expected {FRAME_STEP_MS} ms)"
                    )));
                }
            }
            prev_ts = Some(timestamp_ms);
            entities.sort_by_key(|e| e.track_id);
            for e in &mut entities {
                e.frame_index = frame_index;
            }
            frames.push(Frame {
                frame_index,
                timestamp_ms,
                entities,
            });
        }
        recordings.push(Recording {
            id,
            frequency_hz: 10.0,
            frames,
            ego_id: None,
        });
    }

    Ok((recordings, stats))
}

/// Serialize recordings back to the track CSV format. Includes the
/// `motion_state` column when any entity carries one.
pub fn emit_tracks(recordings: &[Recording]) -> String {
    let has_motion = recordings
        .iter()
        .flat_map(|r| &r.frames)
        .flat_map(|f| &f.entities)
        .any(|e| e.motion_state.is_some());

    let mut out = String::new();
    out.push_str(&BASE_COLUMNS.join(","));
    if has_motion {
        out.push_str(",motion_state");
    }
    out.push('\n');

    for rec in recordings {
        for frame in &rec.frames {
            for e in &frame.entities {
                let vx = e.speed * e.heading.cos();
                let vy = e.speed * e.heading.sin();
                out.push_str(&format!(
                    "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    rec.id,
                    e.track_id,
                    frame.frame_index,
                    frame.timestamp_ms,
                    e.class.as_str(),
                    e.x,
                    e.y,
                    vx,
                    vy,
                    e.heading,
                    e.length,
                    e.width
                ));
                if has_motion {
                    out.push(',');
                    if let Some(m) = e.motion_state {
                        out.push_str(m.as_str());
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}
