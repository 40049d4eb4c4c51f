//! Lane-level road model: polyline centerlines with successor/parallel
//! topology, Frenet projection, pairwise lane relations and path distances
//! measured along the road.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geom::{segment_intersection, wrap_angle, Vec2};

pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
pub const DEFAULT_MAX_HOPS: usize = 4;

/// A lane: a directed polyline centerline plus topology links.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub centerline: Vec<Vec2>,
    pub successors: Vec<String>,
    pub left_parallel: Option<String>,
    pub right_parallel: Option<String>,
    pub width: f64,
    /// Cumulative arc length at each centerline point; last entry is the
    /// total length.
    cum_length: Vec<f64>,
}

impl Lane {
    pub fn new(
        id: impl Into<String>,
        centerline: Vec<Vec2>,
        successors: Vec<String>,
        left_parallel: Option<String>,
        right_parallel: Option<String>,
        width: f64,
    ) -> Result<Lane> {
        let id = id.into();
        if centerline.len() < 2 {
            return Err(Error::data(format!(
                "lane {id}: centerline needs at least 2 points"
            )));
        }
        let mut cum_length = Vec::with_capacity(centerline.len());
        cum_length.push(0.0);
        for w in centerline.windows(2) {
            let seg = w[1].dist(w[0]);
            if seg == 0.0 {
                return Err(Error::data(format!(
                    "lane {id}: repeated centerline point at ({}, {})",
                    w[0].x, w[0].y
                )));
            }
            cum_length.push(cum_length.last().unwrap() + seg);
        }
        if successors.iter().any(|s| *s == id) {
            return Err(Error::data(format!("lane {id} lists itself as successor")));
        }
        Ok(Lane {
            id,
            centerline,
            successors,
            left_parallel,
            right_parallel,
            width,
            cum_length,
        })
    }

    pub fn arc_length(&self) -> f64 {
        *self.cum_length.last().unwrap()
    }

    pub fn start_point(&self) -> Vec2 {
        self.centerline[0]
    }

    /// Point and unit direction at arc position `s` (clamped to the lane).
    pub fn point_at(&self, s: f64) -> (Vec2, Vec2) {
        let s = s.clamp(0.0, self.arc_length());
        // Last segment whose start is at or before s.
        let mut seg = 0;
        while seg + 2 < self.cum_length.len() && self.cum_length[seg + 1] <= s {
            seg += 1;
        }
        let a = self.centerline[seg];
        let b = self.centerline[seg + 1];
        let len = self.cum_length[seg + 1] - self.cum_length[seg];
        let dir = b.sub(a).scale(1.0 / len);
        (a.add(dir.scale(s - self.cum_length[seg])), dir)
    }
}

/// Lane-relative coordinates: arc position, signed lateral offset (left of
/// travel positive) and heading difference.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrenetCoord {
    pub lane_id: String,
    pub s: f64,
    pub d: f64,
    pub dtheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LaneRelationKind {
    SameOrSuccessor,
    ParallelAdjacent,
    Merging,
    Crossing,
    Unrelated,
}

/// Relation between two lanes; merge/crossing relations carry the meet
/// point and its arc position along each side's (chain-extended) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneRelation {
    pub kind: LaneRelationKind,
    pub meet_point: Option<Vec2>,
    pub s_meet_a: Option<f64>,
    pub s_meet_b: Option<f64>,
}

impl LaneRelation {
    fn plain(kind: LaneRelationKind) -> LaneRelation {
        LaneRelation {
            kind,
            meet_point: None,
            s_meet_a: None,
            s_meet_b: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CrossingInfo {
    s_a: f64,
    s_b: f64,
    point: Vec2,
}

/// Immutable lane collection with resolved references and a crossing cache
/// built at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMap {
    lanes: BTreeMap<String, Lane>,
    crossings: BTreeMap<(String, String), CrossingInfo>,
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>) -> Result<LaneMap> {
        let mut map = BTreeMap::new();
        for lane in lanes {
            let id = lane.id.clone();
            if map.insert(id.clone(), lane).is_some() {
                return Err(Error::data(format!("duplicate lane id {id}")));
            }
        }
        for lane in map.values() {
            let refs = lane
                .successors
                .iter()
                .chain(&lane.left_parallel)
                .chain(&lane.right_parallel);
            for r in refs {
                if !map.contains_key(r) {
                    return Err(Error::data(format!(
                        "lane {} references missing lane {r}",
                        lane.id
                    )));
                }
            }
        }
        let crossings = build_crossing_cache(&map);
        Ok(LaneMap {
            lanes: map,
            crossings,
        })
    }

    pub fn get(&self, id: &str) -> Result<&Lane> {
        self.lanes
            .get(id)
            .ok_or_else(|| Error::data(format!("unknown lane id {id}")))
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.values()
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    fn crossing(&self, a: &str, b: &str) -> Option<CrossingInfo> {
        self.crossings.get(&(a.to_string(), b.to_string())).copied()
    }
}

fn build_crossing_cache(
    lanes: &BTreeMap<String, Lane>,
) -> BTreeMap<(String, String), CrossingInfo> {
    let mut cache = BTreeMap::new();
    let ids: Vec<&String> = lanes.keys().collect();
    for (i, a_id) in ids.iter().enumerate() {
        for b_id in ids.iter().skip(i + 1) {
            let a = &lanes[*a_id];
            let b = &lanes[*b_id];
            if let Some(info) = first_crossing(a, b) {
                cache.insert(((*a_id).clone(), (*b_id).clone()), info);
                cache.insert(
                    ((*b_id).clone(), (*a_id).clone()),
                    CrossingInfo {
                        s_a: info.s_b,
                        s_b: info.s_a,
                        point: info.point,
                    },
                );
            }
        }
    }
    cache
}

/// First geometric intersection of the two centerlines, ordered by arc
/// position along `a` (ties by arc position along `b`).
fn first_crossing(a: &Lane, b: &Lane) -> Option<CrossingInfo> {
    let mut best: Option<CrossingInfo> = None;
    for i in 0..a.centerline.len() - 1 {
        let (a0, a1) = (a.centerline[i], a.centerline[i + 1]);
        for j in 0..b.centerline.len() - 1 {
            let (b0, b1) = (b.centerline[j], b.centerline[j + 1]);
            if let Some((t, point)) = segment_intersection(a0, a1, b0, b1) {
                let s_a = a.cum_length[i] + t * (a.cum_length[i + 1] - a.cum_length[i]);
                let s_b = b.cum_length[j] + point.dist(b0);
                let candidate = CrossingInfo { s_a, s_b, point };
                let better = match &best {
                    None => true,
                    Some(cur) => (s_a, s_b) < (cur.s_a, cur.s_b),
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
    }
    best
}

/// Project a pose onto a lane: `s` is the arc position of the nearest
/// polyline point (per-segment orthogonal projection, clamped to segment
/// ends; ties resolved toward smaller `s`), `d` the signed perpendicular
/// offset to the winning segment's line (left of travel positive), and
/// `dtheta` the wrapped heading difference against that segment.
pub fn project(point: Vec2, heading: f64, lane: &Lane) -> FrenetCoord {
    let mut best_dist2 = f64::INFINITY;
    let mut best = (0.0, 0.0, 0.0); // (s, d, dtheta)
    for i in 0..lane.centerline.len() - 1 {
        let a = lane.centerline[i];
        let b = lane.centerline[i + 1];
        let len = lane.cum_length[i + 1] - lane.cum_length[i];
        let dir = b.sub(a).scale(1.0 / len);
        let rel = point.sub(a);
        let along = rel.dot(dir).clamp(0.0, len);
        let nearest = a.add(dir.scale(along));
        let offset = point.sub(nearest);
        let dist2 = offset.dot(offset);
        if dist2 < best_dist2 {
            best_dist2 = dist2;
            let d = dir.cross(rel);
            let dtheta = wrap_angle(heading - dir.y.atan2(dir.x));
            best = (lane.cum_length[i] + along, d, dtheta);
        }
    }
    FrenetCoord {
        lane_id: lane.id.clone(),
        s: best.0,
        d: best.1,
        dtheta: best.2,
    }
}

/// Distance from `point` to the nearest point of the lane polyline
/// (clamped, unlike the signed `d` of [`project`], which is measured to
/// the winning segment's infinite line).
pub fn polyline_distance(point: Vec2, lane: &Lane) -> f64 {
    let frenet = project(point, 0.0, lane);
    let (nearest, _) = lane.point_at(frenet.s);
    point.dist(nearest)
}

/// Successor-chain reachability: arc offset of each reached lane's origin
/// in `from`'s extended frame, up to `max_hops` successor hops.
fn reachable_offsets(map: &LaneMap, from: &Lane, max_hops: usize) -> Result<BTreeMap<String, f64>> {
    let mut offsets = BTreeMap::new();
    offsets.insert(from.id.clone(), 0.0);
    let mut queue = VecDeque::new();
    queue.push_back((from.id.clone(), 0usize, 0.0));
    while let Some((id, hops, offset)) = queue.pop_front() {
        if hops == max_hops {
            continue;
        }
        let lane = map.get(&id)?;
        let end = offset + lane.arc_length();
        for succ in &lane.successors {
            if !offsets.contains_key(succ) {
                offsets.insert(succ.clone(), end);
                queue.push_back((succ.clone(), hops + 1, end));
            }
        }
    }
    Ok(offsets)
}

fn directly_parallel(a: &Lane, b: &Lane) -> bool {
    let linked = |x: &Lane, y: &Lane| {
        x.left_parallel.as_deref() == Some(y.id.as_str())
            || x.right_parallel.as_deref() == Some(y.id.as_str())
    };
    linked(a, b) || linked(b, a)
}

/// Classify the relation between two lanes.
///
/// Precedence on ambiguous geometry: SameOrSuccessor > ParallelAdjacent >
/// Merging > Crossing. Merging meets at the start of the first common
/// successor lane; crossings meet at the first geometric intersection by
/// arc position along `a`.
pub fn classify_lane_pair(
    a: &Lane,
    b: &Lane,
    map: &LaneMap,
    max_hops: usize,
) -> Result<LaneRelation> {
    if a.id == b.id {
        return Ok(LaneRelation::plain(LaneRelationKind::SameOrSuccessor));
    }
    let reach_a = reachable_offsets(map, a, max_hops)?;
    let reach_b = reachable_offsets(map, b, max_hops)?;
    if reach_a.contains_key(&b.id) || reach_b.contains_key(&a.id) {
        return Ok(LaneRelation::plain(LaneRelationKind::SameOrSuccessor));
    }

    let one_hop_parallel = |x: &Lane, y: &Lane| -> Result<bool> {
        for succ in &x.successors {
            if directly_parallel(map.get(succ)?, y) {
                return Ok(true);
            }
        }
        Ok(false)
    };
    if directly_parallel(a, b) || one_hop_parallel(a, b)? || one_hop_parallel(b, a)? {
        return Ok(LaneRelation::plain(LaneRelationKind::ParallelAdjacent));
    }

    // Merging: distinct successor chains reaching a common lane. Pick the
    // common lane closest in combined chain distance (ties by id).
    let mut merge: Option<(f64, &String)> = None;
    for (id, off_a) in &reach_a {
        if *id == a.id || *id == b.id {
            continue;
        }
        if let Some(off_b) = reach_b.get(id) {
            let score = off_a + off_b;
            let better = match merge {
                None => true,
                Some((cur, cur_id)) => (score, id) < (cur, &cur_id.clone()),
            };
            if better {
                merge = Some((score, id));
            }
        }
    }
    if let Some((_, common)) = merge {
        let lane_c = map.get(common)?;
        return Ok(LaneRelation {
            kind: LaneRelationKind::Merging,
            meet_point: Some(lane_c.start_point()),
            s_meet_a: Some(reach_a[common]),
            s_meet_b: Some(reach_b[common]),
        });
    }

    if let Some(info) = map.crossing(&a.id, &b.id) {
        return Ok(LaneRelation {
            kind: LaneRelationKind::Crossing,
            meet_point: Some(info.point),
            s_meet_a: Some(info.s_a),
            s_meet_b: Some(info.s_b),
        });
    }

    Ok(LaneRelation::plain(LaneRelationKind::Unrelated))
}

/// Signed along-road distance from `from` to `to` under `relation`
/// (positive when `to` is ahead of `from` in travel direction).
///
/// SameOrSuccessor accumulates arc length along the successor chain.
/// ParallelAdjacent projects the other pose onto `from`'s lane and takes
/// the arc difference. Merging measures through the meet point
/// (tail-to-meet plus meet-to-head). Crossing measures from the tail's arc
/// position to the meet on its own lane.
pub fn path_distance(
    from: &FrenetCoord,
    to: &FrenetCoord,
    relation: &LaneRelation,
    map: &LaneMap,
) -> Result<f64> {
    match relation.kind {
        LaneRelationKind::Unrelated => Err(Error::data(
            "path distance undefined for unrelated lanes".to_string(),
        )),
        LaneRelationKind::SameOrSuccessor => {
            let lane_from = map.get(&from.lane_id)?;
            let lane_to = map.get(&to.lane_id)?;
            let forward = reachable_offsets(map, lane_from, CHAIN_SEARCH_HOPS)?;
            if let Some(offset) = forward.get(&to.lane_id) {
                return Ok(offset + to.s - from.s);
            }
            let backward = reachable_offsets(map, lane_to, CHAIN_SEARCH_HOPS)?;
            if let Some(offset) = backward.get(&from.lane_id) {
                return Ok(-(offset + from.s - to.s));
            }
            Err(Error::data(format!(
                "no successor chain between {} and {}",
                from.lane_id, to.lane_id
            )))
        }
        LaneRelationKind::ParallelAdjacent => {
            let lane_from = map.get(&from.lane_id)?;
            let lane_to = map.get(&to.lane_id)?;
            // Reconstruct the other pose from its lane-relative coordinates,
            // then project it onto this lane.
            let (base, dir) = lane_to.point_at(to.s);
            let left_normal = Vec2::new(-dir.y, dir.x);
            let world = base.add(left_normal.scale(to.d));
            let projected = project(world, 0.0, lane_from);
            Ok(projected.s - from.s)
        }
        LaneRelationKind::Merging => {
            let s_meet_a = relation
                .s_meet_a
                .ok_or_else(|| Error::data("merge relation without meet"))?;
            let s_meet_b = relation
                .s_meet_b
                .ok_or_else(|| Error::data("merge relation without meet"))?;
            Ok((s_meet_a - from.s) + (to.s - s_meet_b))
        }
        LaneRelationKind::Crossing => {
            let s_meet = relation
                .s_meet_a
                .ok_or_else(|| Error::data("crossing relation without meet"))?;
            Ok(s_meet - from.s)
        }
    }
}

/// Hop bound for re-deriving chain distances inside [`path_distance`];
/// generous so any relation found by `classify_lane_pair` resolves.
const CHAIN_SEARCH_HOPS: usize = 64;

// --- lane-map JSON format -------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct LaneMapJson {
    lanes: Vec<LaneJson>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LaneJson {
    id: String,
    centerline: Vec<[f64; 2]>,
    #[serde(default)]
    successors: Vec<String>,
    #[serde(default)]
    left_parallel: Option<String>,
    #[serde(default)]
    right_parallel: Option<String>,
    #[serde(default = "default_width")]
    width: f64,
}

fn default_width() -> f64 {
    DEFAULT_LANE_WIDTH
}

/// Parse the lane-map JSON format.
pub fn load_lane_map(text: &str) -> Result<LaneMap> {
    let raw: LaneMapJson =
        serde_json::from_str(text).map_err(|e| Error::data(format!("lane map JSON: {e}")))?;
    let mut lanes = Vec::with_capacity(raw.lanes.len());
    for lane in raw.lanes {
        lanes.push(Lane::new(
            lane.id,
            lane.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            lane.successors,
            lane.left_parallel,
            lane.right_parallel,
            lane.width,
        )?);
    }
    LaneMap::new(lanes)
}

/// Serialize a lane map back to its JSON format.
pub fn lane_map_to_json(map: &LaneMap) -> String {
    let raw = LaneMapJson {
        lanes: map
            .lanes()
            .map(|lane| LaneJson {
                id: lane.id.clone(),
                centerline: lane.centerline.iter().map(|p| [p.x, p.y]).collect(),
                successors: lane.successors.clone(),
                left_parallel: lane.left_parallel.clone(),
                right_parallel: lane.right_parallel.clone(),
                width: lane.width,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("lane map serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_lane(id: &str, from: Vec2, to: Vec2) -> Lane {
        Lane::new(id, vec![from, to], vec![], None, None, DEFAULT_LANE_WIDTH).unwrap()
    }

    fn lane_with(id: &str, points: Vec<Vec2>, successors: Vec<&str>) -> Lane {
        Lane::new(
            id,
            points,
            successors.into_iter().map(|s| s.to_string()).collect(),
            None,
            None,
            DEFAULT_LANE_WIDTH,
        )
        .unwrap()
    }

    /// Independent nearest-point oracle: dense sampling along the polyline
    /// followed by ternary refinement between the best sample's neighbors.
    fn sampling_oracle(points: &[Vec2], probe: Vec2, samples: usize) -> (f64, f64) {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum.last().unwrap() + w[1].dist(w[0]));
        }
        let total = *cum.last().unwrap();
        let eval = |s: f64| -> f64 {
            let s = s.clamp(0.0, total);
            let mut i = 0;
            while i + 2 < cum.len() && cum[i + 1] <= s {
                i += 1;
            }
            let t = (s - cum[i]) / (cum[i + 1] - cum[i]);
            let p = points[i].add(points[i + 1].sub(points[i]).scale(t));
            probe.dist(p)
        };
        let mut best_k = 0;
        let mut best_dist = f64::INFINITY;
        for k in 0..=samples {
            let d = eval(total * k as f64 / samples as f64);
            if d < best_dist {
                best_dist = d;
                best_k = k;
            }
        }
        let mut lo = total * best_k.saturating_sub(1) as f64 / samples as f64;
        let mut hi = total * (best_k + 1).min(samples) as f64 / samples as f64;
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if eval(m1) <= eval(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let s = 0.5 * (lo + hi);
        (s, eval(s))
    }

    #[test]
    fn project_axis_aligned() {
        let lane = straight_lane("l", Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let f = project(Vec2::new(3.0, 0.5), 0.0, &lane);
        assert!((f.s - 3.0).abs() < 1e-12);
        assert!((f.d - 0.5).abs() < 1e-12);
        assert!(f.dtheta.abs() < 1e-12);
    }

    #[test]
    fn project_clamps_before_start() {
        let lane = straight_lane("l", Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let f = project(Vec2::new(-2.0, 0.0), 0.0, &lane);
        assert_eq!(f.s, 0.0);
        assert_eq!(f.d, 0.0);
    }

    #[test]
    fn project_l_shape_matches_sampling_oracle() {
        let points = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
        ];
        let lane = lane_with("l", points.clone(), vec![]);
        for probe in [
            Vec2::new(9.5, 0.8),
            Vec2::new(10.4, -0.3),
            Vec2::new(11.0, 1.0),
            Vec2::new(8.0, 3.0),
        ] {
            let f = project(probe, 0.0, &lane);
            let (s_oracle, dist_oracle) = sampling_oracle(&points, probe, 10_000);
            assert!(
                (f.s - s_oracle).abs() < 1e-6,
                "probe ({}, {}): s {} vs oracle {s_oracle}",
                probe.x,
                probe.y,
                f.s
            );
            let (nearest, _) = lane.point_at(f.s);
            assert!((probe.dist(nearest) - dist_oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn project_minimizes_distance_on_random_polylines() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..8usize);
            let mut points = vec![Vec2::new(0.0, 0.0)];
            for _ in 1..=n {
                let last = *points.last().unwrap();
                // Forward-biased steps avoid degenerate self-overlap.
                points.push(last.add(Vec2::new(
                    rng.random_range(1.0..5.0),
                    rng.random_range(-2.0..2.0),
                )));
            }
            let lane = lane_with("l", points.clone(), vec![]);
            for _ in 0..10 {
                let probe = Vec2::new(rng.random_range(-2.0..20.0), rng.random_range(-6.0..6.0));
                let f = project(probe, 0.0, &lane);
                let (s_oracle, dist_oracle) = sampling_oracle(&points, probe, 10_000);
                let (nearest, _) = lane.point_at(f.s);
                let dist = probe.dist(nearest);
                assert!(
                    dist <= dist_oracle + 1e-9,
                    "projection distance {dist} worse than oracle {dist_oracle}"
                );
                // Equal-distance ties may differ in s; otherwise s agrees.
                if (f.s - s_oracle).abs() > 1e-6 {
                    let (other, _) = lane.point_at(s_oracle);
                    assert!(
                        (probe.dist(other) - dist).abs() < 1e-9,
                        "distinct s without a distance tie"
                    );
                }
            }
        }
    }

    #[test]
    fn project_rigid_transform_equivariance() {
        let points = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(7.0, 1.0),
            Vec2::new(12.0, 6.0),
        ];
        let lane = lane_with("l", points.clone(), vec![]);
        let probe = Vec2::new(6.0, 2.5);
        let heading = 0.3;
        let base = project(probe, heading, &lane);

        let angle = 1.1;
        let shift = Vec2::new(-4.0, 9.0);
        let moved: Vec<Vec2> = points.iter().map(|p| p.rotate(angle).add(shift)).collect();
        let lane2 = lane_with("l", moved, vec![]);
        let f2 = project(probe.rotate(angle).add(shift), heading + angle, &lane2);
        assert!((base.s - f2.s).abs() < 1e-9);
        assert!((base.d - f2.d).abs() < 1e-9);
        assert!((base.dtheta - f2.dtheta).abs() < 1e-9);
    }

    /// Two straight lanes feeding a common successor, plus the common lane.
    fn y_merge_map() -> LaneMap {
        let a = lane_with(
            "a",
            vec![Vec2::new(-20.0, 2.0), Vec2::new(0.0, 0.0)],
            vec!["c"],
        );
        let b = lane_with(
            "b",
            vec![Vec2::new(-20.0, -6.0), Vec2::new(0.0, 0.0)],
            vec!["c"],
        );
        let c = lane_with("c", vec![Vec2::new(0.0, 0.0), Vec2::new(30.0, 0.0)], vec![]);
        LaneMap::new(vec![a, b, c]).unwrap()
    }

    #[test]
    fn classify_identity() {
        let map = y_merge_map();
        let a = map.get("a").unwrap();
        let rel = classify_lane_pair(a, a, &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::SameOrSuccessor);
    }

    #[test]
    fn classify_y_merge() {
        let map = y_merge_map();
        let a = map.get("a").unwrap();
        let b = map.get("b").unwrap();
        let rel = classify_lane_pair(a, b, &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::Merging);
        assert_eq!(rel.meet_point, Some(Vec2::new(0.0, 0.0)));
        assert!((rel.s_meet_a.unwrap() - a.arc_length()).abs() < 1e-12);
        assert!((rel.s_meet_b.unwrap() - b.arc_length()).abs() < 1e-12);
    }

    #[test]
    fn classify_perpendicular_crossing() {
        let h = straight_lane("h", Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0));
        let v = straight_lane("v", Vec2::new(3.0, -10.0), Vec2::new(3.0, 10.0));
        let map = LaneMap::new(vec![h, v]).unwrap();
        let rel =
            classify_lane_pair(map.get("h").unwrap(), map.get("v").unwrap(), &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::Crossing);
        assert_eq!(rel.meet_point, Some(Vec2::new(3.0, 0.0)));
        assert!((rel.s_meet_a.unwrap() - 13.0).abs() < 1e-9);
        assert!((rel.s_meet_b.unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn classify_symmetric_kinds() {
        let map = y_merge_map();
        for (x, y) in [("a", "b"), ("a", "c"), ("b", "c")] {
            let fwd = classify_lane_pair(map.get(x).unwrap(), map.get(y).unwrap(), &map, 4)
                .unwrap()
                .kind;
            let rev = classify_lane_pair(map.get(y).unwrap(), map.get(x).unwrap(), &map, 4)
                .unwrap()
                .kind;
            assert_eq!(fwd, rev, "{x}/{y}");
        }
    }

    #[test]
    fn path_distance_same_lane() {
        let map = y_merge_map();
        let rel = LaneRelation::plain(LaneRelationKind::SameOrSuccessor);
        let from = FrenetCoord {
            lane_id: "c".into(),
            s: 2.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let to = FrenetCoord {
            lane_id: "c".into(),
            s: 7.0,
            d: -0.4,
            dtheta: 0.0,
        };
        assert!((path_distance(&from, &to, &rel, &map).unwrap() - 5.0).abs() < 1e-12);
        assert!((path_distance(&to, &from, &rel, &map).unwrap() + 5.0).abs() < 1e-12);
    }

    #[test]
    fn path_distance_through_merge_junction() {
        // Tail 4 m before the junction on `a`, head 6 m past it on `c`.
        let map = y_merge_map();
        let a = map.get("a").unwrap();
        let rel = classify_lane_pair(a, map.get("c").unwrap(), &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::SameOrSuccessor);
        let from = FrenetCoord {
            lane_id: "a".into(),
            s: a.arc_length() - 4.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let to = FrenetCoord {
            lane_id: "c".into(),
            s: 6.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let d = path_distance(&from, &to, &rel, &map).unwrap();
        assert!((d - 10.0).abs() < 1e-9);
        let back = path_distance(&to, &from, &rel, &map).unwrap();
        assert_eq!(back, -d);
    }

    #[test]
    fn path_distance_merging_branches() {
        let map = y_merge_map();
        let rel =
            classify_lane_pair(map.get("a").unwrap(), map.get("b").unwrap(), &map, 4).unwrap();
        let from = FrenetCoord {
            lane_id: "a".into(),
            s: map.get("a").unwrap().arc_length() - 4.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let to = FrenetCoord {
            lane_id: "b".into(),
            s: map.get("b").unwrap().arc_length() - 9.0,
            d: 0.0,
            dtheta: 0.0,
        };
        // `to` is 5 m farther from the meet: behind by 5 m.
        let d = path_distance(&from, &to, &rel, &map).unwrap();
        assert!((d + 5.0).abs() < 1e-9);
    }

    #[test]
    fn path_distance_crossing_tail_to_meet() {
        let h = straight_lane("h", Vec2::new(0.0, 0.0), Vec2::new(20.0, 0.0));
        let v = straight_lane("v", Vec2::new(12.0, -10.0), Vec2::new(12.0, 10.0));
        let map = LaneMap::new(vec![h, v]).unwrap();
        let rel =
            classify_lane_pair(map.get("h").unwrap(), map.get("v").unwrap(), &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::Crossing);
        let from = FrenetCoord {
            lane_id: "h".into(),
            s: 5.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let to = FrenetCoord {
            lane_id: "v".into(),
            s: 1.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let d = path_distance(&from, &to, &rel, &map).unwrap();
        assert!((d - 7.0).abs() < 1e-9);
    }

    #[test]
    fn path_distance_parallel_antisymmetric_for_true_parallels() {
        let l1 = Lane::new(
            "l1",
            vec![Vec2::new(0.0, 3.5), Vec2::new(40.0, 3.5)],
            vec![],
            None,
            Some("l2".to_string()),
            DEFAULT_LANE_WIDTH,
        )
        .unwrap();
        let l2 = Lane::new(
            "l2",
            vec![Vec2::new(0.0, 0.0), Vec2::new(40.0, 0.0)],
            vec![],
            Some("l1".to_string()),
            None,
            DEFAULT_LANE_WIDTH,
        )
        .unwrap();
        let map = LaneMap::new(vec![l1, l2]).unwrap();
        let rel =
            classify_lane_pair(map.get("l1").unwrap(), map.get("l2").unwrap(), &map, 4).unwrap();
        assert_eq!(rel.kind, LaneRelationKind::ParallelAdjacent);
        let from = FrenetCoord {
            lane_id: "l1".into(),
            s: 4.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let to = FrenetCoord {
            lane_id: "l2".into(),
            s: 6.0,
            d: 0.0,
            dtheta: 0.0,
        };
        let fwd = path_distance(&from, &to, &rel, &map).unwrap();
        let rev = path_distance(&to, &from, &rel, &map).unwrap();
        assert!((fwd - 2.0).abs() < 1e-9);
        assert!((fwd + rev).abs() < 1e-9);
    }

    #[test]
    fn load_single_lane() {
        let json = r#"{ "lanes": [ { "id": "a", "centerline": [[0,0],[10,0]] } ] }"#;
        let map = load_lane_map(json).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map.get("a").unwrap().width, DEFAULT_LANE_WIDTH);
    }

    #[test]
    fn load_dangling_successor_names_id() {
        let json = r#"{ "lanes": [ { "id": "a", "centerline": [[0,0],[10,0]], "successors": ["ghost"] } ] }"#;
        let err = load_lane_map(json).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("ghost"), "error should name the id: {msg}");
    }

    #[test]
    fn load_rejects_short_centerline_and_duplicates() {
        let short = r#"{ "lanes": [ { "id": "a", "centerline": [[0,0]] } ] }"#;
        assert!(load_lane_map(short).is_err());
        let dup = r#"{ "lanes": [
            { "id": "a", "centerline": [[0,0],[10,0]] },
            { "id": "a", "centerline": [[0,5],[10,5]] } ] }"#;
        assert!(load_lane_map(dup).is_err());
    }

    #[test]
    fn roundabout_fixture_relation_table() {
        // Quarter arcs r1 -> r2 around the origin, an entry lane e merging
        // into r2, and an unrelated road w crossing the entry.
        let arc = |id: &str, a0: f64, a1: f64, succ: Vec<&str>| {
            let points: Vec<Vec2> = (0..=16)
                .map(|k| {
                    let t = a0 + (a1 - a0) * k as f64 / 16.0;
                    Vec2::new(10.0 * t.cos(), 10.0 * t.sin())
                })
                .collect();
            lane_with(id, points, succ)
        };
        let r1 = arc("r1", -core::f64::consts::FRAC_PI_2, 0.0, vec!["r2"]);
        let r2 = arc("r2", 0.0, core::f64::consts::FRAC_PI_2, vec![]);
        let e = lane_with(
            "e",
            vec![Vec2::new(20.0, -15.0), Vec2::new(10.0, 0.0)],
            vec!["r2"],
        );
        let w = lane_with(
            "w",
            vec![Vec2::new(-20.0, -12.0), Vec2::new(20.0, -12.0)],
            vec![],
        );
        let map = LaneMap::new(vec![r1, r2, e, w]).unwrap();

        use LaneRelationKind::*;
        let expected = [
            ("e", "r1", Merging),
            ("e", "r2", SameOrSuccessor),
            ("e", "w", Crossing),
            ("r1", "r2", SameOrSuccessor),
            ("r1", "w", Unrelated),
            ("r2", "w", Unrelated),
        ];
        for (x, y, kind) in expected {
            let rel =
                classify_lane_pair(map.get(x).unwrap(), map.get(y).unwrap(), &map, 4).unwrap();
            assert_eq!(rel.kind, kind, "pair ({x}, {y})");
        }
    }

    #[test]
    fn classify_rigid_transform_invariance() {
        let map = y_merge_map();
        let angle = 0.8;
        let shift = Vec2::new(100.0, -40.0);
        let moved: Vec<Lane> = map
            .lanes()
            .map(|lane| {
                Lane::new(
                    lane.id.clone(),
                    lane.centerline
                        .iter()
                        .map(|p| p.rotate(angle).add(shift))
                        .collect(),
                    lane.successors.clone(),
                    lane.left_parallel.clone(),
                    lane.right_parallel.clone(),
                    lane.width,
                )
                .unwrap()
            })
            .collect();
        let map2 = LaneMap::new(moved).unwrap();
        for (x, y) in [("a", "b"), ("a", "c"), ("b", "c")] {
            let r1 = classify_lane_pair(map.get(x).unwrap(), map.get(y).unwrap(), &map, 4).unwrap();
            let r2 =
                classify_lane_pair(map2.get(x).unwrap(), map2.get(y).unwrap(), &map2, 4).unwrap();
            assert_eq!(r1.kind, r2.kind);
            if let (Some(sa1), Some(sa2)) = (r1.s_meet_a, r2.s_meet_a) {
                assert!((sa1 - sa2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lane_map_json_roundtrip() {
        let map = y_merge_map();
        let json = lane_map_to_json(&map);
        let map2 = load_lane_map(&json).unwrap();
        assert_eq!(map, map2);
    }
}
