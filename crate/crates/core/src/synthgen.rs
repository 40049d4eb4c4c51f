//! Deterministic synthetic traffic: car-following dynamics along the
//! artifact's lane maps, producing recordings in the ingest CSV format.
//!
//! The front vehicle of a platoon drives a piecewise-constant acceleration
//! schedule; followers react through a classical car-following law whose
//! acceleration depends on the gap and relative speed to their leader, so
//! future acceleration is a function of exactly the relational quantities
//! the scene graph encodes. Merge and crossing templates route a second
//! stream through the meet geometry, coupling streams across lanes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::ingest::{AgentClass, EntityState, Frame, Recording, FRAME_DT_S, FRAME_STEP_MS};
use crate::lanemap::{Lane, LaneMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTemplate {
    StraightFollow,
    ParallelLanes,
    Merge,
    Crossing,
}

impl ScenarioTemplate {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioTemplate::StraightFollow => "straight_follow",
            ScenarioTemplate::ParallelLanes => "parallel_lanes",
            ScenarioTemplate::Merge => "merge",
            ScenarioTemplate::Crossing => "crossing",
        }
    }
}

/// Intelligent-driver-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdmParams {
    /// Desired free-road speed, m/s.
    pub v0: f64,
    /// Desired time headway, s.
    pub headway: f64,
    /// Maximum acceleration, m/s^2.
    pub a_max: f64,
    /// Comfortable deceleration, m/s^2.
    pub b_comfort: f64,
    /// Jam distance (minimum bumper gap), m.
    pub s0: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 12.0,
            headway: 1.2,
            a_max: 2.0,
            b_comfort: 2.5,
            s0: 2.5,
        }
    }
}

/// IDM acceleration given own speed, bumper gap and closing speed
/// (`dv = v - v_leader`).
pub fn idm_acceleration(p: &IdmParams, v: f64, gap: f64, dv: f64) -> f64 {
    let gap = gap.max(0.1);
    let s_star = p.s0 + v * p.headway + v * dv / (2.0 * (p.a_max * p.b_comfort).sqrt());
    let ratio = v / p.v0;
    p.a_max * (1.0 - ratio * ratio * ratio * ratio - (s_star.max(0.0) / gap) * (s_star.max(0.0) / gap))
}

/// Free-road IDM acceleration (no leader).
pub fn idm_free_acceleration(p: &IdmParams, v: f64) -> f64 {
    let ratio = v / p.v0;
    p.a_max * (1.0 - ratio * ratio * ratio * ratio)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioSpec {
    pub template: ScenarioTemplate,
    pub n_vehicles: usize,
    pub duration_s: f64,
    pub idm: IdmParams,
    /// Standard deviation of the observation noise added to emitted
    /// speeds (then low-passed), m/s.
    pub noise_std: f64,
    /// Half-width of the per-follower desired-speed factor range around
    /// the spec's v0 (0 disables driver heterogeneity).
    pub speed_heterogeneity: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(template: ScenarioTemplate, n_vehicles: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            template,
            n_vehicles,
            duration_s: DEFAULT_DURATION_S,
            idm: IdmParams::default(),
            noise_std: DEFAULT_NOISE_STD,
            speed_heterogeneity: DEFAULT_SPEED_HETEROGENEITY,
            seed,
        }
    }
}

pub const DEFAULT_DURATION_S: f64 = 3.0;
pub const DEFAULT_NOISE_STD: f64 = 0.10;
pub const DEFAULT_SPEED_HETEROGENEITY: f64 = 0.20;
/// Low-pass weight applied to the noisy emitted speeds.
pub const EMIT_SMOOTHING_ALPHA: f64 = 0.5;

// --- template geometry ------------------------------------------------------

fn straight(id: &str, from: Vec2, to: Vec2, successors: Vec<String>) -> Lane {
    Lane::new(id, alloc::vec![from, to], successors, None, None, 3.5)
        .expect("template lanes are valid")
}

/// The fixed lane map of a template.
pub fn template_lane_map(template: ScenarioTemplate) -> LaneMap {
    let lanes = match template {
        ScenarioTemplate::StraightFollow => alloc::vec![straight(
            "main",
            Vec2::new(0.0, 0.0),
            Vec2::new(400.0, 0.0),
            alloc::vec![]
        )],
        ScenarioTemplate::ParallelLanes => {
            let mut left = straight("left", Vec2::new(0.0, 3.5), Vec2::new(400.0, 3.5), alloc::vec![]);
            left.right_parallel = Some("right".to_string());
            let mut right = straight("right", Vec2::new(0.0, 0.0), Vec2::new(400.0, 0.0), alloc::vec![]);
            right.left_parallel = Some("left".to_string());
            alloc::vec![left, right]
        }
        ScenarioTemplate::Merge => alloc::vec![
            straight(
                "branch_a",
                Vec2::new(0.0, 9.0),
                Vec2::new(150.0, 0.0),
                alloc::vec!["common".to_string()]
            ),
            straight(
                "branch_b",
                Vec2::new(0.0, -9.0),
                Vec2::new(150.0, 0.0),
                alloc::vec!["common".to_string()]
            ),
            straight(
                "common",
                Vec2::new(150.0, 0.0),
                Vec2::new(450.0, 0.0),
                alloc::vec![]
            ),
        ],
        ScenarioTemplate::Crossing => alloc::vec![
            straight("ew", Vec2::new(0.0, 0.0), Vec2::new(400.0, 0.0), alloc::vec![]),
            straight("ns", Vec2::new(200.0, -150.0), Vec2::new(200.0, 250.0), alloc::vec![]),
        ],
    };
    LaneMap::new(lanes).expect("template maps are valid")
}

/// A drivable chain of lanes with a single arc coordinate.
#[derive(Debug, Clone)]
struct Route {
    lane_ids: Vec<String>,
    /// Arc offset of each lane's origin within the route.
    offsets: Vec<f64>,
    total: f64,
    /// Route arc position of the stream's conflict point, if any.
    meet_s: Option<f64>,
}

impl Route {
    fn build(map: &LaneMap, lane_ids: &[&str], meet_s: Option<f64>) -> Route {
        let mut offsets = Vec::with_capacity(lane_ids.len());
        let mut total = 0.0;
        for id in lane_ids {
            offsets.push(total);
            total += map.get(id).expect("route lanes exist").arc_length();
        }
        Route {
            lane_ids: lane_ids.iter().map(|s| s.to_string()).collect(),
            offsets,
            total,
            meet_s,
        }
    }

    fn pose_at(&self, map: &LaneMap, s: f64) -> (Vec2, f64) {
        let s = s.clamp(0.0, self.total);
        let mut lane_idx = 0;
        while lane_idx + 1 < self.lane_ids.len() && self.offsets[lane_idx + 1] <= s {
            lane_idx += 1;
        }
        let lane = map.get(&self.lane_ids[lane_idx]).expect("route lanes exist");
        let (point, dir) = lane.point_at(s - self.offsets[lane_idx]);
        (point, dir.y.atan2(dir.x))
    }
}

#[derive(Debug, Clone)]
enum Behavior {
    /// Piecewise-constant acceleration segments: (end time s, accel).
    Scheduled(Vec<(f64, f64)>),
    /// Car following behind whatever is ahead on the same stream group.
    Following,
    /// Car following plus yielding to the priority stream at the meet.
    Yielding,
}

#[derive(Debug, Clone)]
struct Vehicle {
    track_id: i64,
    route: usize,
    /// Streams sharing a conflict group follow each other across routes.
    follow_group: usize,
    s: f64,
    v: f64,
    /// Personal desired free-road speed; only observable through behavior.
    desired_speed: f64,
    length: f64,
    width: f64,
    class: AgentClass,
    behavior: Behavior,
}

fn scheduled_accel(schedule: &[(f64, f64)], t: f64) -> f64 {
    for &(end, accel) in schedule {
        if t < end {
            return accel;
        }
    }
    0.0
}

fn make_schedule(rng: &mut ChaCha8Rng, idm: &IdmParams, duration: f64) -> Vec<(f64, f64)> {
    let mut schedule = Vec::new();
    let mut t = 0.0;
    let mut sign = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
    while t < duration + 1.5 {
        t += rng.random_range(1.5..3.0);
        let accel = match rng.random_range(0..8u32) {
            0 => 0.0, // occasional cruise segment
            _ => {
                sign * rng.random_range(0.5..1.0)
                    * if sign > 0.0 { idm.a_max } else { idm.b_comfort }
            }
        };
        sign = -sign;
        schedule.push((t, accel));
    }
    schedule
}

fn vehicle_dims(rng: &mut ChaCha8Rng) -> (f64, f64, AgentClass) {
    if rng.random::<f64>() < 0.15 {
        (
            rng.random_range(8.0..10.0),
            rng.random_range(2.4..2.6),
            AgentClass::Truck,
        )
    } else {
        (
            rng.random_range(4.2..4.9),
            rng.random_range(1.8..2.1),
            AgentClass::Car,
        )
    }
}

/// Meet-relative arc position (negative while approaching the meet).
fn meet_coord(routes: &[Route], vehicle: &Vehicle) -> f64 {
    match routes[vehicle.route].meet_s {
        Some(meet) => vehicle.s - meet,
        None => vehicle.s,
    }
}

/// Spawn a platoon back-to-front along a route in meet coordinates.
fn spawn_platoon(
    rng: &mut ChaCha8Rng,
    idm: &IdmParams,
    heterogeneity: f64,
    route: usize,
    follow_group: usize,
    meet_s: f64,
    front_m: f64,
    count: usize,
    next_track: &mut i64,
    front_scheduled: bool,
    duration: f64,
    yielding: bool,
) -> Vec<Vehicle> {
    let mut vehicles = Vec::with_capacity(count);
    let mut m = front_m;
    for k in 0..count {
        let (length, width, class) = vehicle_dims(rng);
        let desired_speed = if k == 0 || heterogeneity == 0.0 {
            idm.v0
        } else {
            idm.v0 * rng.random_range(1.0 - heterogeneity..1.0 + heterogeneity)
        };
        let v = desired_speed * rng.random_range(0.5..1.1);
        let behavior = if k == 0 {
            if yielding {
                Behavior::Yielding
            } else if front_scheduled {
                Behavior::Scheduled(make_schedule(rng, idm, duration))
            } else {
                Behavior::Following
            }
        } else if yielding {
            Behavior::Yielding
        } else {
            Behavior::Following
        };
        vehicles.push(Vehicle {
            track_id: *next_track,
            route,
            follow_group,
            s: meet_s + m,
            v,
            desired_speed,
            length,
            width,
            class,
            behavior,
        });
        *next_track += 1;
        m -= length + idm.s0 + idm.headway * v + rng.random_range(1.0..12.0);
    }
    vehicles
}

struct Scene {
    map: LaneMap,
    routes: Vec<Route>,
    vehicles: Vec<Vehicle>,
    /// Route indices of the priority stream a yielding stream must watch.
    priority_routes: Vec<usize>,
}

fn build_scene(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<Scene> {
    if spec.n_vehicles == 0 {
        return Err(Error::data("scenario needs at least one vehicle"));
    }
    let map = template_lane_map(spec.template);
    let idm = &spec.idm;
    let mut next_track = 1i64;
    let n = spec.n_vehicles;

    let (routes, vehicles) = match spec.template {
        ScenarioTemplate::StraightFollow => {
            let routes = alloc::vec![Route::build(&map, &["main"], None)];
            let front = rng.random_range(150.0..210.0);
            let vehicles = spawn_platoon(
                rng, idm, spec.speed_heterogeneity, 0, 0, 0.0, front, n, &mut next_track,
                n >= 2, spec.duration_s, false,
            );
            (routes, vehicles)
        }
        ScenarioTemplate::ParallelLanes => {
            let routes = alloc::vec![
                Route::build(&map, &["left"], None),
                Route::build(&map, &["right"], None),
            ];
            let left_count = n.div_ceil(2);
            let right_count = n - left_count;
            let left_front = rng.random_range(150.0..210.0);
            let mut vehicles = spawn_platoon(
                rng,
                idm,
                spec.speed_heterogeneity,
                0,
                0,
                0.0,
                left_front,
                left_count,
                &mut next_track,
                left_count >= 2,
                spec.duration_s,
                false,
            );
            if right_count > 0 {
                let right_front = rng.random_range(150.0..210.0);
                vehicles.extend(spawn_platoon(
                    rng,
                    idm,
                    spec.speed_heterogeneity,
                    1,
                    1,
                    0.0,
                    right_front,
                    right_count,
                    &mut next_track,
                    right_count >= 2,
                    spec.duration_s,
                    false,
                ));
            }
            (routes, vehicles)
        }
        ScenarioTemplate::Merge => {
            let routes = alloc::vec![
                Route::build(&map, &["branch_a", "common"], None),
                Route::build(&map, &["branch_b", "common"], None),
            ];
            // Both streams share one follow group: ordering is by distance
            // to the junction, which couples the branches.
            let meet_a = map.get("branch_a").unwrap().arc_length();
            let meet_b = map.get("branch_b").unwrap().arc_length();
            let a_count = n.div_ceil(2);
            let b_count = n - a_count;
            let mut routes = routes;
            routes[0].meet_s = Some(meet_a);
            routes[1].meet_s = Some(meet_b);
            let a_front = rng.random_range(-30.0..20.0);
            let mut vehicles = spawn_platoon(
                rng,
                idm,
                spec.speed_heterogeneity,
                0,
                0,
                meet_a,
                a_front,
                a_count,
                &mut next_track,
                a_count >= 2 || n >= 2,
                spec.duration_s,
                false,
            );
            if b_count > 0 {
                let b_front = rng.random_range(-95.0..-40.0);
                vehicles.extend(spawn_platoon(
                    rng,
                    idm,
                    spec.speed_heterogeneity,
                    1,
                    0,
                    meet_b,
                    b_front,
                    b_count,
                    &mut next_track,
                    false,
                    spec.duration_s,
                    false,
                ));
            }
            (routes, vehicles)
        }
        ScenarioTemplate::Crossing => {
            let mut routes = alloc::vec![
                Route::build(&map, &["ew"], None),
                Route::build(&map, &["ns"], None),
            ];
            routes[0].meet_s = Some(200.0);
            routes[1].meet_s = Some(150.0);
            let ew_count = n.div_ceil(2);
            let ns_count = n - ew_count;
            let ew_front = rng.random_range(-60.0..10.0);
            let mut vehicles = spawn_platoon(
                rng,
                idm,
                spec.speed_heterogeneity,
                0,
                0,
                200.0,
                ew_front,
                ew_count,
                &mut next_track,
                ew_count >= 2,
                spec.duration_s,
                false,
            );
            if ns_count > 0 {
                let ns_front = rng.random_range(-60.0..-18.0);
                vehicles.extend(spawn_platoon(
                    rng,
                    idm,
                    spec.speed_heterogeneity,
                    1,
                    1,
                    150.0,
                    ns_front,
                    ns_count,
                    &mut next_track,
                    false,
                    spec.duration_s,
                    true,
                ));
            }
            (routes, vehicles)
        }
    };

    // Reject specs whose spawn layout already collides on a shared route
    // (cross-branch proximity in meet coordinates is legitimate zipper
    // traffic and handled by the dynamics).
    let mut by_route: BTreeMap<usize, Vec<&Vehicle>> = BTreeMap::new();
    for v in &vehicles {
        by_route.entry(v.route).or_default().push(v);
    }
    for group in by_route.values() {
        let mut sorted: Vec<&&Vehicle> = group.iter().collect();
        sorted.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
        for pair in sorted.windows(2) {
            let gap = pair[1].s - pair[0].s - pair[1].length;
            if gap < idm.s0 {
                return Err(Error::data(format!(
                    "initial gap {gap:.2} m is below the jam distance {}",
                    idm.s0
                )));
            }
        }
    }
    if vehicles.iter().any(|v| v.s < 0.0 || v.s > routes[v.route].total) {
        return Err(Error::data("spawn layout leaves the template geometry"));
    }

    Ok(Scene {
        map,
        routes,
        vehicles,
        priority_routes: alloc::vec![0],
    })
}

/// Leader of `i` within its follow group: the nearest vehicle ahead in
/// meet coordinates.
fn find_leader(scene: &Scene, i: usize) -> Option<usize> {
    let me = &scene.vehicles[i];
    let my_m = meet_coord(&scene.routes, me);
    let mut best: Option<(f64, usize)> = None;
    for (j, other) in scene.vehicles.iter().enumerate() {
        if j == i || other.follow_group != me.follow_group {
            continue;
        }
        let m = meet_coord(&scene.routes, other);
        if m > my_m {
            let better = match best {
                None => true,
                Some((cur, _)) => m < cur,
            };
            if better {
                best = Some((m, j));
            }
        }
    }
    best.map(|(_, j)| j)
}

/// Yield decision for a crossing stream: brake for the meet when a
/// priority vehicle will occupy it around our own arrival time.
fn crossing_conflict(scene: &Scene, idm: &IdmParams, me: &Vehicle) -> bool {
    let my_m = meet_coord(&scene.routes, me);
    if my_m > -1.0 {
        return false; // already at or past the meet
    }
    let my_time = -my_m / me.v.max(0.5);
    for other in &scene.vehicles {
        if !scene.priority_routes.contains(&other.route) {
            continue;
        }
        let m = meet_coord(&scene.routes, other);
        if m > -2.0 && m < idm.s0 + other.length {
            return true; // priority vehicle occupies the conflict area
        }
        if m < 0.0 {
            let their_time = -m / other.v.max(0.5);
            if their_time < my_time + 2.5 {
                return true;
            }
        }
    }
    false
}

fn acceleration(scene: &Scene, idm: &IdmParams, i: usize, t: f64) -> f64 {
    let me = &scene.vehicles[i];
    let my_idm = IdmParams {
        v0: me.desired_speed,
        ..*idm
    };
    let car_following = || -> f64 {
        match find_leader(scene, i) {
            Some(j) => {
                let leader = &scene.vehicles[j];
                let gap = meet_coord(&scene.routes, leader) - meet_coord(&scene.routes, me)
                    - leader.length;
                idm_acceleration(&my_idm, me.v, gap, me.v - leader.v)
            }
            None => idm_free_acceleration(&my_idm, me.v),
        }
    };
    match &me.behavior {
        Behavior::Scheduled(schedule) => {
            let a = scheduled_accel(schedule, t);
            // a scheduled front vehicle still never rams a slower one ahead
            car_following().min(a)
        }
        Behavior::Following => car_following(),
        Behavior::Yielding => {
            let mut a = car_following();
            if crossing_conflict(scene, idm, me) {
                // virtual stopped obstacle just before the meet
                let stop_gap = -meet_coord(&scene.routes, me) - idm.s0;
                a = a.min(idm_acceleration(&my_idm, me.v, stop_gap, me.v));
            }
            a
        }
    }
}

/// Integrate the scenario and emit a recording plus its lane map.
///
/// Per frame all accelerations are computed from the shared state, then
/// speeds and positions update semi-implicitly (v then s). Observation
/// noise is added to the emitted speeds afterwards and low-passed per
/// track; positions stay exact.
pub fn generate(spec: &ScenarioSpec) -> Result<(Recording, LaneMap)> {
    if spec.duration_s <= 0.0 {
        return Err(Error::data("duration must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scene = build_scene(spec, &mut rng)?;
    let idm = &spec.idm;
    let frame_count = (spec.duration_s / FRAME_DT_S).round() as usize;

    // true trajectories: per frame, per vehicle (s, v)
    let mut trajectory: Vec<Vec<(f64, f64)>> = Vec::with_capacity(frame_count);
    for step in 0..frame_count {
        let t = step as f64 * FRAME_DT_S;
        trajectory.push(scene.vehicles.iter().map(|v| (v.s, v.v)).collect());

        let accels: Vec<f64> = (0..scene.vehicles.len())
            .map(|i| acceleration(&scene, idm, i, t))
            .collect();
        let speed_cap = idm.v0 * 1.3;
        for (i, a) in accels.iter().enumerate() {
            let v = &mut scene.vehicles[i];
            v.v = (v.v + a * FRAME_DT_S).clamp(0.0, speed_cap);
            v.s += v.v * FRAME_DT_S;
        }
        // hard safety: never close a gap below a bumper's width
        for i in 0..scene.vehicles.len() {
            if let Some(j) = find_leader(&scene, i) {
                let leader_m = meet_coord(&scene.routes, &scene.vehicles[j]);
                let leader_len = scene.vehicles[j].length;
                let leader_v = scene.vehicles[j].v;
                let me = &mut scene.vehicles[i];
                let my_m = match scene.routes[me.route].meet_s {
                    Some(meet) => me.s - meet,
                    None => me.s,
                };
                let gap = leader_m - my_m - leader_len;
                if gap < 0.5 {
                    me.v = me.v.min(leader_v * 0.8);
                }
            }
        }
    }

    // emitted speeds: true speed + noise, low-passed per track; a
    // noise-free spec emits the exact speeds
    let mut emitted: Vec<Vec<f64>> = Vec::with_capacity(frame_count);
    let mut smoothed_prev: Vec<Option<f64>> = alloc::vec![None; scene.vehicles.len()];
    for frame in &trajectory {
        let mut row = Vec::with_capacity(frame.len());
        for (i, &(_, v)) in frame.iter().enumerate() {
            if spec.noise_std == 0.0 {
                row.push(v);
                continue;
            }
            let noisy = (v + gaussian(&mut rng) * spec.noise_std).max(0.0);
            let s = match smoothed_prev[i] {
                Some(prev) => EMIT_SMOOTHING_ALPHA * noisy + (1.0 - EMIT_SMOOTHING_ALPHA) * prev,
                None => noisy,
            };
            smoothed_prev[i] = Some(s);
            row.push(s);
        }
        emitted.push(row);
    }

    let mut frames = Vec::with_capacity(frame_count);
    for (step, states) in trajectory.iter().enumerate() {
        let mut entities = Vec::with_capacity(scene.vehicles.len());
        for (i, vehicle) in scene.vehicles.iter().enumerate() {
            let (s, _) = states[i];
            let (point, heading) = scene.routes[vehicle.route].pose_at(&scene.map, s);
            entities.push(EntityState {
                track_id: vehicle.track_id,
                frame_index: step,
                timestamp_ms: step as i64 * FRAME_STEP_MS,
                class: vehicle.class,
                x: point.x,
                y: point.y,
                heading,
                length: vehicle.length,
                width: vehicle.width,
                speed: emitted[step][i],
                motion_state: None,
            });
        }
        entities.sort_by_key(|e| e.track_id);
        frames.push(Frame {
            frame_index: step,
            timestamp_ms: step as i64 * FRAME_STEP_MS,
            entities,
        });
    }

    Ok((
        Recording {
            id: format!("{}_{:08x}", spec.template.as_str(), spec.seed),
            frequency_hz: 10.0,
            frames,
            ego_id: None,
        },
        scene.map,
    ))
}

/// Box-Muller standard normal draw.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

// --- benchmark --------------------------------------------------------------

pub const BENCHMARK_RECORDINGS: usize = 120;
/// Template mix of the default benchmark.
pub const BENCHMARK_MIX: [(ScenarioTemplate, usize); 4] = [
    (ScenarioTemplate::StraightFollow, 40),
    (ScenarioTemplate::ParallelLanes, 20),
    (ScenarioTemplate::Merge, 20),
    (ScenarioTemplate::Crossing, 40),
];
pub const LABEL_DELTA_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestRecording {
    pub id: String,
    pub template: ScenarioTemplate,
    pub seed: u64,
    pub n_vehicles: usize,
    pub frames: usize,
    pub labeled_frames: usize,
    pub lane_map: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub label_delta_frames: usize,
    pub template_counts: BTreeMap<String, usize>,
    pub total_labeled_frames: usize,
    pub recordings: Vec<ManifestRecording>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Manifest> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("manifest JSON: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEntry {
    pub spec: ScenarioSpec,
    pub recording: Recording,
    pub lane_map_id: String,
}

/// A generated dataset: recordings, the shared per-template lane maps and
/// the manifest describing them.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub entries: Vec<BenchmarkEntry>,
    pub lane_maps: BTreeMap<String, LaneMap>,
    pub manifest: Manifest,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Generate the default fixed-size benchmark for a seed.
pub fn make_benchmark(seed: u64) -> Result<Benchmark> {
    make_benchmark_with_mix(seed, &BENCHMARK_MIX)
}

/// Generate a benchmark with an explicit per-template recording mix.
pub fn make_benchmark_with_mix(
    seed: u64,
    mix: &[(ScenarioTemplate, usize)],
) -> Result<Benchmark> {
    let mut entries = Vec::new();
    let mut lane_maps = BTreeMap::new();
    let mut recordings_manifest = Vec::new();
    let mut template_counts = BTreeMap::new();
    let mut total_labeled = 0usize;

    let mut index = 0usize;
    for &(template, count) in mix {
        lane_maps
            .entry(template.as_str().to_string())
            .or_insert_with(|| template_lane_map(template));
        for _ in 0..count {
            let rec_seed = splitmix64(seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let mut pick = ChaCha8Rng::seed_from_u64(rec_seed ^ 0x5eed);
            let n_vehicles = match template {
                ScenarioTemplate::StraightFollow => pick.random_range(2..=4usize),
                _ => pick.random_range(3..=4usize),
            };
            let mut spec = ScenarioSpec::new(template, n_vehicles, rec_seed);
            spec.seed = rec_seed;
            let (mut recording, _) = generate(&spec)?;
            recording.id = format!("rec{index:03}_{}", template.as_str());
            let labeled = crate::ingest::compute_labels(&recording, LABEL_DELTA_FRAMES)
                .iter()
                .map(|l| l.frame_index)
                .collect::<alloc::collections::BTreeSet<_>>()
                .len();
            total_labeled += labeled;
            *template_counts
                .entry(template.as_str().to_string())
                .or_insert(0usize) += 1;
            recordings_manifest.push(ManifestRecording {
                id: recording.id.clone(),
                template,
                seed: rec_seed,
                n_vehicles,
                frames: recording.frames.len(),
                labeled_frames: labeled,
                lane_map: template.as_str().to_string(),
            });
            entries.push(BenchmarkEntry {
                spec,
                recording,
                lane_map_id: template.as_str().to_string(),
            });
            index += 1;
        }
    }

    Ok(Benchmark {
        entries,
        lane_maps,
        manifest: Manifest {
            seed,
            label_delta_frames: LABEL_DELTA_FRAMES,
            template_counts,
            total_labeled_frames: total_labeled,
            recordings: recordings_manifest,
        },
    })
}
