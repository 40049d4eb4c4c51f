//! Scene-graph construction: entities become nodes with class/speed
//! features, lane-relation pairs become directed typed edges carrying a
//! probability and a signed along-road distance, and graphs export to COO
//! matrices for the models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use crate::error::{Error, Result};
use crate::ingest::{AgentClass, EntityState, Frame, AGENT_CLASS_COUNT};
use crate::lanemap::{
    classify_lane_pair, path_distance, polyline_distance, project, FrenetCoord, LaneMap,
    LaneRelationKind,
};

/// Gating and kernel parameters for lane assignment plus edge pruning
/// bounds for graph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphParams {
    /// Gate: maximum |lateral offset| for a lane candidate, meters.
    pub max_lateral: f64,
    /// Gate: maximum |heading difference|, radians.
    pub max_heading: f64,
    /// Lateral kernel width, meters.
    pub sigma_d: f64,
    /// Angular kernel width, radians.
    pub sigma_theta: f64,
    /// Successor-chain search depth for lane relations.
    pub max_hops: usize,
    /// Edges with |distance| above this are dropped, meters. Also the
    /// distance normalization for COO edge features.
    pub distance_cap: f64,
    /// Edges with probability below this are dropped.
    pub probability_floor: f64,
    /// Speed normalization for COO node features, m/s.
    pub speed_scale: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            max_lateral: 3.0,
            max_heading: core::f64::consts::FRAC_PI_2,
            sigma_d: 1.0,
            sigma_theta: 0.35,
            max_hops: crate::lanemap::DEFAULT_MAX_HOPS,
            distance_cap: 80.0,
            probability_floor: 1e-3,
            speed_scale: 10.0,
        }
    }
}

/// One gated lane hypothesis for an entity.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneCandidate {
    pub lane_id: String,
    pub frenet: FrenetCoord,
    pub probability: f64,
}

/// All gated lane hypotheses of one entity; probabilities sum to 1 when
/// non-empty. An empty candidate list marks an off-road entity.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneAssignment {
    pub track_id: i64,
    pub candidates: Vec<LaneCandidate>,
}

/// Gaussian-kernel lane assignment over the gated lanes.
///
/// A lane is a candidate when the entity lies within `max_lateral` of its
/// polyline, its lateral offset is within the gate and the heading agrees
/// within `max_heading`. The polyline-distance condition keeps entities
/// past a lane's end from being assigned to the line extension; they
/// belong to the successor lane.
pub fn assign_lanes(entity: &EntityState, map: &LaneMap, params: &GraphParams) -> LaneAssignment {
    let pos = entity.position();
    let mut candidates = Vec::new();
    let mut total = 0.0;
    for lane in map.lanes() {
        let frenet = project(pos, entity.heading, lane);
        if frenet.d.abs() > params.max_lateral
            || frenet.dtheta.abs() > params.max_heading
            || polyline_distance(pos, lane) > params.max_lateral
        {
            continue;
        }
        let wd = frenet.d / params.sigma_d;
        let wt = frenet.dtheta / params.sigma_theta;
        let weight = (-wd * wd).exp() * (-wt * wt).exp();
        total += weight;
        candidates.push(LaneCandidate {
            lane_id: lane.id.clone(),
            frenet,
            probability: weight,
        });
    }
    if total > 0.0 {
        for c in &mut candidates {
            c.probability /= total;
        }
    }
    LaneAssignment {
        track_id: entity.track_id,
        candidates,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum EdgeKind {
    Lon,
    Lat,
    Int,
}

pub const EDGE_KIND_COUNT: usize = 3;

impl EdgeKind {
    pub fn onehot_index(&self) -> usize {
        match self {
            EdgeKind::Lon => 0,
            EdgeKind::Lat => 1,
            EdgeKind::Int => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Lon => "lon",
            EdgeKind::Lat => "lat",
            EdgeKind::Int => "int",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub track_id: i64,
    pub class: AgentClass,
    pub speed: f64,
}

impl SceneNode {
    /// Class one-hot in the fixed order car, truck, bus, pedestrian,
    /// bicycle, motorcycle, other.
    pub fn class_onehot(&self) -> [f64; AGENT_CLASS_COUNT] {
        let mut v = [0.0; AGENT_CLASS_COUNT];
        v[self.class.onehot_index()] = 1.0;
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub probability: f64,
    /// Signed along-road distance, meters.
    pub distance: f64,
}

/// The relation graph of one frame. Nodes are sorted by track id.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub frame_index: usize,
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<SceneEdge>,
    /// Node-aligned acceleration labels where known.
    pub labels: Vec<Option<f64>>,
}

impl SceneGraph {
    pub fn node_index(&self, track_id: i64) -> Option<usize> {
        self.nodes.iter().position(|n| n.track_id == track_id)
    }

    /// Attach per-track acceleration labels to the node slots.
    pub fn attach_labels(&mut self, labels: &BTreeMap<i64, f64>) {
        for (i, node) in self.nodes.iter().enumerate() {
            self.labels[i] = labels.get(&node.track_id).copied();
        }
    }
}

/// Build the scene graph of one (deduplicated) frame.
///
/// For every unordered entity pair and every pair of gated lane
/// hypotheses, the lane relation decides the edge kind: same-lane or
/// successor chains give one directed `Lon` edge from the follower to the
/// leader; adjacent parallel lanes give `Lat` edges both ways with
/// antisymmetric distances; merging branches and geometric crossings give
/// `Int` edges both ways, each carrying its own tail-to-meet distance.
/// Edge probability is the product of the endpoint lane probabilities;
/// among hypotheses for the same (src, dst, kind) the most probable wins,
/// then edges beyond the distance cap or below the probability floor are
/// dropped.
pub fn build_graph(frame: &Frame, map: &LaneMap, params: &GraphParams) -> Result<SceneGraph> {
    let mut nodes: Vec<&EntityState> = frame.entities.iter().collect();
    nodes.sort_by_key(|e| e.track_id);

    let assignments: Vec<LaneAssignment> = nodes
        .iter()
        .map(|e| assign_lanes(e, map, params))
        .collect();

    // (src, dst, kind) -> best hypothesis
    let mut hypotheses: BTreeMap<(usize, usize, EdgeKind), SceneEdge> = BTreeMap::new();
    let mut offer = |src: usize, dst: usize, kind: EdgeKind, probability: f64, distance: f64| {
        let key = (src, dst, kind);
        let edge = SceneEdge {
            src,
            dst,
            kind,
            probability,
            distance,
        };
        match hypotheses.get_mut(&key) {
            Some(cur) if cur.probability >= probability => {}
            Some(cur) => *cur = edge,
            None => {
                hypotheses.insert(key, edge);
            }
        }
    };

    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            for ci in &assignments[i].candidates {
                for cj in &assignments[j].candidates {
                    let lane_i = map.get(&ci.lane_id)?;
                    let lane_j = map.get(&cj.lane_id)?;
                    let rel = classify_lane_pair(lane_i, lane_j, map, params.max_hops)?;
                    let p = ci.probability * cj.probability;
                    match rel.kind {
                        LaneRelationKind::SameOrSuccessor => {
                            let d = path_distance(&ci.frenet, &cj.frenet, &rel, map)?;
                            if d > 0.0 {
                                offer(i, j, EdgeKind::Lon, p, d);
                            } else if d < 0.0 {
                                offer(j, i, EdgeKind::Lon, p, -d);
                            }
                        }
                        LaneRelationKind::ParallelAdjacent => {
                            let d = path_distance(&ci.frenet, &cj.frenet, &rel, map)?;
                            offer(i, j, EdgeKind::Lat, p, d);
                            offer(j, i, EdgeKind::Lat, p, -d);
                        }
                        LaneRelationKind::Merging | LaneRelationKind::Crossing => {
                            let (s_meet_i, s_meet_j) = (
                                rel.s_meet_a.expect("meet relation carries arc positions"),
                                rel.s_meet_b.expect("meet relation carries arc positions"),
                            );
                            offer(i, j, EdgeKind::Int, p, s_meet_i - ci.frenet.s);
                            offer(j, i, EdgeKind::Int, p, s_meet_j - cj.frenet.s);
                        }
                        LaneRelationKind::Unrelated => {}
                    }
                }
            }
        }
    }

    let edges: Vec<SceneEdge> = hypotheses
        .into_values()
        .filter(|e| e.distance.abs() <= params.distance_cap && e.probability >= params.probability_floor)
        .collect();

    Ok(SceneGraph {
        frame_index: frame.frame_index,
        nodes: nodes
            .into_iter()
            .map(|e| SceneNode {
                track_id: e.track_id,
                class: e.class,
                speed: e.speed,
            })
            .collect(),
        edges,
        labels: alloc::vec![None; frame.entities.len()],
    })
}

/// Node feature width: class one-hot plus normalized speed.
pub const NODE_FEATURES: usize = AGENT_CLASS_COUNT + 1;
/// Edge feature width: kind one-hot, probability, normalized distance.
pub const EDGE_FEATURES: usize = EDGE_KIND_COUNT + 2;

/// Coordinate-list encoding of a scene graph: dense node/edge feature
/// matrices plus a 2 x m topology matrix of (src, dst) indices.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CooGraph {
    pub frame_index: usize,
    /// n rows of [class one-hot (7), speed / speed_scale].
    pub node_matrix: Vec<Vec<f64>>,
    /// m rows of [kind one-hot (3), probability, distance / distance_cap].
    pub edge_matrix: Vec<Vec<f64>>,
    /// Column k joins src[k] -> dst[k].
    pub topology: [Vec<usize>; 2],
    /// Node-aligned labels; meaningful where `label_mask` is true.
    pub label_vector: Vec<f64>,
    pub label_mask: Vec<bool>,
    /// Node-aligned track ids (the node order key).
    pub track_ids: Vec<i64>,
}

impl CooGraph {
    pub fn node_count(&self) -> usize {
        self.node_matrix.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_matrix.len()
    }

    pub fn node_index(&self, track_id: i64) -> Option<usize> {
        self.track_ids.iter().position(|&t| t == track_id)
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.label_mask[i]).collect()
    }
}

/// Encode a scene graph in COO form with normalized features.
pub fn to_coo(graph: &SceneGraph, params: &GraphParams) -> CooGraph {
    let node_matrix = graph
        .nodes
        .iter()
        .map(|n| {
            let mut row = Vec::with_capacity(NODE_FEATURES);
            row.extend_from_slice(&n.class_onehot());
            row.push(n.speed / params.speed_scale);
            row
        })
        .collect();
    let mut edge_matrix = Vec::with_capacity(graph.edges.len());
    let mut src = Vec::with_capacity(graph.edges.len());
    let mut dst = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let mut row = alloc::vec![0.0; EDGE_FEATURES];
        row[e.kind.onehot_index()] = 1.0;
        row[EDGE_KIND_COUNT] = e.probability;
        row[EDGE_KIND_COUNT + 1] = e.distance / params.distance_cap;
        edge_matrix.push(row);
        src.push(e.src);
        dst.push(e.dst);
    }
    CooGraph {
        frame_index: graph.frame_index,
        node_matrix,
        edge_matrix,
        topology: [src, dst],
        label_vector: graph.labels.iter().map(|l| l.unwrap_or(0.0)).collect(),
        label_mask: graph.labels.iter().map(|l| l.is_some()).collect(),
        track_ids: graph.nodes.iter().map(|n| n.track_id).collect(),
    }
}

/// The edge-ablation twin: identical topology, every edge feature zeroed.
pub fn ablate_edges(coo: &CooGraph) -> CooGraph {
    let mut out = coo.clone();
    for row in &mut out.edge_matrix {
        row.fill(0.0);
    }
    out
}

/// Serialize one COO graph to JSON.
pub fn coo_to_json(coo: &CooGraph) -> String {
    serde_json::to_string_pretty(coo).expect("COO serialization cannot fail")
}

pub fn coo_from_json(text: &str) -> Result<CooGraph> {
    serde_json::from_str(text).map_err(|e| Error::data(format!("COO JSON: {e}")))
}

/// DOT rendering of a scene graph for visualization.
pub fn graph_to_dot(graph: &SceneGraph) -> String {
    let mut out = String::from("digraph scene {\n  rankdir=LR;\n  node [shape=circle];\n");
    for (i, n) in graph.nodes.iter().enumerate() {
        out.push_str(&format!(
            "  n{i} [label=\"{} ({:.1} m/s)\"];\n",
            n.track_id, n.speed
        ));
    }
    for e in &graph.edges {
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{} p={:.3} d={:.1}\"];\n",
            e.src,
            e.dst,
            e.kind.as_str(),
            e.probability,
            e.distance
        ));
    }
    out.push_str("}\n");
    out
}
