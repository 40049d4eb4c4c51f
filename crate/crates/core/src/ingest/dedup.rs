//! Duplicate-annotation removal: rotated-rectangle IoU, the conflict graph
//! over one frame, and a maximum-independent-set solve per connected
//! component (exact up to a size bound, greedy beyond it).

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use super::{EntityState, Frame};
use crate::geom::{clip_convex, polygon_area, OrientedBox};

/// Components larger than this fall back to greedy conflict resolution.
pub const MAX_EXACT_COMPONENT: usize = 25;

/// Default IoU threshold at and above which two boxes conflict.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.2;

/// Intersection-over-union of two oriented boxes via convex polygon
/// clipping. Symmetric; 0 for disjoint boxes.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    debug_assert!(a.length > 0.0 && a.width > 0.0 && b.length > 0.0 && b.width > 0.0);
    // Cheap reject: circles around the boxes do not touch.
    let reach = 0.5
        * ((a.length * a.length + a.width * a.width).sqrt()
            + (b.length * b.length + b.width * b.width).sqrt());
    if a.center.dist(b.center) > reach {
        return 0.0;
    }
    let inter = polygon_area(&clip_convex(&a.corners(), &b.corners())).abs();
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Conflict graph over the entities of one frame: an edge joins every pair
/// whose IoU reaches the threshold.
#[derive(Debug, Clone)]
pub struct ConflictGraph {
    pub node_count: usize,
    /// Unordered index pairs, stored with the smaller index first.
    pub edges: Vec<(usize, usize)>,
}

impl ConflictGraph {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count];
        let mut components = Vec::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &n in &adj[v] {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

fn entity_box(e: &EntityState) -> OrientedBox {
    OrientedBox {
        center: e.position(),
        heading: e.heading,
        length: e.length,
        width: e.width,
    }
}

pub fn build_conflict_graph(frame: &Frame, threshold: f64) -> ConflictGraph {
    let boxes: Vec<OrientedBox> = frame.entities.iter().map(entity_box).collect();
    let mut edges = Vec::new();
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if rotated_iou(&boxes[i], &boxes[j]) >= threshold {
                edges.push((i, j));
            }
        }
    }
    ConflictGraph {
        node_count: boxes.len(),
        edges,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DedupStats {
    pub removed: usize,
    /// Components that exceeded [`MAX_EXACT_COMPONENT`] and were resolved
    /// greedily.
    pub greedy_fallbacks: usize,
}

/// Sort key making the kept set deterministic: primarily the track id,
/// with the original slot breaking ties between duplicate rows of the
/// same track.
type KeptKey = (i64, usize);

/// Exact maximum independent set over one component, returning the
/// lexicographically smallest kept key set among maximum ones.
///
/// Vertices are visited in ascending key order with "keep" branched before
/// "drop", so independent sets are enumerated in lexicographic key order
/// and the first maximum found is already the lex-smallest; branches that
/// can at best tie the incumbent are pruned.
fn exact_mis(vertices: &[usize], keys: &[KeptKey], adj: &[Vec<usize>]) -> Vec<usize> {
    let mut order: Vec<usize> = vertices.to_vec();
    order.sort_by_key(|&v| keys[v]);

    fn rec(
        pos: usize,
        order: &[usize],
        adj: &[Vec<usize>],
        chosen: &mut Vec<usize>,
        best: &mut Vec<usize>,
    ) {
        if chosen.len() + (order.len() - pos) <= best.len() {
            return;
        }
        if pos == order.len() {
            if chosen.len() > best.len() {
                *best = chosen.clone();
            }
            return;
        }
        let v = order[pos];
        if !chosen.iter().any(|&c| adj[v].contains(&c)) {
            chosen.push(v);
            rec(pos + 1, order, adj, chosen, best);
            chosen.pop();
        }
        rec(pos + 1, order, adj, chosen, best);
    }

    let mut best = Vec::new();
    let mut chosen = Vec::new();
    rec(0, &order, adj, &mut chosen, &mut best);
    best
}

/// Greedy fallback: repeatedly drop the highest-degree vertex until no
/// conflicts remain.
fn greedy_mis(vertices: &[usize], keys: &[KeptKey], adj: &[Vec<usize>]) -> Vec<usize> {
    let mut alive: Vec<usize> = vertices.to_vec();
    loop {
        let degree = |v: usize| adj[v].iter().filter(|n| alive.contains(n)).count();
        let (worst, deg) = alive
            .iter()
            .map(|&v| (v, degree(v)))
            // among equal degrees drop the largest key, keeping small ids
            .max_by_key(|&(v, d)| (d, keys[v]))
            .unwrap();
        if deg == 0 {
            return alive;
        }
        alive.retain(|&v| v != worst);
    }
}

/// Resolve duplicate annotations in one frame: build the conflict graph at
/// `threshold` and keep a maximum independent set per connected component.
pub fn dedup_frame(frame: &Frame, threshold: f64) -> (Frame, DedupStats) {
    let graph = build_conflict_graph(frame, threshold);
    let mut stats = DedupStats::default();
    if graph.edges.is_empty() {
        return (frame.clone(), stats);
    }

    let keys: Vec<KeptKey> = frame
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.track_id, i))
        .collect();
    let adj = graph.adjacency();

    let mut keep = vec![false; graph.node_count];
    for comp in graph.components() {
        let kept = if comp.len() <= MAX_EXACT_COMPONENT {
            exact_mis(&comp, &keys, &adj)
        } else {
            stats.greedy_fallbacks += 1;
            greedy_mis(&comp, &keys, &adj)
        };
        for v in kept {
            keep[v] = true;
        }
    }

    let entities: Vec<EntityState> = frame
        .entities
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, e)| e.clone())
        .collect();
    stats.removed = frame.entities.len() - entities.len();
    let out = Frame {
        frame_index: frame.frame_index,
        timestamp_ms: frame.timestamp_ms,
        entities,
    };
    debug_assert!(build_conflict_graph(&out, threshold).edges.is_empty());
    (out, stats)
}

/// Brute-force maximum independent set with the same tie-break as
/// [`dedup_frame`]; exponential, intended for verification.
pub fn brute_force_mis(node_count: usize, edges: &[(usize, usize)], keys: &[KeptKey]) -> Vec<usize> {
    assert!(node_count <= 20, "brute force is exponential");
    let mut best: Vec<usize> = Vec::new();
    let mut best_keys: Vec<KeptKey> = Vec::new();
    for mask in 0u32..(1 << node_count) {
        if edges
            .iter()
            .any(|&(a, b)| mask & (1 << a) != 0 && mask & (1 << b) != 0)
        {
            continue;
        }
        let set: Vec<usize> = (0..node_count).filter(|&v| mask & (1 << v) != 0).collect();
        let mut set_keys: Vec<KeptKey> = set.iter().map(|&v| keys[v]).collect();
        set_keys.sort_unstable();
        if set.len() > best.len() || (set.len() == best.len() && set_keys < best_keys) {
            best = set;
            best_keys = set_keys;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::ingest::AgentClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn boxed(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> OrientedBox {
        OrientedBox {
            center: Vec2::new(cx, cy),
            heading,
            length,
            width,
        }
    }

    fn frame_of(entities: Vec<EntityState>) -> Frame {
        Frame {
            frame_index: 0,
            timestamp_ms: 0,
            entities,
        }
    }

    fn entity_at(track_id: i64, x: f64, y: f64) -> EntityState {
        EntityState {
            track_id,
            frame_index: 0,
            timestamp_ms: 0,
            class: AgentClass::Car,
            x,
            y,
            heading: 0.0,
            length: 4.0,
            width: 2.0,
            speed: 0.0,
            motion_state: None,
        }
    }

    /// Kept entities are a subsequence of the input; recover their slots.
    fn kept_keys(input: &Frame, output: &Frame) -> Vec<KeptKey> {
        let mut cursor = 0;
        let mut keys = Vec::new();
        for e in &output.entities {
            while input.entities[cursor] != *e {
                cursor += 1;
            }
            keys.push((e.track_id, cursor));
            cursor += 1;
        }
        keys
    }

    #[test]
    fn iou_identical_boxes() {
        let b = boxed(3.0, -1.0, 0.4, 4.0, 2.0);
        assert!((rotated_iou(&b, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_half_offset_unit_squares() {
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0);
        let b = boxed(0.5, 0.0, 0.0, 1.0, 1.0);
        assert!((rotated_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = boxed(0.0, 0.0, 0.3, 4.0, 2.0);
        let b = boxed(50.0, 0.0, 1.2, 4.0, 2.0);
        assert_eq!(rotated_iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_square_vs_rotated_square_monte_carlo() {
        // Unit square vs the same square rotated 45 degrees about its center.
        let a = boxed(0.0, 0.0, 0.0, 1.0, 1.0);
        let b = boxed(0.0, 0.0, core::f64::consts::FRAC_PI_4, 1.0, 1.0);
        let analytic = rotated_iou(&a, &b);

        // Monte-Carlo area oracle over a box covering both squares.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let contains = |bx: &OrientedBox, p: Vec2| {
            let local = p.sub(bx.center).rotate(-bx.heading);
            local.x.abs() <= bx.length * 0.5 && local.y.abs() <= bx.width * 0.5
        };
        let (mut inter, mut union) = (0u64, 0u64);
        for _ in 0..1_000_000 {
            let p = Vec2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let ia = contains(&a, p);
            let ib = contains(&b, p);
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
        let mc = inter as f64 / union as f64;
        assert!(
            (analytic - mc).abs() < 1e-3,
            "clipping {analytic} vs monte-carlo {mc}"
        );
    }

    #[test]
    fn iou_symmetric_and_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = boxed(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.5..6.0),
                rng.random_range(0.5..3.0),
            );
            let b = boxed(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.5..6.0),
                rng.random_range(0.5..3.0),
            );
            let ab = rotated_iou(&a, &b);
            let ba = rotated_iou(&b, &a);
            assert!((ab - ba).abs() < 1e-9, "symmetry violated: {ab} vs {ba}");

            let angle = rng.random_range(-3.0..3.0);
            let shift = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let transform = |bx: &OrientedBox| OrientedBox {
                center: bx.center.rotate(angle).add(shift),
                heading: bx.heading + angle,
                length: bx.length,
                width: bx.width,
            };
            let moved = rotated_iou(&transform(&a), &transform(&b));
            assert!((ab - moved).abs() < 1e-9, "rigid invariance: {ab} vs {moved}");
        }
    }

    #[test]
    fn dedup_no_overlap_unchanged() {
        let frame = frame_of(vec![entity_at(1, 0.0, 0.0), entity_at(2, 20.0, 0.0)]);
        let (out, stats) = dedup_frame(&frame, 0.2);
        assert_eq!(out, frame);
        assert_eq!(stats.removed, 0);
    }

    #[test]
    fn dedup_pair_keeps_smaller_track_id() {
        let frame = frame_of(vec![entity_at(9, 0.0, 0.0), entity_at(4, 0.2, 0.0)]);
        let (out, stats) = dedup_frame(&frame, 0.2);
        assert_eq!(out.entities.len(), 1);
        assert_eq!(out.entities[0].track_id, 4);
        assert_eq!(stats.removed, 1);
    }

    #[test]
    fn dedup_path_component_keeps_alternating_set() {
        // Five boxes in a row, each overlapping only its neighbors
        // (spacing 2.5 m -> neighbor IoU 3/13, farther pairs disjoint).
        let entities: Vec<EntityState> = (0..5)
            .map(|i| entity_at(i as i64 + 1, i as f64 * 2.5, 0.0))
            .collect();
        let frame = frame_of(entities);
        let graph = build_conflict_graph(&frame, 0.2);
        assert_eq!(graph.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        let (out, _) = dedup_frame(&frame, 0.2);
        let kept: Vec<i64> = out.entities.iter().map(|e| e.track_id).collect();
        assert_eq!(kept, vec![1, 3, 5]);

        // Matches brute force over all 2^5 subsets.
        let keys: Vec<KeptKey> = frame
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.track_id, i))
            .collect();
        let brute = brute_force_mis(5, &graph.edges, &keys);
        assert_eq!(brute, vec![0, 2, 4]);
    }

    #[test]
    fn dedup_matches_brute_force_on_random_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..80 {
            let n = rng.random_range(2..=15usize);
            let entities: Vec<EntityState> = (0..n)
                .map(|_| {
                    let mut e = entity_at(
                        rng.random_range(1..=6i64), // duplicate ids on purpose
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-4.0..4.0),
                    );
                    e.heading = rng.random_range(-3.0..3.0);
                    e.length = rng.random_range(2.0..6.0);
                    e.width = rng.random_range(1.0..3.0);
                    e
                })
                .collect();
            let frame = frame_of(entities);
            let graph = build_conflict_graph(&frame, 0.2);
            let keys: Vec<KeptKey> = frame
                .entities
                .iter()
                .enumerate()
                .map(|(i, e)| (e.track_id, i))
                .collect();
            let brute = brute_force_mis(graph.node_count, &graph.edges, &keys);
            let mut brute_keys: Vec<KeptKey> = brute.iter().map(|&v| keys[v]).collect();
            brute_keys.sort_unstable();

            let (out, _) = dedup_frame(&frame, 0.2);
            let mut kept = kept_keys(&frame, &out);
            kept.sort_unstable();
            assert_eq!(kept, brute_keys, "case {case} diverged from brute force");
        }
    }

    #[test]
    fn kept_pairs_stay_below_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.random_range(3..=12usize);
            let entities: Vec<EntityState> = (0..n)
                .map(|i| {
                    let mut e = entity_at(
                        i as i64,
                        rng.random_range(-6.0..6.0),
                        rng.random_range(-6.0..6.0),
                    );
                    e.heading = rng.random_range(-3.0..3.0);
                    e
                })
                .collect();
            let frame = frame_of(entities);
            let (out, _) = dedup_frame(&frame, 0.2);
            for i in 0..out.entities.len() {
                for j in (i + 1)..out.entities.len() {
                    let a = entity_box(&out.entities[i]);
                    let b = entity_box(&out.entities[j]);
                    assert!(rotated_iou(&a, &b) < 0.2);
                }
            }
        }
    }

    #[test]
    fn clique_component_resolves_quickly() {
        // 20 stacked boxes form a clique; exact search must stay cheap.
        let entities: Vec<EntityState> = (0..20)
            .map(|i| entity_at(i as i64, 0.01 * i as f64, 0.0))
            .collect();
        let frame = frame_of(entities);
        let (out, _) = dedup_frame(&frame, 0.2);
        assert_eq!(out.entities.len(), 1);
        assert_eq!(out.entities[0].track_id, 0);
    }
}
