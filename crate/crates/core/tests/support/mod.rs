//! Shared test oracles: exhaustive simple-path enumeration on small graphs
//! and sequential path-cost evaluation, independent of the search code they
//! check.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tamm_core::geom::GeoPoint;
use tamm_core::roadnet::{NetView, NodeId, PlanarNetBuilder, RoadNetwork, SegmentId};
use tamm_core::router::{timecost, PairQuery, TIMELEFT_EPS_S, TIME_CUTOFF_FACTOR};

/// Every simple path source -> target by depth-first enumeration, optionally
/// bounded in total travel time. Panics if the graph is too big to
/// enumerate (guard against accidental misuse).
pub fn enumerate_simple_paths<V: NetView>(
    view: &V,
    source: NodeId,
    target: NodeId,
    max_time: Option<f64>,
) -> Vec<Vec<SegmentId>> {
    let mut paths = Vec::new();
    let mut stack = vec![source];
    let mut segs: Vec<SegmentId> = Vec::new();
    dfs(view, target, max_time, &mut stack, &mut segs, 0.0, &mut paths);
    assert!(paths.len() < 1_000_000, "path explosion; graph too large");
    paths
}

fn dfs<V: NetView>(
    view: &V,
    target: NodeId,
    max_time: Option<f64>,
    stack: &mut Vec<NodeId>,
    segs: &mut Vec<SegmentId>,
    time: f64,
    out: &mut Vec<Vec<SegmentId>>,
) {
    let at = *stack.last().unwrap();
    if at == target {
        out.push(segs.clone());
        return;
    }
    for seg_id in view.outgoing(at) {
        let seg = view.segment(seg_id).unwrap();
        if stack.contains(&seg.to_node) {
            continue;
        }
        let t = time + seg.travel_time_s;
        if max_time.is_some_and(|m| t > m) {
            continue;
        }
        stack.push(seg.to_node);
        segs.push(seg_id);
        dfs(view, target, max_time, stack, segs, t, out);
        segs.pop();
        stack.pop();
    }
}

pub fn path_length<V: NetView>(view: &V, path: &[SegmentId]) -> f64 {
    path.iter().map(|id| view.segment(*id).unwrap().length_m).sum()
}

pub fn path_time<V: NetView>(view: &V, path: &[SegmentId]) -> f64 {
    path.iter()
        .map(|id| view.segment(*id).unwrap().travel_time_s)
        .sum()
}

/// Sequential timecost of a concrete path under the same timeleft rule the
/// search applies: per edge, the line speed adapts to the remaining straight
/// line over the remaining time while more than `TIMELEFT_EPS_S` remains,
/// else the global pair line speed.
pub fn sequential_timecost<V: NetView>(view: &V, q: &PairQuery, path: &[SegmentId]) -> f64 {
    let target_pos = view.node_pos(q.target).unwrap();
    let mut time = 0.0;
    let mut cost = 0.0;
    for id in path {
        let seg = view.segment(*id).unwrap();
        let timeleft = q.gps_travel_time_s - (time + seg.travel_time_s);
        let n_pos = view.node_pos(seg.from_node).unwrap();
        let remaining = n_pos.dist(target_pos);
        let ls = if timeleft > TIMELEFT_EPS_S && remaining > 0.0 {
            remaining / timeleft
        } else {
            q.linespeed_mps
        };
        cost += timecost(seg, q.heading_ab_deg, ls).unwrap();
        time += seg.travel_time_s;
    }
    cost
}

/// Pick the best path by `(cost, edge count, lexicographic ids)` — the same
/// tie-break contract the searches implement.
pub fn best_path<'a>(paths: &'a [Vec<SegmentId>], cost: impl Fn(&[SegmentId]) -> f64) -> &'a [SegmentId] {
    assert!(!paths.is_empty());
    let mut best = &paths[0];
    let mut best_cost = cost(best);
    for p in &paths[1..] {
        let c = cost(p);
        let better = c < best_cost
            || (c == best_cost && (p.len() < best.len() || (p.len() == best.len() && p < best)));
        if better {
            best = p;
            best_cost = c;
        }
    }
    best
}

/// The enumeration oracle for the time-aware search: best sequential
/// timecost among simple paths within the search's travel-time cutoff.
pub fn oracle_time_aware<V: NetView>(view: &V, q: &PairQuery) -> Option<Vec<SegmentId>> {
    let cutoff = TIME_CUTOFF_FACTOR * q.gps_travel_time_s;
    let paths = enumerate_simple_paths(view, q.source, q.target, Some(cutoff));
    if paths.is_empty() {
        return None;
    }
    Some(best_path(&paths, |p| sequential_timecost(view, q, p)).to_vec())
}

pub fn oracle_shortest<V: NetView>(view: &V, s: NodeId, t: NodeId) -> Option<Vec<SegmentId>> {
    let paths = enumerate_simple_paths(view, s, t, None);
    if paths.is_empty() {
        return None;
    }
    Some(best_path(&paths, |p| path_length(view, p)).to_vec())
}

pub fn oracle_fastest<V: NetView>(view: &V, s: NodeId, t: NodeId) -> Option<Vec<SegmentId>> {
    let paths = enumerate_simple_paths(view, s, t, None);
    if paths.is_empty() {
        return None;
    }
    Some(best_path(&paths, |p| path_time(view, p)).to_vec())
}

/// A random strongly-ish connected planar network with 4..=12 nodes: a
/// random spanning cycle plus extra chords, every street two-way, speeds
/// drawn from {5, 10, 20} m/s.
pub fn random_small_network(rng: &mut ChaCha8Rng) -> RoadNetwork {
    let n = rng.gen_range(4..=12u64);
    let mut builder = PlanarNetBuilder::new();
    let mut positions = Vec::new();
    for id in 0..n {
        let p = GeoPoint::new(rng.gen_range(0.0..1500.0), rng.gen_range(0.0..1500.0));
        // Nudge apart any coincident nodes.
        let p = GeoPoint::new(p.x + id as f64, p.y);
        positions.push(p);
        builder = builder.node(id, p.x, p.y);
    }
    let speeds = [5.0, 10.0, 20.0];
    let mut seg = 0u64;
    let mut link = |builder: PlanarNetBuilder, a: u64, b: u64, rng: &mut ChaCha8Rng| {
        let speed = speeds[rng.gen_range(0..speeds.len())];
        let out = builder.street(seg, seg + 1, a, b, "street", speed);
        seg += 2;
        out
    };
    // Spanning cycle keeps everything reachable.
    for i in 0..n {
        builder = link(builder, i, (i + 1) % n, rng);
    }
    // Chords.
    let chords = rng.gen_range(1..=n);
    for _ in 0..chords {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && positions[a as usize].dist(positions[b as usize]) > 1.0 {
            builder = link(builder, a, b, rng);
        }
    }
    builder.build()
}
