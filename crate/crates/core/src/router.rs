//! Timecost edge evaluation and path reconstruction between two matched
//! points: time-aware Dijkstra plus shortest- and fastest-path baselines.
//!
//! Timecost measures how badly a segment fits the straight-line speed of
//! the GPS pair: project the segment onto the pair's bearing, ask how long
//! that projection would take at the line speed, stretch the segment to the
//! length it would have if it were traversed in that time, and charge the
//! difference against the real length. A segment whose projected speed
//! equals the line speed costs nothing; counter-heading segments (cos α < 0)
//! come out very expensive through the final absolute value.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::GeoPoint;
use crate::matcher::angular_difference;
use crate::roadnet::{NetView, NodeId, RoadSegment, SegmentId};

/// Below this many seconds of remaining time the adaptive line speed would
/// divide by (near) zero; the global pair line speed takes over.
pub const TIMELEFT_EPS_S: f64 = 1.0;

/// A search is abandoned once accumulated path travel time exceeds this
/// multiple of the GPS pair time.
pub const TIME_CUTOFF_FACTOR: f64 = 10.0;

/// Path reconstruction strategy for a pair of matched points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heuristic {
    TimeAware,
    Shortest,
    Fastest,
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::TimeAware => "time-aware",
            Heuristic::Shortest => "shortest",
            Heuristic::Fastest => "fastest",
        })
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "time-aware" | "time_aware" => Ok(Heuristic::TimeAware),
            "shortest" => Ok(Heuristic::Shortest),
            "fastest" => Ok(Heuristic::Fastest),
            other => Err(format!(
                "unknown heuristic `{}` (expected time-aware, shortest or fastest)",
                other
            )),
        }
    }
}

/// Everything the search needs to know about a consecutive-fix pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairQuery {
    pub source: NodeId,
    pub target: NodeId,
    pub gps_travel_time_s: f64,
    /// Euclidean distance between the two fixes, meters.
    pub straight_line_m: f64,
    /// `straight_line_m / gps_travel_time_s`.
    pub linespeed_mps: f64,
    /// Bearing from the first fix to the second, degrees.
    pub heading_ab_deg: f64,
}

impl PairQuery {
    pub fn new(
        source: NodeId,
        target: NodeId,
        gps_travel_time_s: f64,
        straight_line_m: f64,
        heading_ab_deg: f64,
    ) -> Result<Self> {
        if !(gps_travel_time_s > 0.0) || !gps_travel_time_s.is_finite() {
            return Err(Error::InvalidQuery(format!(
                "gps_travel_time must be > 0, got {}",
                gps_travel_time_s
            )));
        }
        if !(straight_line_m >= 0.0) || !straight_line_m.is_finite() {
            return Err(Error::InvalidQuery(format!(
                "straight_line must be finite and >= 0, got {}",
                straight_line_m
            )));
        }
        Ok(PairQuery {
            source,
            target,
            gps_travel_time_s,
            straight_line_m,
            linespeed_mps: straight_line_m / gps_travel_time_s,
            heading_ab_deg,
        })
    }
}

/// A reconstructed path between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPath {
    /// Connected walk source -> target; empty when source == target.
    pub segments: Vec<SegmentId>,
    pub travel_time_s: f64,
    /// Cost accumulated by the search in its own metric: timecost meters for
    /// the time-aware search, length for shortest, travel time for fastest.
    pub total_cost: f64,
    /// Straight-line source->target distance over path travel time; 0 for
    /// empty paths.
    pub lspeed_mps: f64,
}

/// Search effort counters, summable across pairs and workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Priority-queue searches run (one per routed pair).
    pub searches: u64,
    pub pops: u64,
    pub relaxations: u64,
}

impl SearchStats {
    pub fn add(&mut self, other: SearchStats) {
        self.searches += other.searches;
        self.pops += other.pops;
        self.relaxations += other.relaxations;
    }
}

/// Literal Timecost evaluation for one segment against a travel heading and
/// a line speed.
pub fn timecost(seg: &RoadSegment, heading_deg: f64, linespeed_mps: f64) -> Result<f64> {
    if !(linespeed_mps > 0.0) {
        return Err(Error::NonPositiveLinespeed(linespeed_mps));
    }
    if !(seg.travel_time_s > 0.0) {
        return Err(Error::ZeroTravelTime(seg.id));
    }
    Ok(timecost_value(seg, heading_deg, linespeed_mps))
}

fn timecost_value(seg: &RoadSegment, heading_deg: f64, linespeed_mps: f64) -> f64 {
    debug_assert!(linespeed_mps > 0.0 && seg.travel_time_s > 0.0);
    let alpha = angular_difference(seg.heading_deg, heading_deg);
    let length_projected = seg.length_m * alpha.to_radians().cos();
    let time_expected = length_projected / linespeed_mps;
    let length_expected = seg.length_m * time_expected / seg.travel_time_s;
    (length_expected - seg.length_m).abs()
}

/// The line speed the time-aware search uses when relaxing an edge out of
/// node `n` (at `n_pos`, reached after `time_at_n` seconds of path time).
/// While more than [`TIMELEFT_EPS_S`] of the GPS time remains after the edge,
/// the speed adapts to the remaining straight line over the remaining time;
/// otherwise the global pair line speed is the goal.
fn adaptive_linespeed(
    q: &PairQuery,
    edge: &RoadSegment,
    time_at_n: f64,
    n_pos: GeoPoint,
    target_pos: GeoPoint,
) -> f64 {
    let timeleft = q.gps_travel_time_s - (time_at_n + edge.travel_time_s);
    if timeleft > TIMELEFT_EPS_S {
        let remaining = n_pos.dist(target_pos);
        if remaining > 0.0 {
            return remaining / timeleft;
        }
    }
    q.linespeed_mps
}

/// Arrival-time buckets per GPS pair time in the time-aware search. Edge
/// costs depend on the accumulated travel time of the node being expanded,
/// but only until the remaining time runs out (past that the global line
/// speed takes over and costs are time-independent), so labels need time
/// diversity only inside the GPS window. One extra bucket holds every
/// arrival past it.
const TIME_BUCKETS: usize = 16;

/// Best-first search minimizing accumulated timecost with the adaptive
/// remaining line speed. Returns `None` when the target is unreachable
/// (including searches abandoned at the travel-time cutoff).
pub fn time_aware_dijkstra<V: NetView>(
    view: &V,
    q: &PairQuery,
    stats: &mut SearchStats,
) -> Result<Option<MatchedPath>> {
    if q.source != q.target && !(q.linespeed_mps > 0.0) {
        return Err(Error::InvalidQuery(
            "linespeed must be > 0 (apply the stay rule to co-located pairs)".into(),
        ));
    }
    let target_pos = view
        .node_pos(q.target)
        .ok_or(Error::UnknownNode(q.target))?;
    let cutoff = TIME_CUTOFF_FACTOR * q.gps_travel_time_s;
    let bucket_width = q.gps_travel_time_s / TIME_BUCKETS as f64;
    let raw = multi_label_core(
        view,
        q.source,
        q.target,
        |edge, time_at_n, n_pos| {
            let ls = adaptive_linespeed(q, edge, time_at_n, n_pos, target_pos);
            timecost_value(edge, q.heading_ab_deg, ls)
        },
        bucket_width,
        cutoff,
        stats,
    )?;
    Ok(raw.map(|r| finish_path(r, q.straight_line_m)))
}

/// Least total length baseline.
pub fn shortest_path<V: NetView>(
    view: &V,
    source: NodeId,
    target: NodeId,
    stats: &mut SearchStats,
) -> Result<Option<MatchedPath>> {
    let straight = straight_between(view, source, target)?;
    let raw = dijkstra_core(view, source, target, |edge, _, _| edge.length_m, None, stats)?;
    Ok(raw.map(|r| finish_path(r, straight)))
}

/// Least total travel time baseline.
pub fn fastest_path<V: NetView>(
    view: &V,
    source: NodeId,
    target: NodeId,
    stats: &mut SearchStats,
) -> Result<Option<MatchedPath>> {
    let straight = straight_between(view, source, target)?;
    let raw = dijkstra_core(
        view,
        source,
        target,
        |edge, _, _| edge.travel_time_s,
        None,
        stats,
    )?;
    Ok(raw.map(|r| finish_path(r, straight)))
}

/// Run the heuristic selected for this pair.
pub fn route<V: NetView>(
    view: &V,
    heuristic: Heuristic,
    q: &PairQuery,
    stats: &mut SearchStats,
) -> Result<Option<MatchedPath>> {
    match heuristic {
        Heuristic::TimeAware => time_aware_dijkstra(view, q, stats),
        Heuristic::Shortest => shortest_path(view, q.source, q.target, stats),
        Heuristic::Fastest => fastest_path(view, q.source, q.target, stats),
    }
}

fn straight_between<V: NetView>(view: &V, source: NodeId, target: NodeId) -> Result<f64> {
    let s = view.node_pos(source).ok_or(Error::UnknownNode(source))?;
    let t = view.node_pos(target).ok_or(Error::UnknownNode(target))?;
    Ok(s.dist(t))
}

fn finish_path(raw: RawPath, straight_line_m: f64) -> MatchedPath {
    let lspeed = if raw.travel_time_s > 0.0 {
        straight_line_m / raw.travel_time_s
    } else {
        0.0
    };
    MatchedPath {
        segments: raw.segments,
        travel_time_s: raw.travel_time_s,
        total_cost: raw.cost,
        lspeed_mps: lspeed,
    }
}

struct RawPath {
    segments: Vec<SegmentId>,
    travel_time_s: f64,
    cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    time: f64,
    hops: u32,
    parent: Option<(NodeId, SegmentId)>,
    settled: bool,
}

struct QueueEntry {
    cost: f64,
    hops: u32,
    node: NodeId,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for min-first popping; ties pop the smaller node id for
        // deterministic settle order.
        (other.cost, other.hops, other.node)
            .partial_cmp(&(self.cost, self.hops, self.node))
            .expect("edge costs are finite")
    }
}

/// Dijkstra with lazy deletion. Edge costs may depend on the accumulated
/// travel time and position of the node being expanded (the time-aware
/// search needs both); settled labels are final because costs are
/// non-negative, so each expansion sees a consistent parent chain. Equal
/// costs prefer fewer edges, then the lexicographically smaller segment-id
/// sequence.
fn dijkstra_core<V: NetView>(
    view: &V,
    source: NodeId,
    target: NodeId,
    mut edge_cost: impl FnMut(&RoadSegment, f64, GeoPoint) -> f64,
    time_cutoff: Option<f64>,
    stats: &mut SearchStats,
) -> Result<Option<RawPath>> {
    stats.searches += 1;
    if source == target {
        return Ok(Some(RawPath {
            segments: Vec::new(),
            travel_time_s: 0.0,
            cost: 0.0,
        }));
    }
    view.node_pos(source).ok_or(Error::UnknownNode(source))?;
    view.node_pos(target).ok_or(Error::UnknownNode(target))?;

    let mut labels: HashMap<NodeId, Label> = HashMap::new();
    labels.insert(
        source,
        Label {
            cost: 0.0,
            time: 0.0,
            hops: 0,
            parent: None,
            settled: false,
        },
    );
    let mut queue = BinaryHeap::new();
    queue.push(QueueEntry {
        cost: 0.0,
        hops: 0,
        node: source,
    });

    while let Some(entry) = queue.pop() {
        stats.pops += 1;
        let label = labels[&entry.node];
        if label.settled || entry.cost > label.cost {
            continue;
        }
        if let Some(cutoff) = time_cutoff {
            if label.time > cutoff {
                continue;
            }
        }
        labels.get_mut(&entry.node).unwrap().settled = true;
        if entry.node == target {
            return Ok(Some(reconstruct(&labels, target)));
        }
        let n_pos = view.node_pos(entry.node).ok_or(Error::UnknownNode(entry.node))?;
        for seg_id in view.outgoing(entry.node) {
            let edge = view.segment(seg_id).expect("adjacency lists live segments");
            let v = edge.to_node;
            if v == entry.node {
                continue;
            }
            if labels.get(&v).is_some_and(|l| l.settled) {
                continue;
            }
            stats.relaxations += 1;
            let w = edge_cost(edge, label.time, n_pos);
            debug_assert!(w.is_finite() && w >= 0.0, "bad edge cost {w}");
            let cand = Label {
                cost: label.cost + w,
                time: label.time + edge.travel_time_s,
                hops: label.hops + 1,
                parent: Some((entry.node, seg_id)),
                settled: false,
            };
            let improved = match labels.get(&v) {
                None => true,
                Some(old) => {
                    cand.cost < old.cost
                        || (cand.cost == old.cost
                            && (cand.hops < old.hops
                                || (cand.hops == old.hops
                                    && lex_smaller(&labels, entry.node, seg_id, v))))
                }
            };
            if improved {
                labels.insert(v, cand);
                queue.push(QueueEntry {
                    cost: cand.cost,
                    hops: cand.hops,
                    node: v,
                });
            }
        }
    }
    Ok(None)
}

/// Is the chain to `n` extended by `seg` lexicographically smaller than the
/// current chain to `v`? Only called on exact cost and hop ties.
fn lex_smaller(labels: &HashMap<NodeId, Label>, n: NodeId, seg: SegmentId, v: NodeId) -> bool {
    let mut cand = chain(labels, n);
    cand.push(seg);
    cand < chain(labels, v)
}

#[derive(Debug, Clone, Copy)]
struct MLabel {
    cost: f64,
    time: f64,
    hops: u32,
    parent: Option<(NodeId, u32, SegmentId)>,
    settled: bool,
    pruned: bool,
}

struct MQueueEntry {
    cost: f64,
    hops: u32,
    node: NodeId,
    idx: u32,
}

impl PartialEq for MQueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for MQueueEntry {}
impl PartialOrd for MQueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MQueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.cost, other.hops, other.node, other.idx)
            .partial_cmp(&(self.cost, self.hops, self.node, self.idx))
            .expect("edge costs are finite")
    }
}

type MLabels = HashMap<NodeId, Vec<MLabel>>;

/// Time-aware variant of the search. Because edge costs depend on the
/// accumulated travel time of the node being expanded, each node keeps a
/// small Pareto frontier of (cost, time) labels instead of a single one;
/// the first settled label at the target still carries the least
/// accumulated timecost, costs being non-negative. A frontier of one would
/// reduce to the plain search.
fn multi_label_core<V: NetView>(
    view: &V,
    source: NodeId,
    target: NodeId,
    mut edge_cost: impl FnMut(&RoadSegment, f64, GeoPoint) -> f64,
    time_cutoff: f64,
    stats: &mut SearchStats,
) -> Result<Option<RawPath>> {
    stats.searches += 1;
    if source == target {
        return Ok(Some(RawPath {
            segments: Vec::new(),
            travel_time_s: 0.0,
            cost: 0.0,
        }));
    }
    view.node_pos(source).ok_or(Error::UnknownNode(source))?;
    view.node_pos(target).ok_or(Error::UnknownNode(target))?;

    let mut labels: MLabels = HashMap::new();
    labels.insert(
        source,
        vec![MLabel {
            cost: 0.0,
            time: 0.0,
            hops: 0,
            parent: None,
            settled: false,
            pruned: false,
        }],
    );
    let mut queue = BinaryHeap::new();
    queue.push(MQueueEntry {
        cost: 0.0,
        hops: 0,
        node: source,
        idx: 0,
    });

    while let Some(entry) = queue.pop() {
        stats.pops += 1;
        let label = labels[&entry.node][entry.idx as usize];
        if label.settled || label.pruned || label.time > time_cutoff {
            continue;
        }
        labels.get_mut(&entry.node).unwrap()[entry.idx as usize].settled = true;
        if entry.node == target {
            return Ok(Some(reconstruct_ml(&labels, target, entry.idx)));
        }
        let n_pos = view
            .node_pos(entry.node)
            .ok_or(Error::UnknownNode(entry.node))?;
        for seg_id in view.outgoing(entry.node) {
            let edge = view.segment(seg_id).expect("adjacency lists live segments");
            let v = edge.to_node;
            if v == entry.node {
                continue;
            }
            stats.relaxations += 1;
            let w = edge_cost(edge, label.time, n_pos);
            debug_assert!(w.is_finite() && w >= 0.0, "bad edge cost {w}");
            let cand = MLabel {
                cost: label.cost + w,
                time: label.time + edge.travel_time_s,
                hops: label.hops + 1,
                parent: Some((entry.node, entry.idx, seg_id)),
                settled: false,
                pruned: false,
            };
            // Paths must stay simple: reject extensions revisiting a node.
            if ml_chain_nodes(&labels, entry.node, entry.idx).contains(&v) {
                continue;
            }
            if let Some(idx) = ml_insert(&mut labels, v, cand) {
                queue.push(MQueueEntry {
                    cost: cand.cost,
                    hops: cand.hops,
                    node: v,
                    idx,
                });
            }
        }
    }
    Ok(None)
}

/// Insert `cand` into `v`'s label frontier unless dominated. Returns the
/// slot index when inserted. Labels are append-only (parents reference them
/// by index); displaced labels are flagged pruned instead of removed.
fn ml_insert(labels: &mut MLabels, v: NodeId, cand: MLabel) -> Option<u32> {
    enum Tie {
        Dominated,
        Replace(usize),
    }
    let mut tie: Option<Tie> = None;
    {
        let frontier = labels.get(&v).map(Vec::as_slice).unwrap_or(&[]);
        for (i, l) in frontier.iter().enumerate() {
            if l.pruned {
                continue;
            }
            if l.cost <= cand.cost && l.time <= cand.time {
                if l.cost == cand.cost && l.time == cand.time && !l.settled {
                    // Exact tie: prefer fewer edges, then the smaller
                    // segment-id sequence.
                    let better = cand.hops < l.hops
                        || (cand.hops == l.hops && ml_lex_smaller(labels, &cand, v, i));
                    tie = Some(if better { Tie::Replace(i) } else { Tie::Dominated });
                } else {
                    tie = Some(Tie::Dominated);
                }
                break;
            }
        }
    }
    match tie {
        Some(Tie::Dominated) => return None,
        Some(Tie::Replace(i)) => labels.get_mut(&v).unwrap()[i].pruned = true,
        None => {}
    }

    let frontier = labels.entry(v).or_default();
    for l in frontier.iter_mut() {
        if !l.pruned
            && !l.settled
            && cand.cost <= l.cost
            && cand.time <= l.time
            && (cand.cost < l.cost || cand.time < l.time)
        {
            l.pruned = true;
        }
    }
    let active = frontier.iter().filter(|l| !l.pruned).count();
    if active >= MAX_LABELS_PER_NODE {
        // Frontier full: displace the worst unsettled label if the candidate
        // beats it, otherwise drop the candidate.
        let worst = frontier
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.pruned && !l.settled)
            .max_by(|(i, a), (j, b)| {
                (a.cost, a.time)
                    .partial_cmp(&(b.cost, b.time))
                    .expect("finite costs")
                    .then(i.cmp(j))
            })
            .map(|(i, l)| (i, (l.cost, l.time)));
        match worst {
            Some((i, key)) if (cand.cost, cand.time) < key => frontier[i].pruned = true,
            _ => return None,
        }
    }
    frontier.push(cand);
    Some((frontier.len() - 1) as u32)
}

fn ml_lex_smaller(labels: &MLabels, cand: &MLabel, v: NodeId, existing_idx: usize) -> bool {
    let (n, idx, seg) = cand.parent.expect("candidate labels have parents");
    let mut cand_chain = ml_chain_segments(labels, n, idx);
    cand_chain.push(seg);
    cand_chain < ml_chain_segments(labels, v, existing_idx as u32)
}

fn ml_chain_nodes(labels: &MLabels, node: NodeId, idx: u32) -> Vec<NodeId> {
    let mut nodes = vec![node];
    let mut at = (node, idx);
    while let Some((prev, prev_idx, _)) = labels[&at.0][at.1 as usize].parent {
        nodes.push(prev);
        at = (prev, prev_idx);
    }
    nodes
}

fn ml_chain_segments(labels: &MLabels, node: NodeId, idx: u32) -> Vec<SegmentId> {
    let mut segments = Vec::new();
    let mut at = (node, idx);
    while let Some((prev, prev_idx, seg)) = labels[&at.0][at.1 as usize].parent {
        segments.push(seg);
        at = (prev, prev_idx);
    }
    segments.reverse();
    segments
}

fn reconstruct_ml(labels: &MLabels, target: NodeId, idx: u32) -> RawPath {
    let label = labels[&target][idx as usize];
    RawPath {
        segments: ml_chain_segments(labels, target, idx),
        travel_time_s: label.time,
        cost: label.cost,
    }
}

fn chain(labels: &HashMap<NodeId, Label>, node: NodeId) -> Vec<SegmentId> {
    let mut segments = Vec::new();
    let mut at = node;
    while let Some((prev, seg)) = labels[&at].parent {
        segments.push(seg);
        at = prev;
    }
    segments.reverse();
    segments
}

fn reconstruct(labels: &HashMap<NodeId, Label>, target: NodeId) -> RawPath {
    let label = labels[&target];
    RawPath {
        segments: chain(labels, target),
        travel_time_s: label.time,
        cost: label.cost,
    }
}
