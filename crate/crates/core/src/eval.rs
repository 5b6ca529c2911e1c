//! Evaluation harness: accuracy against ground truth, the middle-point
//! test, temporal-alignment reports, and a synthetic grid-world generator
//! that supplies desk-scale ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::point_at_offset;
use crate::matcher::{derive_headings, match_point, GpsFix};
use crate::pipeline::{match_trajectory, MatchedTrajectory, PairOutcome, Trajectory};
use crate::roadnet::{NodeId, RoadNetwork, SegmentId, SegmentRecord};
use crate::router::{fastest_path, shortest_path, Heuristic, SearchStats};

/// Alignment bins group pairs by GPS travel time in windows of this width.
pub const ALIGNMENT_BIN_WIDTH_S: f64 = 30.0;

/// Truly traversed segment ids per trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    routes: BTreeMap<String, Vec<SegmentId>>,
}

impl GroundTruth {
    pub fn insert(&mut self, traj_id: impl Into<String>, route: Vec<SegmentId>) {
        self.routes.insert(traj_id.into(), route);
    }

    pub fn route(&self, traj_id: &str) -> Option<&[SegmentId]> {
        self.routes.get(traj_id).map(|r| r.as_slice())
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[SegmentId])> {
        self.routes.iter().map(|(id, r)| (id.as_str(), r.as_slice()))
    }
}

/// Share of ground-truth segments found in the matched result: the union of
/// pair-path segments and matched-point segments over the unique truth set.
pub fn accuracy(matched: &MatchedTrajectory, truth: &GroundTruth) -> Result<f64> {
    let route = truth
        .route(&matched.traj_id)
        .ok_or_else(|| Error::EmptyTruth(matched.traj_id.clone()))?;
    let truth_set: BTreeSet<SegmentId> = route.iter().copied().collect();
    if truth_set.is_empty() {
        return Err(Error::EmptyTruth(matched.traj_id.clone()));
    }
    let matched_set = matched.segment_set();
    let correct = truth_set.intersection(&matched_set).count();
    Ok(correct as f64 / truth_set.len() as f64)
}

/// Outcome of the middle-point test for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidpointScore {
    pub hits: usize,
    pub hidden: usize,
}

impl MidpointScore {
    pub fn ratio(&self) -> f64 {
        if self.hidden == 0 {
            0.0
        } else {
            self.hits as f64 / self.hidden as f64
        }
    }
}

/// Hide the middle fix of every consecutive triplet (the odd 0-based
/// indices, except a trailing fix with no completed triplet), re-match at
/// half rate, and score how many hidden fixes' full-rate matched segments
/// appear in the reconstructed pair path covering their time interval.
/// Stay pairs cover their endpoints' shared matched segments. Returns
/// `None` for trajectories with fewer than 3 fixes.
pub fn middle_point_test(
    net: &RoadNetwork,
    traj: &Trajectory,
    heuristic: Heuristic,
    k: usize,
) -> Result<Option<MidpointScore>> {
    let n = traj.fixes.len();
    if n < 3 {
        return Ok(None);
    }
    let full_fixes = derive_headings(&traj.fixes)
        .map_err(|e| Error::Trajectory(traj.id.clone(), e.to_string()))?;
    let hidden: Vec<usize> = (1..n - 1).step_by(2).collect();

    let kept: Vec<GpsFix> = traj
        .fixes
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 0 || *i == n - 1)
        .map(|(_, f)| *f)
        .collect();
    let down = Trajectory::new(traj.id.clone(), traj.user_id.clone(), kept)?;
    let matched = match_trajectory(net, &down, heuristic, k)?;

    let mut hits = 0;
    for &j in &hidden {
        let full_match = match_point(net, &full_fixes[j], k)?;
        let pair_index = (j - 1) / 2;
        let pair = &matched.pairs[pair_index];
        let hit = match &pair.outcome {
            PairOutcome::Path(p) => p.segments.contains(&full_match.segment),
            PairOutcome::Stay => {
                matched.matched_points[pair_index].segment == full_match.segment
                    || matched.matched_points[pair_index + 1].segment == full_match.segment
            }
            PairOutcome::NoPath => false,
        };
        if hit {
            hits += 1;
        }
    }
    Ok(Some(MidpointScore {
        hits,
        hidden: hidden.len(),
    }))
}

/// Mean middle-point score over a suite (trajectories with < 3 fixes are
/// skipped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MidpointSuite {
    pub mean_score: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn middle_point_suite(
    net: &RoadNetwork,
    trajectories: &[Trajectory],
    heuristic: Heuristic,
    k: usize,
) -> Result<MidpointSuite> {
    let mut scores = Vec::new();
    let mut skipped = 0;
    for traj in trajectories {
        match middle_point_test(net, traj, heuristic, k)? {
            Some(score) => scores.push(score.ratio()),
            None => skipped += 1,
        }
    }
    let mean = if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    Ok(MidpointSuite {
        mean_score: mean,
        evaluated: scores.len(),
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentBin {
    pub bin_start_s: f64,
    pub mean_path_time_s: f64,
    pub std_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub bins: Vec<AlignmentBin>,
    /// Mean over pairs of `|path_time - gps_time| / gps_time * 100`.
    pub mean_delta_pct: f64,
    pub pair_count: usize,
}

/// Bin `(gps_time, path_time)` pairs by GPS time and report per-bin path
/// time statistics plus the overall relative mismatch.
pub fn alignment_report(pairs: &[(f64, f64)]) -> AlignmentReport {
    let mut by_bin: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut delta_sum = 0.0;
    for &(gps, path) in pairs {
        by_bin
            .entry((gps / ALIGNMENT_BIN_WIDTH_S).floor() as i64)
            .or_default()
            .push(path);
        delta_sum += (path - gps).abs() / gps * 100.0;
    }
    let bins = by_bin
        .into_iter()
        .map(|(bin, values)| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            AlignmentBin {
                bin_start_s: bin as f64 * ALIGNMENT_BIN_WIDTH_S,
                mean_path_time_s: mean,
                std_s: var.sqrt(),
                count,
            }
        })
        .collect();
    AlignmentReport {
        bins,
        mean_delta_pct: if pairs.is_empty() {
            0.0
        } else {
            delta_sum / pairs.len() as f64
        },
        pair_count: pairs.len(),
    }
}

/// Collect the `(gps_time, path_time)` pairs that alignment reporting uses:
/// reconstructed non-stay pairs.
pub fn alignment_pairs(results: &[MatchedTrajectory]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for mt in results {
        for pair in &mt.pairs {
            if let PairOutcome::Path(p) = &pair.outcome {
                out.push((pair.gps_time_s, p.travel_time_s));
            }
        }
    }
    out
}

/// `alignment.csv`: `bin_start_s,mean_path_time_s,std_s,count`.
pub fn write_alignment_csv(path: impl AsRef<Path>, report: &AlignmentReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    w.write_record(["bin_start_s", "mean_path_time_s", "std_s", "count"])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for bin in &report.bins {
        w.write_record([
            format!("{:.0}", bin.bin_start_s),
            format!("{:.3}", bin.mean_path_time_s),
            format!("{:.3}", bin.std_s),
            bin.count.to_string(),
        ])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Truth CSV: `traj_id,segment_ids` with `;`-joined ordered ids.
pub fn write_truth_csv(path: impl AsRef<Path>, truth: &GroundTruth) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    w.write_record(["traj_id", "segment_ids"])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for (id, route) in truth.iter() {
        w.write_record([
            id.to_string(),
            route
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    let mut truth = GroundTruth::default();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row
            .get(0)
            .ok_or_else(|| Error::format(path, line, "missing traj_id"))?;
        let segs = row
            .get(1)
            .ok_or_else(|| Error::format(path, line, "missing segment_ids"))?;
        let route = if segs.is_empty() {
            Vec::new()
        } else {
            segs.split(';')
                .map(|s| s.parse::<u64>().map(SegmentId))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(path, line, "bad segment id"))?
        };
        truth.insert(id.to_string(), route);
    }
    Ok(truth)
}

/// Driver profile mix and sampling parameters for the synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Nodes per grid side (>= 2).
    pub grid_n: u64,
    pub spacing_m: f64,
    /// `(class name, speed m/s)`; streets cycle through classes row by row.
    pub speed_classes: Vec<(String, f64)>,
    pub trajectories: usize,
    pub sampling_interval_s: f64,
    pub noise_sigma_m: f64,
    /// Fraction of drivers that insert a random waypoint.
    pub detour_fraction: f64,
    /// Fraction of drivers that take the fastest (not shortest) route.
    pub fastest_fraction: f64,
    /// Restrict trips to a single row or column (unique shortest path);
    /// used by noiseless sanity suites.
    pub straight_trips: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            grid_n: 8,
            spacing_m: 100.0,
            speed_classes: vec![("residential".into(), 8.33), ("arterial".into(), 13.89)],
            trajectories: 100,
            sampling_interval_s: 40.0,
            noise_sigma_m: 10.0,
            detour_fraction: 0.0,
            fastest_fraction: 0.0,
            straight_trips: false,
        }
    }
}

/// A generated world: the network (with true class speeds), noisy
/// trajectories, per-trajectory route truth, and per-fix segment truth.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub records: Vec<SegmentRecord>,
    pub network: RoadNetwork,
    pub trajectories: Vec<Trajectory>,
    pub truth: GroundTruth,
    /// True segment under each fix, aligned with `trajectories`.
    pub fix_truth: Vec<Vec<SegmentId>>,
}

/// Synthetic world centered near Pisa.
const SYNTH_LAT0: f64 = 43.7;
const SYNTH_LON0: f64 = 10.4;

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

/// Deterministically generate a grid world with simulated drivers.
pub fn synth_world(cfg: &SynthConfig) -> Result<SynthWorld> {
    if cfg.grid_n < 2 {
        return Err(Error::Invalid("grid_n must be >= 2".into()));
    }
    if cfg.speed_classes.is_empty() {
        return Err(Error::Invalid("at least one speed class is required".into()));
    }
    let records = grid_records(cfg);
    let (network, _) = RoadNetwork::from_records(&records)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.noise_sigma_m > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma_m).expect("valid sigma"))
    } else {
        None
    };

    let mut trajectories = Vec::with_capacity(cfg.trajectories);
    let mut truth = GroundTruth::default();
    let mut fix_truth = Vec::with_capacity(cfg.trajectories);
    for trip in 0..cfg.trajectories {
        let (src, dst) = pick_trip(cfg, &mut rng);
        let route = build_route(&network, cfg, src, dst, &mut rng);
        let (fixes, per_fix) = simulate_route(&network, cfg, &route, trip, &mut rng, noise.as_ref());
        let id = trip.to_string();
        truth.insert(id.clone(), route);
        fix_truth.push(per_fix);
        trajectories.push(Trajectory::new(id, format!("u{}", trip % 17), fixes)?);
    }
    Ok(SynthWorld {
        records,
        network,
        trajectories,
        truth,
        fix_truth,
    })
}

/// Grid streets as WGS84 records: rows then columns, each street a pair of
/// opposite one-way segments sharing a class.
fn grid_records(cfg: &SynthConfig) -> Vec<SegmentRecord> {
    let g = cfg.grid_n;
    let projection = crate::geom::Projection::centered(SYNTH_LAT0, SYNTH_LON0);
    let half = (g - 1) as f64 * cfg.spacing_m / 2.0;
    let lonlat = |r: u64, c: u64| {
        let p = crate::geom::GeoPoint::new(c as f64 * cfg.spacing_m - half, r as f64 * cfg.spacing_m - half);
        let (lat, lon) = projection.to_wgs84(p);
        (round7(lon), round7(lat))
    };
    let node = |r: u64, c: u64| NodeId(r * g + c);
    let classes = &cfg.speed_classes;

    let mut records = Vec::new();
    let mut seg = 0u64;
    let mut street = |a: NodeId, b: NodeId, ll_a: (f64, f64), ll_b: (f64, f64), class: &(String, f64)| {
        let fwd = SegmentRecord {
            id: SegmentId(seg),
            from_node: a,
            to_node: b,
            road_class: class.0.clone(),
            speed_limit_mps: class.1,
            coords: vec![ll_a, ll_b],
        };
        let rev = SegmentRecord {
            id: SegmentId(seg + 1),
            from_node: b,
            to_node: a,
            road_class: class.0.clone(),
            speed_limit_mps: class.1,
            coords: vec![ll_b, ll_a],
        };
        seg += 2;
        records.push(fwd);
        records.push(rev);
    };
    for r in 0..g {
        let class = &classes[(r as usize) % classes.len()];
        for c in 0..g - 1 {
            street(node(r, c), node(r, c + 1), lonlat(r, c), lonlat(r, c + 1), class);
        }
    }
    for c in 0..g {
        let class = &classes[(g as usize + c as usize) % classes.len()];
        for r in 0..g - 1 {
            street(node(r, c), node(r + 1, c), lonlat(r, c), lonlat(r + 1, c), class);
        }
    }
    records
}

fn pick_trip(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (NodeId, NodeId) {
    let g = cfg.grid_n;
    let min_cells = (g / 2).max(2);
    loop {
        let (r1, c1) = (rng.gen_range(0..g), rng.gen_range(0..g));
        let (r2, c2) = (rng.gen_range(0..g), rng.gen_range(0..g));
        let manhattan = r1.abs_diff(r2) + c1.abs_diff(c2);
        if manhattan < min_cells {
            continue;
        }
        if cfg.straight_trips && r1 != r2 && c1 != c2 {
            continue;
        }
        return (NodeId(r1 * g + c1), NodeId(r2 * g + c2));
    }
}

/// The driver's true route, by profile.
fn build_route(
    net: &RoadNetwork,
    cfg: &SynthConfig,
    src: NodeId,
    dst: NodeId,
    rng: &mut ChaCha8Rng,
) -> Vec<SegmentId> {
    let mut stats = SearchStats::default();
    let roll: f64 = rng.gen();
    let direct_shortest = shortest_path(net, src, dst, &mut stats)
        .expect("grid is well formed")
        .expect("grid is strongly connected");
    if roll < cfg.detour_fraction {
        if let Some(route) = detour_route(net, cfg, src, dst, &direct_shortest, rng) {
            return route;
        }
        return direct_shortest.segments;
    }
    if roll < cfg.detour_fraction + cfg.fastest_fraction {
        return fastest_path(net, src, dst, &mut stats)
            .expect("grid is well formed")
            .expect("grid is strongly connected")
            .segments;
    }
    direct_shortest.segments
}

/// Route via a random waypoint, accepted when it is simple and at least 25%
/// slower than the direct shortest route (otherwise it is no detour at all).
fn detour_route(
    net: &RoadNetwork,
    cfg: &SynthConfig,
    src: NodeId,
    dst: NodeId,
    direct: &crate::router::MatchedPath,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<SegmentId>> {
    let g = cfg.grid_n;
    let mut stats = SearchStats::default();
    let direct_time = direct.travel_time_s;
    let mut best: Option<(f64, Vec<SegmentId>)> = None;
    for _ in 0..20 {
        let wp = NodeId(rng.gen_range(0..g * g));
        if wp == src || wp == dst {
            continue;
        }
        let Some(leg1) = shortest_path(net, src, wp, &mut stats).ok().flatten() else {
            continue;
        };
        let Some(leg2) = shortest_path(net, wp, dst, &mut stats).ok().flatten() else {
            continue;
        };
        let mut segments = leg1.segments;
        segments.extend(leg2.segments);
        if !is_simple(net, &segments) {
            continue;
        }
        let time: f64 = segments
            .iter()
            .map(|id| net.segment(*id).unwrap().travel_time_s)
            .sum();
        if time >= 1.25 * direct_time {
            return Some(segments);
        }
        if best.as_ref().is_none_or(|(t, _)| time > *t) && time > direct_time {
            best = Some((time, segments));
        }
    }
    best.map(|(_, segments)| segments)
}

fn is_simple(net: &RoadNetwork, route: &[SegmentId]) -> bool {
    if route.is_empty() {
        return false;
    }
    let mut nodes = vec![net.segment(route[0]).unwrap().from_node];
    for id in route {
        let seg = net.segment(*id).unwrap();
        if *nodes.last().unwrap() != seg.from_node {
            return false;
        }
        nodes.push(seg.to_node);
    }
    let mut unique = nodes.clone();
    unique.sort_unstable();
    unique.dedup();
    unique.len() == nodes.len()
}

/// Drive the route at true segment speeds, emitting a fix every sampling
/// interval plus one at arrival. Positions get isotropic Gaussian noise;
/// recorded speed and heading are the true values jittered by ±10%.
fn simulate_route(
    net: &RoadNetwork,
    cfg: &SynthConfig,
    route: &[SegmentId],
    trip: usize,
    rng: &mut ChaCha8Rng,
    noise: Option<&Normal<f64>>,
) -> (Vec<GpsFix>, Vec<SegmentId>) {
    let mut cum_time = vec![0.0];
    for id in route {
        let seg = net.segment(*id).unwrap();
        cum_time.push(cum_time.last().unwrap() + seg.travel_time_s);
    }
    let total_time = *cum_time.last().unwrap();
    let start = 1_000_000.0 + trip as f64 * 100_000.0;

    let mut times = Vec::new();
    let mut tau = 0.0;
    while tau < total_time - 1e-9 {
        times.push(tau);
        tau += cfg.sampling_interval_s;
    }
    times.push(total_time);

    let mut fixes = Vec::with_capacity(times.len());
    let mut per_fix = Vec::with_capacity(times.len());
    for &tau in &times {
        // Segment being traversed at tau (the last one at arrival).
        let idx = match cum_time[1..].iter().position(|&t| tau < t) {
            Some(i) => i,
            None => route.len() - 1,
        };
        let seg = net.segment(route[idx]).unwrap();
        let offset = (tau - cum_time[idx]) * seg.speed_mps;
        let mut pos = point_at_offset(&seg.polyline, offset);
        if let Some(n) = noise {
            pos.x += n.sample(rng);
            pos.y += n.sample(rng);
        }
        let speed = seg.speed_mps * (1.0 + rng.gen_range(-0.1..=0.1));
        let heading = (seg.heading_deg * (1.0 + rng.gen_range(-0.1..=0.1))).rem_euclid(360.0);
        fixes.push(GpsFix::new(start + tau, pos, Some(speed), Some(heading)));
        per_fix.push(seg.id);
    }
    (fixes, per_fix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::batch_match;
    use approx::assert_relative_eq;

    fn mini_world(seed: u64) -> SynthWorld {
        synth_world(&SynthConfig {
            seed,
            grid_n: 4,
            trajectories: 10,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn grid_counts_by_construction() {
        let world = mini_world(1);
        assert_eq!(world.network.node_count(), 16);
        assert_eq!(world.network.segment_count(), 48);
        assert_eq!(world.records.len(), 48);
    }

    #[test]
    fn synth_is_deterministic() {
        let a = mini_world(9);
        let b = mini_world(9);
        assert_eq!(a.records, b.records);
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.truth, b.truth);
        let c = mini_world(10);
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn synth_files_round_trip() {
        let world = mini_world(3);
        let dir = tempfile::tempdir().unwrap();
        let net_path = dir.path().join("network.csv");
        let traj_path = dir.path().join("trajectories.csv");
        let truth_path = dir.path().join("truth.csv");
        crate::roadnet::write_network_csv(&net_path, &world.records).unwrap();
        let (net, warnings) = crate::roadnet::load_network(&net_path).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(net.segment_count(), world.network.segment_count());

        crate::pipeline::write_trajectories_csv(
            &traj_path,
            &world.trajectories,
            &world.network.projection(),
        )
        .unwrap();
        let back =
            crate::pipeline::read_trajectories_csv(&traj_path, &net.projection()).unwrap();
        assert_eq!(back.len(), world.trajectories.len());
        for (a, b) in world.trajectories.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.fixes.len(), b.fixes.len());
            for (fa, fb) in a.fixes.iter().zip(&b.fixes) {
                assert!(fa.position.dist(fb.position) < 0.05);
            }
        }

        write_truth_csv(&truth_path, &world.truth).unwrap();
        let truth = read_truth_csv(&truth_path).unwrap();
        assert_eq!(truth, world.truth);
    }

    #[test]
    fn sampling_interval_matches_expected_hop_distance() {
        // 90 s at a uniform 15 m/s: mean inter-fix distance ~1.35 km.
        // Straight trips keep corners from shortening the chord.
        let world = synth_world(&SynthConfig {
            seed: 5,
            grid_n: 40,
            spacing_m: 100.0,
            speed_classes: vec![("street".into(), 15.0)],
            trajectories: 60,
            sampling_interval_s: 90.0,
            noise_sigma_m: 10.0,
            straight_trips: true,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut dists = Vec::new();
        for traj in &world.trajectories {
            for w in traj.fixes.windows(2) {
                // The trailing partial hop would bias the mean; keep full hops.
                if w[1].timestamp_s - w[0].timestamp_s > 89.0 {
                    dists.push(w[0].position.dist(w[1].position));
                }
            }
        }
        assert!(dists.len() > 50, "suite too small: {} hops", dists.len());
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        assert!(
            (mean - 1350.0).abs() / 1350.0 < 0.15,
            "mean hop {} m is outside 1350 m +/- 15%",
            mean
        );
    }

    #[test]
    fn noiseless_shortest_drivers_reconstruct_exactly() {
        let world = synth_world(&SynthConfig {
            seed: 11,
            grid_n: 6,
            trajectories: 20,
            noise_sigma_m: 0.0,
            detour_fraction: 0.0,
            fastest_fraction: 0.0,
            straight_trips: true,
            sampling_interval_s: 30.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let results = batch_match(&world.network, &world.trajectories, Heuristic::Shortest, 8, 1);
        for out in results {
            let mt = out.expect("trajectory matched");
            let acc = accuracy(&mt, &world.truth).unwrap();
            assert_relative_eq!(acc, 1.0);
        }
    }

    #[test]
    fn accuracy_set_arithmetic() {
        let world = mini_world(2);
        let results = batch_match(&world.network, &world.trajectories, Heuristic::Shortest, 8, 1);
        let mt = results[0].as_ref().unwrap().clone();

        // Perfect match against its own segment set.
        let mut truth = GroundTruth::default();
        let set: Vec<SegmentId> = mt.segment_set().into_iter().collect();
        truth.insert(mt.traj_id.clone(), set.clone());
        assert_relative_eq!(accuracy(&mt, &truth).unwrap(), 1.0);

        // 3 of 4 truth segments present.
        let mut three_of_four: Vec<SegmentId> = set.iter().take(3).copied().collect();
        three_of_four.push(SegmentId(999_999));
        let mut truth = GroundTruth::default();
        truth.insert(mt.traj_id.clone(), three_of_four);
        assert_relative_eq!(accuracy(&mt, &truth).unwrap(), 0.75);

        // Disjoint.
        let mut truth = GroundTruth::default();
        truth.insert(mt.traj_id.clone(), vec![SegmentId(999_998), SegmentId(999_999)]);
        assert_relative_eq!(accuracy(&mt, &truth).unwrap(), 0.0);

        // Empty truth errors.
        let mut truth = GroundTruth::default();
        truth.insert(mt.traj_id.clone(), Vec::new());
        assert!(accuracy(&mt, &truth).is_err());
    }

    #[test]
    fn midpoint_collinear_road_scores_one() {
        let net = crate::roadnet::PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 600.0, 0.0)
            .street(1, 2, 0, 1, "street", 10.0)
            .build();
        let fixes = vec![
            GpsFix::new(0.0, crate::geom::GeoPoint::new(50.0, 1.0), Some(10.0), None),
            GpsFix::new(20.0, crate::geom::GeoPoint::new(250.0, -1.0), Some(10.0), None),
            GpsFix::new(40.0, crate::geom::GeoPoint::new(450.0, 1.0), Some(10.0), None),
        ];
        let traj = Trajectory::new("t", "u", fixes).unwrap();
        for heuristic in [Heuristic::TimeAware, Heuristic::Shortest, Heuristic::Fastest] {
            let score = middle_point_test(&net, &traj, heuristic, 4).unwrap().unwrap();
            assert_eq!(score.hits, 1);
            assert_eq!(score.hidden, 1);
        }
    }

    #[test]
    fn midpoint_two_fixes_skipped() {
        let net = crate::roadnet::PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 600.0, 0.0)
            .street(1, 2, 0, 1, "street", 10.0)
            .build();
        let fixes = vec![
            GpsFix::new(0.0, crate::geom::GeoPoint::new(50.0, 1.0), None, Some(90.0)),
            GpsFix::new(20.0, crate::geom::GeoPoint::new(250.0, -1.0), None, Some(90.0)),
        ];
        let traj = Trajectory::new("t", "u", fixes).unwrap();
        assert!(middle_point_test(&net, &traj, Heuristic::Shortest, 4)
            .unwrap()
            .is_none());
    }

    /// Driver takes a 72 s side route while the direct edge takes 60 s; the
    /// GPS pair time is 72 s. The hidden middle fix sits on the side route,
    /// so shortest misses it and time-aware covers it.
    #[test]
    fn midpoint_detour_separates_heuristics() {
        let via_len = (600.0f64.powi(2) + 150.0f64.powi(2)).sqrt();
        let via_speed = via_len / 36.0;
        let net = crate::roadnet::PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 1200.0, 0.0)
            .node(2, 600.0, 150.0)
            .street(10, 11, 0, 1, "main", 20.0)
            .street(20, 22, 0, 2, "side", via_speed)
            .street(21, 23, 2, 1, "side", via_speed)
            .build();
        let fixes = vec![
            GpsFix::new(0.0, crate::geom::GeoPoint::new(0.0, 0.0), Some(via_speed), None),
            GpsFix::new(36.0, crate::geom::GeoPoint::new(600.0, 150.0), Some(via_speed), None),
            GpsFix::new(72.0, crate::geom::GeoPoint::new(1200.0, 0.0), Some(via_speed), None),
        ];
        let traj = Trajectory::new("detour", "u", fixes).unwrap();
        let ta = middle_point_test(&net, &traj, Heuristic::TimeAware, 4)
            .unwrap()
            .unwrap();
        let sp = middle_point_test(&net, &traj, Heuristic::Shortest, 4)
            .unwrap()
            .unwrap();
        assert_eq!(ta.ratio(), 1.0);
        assert_eq!(sp.ratio(), 0.0);
    }

    #[test]
    fn alignment_report_examples() {
        // Perfect alignment.
        let r = alignment_report(&[(50.0, 50.0), (110.0, 110.0)]);
        assert_relative_eq!(r.mean_delta_pct, 0.0);
        assert_eq!(r.pair_count, 2);

        // (100, 60) and (100, 140): both 40% off.
        let r = alignment_report(&[(100.0, 60.0), (100.0, 140.0)]);
        assert_relative_eq!(r.mean_delta_pct, 40.0);
        assert_eq!(r.bins.len(), 1);
        assert_relative_eq!(r.bins[0].bin_start_s, 90.0);
        assert_relative_eq!(r.bins[0].mean_path_time_s, 100.0);
        assert_relative_eq!(r.bins[0].std_s, 40.0);

        // Empty input: zero bins, no crash.
        let r = alignment_report(&[]);
        assert!(r.bins.is_empty());
        assert_relative_eq!(r.mean_delta_pct, 0.0);
    }

    #[test]
    fn alignment_bins_cover_all_pairs() {
        let pairs: Vec<(f64, f64)> = (0..57)
            .map(|i| (10.0 + i as f64 * 7.3, 12.0 + i as f64 * 6.9))
            .collect();
        let r = alignment_report(&pairs);
        let total: usize = r.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, pairs.len());
    }
}
