//! End-to-end trajectory matching: derive headings, match every fix, and
//! reconstruct the path of each consecutive-fix pair with the selected
//! heuristic over a per-pair split overlay.
//!
//! Pairs are independent; the shared network is immutable, so trajectories
//! (and pairs) parallelize freely and results are identical for any worker
//! count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Projection;
use crate::matcher::{derive_headings, match_point, GpsFix, MatchedPoint};
use crate::roadnet::{NetView, Overlay, RoadNetwork, SegmentId};
use crate::router::{route, Heuristic, MatchedPath, PairQuery, SearchStats};

/// Consecutive fixes closer than this are a stay: no path is reconstructed,
/// since the line speed of a stationary pair is meaningless.
pub const STAY_THRESHOLD_M: f64 = 10.0;

/// A time-ordered sequence of fixes for one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub user_id: String,
    pub fixes: Vec<GpsFix>,
}

impl Trajectory {
    /// Build a trajectory, checking that timestamps strictly increase.
    pub fn new(id: impl Into<String>, user_id: impl Into<String>, fixes: Vec<GpsFix>) -> Result<Self> {
        let id = id.into();
        for w in fixes.windows(2) {
            if !(w[1].timestamp_s > w[0].timestamp_s) {
                return Err(Error::Trajectory(
                    id,
                    format!(
                        "timestamps must strictly increase ({} then {})",
                        w[0].timestamp_s, w[1].timestamp_s
                    ),
                ));
            }
        }
        Ok(Trajectory {
            id,
            user_id: user_id.into(),
            fixes,
        })
    }
}

/// What happened to one consecutive-fix pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    /// Reconstructed path; segment ids are base-network ids (split halves
    /// are reported as their parent).
    Path(MatchedPath),
    /// Fixes closer than the stay threshold; nothing to reconstruct.
    Stay,
    /// Target unreachable or search abandoned.
    NoPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub gps_time_s: f64,
    pub straight_line_m: f64,
    pub outcome: PairOutcome,
}

impl PairResult {
    pub fn path_time_s(&self) -> Option<f64> {
        match &self.outcome {
            PairOutcome::Path(p) => Some(p.travel_time_s),
            PairOutcome::Stay => Some(0.0),
            PairOutcome::NoPath => None,
        }
    }

    /// GPS time minus path time, when a path exists.
    pub fn delta_s(&self) -> Option<f64> {
        self.path_time_s().map(|t| self.gps_time_s - t)
    }

    pub fn is_stay(&self) -> bool {
        matches!(self.outcome, PairOutcome::Stay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTrajectory {
    pub traj_id: String,
    pub user_id: String,
    pub heuristic: Heuristic,
    pub matched_points: Vec<MatchedPoint>,
    /// One entry per consecutive-fix pair (`fixes.len() - 1`).
    pub pairs: Vec<PairResult>,
    pub stats: SearchStats,
}

impl MatchedTrajectory {
    /// Union of all pair-path segments and matched-point segments, as
    /// base-network ids.
    pub fn segment_set(&self) -> std::collections::BTreeSet<SegmentId> {
        let mut set: std::collections::BTreeSet<SegmentId> =
            self.matched_points.iter().map(|m| m.segment).collect();
        for pair in &self.pairs {
            if let PairOutcome::Path(p) = &pair.outcome {
                set.extend(p.segments.iter().copied());
            }
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedTrajectory {
    pub traj_id: String,
    pub reason: String,
}

pub type TrajOutcome = std::result::Result<MatchedTrajectory, RejectedTrajectory>;

/// Match one trajectory. Speed enrichment must already be applied to `net`.
pub fn match_trajectory(
    net: &RoadNetwork,
    traj: &Trajectory,
    heuristic: Heuristic,
    k: usize,
) -> Result<MatchedTrajectory> {
    let fixes = derive_headings(&traj.fixes)
        .map_err(|e| Error::Trajectory(traj.id.clone(), e.to_string()))?;
    let matched_points: Vec<MatchedPoint> = fixes
        .iter()
        .map(|f| match_point(net, f, k))
        .collect::<Result<_>>()
        .map_err(|e| Error::Trajectory(traj.id.clone(), e.to_string()))?;

    let mut pairs = Vec::with_capacity(matched_points.len().saturating_sub(1));
    let mut stats = SearchStats::default();
    for w in matched_points.windows(2) {
        pairs.push(match_pair(net, &w[0], &w[1], heuristic, &mut stats)?);
    }
    Ok(MatchedTrajectory {
        traj_id: traj.id.clone(),
        user_id: traj.user_id.clone(),
        heuristic,
        matched_points,
        pairs,
        stats,
    })
}

/// Reconstruct the path between two consecutive matched points.
fn match_pair(
    net: &RoadNetwork,
    a: &MatchedPoint,
    b: &MatchedPoint,
    heuristic: Heuristic,
    stats: &mut SearchStats,
) -> Result<PairResult> {
    let gps_time_s = b.fix.timestamp_s - a.fix.timestamp_s;
    let straight_line_m = a.fix.position.dist(b.fix.position);
    if straight_line_m < STAY_THRESHOLD_M {
        return Ok(PairResult {
            gps_time_s,
            straight_line_m,
            outcome: PairOutcome::Stay,
        });
    }

    let mut overlay = Overlay::new(net);
    let source = overlay.split_at_projection(a.segment, a.projection)?;
    let target = overlay.split_at_projection(b.segment, b.projection)?;
    let heading_ab = a.fix.position.bearing_to(b.fix.position);
    let q = PairQuery::new(source, target, gps_time_s, straight_line_m, heading_ab)?;
    let outcome = match route(&overlay, heuristic, &q, stats)? {
        None => PairOutcome::NoPath,
        Some(mut path) => {
            // Report split halves as their base parent, collapsing the
            // duplicate that appears when a path runs straight through a
            // split node.
            let mut parents: Vec<SegmentId> = path
                .segments
                .iter()
                .map(|&id| overlay.parent_of(id))
                .collect();
            parents.dedup();
            path.segments = parents;
            PairOutcome::Path(path)
        }
    };
    Ok(PairResult {
        gps_time_s,
        straight_line_m,
        outcome,
    })
}

/// Match a batch of trajectories. Per-trajectory failures are isolated as
/// rejections; output order always follows input order, so results are
/// identical for any worker count.
pub fn batch_match(
    net: &RoadNetwork,
    trajectories: &[Trajectory],
    heuristic: Heuristic,
    k: usize,
    workers: usize,
) -> Vec<TrajOutcome> {
    let run_one = |traj: &Trajectory| -> TrajOutcome {
        match_trajectory(net, traj, heuristic, k).map_err(|e| RejectedTrajectory {
            traj_id: traj.id.clone(),
            reason: e.to_string(),
        })
    };
    if workers <= 1 {
        return trajectories.iter().map(run_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| trajectories.par_iter().map(run_one).collect())
}

/// Header of the matched-output record format.
pub const PAIR_RECORD_HEADER: &str =
    "traj_id,pair_index,gps_time_s,path_time_s,heuristic,segment_ids,flag";

/// Render one trajectory's pairs as newline-delimited records:
/// `traj_id,pair_index,gps_time_s,path_time_s,heuristic,segment_ids,flag`
/// with `;`-joined segment ids. Stay pairs carry flag `stay` and an empty
/// segment list; unreachable pairs carry `no_path` and an empty path time.
pub fn format_pair_records(mt: &MatchedTrajectory, out: &mut String) {
    use std::fmt::Write;
    for (idx, pair) in mt.pairs.iter().enumerate() {
        let (path_time, segments, flag) = match &pair.outcome {
            PairOutcome::Path(p) => (
                format!("{:.3}", p.travel_time_s),
                p.segments
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                "",
            ),
            PairOutcome::Stay => ("0.000".to_string(), String::new(), "stay"),
            PairOutcome::NoPath => (String::new(), String::new(), "no_path"),
        };
        writeln!(
            out,
            "{},{},{:.3},{},{},{},{}",
            mt.traj_id, idx, pair.gps_time_s, path_time, mt.heuristic, segments, flag
        )
        .expect("string write");
    }
}

/// One parsed matched-output record.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub traj_id: String,
    pub pair_index: usize,
    pub gps_time_s: f64,
    pub path_time_s: Option<f64>,
    pub heuristic: String,
    pub segments: Vec<SegmentId>,
    pub flag: String,
}

/// Parse a matched-output file produced by [`format_pair_records`].
pub fn read_pair_records(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line == PAIR_RECORD_HEADER {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(
                path,
                lineno as u64 + 1,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let bad = |msg: &str| Error::format(path, lineno as u64 + 1, msg);
        let segments = if fields[5].is_empty() {
            Vec::new()
        } else {
            fields[5]
                .split(';')
                .map(|s| s.parse::<u64>().map(SegmentId))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad segment id"))?
        };
        out.push(PairRecord {
            traj_id: fields[0].to_string(),
            pair_index: fields[1].parse().map_err(|_| bad("bad pair_index"))?,
            gps_time_s: fields[2].parse().map_err(|_| bad("bad gps_time_s"))?,
            path_time_s: if fields[3].is_empty() {
                None
            } else {
                Some(fields[3].parse().map_err(|_| bad("bad path_time_s"))?)
            },
            heuristic: fields[4].to_string(),
            segments,
            flag: fields[6].to_string(),
        });
    }
    Ok(out)
}

/// Read the trajectory CSV
/// (`user_id,traj_id,timestamp_s,lat,lon,speed_mps,heading_deg`, sorted by
/// trajectory then timestamp; empty cells for absent speed/heading). WGS84
/// positions are projected with `projection`, normally the network's.
pub fn read_trajectories_csv(
    path: impl AsRef<Path>,
    projection: &Projection,
) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    let mut rows: Vec<(String, String, GpsFix)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::format(path, line, msg);
        let get = |i: usize, name: &str| {
            row.get(i)
                .map(str::trim)
                .ok_or_else(|| bad(format!("missing field `{}`", name)))
        };
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            get(i, name)?
                .parse()
                .map_err(|_| bad(format!("field `{}` is not a number", name)))
        };
        let opt_f64 = |i: usize, name: &str| -> Result<Option<f64>> {
            let s = get(i, name)?;
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| bad(format!("field `{}` is not a number", name)))
            }
        };
        let (lat, lon) = (parse_f64(3, "lat")?, parse_f64(4, "lon")?);
        let fix = GpsFix::new(
            parse_f64(2, "timestamp_s")?,
            projection.to_planar(lat, lon),
            opt_f64(5, "speed_mps")?,
            opt_f64(6, "heading_deg")?,
        );
        rows.push((get(0, "user_id")?.to_string(), get(1, "traj_id")?.to_string(), fix));
    }

    // Required sort order: (traj_id, timestamp_s).
    for w in rows.windows(2) {
        let (ref _u1, ref t1, f1) = w[0];
        let (ref _u2, ref t2, f2) = w[1];
        if t1 == t2 && !(f2.timestamp_s > f1.timestamp_s) {
            return Err(Error::Trajectory(
                t1.clone(),
                "fixes are not sorted by strictly increasing timestamp".into(),
            ));
        }
    }

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (user, traj_id, fix) in rows {
        match seen.get(&traj_id) {
            Some(&idx) => {
                if idx + 1 != trajectories.len() {
                    return Err(Error::Trajectory(
                        traj_id,
                        "file is not sorted by traj_id (trajectory split into blocks)".into(),
                    ));
                }
                trajectories[idx].fixes.push(fix);
            }
            None => {
                trajectories.push(Trajectory {
                    id: traj_id.clone(),
                    user_id: user,
                    fixes: vec![fix],
                });
                seen.insert(traj_id, trajectories.len() - 1);
            }
        }
    }
    Ok(trajectories)
}

/// Write trajectories in the CSV format read by [`read_trajectories_csv`].
pub fn write_trajectories_csv(
    path: impl AsRef<Path>,
    trajectories: &[Trajectory],
    projection: &Projection,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    w.write_record([
        "user_id",
        "traj_id",
        "timestamp_s",
        "lat",
        "lon",
        "speed_mps",
        "heading_deg",
    ])
    .map_err(|e| Error::Invalid(e.to_string()))?;
    for traj in trajectories {
        for fix in &traj.fixes {
            let (lat, lon) = projection.to_wgs84(fix.position);
            w.write_record([
                traj.user_id.clone(),
                traj.id.clone(),
                format!("{:.3}", fix.timestamp_s),
                format!("{:.7}", lat),
                format!("{:.7}", lon),
                fix.speed_mps.map_or(String::new(), |v| format!("{:.3}", v)),
                fix.heading_deg.map_or(String::new(), |v| format!("{:.3}", v)),
            ])
            .map_err(|e| Error::Invalid(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
