//! Per-segment speed estimation from matched GPS points.
//!
//! Observed segments get the gravity-weighted mean of their fixes' speeds;
//! unobserved segments inherit the mean of their already-assigned same-class
//! neighbors by breadth-first spreading; whatever is left falls back to the
//! speed limit from the network file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::roadnet::{NodeId, RoadNetwork, SegmentId};

/// Fixes slower than this are treated as stationary and discarded; parked
/// cars would otherwise drag segment speeds toward zero.
pub const MIN_OBSERVED_SPEED_MPS: f64 = 0.5;

/// One matched fix contributing to a segment's speed estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedObservation {
    pub segment: SegmentId,
    /// Gravity force of the match.
    pub weight: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Spread,
    Default,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Observed => "observed",
            Provenance::Spread => "spread",
            Provenance::Default => "default",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "observed" => Ok(Provenance::Observed),
            "spread" => Ok(Provenance::Spread),
            "default" => Ok(Provenance::Default),
            other => Err(format!("unknown provenance `{}`", other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEntry {
    pub speed_mps: f64,
    pub support: u64,
    pub provenance: Provenance,
}

/// Finalized per-segment speeds. Total over the network once spreading ran.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeedModel {
    entries: BTreeMap<SegmentId, SpeedEntry>,
}

impl SpeedModel {
    pub fn get(&self, id: SegmentId) -> Option<SpeedEntry> {
        self.entries.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SegmentId, SpeedEntry)> + '_ {
        self.entries.iter().map(|(&id, &e)| (id, e))
    }
}

/// Running weighted-mean sums, mergeable across workers.
#[derive(Debug, Clone, Default)]
pub struct SpeedAccumulator {
    sums: BTreeMap<SegmentId, Sums>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    weighted_speed: f64,
    weight: f64,
    count: u64,
}

impl SpeedAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one observation in. Stationary fixes are discarded; zero-weight
    /// observations leave the sums unchanged.
    pub fn accumulate(&mut self, obs: SpeedObservation) {
        debug_assert!(obs.weight >= 0.0 && obs.speed_mps >= 0.0);
        if obs.speed_mps < MIN_OBSERVED_SPEED_MPS || obs.weight == 0.0 {
            return;
        }
        let sums = self.sums.entry(obs.segment).or_default();
        sums.weighted_speed += obs.weight * obs.speed_mps;
        sums.weight += obs.weight;
        sums.count += 1;
    }

    pub fn merge(&mut self, other: SpeedAccumulator) {
        for (seg, s) in other.sums {
            let sums = self.sums.entry(seg).or_default();
            sums.weighted_speed += s.weighted_speed;
            sums.weight += s.weight;
            sums.count += s.count;
        }
    }

    /// Weighted means for every segment with positive total weight.
    pub fn finalize(&self) -> SpeedModel {
        let entries = self
            .sums
            .iter()
            .filter(|(_, s)| s.weight > 0.0)
            .map(|(&seg, s)| {
                (
                    seg,
                    SpeedEntry {
                        speed_mps: s.weighted_speed / s.weight,
                        support: s.count,
                        provenance: Provenance::Observed,
                    },
                )
            })
            .collect();
        SpeedModel { entries }
    }
}

/// Complete an observed-only model over the whole network.
///
/// Level-synchronous breadth-first spreading: each round, every unassigned
/// segment with at least one assigned same-class neighbor (sharing a node)
/// takes the mean speed of those neighbors; the round's assignments commit
/// together so iteration order cannot matter. Segments no round can reach
/// fall back to their speed limit.
pub fn spread_speeds(net: &RoadNetwork, observed: &SpeedModel) -> SpeedModel {
    let mut entries = observed.entries.clone();
    entries.retain(|id, _| net.segment(*id).is_some());

    // Segment neighborhood: segments sharing either endpoint.
    let mut by_node: BTreeMap<NodeId, Vec<SegmentId>> = BTreeMap::new();
    for seg in net.segments() {
        by_node.entry(seg.from_node).or_default().push(seg.id);
        by_node.entry(seg.to_node).or_default().push(seg.id);
    }

    loop {
        let mut assigned_this_round: Vec<(SegmentId, SpeedEntry)> = Vec::new();
        for seg in net.segments() {
            if entries.contains_key(&seg.id) {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0u64;
            for node in [seg.from_node, seg.to_node] {
                for &other in by_node.get(&node).into_iter().flatten() {
                    if other == seg.id {
                        continue;
                    }
                    let other_seg = net.segment(other).unwrap();
                    if other_seg.road_class != seg.road_class {
                        continue;
                    }
                    if let Some(e) = entries.get(&other) {
                        sum += e.speed_mps;
                        n += 1;
                    }
                }
            }
            if n > 0 {
                assigned_this_round.push((
                    seg.id,
                    SpeedEntry {
                        speed_mps: sum / n as f64,
                        support: 0,
                        provenance: Provenance::Spread,
                    },
                ));
            }
        }
        if assigned_this_round.is_empty() {
            break;
        }
        entries.extend(assigned_this_round);
    }

    for seg in net.segments() {
        entries.entry(seg.id).or_insert(SpeedEntry {
            speed_mps: seg.speed_limit_mps,
            support: 0,
            provenance: Provenance::Default,
        });
    }
    SpeedModel { entries }
}

/// Write the model's speeds and travel times onto the network. The model
/// must cover every segment.
pub fn apply_model(net: &mut RoadNetwork, model: &SpeedModel) -> Result<()> {
    let ids: Vec<SegmentId> = net.segments().map(|s| s.id).collect();
    for id in &ids {
        if model.get(*id).is_none() {
            return Err(Error::ModelMissingSegment(*id));
        }
    }
    for id in ids {
        let speed = model.get(id).unwrap().speed_mps;
        net.segment_mut(id).unwrap().set_speed(speed);
    }
    Ok(())
}

/// Model CSV: `segment_id,speed_mps,support,provenance`.
pub fn write_model_csv(path: impl AsRef<Path>, model: &SpeedModel) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    w.write_record(["segment_id", "speed_mps", "support", "provenance"])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for (id, entry) in model.iter() {
        w.write_record([
            id.to_string(),
            format!("{:.6}", entry.speed_mps),
            entry.support.to_string(),
            entry.provenance.to_string(),
        ])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_model_csv(path: impl AsRef<Path>) -> Result<SpeedModel> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    let mut entries = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: &str| Error::format(path, line, msg);
        let id: u64 = row
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad segment_id"))?;
        let speed: f64 = row
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad speed_mps"))?;
        if !(speed > 0.0) {
            return Err(bad("speed_mps must be > 0"));
        }
        let support: u64 = row
            .get(2)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad support"))?;
        let provenance: Provenance = row
            .get(3)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad provenance"))?;
        entries.insert(
            SegmentId(id),
            SpeedEntry {
                speed_mps: speed,
                support,
                provenance,
            },
        );
    }
    Ok(SpeedModel { entries })
}
