//! Gravity-model point-to-segment matching.
//!
//! Each fix is scored against its k nearest segments by two normalized
//! attractions: distance share `w_d = 1 - dist/Σdist` and heading share
//! `w_theta = 1 - ang/Σang`, combined as `gf = w_d * w_theta`. The fix is
//! assigned to the segment with the strongest force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::GeoPoint;
use crate::roadnet::{RoadNetwork, SegmentId};

/// Paper-recommended candidate count.
pub const DEFAULT_KNN: usize = 8;

/// One GPS observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    /// Epoch seconds.
    pub timestamp_s: f64,
    pub position: GeoPoint,
    pub speed_mps: Option<f64>,
    /// Degrees clockwise from north in `[0, 360)`.
    pub heading_deg: Option<f64>,
}

impl GpsFix {
    pub fn new(
        timestamp_s: f64,
        position: GeoPoint,
        speed_mps: Option<f64>,
        heading_deg: Option<f64>,
    ) -> Self {
        GpsFix {
            timestamp_s,
            position,
            speed_mps,
            heading_deg: heading_deg.map(|h| h.rem_euclid(360.0)),
        }
    }
}

/// A candidate segment with its gravity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub segment: SegmentId,
    pub dist_m: f64,
    /// Heading difference in `[0, 180]`.
    pub ang_deg: f64,
    pub w_d: f64,
    pub w_theta: f64,
    pub gf: f64,
}

/// The winning segment for a fix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPoint {
    pub fix: GpsFix,
    pub segment: SegmentId,
    /// Gravity force of the winner.
    pub weight: f64,
    /// Closest point of the winning segment to the fix.
    pub projection: GeoPoint,
}

/// Smallest rotation between two headings, degrees in `[0, 180]`.
pub fn angular_difference(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Fill in missing headings with the bearing toward the next fix; the last
/// fix inherits the previous bearing. Recorded headings are never touched.
pub fn derive_headings(fixes: &[GpsFix]) -> Result<Vec<GpsFix>> {
    if fixes.iter().all(|f| f.heading_deg.is_some()) {
        return Ok(fixes.to_vec());
    }
    if fixes.len() < 2 {
        return Err(Error::Heading(
            "trajectory has a single fix and no recorded heading".into(),
        ));
    }
    // Bearing of each hop, skipping zero-displacement hops.
    let mut out = fixes.to_vec();
    let mut last_bearing: Option<f64> = None;
    for i in 0..out.len() {
        let bearing = if i + 1 < out.len() {
            let (a, b) = (out[i].position, out[i + 1].position);
            if a == b {
                last_bearing.or_else(|| next_bearing(fixes, i + 1))
            } else {
                Some(a.bearing_to(b))
            }
        } else {
            last_bearing
        };
        if let Some(b) = bearing {
            last_bearing = Some(b);
            if out[i].heading_deg.is_none() {
                out[i].heading_deg = Some(b);
            }
        } else if out[i].heading_deg.is_none() {
            return Err(Error::Heading(
                "all fixes are co-located; bearing is undefined".into(),
            ));
        }
    }
    Ok(out)
}

fn next_bearing(fixes: &[GpsFix], from: usize) -> Option<f64> {
    fixes[from..]
        .windows(2)
        .find(|w| w[0].position != w[1].position)
        .map(|w| w[0].position.bearing_to(w[1].position))
}

/// Distance and heading shares for a candidate set, as `(w_d, w_theta)`
/// per candidate. A zero sum (all candidates at distance 0, or all aligned)
/// degenerates to weight 1 for everyone.
pub fn gravity_weights(dists_and_angs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let dist_sum: f64 = dists_and_angs.iter().map(|(d, _)| d).sum();
    let ang_sum: f64 = dists_and_angs.iter().map(|(_, a)| a).sum();
    dists_and_angs
        .iter()
        .map(|&(d, a)| {
            let w_d = if dist_sum > 0.0 { 1.0 - d / dist_sum } else { 1.0 };
            let w_t = if ang_sum > 0.0 { 1.0 - a / ang_sum } else { 1.0 };
            (w_d, w_t)
        })
        .collect()
}

/// Score the k nearest segments for a fix. The fix must carry a heading
/// (see [`derive_headings`]).
pub fn gravity_candidates(net: &RoadNetwork, fix: &GpsFix, k: usize) -> Result<Vec<Candidate>> {
    let heading = fix
        .heading_deg
        .ok_or_else(|| Error::Heading("fix has no heading; derive headings first".into()))?;
    let nearest = net.k_nearest_segments(fix.position, k)?;
    let pairs: Vec<(f64, f64)> = nearest
        .iter()
        .map(|&(id, dist)| {
            let seg = net.segment(id).expect("k-NN returns live segments");
            (dist, angular_difference(seg.heading_deg, heading))
        })
        .collect();
    let weights = gravity_weights(&pairs);
    Ok(nearest
        .iter()
        .zip(pairs)
        .zip(weights)
        .map(|((&(id, _), (dist, ang)), (w_d, w_theta))| Candidate {
            segment: id,
            dist_m: dist,
            ang_deg: ang,
            w_d,
            w_theta,
            gf: w_d * w_theta,
        })
        .collect())
}

/// Match a fix to the segment with the strongest gravity force. Ties fall
/// to the smaller distance, then the smaller segment id.
pub fn match_point(net: &RoadNetwork, fix: &GpsFix, k: usize) -> Result<MatchedPoint> {
    let candidates = gravity_candidates(net, fix, k)?;
    let winner = candidates
        .iter()
        .max_by(|a, b| {
            a.gf.partial_cmp(&b.gf)
                .unwrap()
                .then(b.dist_m.partial_cmp(&a.dist_m).unwrap())
                .then(b.segment.cmp(&a.segment))
        })
        .expect("candidate set is non-empty");
    let projection = net
        .segment(winner.segment)
        .expect("winner is a live segment")
        .project(fix.position)
        .point;
    Ok(MatchedPoint {
        fix: *fix,
        segment: winner.segment,
        weight: winner.gf,
        projection,
    })
}
