//! Road-network representation: directed segment graph, CSV loading,
//! k-nearest-segment queries, and per-query split overlays.
//!
//! Two-way streets are stored as two opposite directed segments, each with
//! its own heading. After loading and speed enrichment the network is
//! immutable; path queries that need to start or end mid-segment apply an
//! [`Overlay`] that splits segments locally without touching the base graph.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    polyline_length, project_to_polyline, split_polyline, GeoPoint, PolylineProjection, Projection,
};
use crate::spatial::{Aabb, SegmentRTree};

/// Splits this close to an existing endpoint reuse the endpoint instead of
/// creating a degenerate sliver segment.
const SPLIT_ENDPOINT_EPS_M: f64 = 1e-6;

/// Node-id coordinate consistency budget when loading (same id must map to
/// the same position).
const NODE_CONSISTENCY_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed road segment with geometry and a learned (or default) speed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: SegmentId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub polyline: Vec<GeoPoint>,
    pub length_m: f64,
    /// Bearing from the first to the last polyline vertex, degrees clockwise
    /// from north in `[0, 360)`.
    pub heading_deg: f64,
    pub road_class: String,
    /// Speed limit from the network file; the fallback when no speed is learned.
    pub speed_limit_mps: f64,
    pub speed_mps: f64,
    pub travel_time_s: f64,
}

impl RoadSegment {
    pub(crate) fn set_speed(&mut self, speed_mps: f64) {
        self.speed_mps = speed_mps;
        self.travel_time_s = self.length_m / speed_mps;
    }

    /// Closest point of this segment to `p`.
    pub fn project(&self, p: GeoPoint) -> PolylineProjection {
        project_to_polyline(&self.polyline, p)
    }
}

/// One row of the network CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub id: SegmentId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub road_class: String,
    pub speed_limit_mps: f64,
    /// WGS84 vertices as `(lon, lat)` pairs, matching WKT axis order.
    pub coords: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: BTreeMap<NodeId, GeoPoint>,
    segments: BTreeMap<SegmentId, RoadSegment>,
    adjacency: BTreeMap<NodeId, Vec<SegmentId>>,
    index: SegmentRTree,
    projection: Projection,
    max_node_id: u64,
    max_segment_id: u64,
}

impl RoadNetwork {
    /// Assemble a network from WGS84 segment records. The planar projection
    /// is centered on the centroid of all vertices. Zero-length segments are
    /// dropped with a warning; structural defects are errors.
    pub fn from_records(records: &[SegmentRecord]) -> Result<(Self, Vec<String>)> {
        if records.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let (mut lat_sum, mut lon_sum, mut n) = (0.0, 0.0, 0usize);
        for rec in records {
            for &(lon, lat) in &rec.coords {
                lat_sum += lat;
                lon_sum += lon;
                n += 1;
            }
        }
        let projection = Projection::centered(lat_sum / n as f64, lon_sum / n as f64);

        let mut warnings = Vec::new();
        let mut nodes: BTreeMap<NodeId, GeoPoint> = BTreeMap::new();
        let mut segments: BTreeMap<SegmentId, RoadSegment> = BTreeMap::new();

        for rec in records {
            let polyline: Vec<GeoPoint> = rec
                .coords
                .iter()
                .map(|&(lon, lat)| projection.to_planar(lat, lon))
                .collect();
            let length = polyline_length(&polyline);
            if length <= 0.0 {
                warnings.push(format!("segment {}: zero length, dropped", rec.id));
                continue;
            }
            if segments.contains_key(&rec.id) {
                return Err(Error::DuplicateSegment(rec.id));
            }
            for (node, pos) in [
                (rec.from_node, polyline[0]),
                (rec.to_node, *polyline.last().unwrap()),
            ] {
                match nodes.get(&node) {
                    None => {
                        nodes.insert(node, pos);
                    }
                    Some(&existing) => {
                        let delta = existing.dist(pos);
                        if delta > NODE_CONSISTENCY_M {
                            return Err(Error::InconsistentNode {
                                node,
                                delta_m: delta,
                            });
                        }
                    }
                }
            }
            let heading = polyline[0].bearing_to(*polyline.last().unwrap());
            let speed = rec.speed_limit_mps;
            segments.insert(
                rec.id,
                RoadSegment {
                    id: rec.id,
                    from_node: rec.from_node,
                    to_node: rec.to_node,
                    length_m: length,
                    heading_deg: heading,
                    road_class: rec.road_class.clone(),
                    speed_limit_mps: rec.speed_limit_mps,
                    speed_mps: speed,
                    travel_time_s: length / speed,
                    polyline,
                },
            );
        }
        if segments.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        Ok((Self::assemble(nodes, segments, projection), warnings))
    }

    fn assemble(
        nodes: BTreeMap<NodeId, GeoPoint>,
        segments: BTreeMap<SegmentId, RoadSegment>,
        projection: Projection,
    ) -> Self {
        let mut adjacency: BTreeMap<NodeId, Vec<SegmentId>> =
            nodes.keys().map(|&id| (id, Vec::new())).collect();
        for seg in segments.values() {
            adjacency.get_mut(&seg.from_node).unwrap().push(seg.id);
        }
        for out in adjacency.values_mut() {
            out.sort_unstable();
        }
        let items: Vec<(SegmentId, Aabb)> = segments
            .values()
            .map(|s| (s.id, Aabb::of_polyline(&s.polyline)))
            .collect();
        let index = SegmentRTree::bulk_load(items);
        let max_node_id = nodes.keys().map(|n| n.0).max().unwrap_or(0);
        let max_segment_id = segments.keys().map(|s| s.0).max().unwrap_or(0);
        RoadNetwork {
            nodes,
            segments,
            adjacency,
            index,
            projection,
            max_node_id,
            max_segment_id,
        }
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = &RoadSegment> {
        self.segments.values()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, GeoPoint)> + '_ {
        self.nodes.iter().map(|(&id, &p)| (id, p))
    }

    pub fn segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        self.segments.get(&id)
    }

    pub fn outgoing_base(&self, node: NodeId) -> &[SegmentId] {
        self.adjacency.get(&node).map_or(&[], |v| v.as_slice())
    }

    pub(crate) fn segment_mut(&mut self, id: SegmentId) -> Option<&mut RoadSegment> {
        self.segments.get_mut(&id)
    }

    /// The `k` segments nearest to `p` by clamped point-to-polyline distance,
    /// ascending, ties broken by ascending segment id.
    pub fn k_nearest_segments(&self, p: GeoPoint, k: usize) -> Result<Vec<(SegmentId, f64)>> {
        self.k_nearest_segments_counted(p, k).map(|(lst, _)| lst)
    }

    /// Same as [`k_nearest_segments`](Self::k_nearest_segments) but also
    /// reports how many index entries the query visited.
    pub fn k_nearest_segments_counted(
        &self,
        p: GeoPoint,
        k: usize,
    ) -> Result<(Vec<(SegmentId, f64)>, u64)> {
        if k == 0 {
            return Err(Error::Invalid("k must be >= 1".into()));
        }
        if self.segments.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let refine = |id: SegmentId| self.segments[&id].project(p).distance;
        Ok(self.index.k_nearest(p, k, refine))
    }
}

/// Read-only view of a network, with or without an overlay applied.
pub trait NetView {
    fn segment(&self, id: SegmentId) -> Option<&RoadSegment>;
    fn node_pos(&self, id: NodeId) -> Option<GeoPoint>;
    /// Outgoing segment ids, ascending.
    fn outgoing(&self, node: NodeId) -> Vec<SegmentId>;
    /// Base-network id a (possibly split) segment descends from.
    fn parent_of(&self, id: SegmentId) -> SegmentId;
}

impl NetView for RoadNetwork {
    fn segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        self.segments.get(&id)
    }

    fn node_pos(&self, id: NodeId) -> Option<GeoPoint> {
        self.nodes.get(&id).copied()
    }

    fn outgoing(&self, node: NodeId) -> Vec<SegmentId> {
        self.adjacency.get(&node).cloned().unwrap_or_default()
    }

    fn parent_of(&self, id: SegmentId) -> SegmentId {
        id
    }
}

/// Ephemeral per-query view that can split segments at projection points.
/// The base network is never mutated, so concurrent queries each hold their
/// own overlay.
#[derive(Debug)]
pub struct Overlay<'n> {
    base: &'n RoadNetwork,
    extra_nodes: BTreeMap<NodeId, GeoPoint>,
    extra_segments: BTreeMap<SegmentId, RoadSegment>,
    extra_outgoing: BTreeMap<NodeId, Vec<SegmentId>>,
    removed: BTreeSet<SegmentId>,
    /// Split segment -> its two halves, in arc order.
    halves: BTreeMap<SegmentId, (SegmentId, SegmentId)>,
    /// Overlay segment -> base-network ancestor.
    parent: BTreeMap<SegmentId, SegmentId>,
    next_node: u64,
    next_segment: u64,
}

impl<'n> Overlay<'n> {
    pub fn new(base: &'n RoadNetwork) -> Self {
        Overlay {
            base,
            extra_nodes: BTreeMap::new(),
            extra_segments: BTreeMap::new(),
            extra_outgoing: BTreeMap::new(),
            removed: BTreeSet::new(),
            halves: BTreeMap::new(),
            parent: BTreeMap::new(),
            next_node: base.max_node_id + 1,
            next_segment: base.max_segment_id + 1,
        }
    }

    fn live_segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        if self.removed.contains(&id) {
            return None;
        }
        self.extra_segments.get(&id).or_else(|| self.base.segments.get(&id))
    }

    /// Follow half chains down to the live descendant of `id` closest to `p`.
    fn resolve(&self, id: SegmentId, p: GeoPoint) -> Result<SegmentId> {
        let mut current = id;
        if self.live_segment(current).is_none() && !self.removed.contains(&current) {
            return Err(Error::UnknownSegment(id));
        }
        while self.removed.contains(&current) {
            let (a, b) = self.halves[&current];
            let da = self.live_or_split(a).project(p).distance;
            let db = self.live_or_split(b).project(p).distance;
            current = if db < da { b } else { a };
        }
        Ok(current)
    }

    /// Segment lookup that also sees removed (already split) segments, needed
    /// while descending half chains.
    fn live_or_split(&self, id: SegmentId) -> &RoadSegment {
        self.extra_segments
            .get(&id)
            .or_else(|| self.base.segments.get(&id))
            .expect("half chain references a known segment")
    }

    /// Split the segment holding `p`'s projection, returning the node at the
    /// projection point. Projections at (or within a micron of) an endpoint
    /// reuse the existing endpoint node and leave the graph unchanged. `id`
    /// may name a base segment that was already split; the split then applies
    /// to the half nearest `p`.
    pub fn split_at_projection(&mut self, id: SegmentId, p: GeoPoint) -> Result<NodeId> {
        let target = self.resolve(id, p)?;
        let seg = self.live_or_split(target).clone();
        let proj = seg.project(p);
        if proj.arc_offset <= SPLIT_ENDPOINT_EPS_M {
            return Ok(seg.from_node);
        }
        if proj.arc_offset >= seg.length_m - SPLIT_ENDPOINT_EPS_M {
            return Ok(seg.to_node);
        }

        let (poly_a, poly_b) = split_polyline(&seg.polyline, proj.arc_offset);
        let node = NodeId(self.next_node);
        self.next_node += 1;
        let id_a = SegmentId(self.next_segment);
        let id_b = SegmentId(self.next_segment + 1);
        self.next_segment += 2;
        let base_parent = self.parent.get(&target).copied().unwrap_or(target);
        for (half_id, from, to, poly) in [
            (id_a, seg.from_node, node, poly_a),
            (id_b, node, seg.to_node, poly_b),
        ] {
            let length = polyline_length(&poly);
            let heading = poly[0].bearing_to(*poly.last().unwrap());
            self.extra_segments.insert(
                half_id,
                RoadSegment {
                    id: half_id,
                    from_node: from,
                    to_node: to,
                    length_m: length,
                    heading_deg: heading,
                    road_class: seg.road_class.clone(),
                    speed_limit_mps: seg.speed_limit_mps,
                    speed_mps: seg.speed_mps,
                    travel_time_s: length / seg.speed_mps,
                    polyline: poly,
                },
            );
            self.parent.insert(half_id, base_parent);
            self.extra_outgoing.entry(from).or_default().push(half_id);
        }
        self.extra_nodes.insert(node, proj.point);
        self.removed.insert(target);
        self.halves.insert(target, (id_a, id_b));
        Ok(node)
    }
}

impl NetView for Overlay<'_> {
    fn segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        self.live_segment(id)
    }

    fn node_pos(&self, id: NodeId) -> Option<GeoPoint> {
        self.extra_nodes
            .get(&id)
            .copied()
            .or_else(|| self.base.nodes.get(&id).copied())
    }

    fn outgoing(&self, node: NodeId) -> Vec<SegmentId> {
        let mut out: Vec<SegmentId> = self
            .base
            .outgoing_base(node)
            .iter()
            .chain(self.extra_outgoing.get(&node).into_iter().flatten())
            .filter(|id| !self.removed.contains(id))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    fn parent_of(&self, id: SegmentId) -> SegmentId {
        self.parent.get(&id).copied().unwrap_or(id)
    }
}

/// Test- and generator-facing builder over planar coordinates. The projection
/// is centered at the origin so WGS84 output stays meaningful.
#[derive(Debug, Default)]
pub struct PlanarNetBuilder {
    nodes: BTreeMap<NodeId, GeoPoint>,
    segments: BTreeMap<SegmentId, RoadSegment>,
}

impl PlanarNetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: u64, x: f64, y: f64) -> Self {
        self.nodes.insert(NodeId(id), GeoPoint::new(x, y));
        self
    }

    pub fn segment(self, id: u64, from: u64, to: u64, class: &str, speed_mps: f64) -> Self {
        let poly = vec![self.nodes[&NodeId(from)], self.nodes[&NodeId(to)]];
        self.segment_polyline(id, from, to, class, speed_mps, poly)
    }

    pub fn segment_polyline(
        mut self,
        id: u64,
        from: u64,
        to: u64,
        class: &str,
        speed_mps: f64,
        polyline: Vec<GeoPoint>,
    ) -> Self {
        let length = polyline_length(&polyline);
        assert!(length > 0.0, "builder segments must have positive length");
        let heading = polyline[0].bearing_to(*polyline.last().unwrap());
        self.segments.insert(
            SegmentId(id),
            RoadSegment {
                id: SegmentId(id),
                from_node: NodeId(from),
                to_node: NodeId(to),
                length_m: length,
                heading_deg: heading,
                road_class: class.to_string(),
                speed_limit_mps: speed_mps,
                speed_mps,
                travel_time_s: length / speed_mps,
                polyline,
            },
        );
        self
    }

    /// Two opposite one-way segments between `a` and `b`.
    pub fn street(self, id_fwd: u64, id_rev: u64, a: u64, b: u64, class: &str, speed: f64) -> Self {
        self.segment(id_fwd, a, b, class, speed)
            .segment(id_rev, b, a, class, speed)
    }

    pub fn build(self) -> RoadNetwork {
        RoadNetwork::assemble(self.nodes, self.segments, Projection::centered(0.0, 0.0))
    }
}

/// Load a network file (see [`read_network_csv`] for the format).
pub fn load_network(path: impl AsRef<Path>) -> Result<(RoadNetwork, Vec<String>)> {
    let records = read_network_csv(path)?;
    RoadNetwork::from_records(&records)
}

/// Read the network CSV: header
/// `segment_id,from_node,to_node,road_class,speed_limit_mps,wkt` where `wkt`
/// is a `LINESTRING` of lon/lat WGS84 pairs.
pub fn read_network_csv(path: impl AsRef<Path>) -> Result<Vec<SegmentRecord>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &str| -> Result<&str> {
            row.get(idx)
                .ok_or_else(|| Error::format(path, line, format!("missing field `{}`", name)))
        };
        let parse_u64 = |idx: usize, name: &str| -> Result<u64> {
            field(idx, name)?
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::format(path, line, format!("field `{}` is not an integer", name)))
        };
        let speed: f64 = field(4, "speed_limit_mps")?.trim().parse().map_err(|_| {
            Error::format(path, line, "field `speed_limit_mps` is not a number")
        })?;
        if !(speed > 0.0) || !speed.is_finite() {
            return Err(Error::format(
                path,
                line,
                "field `speed_limit_mps` must be > 0",
            ));
        }
        let coords = parse_linestring(field(5, "wkt")?)
            .map_err(|msg| Error::format(path, line, format!("field `wkt`: {}", msg)))?;
        records.push(SegmentRecord {
            id: SegmentId(parse_u64(0, "segment_id")?),
            from_node: NodeId(parse_u64(1, "from_node")?),
            to_node: NodeId(parse_u64(2, "to_node")?),
            road_class: field(3, "road_class")?.trim().to_string(),
            speed_limit_mps: speed,
            coords,
        });
    }
    Ok(records)
}

/// Write segment records in the network CSV format.
pub fn write_network_csv(path: impl AsRef<Path>, records: &[SegmentRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
    writer
        .write_record([
            "segment_id",
            "from_node",
            "to_node",
            "road_class",
            "speed_limit_mps",
            "wkt",
        ])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for rec in records {
        let wkt = format!(
            "LINESTRING({})",
            rec.coords
                .iter()
                .map(|(lon, lat)| format!("{:.7} {:.7}", lon, lat))
                .collect::<Vec<_>>()
                .join(", ")
        );
        writer
            .write_record([
                rec.id.to_string(),
                rec.from_node.to_string(),
                rec.to_node.to_string(),
                rec.road_class.clone(),
                format!("{:.3}", rec.speed_limit_mps),
                wkt,
            ])
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_linestring(wkt: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let s = wkt.trim();
    let body = s
        .strip_prefix("LINESTRING")
        .ok_or("expected LINESTRING")?
        .trim()
        .strip_prefix('(')
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or("expected parenthesized coordinate list")?;
    let mut coords = Vec::new();
    for pair in body.split(',') {
        let mut it = pair.split_whitespace();
        let lon: f64 = it
            .next()
            .ok_or("empty coordinate pair")?
            .parse()
            .map_err(|_| "longitude is not a number".to_string())?;
        let lat: f64 = it
            .next()
            .ok_or("coordinate pair lacks latitude")?
            .parse()
            .map_err(|_| "latitude is not a number".to_string())?;
        if it.next().is_some() {
            return Err("coordinate pair has more than two values".into());
        }
        coords.push((lon, lat));
    }
    if coords.len() < 2 {
        return Err("LINESTRING needs at least 2 points".into());
    }
    Ok(coords)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    /// A g×g planar grid with `spacing` meters between nodes; every street is
    /// a pair of opposite one-way segments. Node id = row*g+col; segment ids
    /// are assigned in a fixed scan order.
    pub(crate) fn grid_network(g: u64, spacing: f64, speed: f64) -> RoadNetwork {
        let mut b = PlanarNetBuilder::new();
        for r in 0..g {
            for c in 0..g {
                b = b.node(r * g + c, c as f64 * spacing, r as f64 * spacing);
            }
        }
        let mut seg = 0;
        for r in 0..g {
            for c in 0..g - 1 {
                let (a, z) = (r * g + c, r * g + c + 1);
                b = b.street(seg, seg + 1, a, z, "street", speed);
                seg += 2;
            }
        }
        for r in 0..g - 1 {
            for c in 0..g {
                let (a, z) = (r * g + c, (r + 1) * g + c);
                b = b.street(seg, seg + 1, a, z, "street", speed);
                seg += 2;
            }
        }
        b.build()
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_minimal_network() {
        let f = write_csv(
            "segment_id,from_node,to_node,road_class,speed_limit_mps,wkt\n\
             1,10,11,residential,8.33,\"LINESTRING(10.4000000 43.7000000, 10.4010000 43.7000000)\"\n",
        );
        let (net, warnings) = load_network(f.path()).unwrap();
        assert_eq!(net.segment_count(), 1);
        assert_eq!(net.node_count(), 2);
        assert!(warnings.is_empty());
        assert_eq!(net.outgoing_base(NodeId(10)), &[SegmentId(1)]);
        assert!(net.outgoing_base(NodeId(11)).is_empty());
        let seg = net.segment(SegmentId(1)).unwrap();
        assert_relative_eq!(seg.travel_time_s, seg.length_m / 8.33, max_relative = 1e-12);
        // ~80 m of longitude at 43.7°N.
        assert!(seg.length_m > 70.0 && seg.length_m < 90.0);
        assert_relative_eq!(seg.heading_deg, 90.0, epsilon = 1e-6);
    }

    #[test]
    fn load_rejects_inconsistent_node() {
        // Node 11 appears at two positions ~110 m apart.
        let f = write_csv(
            "segment_id,from_node,to_node,road_class,speed_limit_mps,wkt\n\
             1,10,11,residential,8.33,\"LINESTRING(10.400 43.700, 10.401 43.700)\"\n\
             2,11,12,residential,8.33,\"LINESTRING(10.401 43.701, 10.402 43.701)\"\n",
        );
        match load_network(f.path()) {
            Err(Error::InconsistentNode { node, .. }) => assert_eq!(node, NodeId(11)),
            other => panic!("expected InconsistentNode, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn load_rejects_duplicate_segment() {
        let f = write_csv(
            "segment_id,from_node,to_node,road_class,speed_limit_mps,wkt\n\
             1,10,11,residential,8.33,\"LINESTRING(10.400 43.700, 10.401 43.700)\"\n\
             1,11,10,residential,8.33,\"LINESTRING(10.401 43.700, 10.400 43.700)\"\n",
        );
        assert!(matches!(
            load_network(f.path()),
            Err(Error::DuplicateSegment(SegmentId(1)))
        ));
    }

    #[test]
    fn load_drops_zero_length_with_warning() {
        let f = write_csv(
            "segment_id,from_node,to_node,road_class,speed_limit_mps,wkt\n\
             1,10,11,residential,8.33,\"LINESTRING(10.400 43.700, 10.401 43.700)\"\n\
             2,12,12,residential,8.33,\"LINESTRING(10.402 43.700, 10.402 43.700)\"\n",
        );
        let (net, warnings) = load_network(f.path()).unwrap();
        assert_eq!(net.segment_count(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("segment 2"));
    }

    #[test]
    fn load_reports_malformed_line() {
        let f = write_csv(
            "segment_id,from_node,to_node,road_class,speed_limit_mps,wkt\n\
             1,10,11,residential,not_a_number,\"LINESTRING(10.400 43.700, 10.401 43.700)\"\n",
        );
        let err = load_network(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "error did not name the line: {err}");
        assert!(err.contains("speed_limit_mps"), "error did not name the field: {err}");
    }

    #[test]
    fn knn_zero_distance_and_ties() {
        // Two parallel east-west streets 20 m apart; query between them.
        let net = PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 100.0, 0.0)
            .node(2, 0.0, 20.0)
            .node(3, 100.0, 20.0)
            .segment(5, 0, 1, "street", 10.0)
            .segment(9, 2, 3, "street", 10.0)
            .build();
        // On the interior of segment 5.
        let hits = net
            .k_nearest_segments(GeoPoint::new(50.0, 0.0), 2)
            .unwrap();
        assert_eq!(hits[0].0, SegmentId(5));
        assert_eq!(hits[0].1, 0.0);
        // Equidistant (10 m) from both: ascending id.
        let hits = net
            .k_nearest_segments(GeoPoint::new(50.0, 10.0), 2)
            .unwrap();
        assert_eq!(
            hits.iter().map(|(id, _)| *id).collect::<Vec<_>>(),
            vec![SegmentId(5), SegmentId(9)]
        );
        assert_eq!(hits[0].1, 10.0);
        assert_eq!(hits[1].1, 10.0);
    }

    #[test]
    fn knn_equals_linear_scan_on_grid() {
        let net = grid_network(4, 100.0, 10.0);
        assert_eq!(net.segment_count(), 48);
        assert_eq!(net.node_count(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = GeoPoint::new(rng.gen_range(-50.0..350.0), rng.gen_range(-50.0..350.0));
            let got = net.k_nearest_segments(p, 8).unwrap();
            let mut want: Vec<(SegmentId, f64)> = net
                .segments()
                .map(|s| (s.id, s.project(p).distance))
                .collect();
            want.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            want.truncate(8);
            assert_eq!(got, want, "query {:?}", p);
        }
    }

    #[test]
    fn knn_errors() {
        let net = grid_network(2, 100.0, 10.0);
        assert!(net.k_nearest_segments(GeoPoint::new(0.0, 0.0), 0).is_err());
    }

    #[test]
    fn split_at_midpoint() {
        let net = PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 100.0, 0.0)
            .segment(1, 0, 1, "street", 10.0)
            .build();
        let mut overlay = Overlay::new(&net);
        let node = overlay
            .split_at_projection(SegmentId(1), GeoPoint::new(50.0, 5.0))
            .unwrap();
        assert_eq!(node, NodeId(2));
        let out = overlay.outgoing(NodeId(0));
        assert_eq!(out.len(), 1);
        let first = overlay.segment(out[0]).unwrap();
        assert_relative_eq!(first.length_m, 50.0, max_relative = 1e-12);
        assert_relative_eq!(first.travel_time_s, 5.0, max_relative = 1e-12);
        let second_id = overlay.outgoing(node)[0];
        let second = overlay.segment(second_id).unwrap();
        assert_relative_eq!(second.length_m, 50.0, max_relative = 1e-12);
        assert_relative_eq!(second.travel_time_s, 5.0, max_relative = 1e-12);
        assert_eq!(overlay.parent_of(out[0]), SegmentId(1));
        assert_eq!(overlay.parent_of(second_id), SegmentId(1));
        // Base network untouched.
        assert_eq!(net.segment_count(), 1);
        assert_eq!(net.outgoing_base(NodeId(0)), &[SegmentId(1)]);
    }

    #[test]
    fn split_proportional() {
        // 200 m at 10 m/s (travel_time 20 s), split at 30%.
        let net = PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 200.0, 0.0)
            .segment(1, 0, 1, "street", 10.0)
            .build();
        let mut overlay = Overlay::new(&net);
        let node = overlay
            .split_at_projection(SegmentId(1), GeoPoint::new(60.0, -3.0))
            .unwrap();
        let a = overlay.segment(overlay.outgoing(NodeId(0))[0]).unwrap();
        let b = overlay.segment(overlay.outgoing(node)[0]).unwrap();
        assert_relative_eq!(a.length_m, 60.0, max_relative = 1e-9);
        assert_relative_eq!(a.travel_time_s, 6.0, max_relative = 1e-9);
        assert_relative_eq!(b.length_m, 140.0, max_relative = 1e-9);
        assert_relative_eq!(b.travel_time_s, 14.0, max_relative = 1e-9);
        assert_relative_eq!(
            a.length_m + b.length_m,
            200.0,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            a.travel_time_s + b.travel_time_s,
            20.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn split_clamped_beyond_end_returns_to_node() {
        let net = PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 100.0, 0.0)
            .segment(1, 0, 1, "street", 10.0)
            .build();
        let mut overlay = Overlay::new(&net);
        let node = overlay
            .split_at_projection(SegmentId(1), GeoPoint::new(150.0, 2.0))
            .unwrap();
        assert_eq!(node, NodeId(1));
        assert_eq!(overlay.outgoing(NodeId(0)), vec![SegmentId(1)]);
    }

    #[test]
    fn second_split_lands_on_half() {
        let net = PlanarNetBuilder::new()
            .node(0, 0.0, 0.0)
            .node(1, 100.0, 0.0)
            .segment(1, 0, 1, "street", 10.0)
            .build();
        let mut overlay = Overlay::new(&net);
        let n1 = overlay
            .split_at_projection(SegmentId(1), GeoPoint::new(40.0, 0.0))
            .unwrap();
        // Splitting the original id again must hit the correct half.
        let n2 = overlay
            .split_at_projection(SegmentId(1), GeoPoint::new(70.0, 1.0))
            .unwrap();
        assert_ne!(n1, n2);
        // Walk 0 -> n1 -> n2 -> 1 and check lengths sum to 100.
        let mut total = 0.0;
        let mut at = NodeId(0);
        for _ in 0..3 {
            let out = overlay.outgoing(at);
            assert_eq!(out.len(), 1, "at {:?}", at);
            let seg = overlay.segment(out[0]).unwrap();
            assert_eq!(overlay.parent_of(out[0]), SegmentId(1));
            total += seg.length_m;
            at = seg.to_node;
        }
        assert_eq!(at, NodeId(1));
        assert_relative_eq!(total, 100.0, max_relative = 1e-9);
    }

    #[test]
    fn network_csv_round_trip() {
        let records = vec![
            SegmentRecord {
                id: SegmentId(1),
                from_node: NodeId(0),
                to_node: NodeId(1),
                road_class: "arterial".into(),
                speed_limit_mps: 13.9,
                coords: vec![(10.4, 43.7), (10.4011234, 43.7005678)],
            },
            SegmentRecord {
                id: SegmentId(2),
                from_node: NodeId(1),
                to_node: NodeId(0),
                road_class: "arterial".into(),
                speed_limit_mps: 13.9,
                coords: vec![(10.4011234, 43.7005678), (10.4, 43.7)],
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_network_csv(f.path(), &records).unwrap();
        let back = read_network_csv(f.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, records[0].id);
        assert_eq!(back[0].road_class, "arterial");
        for ((lon, lat), (lon2, lat2)) in records[0].coords.iter().zip(&back[0].coords) {
            assert_relative_eq!(lon, lon2, epsilon = 1e-7);
            assert_relative_eq!(lat, lat2, epsilon = 1e-7);
        }
    }
}
