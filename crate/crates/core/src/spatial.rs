//! Packed R-tree over segment bounding boxes with best-first k-NN search.
//!
//! Built once per network with STR bulk loading. Queries refine candidate
//! boxes against exact point-to-polyline distance supplied by the caller,
//! and report how many tree entries were visited so tests can assert
//! sub-linear scaling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::GeoPoint;
use crate::roadnet::SegmentId;

/// Entries per tree node.
const NODE_CAPACITY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn of_polyline(poly: &[GeoPoint]) -> Self {
        let mut bb = Aabb {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in poly {
            bb.min_x = bb.min_x.min(p.x);
            bb.min_y = bb.min_y.min(p.y);
            bb.max_x = bb.max_x.max(p.x);
            bb.max_y = bb.max_y.max(p.y);
        }
        bb
    }

    fn merge(&mut self, other: &Aabb) {
        self.min_x = self.min_x.min(other.min_x);
        self.min_y = self.min_y.min(other.min_y);
        self.max_x = self.max_x.max(other.max_x);
        self.max_y = self.max_y.max(other.max_y);
    }

    fn center_x(&self) -> f64 {
        (self.min_x + self.max_x) / 2.0
    }

    fn center_y(&self) -> f64 {
        (self.min_y + self.max_y) / 2.0
    }

    /// Minimum distance from `p` to this box (0 inside).
    fn min_dist(&self, p: GeoPoint) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(Vec<(SegmentId, Aabb)>),
    Inner(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct SegmentRTree {
    nodes: Vec<Node>,
    root: Option<usize>,
    len: usize,
}

/// Priority-queue item for best-first traversal. Nodes sort before exact
/// candidates at equal distance so an unexpanded subtree cannot hide a
/// smaller segment id at the same distance.
struct QueueItem {
    dist: f64,
    kind: u8, // 0 = tree node, 1 = refined candidate
    node: usize,
    seg: SegmentId,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest key first.
        let key = |it: &QueueItem| (it.dist, it.kind, it.seg);
        key(other)
            .partial_cmp(&key(self))
            .expect("distances are finite")
    }
}

impl SegmentRTree {
    /// STR bulk load: sort by center x into vertical slabs, by center y
    /// within each slab, pack leaves, then repeat over node boxes.
    pub fn bulk_load(mut items: Vec<(SegmentId, Aabb)>) -> Self {
        let len = items.len();
        let mut tree = SegmentRTree {
            nodes: Vec::new(),
            root: None,
            len,
        };
        if items.is_empty() {
            return tree;
        }

        items.sort_by(|a, b| {
            a.1.center_x()
                .partial_cmp(&b.1.center_x())
                .unwrap()
                .then(a.0.cmp(&b.0))
        });
        let leaf_count = items.len().div_ceil(NODE_CAPACITY);
        let slab_count = (leaf_count as f64).sqrt().ceil() as usize;
        let slab_size = items.len().div_ceil(slab_count);

        let mut level: Vec<usize> = Vec::with_capacity(leaf_count);
        for slab in items.chunks_mut(slab_size) {
            slab.sort_by(|a, b| {
                a.1.center_y()
                    .partial_cmp(&b.1.center_y())
                    .unwrap()
                    .then(a.0.cmp(&b.0))
            });
            for chunk in slab.chunks(NODE_CAPACITY) {
                let mut bbox = chunk[0].1;
                for (_, bb) in &chunk[1..] {
                    bbox.merge(bb);
                }
                tree.nodes.push(Node {
                    bbox,
                    kind: NodeKind::Leaf(chunk.to_vec()),
                });
                level.push(tree.nodes.len() - 1);
            }
        }

        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(NODE_CAPACITY));
            for chunk in level.chunks(NODE_CAPACITY) {
                let mut bbox = tree.nodes[chunk[0]].bbox;
                for &i in &chunk[1..] {
                    let bb = tree.nodes[i].bbox;
                    bbox.merge(&bb);
                }
                tree.nodes.push(Node {
                    bbox,
                    kind: NodeKind::Inner(chunk.to_vec()),
                });
                next.push(tree.nodes.len() - 1);
            }
            level = next;
        }
        tree.root = Some(level[0]);
        tree
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Best-first k-nearest search. `refine` maps a candidate segment to its
    /// exact point distance. Returns `(matches, visited)` where matches are
    /// `(segment, exact distance)` ascending (ties by ascending id) and
    /// `visited` counts queue pops, i.e. tree entries touched.
    pub fn k_nearest(
        &self,
        p: GeoPoint,
        k: usize,
        refine: impl Fn(SegmentId) -> f64,
    ) -> (Vec<(SegmentId, f64)>, u64) {
        let mut out = Vec::with_capacity(k.min(self.len));
        let mut visited = 0u64;
        let root = match self.root {
            Some(r) => r,
            None => return (out, visited),
        };
        let mut queue = BinaryHeap::new();
        queue.push(QueueItem {
            dist: self.nodes[root].bbox.min_dist(p),
            kind: 0,
            node: root,
            seg: SegmentId(0),
        });
        while let Some(item) = queue.pop() {
            visited += 1;
            if item.kind == 1 {
                out.push((item.seg, item.dist));
                if out.len() == k {
                    break;
                }
                continue;
            }
            match &self.nodes[item.node].kind {
                NodeKind::Leaf(entries) => {
                    for &(seg, _) in entries {
                        queue.push(QueueItem {
                            dist: refine(seg),
                            kind: 1,
                            node: 0,
                            seg,
                        });
                    }
                }
                NodeKind::Inner(children) => {
                    for &child in children {
                        queue.push(QueueItem {
                            dist: self.nodes[child].bbox.min_dist(p),
                            kind: 0,
                            node: child,
                            seg: SegmentId(0),
                        });
                    }
                }
            }
        }
        (out, visited)
    }
}
