//! Morphological skeletonization and skeleton-graph analysis: thinning,
//! spur pruning, endpoint/branch/crossing nodes, ordered main path and
//! tortuosity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Point};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// One-pixel-wide skeleton raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Skeleton {
    pub fn empty(width: usize, height: usize) -> Self {
        Skeleton {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_points(width: usize, height: usize, points: &[Point]) -> Self {
        let mut s = Skeleton::empty(width, height);
        for p in points {
            s.set(p.row, p.col, true);
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Skeleton pixels in (row, col) order.
    pub fn points(&self) -> Vec<Point> {
        let mut pts = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    pts.push(Point::new(r, c));
                }
            }
        }
        pts
    }

    /// 8-neighbors of a pixel that are skeleton foreground, in fixed
    /// clockwise order starting north.
    pub fn neighbors(&self, p: Point) -> Vec<Point> {
        let mut out = Vec::with_capacity(8);
        for (dr, dc) in NEIGH8 {
            let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
            if r >= 0 && r < self.height as i64 && c >= 0 && c < self.width as i64 && self.get(r as usize, c as usize) {
                out.push(Point::new(r as usize, c as usize));
            }
        }
        out
    }

    pub fn degree(&self, p: Point) -> usize {
        self.neighbors(p).len()
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_vec(self.width, self.height, self.data.clone()).unwrap()
    }
}

/// Clockwise 8-neighborhood offsets starting north (P2..P9).
const NEIGH8: [(i64, i64); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

#[inline]
fn at(data: &[bool], w: usize, h: usize, r: i64, c: i64) -> bool {
    r >= 0 && r < h as i64 && c >= 0 && c < w as i64 && data[r as usize * w + c as usize]
}

/// (neighbor count, 0->1 transition count) over the clockwise ring.
fn ring_stats(data: &[bool], w: usize, h: usize, r: usize, c: usize) -> (usize, usize) {
    let mut ring = [false; 8];
    for (i, (dr, dc)) in NEIGH8.iter().enumerate() {
        ring[i] = at(data, w, h, r as i64 + dr, c as i64 + dc);
    }
    let count = ring.iter().filter(|v| **v).count();
    let mut transitions = 0;
    for i in 0..8 {
        if !ring[i] && ring[(i + 1) % 8] {
            transitions += 1;
        }
    }
    (count, transitions)
}

/// Yokoi connectivity number for 8-connectivity; 1 means the pixel is an
/// 8-simple point (its removal preserves local topology).
fn yokoi_8(data: &[bool], w: usize, h: usize, r: usize, c: usize) -> usize {
    let (ri, ci) = (r as i64, c as i64);
    // x1..x8 counterclockwise from east; odd indices are 4-neighbors.
    let x = [
        at(data, w, h, ri, ci + 1),
        at(data, w, h, ri - 1, ci + 1),
        at(data, w, h, ri - 1, ci),
        at(data, w, h, ri - 1, ci - 1),
        at(data, w, h, ri, ci - 1),
        at(data, w, h, ri + 1, ci - 1),
        at(data, w, h, ri + 1, ci),
        at(data, w, h, ri + 1, ci + 1),
    ];
    let nb = |i: usize| !x[i % 8] as usize;
    let mut a8 = 0;
    for k in [0usize, 2, 4, 6] {
        a8 += nb(k) - nb(k) * nb(k + 1) * nb(k + 2);
    }
    a8
}

/// Zhang-Suen thinning to a fixpoint, with a staircase cleanup pass.
///
/// Candidates of each sub-iteration are marked on a snapshot (the classic
/// parallel layer peel), then deleted one by one with the neighbor-count
/// and single-transition criteria re-checked against the current raster.
/// The re-check is what keeps every removal a connectivity-safe simple
/// point: the fully parallel sweep would erase an isolated 2x2 block
/// outright and change the component count.
///
/// The cleanup pass removes redundant staircase pixels (three or more
/// neighbors yet 8-simple) that the ring-transition criterion misses; they
/// would otherwise read as fake degree-3 junctions on diagonal runs.
pub fn thin(mask: &BinaryMask) -> Skeleton {
    let (w, h) = (mask.width(), mask.height());
    let mut data = mask.data().to_vec();
    let mut marks: Vec<(usize, usize)> = Vec::new();
    loop {
        // Zhang-Suen to its own fixpoint first; interleaving the cleanup
        // with the layer peel leaves parallel ridge artifacts.
        loop {
            let mut changed = false;
            for sub in 0..2 {
                marks.clear();
                for r in 0..h {
                    for c in 0..w {
                        if !data[r * w + c] {
                            continue;
                        }
                        let (b, a) = ring_stats(&data, w, h, r, c);
                        if !(2..=6).contains(&b) || a != 1 {
                            continue;
                        }
                        let (ri, ci) = (r as i64, c as i64);
                        let n = at(&data, w, h, ri - 1, ci);
                        let e = at(&data, w, h, ri, ci + 1);
                        let s = at(&data, w, h, ri + 1, ci);
                        let west = at(&data, w, h, ri, ci - 1);
                        let ok = if sub == 0 {
                            !(n && e && s) && !(e && s && west)
                        } else {
                            !(n && e && west) && !(n && s && west)
                        };
                        if ok {
                            marks.push((r, c));
                        }
                    }
                }
                for &(r, c) in &marks {
                    let (b, a) = ring_stats(&data, w, h, r, c);
                    if (2..=6).contains(&b) && a == 1 {
                        data[r * w + c] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // Staircase cleanup on the converged skeleton: pixels that are
        // 8-simple despite having two or more neighbors are redundant for
        // minimal 8-connectivity (straight-chain pixels score 2 and stay,
        // endpoints have one neighbor and stay).
        let mut cleaned = false;
        for r in 0..h {
            for c in 0..w {
                if !data[r * w + c] {
                    continue;
                }
                let (b, _) = ring_stats(&data, w, h, r, c);
                if b >= 2 && yokoi_8(&data, w, h, r, c) == 1 {
                    data[r * w + c] = false;
                    cleaned = true;
                }
            }
        }
        if !cleaned {
            break;
        }
    }
    Skeleton {
        width: w,
        height: h,
        data,
    }
}

#[inline]
fn step_length(a: Point, b: Point) -> f64 {
    if a.row != b.row && a.col != b.col {
        SQRT_2
    } else {
        1.0
    }
}

/// Arc length of an ordered pixel chain (1 per axial step, sqrt(2) per
/// diagonal step).
pub fn chain_arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| step_length(w[0], w[1])).sum()
}

/// Resample an ordered pixel chain at uniform arc-length steps, by linear
/// interpolation between pixels. Sample 0 is the first point; samples stop
/// at the last position not exceeding the total arc.
pub fn resample_chain(points: &[Point], step: f64) -> Vec<crate::imaging::PointF> {
    use crate::imaging::PointF;
    assert!(step > 0.0);
    if points.is_empty() {
        return Vec::new();
    }
    if points.len() == 1 {
        return vec![PointF::from(points[0])];
    }
    let mut cumulative = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        acc += step_length(w[0], w[1]);
        cumulative.push(acc);
    }
    let total = acc;
    let n = (total / step).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0usize;
    for k in 0..=n {
        let s = k as f64 * step;
        while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < s {
            seg += 1;
        }
        let (s0, s1) = (cumulative[seg], cumulative[seg + 1]);
        let t = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push(PointF::new(
            a.row as f64 + t * (b.row as f64 - a.row as f64),
            a.col as f64 + t * (b.col as f64 - a.col as f64),
        ));
    }
    out
}

/// Remove endpoint spurs shorter than `min_spur`, re-thinning junction
/// remnants, until a fixpoint.
///
/// A spur is a chain from an endpoint to a junction pixel (degree >= 3).
/// Chains ending at another endpoint are trunks, not spurs, and survive.
pub fn prune(skel: &Skeleton, min_spur: f64) -> Skeleton {
    let mut current = skel.clone();
    if min_spur <= 0.0 {
        return current;
    }
    loop {
        let mut to_delete: BTreeSet<Point> = BTreeSet::new();
        for p in current.points() {
            if current.degree(p) != 1 {
                continue;
            }
            // Walk from the endpoint until a non-degree-2 pixel.
            let mut path = vec![p];
            let mut prev = p;
            let mut cur = current.neighbors(p)[0];
            let mut arc = step_length(prev, cur);
            loop {
                if current.degree(cur) != 2 {
                    break;
                }
                let next = *current
                    .neighbors(cur)
                    .iter()
                    .find(|q| **q != prev)
                    .expect("degree-2 pixel has two neighbors");
                path.push(cur);
                arc += step_length(cur, next);
                prev = cur;
                cur = next;
            }
            // `cur` is the terminal node pixel; only junction-terminated
            // chains are spurs.
            if current.degree(cur) >= 3 && arc < min_spur {
                to_delete.extend(path);
            }
        }
        if to_delete.is_empty() {
            break;
        }
        let mut next = current.clone();
        for p in &to_delete {
            next.set(p.row, p.col, false);
        }
        current = thin(&next.to_mask());
    }
    current
}

/// Skeleton node classification by effective degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Degree 1.
    Endpoint,
    /// Degree 2 or 3 junction (degree 2 only arises from cluster merging).
    Branch,
    /// Degree >= 4.
    Crossing,
    /// Degree 0: a lone pixel component.
    Isolated,
}

/// A graph node: a single endpoint pixel or a merged junction cluster.
#[derive(Debug, Clone)]
pub struct SkelNode {
    /// Representative pixel (smallest (row, col) of the cluster).
    pub pixel: Point,
    /// All pixels belonging to the node, sorted.
    pub pixels: Vec<Point>,
    pub kind: NodeKind,
    /// Number of incident edge ends (self-loops count twice).
    pub degree: usize,
}

/// A maximal chain between two nodes; `path` runs from a pixel of node `a`
/// to a pixel of node `b`, inclusive.
#[derive(Debug, Clone)]
pub struct SkelEdge {
    pub a: usize,
    pub b: usize,
    pub path: Vec<Point>,
    pub arc_length: f64,
}

/// Topological view of a thinned skeleton.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    pub nodes: Vec<SkelNode>,
    pub edges: Vec<SkelEdge>,
    /// Closed chains with no node at all (every pixel degree 2).
    pub cycles: Vec<Vec<Point>>,
    pub width: usize,
    pub height: usize,
}

impl SkeletonGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.cycles.is_empty()
    }

    pub fn endpoint_ids(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Endpoint)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_crossing(&self) -> bool {
        self.nodes.iter().any(|n| n.kind == NodeKind::Crossing)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Build the node/edge view of a thinned, pruned skeleton.
///
/// Junction pixels that touch each other, or that are joined by a chain no
/// longer than `junction_merge` px, collapse into one node; rasterized
/// crossings routinely split into two nearby degree-3 pixels, and the
/// merge restores the single degree-4 crossing they represent.
pub fn graphify(skel: &Skeleton, junction_merge: f64) -> SkeletonGraph {
    let pts = skel.points();
    let index: BTreeMap<Point, usize> = pts.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let degree: Vec<usize> = pts.iter().map(|p| skel.degree(*p)).collect();
    let is_node = |i: usize| degree[i] != 2;

    // Trace maximal degree-2 chains between node pixels.
    struct RawEdge {
        a: usize, // pixel indices
        b: usize,
        path: Vec<Point>,
        arc: f64,
    }
    let mut raw_edges: Vec<RawEdge> = Vec::new();
    let mut interior_visited = vec![false; pts.len()];
    let mut direct_seen: BTreeSet<(usize, usize)> = BTreeSet::new();

    for (i, p) in pts.iter().enumerate() {
        if !is_node(i) {
            continue;
        }
        for q in skel.neighbors(*p) {
            let qi = index[&q];
            if is_node(qi) {
                // Direct node-node adjacency: record once.
                let key = (i.min(qi), i.max(qi));
                if i <= qi && direct_seen.insert(key) {
                    raw_edges.push(RawEdge {
                        a: i,
                        b: qi,
                        path: vec![*p, q],
                        arc: step_length(*p, q),
                    });
                }
                continue;
            }
            if interior_visited[qi] {
                continue;
            }
            // Walk the chain.
            let mut path = vec![*p, q];
            interior_visited[qi] = true;
            let mut prev = *p;
            let mut cur = q;
            loop {
                let ci = index[&cur];
                if is_node(ci) {
                    break;
                }
                let next = *skel
                    .neighbors(cur)
                    .iter()
                    .find(|n| **n != prev)
                    .expect("degree-2 pixel has two neighbors");
                let ni = index[&next];
                if !is_node(ni) {
                    interior_visited[ni] = true;
                }
                path.push(next);
                prev = cur;
                cur = next;
                if cur == *p && !is_node(index[&cur]) {
                    break; // safety: malformed self-cycle
                }
            }
            let b = index[&cur];
            let arc = chain_arc_length(&path);
            raw_edges.push(RawEdge { a: i, b, path, arc });
        }
    }

    // Node-free cycles: leftover unvisited degree-2 pixels.
    let mut cycles: Vec<Vec<Point>> = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if is_node(i) || interior_visited[i] {
            continue;
        }
        let mut cycle = vec![*p];
        interior_visited[i] = true;
        let mut prev = *p;
        let mut cur = skel.neighbors(*p)[0];
        while cur != *p {
            interior_visited[index[&cur]] = true;
            cycle.push(cur);
            let next = *skel
                .neighbors(cur)
                .iter()
                .find(|n| **n != prev)
                .expect("cycle pixel has two neighbors");
            prev = cur;
            cur = next;
        }
        cycles.push(cycle);
    }

    // Cluster junction pixels (degree >= 3): direct adjacency always
    // merges; short junction-junction chains merge too.
    let mut dsu = DisjointSet::new(pts.len());
    for (i, p) in pts.iter().enumerate() {
        if degree[i] < 3 {
            continue;
        }
        for q in skel.neighbors(*p) {
            let qi = index[&q];
            if degree[qi] >= 3 {
                dsu.union(i, qi);
            }
        }
    }
    let mut absorbed = vec![false; raw_edges.len()];
    // Iterate merging until stable: merging may chain clusters together.
    loop {
        let mut changed = false;
        for (ei, e) in raw_edges.iter().enumerate() {
            if absorbed[ei] || e.arc > junction_merge {
                continue;
            }
            if degree[e.a] >= 3 && degree[e.b] >= 3 && e.a != e.b && dsu.find(e.a) != dsu.find(e.b) {
                dsu.union(e.a, e.b);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Mark edges internal to a cluster as absorbed.
    for (ei, e) in raw_edges.iter().enumerate() {
        if degree[e.a] >= 3 && degree[e.b] >= 3 && e.arc <= junction_merge && dsu.find(e.a) == dsu.find(e.b) && e.a != e.b
        {
            absorbed[ei] = true;
        }
    }

    // Collect clusters: roots for node pixels.
    let mut cluster_pixels: BTreeMap<usize, BTreeSet<Point>> = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        if is_node(i) {
            cluster_pixels.entry(dsu.find(i)).or_default().insert(*p);
        }
    }
    // Absorbed edge interiors belong to the cluster.
    for (ei, e) in raw_edges.iter().enumerate() {
        if absorbed[ei] {
            let root = dsu.find(e.a);
            cluster_pixels.entry(root).or_default().extend(e.path.iter().copied());
        }
    }

    // Deterministic node ids by representative pixel.
    let mut clusters: Vec<(Point, usize, Vec<Point>)> = cluster_pixels
        .into_iter()
        .map(|(root, set)| {
            let rep = *set.iter().next().unwrap();
            (rep, root, set.into_iter().collect::<Vec<_>>())
        })
        .collect();
    clusters.sort_by_key(|(rep, _, _)| *rep);
    let root_to_node: BTreeMap<usize, usize> = clusters
        .iter()
        .enumerate()
        .map(|(node_id, (_, root, _))| (*root, node_id))
        .collect();

    let mut nodes: Vec<SkelNode> = clusters
        .iter()
        .map(|(rep, _, pixels)| SkelNode {
            pixel: *rep,
            pixels: pixels.clone(),
            kind: NodeKind::Isolated,
            degree: 0,
        })
        .collect();

    let mut edges: Vec<SkelEdge> = Vec::new();
    for (ei, e) in raw_edges.into_iter().enumerate() {
        if absorbed[ei] {
            continue;
        }
        let na = root_to_node[&dsu.find(e.a)];
        let nb = root_to_node[&dsu.find(e.b)];
        nodes[na].degree += 1;
        nodes[nb].degree += 1;
        edges.push(SkelEdge {
            a: na,
            b: nb,
            path: e.path,
            arc_length: e.arc,
        });
    }
    edges.sort_by(|x, y| {
        (x.a, x.b, x.path.first(), x.path.last()).cmp(&(y.a, y.b, y.path.first(), y.path.last()))
    });

    for node in &mut nodes {
        node.kind = match node.degree {
            0 => NodeKind::Isolated,
            1 => NodeKind::Endpoint,
            // Degree 2 only arises when cluster merging swallowed edges.
            2 | 3 => NodeKind::Branch,
            _ => NodeKind::Crossing,
        };
    }

    SkeletonGraph {
        nodes,
        edges,
        cycles,
        width: skel.width(),
        height: skel.height(),
    }
}

/// Ordered pixel path of one capillary with its arc and chord lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapillaryPath {
    pub points: Vec<Point>,
    pub arc_length: f64,
    pub chord_length: f64,
}

impl CapillaryPath {
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let arc_length = chain_arc_length(&points);
        let chord_length = points[0].distance_to(*points.last().unwrap());
        Ok(CapillaryPath {
            points,
            arc_length,
            chord_length,
        })
    }
}

/// Arc-to-chord ratio of a path; +infinity for closed paths.
pub fn tortuosity(path: &CapillaryPath) -> f64 {
    if path.chord_length == 0.0 {
        f64::INFINITY
    } else {
        path.arc_length / path.chord_length
    }
}

/// Shortest pixel walk inside a node cluster from `from` to `to`
/// (both cluster pixels); returns the connecting chain including both ends.
fn cluster_walk(cluster: &[Point], from: Point, to: Point) -> Vec<Point> {
    if from == to {
        return vec![from];
    }
    let set: BTreeSet<Point> = cluster.iter().copied().collect();
    let mut prev: BTreeMap<Point, Point> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(from);
    let mut seen = BTreeSet::new();
    seen.insert(from);
    while let Some(p) = queue.pop_front() {
        if p == to {
            break;
        }
        for (dr, dc) in NEIGH8 {
            let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
            if r < 0 || c < 0 {
                continue;
            }
            let q = Point::new(r as usize, c as usize);
            if set.contains(&q) && seen.insert(q) {
                prev.insert(q, p);
                queue.push_back(q);
            }
        }
    }
    if !prev.contains_key(&to) && from != to {
        // Disconnected cluster halves should not happen; degrade to a jump.
        return vec![from, to];
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}

struct TrailSearch<'a> {
    graph: &'a SkeletonGraph,
    adjacency: Vec<Vec<usize>>, // node -> incident edge ids
    used: Vec<bool>,
    budget: usize,
    best_arc: f64,
    best_edges: Vec<(usize, bool)>, // (edge id, traversed a->b)
    current: Vec<(usize, bool)>,
    target: usize,
}

impl<'a> TrailSearch<'a> {
    fn new(graph: &'a SkeletonGraph) -> Self {
        let mut adjacency = vec![Vec::new(); graph.nodes.len()];
        for (ei, e) in graph.edges.iter().enumerate() {
            adjacency[e.a].push(ei);
            if e.b != e.a {
                adjacency[e.b].push(ei);
            }
        }
        TrailSearch {
            graph,
            adjacency,
            used: vec![false; graph.edges.len()],
            budget: 0,
            best_arc: f64::NEG_INFINITY,
            best_edges: Vec::new(),
            current: Vec::new(),
            target: 0,
        }
    }

    /// Longest edge-simple trail from `start` to `target` (arc length over
    /// edges only; intra-cluster hops are small and resolved at
    /// reconstruction).
    fn longest_trail(&mut self, start: usize, target: usize) -> Option<(f64, Vec<(usize, bool)>)> {
        self.used.iter_mut().for_each(|u| *u = false);
        self.budget = 2_000_000;
        self.best_arc = f64::NEG_INFINITY;
        self.best_edges.clear();
        self.current.clear();
        self.target = target;
        self.dfs(start, 0.0);
        if self.best_arc == f64::NEG_INFINITY {
            None
        } else {
            Some((self.best_arc, self.best_edges.clone()))
        }
    }

    fn dfs(&mut self, node: usize, arc: f64) {
        if self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if node == self.target && !self.current.is_empty() && arc > self.best_arc {
            self.best_arc = arc;
            self.best_edges = self.current.clone();
        }
        for &ei in &self.adjacency[node].clone() {
            if self.used[ei] {
                continue;
            }
            let e = &self.graph.edges[ei];
            let (next, forward) = if e.a == node { (e.b, true) } else { (e.a, false) };
            self.used[ei] = true;
            self.current.push((ei, forward));
            self.dfs(next, arc + e.arc_length);
            self.current.pop();
            self.used[ei] = false;
            // Self-loop: also usable in the other direction, but the arc is
            // identical, so one traversal suffices.
        }
    }
}

fn reconstruct_trail(graph: &SkeletonGraph, start: usize, edges: &[(usize, bool)]) -> Vec<Point> {
    let mut points: Vec<Point> = Vec::new();
    let mut entry_pixel = graph.nodes[start].pixel;
    let mut node = start;
    for &(ei, forward) in edges {
        let e = &graph.edges[ei];
        let (path, next_node): (Vec<Point>, usize) = if forward {
            (e.path.clone(), e.b)
        } else {
            (e.path.iter().rev().copied().collect(), e.a)
        };
        debug_assert!(if forward { e.a == node } else { e.b == node });
        // Bridge across the current node cluster from the previous entry
        // pixel to this edge's starting pixel.
        let bridge = cluster_walk(&graph.nodes[node].pixels, entry_pixel, path[0]);
        for p in bridge {
            if points.last() != Some(&p) {
                points.push(p);
            }
        }
        for p in &path[1..] {
            if points.last() != Some(p) {
                points.push(*p);
            }
        }
        entry_pixel = *path.last().unwrap();
        node = next_node;
    }
    if points.is_empty() {
        points.push(graph.nodes[start].pixel);
    }
    points
}

/// The measurement path of a capillary: the maximum-arc-length edge-simple
/// trail between two endpoints; for endpoint-free cycles, the longest cycle
/// split at its smallest-(row, col) pixel (emitted closed, so chord is 0).
pub fn main_path(graph: &SkeletonGraph) -> Result<CapillaryPath> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let endpoints = graph.endpoint_ids();
    let mut search = TrailSearch::new(graph);
    let mut best: Option<(f64, usize, Vec<(usize, bool)>)> = None;

    if endpoints.len() >= 2 {
        for (i, &a) in endpoints.iter().enumerate() {
            for &b in endpoints.iter().skip(i + 1) {
                if let Some((arc, edges)) = search.longest_trail(a, b) {
                    let better = match &best {
                        None => true,
                        Some((ba, bstart, _)) => {
                            arc > *ba
                                || (arc == *ba
                                    && graph.nodes[a].pixel < graph.nodes[*bstart].pixel)
                        }
                    };
                    if better {
                        best = Some((arc, a, edges));
                    }
                }
            }
        }
    } else if endpoints.len() == 1 {
        // Degenerate lollipop: walk as far as possible from the endpoint.
        let a = endpoints[0];
        for b in 0..graph.nodes.len() {
            if let Some((arc, edges)) = search.longest_trail(a, b) {
                if best.as_ref().map(|(ba, _, _)| arc > *ba).unwrap_or(true) {
                    best = Some((arc, a, edges));
                }
            }
        }
        if best.is_none() {
            // Isolated single pixel.
            return CapillaryPath::from_points(vec![graph.nodes[a].pixel]);
        }
    }

    if let Some((_, start, edges)) = best {
        let points = reconstruct_trail(graph, start, &edges);
        return CapillaryPath::from_points(points);
    }

    // No endpoints: node-free cycles, or junction-only cycle structures.
    if !graph.cycles.is_empty() {
        let cycle = graph
            .cycles
            .iter()
            .max_by(|a, b| {
                let (la, lb) = (cycle_length(a), cycle_length(b));
                la.partial_cmp(&lb).unwrap().then_with(|| b[0].cmp(&a[0]))
            })
            .unwrap();
        return CapillaryPath::from_points(open_cycle(cycle));
    }

    // Junction-only structures (e.g. a theta shape): longest closed trail
    // from any node back to itself.
    let mut best_cycle: Option<(f64, usize, Vec<(usize, bool)>)> = None;
    for a in 0..graph.nodes.len() {
        if let Some((arc, edges)) = search.longest_trail(a, a) {
            if best_cycle.as_ref().map(|(ba, _, _)| arc > *ba).unwrap_or(true) {
                best_cycle = Some((arc, a, edges));
            }
        }
    }
    match best_cycle {
        Some((_, start, edges)) => {
            let mut points = reconstruct_trail(graph, start, &edges);
            if points.first() == points.last() && points.len() > 1 {
                points.pop();
            }
            CapillaryPath::from_points(open_cycle(&points))
        }
        None => {
            // Isolated nodes only.
            CapillaryPath::from_points(vec![graph.nodes[0].pixel])
        }
    }
}

fn cycle_length(cycle: &[Point]) -> f64 {
    if cycle.len() < 2 {
        return 0.0;
    }
    chain_arc_length(cycle) + step_length(*cycle.last().unwrap(), cycle[0])
}

/// Rotate a closed pixel loop so it starts (and ends) at its smallest
/// (row, col) pixel.
fn open_cycle(cycle: &[Point]) -> Vec<Point> {
    let min_idx = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, p)| **p)
        .map(|(i, _)| i)
        .unwrap();
    let mut points: Vec<Point> = Vec::with_capacity(cycle.len() + 1);
    points.extend_from_slice(&cycle[min_idx..]);
    points.extend_from_slice(&cycle[..min_idx]);
    points.push(cycle[min_idx]);
    points
}

/// Number of 8-connected foreground components.
pub fn component_count(mask: &BinaryMask) -> usize {
    let (w, h) = (mask.width(), mask.height());
    let mut visited = vec![false; w * h];
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || visited[r * w + c] {
                continue;
            }
            count += 1;
            let mut stack = vec![(r, c)];
            visited[r * w + c] = true;
            while let Some((pr, pc)) = stack.pop() {
                for (dr, dc) in NEIGH8 {
                    let (rr, cc) = (pr as i64 + dr, pc as i64 + dc);
                    if rr >= 0
                        && rr < h as i64
                        && cc >= 0
                        && cc < w as i64
                        && mask.get(rr as usize, cc as usize)
                        && !visited[rr as usize * w + cc as usize]
                    {
                        visited[rr as usize * w + cc as usize] = true;
                        stack.push((rr as usize, cc as usize));
                    }
                }
            }
        }
    }
    count
}
