use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::regions::RegionGraph;
use super::PlanError;
use crate::base::{Aabb, Vec3};
use crate::radio::{handover_count, RadioMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanWeights {
    pub w_dist: f64,
    pub w_handover: f64,
    pub w_risk: f64,
    /// Offset above the map threshold below which regions accrue risk.
    #[serde(default = "default_margin")]
    pub gamma_margin_offset_db: f64,
}

fn default_margin() -> f64 {
    3.0
}

impl Default for PlanWeights {
    fn default() -> Self {
        Self {
            w_dist: 1.0,
            w_handover: 5.0,
            w_risk: 0.5,
            gamma_margin_offset_db: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub waypoints: Vec<Vec3>,
    /// Region ids visited, start region first.
    pub regions: Vec<usize>,
    /// Weighted length, handover and risk cost of the chosen route.
    pub cost: f64,
}

impl Plan {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Handover and risk cost of entering region `to` from `from`.
fn transition_penalty(graph: &RegionGraph, map: &RadioMap, w: &PlanWeights, from: usize, to: usize) -> f64 {
    let (a, b) = (&graph.regions[from], &graph.regions[to]);
    let handover = if a.modal_serving != b.modal_serving { 1.0 } else { 0.0 };
    let margin = map.gamma_th_db + w.gamma_margin_offset_db;
    let risk = (margin - b.min_sinr_db).max(0.0);
    w.w_handover * handover + w.w_risk * risk
}

/// Samples per face axis for route search crossing points.
const PORTAL_SAMPLES: usize = 3;

/// Candidate crossing points of portal `k`: a lattice over the face inset by
/// half a cell, at most `PORTAL_SAMPLES` per axis and no denser than the grid.
fn portal_points(graph: &RegionGraph, k: usize) -> Vec<Vec3> {
    let portal = &graph.portals[k];
    let face = &portal.face;
    let res = graph.grid.resolution;
    let (u, v) = match portal.axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let ticks = |a: usize| -> Vec<f64> {
        let (lo, hi) = (face.min[a] + 0.5 * res, face.max[a] - 0.5 * res);
        if lo >= hi {
            return vec![0.5 * (face.min[a] + face.max[a])];
        }
        let cells = ((hi - lo) / res).round() as usize + 1;
        let n = cells.min(PORTAL_SAMPLES);
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let mut pts = Vec::new();
    for &a in &ticks(u) {
        for &b in &ticks(v) {
            let mut p = face.center();
            p[u] = a;
            p[v] = b;
            pts.push(p);
        }
    }
    pts
}

#[derive(Clone, Copy)]
struct Crossing {
    portal: usize,
    point: Vec3,
    /// Region entered through the portal.
    region: usize,
}

fn chain(pred: &[Option<usize>], mut r: usize) -> Vec<usize> {
    let mut out = vec![r];
    while let Some(p) = pred[r] {
        out.push(p);
        r = p;
    }
    out.reverse();
    out
}

/// Cheapest region sequence from `start` to `goal`.
///
/// Dijkstra runs over directed portal crossings; a leg inside a region is the
/// straight segment between crossing points, which stays inside the box.
/// Equal costs resolve to the lexicographically smallest region sequence.
pub(crate) fn region_route(
    graph: &RegionGraph,
    map: &RadioMap,
    w: &PlanWeights,
    start: &Vec3,
    goal: &Vec3,
    sources: &[usize],
    targets: &[usize],
) -> Option<(Vec<usize>, f64)> {
    let mut nodes: Vec<Crossing> = Vec::new();
    let mut by_portal: Vec<Vec<usize>> = Vec::with_capacity(graph.portals.len());
    for (k, portal) in graph.portals.iter().enumerate() {
        let mut ids = Vec::new();
        for point in portal_points(graph, k) {
            for region in [portal.lower, portal.upper] {
                ids.push(nodes.len());
                nodes.push(Crossing { portal: k, point, region });
            }
        }
        by_portal.push(ids);
    }
    let regions_of = |pred: &[Option<usize>], first: &[usize], id: usize| {
        let c = chain(pred, id);
        let mut seq = vec![first[c[0]]];
        seq.extend(c.iter().map(|&i| nodes[i].region));
        seq
    };

    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    // source region a first crossing leaves from
    let mut first = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let relax = |dist: &mut [f64],
                     pred: &mut [Option<usize>],
                     first: &mut [usize],
                     heap: &mut BinaryHeap<Entry>,
                     from: Option<usize>,
                     // source region, used when `from` is None
                     origin: usize,
                     to: usize,
                     nd: f64| {
        let better = match nd.total_cmp(&dist[to]) {
            Ordering::Less => true,
            Ordering::Equal => {
                let mut cand = match from {
                    Some(f) => regions_of(pred, first, f),
                    None => vec![origin],
                };
                cand.push(nodes[to].region);
                cand < regions_of(pred, first, to)
            }
            Ordering::Greater => false,
        };
        if better {
            dist[to] = nd;
            pred[to] = from;
            first[to] = from.map_or(origin, |f| first[f]);
            heap.push(Entry(nd, to));
        }
    };
    for &s in sources {
        for &k in &graph.adjacency[s] {
            let t = graph.portals[k].other(s);
            for &id in &by_portal[k] {
                if nodes[id].region != t {
                    continue;
                }
                let nd = w.w_dist * (nodes[id].point - start).norm() + transition_penalty(graph, map, w, s, t);
                relax(&mut dist, &mut pred, &mut first, &mut heap, None, s, id, nd);
            }
        }
    }
    while let Some(Entry(d, id)) = heap.pop() {
        if done[id] || d > dist[id] {
            continue;
        }
        done[id] = true;
        let Crossing { portal, point, region } = nodes[id];
        for &k in &graph.adjacency[region] {
            if k == portal {
                continue;
            }
            let t = graph.portals[k].other(region);
            let penalty = transition_penalty(graph, map, w, region, t);
            for &j in &by_portal[k] {
                if nodes[j].region != t || done[j] {
                    continue;
                }
                let nd = d + w.w_dist * (nodes[j].point - point).norm() + penalty;
                relax(&mut dist, &mut pred, &mut first, &mut heap, Some(id), region, j, nd);
            }
        }
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut offer = |seq: Vec<usize>, cost: f64| {
        let replace = match &best {
            None => true,
            Some((bseq, bd)) => match cost.total_cmp(bd) {
                Ordering::Less => true,
                Ordering::Equal => seq < *bseq,
                Ordering::Greater => false,
            },
        };
        if replace {
            best = Some((seq, cost));
        }
    };
    for &s in sources {
        if targets.contains(&s) {
            offer(vec![s], w.w_dist * (goal - start).norm());
        }
    }
    for id in 0..n {
        if dist[id].is_finite() && targets.contains(&nodes[id].region) {
            offer(regions_of(&pred, &first, id), dist[id] + w.w_dist * (goal - nodes[id].point).norm());
        }
    }
    best
}

/// Portal face shrunk by half a cell on its transverse axes, where the face
/// is wide enough.
fn inset_face(graph: &RegionGraph, k: usize) -> Aabb {
    let portal = &graph.portals[k];
    let mut face = portal.face;
    let half = 0.5 * graph.grid.resolution;
    for a in (0..3).filter(|&a| a != portal.axis) {
        if face.max[a] - face.min[a] >= 2.0 * half {
            face.min[a] += half;
            face.max[a] -= half;
        } else {
            let c = 0.5 * (face.min[a] + face.max[a]);
            face.min[a] = c;
            face.max[a] = c;
        }
    }
    face
}

/// Goal-directed variant of [`region_route`]: each crossing is the face point
/// nearest the segment from the previous crossing to the goal, as a taut path
/// would choose. Crossing positions depend on the predecessor, so the search
/// is a heuristic; it complements the lattice search on long thin regions.
pub(crate) fn region_route_directed(
    graph: &RegionGraph,
    map: &RadioMap,
    w: &PlanWeights,
    start: &Vec3,
    goal: &Vec3,
    sources: &[usize],
    targets: &[usize],
) -> Option<Vec<usize>> {
    let faces: Vec<Aabb> = (0..graph.portals.len()).map(|k| inset_face(graph, k)).collect();
    let node = |k: usize, region: usize| 2 * k + usize::from(graph.portals[k].upper == region);
    let n = 2 * graph.portals.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut point = vec![Vec3::zeros(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut origin = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        for &k in &graph.adjacency[s] {
            let t = graph.portals[k].other(s);
            let p = nearest_to_segment(start, goal, &faces[k]);
            let nd = w.w_dist * (p - start).norm() + transition_penalty(graph, map, w, s, t);
            let id = node(k, t);
            if nd < dist[id] {
                dist[id] = nd;
                point[id] = p;
                origin[id] = s;
                heap.push(Entry(nd, id));
            }
        }
    }
    while let Some(Entry(d, id)) = heap.pop() {
        if done[id] || d > dist[id] {
            continue;
        }
        done[id] = true;
        let k = id / 2;
        let region = if id % 2 == 1 { graph.portals[k].upper } else { graph.portals[k].lower };
        for &k2 in &graph.adjacency[region] {
            if k2 == k {
                continue;
            }
            let t = graph.portals[k2].other(region);
            let j = node(k2, t);
            if done[j] {
                continue;
            }
            let p = nearest_to_segment(&point[id], goal, &faces[k2]);
            let nd = d + w.w_dist * (p - point[id]).norm() + transition_penalty(graph, map, w, region, t);
            if nd < dist[j] {
                dist[j] = nd;
                point[j] = p;
                pred[j] = Some(id);
                origin[j] = origin[id];
                heap.push(Entry(nd, j));
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for &s in sources {
        if targets.contains(&s) {
            best = Some((w.w_dist * (goal - start).norm(), vec![s]));
            break;
        }
    }
    for id in 0..n {
        let region = if id % 2 == 1 { graph.portals[id / 2].upper } else { graph.portals[id / 2].lower };
        if !dist[id].is_finite() || !targets.contains(&region) {
            continue;
        }
        let cost = dist[id] + w.w_dist * (goal - point[id]).norm();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            let c = chain(&pred, id);
            let mut seq = vec![origin[id]];
            for &i in &c {
                let kk = i / 2;
                seq.push(if i % 2 == 1 { graph.portals[kk].upper } else { graph.portals[kk].lower });
            }
            best = Some((cost, seq));
        }
    }
    best.map(|(_, seq)| seq)
}

/// Graphs up to this size use every simple route as a candidate.
const EXHAUSTIVE_REGIONS: usize = 8;

fn simple_routes(graph: &RegionGraph, targets: &[usize], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let r = *path.last().unwrap();
    if targets.contains(&r) {
        out.push(path.clone());
    }
    for &k in &graph.adjacency[r] {
        let t = graph.portals[k].other(r);
        if !path.contains(&t) {
            path.push(t);
            simple_routes(graph, targets, path, out);
            path.pop();
        }
    }
}

/// Internal handover weights used to generate candidate routes.
const HANDOVER_PROBES: [f64; 8] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 1000.0];

/// Plan a waypoint path from `start` to `goal` through the region graph.
///
/// On graphs of at most `EXHAUSTIVE_REGIONS` regions every simple route is a
/// candidate. Larger graphs take the routes found by two searches at each
/// rung of a fixed ladder of handover weights. Each candidate is refined to
/// waypoints and the one minimizing
/// `w_dist * length + w_handover * handover_count + w_risk * risk` wins.
/// Because the candidates do not depend on `w_handover`, raising it never
/// raises the handover count of the result.
pub fn plan_path(
    graph: &RegionGraph,
    map: &RadioMap,
    start: &Vec3,
    goal: &Vec3,
    weights: &PlanWeights,
) -> Result<Plan, PlanError> {
    let sources = graph.regions_containing(start);
    if sources.is_empty() {
        return Err(PlanError::Infeasible(format!("start {:?}", start.as_slice())));
    }
    let targets = graph.regions_containing(goal);
    if targets.is_empty() {
        return Err(PlanError::Infeasible(format!("goal {:?}", goal.as_slice())));
    }
    let mut routes: Vec<Vec<usize>> = Vec::new();
    if graph.regions.len() <= EXHAUSTIVE_REGIONS {
        for &s in &sources {
            simple_routes(graph, &targets, &mut vec![s], &mut routes);
        }
    } else {
        for h in HANDOVER_PROBES {
            let probe = PlanWeights { w_handover: h, ..*weights };
            let Some((seq, _)) = region_route(graph, map, &probe, start, goal, &sources, &targets) else {
                break;
            };
            let directed = region_route_directed(graph, map, &probe, start, goal, &sources, &targets);
            for seq in std::iter::once(seq).chain(directed) {
                if !routes.contains(&seq) {
                    routes.push(seq);
                }
            }
        }
    }
    let margin = map.gamma_th_db + weights.gamma_margin_offset_db;
    let mut best: Option<Plan> = None;
    for regions in routes {
        let waypoints = refine_route(graph, map, start, goal, &regions);
        let length: f64 = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let handovers = handover_count(map, &waypoints).unwrap_or(usize::MAX) as f64;
        let risk: f64 = regions[1..]
            .iter()
            .map(|&r| (margin - graph.regions[r].min_sinr_db).max(0.0))
            .sum();
        let cost = weights.w_dist * length + weights.w_handover * handovers + weights.w_risk * risk;
        let better = best.as_ref().is_none_or(|b| match cost.total_cmp(&b.cost) {
            Ordering::Less => true,
            Ordering::Equal => regions < b.regions,
            Ordering::Greater => false,
        });
        if better {
            best = Some(Plan {
                waypoints,
                regions,
                cost,
            });
        }
    }
    best.ok_or(PlanError::NoRoute)
}

/// Waypoints through a region sequence: corridor pull, then tightening
/// against the feasible cells.
fn refine_route(graph: &RegionGraph, map: &RadioMap, start: &Vec3, goal: &Vec3, regions: &[usize]) -> Vec<Vec3> {
    let s = graph.center_box(regions[0]).clamp(start);
    let g = graph.center_box(*regions.last().unwrap()).clamp(goal);
    let rects = corridor_rects(graph, regions);
    let mut inner = pull_taut(&s, &g, &rects);
    polish(&s, &g, &rects, &mut inner, graph.grid.resolution);

    let mut waypoints = Vec::with_capacity(inner.len() + 2);
    waypoints.push(s);
    waypoints.extend(inner);
    waypoints.push(g);
    tighten(map, waypoints)
}

/// Planar rectangles the path must cross, two per region transition.
///
/// For a transition the rectangles are the facing center layers of the two
/// regions, restricted to the cells both share across the face.
fn corridor_rects(graph: &RegionGraph, seq: &[usize]) -> Vec<(usize, Aabb)> {
    let grid = &graph.grid;
    let mut out = Vec::with_capacity(2 * seq.len());
    for pair in seq.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let k = graph.adjacency[a]
            .iter()
            .copied()
            .find(|&k| graph.portals[k].other(a) == b)
            .expect("consecutive route regions share a portal");
        let portal = &graph.portals[k];
        let axis = portal.axis;
        let lower = &graph.regions[portal.lower];
        let upper = &graph.regions[portal.upper];
        let mut lo_layer = portal.overlap_lo;
        let mut hi_layer = portal.overlap_hi;
        lo_layer[axis] = lower.hi[axis];
        hi_layer[axis] = lower.hi[axis];
        let on_lower = grid.center_box(lo_layer, hi_layer);
        lo_layer[axis] = upper.lo[axis];
        hi_layer[axis] = upper.lo[axis];
        let on_upper = grid.center_box(lo_layer, hi_layer);
        if a == portal.lower {
            out.push((axis, on_lower));
            out.push((axis, on_upper));
        } else {
            out.push((axis, on_upper));
            out.push((axis, on_lower));
        }
    }
    out
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimize a convex function on [0, 1].
fn golden_min(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let mut best = ((a + b) / 2.0, f((a + b) / 2.0));
    for t in [0.0, 1.0] {
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Point of the planar rectangle `r` (flat along `axis`) minimizing
/// `|p - x| + |x - q|`.
fn best_on_rect(p: &Vec3, q: &Vec3, axis: usize, r: &Aabb) -> Vec3 {
    let c = r.min[axis];
    let dp = p[axis] - c;
    let mut q2 = *q;
    let mut dq = q[axis] - c;
    if dp * dq > 0.0 {
        q2[axis] = c - dq;
        dq = -dq;
    }
    let denom = dp.abs() + dq.abs();
    let t = if denom > 0.0 { dp.abs() / denom } else { 0.5 };
    let mut x = p + (q2 - p) * t;
    x[axis] = c;
    if r.contains(&x) {
        return x;
    }
    let cost = |x: &Vec3| (p - x).norm() + (x - q).norm();
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut corners = [r.min; 4];
    corners[1][u] = r.max[u];
    corners[2][u] = r.max[u];
    corners[2][v] = r.max[v];
    corners[3][v] = r.max[v];
    let mut best = (r.clamp(&x), f64::INFINITY);
    best.1 = cost(&best.0);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let (t, val) = golden_min(|t| cost(&(a + (b - a) * t)));
        if val < best.1 {
            best = (a + (b - a) * t, val);
        }
    }
    best.0
}

/// Point of `r` nearest to the segment `a`-`b`.
fn nearest_to_segment(a: &Vec3, b: &Vec3, r: &Aabb) -> Vec3 {
    let (t, _) = golden_min(|t| {
        let s = a + (b - a) * t;
        (r.clamp(&s) - s).norm()
    });
    r.clamp(&(a + (b - a) * t))
}

/// Shorten the polyline through `rects` by cyclic coordinate descent.
fn pull_taut(start: &Vec3, goal: &Vec3, rects: &[(usize, Aabb)]) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = rects.iter().map(|(_, r)| nearest_to_segment(start, goal, r)).collect();
    let n = pts.len();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let prev = if i == 0 { *start } else { pts[i - 1] };
            let next = if i + 1 == n { *goal } else { pts[i + 1] };
            let (axis, r) = &rects[i];
            let x = best_on_rect(&prev, &next, *axis, r);
            moved = moved.max((x - pts[i]).norm());
            pts[i] = x;
        }
        if moved < 1e-10 {
            break;
        }
    }
    pts
}

/// Drop waypoints with a clear shortcut, then slide each remaining one toward
/// the chord of its neighbors while both legs stay clear. Unlike the corridor
/// pull this may cut across region edges and corners.
fn tighten(map: &RadioMap, pts: Vec<Vec3>) -> Vec<Vec3> {
    let mut path = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let j = (i + 2..pts.len())
            .rev()
            .find(|&j| map.clear_segment(&pts[i], &pts[j]))
            .unwrap_or(i + 1);
        path.push(pts[j]);
        i = j;
    }
    for _ in 0..200 {
        let mut moved = 0.0f64;
        let mut k = 1;
        while k + 1 < path.len() {
            let (a, x, b) = (path[k - 1], path[k], path[k + 1]);
            if map.clear_segment(&a, &b) {
                moved = moved.max((x - a).norm());
                path.remove(k);
                continue;
            }
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let target = a + ab * t;
            let mut s = 0.5;
            while s > 1e-4 {
                let y = x + (target - x) * s;
                if map.clear_segment(&a, &y) && map.clear_segment(&y, &b) {
                    moved = moved.max((y - x).norm());
                    path[k] = y;
                    break;
                }
                s *= 0.5;
            }
            k += 1;
        }
        if moved < 1e-9 {
            break;
        }
    }
    path
}

/// Accelerated projected gradient on the smoothed length
/// `sum sqrt(|x_{i+1} - x_i|^2 + eps^2)`, with `eps` driven toward zero.
fn polish(start: &Vec3, goal: &Vec3, rects: &[(usize, Aabb)], pts: &mut [Vec3], scale: f64) {
    let n = pts.len();
    if n == 0 {
        return;
    }
    let at = |x: &[Vec3], i: isize| -> Vec3 {
        if i < 0 {
            *start
        } else if i as usize >= n {
            *goal
        } else {
            x[i as usize]
        }
    };
    let mut eps = scale;
    while eps > 1e-7 * scale {
        let step = eps / 4.0;
        let mut x = pts.to_vec();
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..400 {
            let mut next = y.clone();
            for i in 0..n {
                let ii = i as isize;
                let (a, c) = (at(&y, ii - 1), at(&y, ii + 1));
                let d1 = y[i] - a;
                let d2 = y[i] - c;
                let g = d1 / (d1.norm_squared() + eps * eps).sqrt() + d2 / (d2.norm_squared() + eps * eps).sqrt();
                next[i] = rects[i].1.clamp(&(y[i] - g * step));
            }
            let t1 = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            for i in 0..n {
                y[i] = next[i] + (next[i] - x[i]) * ((t - 1.0) / t1);
                y[i] = rects[i].1.clamp(&y[i]);
            }
            x = next;
            t = t1;
        }
        pts.copy_from_slice(&x);
        eps /= 4.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::decompose_regions;
    use crate::radio::{CellIndex, Grid};

    fn mask_map(dims: [usize; 3], feasible: impl Fn(CellIndex) -> bool) -> RadioMap {
        let grid = Grid {
            origin: Vec3::zeros(),
            resolution: 1.0,
            dims,
        };
        let n = grid.len();
        let sinr = (0..n)
            .map(|i| if feasible(grid.unlinear(i)) { 10.0 } else { -10.0 })
            .collect();
        RadioMap {
            grid,
            sinr_db: sinr,
            serving_bs: vec![0; n],
            in_building: vec![false; n],
            gamma_th_db: 0.0,
        }
    }

    #[test]
    fn same_region_is_direct() {
        let map = mask_map([4, 4, 1], |_| true);
        let g = decompose_regions(&map);
        let plan = plan_path(&g, &map, &Vec3::new(0.7, 0.6, 0.5), &Vec3::new(3.2, 3.1, 0.5), &PlanWeights::default()).unwrap();
        assert_eq!(plan.waypoints.len(), 2);
        assert_eq!(plan.regions, vec![0]);
    }

    #[test]
    fn outside_and_disconnected() {
        let map = mask_map([5, 3, 1], |c| c[0] != 2);
        let g = decompose_regions(&map);
        let w = PlanWeights::default();
        let a = Vec3::new(0.5, 1.5, 0.5);
        let b = Vec3::new(4.5, 1.5, 0.5);
        let wall = Vec3::new(2.5, 1.5, 0.5);
        assert_eq!(plan_path(&g, &map, &a, &b, &w), Err(PlanError::NoRoute));
        assert!(matches!(plan_path(&g, &map, &wall, &b, &w), Err(PlanError::Infeasible(_))));
        assert!(matches!(plan_path(&g, &map, &a, &Vec3::new(9.0, 0.0, 0.0), &w), Err(PlanError::Infeasible(_))));
    }

    #[test]
    fn l_shape_path_stays_feasible() {
        let map = mask_map([6, 6, 1], |c| c[0] < 2 || c[1] < 2);
        let g = decompose_regions(&map);
        let plan = plan_path(&g, &map, &Vec3::new(5.5, 0.5, 0.5), &Vec3::new(0.5, 5.5, 0.5), &PlanWeights::default()).unwrap();
        for w in plan.waypoints.windows(2) {
            for i in 0..=50 {
                let p = w[0] + (w[1] - w[0]) * (i as f64 / 50.0);
                assert!(map.sinr_at(&p).unwrap() >= map.gamma_th_db, "{p:?}");
            }
        }
        // taut path hugs the inner corner at (1.5, 1.5)
        let direct = 2.0 * (4.0f64 * 4.0 + 1.0).sqrt();
        assert!((plan.length() - direct).abs() < 1e-6, "{}", plan.length());
    }

    #[test]
    fn small_graph_cost_matches_enumeration() {
        // a block in the middle leaves a ring of a few regions
        let map = mask_map([7, 7, 1], |c| !(2..5).contains(&c[0]) || !(2..5).contains(&c[1]) || c[1] == 4 && c[0] == 2);
        let g = decompose_regions(&map);
        assert!(g.regions.len() <= EXHAUSTIVE_REGIONS, "{}", g.regions.len());
        let (start, goal) = (Vec3::new(0.5, 3.5, 0.5), Vec3::new(6.5, 3.5, 0.5));
        let w = PlanWeights {
            w_handover: 0.0,
            w_risk: 0.0,
            ..PlanWeights::default()
        };
        let plan = plan_path(&g, &map, &start, &goal, &w).unwrap();

        // independent depth-first enumeration over the edge list
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let (src, dst) = (g.regions_containing(&start), g.regions_containing(&goal));
        let mut stack: Vec<Vec<usize>> = src.iter().map(|&s| vec![s]).collect();
        let mut best = f64::INFINITY;
        let mut count = 0;
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            if dst.contains(&last) {
                let pts = refine_route(&g, &map, &start, &goal, &path);
                let len: f64 = pts.windows(2).map(|p| (p[1] - p[0]).norm()).sum();
                best = best.min(len);
                count += 1;
            }
            for &(a, b) in &edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == last && !path.contains(&y) {
                        let mut next = path.clone();
                        next.push(y);
                        stack.push(next);
                    }
                }
            }
        }
        assert!(count >= 2, "ring offers two ways round");
        assert!((plan.cost - best).abs() < 1e-12, "{} vs {best}", plan.cost);
    }

    #[test]
    fn equal_routes_prefer_no_handover() {
        let mut map = mask_map([7, 7, 1], |c| !(2..5).contains(&c[0]) || !(2..5).contains(&c[1]));
        for i in 0..map.grid.len() {
            let c = map.grid.unlinear(i);
            if c[1] >= 5 && (2..5).contains(&c[0]) {
                map.serving_bs[i] = 1;
            }
        }
        let g = decompose_regions(&map);
        let (start, goal) = (Vec3::new(0.5, 3.5, 0.5), Vec3::new(6.5, 3.5, 0.5));
        let plan = plan_path(&g, &map, &start, &goal, &PlanWeights::default()).unwrap();
        assert_eq!(handover_count(&map, &plan.waypoints).unwrap(), 0);
        assert!(plan.waypoints.iter().all(|p| p.y <= 3.5), "{:?}", plan.waypoints);
    }

    #[test]
    fn rect_subproblem_reflects_same_side() {
        let r = Aabb::new(Vec3::new(1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)).unwrap();
        let x = best_on_rect(&Vec3::new(0.0, 0.0, 0.0), &Vec3::new(0.0, 0.0, 0.0), 0, &r);
        assert!((x - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let x = best_on_rect(&Vec3::new(0.0, 3.0, 0.0), &Vec3::new(2.0, 3.0, 0.0), 0, &r);
        assert!((x - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-6);
    }
}


