//! Reference-path enumeration: localize the target on the lane graph,
//! depth-first search over connectivity, subsumption dedupe, resampling.

use crate::error::{Error, Result};
use crate::scene::{wrap_angle, AgentState, LaneGraph, Point};

/// Arc-length-parametrized centerline polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub segment_ids: Vec<String>,
    /// Polyline resampled at the configured spacing.
    pub points: Vec<Point>,
    /// Nondecreasing cumulative arc length per point, starting at 0.
    pub cum_arclength: Vec<f64>,
}

impl ReferencePath {
    pub fn length(&self) -> f64 {
        *self.cum_arclength.last().unwrap()
    }
}

/// Distance from a point to a polyline, plus the direction of the closest
/// segment.
fn polyline_distance(poly: &[Point], p: Point) -> (f64, Point) {
    let mut best = f64::INFINITY;
    let mut dir = Point::new(1.0, 0.0);
    for w in poly.windows(2) {
        let seg = w[1].sub(w[0]);
        let len2 = seg.dot(seg);
        let t = if len2 > 0.0 {
            (p.sub(w[0]).dot(seg) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let closest = w[0].add(seg.scale(t));
        let d = p.dist(closest);
        if d < best {
            best = d;
            dir = seg;
        }
    }
    (best, dir)
}

/// Finds root segments within `radius` of the state's position, ordered by
/// distance, then heading alignment, then id.
pub fn localize(graph: &LaneGraph, state: &AgentState, radius: f64) -> Result<Vec<String>> {
    let mut candidates: Vec<(f64, f64, String)> = Vec::new();
    for seg in graph.segments.values() {
        let (dist, dir) = polyline_distance(&seg.centerline, state.position);
        if dist <= radius {
            let seg_heading = dir.y.atan2(dir.x);
            let misalign = wrap_angle(state.heading - seg_heading).abs();
            candidates.push((dist, misalign, seg.id.clone()));
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoRootSegment {
            x: state.position.x,
            y: state.position.y,
            radius,
        });
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    Ok(candidates.into_iter().map(|(_, _, id)| id).collect())
}

/// Enumerates maximal chains from `root` in one direction. A chain stops
/// extending once the cumulative length of appended segments reaches
/// `bound`, at a dead end, or when a segment would repeat.
fn chains_from(
    graph: &LaneGraph,
    root: &str,
    bound: f64,
    next_of: impl Fn(&str) -> Vec<String> + Copy,
) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![root.to_string()], 0.0_f64)];
    while let Some((chain, acc)) = stack.pop() {
        let tip = chain.last().unwrap().clone();
        let mut extended = false;
        if acc < bound {
            for next in next_of(&tip) {
                if chain.contains(&next) {
                    continue;
                }
                let len = graph.segments[&next].length();
                let mut c = chain.clone();
                c.push(next);
                stack.push((c, acc + len));
                extended = true;
            }
        }
        if !extended {
            out.push(chain);
        }
    }
    out.sort();
    out
}

/// Raw chain enumeration: every backward chain concatenated with every
/// forward chain through each root. Returned as segment-id sequences.
pub fn raw_chains(graph: &LaneGraph, roots: &[String], d_f: f64, d_b: f64) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for root in roots {
        let forward = chains_from(graph, root, d_f, |id| graph.segments[id].successors.clone());
        let backward = chains_from(graph, root, d_b, |id| {
            graph.segments[id].predecessors.clone()
        });
        for back in &backward {
            for fwd in &forward {
                // back is root-first walking backwards; reverse it and drop
                // the duplicated root.
                let mut ids: Vec<String> = back.iter().rev().cloned().collect();
                ids.pop();
                // skip combinations that would revisit a segment
                if fwd.iter().any(|id| ids.contains(id)) {
                    ids.retain(|id| !fwd.contains(id));
                }
                ids.extend(fwd.iter().cloned());
                out.push(ids);
            }
        }
    }
    out
}

fn is_contiguous_subseq(needle: &[String], hay: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Removes every chain whose id sequence is a contiguous subsequence of
/// another survivor (exact duplicates collapse to one). Output is sorted
/// lexicographically for determinism.
pub fn dedupe_chains(mut chains: Vec<Vec<String>>) -> Vec<Vec<String>> {
    chains.sort();
    chains.dedup();
    let survivors: Vec<Vec<String>> = chains
        .iter()
        .filter(|c| {
            !chains
                .iter()
                .any(|other| other.len() > c.len() && is_contiguous_subseq(c, other))
        })
        .cloned()
        .collect();
    survivors
}

/// Concatenates segment centerlines, dropping coincident joint points.
fn concat_centerlines(graph: &LaneGraph, ids: &[String]) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    for id in ids {
        for &p in &graph.segments[id].centerline {
            if pts.last().map_or(true, |last| last.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Resamples a polyline at fixed arc-length spacing, keeping the final
/// endpoint.
pub fn resample_polyline(pts: &[Point], spacing: f64) -> Vec<Point> {
    debug_assert!(pts.len() >= 2);
    let mut out = vec![pts[0]];
    let mut carried = 0.0;
    for w in pts.windows(2) {
        let seg_len = w[0].dist(w[1]);
        if seg_len < 1e-12 {
            continue;
        }
        let dir = w[1].sub(w[0]).scale(1.0 / seg_len);
        let mut t = spacing - carried;
        while t <= seg_len {
            out.push(w[0].add(dir.scale(t)));
            t += spacing;
        }
        carried = (carried + seg_len) % spacing;
    }
    let end = *pts.last().unwrap();
    let last = *out.last().unwrap();
    if last.dist(end) > 1e-9 {
        if last.dist(end) > spacing * 0.25 || out.len() < 2 {
            out.push(end);
        } else {
            // snap a nearly-coincident tail sample onto the exact endpoint
            *out.last_mut().unwrap() = end;
        }
    }
    out
}

fn build_reference_path(graph: &LaneGraph, ids: Vec<String>, spacing: f64) -> ReferencePath {
    let raw = concat_centerlines(graph, &ids);
    let points = resample_polyline(&raw, spacing);
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(w[1]);
        cum.push(acc);
    }
    ReferencePath {
        segment_ids: ids,
        points,
        cum_arclength: cum,
    }
}

/// Full potential-path enumeration P+ for the given roots: DFS chains,
/// subsumption dedupe, fixed-spacing resampling.
pub fn search_paths(
    graph: &LaneGraph,
    roots: &[String],
    d_f: f64,
    d_b: f64,
    spacing: f64,
) -> Vec<ReferencePath> {
    let chains = dedupe_chains(raw_chains(graph, roots, d_f, d_b));
    chains
        .into_iter()
        .map(|ids| build_reference_path(graph, ids, spacing))
        .collect()
}
