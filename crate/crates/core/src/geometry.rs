//! Level-set extraction and interface measurements in 2D.
//!
//! Marching squares runs on the dual lattice whose square corners are cell
//! centers, so every square wraps across the periodic seam like the grid
//! does. Crossings are placed by linear interpolation along square edges and
//! ambiguous saddles are resolved with the average of the four corners. Each
//! square also contributes the polygon of its `phi > level` part, which gives
//! an area and a centroid consistent with the extracted curve.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::grid::{Grid, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("interface extraction is only available in 2D (grid has {0} axes)")]
    NotTwoDimensional(usize),
    #[error("the curve has no vertices")]
    EmptyCurve,
}

/// A closed polyline; vertices are unwrapped so consecutive points are
/// adjacent in the plane. Loops that wind around the torus do not return to
/// their first vertex but to a lattice translate of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let n = self.vertices.len();
        let mut total = 0.0;
        for i in 0..n.saturating_sub(1) {
            total += dist(self.vertices[i], self.vertices[i + 1]);
        }
        total
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// The `phi = level` curve and the region `phi > level`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCurve {
    pub polylines: Vec<Polyline>,
    pub area: f64,
    pub perimeter: f64,
    /// Torus-aware centroid of the inside region; `None` if the region is
    /// empty or covers the whole torus evenly.
    pub centroid: Option<[f64; 2]>,
    pub lengths: [f64; 2],
}

impl InterfaceCurve {
    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.vertices.len()).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64; 2]> {
        self.polylines.iter().flat_map(|p| p.vertices.iter())
    }
}

/// Edge ids of a dual square: bottom, right, top, left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    /// Horizontal edge between corners (i, j) and (i+1, j).
    H(usize, usize),
    /// Vertical edge between corners (i, j) and (i, j+1).
    V(usize, usize),
}

struct Segment {
    from: Edge,
    to: Edge,
    /// Unwrapped endpoint positions in the square's local frame.
    a: [f64; 2],
    b: [f64; 2],
}

/// Extract the `level` set of a 2D field.
pub fn extract_contour(phi: &ScalarField, level: f64) -> Result<InterfaceCurve, GeometryError> {
    let grid = phi.grid();
    if grid.ndim() != 2 {
        return Err(GeometryError::NotTwoDimensional(grid.ndim()));
    }
    let nx = grid.dims()[0];
    let ny = grid.dims()[1];
    let hx = grid.spacing()[0];
    let hy = grid.spacing()[1];
    let v = phi.values();
    let at = |i: usize, j: usize| v[(i % nx) + nx * (j % ny)];

    let mut segments: Vec<Segment> = Vec::new();
    let mut area = 0.0;
    // Circular-mean accumulators (area-weighted) per axis.
    let mut circ = [[0.0f64; 2]; 2];

    for j in 0..ny {
        for i in 0..nx {
            // Corner positions (cell centers); the square spans to i+1, j+1.
            let x0 = (i as f64 + 0.5) * hx;
            let y0 = (j as f64 + 0.5) * hy;
            let corners = [
                ([x0, y0], at(i, j)),
                ([x0 + hx, y0], at(i + 1, j)),
                ([x0 + hx, y0 + hy], at(i + 1, j + 1)),
                ([x0, y0 + hy], at(i, j + 1)),
            ];
            let inside: [bool; 4] = std::array::from_fn(|c| corners[c].1 > level);
            let edges = [
                Edge::H(i, j),
                Edge::V((i + 1) % nx, j),
                Edge::H(i, (j + 1) % ny),
                Edge::V(i, j),
            ];
            let crossing = |e: usize| {
                let (pa, va) = corners[e];
                let (pb, vb) = corners[(e + 1) % 4];
                let t = (level - va) / (vb - va);
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            };

            // Inside polygon(s) of the square.
            let count = inside.iter().filter(|&&b| b).count();
            if count == 0 {
                continue;
            }
            let mut polys: Vec<Vec<[f64; 2]>> = Vec::new();
            let saddle = count == 2 && inside[0] == inside[2];
            if count == 4 {
                polys.push(corners.iter().map(|c| c.0).collect());
            } else if saddle {
                let avg = 0.25 * corners.iter().map(|c| c.1).sum::<f64>();
                if avg > level {
                    // Connected: one hexagon through both inside corners.
                    let mut poly = Vec::with_capacity(6);
                    for c in 0..4 {
                        if inside[c] {
                            poly.push(corners[c].0);
                        }
                        poly.push(crossing(c));
                    }
                    polys.push(poly);
                } else {
                    for c in 0..4 {
                        if inside[c] {
                            let prev = (c + 3) % 4;
                            polys.push(vec![crossing(prev), corners[c].0, crossing(c)]);
                        }
                    }
                }
            } else {
                let mut poly = Vec::with_capacity(5);
                for c in 0..4 {
                    if inside[c] {
                        poly.push(corners[c].0);
                    }
                    if inside[c] != inside[(c + 1) % 4] {
                        poly.push(crossing(c));
                    }
                }
                polys.push(poly);
            }
            for poly in &polys {
                let (a, cx, cy) = polygon_area_centroid(poly);
                area += a;
                for (axis, c) in [cx, cy].into_iter().enumerate() {
                    let theta = TAU * c / grid.lengths()[axis];
                    circ[axis][0] += a * theta.cos();
                    circ[axis][1] += a * theta.sin();
                }
            }

            // Boundary segments: walk the inside polygon edges that are
            // crossing-to-crossing (inside region kept on the left).
            if count == 4 {
                continue;
            }
            let mut add = |from: usize, to: usize| {
                segments.push(Segment {
                    from: edges[from],
                    to: edges[to],
                    a: crossing(from),
                    b: crossing(to),
                });
            };
            if saddle {
                let avg = 0.25 * corners.iter().map(|c| c.1).sum::<f64>();
                for c in 0..4 {
                    if inside[c] {
                        let prev = (c + 3) % 4;
                        if avg > level {
                            add(c, (c + 1) % 4);
                        } else {
                            add(c, prev);
                        }
                    }
                }
            } else {
                // Exactly one entry and one exit edge.
                let mut exit = None;
                let mut entry = None;
                for c in 0..4 {
                    let n = (c + 1) % 4;
                    if inside[c] && !inside[n] {
                        exit = Some(c);
                    }
                    if !inside[c] && inside[n] {
                        entry = Some(c);
                    }
                }
                if let (Some(x), Some(e)) = (exit, entry) {
                    add(x, e);
                }
            }
        }
    }

    let polylines = link_segments(segments, grid);
    let perimeter = polylines.iter().map(Polyline::length).sum();
    let centroid = circular_centroid(&circ, area, grid);
    Ok(InterfaceCurve {
        polylines,
        area,
        perimeter,
        centroid,
        lengths: [grid.lengths()[0], grid.lengths()[1]],
    })
}

fn polygon_area_centroid(poly: &[[f64; 2]]) -> (f64, f64, f64) {
    let n = poly.len();
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        let cross = p[0] * q[1] - q[0] * p[1];
        a2 += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    if a2.abs() < f64::MIN_POSITIVE {
        return (0.0, poly[0][0], poly[0][1]);
    }
    (0.5 * a2, cx / (3.0 * a2), cy / (3.0 * a2))
}

fn circular_centroid(circ: &[[f64; 2]; 2], area: f64, grid: &Grid) -> Option<[f64; 2]> {
    if area <= 0.0 {
        return None;
    }
    let mut out = [0.0; 2];
    for axis in 0..2 {
        let [c, s] = circ[axis];
        if (c * c + s * s).sqrt() <= 1e-12 * area {
            return None;
        }
        let theta = s.atan2(c).rem_euclid(TAU);
        out[axis] = theta / TAU * grid.lengths()[axis];
    }
    Some(out)
}

/// Chain segments into loops, starting each loop from the smallest unused
/// entry edge so the vertex order is deterministic.
fn link_segments(segments: Vec<Segment>, grid: &Grid) -> Vec<Polyline> {
    let mut by_entry: BTreeMap<Edge, usize> = BTreeMap::new();
    for (idx, s) in segments.iter().enumerate() {
        by_entry.insert(s.from, idx);
    }
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    let lx = grid.lengths()[0];
    let ly = grid.lengths()[1];
    for &start in by_entry.values() {
        if used[start] {
            continue;
        }
        let mut verts: Vec<[f64; 2]> = vec![segments[start].a];
        let mut cur = start;
        loop {
            used[cur] = true;
            let seg = &segments[cur];
            let last = *verts.last().unwrap();
            // Shift the segment so its start coincides with the chain end.
            let sx = ((last[0] - seg.a[0]) / lx).round() * lx;
            let sy = ((last[1] - seg.a[1]) / ly).round() * ly;
            verts.push([seg.b[0] + sx, seg.b[1] + sy]);
            match by_entry.get(&seg.to) {
                Some(&next) if !used[next] => cur = next,
                _ => break,
            }
        }
        loops.push(Polyline { vertices: verts });
    }
    loops
}

/// Radius of the disk with the same area, `sqrt(area / pi)`.
pub fn radius_from_area(curve: &InterfaceCurve) -> f64 {
    (curve.area.max(0.0) / PI).sqrt()
}

/// Hausdorff-type distance between the curve and a circle on the torus.
///
/// The one-sided part is the largest `| |v - center| - radius |` over
/// vertices. Coverage of the circle is checked through angular gaps between
/// consecutive vertices: the circle point in the middle of each gap is
/// measured against the chord spanning it.
pub fn hausdorff_to_circle(
    curve: &InterfaceCurve,
    center: [f64; 2],
    radius: f64,
) -> Result<f64, GeometryError> {
    if curve.vertex_count() == 0 {
        return Err(GeometryError::EmptyCurve);
    }
    let [lx, ly] = curve.lengths;
    let wrap = |d: f64, l: f64| d - l * (d / l + 0.5).floor();
    let mut one_sided: f64 = 0.0;
    let mut polar: Vec<(f64, [f64; 2])> = Vec::with_capacity(curve.vertex_count());
    for v in curve.vertices() {
        let d = [wrap(v[0] - center[0], lx), wrap(v[1] - center[1], ly)];
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        one_sided = one_sided.max((r - radius).abs());
        polar.push((d[1].atan2(d[0]), d));
    }
    polar.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut coverage: f64 = 0.0;
    for k in 0..polar.len() {
        let (t0, p) = polar[k];
        let (t1, q) = if k + 1 < polar.len() {
            polar[k + 1]
        } else {
            (polar[0].0 + TAU, polar[0].1)
        };
        let mid = 0.5 * (t0 + t1);
        let c = [radius * mid.cos(), radius * mid.sin()];
        coverage = coverage.max(point_segment_distance(c, p, q));
    }
    Ok(one_sided.max(coverage))
}

fn point_segment_distance(c: [f64; 2], p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(c, [p[0] + t * d[0], p[1] + t * d[1]])
}

/// Unwrapped centroid displacement and finite-difference velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidDrift {
    pub times: Vec<f64>,
    /// Displacement from the first sample.
    pub displacement: Vec<[f64; 2]>,
    /// Velocity between consecutive samples (one fewer entry).
    pub velocity: Vec<[f64; 2]>,
}

/// Track the centroid through a time series, unwrapping periodic jumps.
/// Samples without a centroid carry the previous displacement forward.
pub fn centroid_drift(series: &[(f64, InterfaceCurve)]) -> CentroidDrift {
    let mut times = Vec::with_capacity(series.len());
    let mut displacement = Vec::with_capacity(series.len());
    let mut velocity = Vec::new();
    let mut acc = [0.0f64; 2];
    let mut prev: Option<[f64; 2]> = None;
    for (k, (t, curve)) in series.iter().enumerate() {
        if let (Some(p), Some(c)) = (prev, curve.centroid) {
            for axis in 0..2 {
                let l = curve.lengths[axis];
                let d = c[axis] - p[axis];
                acc[axis] += d - l * (d / l + 0.5).floor();
            }
        }
        if curve.centroid.is_some() {
            prev = curve.centroid;
        }
        if k > 0 {
            let dt = t - times[k - 1];
            let last: [f64; 2] = displacement[k - 1];
            velocity.push([(acc[0] - last[0]) / dt, (acc[1] - last[1]) / dt]);
        }
        times.push(*t);
        displacement.push(acc);
    }
    CentroidDrift {
        times,
        displacement,
        velocity,
    }
}
