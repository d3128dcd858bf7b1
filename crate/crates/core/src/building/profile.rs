//! Roof profile polygon: outer boundary loop of the roof, simplified by
//! dropping nearly collinear points.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::mesh::{connected_components, TriMesh, TriangleSet};

pub const DEFAULT_PROFILE_TOL: f64 = 0.2;

pub type P2 = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct RoofProfile {
    /// Counter-clockwise XY polygon.
    pub polygon: Vec<P2>,
    /// True when the boundary loop failed and the convex hull was used.
    pub hull_fallback: bool,
}

pub fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

pub fn point_segment_distance(p: P2, a: P2, b: P2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Even-odd rule.
pub fn point_in_polygon(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: P2, b: P2, c: P2, d: P2) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: P2, q: P2, r: P2, o: f64| {
        o == 0.0 && r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// No two non-adjacent edges touch and no vertex repeats.
pub fn is_simple(poly: &[P2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if poly[i] == poly[j] {
                return false;
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Closed loops of boundary vertex ids, following triangle winding.
fn boundary_loops(mesh: &TriMesh, comp: &TriangleSet) -> Vec<Vec<u32>> {
    let mut count: HashMap<u32, u32> = HashMap::new();
    for &t in comp.indices() {
        for e in mesh.triangle_edges(t as usize) {
            *count.entry(e).or_default() += 1;
        }
    }
    let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut total = 0;
    for &t in comp.indices() {
        let tri = mesh.triangles()[t as usize];
        let edges = mesh.triangle_edges(t as usize);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = [a.min(b), a.max(b)];
            let e = edges
                .iter()
                .copied()
                .find(|&e| mesh.edges()[e as usize].v == key)
                .expect("triangle edge");
            if count[&e] == 1 {
                out.entry(a).or_default().push(b);
                total += 1;
            }
        }
    }
    for v in out.values_mut() {
        v.sort_unstable();
    }
    let mut loops = Vec::new();
    let mut used = 0;
    while used < total {
        let Some((&start, _)) = out.iter().find(|(_, v)| !v.is_empty()) else {
            break;
        };
        let mut cycle = vec![start];
        let mut cur = start;
        let closed = loop {
            let Some(next) = out.get_mut(&cur).and_then(|v| (!v.is_empty()).then(|| v.remove(0))) else {
                break false;
            };
            used += 1;
            if next == start {
                break true;
            }
            cycle.push(next);
            cur = next;
        };
        if closed && cycle.len() >= 3 {
            loops.push(cycle);
        }
    }
    loops
}

/// Repeatedly drop the vertex closest to the segment joining its neighbours
/// while that distance is below `tol`.
pub fn simplify(mut poly: Vec<P2>, tol: f64) -> Vec<P2> {
    while poly.len() > 3 {
        let n = poly.len();
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..n {
            let d = point_segment_distance(poly[i], poly[(i + n - 1) % n], poly[(i + 1) % n]);
            if d < best.0 {
                best = (d, i);
            }
        }
        if best.0 >= tol {
            break;
        }
        poly.remove(best.1);
    }
    poly
}

pub fn roof_profile(roof: &TriangleSet, mesh: &TriMesh, tol: f64) -> Result<RoofProfile> {
    if roof.is_empty() {
        return Err(Error::Geometry("empty roof".into()));
    }
    let comps = connected_components(mesh, roof);
    let comp = &comps[0];
    let xy = |v: u32| {
        let p = mesh.vertices()[v as usize];
        [p.x, p.y]
    };
    let best = boundary_loops(mesh, comp)
        .into_iter()
        .map(|l| l.into_iter().map(xy).collect::<Vec<P2>>())
        .map(|p| (signed_area(&p).abs(), p))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((area, mut poly)) = best {
        if area > 0.0 {
            if signed_area(&poly) < 0.0 {
                poly.reverse();
            }
            let poly = simplify(poly, tol);
            if is_simple(&poly) && signed_area(&poly) > 0.0 {
                return Ok(RoofProfile {
                    polygon: poly,
                    hull_fallback: false,
                });
            }
        }
    }
    let pts: Vec<P2> = comp
        .indices()
        .iter()
        .flat_map(|&t| mesh.triangles()[t as usize])
        .map(xy)
        .collect();
    let hull = convex_hull(&pts);
    if hull.len() < 3 || signed_area(&hull) <= 0.0 {
        return Err(Error::Geometry("roof profile and convex hull are degenerate".into()));
    }
    log::warn!("roof boundary is not a simple loop; using convex hull");
    Ok(RoofProfile {
        polygon: hull,
        hull_fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn flat(cells: &[(i32, i32)], n: usize) -> (TriMesh, TriangleSet) {
        // Unit cells on an integer grid, each split into two triangles; each
        // cell edge is subdivided `n` times along x.
        let mut v: Vec<Point3<f64>> = Vec::new();
        let mut idx: HashMap<(i64, i64), u32> = HashMap::new();
        let mut id = |x: f64, y: f64, v: &mut Vec<Point3<f64>>| {
            let k = ((x * 1000.0).round() as i64, (y * 1000.0).round() as i64);
            *idx.entry(k).or_insert_with(|| {
                v.push(Point3::new(x, y, 3.0));
                (v.len() - 1) as u32
            })
        };
        let mut t = Vec::new();
        for &(cx, cy) in cells {
            for s in 0..n {
                let x0 = cx as f64 + s as f64 / n as f64;
                let x1 = cx as f64 + (s + 1) as f64 / n as f64;
                let (y0, y1) = (cy as f64, cy as f64 + 1.0);
                let a = id(x0, y0, &mut v);
                let b = id(x1, y0, &mut v);
                let c = id(x1, y1, &mut v);
                let d = id(x0, y1, &mut v);
                t.push([a, b, c]);
                t.push([a, c, d]);
            }
        }
        let mesh = TriMesh::new(v, t).unwrap();
        let all = TriangleSet::new(&mesh, (0..mesh.num_triangles() as u32).collect()).unwrap();
        (mesh, all)
    }

    #[test]
    fn square_roof() {
        let (mesh, roof) = flat(&[(0, 0)], 1);
        let p = roof_profile(&roof, &mesh, DEFAULT_PROFILE_TOL).unwrap();
        assert_eq!(p.polygon.len(), 4);
        assert!(!p.hull_fallback);
        assert!((signed_area(&p.polygon) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midpoints_merged() {
        let (mesh, roof) = flat(&[(0, 0)], 2);
        let p = roof_profile(&roof, &mesh, DEFAULT_PROFILE_TOL).unwrap();
        assert_eq!(p.polygon.len(), 4);
    }

    #[test]
    fn l_shape_has_six_corners() {
        let (mesh, roof) = flat(&[(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)], 1);
        let p = roof_profile(&roof, &mesh, DEFAULT_PROFILE_TOL).unwrap();
        assert_eq!(p.polygon.len(), 6);
        assert!((signed_area(&p.polygon) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hull_and_polygon_helpers() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [0.5, 0.2], [1.0, 1.0], [0.0, 1.0], [0.5, 0.0]]);
        assert_eq!(h.len(), 4);
        assert!(signed_area(&h) > 0.0);
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
        assert!(is_simple(&sq));
        assert!(!is_simple(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]));
        assert_eq!(point_segment_distance([0.5, 1.0], [0.0, 0.0], [1.0, 0.0]), 1.0);
    }
}
