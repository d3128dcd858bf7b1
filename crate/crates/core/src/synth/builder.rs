//! Welded triangle soup with per-triangle tags, plus patch helpers.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::Result;
use crate::mesh::TriMesh;

/// Positions are welded on a 1 µm lattice.
const WELD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tag {
    pub building: i32,
    pub roof: bool,
    pub balcony: bool,
}

impl Tag {
    pub const GROUND: Tag = Tag {
        building: -1,
        roof: false,
        balcony: false,
    };

    pub fn part(building: i32) -> Tag {
        Tag {
            building,
            roof: false,
            balcony: false,
        }
    }
}

#[derive(Debug, Default)]
pub struct Builder {
    verts: Vec<Point3<f64>>,
    index: HashMap<(i64, i64, i64), u32>,
    tris: Vec<[u32; 3]>,
    tags: Vec<Tag>,
}

fn key(p: &Point3<f64>) -> (i64, i64, i64) {
    (
        (p.x * WELD).round() as i64,
        (p.y * WELD).round() as i64,
        (p.z * WELD).round() as i64,
    )
}

impl Builder {
    pub fn vertex(&mut self, p: Point3<f64>) -> u32 {
        let k = key(&p);
        if let Some(&i) = self.index.get(&k) {
            return i;
        }
        let i = self.verts.len() as u32;
        self.verts.push(Point3::new(k.0 as f64 / WELD, k.1 as f64 / WELD, k.2 as f64 / WELD));
        self.index.insert(k, i);
        i
    }

    /// Triangle wound so its normal has a non-negative dot with `out`.
    pub fn tri(&mut self, a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, out: Vector3<f64>, tag: Tag) {
        let n = (b - a).cross(&(c - a));
        let (ia, ib, ic) = (self.vertex(a), self.vertex(b), self.vertex(c));
        if ia == ib || ib == ic || ia == ic {
            return;
        }
        self.tris.push(if n.dot(&out) >= 0.0 { [ia, ib, ic] } else { [ia, ic, ib] });
        self.tags.push(tag);
    }

    pub fn quad(&mut self, p: [Point3<f64>; 4], out: Vector3<f64>, tag: Tag) {
        self.tri(p[0], p[1], p[2], out, tag);
        self.tri(p[0], p[2], p[3], out, tag);
    }

    /// Strip between two vertical columns with different vertex counts,
    /// each listed bottom to top.
    pub fn zipper(&mut self, left: &[Point3<f64>], right: &[Point3<f64>], out: Vector3<f64>, tag: Tag) {
        let frac = |c: &[Point3<f64>], i: usize| (c[i].z - c[0].z) / (c[c.len() - 1].z - c[0].z);
        let (mut i, mut j) = (0, 0);
        while i + 1 < left.len() || j + 1 < right.len() {
            let step_left = j + 1 >= right.len() || (i + 1 < left.len() && frac(left, i + 1) <= frac(right, j + 1));
            if step_left {
                self.tri(left[i], right[j], left[i + 1], out, tag);
                i += 1;
            } else {
                self.tri(left[i], right[j], right[j + 1], out, tag);
                j += 1;
            }
        }
    }

    /// Height field z(x, y) over the grid `xs` × `ys`, cells filtered by `keep`.
    pub fn height_field(
        &mut self,
        xs: &[f64],
        ys: &[f64],
        z: impl Fn(f64, f64) -> f64,
        keep: impl Fn(f64, f64) -> bool,
        out: Vector3<f64>,
        tag: Tag,
    ) {
        for j in 0..ys.len().saturating_sub(1) {
            for i in 0..xs.len().saturating_sub(1) {
                let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[j], ys[j + 1]);
                if !keep(0.5 * (x0 + x1), 0.5 * (y0 + y1)) {
                    continue;
                }
                let p = |x: f64, y: f64| Point3::new(x, y, z(x, y));
                self.quad([p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)], out, tag);
            }
        }
    }

    /// Vertical band over the polyline `along` (XY points), spanning
    /// bottom(s)..top(s) at each column, split into rows of at most ~1 m.
    pub fn band(
        &mut self,
        along: &[[f64; 2]],
        bottom: impl Fn([f64; 2]) -> f64,
        top: impl Fn([f64; 2]) -> f64,
        out: Vector3<f64>,
        tag: Tag,
    ) {
        let span = along
            .iter()
            .map(|&p| top(p) - bottom(p))
            .fold(0.0f64, f64::max);
        if span <= 0.0 {
            return;
        }
        let rows = span.ceil().max(1.0) as usize;
        let at = |p: [f64; 2], r: usize| {
            let (b, t) = (bottom(p), top(p));
            Point3::new(p[0], p[1], b + (t - b) * r as f64 / rows as f64)
        };
        for w in along.windows(2) {
            for r in 0..rows {
                let q = [at(w[0], r), at(w[1], r), at(w[1], r + 1), at(w[0], r + 1)];
                self.quad(q, out, tag);
            }
        }
    }

    pub fn finish(self) -> Result<(TriMesh, Vec<Tag>)> {
        let n = self.tris.len();
        let mesh = TriMesh::with_source_faces(self.verts, self.tris, (0..n as u32).collect())?;
        let tags = (0..mesh.num_triangles())
            .map(|t| self.tags[mesh.source_face(t) as usize])
            .collect();
        Ok((mesh, tags))
    }
}

/// Coordinates from `a` to `b` inclusive, steps of at most `step`, always
/// hitting every integer in between.
pub fn ticks(a: f64, b: f64, step: f64) -> Vec<f64> {
    let mut v = vec![a];
    let mut x = a.floor() + 1.0;
    while x < b - 1e-9 {
        if x > a + 1e-9 {
            v.push(x);
        }
        x += 1.0;
    }
    v.push(b);
    // Subdivide anything longer than `step`.
    let mut out = vec![v[0]];
    for w in v.windows(2) {
        let k = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
        for i in 1..=k {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / k as f64);
        }
    }
    out
}

/// Like `ticks` but guaranteed to contain every value in `extra`.
pub fn ticks_with(a: f64, b: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let mut v = ticks(a, b, step);
    for &e in extra {
        if e > a && e < b {
            v.push(e);
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_hit_integers() {
        assert_eq!(ticks(-0.5, 2.0, 1.0), vec![-0.5, 0.0, 1.0, 2.0]);
        assert_eq!(ticks(0.0, 1.0, 0.5), vec![0.0, 0.5, 1.0]);
        assert_eq!(ticks_with(0.0, 2.0, 1.0, &[1.5]), vec![0.0, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn welding_shares_vertices() {
        let mut b = Builder::default();
        let up = Vector3::z();
        b.height_field(&[0.0, 1.0, 2.0], &[0.0, 1.0], |_, _| 0.0, |_, _| true, up, Tag::GROUND);
        let (m, tags) = b.finish().unwrap();
        assert_eq!(m.num_vertices(), 6);
        assert_eq!(m.num_triangles(), 4);
        assert_eq!(tags.len(), 4);
        assert!((0..4).all(|t| m.normal(t).z > 0.99));
    }
}
