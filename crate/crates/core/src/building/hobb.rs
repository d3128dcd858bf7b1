//! Horizontal oriented bounding box of a roof from PCA on vertex XY.

use std::collections::BTreeSet;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, TriangleSet};

const CONTAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hobb {
    pub center: Vector2<f64>,
    /// Principal axis first; the second is the first rotated +90°.
    pub axes: [Vector2<f64>; 2],
    pub half: [f64; 2],
    pub z_min: f64,
    pub z_max: f64,
}

impl Hobb {
    pub fn expanded(&self, offset: f64) -> Hobb {
        Hobb {
            half: [self.half[0] + offset, self.half[1] + offset],
            ..*self
        }
    }

    /// Coordinates of an XY point in the box frame.
    pub fn local(&self, x: f64, y: f64) -> [f64; 2] {
        let d = Vector2::new(x, y) - self.center;
        [d.dot(&self.axes[0]), d.dot(&self.axes[1])]
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let l = self.local(x, y);
        l[0].abs() <= self.half[0] + CONTAIN_EPS && l[1].abs() <= self.half[1] + CONTAIN_EPS
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half[0].hypot(self.half[1])
    }
}

/// PCA box over the deduplicated vertices of `roof`.
pub fn compute_hobb(roof: &TriangleSet, mesh: &TriMesh) -> Result<Hobb> {
    let ids: BTreeSet<u32> = roof
        .indices()
        .iter()
        .flat_map(|&t| mesh.triangles()[t as usize])
        .collect();
    if ids.len() < 3 {
        return Err(Error::Geometry(format!("roof has {} distinct vertices", ids.len())));
    }
    let pts: Vec<Vector2<f64>> = ids
        .iter()
        .map(|&v| {
            let p = mesh.vertices()[v as usize];
            Vector2::new(p.x, p.y)
        })
        .collect();
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix2::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (lmax, lmin) = (eig.eigenvalues[major], eig.eigenvalues[minor]);
    if lmax <= 0.0 || lmin <= 1e-12 * lmax {
        return Err(Error::Geometry("roof vertices are collinear in XY".into()));
    }
    let mut a0: Vector2<f64> = eig.eigenvectors.column(major).into();
    a0.normalize_mut();
    if a0.x < 0.0 || (a0.x == 0.0 && a0.y < 0.0) {
        a0 = -a0;
    }
    let a1 = Vector2::new(-a0.y, a0.x);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pts {
        for (k, a) in [a0, a1].iter().enumerate() {
            let s = p.dot(a);
            lo[k] = lo[k].min(s);
            hi[k] = hi[k].max(s);
        }
    }
    let center = a0 * (0.5 * (lo[0] + hi[0])) + a1 * (0.5 * (lo[1] + hi[1]));
    let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &ids {
        let z = mesh.vertices()[v as usize].z;
        z_min = z_min.min(z);
        z_max = z_max.max(z);
    }
    Ok(Hobb {
        center,
        axes: [a0, a1],
        half: [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])],
        z_min,
        z_max,
    })
}

/// Triangles with centroid inside the box expanded by `offset`, between the
/// lowest vertex in the expanded footprint and the roof top. `excluded`
/// triangles are skipped.
pub fn candidate_set(hobb: &Hobb, offset: f64, mesh: &TriMesh, excluded: impl Fn(usize) -> bool) -> Vec<u32> {
    let ex = hobb.expanded(offset);
    let z_low = mesh
        .vertices()
        .iter()
        .filter(|p| ex.contains_xy(p.x, p.y))
        .map(|p| p.z)
        .fold(hobb.z_min, f64::min);
    mesh.centroids()
        .iter()
        .enumerate()
        .filter(|(t, c)| {
            ex.contains_xy(c.x, c.y) && c.z >= z_low - CONTAIN_EPS && c.z <= hobb.z_max + CONTAIN_EPS && !excluded(*t)
        })
        .map(|(t, _)| t as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    pub(crate) fn grid_roof(w: f64, h: f64, angle: f64, z: f64) -> (TriMesh, TriangleSet) {
        let (s, c) = angle.sin_cos();
        let mut v = Vec::new();
        let (nx, ny) = (4, 3);
        for j in 0..=ny {
            for i in 0..=nx {
                let x = w * (i as f64 / nx as f64 - 0.5);
                let y = h * (j as f64 / ny as f64 - 0.5);
                v.push(Point3::new(c * x - s * y + 7.0, s * x + c * y - 3.0, z));
            }
        }
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let a = (j * (nx + 1) + i) as u32;
                let b = a + 1;
                let d = a + nx as u32 + 1;
                t.push([a, b, d + 1]);
                t.push([a, d + 1, d]);
            }
        }
        let mesh = TriMesh::new(v, t).unwrap();
        let all = TriangleSet::new(&mesh, (0..mesh.num_triangles() as u32).collect()).unwrap();
        (mesh, all)
    }

    #[test]
    fn rectangle_axes_and_extents() {
        let (mesh, roof) = grid_roof(8.0, 4.0, 0.0, 5.0);
        let h = compute_hobb(&roof, &mesh).unwrap();
        assert!((h.axes[0].x.abs() - 1.0).abs() < 1e-9);
        assert!((h.half[0] - 4.0).abs() < 1e-9 && (h.half[1] - 2.0).abs() < 1e-9);
        assert!((h.center - Vector2::new(7.0, -3.0)).norm() < 1e-9);
        for p in mesh.vertices() {
            assert!(h.contains_xy(p.x, p.y));
        }
    }

    #[test]
    fn rotated_rectangle() {
        let a = std::f64::consts::FRAC_PI_4;
        let (mesh, roof) = grid_roof(8.0, 4.0, a, 5.0);
        let h = compute_hobb(&roof, &mesh).unwrap();
        assert!((h.axes[0].x - a.cos()).abs() < 1e-6 && (h.axes[0].y - a.sin()).abs() < 1e-6);
        assert!((h.half[0] - 4.0).abs() < 1e-6 && (h.half[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn collinear_rejected() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(2.0, 0.0, 1.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let roof = TriangleSet::new(&mesh, vec![0, 1]).unwrap();
        assert!(compute_hobb(&roof, &mesh).is_err());
    }
}
