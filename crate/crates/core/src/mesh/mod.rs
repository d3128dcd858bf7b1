//! Indexed triangle mesh with cached per-triangle geometry and edge adjacency.
//!
//! Coordinates are meters with Z up. Every "horizontal" quantity downstream
//! refers to the XY plane.

mod obj;
mod ply;

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

pub use ply::{read_ply, write_ply, PlyData};

/// Triangles with area below this (m²) are dropped at construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// An undirected mesh edge and the triangles incident to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub v: [u32; 2],
    pub tris: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    areas: Vec<f64>,
    normals: Vec<Vector3<f64>>,
    centroids: Vec<Point3<f64>>,
    edges: Vec<Edge>,
    tri_edges: Vec<[u32; 3]>,
    adjacency: Vec<Vec<u32>>,
    /// Index of the input face each kept triangle came from.
    source_face: Vec<u32>,
    dropped: usize,
}

impl TriMesh {
    /// Build a mesh, dropping degenerate triangles.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let faces: Vec<u32> = (0..triangles.len() as u32).collect();
        Self::with_source_faces(vertices, triangles, faces)
    }

    pub(crate) fn with_source_faces(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        source: Vec<u32>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut kept = Vec::with_capacity(triangles.len());
        let mut kept_src = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for (i, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v as usize >= nv) {
                return Err(Error::Mesh(format!(
                    "triangle {i} references vertex {bad} but the mesh has {nv} vertices"
                )));
            }
            let [a, b, c] = tri.map(|v| vertices[v as usize]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            let area = 0.5 * norm;
            if !(area >= DEGENERATE_AREA) {
                dropped += 1;
                continue;
            }
            kept.push(*tri);
            kept_src.push(source[i]);
            areas.push(area);
            normals.push(cross / norm);
            centroids.push(Point3::from((a.coords + b.coords + c.coords) / 3.0));
        }

        let (edges, tri_edges) = build_edges(&kept);
        let mut adjacency = vec![Vec::new(); kept.len()];
        for edge in &edges {
            for &t in &edge.tris {
                for &u in &edge.tris {
                    if u != t {
                        adjacency[t as usize].push(u);
                    }
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }

        Ok(Self {
            vertices,
            triangles: kept,
            areas,
            normals,
            centroids,
            edges,
            tri_edges,
            adjacency,
            source_face: kept_src,
            dropped,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Unit normal following counter-clockwise winding.
    pub fn normal(&self, t: usize) -> Vector3<f64> {
        self.normals[t]
    }

    pub fn centroid(&self, t: usize) -> Point3<f64> {
        self.centroids[t]
    }

    pub fn centroids(&self) -> &[Point3<f64>] {
        &self.centroids
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge indices of the three sides (v0v1, v1v2, v2v0) of triangle `t`.
    pub fn triangle_edges(&self, t: usize) -> [u32; 3] {
        self.tri_edges[t]
    }

    /// Triangles sharing at least one edge with `t`, ascending.
    pub fn neighbors(&self, t: usize) -> &[u32] {
        &self.adjacency[t]
    }

    pub fn source_face(&self, t: usize) -> u32 {
        self.source_face[t]
    }

    /// Number of degenerate input triangles dropped at construction.
    pub fn dropped_degenerate(&self) -> usize {
        self.dropped
    }

    /// Total area of the given triangles, summed in ascending index order.
    pub fn set_area(&self, tris: &[u32]) -> Result<f64> {
        let mut sorted = tris.to_vec();
        sorted.sort_unstable();
        let mut sum = CompensatedSum::new();
        for &t in &sorted {
            let a = self
                .areas
                .get(t as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("triangle index {t} out of range")))?;
            sum.add(*a);
        }
        Ok(sum.value())
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().copied().collect::<CompensatedSum>().value()
    }
}

fn build_edges(tris: &[[u32; 3]]) -> (Vec<Edge>, Vec<[u32; 3]>) {
    let mut half: Vec<(u32, u32, u32, u8)> = Vec::with_capacity(tris.len() * 3);
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            half.push((lo, hi, t as u32, k as u8));
        }
    }
    half.sort_unstable();
    let mut edges: Vec<Edge> = Vec::new();
    let mut tri_edges = vec![[0u32; 3]; tris.len()];
    for (lo, hi, t, k) in half {
        let new_edge = match edges.last() {
            Some(e) => e.v != [lo, hi],
            None => true,
        };
        if new_edge {
            edges.push(Edge {
                v: [lo, hi],
                tris: Vec::with_capacity(2),
            });
        }
        let idx = edges.len() - 1;
        let e = &mut edges[idx];
        if e.tris.last() != Some(&t) {
            e.tris.push(t);
        }
        tri_edges[t as usize][k as usize] = idx as u32;
    }
    (edges, tri_edges)
}

/// A sorted set of triangle indices with its cached surface area.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleSet {
    tris: Vec<u32>,
    area: f64,
}

impl TriangleSet {
    pub fn new(mesh: &TriMesh, mut tris: Vec<u32>) -> Result<Self> {
        tris.sort_unstable();
        tris.dedup();
        if let Some(&bad) = tris.iter().find(|&&t| t as usize >= mesh.num_triangles()) {
            return Err(Error::InvalidArgument(format!(
                "triangle index {bad} out of range ({} triangles)",
                mesh.num_triangles()
            )));
        }
        Ok(Self::from_sorted(mesh, tris))
    }

    /// `tris` must be strictly ascending and in range.
    pub(crate) fn from_sorted(mesh: &TriMesh, tris: Vec<u32>) -> Self {
        debug_assert!(tris.windows(2).all(|w| w[0] < w[1]));
        let area = tris
            .iter()
            .map(|&t| mesh.area(t as usize))
            .collect::<CompensatedSum>()
            .value();
        Self { tris, area }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[u32] {
        &self.tris
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, t: u32) -> bool {
        self.tris.binary_search(&t).is_ok()
    }

    pub fn union(&self, other: &TriangleSet, mesh: &TriMesh) -> TriangleSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.tris.len() || j < other.tris.len() {
            let take = match (self.tris.get(i), other.tris.get(j)) {
                (Some(&a), Some(&b)) if a == b => {
                    i += 1;
                    j += 1;
                    a
                }
                (Some(&a), Some(&b)) if a < b => {
                    i += 1;
                    a
                }
                (Some(_), Some(&b)) => {
                    j += 1;
                    b
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            out.push(take);
        }
        TriangleSet::from_sorted(mesh, out)
    }

    pub fn intersection(&self, other: &TriangleSet, mesh: &TriMesh) -> TriangleSet {
        let out: Vec<u32> = self
            .tris
            .iter()
            .copied()
            .filter(|t| other.contains(*t))
            .collect();
        TriangleSet::from_sorted(mesh, out)
    }
}

/// Partition `subset` into edge-connected components, largest area first.
pub fn connected_components(mesh: &TriMesh, subset: &TriangleSet) -> Vec<TriangleSet> {
    const UNSEEN: u32 = u32::MAX;
    const OUTSIDE: u32 = u32::MAX - 1;
    let mut comp_of = vec![OUTSIDE; mesh.num_triangles()];
    for &t in subset.indices() {
        comp_of[t as usize] = UNSEEN;
    }
    let mut comps: Vec<Vec<u32>> = Vec::new();
    let mut queue = VecDeque::new();
    for &seed in subset.indices() {
        if comp_of[seed as usize] != UNSEEN {
            continue;
        }
        let id = comps.len() as u32;
        comp_of[seed as usize] = id;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(t) = queue.pop_front() {
            members.push(t);
            for &n in mesh.neighbors(t as usize) {
                if comp_of[n as usize] == UNSEEN {
                    comp_of[n as usize] = id;
                    queue.push_back(n);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    let mut sets: Vec<TriangleSet> = comps
        .into_iter()
        .map(|m| TriangleSet::from_sorted(mesh, m))
        .collect();
    sets.sort_by(|a, b| {
        b.area()
            .total_cmp(&a.area())
            .then_with(|| a.indices()[0].cmp(&b.indices()[0]))
    });
    sets
}

/// Outcome of reading a mesh file.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriMesh,
    /// Per-face integer properties found in the file, indexed by input face.
    pub face_labels: std::collections::BTreeMap<String, Vec<i64>>,
}

impl LoadedMesh {
    /// A per-face integer property remapped onto the kept triangles.
    pub fn triangle_labels(&self, name: &str) -> Option<Vec<i64>> {
        let labels = self.face_labels.get(name)?;
        Some(
            (0..self.mesh.num_triangles())
                .map(|t| labels[self.mesh.source_face(t) as usize])
                .collect(),
        )
    }
}

/// Load a PLY (ASCII or binary) or OBJ triangle mesh.
///
/// Quads are split fan-wise; larger polygons are rejected.
pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (vertices, faces, face_props) = match ext.as_deref() {
        Some("ply") => {
            let data = read_ply(path)?;
            (data.vertices, data.faces, data.face_props)
        }
        Some("obj") => {
            let (v, f) = obj::read_obj(path)?;
            (v, f, Default::default())
        }
        _ => {
            return Err(Error::parse(
                path,
                "unsupported mesh format (expected .ply or .obj)",
            ))
        }
    };
    let mut tris = Vec::with_capacity(faces.len());
    let mut src = Vec::with_capacity(faces.len());
    for (i, face) in faces.iter().enumerate() {
        match face.len() {
            3 => {
                tris.push([face[0], face[1], face[2]]);
                src.push(i as u32);
            }
            4 => {
                tris.push([face[0], face[1], face[2]]);
                tris.push([face[0], face[2], face[3]]);
                src.push(i as u32);
                src.push(i as u32);
            }
            n => {
                return Err(Error::parse(
                    path,
                    format!("face {i} has {n} vertices; only triangles and quads are accepted"),
                ))
            }
        }
    }
    let mesh = TriMesh::with_source_faces(vertices, tris, src)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if mesh.num_triangles() == 0 {
        return Err(Error::parse(path, "mesh has no non-degenerate triangles"));
    }
    if mesh.dropped_degenerate() > 0 {
        log::info!(
            "{}: dropped {} degenerate triangles",
            path.display(),
            mesh.dropped_degenerate()
        );
    }
    Ok(LoadedMesh { mesh, face_labels: face_props })
}

/// Write `mesh` as binary little-endian PLY, optionally with a per-face
/// `building_id` property (-1 for background).
pub fn save_mesh(path: &Path, mesh: &TriMesh, building_ids: Option<&[i32]>) -> Result<()> {
    if let Some(ids) = building_ids {
        if ids.len() != mesh.num_triangles() {
            return Err(Error::Dimension(format!(
                "{} building ids for {} triangles",
                ids.len(),
                mesh.num_triangles()
            )));
        }
    }
    write_ply(path, mesh.vertices(), mesh.triangles(), building_ids)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit_cube() -> TriMesh {
        let v: Vec<Point3<f64>> = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [
            [0, 2, 3, 1], // z=0
            [4, 5, 7, 6], // z=1
            [0, 1, 5, 4], // y=0
            [2, 6, 7, 3], // y=1
            [0, 4, 6, 2], // x=0
            [1, 3, 7, 5], // x=1
        ];
        let mut t = Vec::new();
        for q in quads {
            t.push([q[0], q[1], q[2]]);
            t.push([q[0], q[2], q[3]]);
        }
        TriMesh::new(v, t).unwrap()
    }

    #[test]
    fn right_triangle_area_and_normal() {
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(m.area(0), 0.5);
        assert_eq!(m.normal(0), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn shared_edge_adjacency() {
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        assert_eq!(m.neighbors(0), &[1]);
        assert_eq!(m.neighbors(1), &[0]);
        assert_eq!(m.edges().len(), 5);
    }

    #[test]
    fn cube_area_and_components() {
        let m = unit_cube();
        assert_eq!(m.num_triangles(), 12);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
        for n in m.normals.iter() {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
        let all = TriangleSet::new(&m, (0..12).collect()).unwrap();
        let comps = connected_components(&m, &all);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), 12);
    }

    #[test]
    fn degenerate_triangles_dropped_and_counted() {
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(m.num_triangles(), 1);
        assert_eq!(m.dropped_degenerate(), 1);
        assert_eq!(m.source_face(0), 1);
    }

    #[test]
    fn invalid_vertex_index_rejected() {
        let err = TriMesh::new(vec![Point3::origin()], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::Mesh(_)));
    }

    #[test]
    fn set_area_examples() {
        let m = unit_cube();
        assert_eq!(m.set_area(&[]).unwrap(), 0.0);
        assert_eq!(m.set_area(&[3]).unwrap(), 0.5);
        assert!((m.set_area(&[0, 1, 2]).unwrap() - 1.5).abs() < 1e-15);
        assert!(m.set_area(&[12]).is_err());
        assert!(TriangleSet::new(&m, vec![0, 99]).is_err());
        let s1 = TriangleSet::new(&m, vec![0, 1, 2]).unwrap();
        let s2 = TriangleSet::new(&m, vec![3, 4, 5, 6, 7]).unwrap();
        assert!((s1.union(&s2, &m).area() - 4.0).abs() < 1e-15);
        assert!(s1.intersection(&s2, &m).is_empty());
    }

    #[test]
    fn disjoint_patches_are_two_components() {
        let m = unit_cube();
        // Bottom face and top face.
        let s = TriangleSet::new(&m, vec![0, 1, 2, 3]).unwrap();
        let comps = connected_components(&m, &s);
        assert_eq!(comps.len(), 2);
        let single = TriangleSet::new(&m, vec![5]).unwrap();
        assert_eq!(connected_components(&m, &single)[0].indices(), &[5]);
        assert!(connected_components(&m, &TriangleSet::empty()).is_empty());
    }
}
