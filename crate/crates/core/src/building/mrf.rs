//! Binary MRF over candidate triangles, solved exactly by min cut.

use super::maxflow::Graph;
use super::profile::{point_in_polygon, point_segment_distance, RoofProfile};
use crate::mesh::TriMesh;

/// Terminal weight that locks seed labels.
pub const SEED_LOCK: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seed {
    Free,
    Foreground,
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfProblem {
    pub seeds: Vec<Seed>,
    /// (cost of label 0, cost of label 1) for free nodes; ignored for seeds.
    pub unary: Vec<(f64, f64)>,
    /// (i, j, weight), paid when labels differ.
    pub edges: Vec<(u32, u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfSolution {
    pub labels: Vec<u8>,
    /// Min-cut value plus the constant offset.
    pub energy: f64,
}

impl MrfProblem {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Effective (ψ0, ψ1) including the seed lock.
    pub fn costs(&self, i: usize) -> (f64, f64) {
        match self.seeds[i] {
            Seed::Free => self.unary[i],
            Seed::Foreground => (SEED_LOCK, 0.0),
            Seed::Background => (0.0, SEED_LOCK),
        }
    }

    pub fn energy(&self, labels: &[u8]) -> f64 {
        let mut e = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let (c0, c1) = self.costs(i);
            e += if l == 1 { c1 } else { c0 };
        }
        for &(i, j, w) in &self.edges {
            if labels[i as usize] != labels[j as usize] {
                e += w;
            }
        }
        e
    }

    pub fn solve(&self) -> MrfSolution {
        let n = self.len();
        let mut g = Graph::new(n);
        // Source side is label 1: a node on the sink side cuts its source
        // arc and pays ψ0.
        for i in 0..n {
            let (c0, c1) = self.costs(i);
            g.add_terminal(i, c0, c1);
        }
        for &(i, j, w) in &self.edges {
            g.add_edge(i as usize, j as usize, w, w);
        }
        let energy = g.maxflow();
        let labels = (0..n).map(|i| u8::from(g.is_source_side(i))).collect();
        MrfSolution { labels, energy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataOptions {
    pub use_distance: bool,
    pub use_orientation: bool,
    /// Constant 1/1 penalties for both labels.
    pub uniform: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            use_distance: true,
            use_orientation: true,
            uniform: false,
        }
    }
}

/// Signed normalized distance d and orientation term θ of triangle `t`.
pub fn data_term(mesh: &TriMesh, t: usize, profile: &RoofProfile, max_dist: f64) -> (f64, f64) {
    let c = mesh.centroid(t);
    let p = [c.x, c.y];
    let poly = &profile.polygon;
    let n = poly.len();
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..n {
        let d = point_segment_distance(p, poly[i], poly[(i + 1) % n]);
        if d < best.0 {
            best = (d, i);
        }
    }
    let mut d = if max_dist > 0.0 { (best.0 / max_dist).clamp(0.0, 1.0) } else { 0.0 };
    if point_in_polygon(p, poly) {
        d = -d;
    }
    let nrm = mesh.normal(t);
    let nxy = nrm.x.hypot(nrm.y);
    let theta = if nxy < 1e-6 {
        1.0
    } else {
        let (a, b) = (poly[best.1], poly[(best.1 + 1) % n]);
        let (sx, sy) = (b[0] - a[0], b[1] - a[1]);
        let sl = sx.hypot(sy);
        if sl > 0.0 {
            ((nrm.x * sx + nrm.y * sy) / (nxy * sl)).abs().min(1.0)
        } else {
            1.0
        }
    };
    (d, theta)
}

/// (ψ0, ψ1) from d and θ.
pub fn data_costs(d: f64, theta: f64, opts: DataOptions) -> (f64, f64) {
    if opts.uniform {
        return (1.0, 1.0);
    }
    let d = if opts.use_distance { d } else { 0.0 };
    let theta = if opts.use_orientation { theta } else { 0.0 };
    (1.0, (1.0 + d) + theta * (1.0 + d))
}

/// |n_i · n_j| between adjacent triangles.
pub fn smoothness(mesh: &TriMesh, i: usize, j: usize) -> f64 {
    mesh.normal(i).dot(&mesh.normal(j)).abs().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_cost_examples() {
        let o = DataOptions::default();
        assert_eq!(data_costs(0.0, 0.0, o), (1.0, 1.0));
        let (c0, c1) = data_costs(-0.1, 0.0, o);
        assert!(c1 < c0 && (c1 - 0.9).abs() < 1e-15);
        assert_eq!(data_costs(0.5, 1.0, o), (1.0, 3.0));
    }

    #[test]
    fn seeds_only() {
        let p = MrfProblem {
            seeds: vec![Seed::Foreground, Seed::Background],
            unary: vec![(0.0, 0.0); 2],
            edges: vec![(0, 1, 1.0)],
        };
        let s = p.solve();
        assert_eq!(s.labels, vec![1, 0]);
        assert_eq!(s.energy, 1.0);
        assert_eq!(p.energy(&s.labels), 1.0);
    }

    #[test]
    fn smoothness_pulls_free_node() {
        // Free node mildly prefers background but is tied strongly to a
        // foreground seed.
        let p = MrfProblem {
            seeds: vec![Seed::Foreground, Seed::Free, Seed::Background],
            unary: vec![(0.0, 0.0), (1.0, 1.2), (0.0, 0.0)],
            edges: vec![(0, 1, 1.0), (1, 2, 0.1)],
        };
        let s = p.solve();
        assert_eq!(s.labels, vec![1, 1, 0]);
        assert!((s.energy - 1.3).abs() < 1e-12);
    }
}
