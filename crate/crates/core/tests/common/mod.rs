//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use mvsseg::mesh::{TriMesh, TriangleSet};
use nalgebra::Point3;

/// `nx`×`ny` unit squares on z = 0, two triangles of area 0.5 each.
/// Cell (i, j) owns triangles 2(j·nx + i) and 2(j·nx + i) + 1.
pub fn grid_mesh(nx: usize, ny: usize) -> TriMesh {
    let mut v = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point3::new(i as f64, j as f64, 0.0));
        }
    }
    let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut t = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(v, t).unwrap()
}

/// Triangles of the cells in [x0, x1) × [y0, y1).
pub fn cell_rect(nx: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<u32> {
    let mut out = Vec::new();
    for j in y0..y1 {
        for i in x0..x1 {
            let c = (j * nx + i) as u32;
            out.push(2 * c);
            out.push(2 * c + 1);
        }
    }
    out.sort_unstable();
    out
}

pub fn set_area(tris: &HashSet<u32>, areas: &[f64]) -> f64 {
    let mut v: Vec<u32> = tris.iter().copied().collect();
    v.sort_unstable();
    v.iter().map(|&t| areas[t as usize]).sum()
}

pub fn iou(a: &[u32], b: &[u32], areas: &[f64]) -> f64 {
    let a: HashSet<u32> = a.iter().copied().collect();
    let b: HashSet<u32> = b.iter().copied().collect();
    let inter: HashSet<u32> = a.intersection(&b).copied().collect();
    let union: HashSet<u32> = a.union(&b).copied().collect();
    let u = set_area(&union, areas);
    if u == 0.0 {
        0.0
    } else {
        set_area(&inter, areas) / u
    }
}

/// Clustering as written in prose: similarity stored at 32 bits, C* over
/// entries strictly above β, sort by C* descending, walk, mark.
/// Returns (assignment, representatives in selection order).
pub fn cluster_oracle(sets: &[Vec<u32>], areas: &[f64], probs: &[f64], beta: f64) -> (Vec<u32>, Vec<usize>) {
    let n = sets.len();
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| iou(&sets[i], &sets[j], areas) as f32 as f64).collect())
        .collect();
    let c_star: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if m[i][j] > beta {
                    s += probs[j] * m[i][j];
                }
            }
            probs[i] * s
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower index first on equal confidence.
    order.sort_by(|&a, &b| c_star[b].partial_cmp(&c_star[a]).unwrap());
    let mut assignment: Vec<Option<u32>> = vec![None; n];
    let mut reps = Vec::new();
    for &i in &order {
        if assignment[i].is_some() {
            continue;
        }
        let g = reps.len() as u32;
        reps.push(i);
        assignment[i] = Some(g);
        for l in 0..n {
            if assignment[l].is_none() && m[i][l] > beta {
                assignment[l] = Some(g);
            }
        }
    }
    (assignment.into_iter().map(Option::unwrap).collect(), reps)
}

/// Binary MRF written out directly: `seeds[i]` is Some(label) for a fixed
/// node, `unary[i]` is (cost of 0, cost of 1).
pub struct Mrf {
    pub seeds: Vec<Option<u8>>,
    pub unary: Vec<(f64, f64)>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Mrf {
    /// Energy over free nodes plus every cut edge.
    pub fn energy(&self, labels: &[u8]) -> f64 {
        let mut e = 0.0;
        for i in 0..labels.len() {
            if self.seeds[i].is_none() {
                e += if labels[i] == 1 { self.unary[i].1 } else { self.unary[i].0 };
            }
        }
        for &(i, j, w) in &self.edges {
            if labels[i] != labels[j] {
                e += w;
            }
        }
        e
    }

    pub fn brute_force(&self) -> f64 {
        let free: Vec<usize> = (0..self.seeds.len()).filter(|&i| self.seeds[i].is_none()).collect();
        let mut labels: Vec<u8> = self.seeds.iter().map(|s| s.unwrap_or(0)).collect();
        let mut best = f64::INFINITY;
        for bits in 0u32..(1 << free.len()) {
            for (k, &i) in free.iter().enumerate() {
                labels[i] = ((bits >> k) & 1) as u8;
            }
            best = best.min(self.energy(&labels));
        }
        best
    }
}

/// AP at one IoU threshold: greedy score-order matching, then the sum over
/// true positives of the best precision reached at that recall or later.
pub fn ap_tally(preds: &[(f64, Vec<u32>)], gts: &[Vec<u32>], areas: &[f64], tau: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].0.partial_cmp(&preds[a].0).unwrap());
    let mut used = vec![false; gts.len()];
    let mut tp = Vec::new();
    for &p in &order {
        let mut pick = None;
        let mut best = -1.0;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(&preds[p].1, gt, areas);
            if !used[g] && v >= tau && v > best {
                best = v;
                pick = Some(g);
            }
        }
        if let Some(g) = pick {
            used[g] = true;
        }
        tp.push(pick.is_some());
    }
    let precision: Vec<f64> = (0..tp.len())
        .map(|k| tp[..=k].iter().filter(|&&x| x).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..tp.len() {
        if tp[k] {
            let env = precision[k..].iter().cloned().fold(0.0, f64::max);
            ap += env / gts.len() as f64;
        }
    }
    ap
}

pub fn to_sets(mesh: &TriMesh, sets: &[Vec<u32>]) -> Vec<TriangleSet> {
    sets.iter().map(|s| TriangleSet::new(mesh, s.clone()).unwrap()).collect()
}
