//! Cross-view mask clustering: pairwise similarity, confidences, global-mask
//! selection, and the local-to-global mapping table.

mod spectral;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{write_json, Error, Result};
use crate::masks::MaskTriangleSets;

pub use spectral::spectral_baseline;

/// Default merge threshold β.
pub const DEFAULT_BETA: f64 = 0.5;

/// Above this many masks the matrix is stored sparsely.
pub const DENSE_LIMIT: usize = 20_000;

/// Triangles per accumulation bucket.
const BUCKET: usize = 4096;

/// Symmetric mask similarity, m_ij stored as 32-bit values.
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityMatrix {
    Dense { n: usize, data: Vec<f32> },
    /// Per-row nonzero entries (including the diagonal), sorted by column.
    Sparse { n: usize, rows: Vec<Vec<(u32, f32)>> },
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        match self {
            Self::Dense { n, .. } | Self::Sparse { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Dense { n, data } => data[i * n + j] as f64,
            Self::Sparse { rows, .. } => rows[i]
                .binary_search_by_key(&(j as u32), |e| e.0)
                .map(|k| rows[i][k].1 as f64)
                .unwrap_or(0.0),
        }
    }

    /// Nonzero entries of row i, ascending column.
    pub fn row(&self, i: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            Self::Dense { n, data } => Box::new(
                data[i * n..(i + 1) * n]
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m != 0.0)
                    .map(|(j, &m)| (j, m as f64)),
            ),
            Self::Sparse { rows, .. } => Box::new(rows[i].iter().map(|&(j, m)| (j as usize, m as f64))),
        }
    }

    /// Build a dense matrix from explicit values (upper triangle mirrored).
    pub fn from_dense(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension(format!("{} values for {n}x{n}", values.len())));
        }
        let mut data = vec![0f32; n * n];
        for i in 0..n {
            for j in i..n {
                let m = values[i * n + j];
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::InvalidArgument(format!("m[{i}][{j}] = {m} outside [0, 1]")));
                }
                data[i * n + j] = m as f32;
                data[j * n + i] = m as f32;
            }
        }
        Ok(Self::Dense { n, data })
    }
}

/// Pairwise IoU of the mask triangle sets.
pub fn similarity_matrix(sets: &MaskTriangleSets, areas: &[f64]) -> SimilarityMatrix {
    similarity_matrix_with_limit(sets, areas, DENSE_LIMIT)
}

pub fn similarity_matrix_with_limit(sets: &MaskTriangleSets, areas: &[f64], dense_limit: usize) -> SimilarityMatrix {
    let n = sets.sets.len();
    let nt = sets.num_triangles();
    let buckets: Vec<Vec<((u32, u32), f64)>> = (0..nt.div_ceil(BUCKET))
        .into_par_iter()
        .map(|b| {
            let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
            for t in b * BUCKET..((b + 1) * BUCKET).min(nt) {
                let ms = sets.masks_of(t);
                if ms.len() < 2 {
                    continue;
                }
                let mut ids: Vec<u32> = ms.iter().map(|e| e.1).collect();
                ids.sort_unstable();
                for x in 0..ids.len() {
                    for y in x + 1..ids.len() {
                        *acc.entry((ids[x], ids[y])).or_insert(0.0) += areas[t];
                    }
                }
            }
            let mut v: Vec<_> = acc.into_iter().collect();
            v.sort_unstable_by_key(|e| e.0);
            v
        })
        .collect();
    // Per-pair sums are folded in bucket order, independent of thread count.
    let mut inter: HashMap<(u32, u32), f64> = HashMap::new();
    for bucket in &buckets {
        for &(k, a) in bucket {
            *inter.entry(k).or_insert(0.0) += a;
        }
    }
    let mut pairs: Vec<((u32, u32), f64)> = inter.into_iter().collect();
    pairs.sort_unstable_by_key(|e| e.0);

    let set_area: Vec<f64> = sets.sets.iter().map(|s| s.area()).collect();
    let iou = |i: usize, j: usize, a: f64| -> f32 {
        let union = set_area[i] + set_area[j] - a;
        if union <= 0.0 {
            0.0
        } else {
            (a / union).clamp(0.0, 1.0) as f32
        }
    };
    let diag = |i: usize| if set_area[i] > 0.0 { 1.0f32 } else { 0.0 };

    if n <= dense_limit {
        let mut data = vec![0f32; n * n];
        for i in 0..n {
            data[i * n + i] = diag(i);
        }
        for &((i, j), a) in &pairs {
            let (i, j) = (i as usize, j as usize);
            let m = iou(i, j, a);
            data[i * n + j] = m;
            data[j * n + i] = m;
        }
        SimilarityMatrix::Dense { n, data }
    } else {
        let mut rows: Vec<Vec<(u32, f32)>> = (0..n)
            .map(|i| {
                let d = diag(i);
                if d > 0.0 {
                    vec![(i as u32, d)]
                } else {
                    Vec::new()
                }
            })
            .collect();
        for &((i, j), a) in &pairs {
            let m = iou(i as usize, j as usize, a);
            if m > 0.0 {
                rows[i as usize].push((j, m));
                rows[j as usize].push((i, m));
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|e| e.0);
        }
        SimilarityMatrix::Sparse { n, rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskConfidences {
    pub c: Vec<f64>,
    pub c_star: Vec<f64>,
    pub beta: f64,
}

/// C_i = P_i Σ_j P_j m_ij and the thresholded C*_i (self term included).
pub fn confidences(m: &SimilarityMatrix, probs: &[f64], beta: f64) -> Result<MaskConfidences> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    if probs.len() != m.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} masks",
            probs.len(),
            m.len()
        )));
    }
    let (c, c_star): (Vec<f64>, Vec<f64>) = (0..m.len())
        .into_par_iter()
        .map(|i| {
            let (mut s, mut s_star) = (0.0, 0.0);
            for (j, mij) in m.row(i) {
                let term = probs[j] * mij;
                s += term;
                if mij - beta > 0.0 {
                    s_star += term;
                }
            }
            (probs[i] * s, probs[i] * s_star)
        })
        .unzip();
    Ok(MaskConfidences { c, c_star, beta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMask {
    pub g: u32,
    pub rep_local: u32,
    pub support: u32,
    pub confidence: f64,
}

/// The mapping table: local mask → global mask, globals in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMapping {
    pub globals: Vec<GlobalMask>,
    pub assignment: Vec<u32>,
}

impl MaskMapping {
    pub fn global_of(&self, local: usize) -> u32 {
        self.assignment[local]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::error::read_json(path)
    }
}

/// Local indices sorted by descending C*, ties to the lower index.
pub fn confidence_order(c_star: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c_star.len()).collect();
    order.sort_by(|&a, &b| c_star[b].total_cmp(&c_star[a]).then(a.cmp(&b)));
    order
}

/// Single descending-C* pass selecting global masks.
pub fn cluster(m: &SimilarityMatrix, conf: &MaskConfidences) -> Result<MaskMapping> {
    let n = m.len();
    if conf.c_star.len() != n {
        return Err(Error::Dimension(format!(
            "{} confidences for {n} masks",
            conf.c_star.len()
        )));
    }
    const UNMARKED: u32 = u32::MAX;
    let mut assignment = vec![UNMARKED; n];
    let mut globals: Vec<GlobalMask> = Vec::new();
    for i in confidence_order(&conf.c_star) {
        if assignment[i] != UNMARKED {
            continue;
        }
        let g = globals.len() as u32;
        assignment[i] = g;
        let mut support = 1;
        for (l, mlg) in m.row(i) {
            if assignment[l] == UNMARKED && mlg > conf.beta {
                assignment[l] = g;
                support += 1;
            }
        }
        globals.push(GlobalMask {
            g,
            rep_local: i as u32,
            support,
            confidence: conf.c_star[i],
        });
    }
    Ok(MaskMapping { globals, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{TriMesh, TriangleSet};
    use nalgebra::Point3;

    fn strip(areas: &[f64]) -> TriMesh {
        // Disjoint right triangles with legs chosen to give the wanted area.
        let mut v = Vec::new();
        let mut t = Vec::new();
        for (k, &a) in areas.iter().enumerate() {
            let x = 10.0 * k as f64;
            let s = (2.0 * a).sqrt();
            let b = v.len() as u32;
            v.push(Point3::new(x, 0.0, 0.0));
            v.push(Point3::new(x + s, 0.0, 0.0));
            v.push(Point3::new(x, s, 0.0));
            t.push([b, b + 1, b + 2]);
        }
        TriMesh::new(v, t).unwrap()
    }

    fn sets(mesh: &TriMesh, s: &[&[u32]]) -> MaskTriangleSets {
        let v = s
            .iter()
            .map(|x| TriangleSet::new(mesh, x.to_vec()).unwrap())
            .collect();
        MaskTriangleSets::from_sets(mesh, v, &vec![0; s.len()]).unwrap()
    }

    #[test]
    fn iou_examples() {
        let mesh = strip(&[2.0, 1.0, 1.0]);
        let s = sets(&mesh, &[&[0, 1], &[1, 2], &[0, 1], &[], &[2]]);
        let m = similarity_matrix(&s, mesh.areas());
        assert_eq!(m.get(0, 1), 0.25);
        assert_eq!(m.get(0, 2), 1.0);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(m.get(3, 3), 0.0);
        assert_eq!(m.get(3, 0), 0.0);
        assert_eq!(m.get(1, 1), 1.0);
        let sparse = similarity_matrix_with_limit(&s, mesh.areas(), 0);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.get(i, j), sparse.get(i, j));
            }
        }
    }

    #[test]
    fn single_mask_confidence() {
        let m = SimilarityMatrix::from_dense(1, &[1.0]).unwrap();
        let c = confidences(&m, &[1.0], 0.5).unwrap();
        assert_eq!((c.c[0], c.c_star[0]), (1.0, 1.0));
        let c = confidences(&m, &[1.0], 1.0).unwrap();
        assert_eq!(c.c_star[0], 0.0);
        assert!(confidences(&m, &[1.0], 1.5).is_err());
    }

    #[test]
    fn all_similar_collapse_to_one() {
        let m = SimilarityMatrix::from_dense(3, &[1.0, 0.8, 0.7, 0.8, 1.0, 0.9, 0.7, 0.9, 1.0]).unwrap();
        let c = confidences(&m, &[0.9, 0.9, 0.9], 0.5).unwrap();
        let map = cluster(&m, &c).unwrap();
        assert_eq!(map.globals.len(), 1);
        assert_eq!(map.globals[0].rep_local, 1);
        assert_eq!(map.globals[0].support, 3);
        assert_eq!(map.assignment, vec![0, 0, 0]);
    }

    #[test]
    fn chain_groups_through_best() {
        // a-b and b-c similar, a-c not; b highest C*.
        let m = SimilarityMatrix::from_dense(3, &[1.0, 0.6, 0.1, 0.6, 1.0, 0.6, 0.1, 0.6, 1.0]).unwrap();
        let c = confidences(&m, &[0.8, 1.0, 0.8], 0.5).unwrap();
        let map = cluster(&m, &c).unwrap();
        assert_eq!(map.globals.len(), 1);
        assert_eq!(map.globals[0].rep_local, 1);
    }

    #[test]
    fn dissimilar_stay_apart() {
        let m = SimilarityMatrix::from_dense(3, &[1.0, 0.4, 0.0, 0.4, 1.0, 0.5, 0.0, 0.5, 1.0]).unwrap();
        let c = confidences(&m, &[0.9, 0.8, 0.7], 0.5).unwrap();
        let map = cluster(&m, &c).unwrap();
        assert_eq!(map.globals.len(), 3);
        assert_eq!(map.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn size_mismatch() {
        let m = SimilarityMatrix::from_dense(2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let c = MaskConfidences {
            c: vec![1.0],
            c_star: vec![1.0],
            beta: 0.5,
        };
        assert!(cluster(&m, &c).is_err());
        assert!(confidences(&m, &[1.0], 0.5).is_err());
    }
}
