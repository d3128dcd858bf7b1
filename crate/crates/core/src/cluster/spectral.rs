//! Normalized spectral clustering on the similarity affinity, used only as a
//! comparison backend for the order-based traversal.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{confidence_order, GlobalMask, MaskConfidences, MaskMapping, SimilarityMatrix};
use crate::error::{Error, Result};

const KMEANS_ITERS: usize = 100;

pub fn spectral_baseline(m: &SimilarityMatrix, conf: &MaskConfidences, k: usize) -> Result<MaskMapping> {
    let n = m.len();
    if k == 0 {
        return Err(Error::InvalidArgument("spectral k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("spectral k = {k} exceeds {n} masks")));
    }
    if conf.c_star.len() != n {
        return Err(Error::Dimension(format!("{} confidences for {n} masks", conf.c_star.len())));
    }
    let groups: Vec<usize> = if k == n {
        (0..n).collect()
    } else if k == 1 {
        vec![0; n]
    } else {
        let emb = embed(m, k);
        kmeans(&emb, k, &confidence_order(&conf.c_star))
    };
    Ok(mapping_from_groups(&groups, conf))
}

/// Rows of the top-k eigenvectors of D^-1/2 A D^-1/2, unit-normalized.
fn embed(m: &SimilarityMatrix, k: usize) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in m.row(i) {
            a[(i, j)] = v;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = idx[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            row
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations seeded by farthest-point selection starting from the
/// highest-confidence mask.
fn kmeans(points: &[Vec<f64>], k: usize, order: &[usize]) -> Vec<usize> {
    let n = points.len();
    let mut centers = vec![points[order[0]].clone()];
    while centers.len() < k {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for &i in order {
            let d = centers
                .iter()
                .map(|c| dist2(&points[i], c))
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        centers.push(points[best.1].clone());
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(&points[i], center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                center[d] = members.iter().map(|&i| points[i][d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    assign
}

/// Representative = highest-C* member; globals ordered by representative C*.
fn mapping_from_groups(groups: &[usize], conf: &MaskConfidences) -> MaskMapping {
    let order = confidence_order(&conf.c_star);
    let mut group_to_g = std::collections::BTreeMap::new();
    let mut globals: Vec<GlobalMask> = Vec::new();
    for &i in &order {
        if !group_to_g.contains_key(&groups[i]) {
            let g = globals.len() as u32;
            group_to_g.insert(groups[i], g);
            globals.push(GlobalMask {
                g,
                rep_local: i as u32,
                support: 0,
                confidence: conf.c_star[i],
            });
        }
    }
    let assignment: Vec<u32> = groups.iter().map(|grp| group_to_g[grp]).collect();
    for &g in &assignment {
        globals[g as usize].support += 1;
    }
    MaskMapping { globals, assignment }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::confidences;

    fn blocks() -> SimilarityMatrix {
        let n = 6;
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    v[i * n + j] = 1.0;
                } else if (i < 3) == (j < 3) {
                    v[i * n + j] = 0.9;
                }
            }
        }
        SimilarityMatrix::from_dense(n, &v).unwrap()
    }

    #[test]
    fn recovers_blocks() {
        let m = blocks();
        let c = confidences(&m, &[0.9, 0.8, 0.7, 0.95, 0.85, 0.75], 0.5).unwrap();
        let map = spectral_baseline(&m, &c, 2).unwrap();
        assert_eq!(map.globals.len(), 2);
        let a = map.assignment[0];
        assert!(map.assignment[..3].iter().all(|&g| g == a));
        assert!(map.assignment[3..].iter().all(|&g| g != a));
        assert_eq!(map.globals[0].rep_local, 3);
    }

    #[test]
    fn trivial_k() {
        let m = blocks();
        let c = confidences(&m, &[0.9; 6], 0.5).unwrap();
        let map = spectral_baseline(&m, &c, 6).unwrap();
        assert_eq!(map.globals.len(), 6);
        assert!(map.globals.iter().all(|g| g.support == 1));
        let map = spectral_baseline(&m, &c, 1).unwrap();
        assert_eq!(map.globals.len(), 1);
        assert_eq!(map.globals[0].support, 6);
        assert!(spectral_baseline(&m, &c, 0).is_err());
        assert!(spectral_baseline(&m, &c, 7).is_err());
    }
}
