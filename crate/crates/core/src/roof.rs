//! Roof ids per vertex and per triangle by voting clustered masks in 3D.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{visible_pixel, CameraView, DepthBias, DepthMap};
use crate::cluster::MaskMapping;
use crate::error::{read_json, write_json, Error, Result};
use crate::masks::MaskLabelImage;
use crate::mesh::{TriMesh, TriangleSet};

pub const BACKGROUND: i32 = -1;

/// Most frequent vote. Ties among global masks go to the smaller id; a tie
/// between background and a global mask goes to the mask. No votes gives -1.
pub fn tally(votes: &[i32]) -> (i32, bool) {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else {
        return (BACKGROUND, false);
    };
    let bg_tied = counts.get(&BACKGROUND) == Some(&best);
    match counts.iter().find(|(&id, &c)| id != BACKGROUND && c == best) {
        Some((&id, _)) => (id, bg_tied),
        None => (BACKGROUND, false),
    }
}

/// Per-vertex roof id from the global masks seen at the vertex in every
/// view where it is visible.
pub fn vote_vertices(
    mesh: &TriMesh,
    cams: &[CameraView],
    depths: &[DepthMap],
    labels: &[MaskLabelImage],
    mapping: &MaskMapping,
) -> Result<Vec<i32>> {
    if cams.len() != depths.len() || cams.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} cameras, {} depth maps, {} label images",
            cams.len(),
            depths.len(),
            labels.len()
        )));
    }
    let bias = DepthBias::default();
    let out: Vec<(i32, bool)> = mesh
        .vertices()
        .par_iter()
        .map(|p| {
            let mut votes = Vec::with_capacity(cams.len());
            for ((cam, depth), label) in cams.iter().zip(depths).zip(labels) {
                if let Some((x, y)) = visible_pixel(cam, depth, p, bias) {
                    let local = label.get(x, y);
                    votes.push(if local >= 0 {
                        mapping.assignment[local as usize] as i32
                    } else {
                        BACKGROUND
                    });
                }
            }
            tally(&votes)
        })
        .collect();
    let ties = out.iter().filter(|o| o.1).count();
    if ties > 0 {
        log::debug!("{ties} vertices resolved a background/roof tie toward the roof");
    }
    Ok(out.into_iter().map(|o| o.0).collect())
}

/// Majority of the three vertex ids; all distinct gives the smallest
/// non-background id.
pub fn triangle_vote(r: [i32; 3]) -> i32 {
    if r[0] == r[1] || r[0] == r[2] {
        r[0]
    } else if r[1] == r[2] {
        r[1]
    } else {
        r.into_iter().filter(|&x| x != BACKGROUND).min().unwrap_or(BACKGROUND)
    }
}

pub fn vote_triangles(mesh: &TriMesh, rids: &[i32]) -> Vec<i32> {
    mesh.triangles()
        .par_iter()
        .map(|t| triangle_vote([rids[t[0] as usize], rids[t[1] as usize], rids[t[2] as usize]]))
        .collect()
}

/// Triangles grouped by roof id, background dropped, ascending id.
pub fn roof_instances(mesh: &TriMesh, rid_t: &[i32]) -> Vec<(i32, TriangleSet)> {
    let mut groups: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (t, &r) in rid_t.iter().enumerate() {
        if r != BACKGROUND {
            groups.entry(r).or_default().push(t as u32);
        }
    }
    groups
        .into_iter()
        .map(|(r, tris)| (r, TriangleSet::from_sorted(mesh, tris)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofRecord {
    pub roof_id: i32,
    pub triangle_ids: Vec<u32>,
}

pub fn save_roofs(path: &Path, roofs: &[(i32, TriangleSet)]) -> Result<()> {
    let records: Vec<RoofRecord> = roofs
        .iter()
        .map(|(r, s)| RoofRecord {
            roof_id: *r,
            triangle_ids: s.indices().to_vec(),
        })
        .collect();
    write_json(path, &records)
}

pub fn load_roofs(path: &Path, mesh: &TriMesh) -> Result<Vec<(i32, TriangleSet)>> {
    let records: Vec<RoofRecord> = read_json(path)?;
    records
        .into_iter()
        .map(|r| Ok((r.roof_id, TriangleSet::new(mesh, r.triangle_ids)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_tally_rules() {
        assert_eq!(tally(&[5, 5, 7]).0, 5);
        assert_eq!(tally(&[7, 5]).0, 5);
        assert_eq!(tally(&[-1, -1, 4]).0, -1);
        assert_eq!(tally(&[-1, 4]), (4, true));
        assert_eq!(tally(&[]).0, -1);
        assert_eq!(tally(&[-1]).0, -1);
    }

    #[test]
    fn triangle_tally_rules() {
        assert_eq!(triangle_vote([3, 3, -1]), 3);
        assert_eq!(triangle_vote([1, 2, 3]), 1);
        assert_eq!(triangle_vote([-1, -1, -1]), -1);
        assert_eq!(triangle_vote([-1, 2, 3]), 2);
        assert_eq!(triangle_vote([-1, 2, -1]), -1);
    }

    #[test]
    fn instances_grouped() {
        let mesh = crate::mesh::tests::unit_cube();
        let mut rid = vec![-1; 12];
        rid[3] = 2;
        rid[0] = 2;
        rid[5] = 0;
        let inst = roof_instances(&mesh, &rid);
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].0, 0);
        assert_eq!(inst[1].1.indices(), &[0, 3]);
        assert!(roof_instances(&mesh, &[-1; 12]).is_empty());
    }
}
