//! Grow each roof instance into a full building with a binary MRF per roof.

mod hobb;
pub mod maxflow;
mod mrf;
mod profile;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{write_json, Error, Result};
use crate::mesh::{connected_components, TriMesh, TriangleSet};
use crate::roof::BACKGROUND;

pub use hobb::{candidate_set, compute_hobb, Hobb};
pub use mrf::{data_costs, data_term, smoothness, DataOptions, MrfProblem, MrfSolution, Seed, SEED_LOCK};
pub use profile::{
    convex_hull, is_simple, point_in_polygon, point_segment_distance, roof_profile, signed_area, simplify, RoofProfile,
    DEFAULT_PROFILE_TOL,
};

pub const DEFAULT_HOBB_OFFSET: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub hobb_offset: f64,
    pub profile_tol: f64,
    pub data: DataOptions,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            hobb_offset: DEFAULT_HOBB_OFFSET,
            profile_tol: DEFAULT_PROFILE_TOL,
            data: DataOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub building_id: i32,
    pub roof_id: i32,
    pub triangle_count: usize,
    pub area_m2: f64,
    pub score: f64,
    pub hull_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingLabeling {
    /// Building id per triangle, -1 for background.
    pub labels: Vec<i32>,
    pub buildings: Vec<BuildingRecord>,
}

impl BuildingLabeling {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, &self.buildings)
    }
}

/// One roof's MRF over its candidate triangles; `nodes[i]` is the mesh
/// triangle of node i.
#[derive(Debug, Clone)]
pub struct RoofProblem {
    pub nodes: Vec<u32>,
    pub problem: MrfProblem,
    pub hobb: Hobb,
    pub profile: RoofProfile,
}

/// Build the MRF for one roof. `excluded(t)` marks triangles owned by other
/// roofs or earlier buildings.
pub fn build_problem(
    mesh: &TriMesh,
    roof: &TriangleSet,
    params: &SegmentParams,
    excluded: impl Fn(usize) -> bool,
) -> Result<RoofProblem> {
    let comps = connected_components(mesh, roof);
    let main = comps
        .first()
        .ok_or_else(|| Error::Geometry("empty roof".into()))?;
    let hobb = compute_hobb(main, mesh)?;
    let profile = roof_profile(main, mesh, params.profile_tol)?;

    let mut nodes = candidate_set(&hobb, params.hobb_offset, mesh, &excluded);
    nodes.extend_from_slice(roof.indices());
    nodes.sort_unstable();
    nodes.dedup();

    let nt = mesh.num_triangles();
    let mut local = vec![u32::MAX; nt];
    for (i, &t) in nodes.iter().enumerate() {
        local[t as usize] = i as u32;
    }
    let max_dist = hobb.expanded(params.hobb_offset).half_diagonal();
    let mut seeds = Vec::with_capacity(nodes.len());
    let mut unary = Vec::with_capacity(nodes.len());
    let mut edges = Vec::new();
    for (i, &t) in nodes.iter().enumerate() {
        let t = t as usize;
        let nbrs = mesh.neighbors(t);
        let seed = if roof.contains(t as u32) {
            Seed::Foreground
        } else if nbrs.iter().any(|&u| local[u as usize] == u32::MAX) {
            Seed::Background
        } else {
            Seed::Free
        };
        seeds.push(seed);
        unary.push(if seed == Seed::Free {
            let (d, theta) = data_term(mesh, t, &profile, max_dist);
            data_costs(d, theta, params.data)
        } else {
            (0.0, 0.0)
        });
        for &u in nbrs {
            let j = local[u as usize];
            if j != u32::MAX && j > i as u32 {
                edges.push((i as u32, j, smoothness(mesh, t, u as usize)));
            }
        }
    }
    Ok(RoofProblem {
        nodes,
        problem: MrfProblem { seeds, unary, edges },
        hobb,
        profile,
    })
}

/// Segment every roof, largest roof area first. `scores[g]` is the
/// confidence carried by roof id g.
pub fn segment_buildings(
    mesh: &TriMesh,
    rid_t: &[i32],
    roofs: &[(i32, TriangleSet)],
    scores: &[f64],
    params: &SegmentParams,
) -> Result<BuildingLabeling> {
    let nt = mesh.num_triangles();
    if rid_t.len() != nt {
        return Err(Error::Dimension(format!("{} roof ids for {nt} triangles", rid_t.len())));
    }
    let mut order: Vec<usize> = (0..roofs.len()).collect();
    order.sort_by(|&a, &b| {
        roofs[b]
            .1
            .area()
            .total_cmp(&roofs[a].1.area())
            .then(roofs[a].0.cmp(&roofs[b].0))
    });
    let mut labels = vec![BACKGROUND; nt];
    let mut buildings = Vec::new();
    for k in order {
        let (rid, roof) = (&roofs[k].0, &roofs[k].1);
        let rid = *rid;
        let rp = build_problem(mesh, roof, params, |t| {
            labels[t] != BACKGROUND || (rid_t[t] != BACKGROUND && rid_t[t] != rid)
        })?;
        let sol = rp.problem.solve();
        let mut tris = Vec::new();
        for (i, &t) in rp.nodes.iter().enumerate() {
            if sol.labels[i] == 1 && labels[t as usize] == BACKGROUND {
                labels[t as usize] = rid;
                tris.push(t);
            }
        }
        let area = mesh.set_area(&tris)?;
        buildings.push(BuildingRecord {
            building_id: rid,
            roof_id: rid,
            triangle_count: tris.len(),
            area_m2: area,
            score: scores.get(rid as usize).copied().unwrap_or(0.0),
            hull_fallback: rp.profile.hull_fallback,
        });
    }
    buildings.sort_by_key(|b| b.building_id);
    Ok(BuildingLabeling { labels, buildings })
}
