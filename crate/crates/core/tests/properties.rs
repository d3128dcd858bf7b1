mod common;

use std::collections::BTreeMap;

use mvsseg::building::{data_term, point_in_polygon, RoofProfile};
use mvsseg::camera::{render_depth, CameraView};
use mvsseg::cluster::{cluster, confidences, similarity_matrix, similarity_matrix_with_limit};
use mvsseg::eval::{average_precision, instance_iou, Instance, Interpolation};
use mvsseg::masks::MaskTriangleSets;
use mvsseg::mesh::{connected_components, load_mesh, save_mesh, TriMesh, TriangleSet};
use mvsseg::roof::{tally, triangle_vote, BACKGROUND};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

const NX: usize = 6;

fn rect() -> impl Strategy<Value = Vec<u32>> {
    (0..NX, 0..NX, 1..=3usize, 1..=3usize)
        .prop_map(|(x0, y0, w, h)| common::cell_rect(NX, x0, y0, (x0 + w).min(NX), (y0 + h).min(NX)))
}

fn mask_sets() -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec(rect(), 1..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ply_round_trip(cells in prop::collection::btree_set(0..NX * NX, 1..20), ids in prop::collection::vec(-1i32..5, 72)) {
        let grid = common::grid_mesh(NX, NX);
        let tris: Vec<[u32; 3]> = cells.iter().flat_map(|&c| [grid.triangles()[2 * c], grid.triangles()[2 * c + 1]]).collect();
        let mesh = TriMesh::new(grid.vertices().to_vec(), tris).unwrap();
        let labels = &ids[..mesh.num_triangles()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        save_mesh(&path, &mesh, Some(labels)).unwrap();
        let back = load_mesh(&path).unwrap();
        prop_assert_eq!(back.mesh.vertices(), mesh.vertices());
        prop_assert_eq!(back.mesh.triangles(), mesh.triangles());
        let got: Vec<i32> = back.triangle_labels("building_id").unwrap().into_iter().map(|v| v as i32).collect();
        prop_assert_eq!(&got[..], labels);
    }

    #[test]
    fn components_partition_subset(cells in prop::collection::btree_set(0..NX * NX, 0..30)) {
        let mesh = common::grid_mesh(NX, NX);
        let tris: Vec<u32> = cells.iter().flat_map(|&c| [2 * c as u32, 2 * c as u32 + 1]).collect();
        let subset = TriangleSet::new(&mesh, tris.clone()).unwrap();
        let comps = connected_components(&mesh, &subset);
        let mut all: Vec<u32> = comps.iter().flat_map(|c| c.indices().to_vec()).collect();
        all.sort_unstable();
        prop_assert_eq!(&all, &tris);
        let total: f64 = comps.iter().map(|c| c.area()).sum();
        prop_assert!((total - subset.area()).abs() < 1e-9);
        for w in comps.windows(2) {
            prop_assert!(w[0].area() >= w[1].area());
        }
    }

    #[test]
    fn similarity_is_symmetric_iou(sets in mask_sets()) {
        let mesh = common::grid_mesh(NX, NX);
        let mts = MaskTriangleSets::from_sets(&mesh, common::to_sets(&mesh, &sets), &vec![0; sets.len()]).unwrap();
        let dense = similarity_matrix(&mts, mesh.areas());
        let sparse = similarity_matrix_with_limit(&mts, mesh.areas(), 0);
        for i in 0..sets.len() {
            for j in 0..sets.len() {
                let want = common::iou(&sets[i], &sets[j], mesh.areas()) as f32 as f64;
                prop_assert_eq!(dense.get(i, j), want);
                prop_assert_eq!(sparse.get(i, j), want);
                prop_assert_eq!(dense.get(i, j), dense.get(j, i));
            }
        }
    }

    #[test]
    fn clustering_is_a_partition(sets in mask_sets(), beta in 0.0..1.0f64, probs in prop::collection::vec(0.05..1.0f64, 10)) {
        let mesh = common::grid_mesh(NX, NX);
        let n = sets.len();
        let mts = MaskTriangleSets::from_sets(&mesh, common::to_sets(&mesh, &sets), &vec![0; n]).unwrap();
        let m = similarity_matrix(&mts, mesh.areas());
        let conf = confidences(&m, &probs[..n], beta).unwrap();
        let map = cluster(&m, &conf).unwrap();
        prop_assert_eq!(map.assignment.len(), n);
        prop_assert_eq!(map.globals.iter().map(|g| g.support as usize).sum::<usize>(), n);
        for (k, g) in map.globals.iter().enumerate() {
            prop_assert_eq!(g.g as usize, k);
            prop_assert_eq!(map.assignment[g.rep_local as usize], g.g);
        }
        for l in 0..n {
            let g = &map.globals[map.assignment[l] as usize];
            if g.rep_local as usize != l {
                prop_assert!(m.get(g.rep_local as usize, l) > beta);
            }
        }
        // Representatives come out in non-increasing confidence.
        for w in map.globals.windows(2) {
            prop_assert!(w[0].confidence >= w[1].confidence);
        }
    }

    #[test]
    fn vertex_tally_matches_definition(votes in prop::collection::vec(-1i32..4, 0..12)) {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for &v in &votes {
            *counts.entry(v).or_default() += 1;
        }
        let (got, _) = tally(&votes);
        let best = counts.values().copied().max().unwrap_or(0);
        let roofs_at_best: Vec<i32> = counts.iter().filter(|(&k, &c)| k >= 0 && c == best).map(|(&k, _)| k).collect();
        let want = roofs_at_best.first().copied().unwrap_or(BACKGROUND);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn triangle_vote_matches_definition(r in prop::array::uniform3(-1i32..4)) {
        let got = triangle_vote(r);
        let count = |x: i32| r.iter().filter(|&&y| y == x).count();
        let want = if let Some(&x) = r.iter().find(|&&x| count(x) >= 2) {
            x
        } else {
            r.iter().copied().filter(|&x| x >= 0).min().unwrap_or(-1)
        };
        prop_assert_eq!(got, want);
    }

    #[test]
    fn ap_invariants(
        gts in prop::collection::vec(rect(), 1..4),
        preds in prop::collection::vec((0.0..1.0f64, rect()), 0..5),
        shift in -5.0..5.0f64,
    ) {
        let mesh = common::grid_mesh(NX, NX);
        let set = |v: &Vec<u32>| TriangleSet::new(&mesh, v.clone()).unwrap();
        let g: Vec<(i32, TriangleSet)> = gts.iter().enumerate().map(|(i, s)| (i as i32, set(s))).collect();
        let mk = |ids: &dyn Fn(usize) -> i32, d: f64| -> Vec<Instance> {
            preds.iter().enumerate().map(|(i, (s, p))| Instance { id: ids(i), score: s + d, set: set(p) }).collect()
        };
        let n = preds.len() as i32;
        let base = average_precision(&mk(&|i| i as i32, 0.0), &g, &mesh, Interpolation::AllPoint);
        let shifted = average_precision(&mk(&|i| i as i32, shift), &g, &mesh, Interpolation::AllPoint);
        let relabeled = average_precision(&mk(&|i| 100 + n - i as i32, 0.0), &g, &mesh, Interpolation::AllPoint);
        prop_assert_eq!(base.ap, shifted.ap);
        // Relabeling only matters when two scores tie.
        let mut scores: Vec<f64> = preds.iter().map(|p| p.0).collect();
        scores.sort_by(f64::total_cmp);
        if scores.windows(2).all(|w| w[0] != w[1]) {
            prop_assert_eq!(base.ap, relabeled.ap);
        }
        for w in base.thresholds.windows(2) {
            prop_assert!(w[0].ap >= w[1].ap);
        }
        prop_assert!(base.ap50 >= base.ap75);
        prop_assert!((0.0..=1.0).contains(&base.ap));
    }

    #[test]
    fn distance_sign_follows_containment(px in -3.0..13.0f64, py in -3.0..13.0f64, k in 3usize..7) {
        // Regular k-gon centred at (5, 5), radius 4.
        let poly: Vec<[f64; 2]> = (0..k)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / k as f64 + 0.3;
                [5.0 + 4.0 * a.cos(), 5.0 + 4.0 * a.sin()]
            })
            .collect();
        let profile = RoofProfile { polygon: poly.clone(), hull_fallback: false };
        let e = 0.01;
        let mesh = TriMesh::new(
            vec![Point3::new(px - e, py - e, 0.0), Point3::new(px + 2.0 * e, py - e, 0.0), Point3::new(px - e, py + 2.0 * e, 0.5)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = mesh.centroid(0);
        let (d, theta) = data_term(&mesh, 0, &profile, 10.0);
        prop_assert!((0.0..=1.0).contains(&theta));
        prop_assert!((-1.0..=1.0).contains(&d));
        if d != 0.0 {
            prop_assert_eq!(d < 0.0, point_in_polygon([c.x, c.y], &poly));
        }
    }

    #[test]
    fn depth_independent_of_submission_order(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        let mut t = Vec::new();
        for k in 0..6u32 {
            let c = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0));
            for _ in 0..3 {
                v.push(Point3::from(c + Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0))));
            }
            t.push([3 * k, 3 * k + 1, 3 * k + 2]);
        }
        let Ok(mesh) = TriMesh::new(v.clone(), t.clone()) else { return Ok(()) };
        prop_assume!(mesh.num_triangles() == 6);
        let mut rev = t.clone();
        rev.reverse();
        let flipped = TriMesh::new(v, rev).unwrap();
        let cam = CameraView::look_along(0, (48, 40), 40.0, Point3::new(0.0, 0.0, 20.0), -Vector3::z(), Vector3::y());
        prop_assert_eq!(render_depth(&mesh, &cam).data, render_depth(&flipped, &cam).data);
    }
}

#[test]
fn half_overlap_iou_is_one_third() {
    let mesh = common::grid_mesh(4, 1);
    let a = TriangleSet::new(&mesh, (0..4).collect()).unwrap();
    let b = TriangleSet::new(&mesh, (2..6).collect()).unwrap();
    assert_eq!(instance_iou(&a, &b, &mesh), 1.0 / 3.0);
    assert_eq!(instance_iou(&a, &a, &mesh), 1.0);
    let c = TriangleSet::new(&mesh, vec![7]).unwrap();
    assert_eq!(instance_iou(&a, &c, &mesh), 0.0);
}
