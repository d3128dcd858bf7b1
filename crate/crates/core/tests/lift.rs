use mvsseg::camera::{render_depth, CameraView};
use mvsseg::masks::{ingest, lift_masks, ImageMasks};
use mvsseg::mesh::TriMesh;
use nalgebra::{Point3, Vector3};

fn full_frame(image_id: u32, w: u32, h: u32) -> ImageMasks {
    ImageMasks {
        image_id,
        width: w,
        height: h,
        labels: vec![1; (w * h) as usize],
        probs: vec![1.0],
    }
}

#[test]
fn occluded_centroid_only_lifts_in_clear_view() {
    // Triangle 0 lies flat at the origin; triangles 1-2 form a wall at x = 5
    // that blocks a low camera looking along -x but not a nadir camera.
    let v = vec![
        Point3::new(-0.5, -0.5, 0.0),
        Point3::new(0.5, -0.5, 0.0),
        Point3::new(0.0, 0.5, 0.0),
        Point3::new(5.0, -5.0, -1.0),
        Point3::new(5.0, 5.0, -1.0),
        Point3::new(5.0, 5.0, 6.0),
        Point3::new(5.0, -5.0, 6.0),
    ];
    let mesh = TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5], [3, 5, 6]]).unwrap();
    let (w, h) = (64, 48);
    let cams = vec![
        CameraView::look_along(1, (w, h), 30.0, Point3::new(0.0, 0.0, 20.0), -Vector3::z(), Vector3::y()),
        CameraView::look_along(2, (w, h), 30.0, Point3::new(12.0, 0.0, 1.0), Vector3::new(-1.0, 0.0, -0.08), Vector3::z()),
    ];
    let depths: Vec<_> = cams.iter().map(|c| render_depth(&mesh, c)).collect();
    let set = ingest(&[full_frame(1, w, h), full_frame(2, w, h)], 0.7).unwrap();
    let labels = set.aligned_labels(&cams).unwrap();
    let lifted = lift_masks(&mesh, &cams, &depths, &labels, set.masks.len()).unwrap();
    assert!(lifted.sets[0].contains(0));
    assert!(!lifted.sets[1].contains(0));
    assert!(lifted.sets[1].contains(1) || lifted.sets[1].contains(2));
    let total: usize = lifted.sets.iter().map(|s| s.len()).sum();
    assert_eq!(total, lifted.incidence_count());
    assert_eq!(lifted.masks_of(0), &[(1, 0)]);
}

#[test]
fn background_view_lifts_nothing() {
    let mesh = TriMesh::new(
        vec![Point3::new(-1.0, -1.0, 0.0), Point3::new(1.0, -1.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let cam = CameraView::look_along(0, (16, 16), 10.0, Point3::new(0.0, 0.0, 10.0), -Vector3::z(), Vector3::y());
    let depths = vec![render_depth(&mesh, &cam)];
    let set = ingest(&[ImageMasks::background(0, 16, 16)], 0.7).unwrap();
    let labels = set.aligned_labels(std::slice::from_ref(&cam)).unwrap();
    let lifted = lift_masks(&mesh, std::slice::from_ref(&cam), &depths, &labels, set.masks.len()).unwrap();
    assert!(lifted.sets.is_empty());
    assert_eq!(lifted.incidence_count(), 0);
}
