//! Pinhole cameras, a software z-buffer and depth-test visibility.
//!
//! Conventions: the camera looks down +Z of its own frame, X goes right and
//! Y goes down the image, the image origin is the top-left corner, and pixel
//! centers sit at integer + 0.5. A projected point belongs to pixel
//! (floor(u), floor(v)).

mod raster;

use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};

pub use raster::{
    export_rgbh, read_grid, render, render_depth, render_heightmap, write_grid, DepthMap,
    GridKind, HeightMap, Render, NO_TRIANGLE,
};

/// Camera-frame depths at or below this are behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation (camera frame, meters).
    pub translation: Vector3<f64>,
}

/// Pixel coordinates and camera-frame depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    /// Containing pixel, if inside a `width`×`height` frame.
    pub fn pixel(&self, width: u32, height: u32) -> Option<(u32, u32)> {
        let (x, y) = (self.u.floor(), self.v.floor());
        if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            Some((x as u32, y as u32))
        } else {
            None
        }
    }
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        let id = self.image_id;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera(format!("camera {id}: empty image size")));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Camera(format!("camera {id}: focal lengths must be positive")));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).abs().max() > 1e-6 {
            return Err(Error::Camera(format!("camera {id}: rotation is not orthonormal")));
        }
        if !self.translation.iter().chain(self.rotation.iter()).all(|v| v.is_finite()) {
            return Err(Error::Camera(format!("camera {id}: non-finite pose")));
        }
        Ok(())
    }

    /// Camera with its center at `eye` looking along `forward`, with image
    /// "up" as close to `up_hint` as the forward direction allows.
    pub fn look_along(
        image_id: u32,
        (width, height): (u32, u32),
        focal: f64,
        eye: Point3<f64>,
        forward: Vector3<f64>,
        up_hint: Vector3<f64>,
    ) -> Self {
        let f = forward.normalize();
        // Image down is -up; right = down × forward keeps the frame right-handed.
        let mut right = f.cross(&up_hint);
        if right.norm() < 1e-9 {
            right = f.cross(&Vector3::x()).cross(&f);
        }
        let right = right.normalize();
        let down = f.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]);
        let translation = -(rotation * eye.coords);
        Self {
            image_id,
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
        }
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// Project a world point; `None` when it lies behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<Projection> {
        let c = self.to_camera(p);
        self.project_camera(&c)
    }

    pub(crate) fn project_camera(&self, c: &Vector3<f64>) -> Option<Projection> {
        if c.z <= MIN_DEPTH {
            return None;
        }
        Some(Projection {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        })
    }

    /// World point at camera-frame depth `depth` along the ray through (u, v).
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        let c = Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        Point3::from(self.rotation.transpose() * (c - self.translation))
    }
}

/// Depth-test slack: a point passes if its depth is at most
/// `stored * (1 + relative) + absolute`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthBias {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for DepthBias {
    fn default() -> Self {
        Self {
            relative: 1e-3,
            absolute: 1e-3,
        }
    }
}

/// Is `p` in frame and not occluded according to `depth`?
pub fn visible(cam: &CameraView, depth: &DepthMap, p: &Point3<f64>) -> bool {
    visible_with_bias(cam, depth, p, DepthBias::default())
}

pub fn visible_with_bias(cam: &CameraView, depth: &DepthMap, p: &Point3<f64>, bias: DepthBias) -> bool {
    visible_pixel(cam, depth, p, bias).is_some()
}

/// The pixel `p` is seen in, if it passes the frame and depth tests.
pub fn visible_pixel(
    cam: &CameraView,
    depth: &DepthMap,
    p: &Point3<f64>,
    bias: DepthBias,
) -> Option<(u32, u32)> {
    let proj = cam.project(p)?;
    let (x, y) = proj.pixel(cam.width, cam.height)?;
    let stored = depth.get(x, y) as f64;
    (proj.depth <= stored * (1.0 + bias.relative) + bias.absolute).then_some((x, y))
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    image_id: u32,
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl From<&CameraView> for CameraRecord {
    fn from(c: &CameraView) -> Self {
        let m = &c.rotation;
        Self {
            image_id: c.image_id,
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            r: [
                m[(0, 0)], m[(0, 1)], m[(0, 2)],
                m[(1, 0)], m[(1, 1)], m[(1, 2)],
                m[(2, 0)], m[(2, 1)], m[(2, 2)],
            ],
            t: [c.translation.x, c.translation.y, c.translation.z],
        }
    }
}

impl From<CameraRecord> for CameraView {
    fn from(r: CameraRecord) -> Self {
        Self {
            image_id: r.image_id,
            width: r.width,
            height: r.height,
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            rotation: Matrix3::from_row_slice(&r.r),
            translation: Vector3::from_row_slice(&r.t),
        }
    }
}

/// Read and validate a `cameras.json` array.
pub fn load_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let records: Vec<CameraRecord> = read_json(path)?;
    let cams: Vec<CameraView> = records.into_iter().map(CameraView::from).collect();
    let mut seen = std::collections::BTreeSet::new();
    for c in &cams {
        c.validate()?;
        if !seen.insert(c.image_id) {
            return Err(Error::Camera(format!("duplicate image_id {}", c.image_id)));
        }
    }
    Ok(cams)
}

pub fn save_cameras(path: &Path, cams: &[CameraView]) -> Result<()> {
    let records: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    write_json(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn identity_cam() -> CameraView {
        CameraView {
            image_id: 0,
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[test]
    fn projection_examples() {
        let cam = identity_cam();
        let p = cam.project(&Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 2.0));
        let p = cam.project(&Point3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (100.0, 50.0, 2.0));
        assert!(cam.project(&Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(cam.project(&Point3::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn look_along_builds_orthonormal_frames() {
        let eye = Point3::new(10.0, 20.0, 80.0);
        for fwd in [
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(1.0, 0.0, -1.0),
            Vector3::new(0.0, -1.0, -1.0),
        ] {
            let cam = CameraView::look_along(3, (64, 48), 50.0, eye, fwd, Vector3::y());
            cam.validate().unwrap();
            assert!((cam.rotation.determinant() - 1.0).abs() < 1e-12);
            assert!((cam.center() - eye).norm() < 1e-9);
            let ahead = eye + fwd.normalize() * 5.0;
            let p = cam.project(&ahead).unwrap();
            assert!((p.u - 32.0).abs() < 1e-9 && (p.v - 24.0).abs() < 1e-9);
            assert!((p.depth - 5.0).abs() < 1e-9);
        }
        // Nadir: image up is the hint direction.
        let cam = CameraView::look_along(0, (64, 64), 50.0, eye, -Vector3::z(), Vector3::y());
        let north = cam.project(&Point3::new(10.0, 25.0, 0.0)).unwrap();
        assert!(north.v < 32.0);
    }

    #[test]
    fn camera_json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.json");
        let cam = CameraView::look_along(7, (32, 32), 40.0, Point3::new(1.0, 2.0, 30.0), Vector3::new(0.3, 0.1, -1.0), Vector3::y());
        save_cameras(&path, &[cam.clone()]).unwrap();
        let back = load_cameras(&path).unwrap();
        assert_eq!(back[0].image_id, 7);
        assert!((back[0].rotation - cam.rotation).abs().max() < 1e-15);

        let mut bad = cam.clone();
        bad.rotation[(0, 0)] = 2.0;
        save_cameras(&path, &[bad]).unwrap();
        assert!(load_cameras(&path).is_err());
        std::fs::write(&path, "[{\"image_id\": 1}]").unwrap();
        assert!(load_cameras(&path).is_err());
    }
}
