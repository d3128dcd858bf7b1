//! Scanline-free edge-function rasterizer with perspective-correct depth.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::CameraView;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Marker in the triangle-id buffer for pixels no triangle covers.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Geometry closer than this to the camera plane is clipped away.
const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    /// Row-major camera-frame depths; `f32::INFINITY` where nothing was drawn.
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn empty(image_id: u32, width: u32, height: u32) -> Self {
        Self {
            image_id,
            width,
            height,
            data: vec![f32::INFINITY; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    /// Normalized heights in [0, 1]; -1 for background.
    pub data: Vec<f32>,
    pub z_min: f64,
    pub z_max: f64,
}

/// Depth buffer plus the index of the triangle that won each pixel.
#[derive(Debug, Clone)]
pub struct Render {
    pub depth: DepthMap,
    pub triangle: Vec<u32>,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    cam: Vector3<f64>,
}

/// Rasterize `mesh` into `cam`, keeping the nearest surface per pixel.
///
/// Back faces are drawn. Triangles are submitted in ascending index order
/// and only strictly nearer fragments overwrite, so equal-depth ties go to
/// the lower triangle index.
pub fn render(mesh: &TriMesh, cam: &CameraView) -> Render {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut tbuf = vec![NO_TRIANGLE; w * h];
    let cam_pts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| cam.to_camera(p)).collect();

    let mut poly: Vec<ClipVertex> = Vec::with_capacity(4);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = tri.map(|i| cam_pts[i as usize]);
        let in_front = v.iter().filter(|p| p.z > NEAR_PLANE).count();
        if in_front == 0 {
            continue;
        }
        if in_front == 3 {
            raster_triangle(cam, [v[0], v[1], v[2]], t as u32, &mut zbuf, &mut tbuf);
            continue;
        }
        poly.clear();
        for k in 0..3 {
            let a = v[k];
            let b = v[(k + 1) % 3];
            let a_in = a.z > NEAR_PLANE;
            let b_in = b.z > NEAR_PLANE;
            if a_in {
                poly.push(ClipVertex { cam: a });
            }
            if a_in != b_in {
                let s = (NEAR_PLANE - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * s;
                p.z = NEAR_PLANE;
                poly.push(ClipVertex { cam: p });
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            raster_triangle(
                cam,
                [poly[0].cam, poly[k].cam, poly[k + 1].cam],
                t as u32,
                &mut zbuf,
                &mut tbuf,
            );
        }
    }

    Render {
        depth: DepthMap {
            image_id: cam.image_id,
            width: cam.width,
            height: cam.height,
            data: zbuf.iter().map(|&z| z as f32).collect(),
        },
        triangle: tbuf,
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

fn raster_triangle(
    cam: &CameraView,
    v: [Vector3<f64>; 3],
    tri: u32,
    zbuf: &mut [f64],
    tbuf: &mut [u32],
) {
    let (w, h) = (cam.width as i64, cam.height as i64);
    let mut sx = [0.0f64; 3];
    let mut sy = [0.0f64; 3];
    let mut inv_z = [0.0f64; 3];
    for k in 0..3 {
        inv_z[k] = 1.0 / v[k].z;
        sx[k] = cam.fx * v[k].x * inv_z[k] + cam.cx;
        sy[k] = cam.fy * v[k].y * inv_z[k] + cam.cy;
    }
    let area = edge(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = sx.iter().copied().fold(f64::INFINITY, f64::min);
    let max_x = sx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_y = sy.iter().copied().fold(f64::INFINITY, f64::min);
    let max_y = sy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Pixel (x, y) has center (x + 0.5, y + 0.5).
    let x0 = ((min_x - 0.5).ceil() as i64).max(0);
    let x1 = ((max_x - 0.5).floor() as i64).min(w - 1);
    let y0 = ((min_y - 0.5).ceil() as i64).max(0);
    let y1 = ((max_y - 0.5).floor() as i64).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let inv_area = 1.0 / area;
    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        let row = y as usize * w as usize;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let b0 = edge(sx[1], sy[1], sx[2], sy[2], px, py) * inv_area;
            let b1 = edge(sx[2], sy[2], sx[0], sy[0], px, py) * inv_area;
            let b2 = edge(sx[0], sy[0], sx[1], sy[1], px, py) * inv_area;
            if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                continue;
            }
            let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
            let idx = row + x as usize;
            if z < zbuf[idx] {
                zbuf[idx] = z;
                tbuf[idx] = tri;
            }
        }
    }
}

pub fn render_depth(mesh: &TriMesh, cam: &CameraView) -> DepthMap {
    render(mesh, cam).depth
}

/// World-Z of the nearest surface per pixel, min-max normalized over the
/// covered pixels of this image.
pub fn render_heightmap(mesh: &TriMesh, cam: &CameraView) -> HeightMap {
    let depth = render_depth(mesh, cam);
    heightmap_from_depth(cam, &depth)
}

pub(crate) fn heightmap_from_depth(cam: &CameraView, depth: &DepthMap) -> HeightMap {
    let w = cam.width as usize;
    let mut z = vec![f64::NAN; depth.data.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &d) in depth.data.iter().enumerate() {
        if d.is_finite() {
            let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let wz = cam.back_project(x, y, d as f64).z;
            z[i] = wz;
            lo = lo.min(wz);
            hi = hi.max(wz);
        }
    }
    let range = hi - lo;
    let data = z
        .iter()
        .map(|&wz| {
            if wz.is_nan() {
                -1.0
            } else if range < 1e-6 {
                0.0
            } else {
                ((wz - lo) / range).clamp(0.0, 1.0) as f32
            }
        })
        .collect();
    HeightMap {
        image_id: cam.image_id,
        width: cam.width,
        height: cam.height,
        data,
        z_min: if lo.is_finite() { lo } else { 0.0 },
        z_max: if hi.is_finite() { hi } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Depth,
    Height,
}

impl GridKind {
    fn magic(self) -> &'static [u8; 4] {
        match self {
            GridKind::Depth => b"DMAP",
            GridKind::Height => b"HMAP",
        }
    }
}

/// Dump a float grid: 16-byte header (magic, u32 width, u32 height,
/// u32 reserved) followed by row-major little-endian f32 values.
pub fn write_grid(path: &Path, kind: GridKind, width: u32, height: u32, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + data.len() * 4);
    buf.extend_from_slice(kind.magic());
    buf.extend_from_slice(&width.to_le_bytes());
    buf.extend_from_slice(&height.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<(GridKind, u32, u32, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::parse(path, "grid header truncated"));
    }
    let kind = match &bytes[0..4] {
        b"DMAP" => GridKind::Depth,
        b"HMAP" => GridKind::Height,
        _ => return Err(Error::parse(path, "bad grid magic")),
    };
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (w, h) = (u32_at(4), u32_at(8));
    let n = w as usize * h as usize;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::parse(path, "grid payload size does not match header"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((kind, w, h, data))
}

/// Write `rgb` plus the heightmap as a fourth 16-bit channel (PNG).
/// Background pixels get height 0.
pub fn export_rgbh(rgb_path: &Path, height: &HeightMap, out: &Path) -> Result<()> {
    let img = image::open(rgb_path)
        .map_err(|source| Error::Image {
            path: rgb_path.to_path_buf(),
            source,
        })?
        .to_rgb16();
    if img.width() != height.width || img.height() != height.height {
        return Err(Error::Dimension(format!(
            "RGB image is {}x{}, heightmap is {}x{}",
            img.width(),
            img.height(),
            height.width,
            height.height
        )));
    }
    let mut rgba = image::ImageBuffer::<image::Rgba<u16>, Vec<u16>>::new(img.width(), img.height());
    for (x, y, px) in rgba.enumerate_pixels_mut() {
        let c = img.get_pixel(x, y);
        let hv = height.data[(y * height.width + x) as usize];
        let hq = if hv < 0.0 { 0 } else { (hv as f64 * 65535.0).round() as u16 };
        *px = image::Rgba([c[0], c[1], c[2], hq]);
    }
    rgba.save(out).map_err(|source| Error::Image {
        path: out.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::tests::identity_cam;
    use nalgebra::Point3;

    fn tri_mesh(tris: &[[[f64; 3]; 3]]) -> TriMesh {
        let mut v = Vec::new();
        let mut t = Vec::new();
        for tri in tris {
            let base = v.len() as u32;
            for p in tri {
                v.push(Point3::new(p[0], p[1], p[2]));
            }
            t.push([base, base + 1, base + 2]);
        }
        TriMesh::new(v, t).unwrap()
    }

    #[test]
    fn empty_mesh_renders_infinity() {
        let mesh = TriMesh::new(vec![], vec![]).unwrap();
        let d = render_depth(&mesh, &identity_cam());
        assert!(d.data.iter().all(|v| v.is_infinite()));
        let hm = render_heightmap(&mesh, &identity_cam());
        assert!(hm.data.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn fronto_parallel_depth_and_min_rule() {
        let big = |z: f64| [[-5.0, -5.0, z], [5.0, -5.0, z], [0.0, 5.0, z]];
        let d = render_depth(&tri_mesh(&[big(3.0)]), &identity_cam());
        assert!((d.get(50, 50) - 3.0).abs() <= 1e-4);
        let d = render_depth(&tri_mesh(&[big(3.0), big(2.0)]), &identity_cam());
        assert_eq!(d.get(50, 50), 2.0);
        let r = render(&tri_mesh(&[big(2.0), big(2.0)]), &identity_cam());
        assert_eq!(r.triangle[50 * 100 + 50], 0);
    }

    #[test]
    fn near_plane_clipping_keeps_the_visible_part() {
        // Triangle crossing the camera plane: only the z > 0 part is drawn.
        let mesh = tri_mesh(&[[[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, 0.0, 3.0]]]);
        let cam = CameraView {
            rotation: nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
            ..identity_cam()
        };
        // Rotated so the triangle's plane is seen from above; just must not panic
        // and must only produce positive depths.
        let d = render_depth(&mesh, &cam);
        assert!(d.data.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn heightmap_ground_and_roof() {
        // Camera looking straight down from z=50.
        let cam = CameraView::look_along(
            0,
            (64, 64),
            32.0,
            Point3::new(0.0, 0.0, 50.0),
            -Vector3::z(),
            Vector3::y(),
        );
        let ground = [
            [[-100.0, -100.0, 0.0], [100.0, -100.0, 0.0], [100.0, 100.0, 0.0]],
            [[-100.0, -100.0, 0.0], [100.0, 100.0, 0.0], [-100.0, 100.0, 0.0]],
        ];
        let hm = render_heightmap(&tri_mesh(&ground), &cam);
        assert!(hm.data.iter().all(|&v| v == 0.0));

        let mut tris = ground.to_vec();
        tris.push([[-5.0, -5.0, 10.0], [5.0, -5.0, 10.0], [5.0, 5.0, 10.0]]);
        tris.push([[-5.0, -5.0, 10.0], [5.0, 5.0, 10.0], [-5.0, 5.0, 10.0]]);
        let hm = render_heightmap(&tri_mesh(&tris), &cam);
        assert!((hm.z_max - 10.0).abs() < 1e-4 && hm.z_min.abs() < 1e-4);
        assert_eq!(hm.data[32 * 64 + 32], 1.0);
        assert_eq!(hm.data[1 * 64 + 1], 0.0);
    }

    #[test]
    fn grid_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.dmap");
        write_grid(&p, GridKind::Depth, 2, 1, &[1.5, f32::INFINITY]).unwrap();
        let (k, w, h, data) = read_grid(&p).unwrap();
        assert_eq!((k, w, h), (GridKind::Depth, 2, 1));
        assert_eq!(data, vec![1.5, f32::INFINITY]);
        assert_eq!(std::fs::read(&p).unwrap().len(), 16 + 8);
    }
}
