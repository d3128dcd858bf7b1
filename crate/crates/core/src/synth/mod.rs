//! Procedural urban scenes: box buildings on a ground grid, virtual cameras,
//! and ground-truth roof masks rendered through the module's rasterizer.

mod builder;
mod corrupt;

use std::path::Path;

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{render, save_cameras, CameraView, NO_TRIANGLE};
use crate::error::{write_json, Error, Result};
use crate::eval::{instances_from_labels, save_gt};
use crate::masks::{write_image_masks, ImageMasks};
use crate::mesh::{save_mesh, TriMesh};

pub use builder::{ticks, ticks_with, Builder, Tag};
pub use corrupt::{corrupt_masks, corrupt_view, CorruptedView, CorruptionSpec};

const MAX_ATTEMPTS: usize = 1000;
/// Gallery front face sits this far behind the +y eave.
const GALLERY_INSET: f64 = 0.3;
/// Seed offset of the vertex-noise stream.
const NOISE_STREAM: u64 = 0x6e6f697365;
/// Gallery end caps are recessed this far from the side walls.
const CAP_STEP: f64 = 0.1;
/// Width of the outermost roof row, below the profile merge tolerance.
const EDGE_ROW: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoofStyle {
    #[default]
    Flat,
    Gabled,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub buildings: usize,
    pub attached_fraction: f64,
    pub footprint_min: f64,
    pub footprint_max: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub roof_style: RoofStyle,
    pub roof_pitch_deg: f64,
    pub ground_extent: f64,
    pub altitude_offset: f64,
    pub gsd: f64,
    pub image_size: u32,
    /// Ground area per random viewpoint (m²).
    pub viewpoint_area: f64,
    pub oblique_pitch_deg: f64,
    pub overhang: f64,
    pub fascia: f64,
    /// Soffit rise (m) from wall top to eave; 0 gives flat soffits.
    pub soffit_rise: f64,
    /// Half-width (m) of the uniform per-coordinate vertex jitter.
    pub vertex_noise: f64,
    /// Minimum clear distance between roofs of separate units (m).
    pub gap: f64,
    pub margin: f64,
    pub rotation_deg: f64,
    /// Give every building a corbelled gallery on its +y side.
    pub balcony: bool,
    pub corruption: CorruptionSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            buildings: 20,
            attached_fraction: 0.5,
            footprint_min: 8.0,
            footprint_max: 16.0,
            height_min: 6.0,
            height_max: 18.0,
            roof_style: RoofStyle::Flat,
            roof_pitch_deg: 25.0,
            ground_extent: 120.0,
            altitude_offset: 70.0,
            gsd: 0.15,
            image_size: 1024,
            viewpoint_area: 2400.0,
            oblique_pitch_deg: 45.0,
            overhang: 0.8,
            fascia: 0.3,
            soffit_rise: 0.0,
            vertex_noise: 0.0,
            gap: 3.0,
            margin: 6.0,
            rotation_deg: 0.0,
            balcony: false,
            corruption: CorruptionSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.buildings < 1 {
            return bad("building count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.attached_fraction) {
            return bad(format!("attached fraction {} outside [0, 1]", self.attached_fraction));
        }
        if !(self.footprint_min >= 2.0 && self.footprint_min <= self.footprint_max) {
            return bad("footprint range must satisfy 2 <= min <= max".into());
        }
        if self.footprint_min.ceil() > self.footprint_max.floor() {
            return bad("footprint range contains no whole meter".into());
        }
        if !(self.height_min >= 1.0 && self.height_min <= self.height_max) {
            return bad("height range must satisfy 1 <= min <= max".into());
        }
        if self.pairs() > 0 && self.height_max - self.height_min < 5.0 {
            return bad("attached pairs need a height range of at least 5 m".into());
        }
        if self.altitude_offset <= 0.0 || self.gsd <= 0.0 || self.image_size == 0 || self.viewpoint_area <= 0.0 {
            return bad("altitude offset, gsd, image size, and viewpoint area must be positive".into());
        }
        if !(0.0..90.0).contains(&self.oblique_pitch_deg) || !(0.0..80.0).contains(&self.roof_pitch_deg) {
            return bad("pitch angles out of range".into());
        }
        if self.overhang < 0.0 || self.fascia <= 0.0 || self.gap < 0.0 || self.margin < 0.0 {
            return bad("overhang, gap, and margin must be non-negative; fascia positive".into());
        }
        if !(0.0..0.05).contains(&self.vertex_noise) {
            return bad("vertex noise must be in [0, 0.05) m".into());
        }
        if !(0.0..self.fascia).contains(&self.soffit_rise) {
            return bad("soffit rise must be in [0, fascia)".into());
        }
        if self.balcony && self.overhang < GALLERY_INSET + 0.2 {
            return bad(format!("balconies need an overhang of at least {} m", GALLERY_INSET + 0.2));
        }
        self.corruption.validate()
    }

    fn pairs(&self) -> usize {
        if self.balcony {
            return 0;
        }
        ((self.buildings as f64 * self.attached_fraction) / 2.0).round() as usize
    }
}

/// One building's geometry in the unrotated frame.
#[derive(Debug, Clone)]
struct Bldg {
    id: i32,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    /// Wall top height.
    h: f64,
    /// Soffit rise at the eave.
    rise: f64,
    /// Overhang on the -x, +x, -y, +y sides.
    oh: [f64; 4],
    gabled: bool,
    /// Wall on the +x side is hidden by an attached neighbour.
    skip_px: bool,
    skip_nx: bool,
    balcony: bool,
}

impl Bldg {
    fn roof_x(&self) -> (f64, f64) {
        (self.x0 - self.oh[0], self.x1 + self.oh[1])
    }

    fn roof_y(&self) -> (f64, f64) {
        (self.y0 - self.oh[2], self.y1 + self.oh[3])
    }

    fn roof_z(&self, y: f64, fascia: f64, pitch: f64) -> f64 {
        let base = self.h + fascia;
        if !self.gabled {
            return base;
        }
        let (lo, hi) = self.roof_y();
        base + pitch.tan() * (y - lo).min(hi - y).max(0.0)
    }

    fn ys(&self) -> Vec<f64> {
        let (lo, hi) = self.roof_y();
        let mut extra = vec![self.y0, self.y1, lo + EDGE_ROW, hi - EDGE_ROW];
        if self.gabled {
            extra.push(0.5 * (lo + hi));
        }
        if self.balcony {
            extra.push(self.y1 + self.gallery_depth());
        }
        ticks_with(lo, hi, 1.0, &extra)
    }

    fn soffit_z(&self, x: f64, y: f64) -> f64 {
        let frac = |out: f64, oh: f64| if oh > 0.0 { (out / oh).clamp(0.0, 1.0) } else { 0.0 };
        let f = frac(self.x0 - x, self.oh[0])
            .max(frac(x - self.x1, self.oh[1]))
            .max(frac(self.y0 - y, self.oh[2]))
            .max(frac(y - self.y1, self.oh[3]));
        self.h + self.rise * f
    }

    fn gallery_depth(&self) -> f64 {
        self.oh[3] - GALLERY_INSET
    }

    fn xs(&self) -> Vec<f64> {
        let (lo, hi) = self.roof_x();
        ticks_with(lo, hi, 1.0, &[self.x0, self.x1, lo + EDGE_ROW, hi - EDGE_ROW])
    }
}

fn add_building(b: &mut Builder, g: &Bldg, fascia: f64, pitch: f64) {
    let part = Tag::part(g.id);
    let roof_tag = Tag {
        building: g.id,
        roof: true,
        balcony: false,
    };
    let gallery = Tag {
        building: g.id,
        roof: false,
        balcony: true,
    };
    let (xs, ys) = (g.xs(), g.ys());
    let (rx0, rx1) = g.roof_x();
    let (ry0, ry1) = g.roof_y();
    let rz = |y: f64| g.roof_z(y, fascia, pitch);
    let h = g.h;

    b.height_field(&xs, &ys, |_, y| rz(y), |_, _| true, Vector3::z(), roof_tag);

    // Fascia wherever the roof overhangs.
    let along_x = |y: f64| xs.iter().map(|&x| [x, y]).collect::<Vec<_>>();
    let along_y = |x: f64| ys.iter().map(|&y| [x, y]).collect::<Vec<_>>();
    if g.oh[2] > 0.0 {
        b.band(&along_x(ry0), |_| h + g.rise, |p| rz(p[1]), -Vector3::y(), part);
    }
    if g.oh[3] > 0.0 {
        b.band(&along_x(ry1), |_| h + g.rise, |p| rz(p[1]), Vector3::y(), part);
    }
    if g.oh[0] > 0.0 {
        b.band(&along_y(rx0), |_| h + g.rise, |p| rz(p[1]), -Vector3::x(), part);
    }
    if g.oh[1] > 0.0 {
        b.band(&along_y(rx1), |_| h + g.rise, |p| rz(p[1]), Vector3::x(), part);
    }

    // Soffit ring, minus the gallery ceiling.
    let inside_foot = |x: f64, y: f64| x > g.x0 && x < g.x1 && y > g.y0 && y < g.y1;
    let in_gallery = |x: f64, y: f64| g.balcony && x > g.x0 && x < g.x1 && y > g.y1 && y < g.y1 + g.gallery_depth();
    let sz = |x: f64, y: f64| g.soffit_z(x, y);
    b.height_field(
        &xs,
        &ys,
        |x, y| sz(x, y),
        |x, y| !inside_foot(x, y) && !in_gallery(x, y),
        -Vector3::z(),
        part,
    );

    // Walls.
    let fx = ticks(g.x0, g.x1, 1.0);
    let fy = ticks_with(g.y0, g.y1, 1.0, &ys);
    let wall_x = |y: f64| fx.iter().map(|&x| [x, y]).collect::<Vec<_>>();
    let wall_y = |x: f64| fy.iter().map(|&y| [x, y]).collect::<Vec<_>>();
    b.band(&wall_x(g.y0), |_| 0.0, |_| h, -Vector3::y(), part);
    let zb = (0.45 * h * 2.0).round() / 2.0;
    let zf = zb + 0.6;
    if g.balcony {
        b.band(&wall_x(g.y1), |_| 0.0, |_| zb, Vector3::y(), part);
    } else {
        b.band(&wall_x(g.y1), |_| 0.0, |_| h, Vector3::y(), part);
    }
    if !g.skip_nx {
        b.band(&wall_y(g.x0), |_| 0.0, |_| h, -Vector3::x(), part);
        if g.gabled {
            b.band(&along_y(g.x0), |_| h, |p| rz(p[1]), -Vector3::x(), part);
        }
    }
    if !g.skip_px {
        b.band(&wall_y(g.x1), |_| 0.0, |_| h, Vector3::x(), part);
    }
    if g.gabled {
        b.band(&along_y(g.x1), |_| h, |p| rz(p[1]), Vector3::x(), part);
    }

    if g.balcony {
        let yf = g.y1 + g.gallery_depth();
        let under = Vector3::new(0.0, 1.0, -1.0);
        for w in fx.windows(2) {
            let q = [
                Point3::new(w[0], g.y1, zb),
                Point3::new(w[1], g.y1, zb),
                Point3::new(w[1], yf, zf),
                Point3::new(w[0], yf, zf),
            ];
            b.quad(q, under, gallery);
        }
        b.band(&wall_x(yf), |_| zf, |p| g.soffit_z(p[0], p[1]), Vector3::y(), gallery);
        // End caps sit a step inside the side walls and count as wall.
        let rows = h.ceil().max(1.0) as usize;
        let levels: Vec<f64> = std::iter::once(zb)
            .chain((0..=rows).map(|r| h * r as f64 / rows as f64).filter(|&z| z > zb + 1e-9))
            .collect();
        let front_rows = (h - zf).ceil().max(1.0) as usize;
        for (xw, x, out) in [
            (g.x0, g.x0 + CAP_STEP, -Vector3::x()),
            (g.x1, g.x1 - CAP_STEP, Vector3::x()),
        ] {
            b.band(&[[x, g.y1], [xw, g.y1]], |_| zb, |_| h, Vector3::y(), part);
            let back: Vec<_> = levels.iter().map(|&z| Point3::new(x, g.y1, z)).collect();
            let front: Vec<_> = (0..=front_rows)
                .map(|r| Point3::new(x, yf, zf + (h - zf) * r as f64 / front_rows as f64))
                .collect();
            b.zipper(&back, &front, out, part);
        }
    }
}

/// The taller building's +x wall where a narrower, lower neighbour abuts it:
/// full height beside the neighbour, down to its soffit under its overhang,
/// and down to its roof line above it.
fn add_shared_wall(b: &mut Builder, tall: &Bldg, low: &Bldg, fascia: f64, pitch: f64) {
    let x = tall.x1;
    let part = Tag::part(tall.id);
    let (ry0, ry1) = low.roof_y();
    let ys = ticks_with(tall.y0, tall.y1, 1.0, &low.ys());
    let seg = |lo: f64, hi: f64| -> Vec<[f64; 2]> {
        ys.iter().filter(|&&y| y >= lo && y <= hi).map(|&y| [x, y]).collect()
    };
    let h = tall.h;
    b.band(&seg(tall.y0, ry0), |_| 0.0, |_| h, Vector3::x(), part);
    b.band(&seg(ry0, low.y0), |_| 0.0, |p| low.soffit_z(p[0], p[1]), Vector3::x(), part);
    b.band(&seg(ry0, ry1), |p| low.roof_z(p[1], fascia, pitch), |_| h, Vector3::x(), part);
    b.band(&seg(low.y1, ry1), |_| 0.0, |p| low.soffit_z(p[0], p[1]), Vector3::x(), part);
    b.band(&seg(ry1, tall.y1), |_| 0.0, |_| h, Vector3::x(), part);
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub config: SynthConfig,
    pub mesh: TriMesh,
    pub gt_building: Vec<i32>,
    pub gt_roof: Vec<i32>,
    pub balcony: Vec<bool>,
    pub cameras: Vec<CameraView>,
    /// Uncorrupted masks per view.
    pub gt_masks: Vec<ImageMasks>,
    /// Roof id behind each in-image GT mask, per view.
    pub gt_sources: Vec<Vec<Vec<i32>>>,
    /// Masks after the configured corruption.
    pub masks: Vec<ImageMasks>,
    pub provenance: Vec<Vec<Vec<i32>>>,
    /// Attached pairs as (taller id, lower id).
    pub pairs: Vec<(i32, i32)>,
}

fn overlaps(a: [f64; 4], b: [f64; 4], sep: f64) -> bool {
    a[0] < b[2] + sep && b[0] < a[2] + sep && a[1] < b[3] + sep && b[1] < a[3] + sep
}

fn place(cfg: &SynthConfig, rng: &mut ChaCha8Rng, pitch: f64) -> Result<(Vec<Bldg>, Vec<(i32, i32)>)> {
    let pairs = cfg.pairs();
    let singles = cfg.buildings - 2 * pairs.min(cfg.buildings / 2);
    let pairs = pairs.min(cfg.buildings / 2);
    let (fmin, fmax) = (cfg.footprint_min.ceil() as i64, cfg.footprint_max.floor() as i64);
    let e = cfg.ground_extent;
    let max_oh = cfg.overhang;
    let sep = cfg.gap + 2.0 * max_oh;
    let mut placed: Vec<[f64; 4]> = Vec::new();
    let mut out = Vec::new();
    let mut pair_ids = Vec::new();
    let gabled = |rng: &mut ChaCha8Rng| match cfg.roof_style {
        RoofStyle::Flat => false,
        RoofStyle::Gabled => true,
        RoofStyle::Mixed => rng.gen_bool(0.5),
    };
    let oh = [cfg.overhang; 4];
    let inset = cfg.overhang.floor() as i64 + 1;
    for unit in 0..pairs + singles {
        let is_pair = unit < pairs;
        let widths: Vec<i64> = (0..if is_pair { 2 } else { 1 })
            .map(|_| rng.gen_range(fmin..=fmax))
            .collect();
        let lo_depth = if is_pair { fmin.max(2 * inset + 2) } else { fmin };
        if lo_depth > fmax {
            return Err(Error::Synth(format!("attached pairs need footprints of at least {lo_depth} m")));
        }
        let depth = rng.gen_range(lo_depth..=fmax);
        let total: i64 = widths.iter().sum();
        let span = e - 2.0 * cfg.margin;
        if (total as f64) > span || (depth as f64) > span {
            return Err(Error::Synth(format!("footprint {total}x{depth} m does not fit the ground extent")));
        }
        let mut spot = None;
        for _ in 0..MAX_ATTEMPTS {
            let x0 = rng.gen_range(cfg.margin.ceil() as i64..=(e - cfg.margin).floor() as i64 - total);
            let y0 = rng.gen_range(cfg.margin.ceil() as i64..=(e - cfg.margin).floor() as i64 - depth);
            let r = [x0 as f64, y0 as f64, (x0 + total) as f64, (y0 + depth) as f64];
            if placed.iter().all(|p| !overlaps(*p, r, sep)) {
                spot = Some((x0, y0));
                placed.push(r);
                break;
            }
        }
        let Some((x0, y0)) = spot else {
            return Err(Error::Synth(format!(
                "could not place building unit {} of {} after {MAX_ATTEMPTS} attempts",
                unit + 1,
                pairs + singles
            )));
        };
        let style = gabled(rng);
        let (x0, y0) = (x0 as f64, y0 as f64);
        let (y1, id) = (y0 + depth as f64, out.len() as i32);
        if is_pair {
            let delta = rng.gen_range(3.0..=5.0);
            let low = rng.gen_range(cfg.height_min..=cfg.height_max - delta);
            let xm = x0 + widths[0] as f64;
            let b = Bldg {
                id: id + 1,
                x0: xm,
                x1: x0 + total as f64,
                y0: y0 + inset as f64,
                y1: y1 - inset as f64,
                h: low,
                rise: cfg.soffit_rise,
                oh: [0.0, oh[1], oh[2], oh[3]],
                gabled: style,
                skip_px: false,
                skip_nx: true,
                balcony: false,
            };
            // The gap between eave and neighbour ridge stays at delta.
            let ridge = b.roof_z(0.5 * (b.roof_y().0 + b.roof_y().1), cfg.fascia, pitch) - b.h;
            let a = Bldg {
                id,
                x0,
                x1: xm,
                y0,
                y1,
                h: low + ridge + delta,
                rise: cfg.soffit_rise,
                oh,
                gabled: style,
                skip_px: true,
                skip_nx: false,
                balcony: false,
            };
            pair_ids.push((a.id, b.id));
            out.push(a);
            out.push(b);
        } else {
            out.push(Bldg {
                id,
                x0,
                x1: x0 + total as f64,
                y0,
                y1,
                h: rng.gen_range(cfg.height_min..=cfg.height_max),
                rise: cfg.soffit_rise,
                oh,
                gabled: style,
                skip_px: false,
                skip_nx: false,
                balcony: cfg.balcony,
            });
        }
    }
    Ok((out, pair_ids))
}

/// Five cameras per viewpoint: nadir, then obliques facing +y, +x, -y, -x.
fn cameras(cfg: &SynthConfig, rng: &mut ChaCha8Rng, altitude: f64, rotate: &Rotation3<f64>, center: Point3<f64>) -> Vec<CameraView> {
    let e = cfg.ground_extent;
    let n = ((e * e) / cfg.viewpoint_area).round().max(1.0) as usize;
    let g = (n as f64).sqrt().ceil() as usize;
    let cell = e / g as f64;
    let focal = cfg.altitude_offset / cfg.gsd;
    let size = (cfg.image_size, cfg.image_size);
    let pitch = cfg.oblique_pitch_deg.to_radians();
    let mut cams = Vec::with_capacity(5 * n);
    for v in 0..n {
        let (i, j) = (v % g, v / g);
        let x = (i as f64 + rng.gen::<f64>()) * cell;
        let y = (j as f64 + rng.gen::<f64>()) * cell;
        let eye = center + rotate * (Point3::new(x, y, altitude) - center);
        let base = (5 * v) as u32;
        cams.push(CameraView::look_along(base, size, focal, eye, -Vector3::z(), Vector3::y()));
        for (k, (dx, dy)) in [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)].into_iter().enumerate() {
            let f = Vector3::new(dx * pitch.cos(), dy * pitch.cos(), -pitch.sin());
            cams.push(CameraView::look_along(base + 1 + k as u32, size, focal, eye, f, Vector3::z()));
        }
    }
    cams
}

/// Roof masks per view from the rasterizer's triangle buffer; in-image ids
/// follow ascending roof id.
pub fn render_gt_masks(mesh: &TriMesh, cams: &[CameraView], gt_roof: &[i32]) -> (Vec<ImageMasks>, Vec<Vec<Vec<i32>>>) {
    cams.par_iter()
        .map(|cam| {
            let r = render(mesh, cam);
            let roof_at: Vec<i32> = r
                .triangle
                .iter()
                .map(|&t| if t == NO_TRIANGLE { -1 } else { gt_roof[t as usize] })
                .collect();
            let mut present: Vec<i32> = roof_at.iter().copied().filter(|&r| r >= 0).collect();
            present.sort_unstable();
            present.dedup();
            let labels = roof_at
                .iter()
                .map(|&r| if r < 0 { 0 } else { (present.binary_search(&r).unwrap() + 1) as u16 })
                .collect();
            let masks = ImageMasks {
                image_id: cam.image_id,
                width: cam.width,
                height: cam.height,
                labels,
                probs: vec![1.0; present.len()],
            };
            (masks, present.into_iter().map(|r| vec![r]).collect())
        })
        .unzip()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pitch = cfg.roof_pitch_deg.to_radians();
    let (bldgs, pairs) = place(cfg, &mut rng, pitch)?;

    let mut b = Builder::default();
    let e = cfg.ground_extent;
    let grid = ticks(0.0, e, 1.0);
    b.height_field(
        &grid,
        &grid,
        |_, _| 0.0,
        |x, y| !bldgs.iter().any(|g| x > g.x0 && x < g.x1 && y > g.y0 && y < g.y1),
        Vector3::z(),
        Tag::GROUND,
    );
    for g in &bldgs {
        add_building(&mut b, g, cfg.fascia, pitch);
    }
    for &(a, lo) in &pairs {
        add_shared_wall(&mut b, &bldgs[a as usize], &bldgs[lo as usize], cfg.fascia, pitch);
    }
    let (mesh, tags) = b.finish()?;

    let center = Point3::new(e / 2.0, e / 2.0, 0.0);
    let rotate = Rotation3::from_axis_angle(&Vector3::z_axis(), cfg.rotation_deg.to_radians());
    let mesh = if cfg.rotation_deg != 0.0 || cfg.vertex_noise > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NOISE_STREAM);
        let s = cfg.vertex_noise;
        let verts = mesh
            .vertices()
            .iter()
            .map(|p| {
                let q = center + rotate * (p - center);
                if s > 0.0 {
                    q + Vector3::from_fn(|_, _| noise_rng.gen_range(-s..=s))
                } else {
                    q
                }
            })
            .collect();
        let moved = TriMesh::new(verts, mesh.triangles().to_vec())?;
        if moved.num_triangles() != mesh.num_triangles() {
            return Err(Error::Synth("rotation or vertex noise produced degenerate triangles".into()));
        }
        moved
    } else {
        mesh
    };

    let gt_building: Vec<i32> = tags.iter().map(|t| t.building).collect();
    let gt_roof: Vec<i32> = tags.iter().map(|t| if t.roof { t.building } else { -1 }).collect();
    let balcony: Vec<bool> = tags.iter().map(|t| t.balcony).collect();

    let tops: Vec<f64> = bldgs
        .iter()
        .map(|g| g.roof_z(0.5 * (g.roof_y().0 + g.roof_y().1), cfg.fascia, pitch))
        .collect();
    let mean_top = tops.iter().sum::<f64>() / tops.len() as f64;
    let altitude = mean_top + cfg.altitude_offset;
    let max_top = tops.iter().copied().fold(0.0, f64::max);
    if altitude <= max_top {
        return Err(Error::Synth(format!(
            "camera altitude {altitude:.1} m is not above the tallest roof {max_top:.1} m"
        )));
    }
    let cams = cameras(cfg, &mut rng, altitude, &rotate, center);
    let (gt_masks, gt_sources) = render_gt_masks(&mesh, &cams, &gt_roof);
    let corrupted = corrupt_masks(&gt_masks, &gt_sources, &cfg.corruption, cfg.seed)?;
    let (masks, provenance) = corrupted.into_iter().map(|c| (c.masks, c.provenance)).unzip();
    Ok(SynthScene {
        config: cfg.clone(),
        mesh,
        gt_building,
        gt_roof,
        balcony,
        cameras: cams,
        gt_masks,
        gt_sources,
        masks,
        provenance,
        pairs,
    })
}

#[derive(Serialize)]
struct ProvenanceRecord<'a> {
    image_id: u32,
    sources: &'a [Vec<i32>],
}

impl SynthScene {
    pub fn num_buildings(&self) -> usize {
        instances_from_labels(&self.mesh, &self.gt_building).len()
    }

    /// Write `scene.ply`, `cameras.json`, `gt.json`, `gt_roofs.json`,
    /// `masks/`, and `config.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let masks_dir = dir.join("masks");
        std::fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
        save_mesh(&dir.join("scene.ply"), &self.mesh, None)?;
        save_cameras(&dir.join("cameras.json"), &self.cameras)?;
        save_gt(&dir.join("gt.json"), &instances_from_labels(&self.mesh, &self.gt_building))?;
        save_gt(&dir.join("gt_roofs.json"), &instances_from_labels(&self.mesh, &self.gt_roof))?;
        self.masks
            .par_iter()
            .map(|m| write_image_masks(&masks_dir, m))
            .collect::<Result<Vec<_>>>()?;
        let prov: Vec<ProvenanceRecord> = self
            .masks
            .iter()
            .zip(&self.provenance)
            .map(|(m, p)| ProvenanceRecord {
                image_id: m.image_id,
                sources: p,
            })
            .collect();
        write_json(&dir.join("mask_provenance.json"), &prov)?;
        if self.balcony.iter().any(|&b| b) {
            let ids: Vec<u32> = (0..self.balcony.len() as u32).filter(|&t| self.balcony[t as usize]).collect();
            write_json(&dir.join("balcony.json"), &ids)?;
        }
        write_json(&dir.join("config.json"), &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            buildings: 4,
            attached_fraction: 1.0,
            ground_extent: 60.0,
            image_size: 128,
            gsd: 0.4,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.mesh.triangles(), b.mesh.triangles());
        assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn attached_pairs_share_wall_vertices() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.pairs.len(), 2);
        for &(a, b) in &s.pairs {
            let verts = |id: i32| {
                let mut v: Vec<u32> = (0..s.mesh.num_triangles())
                    .filter(|&t| s.gt_building[t] == id)
                    .flat_map(|t| s.mesh.triangles()[t])
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let (va, vb) = (verts(a), verts(b));
            let shared = va.iter().filter(|v| vb.binary_search(v).is_ok()).count();
            assert!(shared > 4, "pair ({a}, {b}) shares {shared} vertices");
        }
        assert_eq!(s.num_buildings(), 4);
    }

    #[test]
    fn five_cameras_per_viewpoint() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.cameras.len() % 5, 0);
        for c in s.cameras.chunks(5) {
            let f: Vec<Vector3<f64>> = c.iter().map(|c| c.rotation.row(2).transpose()).collect();
            assert!((f[0].z + 1.0).abs() < 1e-12);
            for k in 1..5 {
                let pitch = (-f[k].z).asin().to_degrees();
                assert!((pitch - 45.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn crowded_extent_fails() {
        let cfg = SynthConfig {
            buildings: 40,
            ground_extent: 40.0,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Synth(_))));
    }

    #[test]
    fn soffit_rise_and_noise_keep_topology() {
        let base = generate(&small()).unwrap();
        let cfg = SynthConfig {
            soffit_rise: 0.15,
            vertex_noise: 0.01,
            ..small()
        };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.mesh.triangles(), base.mesh.triangles());
        let moved = s
            .mesh
            .vertices()
            .iter()
            .zip(base.mesh.vertices())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(moved > 0.0 && moved <= 0.15 + 0.01 * 3f64.sqrt() + 1e-9);
        assert!(generate(&SynthConfig { soffit_rise: 0.3, ..small() }).is_err());
        assert!(generate(&SynthConfig { vertex_noise: 0.1, ..small() }).is_err());
    }
}
