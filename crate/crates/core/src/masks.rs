//! Per-image roof instance masks: file ingestion, label images, and lifting
//! each mask to the set of mesh triangles it covers.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{visible_pixel, CameraView, DepthBias, DepthMap};
use crate::error::{read_json, write_json, Error, Result};
use crate::mesh::{TriMesh, TriangleSet};

/// Default ingestion threshold on mask probability.
pub const DEFAULT_MIN_PROB: f64 = 0.7;

/// One horizontal run of mask pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub y: u32,
    pub x: u32,
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMask {
    /// Sequential index across all views, in (image_id, in-image id) order.
    pub index: usize,
    pub image_id: u32,
    pub in_image_id: u32,
    pub prob: f64,
    pub runs: Vec<Run>,
}

impl LocalMask {
    pub fn pixel_count(&self) -> usize {
        self.runs.iter().map(|r| r.len as usize).sum()
    }
}

/// Raw per-image masks as stored on disk: a 16-bit label image where value
/// k > 0 is in-image mask k-1, plus one probability per in-image id.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMasks {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
    pub probs: Vec<f64>,
}

impl ImageMasks {
    pub fn background(image_id: u32, width: u32, height: u32) -> Self {
        Self {
            image_id,
            width,
            height,
            labels: vec![0; width as usize * height as usize],
            probs: Vec::new(),
        }
    }
}

/// Per-pixel local-mask index for one view (-1 = background).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLabelImage {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    labels: Vec<u16>,
    lut: Vec<i32>,
}

impl MaskLabelImage {
    pub fn background(image_id: u32, width: u32, height: u32) -> Self {
        Self {
            image_id,
            width,
            height,
            labels: vec![0; width as usize * height as usize],
            lut: vec![-1],
        }
    }

    /// Local-mask index at pixel (x, y), or -1.
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> i32 {
        self.lut[self.labels[(y * self.width + x) as usize] as usize]
    }
}

/// All ingested local masks plus their label images, ordered by image id.
#[derive(Debug, Clone, Default)]
pub struct MaskSet {
    pub masks: Vec<LocalMask>,
    pub labels: Vec<MaskLabelImage>,
}

impl MaskSet {
    pub fn probs(&self) -> Vec<f64> {
        self.masks.iter().map(|m| m.prob).collect()
    }

    /// Label images aligned with `cams`; views without masks are background.
    pub fn aligned_labels(&self, cams: &[CameraView]) -> Result<Vec<MaskLabelImage>> {
        cams.iter()
            .map(|c| match self.labels.iter().find(|l| l.image_id == c.image_id) {
                Some(l) if l.width == c.width && l.height == c.height => Ok(l.clone()),
                Some(l) => Err(Error::Dimension(format!(
                    "mask image {} is {}x{} but camera is {}x{}",
                    c.image_id, l.width, l.height, c.width, c.height
                ))),
                None => Ok(MaskLabelImage::background(c.image_id, c.width, c.height)),
            })
            .collect()
    }
}

/// Filter by probability and assign global indices.
pub fn ingest(images: &[ImageMasks], min_prob: f64) -> Result<MaskSet> {
    let mut order: Vec<&ImageMasks> = images.iter().collect();
    order.sort_by_key(|m| m.image_id);
    let mut set = MaskSet::default();
    for img in order {
        let n = img.width as usize * img.height as usize;
        if img.labels.len() != n {
            return Err(Error::Dimension(format!(
                "image {}: {} labels for {}x{}",
                img.image_id,
                img.labels.len(),
                img.width,
                img.height
            )));
        }
        for (id, &p) in img.probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Masks(format!(
                    "image {}: mask {id} probability {p} outside [0, 1]",
                    img.image_id
                )));
            }
        }
        let max_label = img.labels.iter().copied().max().unwrap_or(0) as usize;
        if max_label > img.probs.len() {
            return Err(Error::Masks(format!(
                "image {}: label {} has no probability entry",
                img.image_id, max_label
            )));
        }
        let mut runs: Vec<Vec<Run>> = vec![Vec::new(); img.probs.len()];
        for y in 0..img.height {
            let row = &img.labels[(y * img.width) as usize..((y + 1) * img.width) as usize];
            let mut x = 0usize;
            while x < row.len() {
                let l = row[x];
                let start = x;
                while x < row.len() && row[x] == l {
                    x += 1;
                }
                if l > 0 {
                    runs[l as usize - 1].push(Run {
                        y,
                        x: start as u32,
                        len: (x - start) as u32,
                    });
                }
            }
        }
        let mut lut = vec![-1i32; img.probs.len() + 1];
        for (id, r) in runs.into_iter().enumerate() {
            let prob = img.probs[id];
            if r.is_empty() || prob < min_prob {
                continue;
            }
            let index = set.masks.len();
            lut[id + 1] = index as i32;
            set.masks.push(LocalMask {
                index,
                image_id: img.image_id,
                in_image_id: id as u32,
                prob,
                runs: r,
            });
        }
        set.labels.push(MaskLabelImage {
            image_id: img.image_id,
            width: img.width,
            height: img.height,
            labels: img.labels.clone(),
            lut,
        });
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct ProbRecord {
    id: u32,
    prob: f64,
}

fn mask_paths(dir: &Path, image_id: u32) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{image_id}.png")),
        dir.join(format!("{image_id}.json")),
    )
}

pub fn write_image_masks(dir: &Path, m: &ImageMasks) -> Result<()> {
    let (png, json) = mask_paths(dir, m.image_id);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(m.width, m.height, m.labels.clone())
            .ok_or_else(|| Error::Dimension("label buffer size".into()))?;
    img.save(&png).map_err(|source| Error::Image {
        path: png.clone(),
        source,
    })?;
    let records: Vec<ProbRecord> = m
        .probs
        .iter()
        .enumerate()
        .map(|(id, &prob)| ProbRecord { id: id as u32, prob })
        .collect();
    write_json(&json, &records)
}

pub fn read_image_masks(dir: &Path, image_id: u32) -> Result<ImageMasks> {
    let (png, json) = mask_paths(dir, image_id);
    if !json.exists() {
        return Err(Error::Masks(format!("missing sidecar {}", json.display())));
    }
    let records: Vec<ProbRecord> = read_json(&json)?;
    let img = image::open(&png)
        .map_err(|source| Error::Image {
            path: png.clone(),
            source,
        })?
        .to_luma16();
    let n = records.iter().map(|r| r.id as usize + 1).max().unwrap_or(0);
    let mut probs = vec![f64::NAN; n];
    for r in &records {
        probs[r.id as usize] = r.prob;
    }
    let (width, height) = img.dimensions();
    let labels = img.into_raw();
    for &l in &labels {
        if l > 0 && probs.get(l as usize - 1).is_none_or(|p| p.is_nan()) {
            return Err(Error::Masks(format!(
                "{}: label {} (mask id {}) has no sidecar entry",
                png.display(),
                l,
                l - 1
            )));
        }
    }
    // Ids without pixels and without a record are harmless placeholders.
    for p in &mut probs {
        if p.is_nan() {
            *p = 0.0;
        }
    }
    Ok(ImageMasks {
        image_id,
        width,
        height,
        labels,
        probs,
    })
}

/// Read every `<image_id>.png` + `<image_id>.json` pair in `dir`.
pub fn load_masks(dir: &Path, min_prob: f64) -> Result<MaskSet> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(id) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u32>().ok())
            {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    let images = ids
        .into_iter()
        .map(|id| read_image_masks(dir, id))
        .collect::<Result<Vec<_>>>()?;
    ingest(&images, min_prob)
}

/// Triangle sets S_i per local mask, plus the inverse incidence map.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTriangleSets {
    pub sets: Vec<TriangleSet>,
    /// CSR offsets into `entries`, one slot per triangle (+1).
    offsets: Vec<u32>,
    /// (image_id, local mask index), ascending view order per triangle.
    entries: Vec<(u32, u32)>,
}

impl MaskTriangleSets {
    /// Rebuild from per-mask sets; `mask_images[i]` is mask i's image id.
    pub fn from_sets(mesh: &TriMesh, sets: Vec<TriangleSet>, mask_images: &[u32]) -> Result<Self> {
        if sets.len() != mask_images.len() {
            return Err(Error::Dimension(format!(
                "{} triangle sets for {} masks",
                sets.len(),
                mask_images.len()
            )));
        }
        let nt = mesh.num_triangles();
        let mut counts = vec![0u32; nt + 1];
        for s in &sets {
            for &t in s.indices() {
                counts[t as usize + 1] += 1;
            }
        }
        for i in 0..nt {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut entries = vec![(0u32, 0u32); *offsets.last().unwrap() as usize];
        // Group by image so each triangle's list comes out in view order.
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.sort_by_key(|&i| (mask_images[i], i));
        for i in order {
            for &t in sets[i].indices() {
                let slot = &mut fill[t as usize];
                entries[*slot as usize] = (mask_images[i], i as u32);
                *slot += 1;
            }
        }
        Ok(Self {
            sets,
            offsets,
            entries,
        })
    }

    /// Masks whose set contains triangle `t`.
    pub fn masks_of(&self, t: usize) -> &[(u32, u32)] {
        &self.entries[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }

    pub fn num_triangles(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn incidence_count(&self) -> usize {
        self.entries.len()
    }
}

fn check_aligned(cams: &[CameraView], depths: &[DepthMap], labels: &[MaskLabelImage]) -> Result<()> {
    if cams.len() != depths.len() || cams.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} cameras, {} depth maps, {} label images",
            cams.len(),
            depths.len(),
            labels.len()
        )));
    }
    for ((c, d), l) in cams.iter().zip(depths).zip(labels) {
        if d.image_id != c.image_id || l.image_id != c.image_id {
            return Err(Error::Dimension(format!(
                "view {}: depth map {} / label image {} out of order",
                c.image_id, d.image_id, l.image_id
            )));
        }
        if (d.width, d.height) != (c.width, c.height) || (l.width, l.height) != (c.width, c.height) {
            return Err(Error::Dimension(format!("view {}: image size mismatch", c.image_id)));
        }
    }
    Ok(())
}

/// Assign each triangle to the masks its visible centroid falls into.
pub fn lift_masks(
    mesh: &TriMesh,
    cams: &[CameraView],
    depths: &[DepthMap],
    labels: &[MaskLabelImage],
    num_masks: usize,
) -> Result<MaskTriangleSets> {
    check_aligned(cams, depths, labels)?;
    let bias = DepthBias::default();
    let per_view: Vec<Vec<(u32, u32)>> = (0..cams.len())
        .into_par_iter()
        .map(|k| {
            let (cam, depth, label) = (&cams[k], &depths[k], &labels[k]);
            let mut hits = Vec::new();
            for (t, c) in mesh.centroids().iter().enumerate() {
                if let Some((x, y)) = visible_pixel(cam, depth, c, bias) {
                    let m = label.get(x, y);
                    if m >= 0 {
                        hits.push((m as u32, t as u32));
                    }
                }
            }
            hits
        })
        .collect();

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); num_masks];
    let mut mask_images = vec![u32::MAX; num_masks];
    for (k, hits) in per_view.iter().enumerate() {
        for &(m, t) in hits {
            let m = m as usize;
            if m >= num_masks {
                return Err(Error::Dimension(format!(
                    "label image {} references mask {m} of {num_masks}",
                    cams[k].image_id
                )));
            }
            members[m].push(t);
            mask_images[m] = cams[k].image_id;
        }
    }
    // Masks that never received a triangle still need an owning image for
    // the inverse map ordering; their sets are empty so any id works.
    for (m, img) in mask_images.iter_mut().enumerate() {
        if *img == u32::MAX {
            *img = labels
                .iter()
                .find(|l| l.lut.contains(&(m as i32)))
                .map(|l| l.image_id)
                .unwrap_or(0);
        }
    }
    let sets = members
        .into_iter()
        .map(|m| TriangleSet::from_sorted(mesh, m))
        .collect();
    MaskTriangleSets::from_sets(mesh, sets, &mask_images)
}

/// `masksets.bin`: u32 count, then per mask u32 len followed by u32 ids.
pub fn write_masksets(path: &Path, sets: &MaskTriangleSets) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(sets.sets.len() as u32).to_le_bytes());
    for s in &sets.sets {
        buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for &t in s.indices() {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_masksets(path: &Path, mesh: &TriMesh, mask_images: &[u32]) -> Result<MaskTriangleSets> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut words = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()));
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(path, "size is not a multiple of 4"));
    }
    let truncated = || Error::parse(path, "truncated");
    let n = words.next().ok_or_else(truncated)? as usize;
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let len = words.next().ok_or_else(truncated)? as usize;
        let mut ids = Vec::with_capacity(len);
        for _ in 0..len {
            ids.push(words.next().ok_or_else(truncated)?);
        }
        sets.push(TriangleSet::new(mesh, ids)?);
    }
    if words.next().is_some() {
        return Err(Error::parse(path, "trailing data"));
    }
    MaskTriangleSets::from_sets(mesh, sets, mask_images)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mask_image() -> ImageMasks {
        let mut labels = vec![0u16; 16];
        labels[0] = 1;
        labels[1] = 1;
        labels[10] = 2;
        ImageMasks {
            image_id: 4,
            width: 4,
            height: 4,
            labels,
            probs: vec![0.9, 0.8],
        }
    }

    #[test]
    fn identity_ingestion() {
        let set = ingest(&[two_mask_image()], DEFAULT_MIN_PROB).unwrap();
        assert_eq!(set.masks.len(), 2);
        assert_eq!(set.masks[0].index, 0);
        assert_eq!(set.masks[1].index, 1);
        assert_eq!(set.masks[0].runs, vec![Run { y: 0, x: 0, len: 2 }]);
        assert_eq!(set.labels[0].get(0, 0), 0);
        assert_eq!(set.labels[0].get(2, 2), 1);
        assert_eq!(set.labels[0].get(3, 3), -1);
    }

    #[test]
    fn low_probability_dropped() {
        let mut img = two_mask_image();
        img.probs[0] = 0.69;
        let set = ingest(&[img], DEFAULT_MIN_PROB).unwrap();
        assert_eq!(set.masks.len(), 1);
        assert_eq!(set.masks[0].in_image_id, 1);
        assert_eq!(set.labels[0].get(0, 0), -1);
        assert_eq!(set.labels[0].get(2, 2), 0);
    }

    #[test]
    fn empty_label_image_has_no_masks() {
        let set = ingest(&[ImageMasks::background(0, 8, 8)], DEFAULT_MIN_PROB).unwrap();
        assert!(set.masks.is_empty());
    }

    #[test]
    fn bad_probabilities_and_missing_entries() {
        let mut img = two_mask_image();
        img.probs[1] = 1.5;
        assert!(ingest(&[img], 0.0).is_err());
        let mut img = two_mask_image();
        img.probs.pop();
        assert!(ingest(&[img], 0.0).is_err());
    }

    #[test]
    fn file_round_trip_and_missing_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let img = two_mask_image();
        write_image_masks(dir.path(), &img).unwrap();
        let back = read_image_masks(dir.path(), 4).unwrap();
        assert_eq!(back, img);
        let set = load_masks(dir.path(), 0.85).unwrap();
        assert_eq!(set.masks.len(), 1);
        std::fs::remove_file(dir.path().join("4.json")).unwrap();
        assert!(matches!(load_masks(dir.path(), 0.7), Err(Error::Masks(_))));
    }

    #[test]
    fn filtering_composes() {
        let mut img = two_mask_image();
        img.probs = vec![0.75, 0.2];
        let all = ingest(&[img.clone()], 0.0).unwrap();
        let direct = ingest(&[img], 0.7).unwrap();
        let kept: Vec<u32> = all
            .masks
            .iter()
            .filter(|m| m.prob >= 0.7)
            .map(|m| m.in_image_id)
            .collect();
        let direct_ids: Vec<u32> = direct.masks.iter().map(|m| m.in_image_id).collect();
        assert_eq!(kept, direct_ids);
    }
}
