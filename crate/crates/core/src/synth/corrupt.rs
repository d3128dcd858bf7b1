//! Per-view mask corruption: split, merge, drop, and probability jitter.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::ImageMasks;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    pub split: f64,
    pub merge: f64,
    pub drop: f64,
    pub jitter: f64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("split", self.split),
            ("merge", self.merge),
            ("drop", self.drop),
            ("jitter", self.jitter),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("corruption {name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.split == 0.0 && self.merge == 0.0 && self.drop == 0.0 && self.jitter == 0.0
    }
}

/// Corrupted masks for one view and, per output mask, the source roof ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedView {
    pub masks: ImageMasks,
    pub provenance: Vec<Vec<i32>>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Corrupt one view. `sources[k]` lists the roofs behind in-image mask k.
pub fn corrupt_view(view: &ImageMasks, sources: &[Vec<i32>], spec: &CorruptionSpec, seed: u64) -> CorruptedView {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(view.image_id as u64);
    let (w, h) = (view.width as usize, view.height as usize);
    let n = view.probs.len();
    let mut pixels: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, &l) in view.labels.iter().enumerate() {
        if l > 0 {
            pixels[l as usize - 1].push(i as u32);
        }
    }

    // Merge 4-adjacent masks.
    let mut groups: Vec<(Vec<u32>, Vec<i32>, f64)> = Vec::new();
    if spec.merge > 0.0 {
        let mut pairs = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                let a = view.labels[y * w + x];
                if a == 0 {
                    continue;
                }
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx < w && ny < h {
                        let b = view.labels[ny * w + nx];
                        if b != 0 && b != a {
                            pairs.insert((a.min(b) as usize - 1, a.max(b) as usize - 1));
                        }
                    }
                }
            }
        }
        let mut parent: Vec<usize> = (0..n).collect();
        for (a, b) in pairs {
            if rng.gen_bool(spec.merge) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            let r = find(&mut parent, k);
            members[r].push(k);
        }
        for m in members.into_iter().filter(|m| !m.is_empty()) {
            let mut px: Vec<u32> = m.iter().flat_map(|&k| pixels[k].iter().copied()).collect();
            px.sort_unstable();
            let mut src: Vec<i32> = m.iter().flat_map(|&k| sources[k].iter().copied()).collect();
            src.sort_unstable();
            src.dedup();
            let p = m.iter().map(|&k| view.probs[k]).fold(f64::NAN, f64::max);
            groups.push((px, src, p));
        }
    } else {
        for k in 0..n {
            groups.push((std::mem::take(&mut pixels[k]), sources[k].clone(), view.probs[k]));
        }
    }

    // Split along a random line through a random member pixel.
    let mut out: Vec<(Vec<u32>, Vec<i32>, f64)> = Vec::new();
    for (px, src, p) in groups {
        if px.is_empty() {
            continue;
        }
        if spec.split > 0.0 && px.len() >= 2 && rng.gen_bool(spec.split) {
            let pivot = px[rng.gen_range(0..px.len())] as usize;
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let (c, s) = (angle.cos(), angle.sin());
            let (cx, cy) = ((pivot % w) as f64, (pivot / w) as f64);
            let proj = |q: u32| ((q as usize % w) as f64 - cx) * c + ((q as usize / w) as f64 - cy) * s;
            let (mut a, mut b): (Vec<u32>, Vec<u32>) = px.iter().partition(|&&q| proj(q) >= 0.0);
            if a.is_empty() || b.is_empty() {
                let mut sorted = px.clone();
                sorted.sort_by(|&x, &y| proj(x).total_cmp(&proj(y)).then(x.cmp(&y)));
                let half = sorted.len() / 2;
                b = sorted[..half].to_vec();
                a = sorted[half..].to_vec();
                a.sort_unstable();
                b.sort_unstable();
            }
            out.push((a, src.clone(), p));
            out.push((b, src, p));
        } else {
            out.push((px, src, p));
        }
    }

    if spec.drop > 0.0 {
        out.retain(|_| !rng.gen_bool(spec.drop));
    }
    if spec.jitter > 0.0 {
        for m in &mut out {
            if rng.gen_bool(spec.jitter) {
                m.2 = rng.gen_range(0.7..=1.0);
            }
        }
    }

    let mut labels = vec![0u16; w * h];
    let mut probs = Vec::with_capacity(out.len());
    let mut provenance = Vec::with_capacity(out.len());
    for (k, (px, src, p)) in out.into_iter().enumerate() {
        for q in px {
            labels[q as usize] = (k + 1) as u16;
        }
        probs.push(p);
        provenance.push(src);
    }
    CorruptedView {
        masks: ImageMasks {
            image_id: view.image_id,
            width: view.width,
            height: view.height,
            labels,
            probs,
        },
        provenance,
    }
}

pub fn corrupt_masks(
    views: &[ImageMasks],
    sources: &[Vec<Vec<i32>>],
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<Vec<CorruptedView>> {
    spec.validate()?;
    if views.len() != sources.len() {
        return Err(Error::Dimension(format!("{} views, {} source lists", views.len(), sources.len())));
    }
    Ok(views
        .par_iter()
        .zip(sources.par_iter())
        .map(|(v, s)| {
            if spec.is_clean() {
                CorruptedView {
                    masks: v.clone(),
                    provenance: s.clone(),
                }
            } else {
                corrupt_view(v, s, spec, seed)
            }
        })
        .collect())
}
