//! Instance-level evaluation by triangle-area IoU: AP over IoU thresholds
//! 0.50 to 0.95.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Result};
use crate::mesh::{TriMesh, TriangleSet};
use crate::numeric::CompensatedSum;

/// Area under the interpolated precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Exact area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.01, ..., 1.
    Coco101,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: i32,
    pub score: f64,
    pub set: TriangleSet,
}

/// Group per-triangle ids into instances (negative ids are background).
pub fn instances_from_labels(mesh: &TriMesh, labels: &[i32]) -> Vec<(i32, TriangleSet)> {
    let mut groups: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (t, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l).or_default().push(t as u32);
        }
    }
    groups
        .into_iter()
        .map(|(id, tris)| (id, TriangleSet::from_sorted(mesh, tris)))
        .collect()
}

pub fn intersection_area(a: &TriangleSet, b: &TriangleSet, mesh: &TriMesh) -> f64 {
    let (a, b) = (a.indices(), b.indices());
    let (mut i, mut j) = (0, 0);
    let mut s = CompensatedSum::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s.add(mesh.area(a[i] as usize));
                i += 1;
                j += 1;
            }
        }
    }
    s.value()
}

pub fn instance_iou(pred: &TriangleSet, gt: &TriangleSet, mesh: &TriMesh) -> f64 {
    let inter = intersection_area(pred, gt, mesh);
    let union = pred.area() + gt.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou: f64,
    pub ap: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub id: i32,
    pub best_iou: f64,
    pub matched_id: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub interpolation: Interpolation,
    pub score_source: String,
    pub num_gt: usize,
    pub num_pred: usize,
    pub thresholds: Vec<ThresholdResult>,
    pub per_gt: Vec<BestMatch>,
    pub per_pred: Vec<BestMatch>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// The ten thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// AP from per-prediction TP flags in score order.
pub fn ap_from_matches(tp: &[bool], num_gt: usize, interp: Interpolation) -> (f64, Vec<f64>, Vec<f64>) {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(if num_gt > 0 { hits as f64 / num_gt as f64 } else { 0.0 });
    }
    if num_gt == 0 {
        return (0.0, precision, recall);
    }
    // Envelope: best precision at any recall ≥ r.
    let mut env = precision.clone();
    for k in (0..env.len().saturating_sub(1)).rev() {
        env[k] = env[k].max(env[k + 1]);
    }
    let ap = match interp {
        Interpolation::AllPoint => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for k in 0..env.len() {
                if recall[k] > prev {
                    area += (recall[k] - prev) * env[k];
                    prev = recall[k];
                }
            }
            area
        }
        Interpolation::Coco101 => {
            let mut total = 0.0;
            for r in 0..=100 {
                let r = r as f64 / 100.0;
                let k = recall.partition_point(|&x| x < r);
                if k < env.len() {
                    total += env[k];
                }
            }
            total / 101.0
        }
    };
    (ap, precision, recall)
}

/// Greedy matching in descending score order; each prediction takes the
/// unmatched GT with the highest IoU at or above the threshold.
pub fn average_precision(
    preds: &[Instance],
    gts: &[(i32, TriangleSet)],
    mesh: &TriMesh,
    interp: Interpolation,
) -> EvalReport {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .total_cmp(&preds[a].score)
            .then(preds[a].id.cmp(&preds[b].id))
    });
    let iou: Vec<Vec<f64>> = order
        .par_iter()
        .map(|&p| gts.iter().map(|g| instance_iou(&preds[p].set, &g.1, mesh)).collect())
        .collect();
    let thresholds: Vec<ThresholdResult> = iou_thresholds()
        .into_par_iter()
        .map(|tau| {
            let mut taken = vec![false; gts.len()];
            let mut tp = Vec::with_capacity(order.len());
            for row in &iou {
                let mut best: Option<(f64, usize)> = None;
                for (g, &v) in row.iter().enumerate() {
                    if !taken[g] && v >= tau && best.is_none_or(|b| v > b.0) {
                        best = Some((v, g));
                    }
                }
                if let Some((_, g)) = best {
                    taken[g] = true;
                }
                tp.push(best.is_some());
            }
            let (ap, precision, recall) = ap_from_matches(&tp, gts.len(), interp);
            ThresholdResult {
                iou: tau,
                ap,
                precision,
                recall,
                true_positives: tp.iter().filter(|&&t| t).count(),
            }
        })
        .collect();
    let ap = thresholds.iter().map(|t| t.ap).sum::<f64>() / thresholds.len() as f64;
    let best_of = |vals: Vec<(f64, i32)>| {
        vals.into_iter()
            .fold(None, |acc: Option<(f64, i32)>, v| match acc {
                Some(a) if a.0 >= v.0 => Some(a),
                _ => Some(v),
            })
    };
    let per_gt = gts
        .iter()
        .enumerate()
        .map(|(g, (id, _))| {
            let b = best_of(order.iter().zip(&iou).map(|(&p, row)| (row[g], preds[p].id)).collect());
            BestMatch {
                id: *id,
                best_iou: b.map_or(0.0, |b| b.0),
                matched_id: b.filter(|b| b.0 > 0.0).map(|b| b.1),
            }
        })
        .collect();
    let mut per_pred: Vec<BestMatch> = order
        .iter()
        .zip(&iou)
        .map(|(&p, row)| {
            let b = best_of(row.iter().zip(gts).map(|(&v, g)| (v, g.0)).collect());
            BestMatch {
                id: preds[p].id,
                best_iou: b.map_or(0.0, |b| b.0),
                matched_id: b.filter(|b| b.0 > 0.0).map(|b| b.1),
            }
        })
        .collect();
    per_pred.sort_by_key(|m| m.id);
    EvalReport {
        ap,
        ap50: thresholds[0].ap,
        ap75: thresholds[5].ap,
        interpolation: interp,
        score_source: "representative mask C*".into(),
        num_gt: gts.len(),
        num_pred: preds.len(),
        thresholds,
        per_gt,
        per_pred,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub id: i32,
    pub triangle_ids: Vec<u32>,
}

pub fn save_gt(path: &Path, instances: &[(i32, TriangleSet)]) -> Result<()> {
    let records: Vec<GtRecord> = instances
        .iter()
        .map(|(id, s)| GtRecord {
            id: *id,
            triangle_ids: s.indices().to_vec(),
        })
        .collect();
    write_json(path, &records)
}

pub fn load_gt(path: &Path, mesh: &TriMesh) -> Result<Vec<(i32, TriangleSet)>> {
    let records: Vec<GtRecord> = read_json(path)?;
    let mut out = records
        .into_iter()
        .map(|r| Ok((r.id, TriangleSet::new(mesh, r.triangle_ids)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|r| r.0);
    Ok(out)
}
