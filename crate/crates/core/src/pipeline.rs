//! End-to-end stage runner with content-digest caching.
//!
//! Stages: depth-render → lift-masks → cluster → segment-roofs →
//! segment-buildings → evaluate. Each stage's key hashes its inputs and the
//! config values it reads; a stage whose key matches `manifest.json` and
//! whose artifacts exist is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::building::{segment_buildings, BuildingLabeling, DataOptions, SegmentParams};
use crate::camera::{load_cameras, render_depth, write_grid, CameraView, DepthMap, GridKind};
use crate::cluster::{cluster, confidences, similarity_matrix, spectral_baseline, MaskConfidences, MaskMapping};
use crate::error::{read_json, write_json, Error, Result};
use crate::eval::{average_precision, instances_from_labels, load_gt, EvalReport, Instance, Interpolation};
use crate::masks::{lift_masks, load_masks, read_masksets, write_masksets, MaskSet};
use crate::mesh::{load_mesh, save_mesh, TriMesh, TriangleSet};
use crate::roof::{load_roofs, roof_instances, save_roofs, vote_triangles, vote_vertices};

pub const STAGES: [&str; 6] = [
    "depth-render",
    "lift-masks",
    "cluster",
    "segment-roofs",
    "segment-buildings",
    "evaluate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Order,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub cameras: PathBuf,
    pub masks: PathBuf,
    pub out: PathBuf,
    /// Building ground truth (`gt.json`); evaluation runs when set.
    pub gt: Option<PathBuf>,
    pub gt_roofs: Option<PathBuf>,
    pub beta: f64,
    pub min_prob: f64,
    pub hobb_offset: f64,
    pub profile_tol: f64,
    pub backend: Backend,
    pub k: usize,
    pub no_orientation: bool,
    pub no_distance: bool,
    pub ablation_uniform_data: bool,
    pub interpolation: Interpolation,
    pub threads: usize,
    pub dump_depth: bool,
    pub evaluate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh: PathBuf::new(),
            cameras: PathBuf::new(),
            masks: PathBuf::new(),
            out: PathBuf::new(),
            gt: None,
            gt_roofs: None,
            beta: crate::cluster::DEFAULT_BETA,
            min_prob: crate::masks::DEFAULT_MIN_PROB,
            hobb_offset: crate::building::DEFAULT_HOBB_OFFSET,
            profile_tol: crate::building::DEFAULT_PROFILE_TOL,
            backend: Backend::Order,
            k: 0,
            no_orientation: false,
            no_distance: false,
            ablation_uniform_data: false,
            interpolation: Interpolation::AllPoint,
            threads: 0,
            dump_depth: false,
            evaluate: true,
        }
    }
}

impl PipelineConfig {
    /// Standard dataset layout as written by the generator.
    pub fn for_dataset(data: &Path, out: &Path) -> Self {
        let gt = data.join("gt.json");
        let gt_roofs = data.join("gt_roofs.json");
        Self {
            mesh: data.join("scene.ply"),
            cameras: data.join("cameras.json"),
            masks: data.join("masks"),
            out: out.to_path_buf(),
            gt: gt.exists().then_some(gt),
            gt_roofs: gt_roofs.exists().then_some(gt_roofs),
            ..Default::default()
        }
    }

    pub fn from_toml(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            hobb_offset: self.hobb_offset,
            profile_tol: self.profile_tol,
            data: DataOptions {
                use_distance: !self.no_distance,
                use_orientation: !self.no_orientation,
                uniform: self.ablation_uniform_data,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.min_prob) {
            return Err(Error::InvalidArgument(format!("min_prob {} outside [0, 1]", self.min_prob)));
        }
        if self.hobb_offset < 0.0 || self.profile_tol < 0.0 {
            return Err(Error::InvalidArgument("hobb offset and profile tolerance must be non-negative".into()));
        }
        if self.backend == Backend::Spectral && self.k == 0 {
            return Err(Error::InvalidArgument("spectral backend needs k >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage: {stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

trait StageResult<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> StageResult<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage: name, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.stages.iter().find(|s| s.name == stage).map(|s| s.status)
    }
}

fn hex_digest(h: Sha256) -> String {
    hex::encode(h.finalize())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest over every `<id>.png` / `<id>.json` pair, in file-name order.
pub fn masks_digest(dir: &Path) -> Result<String> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let numeric = path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.parse::<u32>().is_ok());
        let ext = path.extension().and_then(|e| e.to_str());
        if numeric && matches!(ext, Some("png" | "json")) {
            names.push(path);
        }
    }
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex_digest(h))
}

fn key_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex_digest(h)
}

/// Cluster artifact: mapping plus the confidences that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub beta: f64,
    pub backend: Backend,
    pub globals: Vec<crate::cluster::GlobalMask>,
    pub assignment: Vec<u32>,
    pub c: Vec<f64>,
    pub c_star: Vec<f64>,
}

impl ClusterArtifact {
    pub fn mapping(&self) -> MaskMapping {
        MaskMapping {
            globals: self.globals.clone(),
            assignment: self.assignment.clone(),
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.globals.iter().map(|g| g.confidence).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub buildings: EvalReport,
    pub roofs: Option<EvalReport>,
}

pub fn render_all_depths(mesh: &TriMesh, cams: &[CameraView]) -> Vec<DepthMap> {
    cams.par_iter().map(|c| render_depth(mesh, c)).collect()
}

pub fn run_cluster(
    sets: &crate::masks::MaskTriangleSets,
    mesh: &TriMesh,
    probs: &[f64],
    beta: f64,
    backend: Backend,
    k: usize,
) -> Result<(MaskMapping, MaskConfidences)> {
    let m = similarity_matrix(sets, mesh.areas());
    let conf = confidences(&m, probs, beta)?;
    let map = match backend {
        Backend::Order => cluster(&m, &conf)?,
        Backend::Spectral => spectral_baseline(&m, &conf, k)?,
    };
    Ok((map, conf))
}

/// Per-roof score from the cluster confidences.
pub fn instances_with_scores(sets: Vec<(i32, TriangleSet)>, scores: &[f64]) -> Vec<Instance> {
    sets.into_iter()
        .map(|(id, set)| Instance {
            id,
            score: scores.get(id as usize).copied().unwrap_or(0.0),
            set,
        })
        .collect()
}

pub fn evaluate_labels(
    mesh: &TriMesh,
    labels: &[i32],
    scores: &[f64],
    gt: &[(i32, TriangleSet)],
    interp: Interpolation,
) -> EvalReport {
    let preds = instances_with_scores(instances_from_labels(mesh, labels), scores);
    average_precision(&preds, gt, mesh, interp)
}

/// Lazily computed shared inputs.
struct Inputs<'a> {
    cfg: &'a PipelineConfig,
    mesh: Option<TriMesh>,
    cams: Option<Vec<CameraView>>,
    depths: Option<Vec<DepthMap>>,
    masks: Option<MaskSet>,
}

impl Inputs<'_> {
    fn mesh(&mut self) -> Result<&TriMesh> {
        if self.mesh.is_none() {
            let loaded = load_mesh(&self.cfg.mesh)?;
            if loaded.mesh.dropped_degenerate() > 0 {
                log::info!("dropped {} degenerate triangles", loaded.mesh.dropped_degenerate());
            }
            self.mesh = Some(loaded.mesh);
        }
        Ok(self.mesh.as_ref().unwrap())
    }

    fn cams(&mut self) -> Result<&[CameraView]> {
        if self.cams.is_none() {
            let mut cams = load_cameras(&self.cfg.cameras)?;
            cams.sort_by_key(|c| c.image_id);
            self.cams = Some(cams);
        }
        Ok(self.cams.as_ref().unwrap())
    }

    fn depths(&mut self) -> Result<&[DepthMap]> {
        if self.depths.is_none() {
            self.mesh()?;
            self.cams()?;
            let d = render_all_depths(self.mesh.as_ref().unwrap(), self.cams.as_ref().unwrap());
            self.depths = Some(d);
        }
        Ok(self.depths.as_ref().unwrap())
    }

    fn masks(&mut self) -> Result<&MaskSet> {
        if self.masks.is_none() {
            self.masks = Some(load_masks(&self.cfg.masks, self.cfg.min_prob)?);
        }
        Ok(self.masks.as_ref().unwrap())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub buildings: BuildingLabeling,
    pub eval: Option<EvalArtifact>,
}

struct Recorder {
    previous: Manifest,
    current: Manifest,
}

impl Recorder {
    fn cached(&self, name: &str, key: &str, outputs: &[PathBuf]) -> bool {
        self.previous.stages.iter().any(|s| s.name == name && s.key == key) && outputs.iter().all(|p| p.exists())
    }

    fn push(&mut self, name: &str, key: &str, status: StageStatus, t0: Instant, inputs: BTreeMap<String, String>, outputs: &[PathBuf]) {
        let status_str = match status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        };
        log::info!("{name}: {status_str}");
        self.current.stages.push(StageRecord {
            name: name.to_string(),
            key: key.to_string(),
            status,
            seconds: t0.elapsed().as_secs_f64(),
            inputs,
            outputs: outputs
                .iter()
                .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
                .collect(),
        });
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<PipelineOutcome, StageError> {
    crate::par::with_threads(cfg.threads, || run_stages(cfg))
}

fn run_stages(cfg: &PipelineConfig) -> std::result::Result<PipelineOutcome, StageError> {
    cfg.validate().stage("config")?;
    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).stage("config")?;
    let manifest_path = out.join("manifest.json");
    let previous: Manifest = if manifest_path.exists() {
        read_json(&manifest_path).unwrap_or_default()
    } else {
        Manifest::default()
    };
    let config_text = serde_json::to_string(cfg).expect("config serializes");
    let mut rec = Recorder {
        previous,
        current: Manifest {
            config_hash: key_of(&[&config_text]),
            stages: Vec::new(),
        },
    };
    let mut inp = Inputs {
        cfg,
        mesh: None,
        cams: None,
        depths: None,
        masks: None,
    };

    // depth-render
    let name = STAGES[0];
    let t0 = Instant::now();
    let mesh_d = file_digest(&cfg.mesh).stage(name)?;
    let cams_d = file_digest(&cfg.cameras).stage(name)?;
    // Validate cameras even when the stage is cached so bad input fails here.
    inp.cams().stage(name)?;
    let depth_key = key_of(&[name, &mesh_d, &cams_d]);
    let depth_dir = out.join("depth");
    let depth_outputs: Vec<PathBuf> = if cfg.dump_depth { vec![depth_dir.clone()] } else { Vec::new() };
    let inputs = BTreeMap::from([("mesh".to_string(), mesh_d.clone()), ("cameras".to_string(), cams_d.clone())]);
    if cfg.dump_depth && !rec.cached(name, &depth_key, &depth_outputs) {
        inp.depths().stage(name)?;
        std::fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e)).stage(name)?;
        for d in inp.depths.as_ref().unwrap() {
            write_grid(&depth_dir.join(format!("{}.dmap", d.image_id)), GridKind::Depth, d.width, d.height, &d.data)
                .stage(name)?;
        }
        rec.push(name, &depth_key, StageStatus::Ran, t0, inputs, &depth_outputs);
    } else {
        let status = if rec.cached(name, &depth_key, &depth_outputs) {
            StageStatus::Cached
        } else {
            StageStatus::Ran
        };
        // Without a dump the depth maps live in memory and are rendered on
        // first use by a later stage.
        rec.push(name, &depth_key, status, t0, inputs, &depth_outputs);
    }

    // lift-masks
    let name = STAGES[1];
    let t0 = Instant::now();
    let masks_d = masks_digest(&cfg.masks).stage(name)?;
    let lift_key = key_of(&[name, &depth_key, &masks_d, &cfg.min_prob.to_string()]);
    let sets_path = out.join("masksets.bin");
    let lift_outputs = vec![sets_path.clone()];
    let inputs = BTreeMap::from([("masks".to_string(), masks_d.clone())]);
    let lift_cached = rec.cached(name, &lift_key, &lift_outputs);
    let sets = {
        inp.masks().stage(name)?;
        let mask_images: Vec<u32> = inp.masks.as_ref().unwrap().masks.iter().map(|m| m.image_id).collect();
        if lift_cached {
            let mesh = inp.mesh().stage(name)?;
            let s = read_masksets(&sets_path, mesh, &mask_images).stage(name)?;
            rec.push(name, &lift_key, StageStatus::Cached, t0, inputs, &lift_outputs);
            s
        } else {
            inp.mesh().stage(name)?;
            inp.depths().stage(name)?;
            let masks = inp.masks.as_ref().unwrap();
            let cams = inp.cams.as_ref().unwrap();
            let labels = masks.aligned_labels(cams).stage(name)?;
            let s = lift_masks(
                inp.mesh.as_ref().unwrap(),
                cams,
                inp.depths.as_ref().unwrap(),
                &labels,
                masks.masks.len(),
            )
            .stage(name)?;
            write_masksets(&sets_path, &s).stage(name)?;
            rec.push(name, &lift_key, StageStatus::Ran, t0, inputs, &lift_outputs);
            s
        }
    };

    // cluster
    let name = STAGES[2];
    let t0 = Instant::now();
    let cluster_key = key_of(&[
        name,
        &lift_key,
        &cfg.beta.to_string(),
        &format!("{:?}", cfg.backend),
        &cfg.k.to_string(),
    ]);
    let cluster_path = out.join("clusters.json");
    let cluster_outputs = vec![cluster_path.clone()];
    let clusters: ClusterArtifact = if rec.cached(name, &cluster_key, &cluster_outputs) {
        let c = read_json(&cluster_path).stage(name)?;
        rec.push(name, &cluster_key, StageStatus::Cached, t0, BTreeMap::new(), &cluster_outputs);
        c
    } else {
        let probs = inp.masks.as_ref().unwrap().probs();
        let mesh = inp.mesh().stage(name)?;
        let (map, conf) = run_cluster(&sets, mesh, &probs, cfg.beta, cfg.backend, cfg.k).stage(name)?;
        let art = ClusterArtifact {
            beta: cfg.beta,
            backend: cfg.backend,
            globals: map.globals,
            assignment: map.assignment,
            c: conf.c,
            c_star: conf.c_star,
        };
        write_json(&cluster_path, &art).stage(name)?;
        rec.push(name, &cluster_key, StageStatus::Ran, t0, BTreeMap::new(), &cluster_outputs);
        art
    };
    drop(sets);

    // segment-roofs
    let name = STAGES[3];
    let t0 = Instant::now();
    let roof_key = key_of(&[name, &cluster_key]);
    let roofs_path = out.join("roofs.json");
    let roof_outputs = vec![roofs_path.clone()];
    let roofs = if rec.cached(name, &roof_key, &roof_outputs) {
        let mesh = inp.mesh().stage(name)?;
        let r = load_roofs(&roofs_path, mesh).stage(name)?;
        rec.push(name, &roof_key, StageStatus::Cached, t0, BTreeMap::new(), &roof_outputs);
        r
    } else {
        inp.depths().stage(name)?;
        let cams = inp.cams.as_ref().unwrap();
        let labels = inp.masks.as_ref().unwrap().aligned_labels(cams).stage(name)?;
        let mesh = inp.mesh.as_ref().unwrap();
        let rid_v = vote_vertices(mesh, cams, inp.depths.as_ref().unwrap(), &labels, &clusters.mapping()).stage(name)?;
        let rid_t = vote_triangles(mesh, &rid_v);
        let r = roof_instances(mesh, &rid_t);
        save_roofs(&roofs_path, &r).stage(name)?;
        rec.push(name, &roof_key, StageStatus::Ran, t0, BTreeMap::new(), &roof_outputs);
        r
    };
    let mesh = inp.mesh().stage(name)?.clone();
    let mut rid_t = vec![-1; mesh.num_triangles()];
    for (id, s) in &roofs {
        for &t in s.indices() {
            rid_t[t as usize] = *id;
        }
    }

    // segment-buildings
    let name = STAGES[4];
    let t0 = Instant::now();
    let params = cfg.segment_params();
    let build_key = key_of(&[name, &roof_key, &format!("{params:?}")]);
    let bjson = out.join("buildings.json");
    let bply = out.join("buildings.ply");
    let build_outputs = vec![bjson.clone(), bply.clone()];
    let scores = clusters.scores();
    let buildings = if rec.cached(name, &build_key, &build_outputs) {
        let loaded = load_mesh(&bply).stage(name)?;
        let labels: Vec<i32> = loaded
            .triangle_labels("building_id")
            .ok_or_else(|| Error::parse(&bply, "missing building_id"))
            .stage(name)?
            .into_iter()
            .map(|v| v as i32)
            .collect();
        let records = read_json(&bjson).stage(name)?;
        rec.push(name, &build_key, StageStatus::Cached, t0, BTreeMap::new(), &build_outputs);
        BuildingLabeling {
            labels,
            buildings: records,
        }
    } else {
        let b = segment_buildings(&mesh, &rid_t, &roofs, &scores, &params).stage(name)?;
        b.save_json(&bjson).stage(name)?;
        save_mesh(&bply, &mesh, Some(&b.labels)).stage(name)?;
        rec.push(name, &build_key, StageStatus::Ran, t0, BTreeMap::new(), &build_outputs);
        b
    };

    // evaluate
    let name = STAGES[5];
    let mut eval = None;
    if cfg.evaluate {
        if let Some(gt_path) = &cfg.gt {
            let t0 = Instant::now();
            let gt_d = file_digest(gt_path).stage(name)?;
            let roofs_d = match &cfg.gt_roofs {
                Some(p) => file_digest(p).stage(name)?,
                None => String::new(),
            };
            let eval_key = key_of(&[name, &build_key, &gt_d, &roofs_d, &format!("{:?}", cfg.interpolation)]);
            let eval_path = out.join("eval.json");
            let eval_outputs = vec![eval_path.clone()];
            let inputs = BTreeMap::from([("gt".to_string(), gt_d)]);
            let art: EvalArtifact = if rec.cached(name, &eval_key, &eval_outputs) {
                let a = read_json(&eval_path).stage(name)?;
                rec.push(name, &eval_key, StageStatus::Cached, t0, inputs, &eval_outputs);
                a
            } else {
                let gt = load_gt(gt_path, &mesh).stage(name)?;
                let b = evaluate_labels(&mesh, &buildings.labels, &scores, &gt, cfg.interpolation);
                let r = match &cfg.gt_roofs {
                    Some(p) => {
                        let gt_r = load_gt(p, &mesh).stage(name)?;
                        let preds = instances_with_scores(roofs.clone(), &scores);
                        Some(average_precision(&preds, &gt_r, &mesh, cfg.interpolation))
                    }
                    None => None,
                };
                let a = EvalArtifact { buildings: b, roofs: r };
                write_json(&eval_path, &a).stage(name)?;
                rec.push(name, &eval_key, StageStatus::Ran, t0, inputs, &eval_outputs);
                a
            };
            eval = Some(art);
        }
    }

    write_json(&manifest_path, &rec.current).stage("manifest")?;
    Ok(PipelineOutcome {
        manifest: rec.current,
        buildings,
        eval,
    })
}
