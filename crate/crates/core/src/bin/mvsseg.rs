use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mvsseg::building::{segment_buildings, BuildingRecord, DataOptions, SegmentParams};
use mvsseg::camera::{load_cameras, read_grid, render_heightmap, write_grid, CameraView, DepthMap, GridKind};
use mvsseg::error::{read_json, write_json};
use mvsseg::eval::{average_precision, load_gt, Interpolation};
use mvsseg::masks::{lift_masks, load_masks, read_masksets, write_masksets};
use mvsseg::mesh::{load_mesh, save_mesh, TriMesh};
use mvsseg::pipeline::{
    evaluate_labels, instances_with_scores, render_all_depths, run_cluster, run_pipeline, Backend, ClusterArtifact,
    PipelineConfig, StageStatus,
};
use mvsseg::roof::{load_roofs, roof_instances, save_roofs, vote_triangles, vote_vertices};
use mvsseg::synth::{generate, RoofStyle, SynthConfig};
use mvsseg::{Error, Result};

#[derive(Parser)]
#[command(name = "mvsseg", version, about = "Building instance segmentation of MVS urban meshes")]
struct Cli {
    /// Worker threads (0 = all cores); overrides MVSSEG_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene with cameras, masks, and ground truth.
    Synth(SynthArgs),
    /// Render per-camera depth maps.
    RenderDepth(RenderArgs),
    /// Render per-camera normalized heightmaps (optionally RGBH PNGs).
    RenderHeight(HeightArgs),
    /// Lift 2D masks to visible triangle sets.
    LiftMasks(LiftArgs),
    /// Cluster local masks into global masks.
    Cluster(ClusterArgs),
    /// Vote roof ids onto vertices and triangles.
    SegmentRoofs(RoofArgs),
    /// Grow each roof into a building with the MRF graph cut.
    SegmentBuildings(BuildingArgs),
    /// Instance AP of a labeling against ground truth.
    Evaluate(EvalArgs),
    /// Run every stage with caching.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Flat,
    Gabled,
    Mixed,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    buildings: Option<usize>,
    #[arg(long)]
    attached: Option<f64>,
    #[arg(long, value_enum)]
    roof_style: Option<StyleArg>,
    #[arg(long)]
    extent: Option<f64>,
    #[arg(long)]
    altitude: Option<f64>,
    #[arg(long)]
    balcony: bool,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    merge: Option<f64>,
    #[arg(long)]
    drop: Option<f64>,
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory for `<image_id>.dmap` files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeightArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory for `<image_id>.hmap` files.
    #[arg(long)]
    out: PathBuf,
    /// Directory of `<image_id>.png` RGB images; writes `<image_id>.rgbh.png`.
    #[arg(long)]
    rgb: Option<PathBuf>,
}

#[derive(Args)]
struct DepthSource {
    /// Depth maps from `render-depth`; rendered in memory when absent.
    #[arg(long)]
    depth: Option<PathBuf>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long, default_value_t = mvsseg::masks::DEFAULT_MIN_PROB)]
    min_prob: f64,
    #[command(flatten)]
    depth: DepthSource,
    /// Output `masksets.bin`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Order,
    Spectral,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    masksets: PathBuf,
    #[arg(long, default_value_t = mvsseg::masks::DEFAULT_MIN_PROB)]
    min_prob: f64,
    #[arg(long, default_value_t = mvsseg::cluster::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, value_enum, default_value = "order")]
    backend: BackendArg,
    /// Group count for the spectral backend.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Output `clusters.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RoofArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long, default_value_t = mvsseg::masks::DEFAULT_MIN_PROB)]
    min_prob: f64,
    #[command(flatten)]
    depth: DepthSource,
    /// Output `roofs.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentFlags {
    #[arg(long)]
    hobb_offset: Option<f64>,
    #[arg(long)]
    profile_tol: Option<f64>,
    /// Replace the data term with a constant.
    #[arg(long)]
    ablation_uniform_data: bool,
    #[arg(long)]
    no_orientation: bool,
    #[arg(long)]
    no_distance: bool,
}

#[derive(Args)]
struct BuildingArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    roofs: PathBuf,
    /// `clusters.json`, for building scores.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[command(flatten)]
    flags: SegmentFlags,
    /// Output directory for `buildings.json` and `buildings.ply`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    AllPoint,
    Coco101,
}

impl From<InterpArg> for Interpolation {
    fn from(v: InterpArg) -> Self {
        match v {
            InterpArg::AllPoint => Interpolation::AllPoint,
            InterpArg::Coco101 => Interpolation::Coco101,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Predicted labeling: a PLY with a `building_id` face property, or an
    /// instance JSON in the ground-truth format.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// `buildings.json` with per-building scores; all 1.0 otherwise.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    interpolation: Option<InterpArg>,
    /// Output report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory in the generator layout.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    gt_roofs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    min_prob: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[command(flatten)]
    flags: SegmentFlags,
    #[arg(long, value_enum)]
    interpolation: Option<InterpArg>,
    #[arg(long)]
    dump_depth: bool,
    #[arg(long)]
    no_evaluate: bool,
}

/// Command failure tagged with the stage it belongs to.
struct Failure {
    stage: String,
    err: String,
}

fn at<T>(stage: &str, r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure {
        stage: stage.to_string(),
        err: e.to_string(),
    })
}

fn backend(b: BackendArg) -> Backend {
    match b {
        BackendArg::Order => Backend::Order,
        BackendArg::Spectral => Backend::Spectral,
    }
}

fn load_sorted_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let mut cams = load_cameras(path)?;
    cams.sort_by_key(|c| c.image_id);
    Ok(cams)
}

fn depths_for(mesh: &TriMesh, cams: &[CameraView], dir: Option<&Path>) -> Result<Vec<DepthMap>> {
    let Some(dir) = dir else {
        return Ok(render_all_depths(mesh, cams));
    };
    cams.iter()
        .map(|c| {
            let path = dir.join(format!("{}.dmap", c.image_id));
            let (kind, w, h, data) = read_grid(&path)?;
            if kind != GridKind::Depth || w != c.width || h != c.height {
                return Err(Error::parse(&path, "not a depth map of the camera's size"));
            }
            Ok(DepthMap {
                image_id: c.image_id,
                width: w,
                height: h,
                data,
            })
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn segment_params(f: &SegmentFlags) -> SegmentParams {
    let d = SegmentParams::default();
    SegmentParams {
        hobb_offset: f.hobb_offset.unwrap_or(d.hobb_offset),
        profile_tol: f.profile_tol.unwrap_or(d.profile_tol),
        data: DataOptions {
            use_distance: !f.no_distance,
            use_orientation: !f.no_orientation,
            uniform: f.ablation_uniform_data,
        },
    }
}

fn cmd_synth(a: SynthArgs) -> std::result::Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => at("synth", read_toml::<SynthConfig>(p))?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.buildings {
        cfg.buildings = v;
    }
    if let Some(v) = a.attached {
        cfg.attached_fraction = v;
    }
    if let Some(v) = a.roof_style {
        cfg.roof_style = match v {
            StyleArg::Flat => RoofStyle::Flat,
            StyleArg::Gabled => RoofStyle::Gabled,
            StyleArg::Mixed => RoofStyle::Mixed,
        };
    }
    if let Some(v) = a.extent {
        cfg.ground_extent = v;
    }
    if let Some(v) = a.altitude {
        cfg.altitude_offset = v;
    }
    cfg.balcony |= a.balcony;
    if let Some(v) = a.split {
        cfg.corruption.split = v;
    }
    if let Some(v) = a.merge {
        cfg.corruption.merge = v;
    }
    if let Some(v) = a.drop {
        cfg.corruption.drop = v;
    }
    if let Some(v) = a.jitter {
        cfg.corruption.jitter = v;
    }
    let scene = at("synth", generate(&cfg))?;
    at("synth", scene.write(&a.out))?;
    println!(
        "{} buildings, {} triangles, {} cameras -> {}",
        scene.num_buildings(),
        scene.mesh.num_triangles(),
        scene.cameras.len(),
        a.out.display()
    );
    Ok(())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn cmd_render_depth(a: RenderArgs) -> std::result::Result<(), Failure> {
    let s = "depth-render";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let cams = at(s, load_sorted_cameras(&a.cameras))?;
    at(s, create_dir(&a.out))?;
    for d in render_all_depths(&mesh, &cams) {
        at(s, write_grid(&a.out.join(format!("{}.dmap", d.image_id)), GridKind::Depth, d.width, d.height, &d.data))?;
    }
    println!("{} depth maps -> {}", cams.len(), a.out.display());
    Ok(())
}

fn cmd_render_height(a: HeightArgs) -> std::result::Result<(), Failure> {
    let s = "height-render";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let cams = at(s, load_sorted_cameras(&a.cameras))?;
    at(s, create_dir(&a.out))?;
    for cam in &cams {
        let h = render_heightmap(&mesh, cam);
        at(s, write_grid(&a.out.join(format!("{}.hmap", h.image_id)), GridKind::Height, h.width, h.height, &h.data))?;
        if let Some(rgb) = &a.rgb {
            let src = rgb.join(format!("{}.png", h.image_id));
            let dst = a.out.join(format!("{}.rgbh.png", h.image_id));
            at(s, mvsseg::camera::export_rgbh(&src, &h, &dst))?;
        }
    }
    println!("{} heightmaps -> {}", cams.len(), a.out.display());
    Ok(())
}

fn cmd_lift(a: LiftArgs) -> std::result::Result<(), Failure> {
    let s = "lift-masks";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let cams = at(s, load_sorted_cameras(&a.cameras))?;
    let masks = at(s, load_masks(&a.masks, a.min_prob))?;
    let depths = at(s, depths_for(&mesh, &cams, a.depth.depth.as_deref()))?;
    let labels = at(s, masks.aligned_labels(&cams))?;
    let sets = at(s, lift_masks(&mesh, &cams, &depths, &labels, masks.masks.len()))?;
    at(s, write_masksets(&a.out, &sets))?;
    println!("{} masks, {} incidences -> {}", masks.masks.len(), sets.incidence_count(), a.out.display());
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> std::result::Result<(), Failure> {
    let s = "cluster";
    let b = backend(a.backend);
    if b == Backend::Spectral && a.k.is_none() {
        return Err(Failure {
            stage: s.into(),
            err: "the spectral backend needs --k".into(),
        });
    }
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let masks = at(s, load_masks(&a.masks, a.min_prob))?;
    let images: Vec<u32> = masks.masks.iter().map(|m| m.image_id).collect();
    let sets = at(s, read_masksets(&a.masksets, &mesh, &images))?;
    let k = a.k.unwrap_or(0) as usize;
    let (map, conf) = at(s, run_cluster(&sets, &mesh, &masks.probs(), a.beta, b, k))?;
    let art = ClusterArtifact {
        beta: a.beta,
        backend: b,
        globals: map.globals,
        assignment: map.assignment,
        c: conf.c,
        c_star: conf.c_star,
    };
    at(s, write_json(&a.out, &art))?;
    println!("{} local masks -> {} global masks", art.assignment.len(), art.globals.len());
    Ok(())
}

fn cmd_roofs(a: RoofArgs) -> std::result::Result<(), Failure> {
    let s = "segment-roofs";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let cams = at(s, load_sorted_cameras(&a.cameras))?;
    let masks = at(s, load_masks(&a.masks, a.min_prob))?;
    let clusters: ClusterArtifact = at(s, read_json(&a.clusters))?;
    if clusters.assignment.len() != masks.masks.len() {
        return Err(Failure {
            stage: s.into(),
            err: format!(
                "clusters cover {} masks but {} were loaded",
                clusters.assignment.len(),
                masks.masks.len()
            ),
        });
    }
    let depths = at(s, depths_for(&mesh, &cams, a.depth.depth.as_deref()))?;
    let labels = at(s, masks.aligned_labels(&cams))?;
    let rid_v = at(s, vote_vertices(&mesh, &cams, &depths, &labels, &clusters.mapping()))?;
    let roofs = roof_instances(&mesh, &vote_triangles(&mesh, &rid_v));
    at(s, save_roofs(&a.out, &roofs))?;
    println!("{} roofs -> {}", roofs.len(), a.out.display());
    Ok(())
}

fn cmd_buildings(a: BuildingArgs) -> std::result::Result<(), Failure> {
    let s = "segment-buildings";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let roofs = at(s, load_roofs(&a.roofs, &mesh))?;
    let scores = match &a.clusters {
        Some(p) => at(s, read_json::<ClusterArtifact>(p))?.scores(),
        None => Vec::new(),
    };
    let mut rid_t = vec![-1; mesh.num_triangles()];
    for (id, set) in &roofs {
        for &t in set.indices() {
            rid_t[t as usize] = *id;
        }
    }
    let b = at(s, segment_buildings(&mesh, &rid_t, &roofs, &scores, &segment_params(&a.flags)))?;
    at(s, create_dir(&a.out))?;
    at(s, b.save_json(&a.out.join("buildings.json")))?;
    at(s, save_mesh(&a.out.join("buildings.ply"), &mesh, Some(&b.labels)))?;
    println!("{} buildings -> {}", b.buildings.len(), a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvalArgs) -> std::result::Result<(), Failure> {
    let s = "evaluate";
    let mesh = at(s, load_mesh(&a.mesh))?.mesh;
    let gt = at(s, load_gt(&a.gt, &mesh))?;
    let interp = a.interpolation.map(Interpolation::from).unwrap_or_default();
    let scored = |ids: &[i32]| -> std::result::Result<Vec<f64>, Failure> {
        let max = ids.iter().copied().max().unwrap_or(-1);
        let mut scores = vec![1.0; (max + 1).max(0) as usize];
        if let Some(p) = &a.scores {
            let records: Vec<BuildingRecord> = at(s, read_json(p))?;
            for r in records {
                if let Some(v) = usize::try_from(r.building_id).ok().and_then(|i| scores.get_mut(i)) {
                    *v = r.score;
                }
            }
        }
        Ok(scores)
    };
    let is_json = a.pred.extension().and_then(|e| e.to_str()) == Some("json");
    let report = if is_json {
        let pred = at(s, load_gt(&a.pred, &mesh))?;
        let ids: Vec<i32> = pred.iter().map(|p| p.0).collect();
        let scores = scored(&ids)?;
        average_precision(&instances_with_scores(pred, &scores), &gt, &mesh, interp)
    } else {
        let loaded = at(s, load_mesh(&a.pred))?;
        if loaded.mesh.num_triangles() != mesh.num_triangles() {
            return Err(Failure {
                stage: s.into(),
                err: "prediction mesh does not match the scene mesh".into(),
            });
        }
        let labels: Vec<i32> = loaded
            .triangle_labels("building_id")
            .ok_or_else(|| Failure {
                stage: s.into(),
                err: format!("{}: missing building_id face property", a.pred.display()),
            })?
            .into_iter()
            .map(|v| v as i32)
            .collect();
        let scores = scored(&labels)?;
        evaluate_labels(&mesh, &labels, &scores, &gt, interp)
    };
    if let Some(out) = &a.out {
        at(s, report.save(out))?;
    }
    println!(
        "AP {:.4}  AP50 {:.4}  AP75 {:.4}  ({} predictions, {} ground truth)",
        report.ap, report.ap50, report.ap75, report.num_pred, report.num_gt
    );
    Ok(())
}

/// `flag` is the explicit `--threads`; `ambient` the resolved default used
/// when neither the flag nor the config file sets a count.
fn cmd_pipeline(a: PipelineArgs, flag: Option<usize>, ambient: usize) -> std::result::Result<(), Failure> {
    let mut cfg = match (&a.config, &a.data) {
        (Some(p), _) => at("config", PipelineConfig::from_toml(p))?,
        (None, Some(d)) => PipelineConfig::for_dataset(d, &d.join("out")),
        (None, None) => PipelineConfig::default(),
    };
    if let (Some(_), Some(d)) = (&a.config, &a.data) {
        let base = PipelineConfig::for_dataset(d, &cfg.out);
        cfg.mesh = base.mesh;
        cfg.cameras = base.cameras;
        cfg.masks = base.masks;
        cfg.gt = base.gt;
        cfg.gt_roofs = base.gt_roofs;
    }
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = a.$field.clone() {
                cfg.$field = v.into();
            }
        };
    }
    set!(mesh);
    set!(cameras);
    set!(masks);
    set!(out);
    set!(beta);
    set!(min_prob);
    if let Some(v) = a.gt.clone() {
        cfg.gt = Some(v);
    }
    if let Some(v) = a.gt_roofs.clone() {
        cfg.gt_roofs = Some(v);
    }
    if let Some(b) = a.backend {
        cfg.backend = backend(b);
    }
    if let Some(k) = a.k {
        cfg.k = k as usize;
    }
    if let Some(v) = a.flags.hobb_offset {
        cfg.hobb_offset = v;
    }
    if let Some(v) = a.flags.profile_tol {
        cfg.profile_tol = v;
    }
    cfg.no_orientation |= a.flags.no_orientation;
    cfg.no_distance |= a.flags.no_distance;
    cfg.ablation_uniform_data |= a.flags.ablation_uniform_data;
    if let Some(i) = a.interpolation {
        cfg.interpolation = i.into();
    }
    match flag {
        Some(t) => cfg.threads = t,
        None if cfg.threads == 0 => cfg.threads = ambient,
        None => {}
    }
    cfg.dump_depth |= a.dump_depth;
    if a.no_evaluate {
        cfg.evaluate = false;
    }
    if cfg.out.as_os_str().is_empty() {
        return Err(Failure {
            stage: "config".into(),
            err: "no output directory (use --out or --data)".into(),
        });
    }
    let outcome = run_pipeline(&cfg).map_err(|e| Failure {
        stage: e.stage.to_string(),
        err: e.source.to_string(),
    })?;
    for st in &outcome.manifest.stages {
        let status = match st.status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        };
        println!("{:<18} {:<7} {:.2}s", st.name, status, st.seconds);
    }
    if let Some(e) = &outcome.eval {
        println!(
            "buildings: AP {:.4}  AP50 {:.4}  AP75 {:.4}",
            e.buildings.ap, e.buildings.ap50, e.buildings.ap75
        );
        if let Some(r) = &e.roofs {
            println!("roofs:     AP {:.4}  AP50 {:.4}  AP75 {:.4}", r.ap, r.ap50, r.ap75);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(t) => t,
        None => match mvsseg::par::threads_from_env() {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let result = mvsseg::par::with_threads(threads, || match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::RenderDepth(a) => cmd_render_depth(a),
        Cmd::RenderHeight(a) => cmd_render_height(a),
        Cmd::LiftMasks(a) => cmd_lift(a),
        Cmd::Cluster(a) => cmd_cluster(a),
        Cmd::SegmentRoofs(a) => cmd_roofs(a),
        Cmd::SegmentBuildings(a) => cmd_buildings(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Pipeline(a) => cmd_pipeline(a, cli.threads, threads),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: stage: {}: {}", f.stage, f.err);
            ExitCode::from(1)
        }
    }
}
