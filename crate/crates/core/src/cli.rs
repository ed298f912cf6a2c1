//! Subcommands of the `namemo` executable.
//!
//! JSON results go to the supplied writer (stdout in the binary);
//! diagnostics go to stderr through `tracing`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::api::{self, ApiState};
use crate::capture::{generate_scene, CaptureSource, IdentityBank, SimScene, Simulator, SourceKind};
use crate::config::AppConfig;
use crate::embedding::Embedding;
use crate::gallery::{Gallery, GalleryStore, StudentRecord};
use crate::geometry::RoomModel;
use crate::harness::{run_accuracy_harness, HarnessOptions};
use crate::matcher::Assignment;
use crate::profile::{RunProfile, FEASIBILITY_TEST};
use crate::session::{CallLog, Session, SnapshotStore};
use crate::stitch::{BoxesDocument, CanvasSpec};
use crate::vision::{AdapterBackend, BackendKind, SyntheticBackend, VisionBackend};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "namemo", version, about = "Classroom name indication from a pan-tilt camera")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the pan-tilt scan plan.
    Plan(PlanArgs),
    /// Add a student to a gallery file.
    Enroll(EnrollArgs),
    /// Run one simulated refresh cycle.
    Simulate(SimulateArgs),
    /// Run the refresh loop and the HTTP service.
    Serve(ServeArgs),
    /// Measure recognition accuracy over simulated cycles.
    AccuracyHarness(HarnessArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, default_value = FEASIBILITY_TEST)]
    pub profile: String,
    /// Room size in meters, `WxD`.
    #[arg(long)]
    pub room: Option<String>,
    /// Focal length in millimeters.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Sensor size in millimeters, `WxH`.
    #[arg(long)]
    pub sensor: Option<String>,
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Camera position in meters, `X,Y,Z`.
    #[arg(long)]
    pub mount: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, required_unless_present = "all")]
    pub id: Option<String>,
    #[arg(long, required_unless_present = "all")]
    pub name: Option<String>,
    /// Profile entry `key=value`; repeatable.
    #[arg(long = "profile", value_name = "KEY=VALUE")]
    pub profile: Vec<String>,
    /// JSON array with the 128 embedding components.
    #[arg(long, conflicts_with = "from_scene", required_unless_present = "from_scene")]
    pub embedding_file: Option<PathBuf>,
    /// Take the identity of `--id` from the simulated scene with this seed.
    #[arg(long)]
    pub from_scene: Option<u64>,
    /// Scene size used with `--from-scene`.
    #[arg(long, default_value_t = 161)]
    pub students: usize,
    /// Enroll every student of the `--from-scene` scene.
    #[arg(long, requires = "from_scene", conflicts_with_all = ["id", "name"])]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 161)]
    pub students: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Room size in meters, `WxD`.
    #[arg(long)]
    pub room: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Write `panorama.png` and `boxes.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Longest panorama side in pixels.
    #[arg(long, default_value_t = 2048)]
    pub max_canvas: u32,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NAMEMO_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Adapter command for the external backend.
    #[arg(long)]
    pub backend_cmd: Option<String>,
}

#[derive(Debug, Args)]
pub struct HarnessArgs {
    #[arg(long, default_value_t = 161)]
    pub students: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_parser = ["greedy", "optimal"], default_value = "greedy")]
    pub assignment: String,
}

/// Runs `cli`, writing results to `out`. Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Plan(a) => plan(a, out),
        Command::Enroll(a) => enroll(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Serve(a) => serve(a),
        Command::AccuracyHarness(a) => harness(a, out),
    }
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(failed)?;
    writeln!(out).map_err(failed)
}

pub fn parse_pair(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("expected WxH, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn parse_triple(s: &str) -> Result<[f64; 3], CliError> {
    let bad = || CliError::Usage(format!("expected X,Y,Z, got {s:?}"));
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| bad())
}

fn profile(name: &str) -> Result<RunProfile, CliError> {
    RunProfile::builtin(name).ok_or_else(|| CliError::Usage(format!("unknown profile {name:?}")))
}

fn with_room(mut p: RunProfile, room: Option<&str>) -> Result<RunProfile, CliError> {
    if let Some(r) = room {
        let (w, d) = parse_pair(r)?;
        p.room = RoomModel { width_m: w, depth_m: d, ..p.room };
    }
    Ok(p)
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut p = with_room(profile(&a.profile)?, a.room.as_deref())?;
    if let Some(f) = a.focal {
        p.intrinsics.focal_length_mm = f;
    }
    if let Some(s) = &a.sensor {
        (p.intrinsics.sensor_width_mm, p.intrinsics.sensor_height_mm) = parse_pair(s)?;
    }
    if let Some(o) = a.overlap {
        p.overlap = o;
    }
    if let Some(m) = &a.mount {
        p.mount.position_m = parse_triple(m)?;
    }
    let plan = p.plan().map_err(failed)?;
    let tiles: Vec<_> = plan
        .tiles
        .iter()
        .map(|t| json!({ "id": t.tile_id, "pan": t.pan_deg, "tilt": t.tilt_deg }))
        .collect();
    emit(
        out,
        &json!({
            "tiles": tiles,
            "columns": plan.columns,
            "rows": plan.rows,
            "covered_fraction": plan.covered_fraction,
            "estimated_cycle_s": p.estimated_cycle_s(&plan),
        }),
    )?;
    Ok(0)
}

fn scene_bank(students: usize, seed: u64) -> Result<(SimScene, IdentityBank), CliError> {
    let p = RunProfile::feasibility_test();
    let scene = generate_scene(students, &p.room, seed).map_err(failed)?;
    let bank = IdentityBank::for_scene(&scene);
    Ok((scene, bank))
}

fn enroll(a: EnrollArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let store = GalleryStore::open(&a.gallery).map_err(failed)?;
    let mut profile = std::collections::BTreeMap::new();
    for kv in &a.profile {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--profile expects key=value, got {kv:?}")))?;
        profile.insert(k.to_string(), v.to_string());
    }
    let mut records = Vec::new();
    if a.all {
        let (_, bank) = scene_bank(a.students, a.from_scene.expect("clap enforces --from-scene"))?;
        for (id, e) in bank.iter() {
            let mut r = StudentRecord::new(id, format!("Student {id}"), e.clone());
            r.profile = profile.clone();
            records.push(r);
        }
    } else {
        let id = a.id.expect("clap enforces --id");
        let embedding = match (&a.embedding_file, a.from_scene) {
            (Some(path), _) => read_embedding(path)?,
            (None, Some(seed)) => {
                let (_, bank) = scene_bank(a.students, seed)?;
                bank.get(&id)
                    .cloned()
                    .ok_or_else(|| CliError::Usage(format!("{id:?} is not in scene {seed}")))?
            }
            (None, None) => unreachable!("clap enforces an embedding source"),
        };
        let mut r = StudentRecord::new(id, a.name.expect("clap enforces --name"), embedding);
        r.profile = profile;
        records.push(r);
    }
    let mut version = store.version();
    for r in records {
        version = store.enroll(r).map_err(failed)?;
    }
    let students = store.with(|g| g.len());
    emit(out, &json!({ "gallery_version": version, "students": students }))?;
    Ok(0)
}

fn read_embedding(path: &Path) -> Result<Embedding, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    let v: Vec<f32> = serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    Embedding::new(v).map_err(|e| failed(format!("invalid embedding: {e}")))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut p = with_room(RunProfile::feasibility_test(), a.room.as_deref())?;
    p.session.panorama = CanvasSpec { deg_per_px: None, max_dim_px: a.max_canvas };
    let plan = p.plan().map_err(failed)?;
    let scene = generate_scene(a.students, &p.room, a.seed).map_err(failed)?;
    let bank = Arc::new(IdentityBank::for_scene(&scene));
    let gallery = GalleryStore::new(gallery_for(&bank)?, None);
    let store = SnapshotStore::new(p.session.retention);
    let source = Simulator::new(p.room, p.intrinsics, p.mount, scene);
    let backend = Arc::new(SyntheticBackend::new(bank, a.noise));
    let mut session =
        Session::new(p.session.clone(), plan, p.intrinsics, Box::new(source), backend, gallery, store)
            .map_err(failed)?;
    let snap = session.run_cycle().map_err(failed)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(failed)?;
        std::fs::write(dir.join("panorama.png"), &snap.panorama.png[..]).map_err(failed)?;
        let doc = BoxesDocument { boxes: snap.annotations.iter().map(|a| a.pano_box).collect() };
        std::fs::write(dir.join("boxes.json"), serde_json::to_vec_pretty(&doc).map_err(failed)?)
            .map_err(failed)?;
    }
    emit(
        out,
        &json!({
            "version": snap.version,
            "tiles": snap.stats.tiles,
            "stats": snap.stats,
            "panorama": { "width": snap.panorama.layout.width_px, "height": snap.panorama.layout.height_px },
        }),
    )?;
    Ok(0)
}

fn gallery_for(bank: &IdentityBank) -> Result<Gallery, CliError> {
    let mut g = Gallery::new();
    for (id, e) in bank.iter() {
        g.enroll(StudentRecord::new(id, format!("Student {id}"), e.clone())).map_err(failed)?;
    }
    Ok(g)
}

fn harness(a: HarnessArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut opts = HarnessOptions::new(a.students, a.noise, a.trials, a.seed);
    opts.policy.assignment = if a.assignment == "optimal" { Assignment::Optimal } else { Assignment::Greedy };
    let report = run_accuracy_harness(&opts).map_err(failed)?;
    emit(out, &serde_json::to_value(&report).map_err(failed)?)?;
    Ok(if report.duplicate_assignments == 0 { 0 } else { 1 })
}

/// Everything `serve` needs, built from a configuration.
pub struct Service {
    pub session: Session,
    pub state: ApiState,
}

/// Wires capture, backend, gallery, call log and snapshot store.
///
/// With the simulator and an empty gallery, every simulated student is
/// enrolled so the demo recognizes someone.
pub fn build_service(cfg: &AppConfig, backend_cmd: Option<&str>) -> Result<Service, CliError> {
    let p = cfg.run_profile().map_err(failed)?;
    let plan = p.plan().map_err(failed)?;
    let gallery = match &cfg.paths.gallery {
        Some(path) => GalleryStore::open(path).map_err(failed)?,
        None => GalleryStore::new(Gallery::new(), None),
    };
    let calls = Arc::new(match &cfg.paths.call_log {
        Some(path) => CallLog::open(path).map_err(failed)?,
        None => CallLog::in_memory(),
    });
    let store = SnapshotStore::new(cfg.session.retention);

    let (source, bank): (Box<dyn CaptureSource>, Option<Arc<IdentityBank>>) = match cfg.source_kind() {
        SourceKind::Simulator => {
            let scene = generate_scene(cfg.capture.students, &p.room, cfg.capture.seed).map_err(failed)?;
            let bank = Arc::new(IdentityBank::for_scene(&scene));
            (Box::new(Simulator::new(p.room, p.intrinsics, p.mount, scene)), Some(bank))
        }
        SourceKind::Hardware => {
            return Err(failed("no pan-tilt camera driver is linked into this build; use NAMEMO_CAPTURE=sim"))
        }
    };
    let backend: Arc<dyn VisionBackend> = match cfg.backend_kind() {
        BackendKind::Synthetic => {
            let bank = bank.clone().ok_or_else(|| failed("the synthetic backend needs the simulator"))?;
            Arc::new(SyntheticBackend::new(bank, cfg.capture.noise))
        }
        BackendKind::Adapter => {
            let cmd = backend_cmd
                .or(cfg.backend.command.as_deref())
                .ok_or_else(|| CliError::Usage("adapter backend needs --backend-cmd or backend.command".into()))?;
            Arc::new(
                AdapterBackend::spawn(cmd, Duration::from_secs_f64(cfg.backend.reply_timeout_s)).map_err(failed)?,
            )
        }
    };
    if let Some(bank) = &bank {
        if gallery.with(|g| g.is_empty()) {
            tracing::info!(students = bank.len(), "enrolling simulated students into the empty gallery");
            for (id, e) in bank.iter() {
                gallery.enroll(StudentRecord::new(id, format!("Student {id}"), e.clone())).map_err(failed)?;
            }
        }
    }
    let session = Session::new(
        cfg.session.clone(),
        plan,
        p.intrinsics,
        source,
        backend,
        Arc::clone(&gallery),
        Arc::clone(&store),
    )
    .map_err(failed)?;
    let state = ApiState::new(store, gallery, calls, cfg.api.clone());
    Ok(Service { session, state })
}

fn serve(a: ServeArgs) -> Result<i32, CliError> {
    let mut cfg = match &a.config {
        Some(path) => AppConfig::load(path).map_err(failed)?,
        None => AppConfig::default(),
    }
    .with_env_overrides()
    .map_err(failed)?;
    if let Some(port) = a.port {
        cfg.api.port = port;
    }
    let service = build_service(&cfg, a.backend_cmd.as_deref())?;
    let runtime = tokio::runtime::Runtime::new().map_err(failed)?;
    let running = service.session.spawn_loop();
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((cfg.api.bind.as_str(), cfg.api.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        api::serve(listener, service.state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    });
    running.stop();
    result.map_err(failed)?;
    Ok(0)
}
