mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namemo::capture::TileImage;
use namemo::embedding::Embedding;
use namemo::gallery::{Gallery, GalleryStore, StudentRecord};
use namemo::geometry::TilePose;
use namemo::imaging::decode_png_rgb;
use namemo::matcher::Band;
use namemo::profile::RunProfile;
use namemo::session::{Session, SnapshotStore};
use namemo::vision::{AdapterBackend, AdapterRequest, BackendError, VisionBackend};

fn identity() -> Embedding {
    Embedding::random(&mut ChaCha8Rng::seed_from_u64(99))
}

/// Writes an adapter script that answers every request with one face whose
/// box starts at x = tile id, and logs each request line.
fn echo_adapter(dir: &Path) -> String {
    let emb: Vec<String> = identity().as_slice().iter().map(|v| format!("{v:e}")).collect();
    let script = format!(
        r#"while read -r line; do
  printf '%s\n' "$line" >> "{log}"
  id=$(printf '%s' "$line" | sed -E 's/^\{{"tile_id":([0-9]+),.*/\1/')
  printf '{{"detections":[{{"bbox":[%s,10,40,50],"landmarks":[[%s,25],[%s,25],[%s,35],[%s,45],[%s,45]],"embedding":[{emb}],"score":0.93}}]}}\n' \
    "$id" "$((id + 12))" "$((id + 28))" "$((id + 20))" "$((id + 14))" "$((id + 26))"
done
"#,
        log = dir.join("requests.log").display(),
        emb = emb.join(","),
    );
    let path = dir.join("adapter.sh");
    std::fs::write(&path, script).unwrap();
    format!("sh {}", path.display())
}

fn small_tile(id: u32) -> TileImage {
    let pose = TilePose { tile_id: id, pan_deg: 0.0, tilt_deg: 0.0 };
    let pixels: Vec<u8> = (0..64 * 48 * 3).map(|i| (i % 251) as u8).collect();
    TileImage::new(pose, 64, 48, pixels, Duration::ZERO, None, None).unwrap()
}

#[test]
fn replies_are_paired_with_requests_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let backend = AdapterBackend::spawn(&echo_adapter(dir.path()), Duration::from_secs(10)).unwrap();
    for id in [5, 0, 17, 3] {
        let dets = backend.detect_and_embed(&small_tile(id)).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.bbox.x, f64::from(id));
        assert!(d.bbox.right() <= 64.0 && d.bbox.bottom() <= 48.0);
        assert!((d.embedding.dot(&identity()) - 1.0).abs() < 1e-6);
        assert_eq!(d.det_score, 0.93);
    }
    let log = std::fs::read_to_string(dir.path().join("requests.log")).unwrap();
    let requests: Vec<AdapterRequest> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(requests.iter().map(|r| r.tile_id).collect::<Vec<_>>(), [5, 0, 17, 3]);
    let png = base64::engine::general_purpose::STANDARD.decode(&requests[0].png_b64).unwrap();
    let (w, h, px) = decode_png_rgb(&png).unwrap();
    assert_eq!((w, h), (64, 48));
    assert_eq!(px, small_tile(5).pixels());
}

#[test]
fn malformed_reply_is_reported() {
    let backend = AdapterBackend::spawn("while read -r l; do echo '{\"faces\":[]}'; done", Duration::from_secs(10)).unwrap();
    assert!(matches!(backend.detect_and_embed(&small_tile(1)), Err(BackendError::MalformedAdapterReply(_))));
    let backend = AdapterBackend::spawn(
        "while read -r l; do echo '{\"detections\":[{\"bbox\":[1,1,5,5],\"landmarks\":[[1,1],[2,2],[3,3],[4,4],[5,5]],\"embedding\":[1,2,3],\"score\":1}]}'; done",
        Duration::from_secs(10),
    )
    .unwrap();
    assert!(matches!(backend.detect_and_embed(&small_tile(1)), Err(BackendError::MalformedAdapterReply(_))));
}

#[test]
fn empty_reply_means_no_faces() {
    let backend = AdapterBackend::spawn("while read -r l; do echo '{\"detections\":[]}'; done", Duration::from_secs(10)).unwrap();
    assert!(backend.detect_and_embed(&small_tile(2)).unwrap().is_empty());
}

#[test]
fn exited_adapter_is_unavailable() {
    let backend = AdapterBackend::spawn("read -r l; exit 0", Duration::from_secs(10)).unwrap();
    let t = Instant::now();
    assert!(matches!(backend.detect_and_embed(&small_tile(1)), Err(BackendError::BackendUnavailable(_))));
    assert!(t.elapsed() < Duration::from_secs(5));
    assert!(matches!(backend.detect_and_embed(&small_tile(2)), Err(BackendError::BackendUnavailable(_))));
}

#[test]
fn silent_adapter_times_out() {
    let backend = AdapterBackend::spawn("sleep 30", Duration::from_millis(300)).unwrap();
    let t = Instant::now();
    assert!(matches!(backend.detect_and_embed(&small_tile(1)), Err(BackendError::BackendUnavailable(_))));
    assert!(t.elapsed() < Duration::from_secs(3));
}

#[test]
fn session_runs_on_an_external_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(AdapterBackend::spawn(&echo_adapter(dir.path()), Duration::from_secs(10)).unwrap());
    let p = RunProfile::feasibility_test();
    let scene = namemo::capture::generate_scene(0, &p.room, 1).unwrap();
    let source = Box::new(namemo::capture::Simulator::new(p.room, p.intrinsics, p.mount, scene));
    let mut g = Gallery::new();
    g.enroll(StudentRecord::new("S001", "Ada", identity())).unwrap();
    let store = SnapshotStore::new(2);
    let mut session = Session::new(
        common::quick_config(),
        p.plan().unwrap(),
        p.intrinsics,
        source,
        backend,
        GalleryStore::new(g, None),
        Arc::clone(&store),
    )
    .unwrap();
    let snap = session.run_cycle().unwrap();
    let log = std::fs::read_to_string(dir.path().join("requests.log")).unwrap();
    assert_eq!(log.lines().count(), 63);
    // Every tile reports the same face; one-to-one matching names it once.
    assert!(snap.stats.detections >= 1);
    assert_eq!(snap.annotations.iter().filter(|a| a.result.band == Band::High).count(), 1);
    assert_eq!(snap.stats.matched_high + snap.stats.unknown, snap.stats.detections);
}
