//! Runs the refresh loop on a simulated class for a few cycles.

use std::sync::Arc;
use std::time::Duration;

use namemo::capture::{generate_scene, IdentityBank, Simulator};
use namemo::gallery::{Gallery, GalleryStore, StudentRecord};
use namemo::profile::RunProfile;
use namemo::session::{Session, SnapshotStore};
use namemo::stitch::CanvasSpec;
use namemo::vision::SyntheticBackend;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = RunProfile::feasibility_test();
    p.session.refresh_interval_s = 2.0;
    p.session.panorama = CanvasSpec { deg_per_px: None, max_dim_px: 800 };
    let scene = generate_scene(60, &p.room, 2)?;
    let bank = Arc::new(IdentityBank::for_scene(&scene));
    let mut g = Gallery::new();
    for (id, e) in bank.iter() {
        g.enroll(StudentRecord::new(id, format!("Student {id}"), e.clone()))?;
    }
    let store = SnapshotStore::new(3);
    let session = Session::new(
        p.session.clone(),
        p.plan()?,
        p.intrinsics,
        Box::new(Simulator::new(p.room, p.intrinsics, p.mount, scene)),
        Arc::new(SyntheticBackend::new(bank, 0.05)),
        GalleryStore::new(g, None),
        Arc::clone(&store),
    )?;

    let mut versions = store.subscribe();
    let running = session.spawn_loop();
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().build()?;
    rt.block_on(async {
        for _ in 0..3 {
            let Ok(Ok(v)) = tokio::time::timeout(Duration::from_secs(120), versions.recv()).await else { break };
            let snap = store.get(v).expect("just published");
            let s = snap.stats;
            println!(
                "v{v}: {} faces, {} high, {} tentative, {} unknown",
                s.detections, s.matched_high, s.matched_tentative, s.unknown
            );
        }
    });
    running.stop();
    Ok(())
}
