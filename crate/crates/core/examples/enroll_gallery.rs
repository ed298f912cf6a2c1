//! Builds a gallery file, opts one student out and reads it back.

use namemo::capture::{generate_scene, IdentityBank};
use namemo::gallery::{Consent, GalleryStore, StudentRecord};
use namemo::profile::RunProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("namemo-gallery-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("gallery.ndjson");

    let scene = generate_scene(12, &RunProfile::feasibility_test().room, 3)?;
    let bank = IdentityBank::for_scene(&scene);
    let store = GalleryStore::open(&path)?;
    for (id, e) in bank.iter() {
        store.enroll(StudentRecord::new(id, format!("Student {id}"), e.clone()).with_profile("year", "2"))?;
    }
    let v = store.set_consent("S004", Consent::OptedOut)?;
    println!("gallery version {v}, {} matchable", store.snapshot().entries.len());

    let reopened = GalleryStore::open(&path)?;
    println!("reopened at version {}", reopened.version());
    println!("S004 matchable after reopen: {}", reopened.matchable("S004").is_some());
    println!("header: {}", std::fs::read_to_string(&path)?.lines().next().unwrap_or_default());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
