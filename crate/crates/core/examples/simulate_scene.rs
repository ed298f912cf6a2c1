//! Synthetic classroom: seats, presence and what one tile sees.

use namemo::capture::{generate_scene, CaptureSource, Simulator};
use namemo::profile::RunProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = RunProfile::feasibility_test();
    let scene = generate_scene(161, &p.room, 7)?;
    println!("{} students, {} present", scene.students.len(), scene.present_ids().count());
    let s = &scene.students[0];
    println!("{} sits at ({:.2}, {:.2})", s.student_id, s.seat[0], s.seat[1]);

    let plan = p.plan()?;
    let mut sim = Simulator::new(p.room, p.intrinsics, p.mount, scene);
    sim.begin_cycle(1);
    let pose = &plan.tiles[plan.len() / 2];
    let tile = sim.capture_tile(pose)?;
    let truth = tile.sim_truth.as_ref().expect("simulated tiles carry truth");
    println!("tile {} ({}x{}) shows {} faces:", tile.tile_id, tile.width, tile.height, truth.entries.len());
    for e in &truth.entries {
        println!("  {} at ({:.0}, {:.0}) {:.0}x{:.0}", e.student_id, e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h);
    }
    Ok(())
}
