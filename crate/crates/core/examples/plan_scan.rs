//! Scan plan for the default room, then for a smaller room with a wider lens.
//!
//! ```bash
//! cargo run --example plan_scan
//! ```

use namemo::geometry::{compute_fov, pan_travel, row_major_order, RoomModel};
use namemo::profile::RunProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = RunProfile::feasibility_test();
    let plan = p.plan()?;
    let (hfov, vfov) = compute_fov(&p.intrinsics);
    println!("fov {hfov:.2} x {vfov:.2} deg");
    println!(
        "{} tiles ({} x {}), covered {:.3}, cycle {:.1}s",
        plan.len(),
        plan.columns,
        plan.rows,
        plan.covered_fraction,
        p.estimated_cycle_s(&plan)
    );
    println!(
        "pan travel: serpentine {:.0} deg, row-major {:.0} deg",
        pan_travel(&plan.tiles),
        pan_travel(&row_major_order(&plan))
    );
    for t in plan.tiles.iter().take(10) {
        println!("  tile {:2}  pan {:7.2}  tilt {:6.2}", t.tile_id, t.pan_deg, t.tilt_deg);
    }

    let mut seminar = p.clone();
    seminar.room = RoomModel::new(9.0, 7.0, 1.0);
    seminar.intrinsics.focal_length_mm = 16.0;
    let small = seminar.plan()?;
    println!("seminar room, 16 mm: {} tiles, cycle {:.1}s", small.len(), seminar.estimated_cycle_s(&small));
    Ok(())
}
