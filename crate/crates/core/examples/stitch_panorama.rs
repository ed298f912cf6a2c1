//! Captures every tile of a cycle and composes the panorama PNG.
//!
//! ```bash
//! cargo run --release --example stitch_panorama -- /tmp/pano.png
//! ```

use namemo::capture::{generate_scene, CaptureSource, Simulator};
use namemo::profile::RunProfile;
use namemo::stitch::{CanvasSpec, Stitcher};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "panorama.png".into());
    let p = RunProfile::feasibility_test();
    let plan = p.plan()?;
    let mut sim = Simulator::new(p.room, p.intrinsics, p.mount, generate_scene(161, &p.room, 1)?);
    sim.begin_cycle(1);
    let tiles = plan.tiles.iter().map(|t| sim.capture_tile(t)).collect::<Result<Vec<_>, _>>()?;

    let stitcher = Stitcher::new(&plan, &p.intrinsics, &CanvasSpec { deg_per_px: None, max_dim_px: 1600 })?;
    let l = stitcher.layout();
    println!(
        "canvas {}x{} covering az {:.1}..{:.1}, el {:.1}..{:.1}",
        l.width_px, l.height_px, l.az_range_deg[0], l.az_range_deg[1], l.el_range_deg[0], l.el_range_deg[1]
    );
    let canvas = stitcher.compose(&tiles)?;
    std::fs::write(&out, canvas.to_png()?)?;
    println!("wrote {out}");
    Ok(())
}
