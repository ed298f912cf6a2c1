//! Talks to a detector process over newline-delimited JSON.
//!
//! The stand-in adapter below reports one fixed face per tile; a real one
//! would decode `png_b64`, detect, align and embed.

use std::time::Duration;

use namemo::capture::TileImage;
use namemo::geometry::TilePose;
use namemo::vision::{AdapterBackend, VisionBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embedding = vec!["0.0883883"; 128].join(",");
    let command = format!(
        "while read -r line; do echo '{{\"detections\":[{{\"bbox\":[100,80,60,70],\
         \"landmarks\":[[115,100],[145,100],[130,115],[118,130],[142,130]],\
         \"embedding\":[{embedding}],\"score\":0.97}}]}}'; done"
    );
    let backend = AdapterBackend::spawn(&command, Duration::from_secs(5))?;
    let pose = TilePose { tile_id: 3, pan_deg: 10.0, tilt_deg: -20.0 };
    let tile = TileImage::new(pose, 320, 240, vec![128; 320 * 240 * 3], Duration::ZERO, None, None)?;

    let request = AdapterBackend::encode_request(&tile)?;
    println!("request: {}...", &request[..60]);
    for d in backend.detect_and_embed(&tile)? {
        println!("face {:?} score {:.2} |e| = {:.6}", d.bbox, d.det_score, d.embedding.norm());
    }
    Ok(())
}
