//! Top-1 accuracy as embedding noise grows.
//!
//! ```bash
//! cargo run --release --example accuracy_harness
//! ```

use namemo::harness::{run_accuracy_harness, HarnessOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("noise  top1     high     dup");
    for step in 8..=16 {
        let noise = f64::from(step) / 100.0;
        let r = run_accuracy_harness(&HarnessOptions::new(161, noise, 10, 1))?;
        println!("{noise:.2}   {:.4}   {:.4}   {}", r.top1_accuracy, r.high_band_rate, r.duplicate_assignments);
    }
    Ok(())
}
