//! Five-point similarity alignment onto the 112 px template.

use namemo::vision::{compute_alignment, ALIGNED_CROP_PX, CANONICAL_TEMPLATE_112, NOSE};

fn main() {
    // The template scaled by 0.5, rotated 20 degrees and shifted.
    let (s, c) = 20f64.to_radians().sin_cos();
    let landmarks = CANONICAL_TEMPLATE_112.map(|[x, y]| [0.5 * (c * x - s * y) + 300.0, 0.5 * (s * x + c * y) + 140.0]);
    let t = compute_alignment(&landmarks, &CANONICAL_TEMPLATE_112).expect("landmarks are spread out");
    println!("scale {:.4}, rotation {:.2} deg, translation ({:.2}, {:.2})", t.scale, t.rotation_deg, t.translation.0, t.translation.1);
    println!("residual {:.2e}", t.residual(&landmarks, &CANONICAL_TEMPLATE_112));
    let nose = t.apply(landmarks[NOSE]);
    println!("nose lands at ({:.2}, {:.2}) in the {ALIGNED_CROP_PX} px crop", nose[0], nose[1]);

    let collinear = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
    println!("collinear points: {:?}", compute_alignment(&collinear, &CANONICAL_TEMPLATE_112).err());
}
