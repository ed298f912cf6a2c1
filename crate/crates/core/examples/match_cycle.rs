//! One-to-one matching of noisy probes, greedy against optimal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namemo::embedding::Embedding;
use namemo::matcher::{match_cycle, total_confidence, Assignment, DetectionRef, GalleryEntry, MatchPolicy, Probe};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let twin = Embedding::random(&mut rng);
    // Two look-alikes and one distinct student.
    let gallery = vec![
        GalleryEntry { student_id: "S001".into(), embedding: twin.at_similarity(0.9, &mut rng) },
        GalleryEntry { student_id: "S002".into(), embedding: twin.at_similarity(0.9, &mut rng) },
        GalleryEntry { student_id: "S003".into(), embedding: Embedding::random(&mut rng) },
    ];
    let seen: Vec<Embedding> = vec![
        gallery[0].embedding.at_similarity(0.85, &mut rng),
        gallery[1].embedding.at_similarity(0.75, &mut rng),
        gallery[2].embedding.at_similarity(0.6, &mut rng),
        Embedding::random(&mut rng),
    ];
    let probes: Vec<Probe<'_>> = seen
        .iter()
        .enumerate()
        .map(|(i, e)| Probe { detection_ref: DetectionRef { tile_id: 0, index: i }, embedding: e })
        .collect();
    for assignment in [Assignment::Greedy, Assignment::Optimal] {
        let policy = MatchPolicy { assignment, ..MatchPolicy::default() };
        let results = match_cycle(&probes, &gallery, &policy);
        println!("{assignment:?}: total {:.4}", total_confidence(&results));
        for r in &results {
            println!("  face {} -> {:?} {:?} {:.3}", r.detection_ref.index, r.student_id, r.band, r.confidence);
        }
    }
}
