use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namemo::boxes::BBox;
use namemo::embedding::Embedding;
use namemo::gallery::{Gallery, StudentRecord};
use namemo::geometry::{pan_travel, row_major_order, travel_time, RoomModel, TilePose};
use namemo::matcher::{band, match_cycle, total_confidence, Assignment, Band, DetectionRef, GalleryEntry, MatchPolicy, Probe};
use namemo::profile::RunProfile;
use namemo::stitch::{sphere_to_pano, sphere_to_tile_pixel, tile_pixel_to_sphere, CanvasSpec, Stitcher};

fn instance(seed: u64, n: usize, m: usize) -> (Vec<Embedding>, Vec<GalleryEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Embedding::random(&mut rng);
    let gallery: Vec<GalleryEntry> = (0..m)
        .map(|j| GalleryEntry {
            student_id: format!("S{j:03}"),
            embedding: base.at_similarity(0.55 + 0.4 * (j as f64 / m as f64), &mut rng),
        })
        .collect();
    let probes = (0..n)
        .map(|i| gallery[(i * 7 + seed as usize) % m].embedding.at_similarity(0.6 + 0.39 * ((i * 13 % 10) as f64 / 10.0), &mut rng))
        .collect();
    (probes, gallery)
}

fn probes(embeddings: &[Embedding]) -> Vec<Probe<'_>> {
    embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| Probe { detection_ref: DetectionRef { tile_id: (i / 3) as u32, index: i % 3 }, embedding: e })
        .collect()
}

fn policy(a: Assignment) -> MatchPolicy {
    MatchPolicy { assignment: a, ..MatchPolicy::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tile_pixel_round_trip(pan in -150.0..150.0f64, tilt in -80.0..25.0f64, px in 0.0..640.0f64, py in 0.0..480.0f64) {
        let intr = RunProfile::feasibility_test().intrinsics;
        let pose = TilePose { tile_id: 0, pan_deg: pan, tilt_deg: tilt };
        let s = tile_pixel_to_sphere(&pose, (px, py), &intr);
        let back = sphere_to_tile_pixel(&pose, s, &intr).unwrap();
        prop_assert!((back.0 - px).abs() < 1e-6 && (back.1 - py).abs() < 1e-6);
    }

    #[test]
    fn canvas_pixels_stay_in_bounds(fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let p = RunProfile::feasibility_test();
        let plan = p.plan().unwrap();
        let st = Stitcher::new(&plan, &p.intrinsics, &CanvasSpec { deg_per_px: None, max_dim_px: 300 }).unwrap();
        let l = st.layout();
        let az = l.az_range_deg[0] + fx * (l.az_range_deg[1] - l.az_range_deg[0]);
        let el = l.el_range_deg[0] + fy * (l.el_range_deg[1] - l.el_range_deg[0]);
        let (x, y) = sphere_to_pano(az, el, l).unwrap();
        prop_assert!(x < l.width_px && y < l.height_px);
        let (a2, e2) = l.canvas_to_sphere(f64::from(x) + 0.5, f64::from(y) + 0.5);
        let (dx, dy) = l.deg_per_px();
        prop_assert!((a2 - az).abs() <= dx && (e2 - el).abs() <= dy);
    }

    #[test]
    fn more_overlap_never_means_fewer_tiles(w in 6.0..24.0f64, d in 5.0..18.0f64, lo in 0.0..0.2f64, extra in 0.0..0.25f64) {
        let mut p = RunProfile::feasibility_test();
        p.room = RoomModel::new(w, d, 1.0);
        p.overlap = lo;
        let a = p.plan().unwrap();
        p.overlap = lo + extra;
        let b = p.plan().unwrap();
        prop_assert!(b.len() >= a.len());
        prop_assert!(a.covered_fraction >= 0.99 && b.covered_fraction >= 0.99);
    }

    #[test]
    fn serpentine_never_travels_more_than_row_major(w in 6.0..24.0f64, d in 5.0..18.0f64, focal in 20.0..50.0f64) {
        let mut p = RunProfile::feasibility_test();
        p.room = RoomModel::new(w, d, 1.0);
        p.intrinsics.focal_length_mm = focal;
        let plan = p.plan().unwrap();
        let rm = row_major_order(&plan);
        prop_assert!(pan_travel(&plan.tiles) <= pan_travel(&rm) + 1e-9);
        prop_assert!(travel_time(&plan.tiles, &p.mount) <= travel_time(&rm, &p.mount) + 1e-9);
        let ids: HashSet<u32> = plan.tiles.iter().map(|t| t.tile_id).collect();
        prop_assert_eq!(ids.len(), plan.len());
    }

    #[test]
    fn optimal_total_is_at_least_greedy(seed in any::<u64>(), n in 1usize..9, m in 1usize..9) {
        let (emb, gallery) = instance(seed, n, m);
        let probes = probes(&emb);
        let g = match_cycle(&probes, &gallery, &policy(Assignment::Greedy));
        let o = match_cycle(&probes, &gallery, &policy(Assignment::Optimal));
        prop_assert!(total_confidence(&o) >= total_confidence(&g) - 1e-12);
        for results in [&g, &o] {
            let mut seen = HashSet::new();
            for r in results.iter() {
                if let Some(id) = &r.student_id {
                    prop_assert!(seen.insert(id.clone()), "{} assigned twice", id);
                    prop_assert!(r.confidence >= 0.5);
                    prop_assert_ne!(r.band, Band::Unknown);
                } else {
                    prop_assert_eq!(r.band, Band::Unknown);
                }
            }
            prop_assert_eq!(results.len(), n);
        }
    }

    #[test]
    fn matching_ignores_probe_order(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, optimal in any::<bool>()) {
        let (emb, gallery) = instance(seed, n, m);
        let pol = policy(if optimal { Assignment::Optimal } else { Assignment::Greedy });
        let base = probes(&emb);
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let by_ref = |results: Vec<namemo::matcher::MatchResult>| -> HashMap<DetectionRef, Option<String>> {
            results.into_iter().map(|r| (r.detection_ref, r.student_id)).collect()
        };
        let a = match_cycle(&base, &gallery, &pol);
        let b = match_cycle(&shuffled, &gallery, &pol);
        prop_assert!((total_confidence(&a) - total_confidence(&b)).abs() < 1e-9);
        prop_assert_eq!(by_ref(a), by_ref(b));
    }

    #[test]
    fn bands_are_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let p = MatchPolicy::default();
        let rank = |x: Band| match x { Band::Unknown => 0, Band::Tentative => 1, Band::High => 2 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(band(lo, &p)) <= rank(band(hi, &p)));
    }

    #[test]
    fn embeddings_survive_gallery_serialization_bit_for_bit(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Gallery::new();
        for i in 0..n {
            g.enroll(StudentRecord::new(format!("S{i}"), format!("N{i}"), Embedding::random(&mut rng))).unwrap();
        }
        let back = Gallery::from_bytes(&g.to_bytes()).unwrap();
        for (a, b) in g.records().zip(back.records()) {
            let bits = |e: &Embedding| e.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.gallery_embedding), bits(&b.gallery_embedding));
        }
        prop_assert_eq!(back, g);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(x in 0.0..50.0f64, y in 0.0..50.0f64, w in 0.1..30.0f64, h in 0.1..30.0f64,
                                    x2 in 0.0..50.0f64, y2 in 0.0..50.0f64, w2 in 0.1..30.0f64, h2 in 0.1..30.0f64) {
        let (a, b) = (BBox::new(x, y, w, h), BBox::new(x2, y2, w2, h2));
        let i = a.iou(&b);
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!((i - b.iou(&a)).abs() < 1e-12);
        prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
    }
}
