//! Independent Monte-Carlo estimate of the largest embedding noise that
//! still names 99.5% of a 161-student class, written without the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DIM: usize = 128;
const CLASS: usize = 161;
const ACCEPT: f64 = 0.5;

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(rng: &mut impl Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.sample(StandardNormal)).collect()
}

fn identities(rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < CLASS {
        let mut v = gaussian(rng);
        unit(&mut v);
        if out.iter().all(|u| dot(u, &v) < ACCEPT) {
            out.push(v);
        }
    }
    out
}

/// Share of probes whose best match is their own identity at or above the
/// acceptance threshold. Noise is isotropic in the tangent plane.
fn accuracy(ids: &[Vec<f64>], sigma: f64, trials: usize, rng: &mut impl Rng) -> f64 {
    let mut ok = 0;
    for _ in 0..trials {
        for (i, g) in ids.iter().enumerate() {
            let mut n = gaussian(rng);
            let along = dot(&n, g);
            let mut p: Vec<f64> = g.iter().zip(&mut n).map(|(g, n)| g + sigma * (*n - along * g)).collect();
            unit(&mut p);
            let (best, score) = ids
                .iter()
                .map(|u| dot(&p, u))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
            if best == i && score >= ACCEPT {
                ok += 1;
            }
        }
    }
    ok as f64 / (trials * ids.len()) as f64
}

#[test]
fn largest_noise_meeting_the_accuracy_bar_is_0_13() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ids = identities(&mut rng);
    let mut sigma_star = None;
    for step in 10..=16 {
        let sigma = f64::from(step) / 100.0;
        let acc = accuracy(&ids, sigma, 30, &mut rng);
        if acc < 0.995 {
            break;
        }
        sigma_star = Some(step);
    }
    assert_eq!(sigma_star, Some(13));
}
