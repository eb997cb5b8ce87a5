//! Random discrete-mode cases for the Fock-space reference.

use heraldsim::protocol::{DiscreteModes, NodeParams};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const BINS: usize = 3;

pub fn random_amps(rng: &mut ChaCha8Rng, n: usize, mass: f64) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let s: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z * (mass.sqrt() / s)).collect()
}

pub fn random_node(rng: &mut ChaCha8Rng) -> (NodeParams, Vec<Complex64>, Vec<Vec<Complex64>>) {
    let mut w = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    if rng.random_bool(0.2) {
        w[0] = 0.0;
    }
    if rng.random_bool(0.2) {
        w[2] = 0.0;
    }
    let s: f64 = w.iter().sum();
    let (c0, ce2, cee2) = ((w[0] / s).sqrt(), w[1] / s, w[2] / s);
    let p = NodeParams::new(rng.random_range(0.0..1.0), rng.random_range(0.05..1.0))
        .with_amplitudes(c0, cee2.sqrt())
        .with_phase(rng.random_range(0.0..std::f64::consts::TAU));
    let single = random_amps(rng, BINS, ce2);
    let flat = random_amps(rng, BINS * (BINS - 1) / 2, cee2);
    let mut pair = vec![vec![Complex64::new(0.0, 0.0); BINS]; BINS];
    let mut it = flat.into_iter();
    for k in 0..BINS {
        for l in k + 1..BINS {
            pair[k][l] = it.next().unwrap();
        }
    }
    (p, single, pair)
}

/// Two random nodes with their mode functions and polarization overlap.
pub fn random_case(rng: &mut ChaCha8Rng, case: usize) -> (NodeParams, NodeParams, DiscreteModes, f64) {
    let (a, sa, pa) = random_node(rng);
    let (b, sb, pb) = random_node(rng);
    let modes = DiscreteModes { single: [sa, sb], pair: [pa, pb] };
    let pol_dot = if case.is_multiple_of(3) { 1.0 } else { rng.random_range(0.0..1.0) };
    (a, b, modes, pol_dot)
}

/// Click records over the bins: none, one click, and two ordered clicks
/// when they fit.
pub fn random_records(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let t1 = rng.random_range(0..BINS);
    let t2 = rng.random_range(t1 + 1..=BINS);
    if t2 < BINS {
        vec![vec![], vec![t1], vec![t1, t2]]
    } else {
        vec![vec![], vec![t1]]
    }
}
