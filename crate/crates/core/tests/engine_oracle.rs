mod common;

use common::cases::{random_case, random_records};
use common::oracle::oracle_density;
use heraldsim::protocol::{pattern_density, LossSelection};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn engine_matches_fock_space_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for case in 0..120 {
        let (a, b, modes, pol_dot) = random_case(&mut rng, case);
        for rec in &random_records(&mut rng) {
            let times: Vec<f64> = rec.iter().map(|&k| k as f64).collect();
            for sign in [1.0, -1.0] {
                for sel in [LossSelection::NoLoss, LossSelection::WithLoss, LossSelection::Any] {
                    let got = pattern_density(&a, &b, pol_dot, &modes, &times, sign, sel);
                    let want = oracle_density(&a, &b, pol_dot, &modes, rec, sign, sel);
                    let diff = (got.matrix() - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    worst = worst.max(diff);
                    assert!(diff < 1e-8, "case {case} rec {rec:?} sign {sign} {sel:?}: {diff}");
                }
            }
        }
    }
    eprintln!("worst deviation {worst:e}");
}
