//! Regenerates the bundled data files in `data/`.
//!
//! cargo run -p heraldsim --example make_fixtures

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).unwrap().sample(rng)
}

fn main() -> std::io::Result<()> {
    let dir = data_dir();
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Excitation pulse: Gaussian core (2 ns FWHM) with a weak exponential
    // tail from the modulator.
    let mut s = String::from("t_ns,intensity\n");
    for i in 0..=360 {
        let t = -6.0 + 0.05 * i as f64;
        let core = (-4.0 * std::f64::consts::LN_2 * t * t / 4.0).exp();
        let tail = if t > 0.0 { 0.03 * (-t / 1.5).exp() } else { 0.0 };
        writeln!(s, "{t:.2},{:.8}", core + tail).unwrap();
    }
    std::fs::write(dir.join("pulse.csv"), s)?;

    // Detection-time histogram, τ = 12.43 ns, 1e7 photons in 0.25 ns bins.
    let tau = 12.43;
    let total = 1e7;
    let width = 0.25;
    let mut s = String::from("t_ns,counts\n");
    for i in 0..400 {
        let a = i as f64 * width;
        let mean = total * ((-a / tau).exp() - (-(a + width) / tau).exp());
        writeln!(s, "{a:.2},{}", poisson(mean, &mut rng)).unwrap();
    }
    std::fs::write(dir.join("lifetime.csv"), s)?;

    // Photoluminescence excitation scan: Lorentzian, 13 MHz FWHM, on a
    // background of 5 counts.
    let (area, gamma, bg) = (3000.0, 13.0, 5.0);
    let mut s = String::from("detuning_mhz,counts\n");
    for i in 0..=40 {
        let x = -40.0 + 2.0 * i as f64;
        let mean = area / std::f64::consts::PI * (gamma / 2.0) / (x * x + gamma * gamma / 4.0) + bg;
        writeln!(s, "{x:.1},{}", poisson(mean, &mut rng)).unwrap();
    }
    std::fs::write(dir.join("lorentzian.csv"), s)?;

    // Linewidth vs. excitation power: γ = √(γ0² + b·P), γ0 = 12.4 MHz,
    // b = 690 MHz²/nW, σ = 0.4 MHz.
    let noise = Normal::new(0.0, 0.4).unwrap();
    let mut s = String::from("power_nw,linewidth_mhz,sigma_mhz\n");
    for i in 0..=15 {
        let p = 0.1 * i as f64;
        let g = (12.4f64 * 12.4 + 690.0 * p).sqrt() + noise.sample(&mut rng);
        writeln!(s, "{p:.2},{g:.4},0.4").unwrap();
    }
    std::fs::write(dir.join("power_broadening.csv"), s)?;
    Ok(())
}
