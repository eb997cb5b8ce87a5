//! Ensemble simulation over detection times, phase-stabilization noise and
//! frequency jitter.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_unit, invalid, Result};
use crate::fitlab::{fit_cosine_joint, CosinePoint};
use crate::nv::{entangled_phase, fidelity, nv_elements, NvLinkParams, PhaseModel, Weights};
use crate::protocol::{DensityMatrix4, DetectionWindow, Port};

/// FWHM/σ of a Gaussian, 2√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Samples per independent random stream.
const BLOCK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Noise-click probability per window.
    pub p_d: f64,
    /// Standard deviation of the phase setpoint, rad.
    pub sigma_phase: f64,
    /// FWHM of the emitter frequency difference, MHz.
    pub freq_fwhm: f64,
    /// Mean frequency difference f_A − f_B, MHz.
    pub freq_offset: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            p_d: 0.0,
            sigma_phase: 0.0,
            freq_fwhm: 0.0,
            freq_offset: 0.0,
        }
    }
}

impl NoiseParams {
    pub fn freq_sigma(&self) -> f64 {
        self.freq_fwhm / FWHM_PER_SIGMA
    }

    pub fn with_freq_sigma(mut self, sigma_mhz: f64) -> Self {
        self.freq_fwhm = sigma_mhz * FWHM_PER_SIGMA;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("p_d", self.p_d)?;
        check_finite("freq_offset", self.freq_offset)?;
        for (name, v) in [("sigma_phase", self.sigma_phase), ("freq_fwhm", self.freq_fwhm)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Sampling setup shared by all ensemble runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Excited-state lifetime, ns.
    pub tau: f64,
    /// Detection times relative to the pulse peak, ns.
    pub window: DetectionWindow,
    pub bin_width: f64,
    /// Superposition phases ϑ_A, ϑ_B.
    pub vartheta: [f64; 2],
    /// dL/c, ns.
    pub path_delay: f64,
    pub n: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    pub workers: usize,
}

impl EnsembleConfig {
    pub fn new(tau: f64, window: DetectionWindow, n: usize, seed: u64) -> Self {
        Self {
            tau,
            window,
            bin_width: 1.0,
            vartheta: [0.0; 2],
            path_delay: 0.0,
            n,
            seed,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", "lifetime must be > 0"));
        }
        if !(self.bin_width > 0.0) {
            return Err(invalid("bin_width", "must be > 0"));
        }
        if self.n == 0 {
            return Err(invalid("n", "need at least one sample"));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        ((self.window.duration / self.bin_width).ceil() as usize).max(1)
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let k = self.bin_count();
        (0..=k)
            .map(|i| (self.window.start + i as f64 * self.bin_width).min(self.window.end()))
            .collect()
    }
}

/// Stream for sample block `block` of a run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Probability density of the truncated exponential on the window.
pub fn detection_time_density(tau: f64, window: &DetectionWindow, t: f64) -> f64 {
    if !window.contains(t) {
        return 0.0;
    }
    let mass = -(-window.duration / tau).exp_m1();
    if mass <= 0.0 {
        return f64::INFINITY;
    }
    (-(t - window.start) / tau).exp() / (tau * mass)
}

/// Draw from the density ∝ e^{−t/τ} on the window.
pub fn sample_detection_time<R: Rng + ?Sized>(tau: f64, window: &DetectionWindow, rng: &mut R) -> f64 {
    if window.duration <= 0.0 {
        return window.start;
    }
    let mass = -(-window.duration / tau).exp_m1();
    let u: f64 = rng.random();
    let t = window.start - tau * (-u * mass).ln_1p();
    t.clamp(window.start, window.end())
}

/// Mean of the truncated exponential.
pub fn truncated_mean(tau: f64, window: &DetectionWindow) -> f64 {
    let d = window.duration;
    if d <= 0.0 {
        return window.start;
    }
    let e = (-d / tau).exp();
    window.start + tau - d * e / (1.0 - e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    pub fidelity: f64,
    pub stderr: f64,
    /// Phase of the click-weighted mean coherence, rad.
    pub phase: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub bin_edges: Vec<f64>,
    /// `None` for bins without samples.
    pub bins: Vec<Option<BinStat>>,
    /// Window-integrated herald probability, both ports.
    pub p_click: f64,
    pub port_click: [f64; 2],
    /// Click-weighted fidelity over the whole window.
    pub fidelity: f64,
    pub fidelity_stderr: f64,
    /// Click-weighted mean heralded state per port (C, D).
    pub mean_state: [DensityMatrix4; 2],
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    w: f64,
    w2: f64,
    wf: f64,
    w2f: f64,
    w2f2: f64,
    coherence: Complex64,
}

impl Moments {
    fn push(&mut self, w: f64, f: f64, coh: Complex64) {
        self.w += w;
        self.w2 += w * w;
        self.wf += w * f;
        self.w2f += w * w * f;
        self.w2f2 += w * w * f * f;
        self.coherence += coh * w;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.w += o.w;
        self.w2 += o.w2;
        self.wf += o.wf;
        self.w2f += o.w2f;
        self.w2f2 += o.w2f2;
        self.coherence += o.coherence;
    }

    fn mean(&self) -> f64 {
        self.wf / self.w
    }

    /// Standard error of the ratio estimator Σwf/Σw.
    fn stderr(&self) -> f64 {
        let m = self.mean();
        let var = (self.w2f2 - 2.0 * m * self.w2f + m * m * self.w2) / (self.w * self.w);
        var.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
struct Acc {
    bins: Vec<Moments>,
    total: Moments,
    port_click: [f64; 2],
    state: [DensityMatrix4; 2],
}

impl Acc {
    fn new(k: usize) -> Self {
        Self {
            bins: vec![Moments::default(); k],
            total: Moments::default(),
            port_click: [0.0; 2],
            state: [DensityMatrix4::zero(); 2],
        }
    }

    fn merge(&mut self, o: &Acc) {
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.merge(b);
        }
        self.total.merge(&o.total);
        for i in 0..2 {
            self.port_click[i] += o.port_click[i];
            self.state[i] = self.state[i] + o.state[i];
        }
    }
}

/// One heralding attempt's random draws.
#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub t_d: f64,
    pub delta_phi: f64,
    /// f_A − f_B, MHz.
    pub delta_f: f64,
}

pub fn draw<R: Rng + ?Sized>(link: &NvLinkParams, noise: &NoiseParams, cfg: &EnsembleConfig, rng: &mut R) -> Draw {
    let t_d = sample_detection_time(cfg.tau, &cfg.window, rng);
    let z1: f64 = rng.sample(rand_distr::StandardNormal);
    let z2: f64 = rng.sample(rand_distr::StandardNormal);
    Draw {
        t_d,
        delta_phi: link.phase_setpoint + noise.sigma_phase * z1,
        delta_f: noise.freq_offset + noise.freq_sigma() * z2,
    }
}

/// Entangled-state phase for one draw. Δf in MHz becomes an angular
/// detuning in rad/ns on node A.
pub fn draw_phase(link: &NvLinkParams, cfg: &EnsembleConfig, d: &Draw) -> f64 {
    let pm = PhaseModel {
        vartheta_a: cfg.vartheta[0],
        vartheta_b: cfg.vartheta[1],
        delta_phi: d.delta_phi,
        delta_a: link.detuning[0] + std::f64::consts::TAU * d.delta_f * 1e-3,
        delta_b: link.detuning[1],
        dl_over_c: cfg.path_delay,
    };
    entangled_phase(&pm, d.t_d)
}

/// Link parameters with time-resolved weights: η is taken as the
/// window-integrated detection probability, so the single-photon weight is
/// the normalized detection-time density, and noise is spread uniformly.
fn instantaneous(link: &NvLinkParams, noise: &NoiseParams, cfg: &EnsembleConfig, t: f64) -> (NvLinkParams, Weights, f64) {
    let q = detection_time_density(cfg.tau, &cfg.window, t);
    let mut p = link.clone();
    p.p_d = noise.p_d / cfg.window.duration;
    let w = Weights::new([q, q], link.p_de);
    (p, w, q)
}

fn run_block(link: &NvLinkParams, noise: &NoiseParams, cfg: &EnsembleConfig, block: usize) -> Acc {
    let k = cfg.bin_count();
    let mut acc = Acc::new(k);
    let mut rng = block_rng(cfg.seed, block as u64);
    let lo = block * BLOCK;
    let hi = ((block + 1) * BLOCK).min(cfg.n);
    for _ in lo..hi {
        let d = draw(link, noise, cfg, &mut rng);
        let phase = draw_phase(link, cfg, &d);
        let (p, w, q) = instantaneous(link, noise, cfg, d.t_d);
        let bin = (((d.t_d - cfg.window.start) / cfg.bin_width) as usize).min(k - 1);
        acc.bins[bin].n += 1;
        acc.total.n += 1;
        for (i, port) in Port::both().into_iter().enumerate() {
            let (rho, pc) = nv_elements(&p, &w, phase, port);
            if !(pc > 0.0) {
                continue;
            }
            let weight = pc / q;
            let f = fidelity(&(rho * (1.0 / pc)), link.target_phase, port);
            let coh = rho.get(1, 2) * (port.sign() / pc);
            acc.bins[bin].push(weight, f, coh);
            acc.total.push(weight, f, coh);
            acc.port_click[i] += weight;
            acc.state[i] = acc.state[i] + rho * (1.0 / q);
        }
    }
    acc
}

/// Monte Carlo over detection time, phase setpoint and frequency jitter.
/// Bitwise reproducible for a given seed, independent of `cfg.workers`.
pub fn run_ensemble(link: &NvLinkParams, noise: &NoiseParams, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    link.validate()?;
    noise.validate()?;
    cfg.validate()?;
    let blocks = cfg.n.div_ceil(BLOCK);
    let parts: Vec<Acc> = with_workers(cfg.workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|b| run_block(link, noise, cfg, b))
            .collect()
    })?;
    let mut acc = Acc::new(cfg.bin_count());
    for p in &parts {
        acc.merge(p);
    }

    let n = cfg.n as f64;
    let bins = acc
        .bins
        .iter()
        .map(|m| {
            (m.n > 0 && m.w > 0.0).then(|| BinStat {
                fidelity: m.mean(),
                stderr: m.stderr(),
                phase: -m.coherence.arg(),
                samples: m.n,
            })
        })
        .collect();
    let mut mean_state = [DensityMatrix4::zero(); 2];
    for i in 0..2 {
        if acc.port_click[i] > 0.0 {
            mean_state[i] = acc.state[i].normalize()?;
        }
    }
    Ok(EnsembleResult {
        bin_edges: cfg.bin_edges(),
        bins,
        p_click: (acc.port_click[0] + acc.port_click[1]) / n,
        port_click: [acc.port_click[0] / n, acc.port_click[1] / n],
        fidelity: acc.total.mean(),
        fidelity_stderr: acc.total.stderr(),
        mean_state,
        n_samples: cfg.n,
    })
}

/// Runs `f` on a pool of `workers` threads (0: rayon's default pool).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    Ok(pool.install(f))
}

/// ⟨σ_β ⊗ σ_X⟩ with σ_β = cos β X + sin β Y on node A.
pub fn correlator(rho: &DensityMatrix4, beta: f64) -> f64 {
    let e = Complex64::from_polar(1.0, beta);
    let z = Complex64::new(0.0, 0.0);
    let sb = [[z, e.conj()], [e, z]];
    let one = Complex64::new(1.0, 0.0);
    let sx = [[z, one], [one, z]];
    let mut op = nalgebra::Matrix4::<Complex64>::zeros();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    op[(2 * a + b, 2 * c + d)] = sb[a][c] * sx[b][d];
                }
            }
        }
    }
    rho.expectation_of(&op)
}

/// Projective readout of `rho` at each angle with `shots` repetitions; the
/// correlator is the mean of the ±1 outcome products with binomial error.
pub fn sample_correlations<R: Rng + ?Sized>(
    rho: &DensityMatrix4,
    port: Port,
    angles: &[f64],
    shots: u64,
    rng: &mut R,
) -> Result<Vec<CosinePoint>> {
    if shots == 0 {
        return Err(invalid("shots", "need at least one shot"));
    }
    angles
        .iter()
        .map(|&beta| {
            let e = correlator(rho, beta).clamp(-1.0, 1.0);
            let k = Binomial::new(shots, 0.5 * (1.0 + e))
                .map_err(|err| invalid("correlator", err.to_string()))?
                .sample(rng);
            let n = shots as f64;
            let est = 2.0 * k as f64 / n - 1.0;
            let var = (1.0 - est * est).max(1.0 / n) / n;
            Ok(CosinePoint {
                angle: beta,
                sign: port.sign(),
                value: est,
                sigma: Some(var.sqrt()),
            })
        })
        .collect()
}

/// Ensemble-averaged heralded states read out at `angles` with `shots`
/// per angle and port.
pub fn simulate_readout_correlations(
    link: &NvLinkParams,
    noise: &NoiseParams,
    cfg: &EnsembleConfig,
    angles: &[f64],
    shots: u64,
) -> Result<Vec<CosinePoint>> {
    let res = run_ensemble(link, noise, cfg)?;
    let mut rng = block_rng(cfg.seed, u64::MAX);
    let mut out = Vec::new();
    for (i, port) in Port::both().into_iter().enumerate() {
        out.extend(sample_correlations(&res.mean_state[i], port, angles, shots, &mut rng)?);
    }
    Ok(out)
}

/// Joint cosine fit of port-tagged correlators: (φ, standard error).
pub fn extract_phase(points: &[CosinePoint]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(invalid("correlations", "need at least 4 readout angles"));
    }
    let (c, d): (Vec<CosinePoint>, Vec<CosinePoint>) = points.iter().partition(|p| p.sign > 0.0);
    let r = fit_cosine_joint(&c, &d)?;
    Ok((r.get("phi").unwrap_or(f64::NAN), r.stderr("phi").unwrap_or(f64::NAN)))
}
