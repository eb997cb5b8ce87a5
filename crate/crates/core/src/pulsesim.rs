//! Two-level emitter driven by a sampled excitation pulse: emission-number
//! statistics, pulse area and double-excitation probability.

use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HeraldError, Result};
use crate::fitlab::read_csv;
use crate::protocol::DetectionWindow;

/// Largest integration step, ns.
pub const MAX_STEP: f64 = 0.05;

/// Intensity samples on a uniform grid. The Rabi frequency (rad/ns) is
/// `scale·√I(t)`, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub t0: f64,
    pub dt: f64,
    pub intensity: Vec<f64>,
    pub scale: f64,
}

impl PulseShape {
    pub fn new(t0: f64, dt: f64, intensity: Vec<f64>, scale: f64) -> Result<Self> {
        let p = Self {
            t0,
            dt,
            intensity,
            scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("pulse.dt", "sample spacing must be > 0"));
        }
        if self.intensity.len() < 2 {
            return Err(invalid("pulse", "need at least two samples"));
        }
        if self.intensity.iter().any(|i| !(*i >= 0.0 && i.is_finite())) {
            return Err(invalid("pulse", "intensities must be finite and >= 0"));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(invalid("pulse.scale", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Gaussian intensity with the given FWHM, sampled over ±4 FWHM around
    /// `peak`, scaled to rotation angle `theta`.
    pub fn gaussian(fwhm: f64, peak: f64, theta: f64) -> Result<Self> {
        if !(fwhm > 0.0) {
            return Err(invalid("fwhm", "must be > 0"));
        }
        let half = 4.0 * fwhm;
        let n = ((2.0 * half / MAX_STEP.min(fwhm / 16.0)).ceil() as usize).max(64);
        let dt = 2.0 * half / n as f64;
        let k = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
        let intensity = (0..=n)
            .map(|i| {
                let t = -half + i as f64 * dt;
                (-k * t * t).exp()
            })
            .collect();
        Self::new(peak - half, dt, intensity, 1.0)?.with_rotation_angle(theta)
    }

    /// Reads two-column (t ns, intensity) CSV. Samples must be uniformly
    /// spaced to 1e-6 relative.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let pts = read_csv(path)?;
        if pts.len() < 2 {
            return Err(invalid("pulse", format!("{}: fewer than two samples", path.display())));
        }
        let dt = (pts[pts.len() - 1].x - pts[0].x) / (pts.len() - 1) as f64;
        for (i, p) in pts.iter().enumerate() {
            let expect = pts[0].x + i as f64 * dt;
            if (p.x - expect).abs() > 1e-6 * dt.abs().max(1.0) {
                return Err(invalid("pulse", format!("{}: samples are not uniformly spaced", path.display())));
            }
        }
        Self::new(pts[0].x, dt, pts.iter().map(|p| p.y).collect(), 1.0)
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.intensity.len() - 1) as f64
    }

    /// Time of maximum intensity.
    pub fn peak_time(&self) -> f64 {
        let (i, _) = self
            .intensity
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        self.t0 + i as f64 * self.dt
    }

    /// Width at half maximum of the intensity.
    pub fn fwhm(&self) -> f64 {
        let max = self.intensity.iter().cloned().fold(0.0, f64::max);
        let above: Vec<usize> = (0..self.intensity.len())
            .filter(|&i| self.intensity[i] >= 0.5 * max)
            .collect();
        match (above.first(), above.last()) {
            (Some(a), Some(b)) => (*b - *a) as f64 * self.dt,
            _ => 0.0,
        }
    }

    pub fn rabi(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x < 0.0 || x > (self.intensity.len() - 1) as f64 {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.intensity.len() - 2);
        let f = x - i as f64;
        let a = self.intensity[i].sqrt();
        let b = self.intensity[i + 1].sqrt();
        self.scale * (a + f * (b - a))
    }

    /// Same shape rescaled to pulse area `theta`.
    pub fn with_rotation_angle(mut self, theta: f64) -> Result<Self> {
        self.scale = 1.0;
        let area = rotation_angle(&self);
        if !(area > 0.0) {
            return Err(invalid("pulse", "zero pulse area cannot be scaled"));
        }
        self.scale = theta / area;
        self.validate()?;
        Ok(self)
    }
}

/// θ = ∫Ω dt.
pub fn rotation_angle(pulse: &PulseShape) -> f64 {
    // Ω is piecewise linear, so the trapezoid rule is exact.
    let s: Vec<f64> = pulse.intensity.iter().map(|i| i.sqrt()).collect();
    let inner: f64 = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    pulse.scale * inner * pulse.dt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionStats {
    pub p0: f64,
    pub p1: f64,
    /// Two or more emissions.
    pub p2: f64,
    /// Expected window photons from single-emission runs.
    pub window_single: f64,
    /// Expected window photons from double-emission runs.
    pub window_double: f64,
    pub p_de: f64,
    pub theta: f64,
}

/// No-jump amplitudes (c_g, y) with c_e = −i·y; both stay real under a
/// resonant real drive.
#[derive(Debug, Clone, Copy)]
struct Amp {
    g: f64,
    y: f64,
}

struct Grid<'a> {
    pulse: &'a PulseShape,
    t0: f64,
    h: f64,
    n: usize,
    gamma: f64,
}

impl Grid<'_> {
    fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    fn deriv(&self, t: f64, a: Amp) -> Amp {
        let w = 0.5 * self.pulse.rabi(t);
        Amp {
            g: -w * a.y,
            y: w * a.g - 0.5 * self.gamma * a.y,
        }
    }

    fn rk4(&self, t: f64, a: Amp) -> Amp {
        let h = self.h;
        let add = |a: Amp, d: Amp, s: f64| Amp {
            g: a.g + s * d.g,
            y: a.y + s * d.y,
        };
        let k1 = self.deriv(t, a);
        let k2 = self.deriv(t + 0.5 * h, add(a, k1, 0.5 * h));
        let k3 = self.deriv(t + 0.5 * h, add(a, k2, 0.5 * h));
        let k4 = self.deriv(t + h, add(a, k3, h));
        Amp {
            g: a.g + h / 6.0 * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g),
            y: a.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        }
    }

    /// Ground-state start at grid index `from`; amplitudes at every later
    /// grid point.
    fn run(&self, from: usize) -> Vec<Amp> {
        let mut out = Vec::with_capacity(self.n + 1 - from);
        let mut a = Amp { g: 1.0, y: 0.0 };
        out.push(a);
        for k in from..self.n {
            a = self.rk4(self.time(k), a);
            out.push(a);
        }
        out
    }
}

/// ∫ Γ y² 1_W dt on the grid segment `[from, n]` plus the free decay after
/// the pulse.
fn photons_in_window(grid: &Grid, amps: &[Amp], from: usize, window: &DetectionWindow) -> f64 {
    let f: Vec<f64> = amps
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let t = grid.time(from + j);
            if window.contains(t) {
                grid.gamma * a.y * a.y
            } else {
                0.0
            }
        })
        .collect();
    let during = trapezoid(&f, grid.h);
    let last = amps[amps.len() - 1];
    let t_end = grid.time(grid.n);
    during + last.y * last.y * decay_fraction(grid.gamma, t_end, window)
}

/// Fraction of an exponential decay starting at `t_end` that falls inside
/// the window.
fn decay_fraction(gamma: f64, t_end: f64, window: &DetectionWindow) -> f64 {
    let a = window.start.max(t_end);
    let b = window.end();
    if b <= a {
        return 0.0;
    }
    (-gamma * (a - t_end)).exp() - (-gamma * (b - t_end)).exp()
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..f.len() - 1].iter().sum();
    h * (inner + 0.5 * (f[0] + f[f.len() - 1]))
}

/// Emission statistics for a pulse and a detection window (same time axis).
pub fn evolve_emitter(pulse: &PulseShape, tau: f64, window: &DetectionWindow) -> Result<EmissionStats> {
    pulse.validate()?;
    window.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", "lifetime must be > 0"));
    }
    let span = pulse.t_end() - pulse.t0;
    let n = ((span / MAX_STEP.min(pulse.dt)).ceil() as usize).max(2);
    let grid = Grid {
        pulse,
        t0: pulse.t0,
        h: span / n as f64,
        n,
        gamma: 1.0 / tau,
    };
    let theta = rotation_angle(pulse);
    let first = grid.run(0);
    let end = first[n];
    let p0 = end.g * end.g;
    if !p0.is_finite() || p0 > 1.0 + 1e-9 {
        return Err(HeraldError::Integration("no-jump evolution diverged".into()));
    }

    // Over the pulse: weight each first-emission time by the chance of a
    // second emission afterwards.
    let mut f_second = vec![0.0; n + 1];
    let mut f_single_win = vec![0.0; n + 1];
    let mut f_double_win = vec![0.0; n + 1];
    for k in 0..=n {
        let t1 = grid.time(k);
        let dens = grid.gamma * first[k].y * first[k].y;
        if dens == 0.0 {
            continue;
        }
        let (p_second, second_win) = if k < n {
            let amps = grid.run(k);
            let last = amps[amps.len() - 1];
            let p = (1.0 - last.g * last.g).max(0.0);
            (p, photons_in_window(&grid, &amps, k, window))
        } else {
            (0.0, 0.0)
        };
        let in_win = if window.contains(t1) { 1.0 } else { 0.0 };
        f_second[k] = dens * p_second;
        f_single_win[k] = dens * (1.0 - p_second) * in_win;
        f_double_win[k] = dens * (p_second * in_win + second_win);
    }
    let h = grid.h;
    let p2 = trapezoid(&f_second, h);
    let p1 = (1.0 - p0 - p2).max(0.0);
    // First emissions after the pulse decay freely and are single.
    let tail_single = end.y * end.y * decay_fraction(grid.gamma, pulse.t_end(), window);
    let window_single = trapezoid(&f_single_win, h) + tail_single;
    let window_double = trapezoid(&f_double_win, h);
    let total = window_single + window_double;
    let p_de = if total > 0.0 { window_double / total } else { 0.0 };
    Ok(EmissionStats {
        p0,
        p1,
        p2,
        window_single,
        window_double,
        p_de,
        theta,
    })
}

/// N_coin / (η_P·N_all − (η_P − 1)·N_coin).
pub fn estimate_pde_from_counts(n_coin: u64, n_all: u64, eta_p: f64) -> Result<f64> {
    if n_coin > n_all {
        return Err(invalid("n_coin", "coincidences exceed all counts"));
    }
    if !(eta_p > 0.0 && eta_p <= 1.0) {
        return Err(invalid("eta_p", format!("{eta_p} must lie in (0, 1]")));
    }
    let (c, a) = (n_coin as f64, n_all as f64);
    let den = eta_p * a - (eta_p - 1.0) * c;
    if !(den > 0.0) {
        return Err(invalid("counts", "estimator denominator is not positive"));
    }
    Ok(c / den)
}

/// Delta-method standard error of the estimator for multinomial counts out
/// of `n` repetitions.
pub fn pde_estimate_stderr(n_coin: u64, n_all: u64, eta_p: f64, n: u64) -> f64 {
    let (c, a, n) = (n_coin as f64, n_all as f64, n as f64);
    let s = a - c;
    let den = eta_p * s + c;
    if den <= 0.0 {
        return f64::NAN;
    }
    // p = c/(η s + c) with c, s disjoint multinomial cells
    let dc = eta_p * s / (den * den);
    let ds = -eta_p * c / (den * den);
    let var = dc * dc * c * (1.0 - c / n) + ds * ds * s * (1.0 - s / n) - 2.0 * dc * ds * c * s / n;
    var.max(0.0).sqrt()
}

/// Synthetic detection record of `n` excitation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoincidenceCounts {
    /// ZPL window click with a PSB click from a first photon.
    pub n_coin: u64,
    /// ZPL window clicks from single-emission rounds.
    pub n_single: u64,
    /// Every ZPL window click.
    pub n_zpl: u64,
    pub n: u64,
}

impl CoincidenceCounts {
    /// N_all as defined for the estimator: single-emission clicks plus
    /// coincidences.
    pub fn n_all(&self) -> u64 {
        self.n_single + self.n_coin
    }
}

/// Forward-samples coincidence counts from emission statistics. ZPL window
/// clicks occur with probability η_Z times the expected window photons per
/// round of each emission class; the PSB path sees the first photon of a
/// double emission with probability η_P.
pub fn sample_coincidences<R: Rng + ?Sized>(
    stats: &EmissionStats,
    eta_p: f64,
    eta_z: f64,
    n: u64,
    rng: &mut R,
) -> Result<CoincidenceCounts> {
    let p_single = eta_z * stats.window_single;
    let p_double = eta_z * stats.window_double;
    if !(p_single + p_double <= 1.0) {
        return Err(invalid("eta_z", "click probabilities exceed one"));
    }
    let bin = |n: u64, p: f64, rng: &mut R| -> Result<u64> {
        Ok(Binomial::new(n, p.clamp(0.0, 1.0))
            .map_err(|e| invalid("binomial", e.to_string()))?
            .sample(rng))
    };
    let n_single = bin(n, p_single, rng)?;
    let n_double = bin(n - n_single, p_double / (1.0 - p_single).max(f64::MIN_POSITIVE), rng)?;
    let n_coin = bin(n_double, eta_p, rng)?;
    Ok(CoincidenceCounts {
        n_coin,
        n_single,
        n_zpl: n_single + n_double,
        n,
    })
}
