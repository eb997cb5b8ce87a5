//! Bright-state balance for unequal detection efficiencies, and the joint
//! (α, θ) search that maximizes success probability at fixed fidelity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, HeraldError, Result};
use crate::nv::{protocol_fidelity, symmetric_fidelity};
use crate::protocol::DetectionWindow;
use crate::pulsesim::{evolve_emitter, PulseShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaOptimum {
    pub alpha: [f64; 2],
    pub fidelity: f64,
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a < tol {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Maximizes F(α_A, α_B) on the line η_Aα_A + η_Bα_B = 2·p_click, where the
/// fidelity and click-probability gradients are parallel.
pub fn optimal_alphas(eta_a: f64, eta_b: f64, p_click: f64) -> Result<AlphaOptimum> {
    for (name, v) in [("eta_a", eta_a), ("eta_b", eta_b)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(invalid(name, format!("{v} must lie in (0, 1]")));
        }
    }
    let budget = 2.0 * p_click;
    if !(budget > 0.0 && budget < eta_a + eta_b) {
        return Err(HeraldError::Infeasible {
            reason: format!("p_click {p_click} not reachable with alphas in (0, 1)"),
            best: None,
        });
    }
    let alpha_b = |a: f64| (budget - eta_a * a) / eta_b;
    let lo = ((budget - eta_b) / eta_a).max(0.0);
    let hi = (budget / eta_a).min(1.0);
    let fid = |a: f64, b: f64| protocol_fidelity([a, b], [eta_a, eta_b]);
    let h = 1e-6 * (hi - lo);
    let gradient = |a: f64| {
        let b = alpha_b(a);
        let dfa = (fid(a + h, b) - fid(a - h, b)) / (2.0 * h);
        let dfb = (fid(a, b + h) - fid(a, b - h)) / (2.0 * h);
        -eta_b * dfa + eta_a * dfb
    };

    let n = 2000;
    let inner = |i: usize| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
    let mut best: Option<AlphaOptimum> = None;
    let mut prev = (inner(0), gradient(inner(0)));
    for i in 1..n {
        let a = inner(i);
        let g = gradient(a);
        if (g > 0.0) != (prev.1 > 0.0) {
            let root = bisect(gradient, prev.0, a, 1e-13);
            let cand = AlphaOptimum {
                alpha: [root, alpha_b(root)],
                fidelity: fid(root, alpha_b(root)),
            };
            if best.is_none_or(|b| cand.fidelity > b.fidelity) {
                best = Some(cand);
            }
        }
        prev = (a, g);
    }
    best.ok_or_else(|| HeraldError::Infeasible {
        reason: "no stationary point on the constraint line".into(),
        best: None,
    })
}

/// Symmetric link whose excitation pulse is Gaussian with FWHM given in
/// units of the lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub eta: f64,
    pub tau: f64,
    /// Pulse FWHM / τ. Zero means an ideal pulse without double excitation.
    pub pulse_fwhm: f64,
    /// Detection window length, ns. The window opens 1.5 FWHM after the
    /// pulse peak.
    pub window: f64,
    /// θ grid step, degrees.
    pub theta_step: f64,
}

impl OptimizationProblem {
    pub fn new(eta: f64, tau: f64, pulse_fwhm: f64) -> Self {
        Self {
            eta,
            tau,
            pulse_fwhm,
            window: 15.0,
            theta_step: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", "must lie in (0, 1]"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau", "must be > 0"));
        }
        if !(self.pulse_fwhm >= 0.0 && self.pulse_fwhm.is_finite()) {
            return Err(invalid("pulse_fwhm", "must be finite and >= 0"));
        }
        if !(self.window > 0.0) {
            return Err(invalid("window", "must be > 0"));
        }
        if !(self.theta_step > 0.0 && self.theta_step <= 0.5) {
            return Err(invalid("theta_step", "must lie in (0, 0.5] degrees"));
        }
        Ok(())
    }

    /// Grid θ values in degrees, descending from 180.
    pub fn theta_grid(&self) -> Vec<f64> {
        let n = (180.0 / self.theta_step).floor() as usize;
        (0..n).map(|i| 180.0 - i as f64 * self.theta_step).collect()
    }
}

/// p_de over the θ grid, as (θ degrees, p_de) descending in θ.
pub fn pde_curve(problem: &OptimizationProblem) -> Result<Vec<(f64, f64)>> {
    problem.validate()?;
    let grid = problem.theta_grid();
    if problem.pulse_fwhm == 0.0 {
        return Ok(grid.into_iter().map(|t| (t, 0.0)).collect());
    }
    let fwhm = problem.pulse_fwhm * problem.tau;
    let window = DetectionWindow::new(1.5 * fwhm, problem.window);
    let base = PulseShape::gaussian(fwhm, 0.0, 1.0)?;
    grid.into_iter()
        .map(|deg| {
            let pulse = base.clone().with_rotation_angle(deg.to_radians())?;
            Ok((deg, evolve_emitter(&pulse, problem.tau, &window)?.p_de))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaThetaOptimum {
    pub alpha: f64,
    /// Degrees.
    pub theta: f64,
    pub p_click: f64,
    pub p_de: f64,
}

/// Largest p_click = αη sin²(θ/2) with F(α, p_de(θ)) = target over a
/// precomputed p_de curve. Ties go to the larger θ.
pub fn optimal_alpha_theta_on(
    problem: &OptimizationProblem,
    curve: &[(f64, f64)],
    target: f64,
) -> Result<AlphaThetaOptimum> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target_fidelity", format!("{target} must lie in (0, 1)")));
    }
    let mut best: Option<AlphaThetaOptimum> = None;
    let mut best_f: f64 = 0.0;
    for &(theta, p_de) in curve {
        // F is linear in α; α = 0 gives the ceiling for this θ.
        let ceiling = symmetric_fidelity(0.0, p_de);
        best_f = best_f.max(ceiling);
        if ceiling < target {
            continue;
        }
        let alpha = 1.0 - target / ceiling;
        let p_click = alpha * problem.eta * (0.5 * theta.to_radians()).sin().powi(2);
        if best.is_none_or(|b| p_click > b.p_click) {
            best = Some(AlphaThetaOptimum {
                alpha,
                theta,
                p_click,
                p_de,
            });
        }
    }
    best.ok_or_else(|| HeraldError::Infeasible {
        reason: format!("target fidelity {target} unreachable for this pulse"),
        best: Some(best_f),
    })
}

pub fn optimal_alpha_theta(problem: &OptimizationProblem, target: f64) -> Result<AlphaThetaOptimum> {
    optimal_alpha_theta_on(problem, &pde_curve(problem)?, target)
}

/// Same search with θ pinned at 180°.
pub fn optimal_alpha_fixed_theta(problem: &OptimizationProblem, curve: &[(f64, f64)], target: f64) -> Result<AlphaThetaOptimum> {
    optimal_alpha_theta_on(problem, &curve[..1], target)
}
