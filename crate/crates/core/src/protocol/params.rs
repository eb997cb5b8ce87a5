use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_unit, invalid, Result};

const NORM_TOL: f64 = 1e-12;

/// Beam-splitter output port that registered the heralding click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    C,
    D,
}

impl Port {
    /// Relative sign of the node-B amplitude in this port's projector.
    pub fn sign(self) -> f64 {
        match self {
            Port::C => 1.0,
            Port::D => -1.0,
        }
    }

    pub fn both() -> [Port; 2] {
        [Port::C, Port::D]
    }

    pub fn name(self) -> &'static str {
        match self {
            Port::C => "C",
            Port::D => "D",
        }
    }
}

/// Identifies one of the two emitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    A,
    B,
}

/// Per-emitter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    /// Bright-state population α.
    pub alpha: f64,
    /// Phase ϑ of the initial superposition, rad.
    pub theta_phase: f64,
    /// End-to-end detection probability η.
    pub eta: f64,
    /// Amplitude of remaining in the ground state during the pulse.
    pub c0: f64,
    /// Amplitude of a single emission.
    pub ce: f64,
    /// Amplitude of a double emission.
    pub cee: f64,
    /// Laser-to-transition detuning Δ, rad/ns.
    pub detuning: f64,
    /// Unit polarization vector of the emitted photons.
    pub pol: [f64; 3],
    /// Phase of the excitation laser, rad.
    pub laser_phase: f64,
}

impl NodeParams {
    /// A node driven by a perfect π pulse: c0 = cee = 0.
    pub fn new(alpha: f64, eta: f64) -> Self {
        Self {
            alpha,
            theta_phase: 0.0,
            eta,
            c0: 0.0,
            ce: 1.0,
            cee: 0.0,
            detuning: 0.0,
            pol: [1.0, 0.0, 0.0],
            laser_phase: 0.0,
        }
    }

    /// Sets c0 = cos(θ/2), ce = sin(θ/2), cee = 0.
    pub fn with_rotation_angle(mut self, theta: f64) -> Self {
        self.c0 = (0.5 * theta).cos().abs();
        self.ce = (0.5 * theta).sin().abs();
        self.cee = 0.0;
        self
    }

    /// Sets c0 and cee directly, with ce fixed by normalization.
    pub fn with_amplitudes(mut self, c0: f64, cee: f64) -> Self {
        self.c0 = c0;
        self.cee = cee;
        self.ce = (1.0 - c0 * c0 - cee * cee).max(0.0).sqrt();
        self
    }

    pub fn with_phase(mut self, theta_phase: f64) -> Self {
        self.theta_phase = theta_phase;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_pol(mut self, pol: [f64; 3]) -> Self {
        self.pol = pol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("alpha", self.alpha)?;
        check_unit("eta", self.eta)?;
        check_finite("theta_phase", self.theta_phase)?;
        check_finite("detuning", self.detuning)?;
        check_finite("laser_phase", self.laser_phase)?;
        for (name, c) in [("c0", self.c0), ("ce", self.ce), ("cee", self.cee)] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(invalid(name, format!("amplitude {c} must be finite and >= 0")));
            }
        }
        let norm = self.c0 * self.c0 + self.ce * self.ce + self.cee * self.cee;
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(invalid(
                "c0/ce/cee",
                format!("squared amplitudes sum to {norm}, expected 1"),
            ));
        }
        let p = self.pol.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (p - 1.0).abs() > NORM_TOL {
            return Err(invalid("pol", format!("|pol| = {p}, expected 1")));
        }
        Ok(())
    }
}

pub fn pol_overlap(a: &NodeParams, b: &NodeParams) -> f64 {
    a.pol.iter().zip(&b.pol).map(|(x, y)| x * y).sum()
}

/// Spontaneous-emission temporal mode of one emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEnvelope {
    /// Excited-state lifetime τ, ns.
    pub tau: f64,
    /// Excitation time, ns.
    pub t_exc: f64,
}

impl PhotonEnvelope {
    pub fn new(tau: f64, t_exc: f64) -> Self {
        Self { tau, t_exc }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("lifetime {} must be > 0", self.tau)));
        }
        check_finite("t_exc", self.t_exc)
    }

    /// Envelope amplitude H(t − t_exc) e^{−(t − t_exc)/2τ} / √τ, in ns^{-1/2}.
    pub fn amplitude(&self, t_em: f64) -> f64 {
        let dt = t_em - self.t_exc;
        if dt < 0.0 {
            return 0.0;
        }
        (-dt / (2.0 * self.tau)).exp() / self.tau.sqrt()
    }

    /// ∫|E|² over [a, b].
    pub fn probability_between(&self, a: f64, b: f64) -> f64 {
        let lo = (a - self.t_exc).max(0.0);
        let hi = (b - self.t_exc).max(0.0);
        if hi <= lo {
            return 0.0;
        }
        (-lo / self.tau).exp() - (-hi / self.tau).exp()
    }
}

/// Interval in which clicks are accepted as heralds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindow {
    /// Start time, ns (relative to the pulse peak).
    pub start: f64,
    /// Duration, ns.
    pub duration: f64,
}

impl DetectionWindow {
    pub fn new(start: f64, duration: f64) -> Self {
        Self { start, duration }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("window.start", self.start)?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(
                "window.duration",
                format!("{} must be > 0", self.duration),
            ));
        }
        Ok(())
    }
}

/// Detection record and interferometer settings for one heralding event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSetup {
    pub port: Port,
    /// Time of the first click, ns.
    pub t_prime: f64,
    /// Time of a second click in the same port, ns.
    pub t_dprime: Option<f64>,
    pub window: DetectionWindow,
    /// Arrival-time difference dL/c of the two optical paths, ns.
    pub path_delay: f64,
    /// Optical phase setpoint δφ, rad.
    pub phase_setpoint: f64,
}

impl DetectionSetup {
    pub fn new(port: Port, t_prime: f64, window: DetectionWindow) -> Self {
        Self {
            port,
            t_prime,
            t_dprime: None,
            window,
            path_delay: 0.0,
            phase_setpoint: 0.0,
        }
    }

    pub fn with_second_click(mut self, t_dprime: f64) -> Self {
        self.t_dprime = Some(t_dprime);
        self
    }

    pub fn with_phase_setpoint(mut self, delta_phi: f64) -> Self {
        self.phase_setpoint = delta_phi;
        self
    }

    pub fn with_path_delay(mut self, delay: f64) -> Self {
        self.path_delay = delay;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        check_finite("path_delay", self.path_delay)?;
        check_finite("phase_setpoint", self.phase_setpoint)?;
        if !self.window.contains(self.t_prime) {
            return Err(invalid(
                "t_prime",
                format!("{} lies outside the detection window", self.t_prime),
            ));
        }
        if let Some(t2) = self.t_dprime {
            if !self.window.contains(t2) {
                return Err(invalid(
                    "t_dprime",
                    format!("{t2} lies outside the detection window"),
                ));
            }
            if t2 <= self.t_prime {
                return Err(invalid(
                    "t_dprime",
                    format!("second click {t2} must come after the first {}", self.t_prime),
                ));
            }
        }
        Ok(())
    }
}
