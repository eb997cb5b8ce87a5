//! Photon temporal modes as seen by the detectors.
//!
//! The pattern engine only needs three things from a mode model: the
//! single-photon amplitude ζ_i(t) (including c_e), the ordered two-photon
//! amplitude Z_i(t1, t2) (including c_ee), and a rule for summing over the
//! unknown emission time of a photon that was lost.

use num_complex::Complex64;

use super::params::{DetectionSetup, DetectionWindow, Node, NodeParams, PhotonEnvelope};
use crate::quadrature::Rule;

pub trait EmissionModes {
    /// ζ_i(t): amplitude for detecting node i's single photon at `t`.
    fn single(&self, node: Node, t: f64) -> Complex64;

    /// Z_i(t1, t2) for t1 < t2; zero when t1 >= t2.
    fn pair(&self, node: Node, t1: f64, t2: f64) -> Complex64;

    /// Points over which the emission time of a lost photon is summed.
    /// `breakpoints` are record times at which integrands may have kinks.
    fn loss_rule(&self, node: Node, breakpoints: &[f64]) -> Rule;

    /// ∫∫_{t1<t2} |Z_i|², the total double-emission probability |c_ee|².
    fn pair_mass(&self, node: Node) -> f64;

    /// Probability that a photon emitted at `t` goes undetected: lost, or
    /// reaching the beam splitter outside the detection window.
    fn undetected_weight(&self, _node: Node, eta: f64, _t: f64) -> f64 {
        1.0 - eta
    }

    /// ∫∫_{t1<t2} |Z_i|² w(t1) w(t2) with w the undetected weight.
    fn undetected_pair_mass(&self, node: Node, eta: f64) -> f64 {
        (1.0 - eta).powi(2) * self.pair_mass(node)
    }
}

/// Z for a photon pair with one member at `t_fixed` and the other at `t`,
/// irrespective of which came first.
pub fn pair_either_order<M: EmissionModes + ?Sized>(
    modes: &M,
    node: Node,
    t_fixed: f64,
    t: f64,
) -> Complex64 {
    if t_fixed < t {
        modes.pair(node, t_fixed, t)
    } else {
        modes.pair(node, t, t_fixed)
    }
}

/// Exponential spontaneous-emission modes with carrier phases reduced to the
/// shared-laser form: the phase setpoint δφ rides on node A and each node
/// accumulates its detuning over the time spent in the excited state.
#[derive(Debug, Clone)]
pub struct ContinuousModes {
    env: [PhotonEnvelope; 2],
    ce: [f64; 2],
    cee: [f64; 2],
    detuning: [f64; 2],
    offset: [f64; 2],
    window: Option<DetectionWindow>,
    /// Lost-photon quadrature panel width in u = 1 − e^{−(t − t_exc)/τ}.
    pub panel: f64,
    pub order: usize,
}

fn idx(node: Node) -> usize {
    match node {
        Node::A => 0,
        Node::B => 1,
    }
}

impl ContinuousModes {
    /// Node A is excited at t = 0 and node B at −dL/c, so that for a common
    /// detection time the time B spent excited is longer by the path delay.
    pub fn new(a: &NodeParams, b: &NodeParams, tau: f64, setup: &DetectionSetup) -> Self {
        Self::with_envelopes(
            a,
            b,
            PhotonEnvelope::new(tau, 0.0),
            PhotonEnvelope::new(tau, -setup.path_delay),
            setup.phase_setpoint,
        )
        .with_window(Some(setup.window))
    }

    /// Arrivals outside `window` count as undetected; `None` means every
    /// arrival is seen.
    pub fn with_window(mut self, window: Option<DetectionWindow>) -> Self {
        self.window = window;
        self
    }

    fn outside(&self, t: f64) -> bool {
        self.window.is_some_and(|w| !w.contains(t))
    }

    pub fn with_envelopes(
        a: &NodeParams,
        b: &NodeParams,
        env_a: PhotonEnvelope,
        env_b: PhotonEnvelope,
        phase_setpoint: f64,
    ) -> Self {
        Self {
            env: [env_a, env_b],
            ce: [a.ce, b.ce],
            cee: [a.cee, b.cee],
            detuning: [a.detuning, b.detuning],
            offset: [phase_setpoint - a.laser_phase, -b.laser_phase],
            window: None,
            panel: 0.125,
            order: 8,
        }
    }

    pub fn envelope(&self, node: Node) -> &PhotonEnvelope {
        &self.env[idx(node)]
    }

    /// Carrier phase χ_i for a photon from an excitation at `t_exc` detected at `t`.
    fn carrier(&self, i: usize, t_exc: f64, t: f64) -> f64 {
        self.offset[i] + self.detuning[i] * (t - t_exc)
    }

    /// ζ_i(t) / c_e: unit-weight temporal mode with its carrier phase.
    pub fn unit_mode(&self, node: Node, t: f64) -> Complex64 {
        let i = idx(node);
        let env = &self.env[i];
        Complex64::from_polar(env.amplitude(t), -self.carrier(i, env.t_exc, t))
    }
}

impl EmissionModes for ContinuousModes {
    fn single(&self, node: Node, t: f64) -> Complex64 {
        self.unit_mode(node, t) * self.ce[idx(node)]
    }

    fn pair(&self, node: Node, t1: f64, t2: f64) -> Complex64 {
        let i = idx(node);
        if t1 >= t2 || self.cee[i] == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let env = &self.env[i];
        // The second excitation starts at the first emission time.
        let second = PhotonEnvelope::new(env.tau, t1);
        let mag = self.cee[i] * env.amplitude(t1) * second.amplitude(t2);
        let phase = self.carrier(i, env.t_exc, t1) + self.carrier(i, t1, t2);
        Complex64::from_polar(mag, -phase)
    }

    fn loss_rule(&self, node: Node, breakpoints: &[f64]) -> Rule {
        let env = &self.env[idx(node)];
        // Integrate in u = 1 − e^{−(t − t_exc)/τ}, which absorbs the decay
        // and maps the emission times onto [0, 1).
        let (t0, tau) = (env.t_exc, env.tau);
        let to_u = |t: f64| -(-(t - t0) / tau).exp_m1();
        let mut cuts: Vec<f64> = breakpoints.iter().map(|&t| to_u(t)).collect();
        if let Some(w) = self.window {
            cuts.extend([to_u(w.start), to_u(w.end())]);
        }
        let rule = Rule::composite(0.0, 1.0, &cuts, self.panel, self.order);
        Rule {
            points: rule
                .points
                .into_iter()
                .map(|(u, w)| (t0 - tau * (-u).ln_1p(), w * tau / (1.0 - u)))
                .collect(),
        }
    }

    fn pair_mass(&self, node: Node) -> f64 {
        let c = self.cee[idx(node)];
        c * c
    }

    fn undetected_weight(&self, _node: Node, eta: f64, t: f64) -> f64 {
        if self.outside(t) {
            1.0
        } else {
            1.0 - eta
        }
    }

    fn undetected_pair_mass(&self, node: Node, eta: f64) -> f64 {
        let Some(w) = self.window else {
            return (1.0 - eta).powi(2) * self.pair_mass(node);
        };
        // w(t) = 1 − η·1_in(t); expand the product and use the marginals of
        // the first emission (exponential) and the second (Gamma(2, τ)).
        let env = &self.env[idx(node)];
        let tau = env.tau;
        let s = (w.start - env.t_exc).max(0.0) / tau;
        let e = (w.end() - env.t_exc).max(0.0) / tau;
        let first_in = (-s).exp() - (-e).exp();
        let gamma2 = |x: f64| 1.0 - (-x).exp() * (1.0 + x);
        let second_in = gamma2(e) - gamma2(s);
        let both_in = first_in - (e - s) * (-e).exp();
        let weighted = 1.0 - eta * (first_in + second_in) + eta * eta * both_in;
        weighted * self.pair_mass(node)
    }
}

/// Time-binned modes: detection times are bin indices and amplitudes are
/// probability amplitudes per bin rather than densities.
#[derive(Debug, Clone)]
pub struct DiscreteModes {
    pub single: [Vec<Complex64>; 2],
    /// `pair[i][k][l]` for k < l.
    pub pair: [Vec<Vec<Complex64>>; 2],
}

impl DiscreteModes {
    pub fn bins(&self) -> usize {
        self.single[0].len()
    }

    fn bin(&self, t: f64) -> Option<usize> {
        let k = t.round();
        if k < 0.0 || (k - t).abs() > 1e-9 || k as usize >= self.bins() {
            return None;
        }
        Some(k as usize)
    }
}

impl EmissionModes for DiscreteModes {
    fn single(&self, node: Node, t: f64) -> Complex64 {
        self.bin(t)
            .map(|k| self.single[idx(node)][k])
            .unwrap_or_default()
    }

    fn pair(&self, node: Node, t1: f64, t2: f64) -> Complex64 {
        match (self.bin(t1), self.bin(t2)) {
            (Some(k), Some(l)) if k < l => self.pair[idx(node)][k][l],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    fn loss_rule(&self, _node: Node, _breakpoints: &[f64]) -> Rule {
        Rule {
            points: (0..self.bins()).map(|k| (k as f64, 1.0)).collect(),
        }
    }

    fn pair_mass(&self, node: Node) -> f64 {
        let p = &self.pair[idx(node)];
        let n = self.bins();
        let mut s = 0.0;
        for k in 0..n {
            for l in k + 1..n {
                s += p[k][l].norm_sqr();
            }
        }
        s
    }
}
