//! Closed-form model for NV links in the high-loss regime with full optical
//! excitation, plus the symmetric-link formulas for partial excitation.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_unit, Result};
use crate::protocol::{bell_vector, DensityMatrix4, Port};

/// Parameters of a two-node NV link. Index 0 is node A, index 1 node B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvLinkParams {
    pub alpha: [f64; 2],
    pub eta: [f64; 2],
    /// Probability of a second emission given a window detection.
    pub p_de: f64,
    /// Noise-click probability per window.
    pub p_d: f64,
    /// Laser detunings Δ, rad/ns.
    pub detuning: [f64; 2],
    /// Optical phase setpoint δφ, rad.
    pub phase_setpoint: f64,
    /// Optical rotation angles θ, rad.
    pub theta: [f64; 2],
    pub target_phase: f64,
    /// ε_A·ε_B.
    pub pol_overlap: f64,
}

impl NvLinkParams {
    pub fn new(alpha: [f64; 2], eta: [f64; 2]) -> Self {
        Self {
            alpha,
            eta,
            p_de: 0.0,
            p_d: 0.0,
            detuning: [0.0; 2],
            phase_setpoint: 0.0,
            theta: [std::f64::consts::PI; 2],
            target_phase: 0.0,
            pol_overlap: 1.0,
        }
    }

    pub fn symmetric(alpha: f64, eta: f64) -> Self {
        Self::new([alpha; 2], [eta; 2])
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..2 {
            check_unit("alpha", self.alpha[i])?;
            check_unit("eta", self.eta[i])?;
            check_finite("detuning", self.detuning[i])?;
            check_finite("theta", self.theta[i])?;
        }
        check_unit("p_de", self.p_de)?;
        check_unit("p_d", self.p_d)?;
        check_unit("pol_overlap", self.pol_overlap.abs())?;
        check_finite("phase_setpoint", self.phase_setpoint)?;
        check_finite("target_phase", self.target_phase)
    }
}

/// Phase contributions to the heralded state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    pub vartheta_a: f64,
    pub vartheta_b: f64,
    pub delta_phi: f64,
    /// Δ_A, Δ_B in rad/ns.
    pub delta_a: f64,
    pub delta_b: f64,
    /// Path delay dL/c, ns.
    pub dl_over_c: f64,
}

/// φ = ϑ_B − ϑ_A + δφ + (Δ_A − Δ_B) t_d − Δ_B dL/c.
pub fn entangled_phase(pm: &PhaseModel, t_d: f64) -> f64 {
    pm.vartheta_b - pm.vartheta_a
        + pm.delta_phi
        + (pm.delta_a - pm.delta_b) * t_d
        - pm.delta_b * pm.dl_over_c
}

/// Detection weights |c_e ζ_i(t′)|² and the matching double-excitation
/// weights. Double excitation is conditioned on a detection, so its weight
/// is the single weight scaled by p_de.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub single: [f64; 2],
    pub double: [f64; 2],
}

impl Weights {
    pub fn new(single: [f64; 2], p_de: f64) -> Self {
        Self {
            single,
            double: single.map(|w| w * p_de),
        }
    }

    /// Window-integrated weights with ∫|ζ|² = 1.
    pub fn integrated(p: &NvLinkParams) -> Self {
        Self::new([1.0, 1.0], p.p_de)
    }

    /// Weights at detection time `t_d` after excitation for lifetime `tau`,
    /// both nodes sharing the envelope.
    pub fn instantaneous(p: &NvLinkParams, tau: f64, t_d: f64) -> Self {
        let e = if t_d < 0.0 { 0.0 } else { (-t_d / tau).exp() / tau };
        Self::new([e, e], p.p_de)
    }
}

/// Unnormalized heralded state for `port` and its click probability.
pub fn nv_elements(p: &NvLinkParams, w: &Weights, phase: f64, port: Port) -> (DensityMatrix4, f64) {
    let [aa, ab] = p.alpha;
    let [ea, eb] = p.eta;
    let half = 0.5;
    let a00 = aa
        * ab
        * (half * ea * w.single[0] + half * eb * w.single[1] + half * ea * w.double[0]
            + half * eb * w.double[1]
            + p.p_d);
    let a11 = aa * (1.0 - ab) * (half * ea * w.single[0] + half * ea * w.double[0] + p.p_d);
    let a22 = (1.0 - aa) * ab * (half * eb * w.single[1] + half * eb * w.double[1] + p.p_d);
    let m = (aa * (1.0 - aa) * ab * (1.0 - ab) * ea * eb).sqrt()
        * p.pol_overlap
        * (w.single[0] * w.single[1]).sqrt();
    let a12 = Complex64::from_polar(half * m * port.sign(), -phase);
    let a33 = p.p_d * (1.0 - aa) * (1.0 - ab);

    let z = Complex64::new(0.0, 0.0);
    let r = |x: f64| Complex64::new(x, 0.0);
    let mat = Matrix4::new(
        r(a00), z, z, z,
        z, r(a11), a12, z,
        z, a12.conj(), r(a22), z,
        z, z, z, r(a33),
    );
    (DensityMatrix4::from_matrix(mat), a00 + a11 + a22 + a33)
}

/// Normalized heralded state for `port`.
pub fn heralded_state(p: &NvLinkParams, w: &Weights, phase: f64, port: Port) -> Result<(DensityMatrix4, f64)> {
    let (rho, p_click) = nv_elements(p, w, phase, port);
    Ok((rho.normalize()?, p_click))
}

/// ⟨Ψ|ρ|Ψ⟩ for |Ψ⟩ = (|01⟩ + e^{iφ_T}|10⟩)/√2, with an extra π on port D.
pub fn fidelity(rho: &DensityMatrix4, target_phase: f64, port: Port) -> f64 {
    let shift = match port {
        Port::C => 0.0,
        Port::D => std::f64::consts::PI,
    };
    rho.expectation(&bell_vector(target_phase + shift)).clamp(0.0, 1.0)
}

/// ½(η_A α_A + η_B α_B).
pub fn click_probability_linear(p: &NvLinkParams) -> f64 {
    0.5 * (p.eta[0] * p.alpha[0] + p.eta[1] * p.alpha[1])
}

/// Click probability of a symmetric link with rotation angle θ < π, where
/// the unexcited bright amplitudes of the two nodes interfere.
pub fn imperfect_excitation_click(p: &NvLinkParams, port: Port) -> f64 {
    let (alpha, eta, theta) = (p.alpha[0], p.eta[0], p.theta[0]);
    let s2 = (theta / 2.0).sin().powi(2);
    let c2 = (theta / 2.0).cos().powi(2);
    alpha * eta * s2 * (1.0 + port.sign() * alpha * p.phase_setpoint.cos() * c2)
}

/// Fidelity partner of [`imperfect_excitation_click`].
pub fn imperfect_excitation_fidelity(p: &NvLinkParams, port: Port) -> f64 {
    let (alpha, theta) = (p.alpha[0], p.theta[0]);
    let c2 = (theta / 2.0).cos().powi(2);
    let denom = 2.0 * (1.0 + port.sign() * alpha * p.phase_setpoint.cos() * c2);
    (1.0 - alpha) * (1.0 + (p.phase_setpoint - p.target_phase).cos()) / denom
}

/// Click-weighted mean fidelity over both ports.
pub fn port_averaged_imperfect_fidelity(p: &NvLinkParams) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for port in Port::both() {
        let pc = imperfect_excitation_click(p, port);
        num += pc * imperfect_excitation_fidelity(p, port);
        den += pc;
    }
    num / den
}

/// Window-integrated fidelity of a symmetric link without noise, including
/// double excitation: (1−α)(2 + p_de) / (2(1 + p_de)).
pub fn symmetric_fidelity(alpha: f64, p_de: f64) -> f64 {
    (1.0 - alpha) * (2.0 + p_de) / (2.0 * (1.0 + p_de))
}

/// Window-integrated fidelity of an asymmetric link with only the protocol
/// error, at φ = φ_T.
pub fn protocol_fidelity(alpha: [f64; 2], eta: [f64; 2]) -> f64 {
    let p = NvLinkParams::new(alpha, eta);
    let (rho, p_click) = nv_elements(&p, &Weights::integrated(&p), 0.0, Port::C);
    if p_click <= 0.0 {
        return 0.0;
    }
    fidelity(&(rho * (1.0 / p_click)), 0.0, Port::C)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn phase_is_affine_in_detection_time() {
        let pm = PhaseModel {
            delta_a: 2.0 * PI * 10e-3,
            ..Default::default()
        };
        assert_eq!(entangled_phase(&PhaseModel::default(), 3.0), 0.0);
        assert!((entangled_phase(&pm, 25.0) - 2.0 * PI * 0.25).abs() < 1e-12);
        let pm = PhaseModel { vartheta_b: 0.7, ..pm };
        let slope = entangled_phase(&pm, 11.0) - entangled_phase(&pm, 10.0);
        assert!((slope - 2.0 * PI * 10e-3).abs() < 1e-12);
    }

    #[test]
    fn protocol_error_only() {
        for alpha in [0.05, 0.1, 0.2] {
            let f = protocol_fidelity([alpha; 2], [1e-3; 2]);
            assert!((f - (1.0 - alpha)).abs() < 1e-14);
        }
    }

    #[test]
    fn dark_dark_corner_is_noise() {
        let mut p = NvLinkParams::new([0.07, 0.05], [3.8e-4, 5.2e-4]);
        p.p_d = 2e-6;
        let (rho, _) = nv_elements(&p, &Weights::integrated(&p), 0.3, Port::C);
        assert!((rho.get(3, 3).re - 2e-6 * 0.93 * 0.95).abs() < 1e-20);
    }

    #[test]
    fn fidelity_of_reference_states() {
        assert!((fidelity(&DensityMatrix4::bell(0.0), 0.0, Port::C) - 1.0).abs() < 1e-15);
        assert!(fidelity(&DensityMatrix4::basis_projector(0), 0.0, Port::C).abs() < 1e-15);
        assert!((fidelity(&DensityMatrix4::bell(PI), 0.0, Port::D) - 1.0).abs() < 1e-15);
        let p = NvLinkParams::new([0.0, 0.3], [1e-3; 2]);
        let (rho, _) = heralded_state(&p, &Weights::integrated(&p), 0.0, Port::C).unwrap();
        assert!((fidelity(&rho, 0.0, Port::C) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_click_probability() {
        let p = NvLinkParams::new([0.1, 0.1], [4e-4, 8e-4]);
        assert!((click_probability_linear(&p) - 6e-5).abs() < 1e-18);
        assert_eq!(click_probability_linear(&NvLinkParams::new([0.0; 2], [0.5; 2])), 0.0);
    }

    #[test]
    fn partial_excitation_limits() {
        let mut p = NvLinkParams::symmetric(0.2, 1e-3);
        assert!((imperfect_excitation_click(&p, Port::C) - 0.2e-3).abs() < 1e-18);
        assert!((imperfect_excitation_click(&p, Port::D) - 0.2e-3).abs() < 1e-18);
        assert!((imperfect_excitation_fidelity(&p, Port::C) - 0.8).abs() < 1e-15);

        p.theta = [FRAC_PI_2; 2];
        let ratio = imperfect_excitation_click(&p, Port::C) / imperfect_excitation_click(&p, Port::D);
        assert!((ratio - 1.1 / 0.9).abs() < 1e-12);

        p.phase_setpoint = FRAC_PI_2;
        p.target_phase = FRAC_PI_2;
        let fc = imperfect_excitation_fidelity(&p, Port::C);
        assert!((fc - imperfect_excitation_fidelity(&p, Port::D)).abs() < 1e-15);

        p.phase_setpoint = 0.0;
        p.target_phase = 0.0;
        p.theta = [1e-9; 2];
        assert!((imperfect_excitation_fidelity(&p, Port::D) - 1.0).abs() < 1e-12);
        assert!((imperfect_excitation_fidelity(&p, Port::C) - 0.8 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn port_average_is_theta_independent_at_quadrature() {
        let mut p = NvLinkParams::symmetric(0.3, 1e-3);
        p.phase_setpoint = FRAC_PI_2;
        p.target_phase = FRAC_PI_2;
        for theta in [0.3, 1.0, 2.0, PI] {
            p.theta = [theta; 2];
            assert!((port_averaged_imperfect_fidelity(&p) - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn double_excitation_fidelity_matches_elements() {
        let mut p = NvLinkParams::symmetric(0.1, 1e-3);
        p.p_de = 0.06;
        for port in Port::both() {
            let (rho, _) = heralded_state(&p, &Weights::integrated(&p), 0.0, port).unwrap();
            let f = fidelity(&rho, 0.0, port);
            assert!((f - symmetric_fidelity(0.1, 0.06)).abs() < 1e-14);
        }
    }
}
