//! General heralding model: temporal modes, per-pattern density matrices and
//! their assembly into the heralded state and click probability.

pub mod density;
pub mod engine;
pub mod modes;
pub mod params;

use num_complex::Complex64;

pub use density::{bell_vector, DensityMatrix4};
pub use engine::{pattern_density, LossSelection};
pub use modes::{ContinuousModes, DiscreteModes, EmissionModes};
pub use params::{
    pol_overlap, DetectionSetup, DetectionWindow, Node, NodeParams, PhotonEnvelope, Port,
};

use crate::error::{check_unit, invalid, Result};
use crate::quadrature::Adaptive;

/// H(t − t_exc) e^{−(t − t_exc)/2τ}/√τ.
pub fn envelope_amplitude(env: &PhotonEnvelope, t_em: f64) -> f64 {
    env.amplitude(t_em)
}

/// Interference term (ε_A·ε_B) E_A(t) E_B(t) e^{−i(χ_A − χ_B)} of the two
/// detected modes at time `t`, excluding the excitation amplitudes.
pub fn mode_overlap(a: &NodeParams, b: &NodeParams, tau: f64, setup: &DetectionSetup, t: f64) -> Complex64 {
    let modes = ContinuousModes::new(a, b, tau, setup);
    modes.unit_mode(Node::A, t) * modes.unit_mode(Node::B, t).conj() * pol_overlap(a, b)
}

/// The two emitters of a link together with their shared lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: NodeParams,
    pub b: NodeParams,
    /// Excited-state lifetime τ, ns.
    pub tau: f64,
}

/// Heralded state for one port.
#[derive(Debug, Clone, Copy)]
pub struct Herald {
    /// Click probability (a density in ns⁻¹ when not integrated over the window).
    pub p_click: f64,
    pub rho: DensityMatrix4,
}

/// The unnormalized contributions summed into a herald.
#[derive(Debug, Clone, Copy)]
pub struct HeraldParts {
    pub single: DensityMatrix4,
    pub double: DensityMatrix4,
    pub incoherent: DensityMatrix4,
    pub noise: DensityMatrix4,
}

impl HeraldParts {
    pub fn total(&self) -> DensityMatrix4 {
        self.single + self.double + self.incoherent + self.noise
    }
}

impl Link {
    pub fn new(a: NodeParams, b: NodeParams, tau: f64) -> Self {
        Self { a, b, tau }
    }

    pub fn symmetric(node: NodeParams, tau: f64) -> Self {
        Self::new(node.clone(), node, tau)
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.b.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("lifetime {} must be > 0", self.tau)));
        }
        Ok(())
    }

    pub fn modes(&self, setup: &DetectionSetup) -> ContinuousModes {
        ContinuousModes::new(&self.a, &self.b, self.tau, setup)
    }

    fn pattern(&self, modes: &ContinuousModes, record: &[f64], port: Port, sel: LossSelection) -> DensityMatrix4 {
        pattern_density(
            &self.a,
            &self.b,
            pol_overlap(&self.a, &self.b),
            modes,
            record,
            port.sign(),
            sel,
        )
    }

    /// One photon emitted in total and detected at t′.
    pub fn rho_single(&self, setup: &DetectionSetup) -> Result<DensityMatrix4> {
        self.validate()?;
        setup.validate()?;
        if setup.t_dprime.is_some() {
            return Err(invalid("t_dprime", "single-photon pattern takes one click"));
        }
        let modes = self.modes(setup);
        Ok(self.pattern(&modes, &[setup.t_prime], setup.port, LossSelection::NoLoss))
    }

    /// Two photons, none lost, both detected in the same port at t′ < t″.
    pub fn rho_double(&self, setup: &DetectionSetup) -> Result<DensityMatrix4> {
        self.validate()?;
        setup.validate()?;
        let t2 = setup
            .t_dprime
            .ok_or_else(|| invalid("t_dprime", "two-photon pattern needs a second click"))?;
        let modes = self.modes(setup);
        Ok(self.pattern(&modes, &[setup.t_prime, t2], setup.port, LossSelection::NoLoss))
    }

    /// Clicks at the record times with at least one photon lost.
    pub fn rho_incoherent(&self, setup: &DetectionSetup) -> Result<DensityMatrix4> {
        self.validate()?;
        setup.validate()?;
        let modes = self.modes(setup);
        let mut rho = self.pattern(&modes, &[setup.t_prime], setup.port, LossSelection::WithLoss);
        if let Some(t2) = setup.t_dprime {
            rho = rho
                + self.pattern(&modes, &[setup.t_prime, t2], setup.port, LossSelection::WithLoss);
        }
        Ok(rho)
    }

    /// p_d (ρ0 + ρ_lost): a noise click while nothing reached the beam splitter.
    pub fn rho_noise(&self, p_d: f64) -> Result<DensityMatrix4> {
        self.validate()?;
        check_unit("p_d", p_d)?;
        let setup = DetectionSetup::new(Port::C, 0.0, DetectionWindow::new(0.0, 1.0));
        let modes = self.modes(&setup);
        Ok(self.pattern(&modes, &[], Port::C, LossSelection::Any) * p_d)
    }

    /// Contributions for a first click at t′ in the setup's port, with the
    /// second photon of two-photon patterns integrated over (t′, window end].
    /// `noise_density` is the noise-click probability per ns.
    fn parts_at(&self, modes: &ContinuousModes, setup: &DetectionSetup, t1: f64, noise: &DensityMatrix4, noise_density: f64, quad: &Adaptive) -> Result<HeraldParts> {
        let port = setup.port;
        let single = self.pattern(modes, &[t1], port, LossSelection::NoLoss);
        let inc1 = self.pattern(modes, &[t1], port, LossSelection::WithLoss);
        let end = setup.window.end();
        let (double, inc2) = if t1 < end {
            let MatBundle([d, i]) = quad.integrate(
                t1,
                end,
                MatBundle::zero(),
                |t2| {
                    MatBundle([
                        self.pattern(modes, &[t1, t2], port, LossSelection::NoLoss),
                        self.pattern(modes, &[t1, t2], port, LossSelection::WithLoss),
                    ])
                },
                MatBundle::norm,
            )?;
            (d, i)
        } else {
            (DensityMatrix4::zero(), DensityMatrix4::zero())
        };
        Ok(HeraldParts {
            single,
            double,
            incoherent: inc1 + inc2,
            noise: *noise * noise_density,
        })
    }

    /// Unnormalized contributions for the herald described by `setup`.
    ///
    /// With `integrate_over_window` the first click time is integrated over
    /// the window and the noise term is `p_d` per window; otherwise the
    /// result is a density at `setup.t_prime` with noise density p_d/duration.
    pub fn herald_parts(&self, setup: &DetectionSetup, p_d: f64, integrate_over_window: bool) -> Result<HeraldParts> {
        self.validate()?;
        setup.validate()?;
        check_unit("p_d", p_d)?;
        let modes = self.modes(setup);
        let noise = self.pattern(&modes, &[], setup.port, LossSelection::Any);
        let quad = Adaptive::default();
        if !integrate_over_window {
            return self.parts_at(&modes, setup, setup.t_prime, &noise, p_d / setup.window.duration, &quad);
        }
        let w = setup.window;
        let MatBundle([single, double, incoherent]) = quad.integrate(
            w.start,
            w.end(),
            MatBundle::zero(),
            |t1| match self.parts_at(&modes, setup, t1, &noise, 0.0, &quad) {
                Ok(p) => MatBundle([p.single, p.double, p.incoherent]),
                Err(_) => MatBundle([DensityMatrix4::from_matrix(nalgebra::Matrix4::from_element(
                    Complex64::new(f64::NAN, 0.0),
                )); 3]),
            },
            MatBundle::norm,
        )?;
        if single.trace().is_nan() || double.trace().is_nan() {
            return Err(crate::error::HeraldError::Integration(
                "two-photon integral did not converge".into(),
            ));
        }
        Ok(HeraldParts {
            single,
            double,
            incoherent,
            noise: noise * p_d,
        })
    }

    /// Heralded state and click probability for the setup's port.
    pub fn assemble(&self, setup: &DetectionSetup, p_d: f64, integrate_over_window: bool) -> Result<Herald> {
        let parts = self.herald_parts(setup, p_d, integrate_over_window)?;
        let total = parts.total();
        let p_click = total.trace();
        let rho = total.normalize()?;
        Ok(Herald { p_click, rho })
    }
}


/// Several matrices integrated together.
#[derive(Clone, Copy)]
struct MatBundle<const N: usize>([DensityMatrix4; N]);

impl<const N: usize> MatBundle<N> {
    fn zero() -> Self {
        Self([DensityMatrix4::zero(); N])
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|m| m.max_abs()).sum()
    }
}

impl<const N: usize> std::ops::Add for MatBundle<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a = *a + b;
        }
        self
    }
}

impl<const N: usize> std::ops::Mul<f64> for MatBundle<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.0.iter_mut() {
            *a = *a * rhs;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> DetectionWindow {
        DetectionWindow::new(4.0, 15.0)
    }

    fn limit_link(alpha: f64, eta: f64) -> Link {
        Link::symmetric(NodeParams::new(alpha, eta), 12.4)
    }

    fn limit_state(alpha: f64, phase: f64) -> DensityMatrix4 {
        DensityMatrix4::bell(phase) * (1.0 - alpha) + DensityMatrix4::basis_projector(0) * alpha
    }

    #[test]
    fn high_loss_limit_reproduces_protocol_error() {
        for alpha in [0.05, 0.1, 0.2] {
            let link = limit_link(alpha, 1e-7);
            let setup = DetectionSetup::new(Port::C, 6.0, window());
            for integrate in [false, true] {
                let h = link.assemble(&setup, 0.0, integrate).unwrap();
                let err = h.rho.max_abs_diff(&limit_state(alpha, 0.0));
                assert!(err < 1e-7, "alpha {alpha} integrate {integrate}: {err}");
            }
        }
    }

    #[test]
    fn port_d_heralds_the_odd_bell_state() {
        let link = limit_link(0.1, 1e-7);
        let setup = DetectionSetup::new(Port::D, 6.0, window());
        let h = link.assemble(&setup, 0.0, false).unwrap();
        let f = h.rho.expectation(&bell_vector(std::f64::consts::PI));
        assert!((f - 0.9).abs() < 1e-6, "{f}");
    }

    #[test]
    fn no_bright_population_at_a_leaves_only_b_emission() {
        let a = NodeParams::new(0.0, 0.01);
        let b = NodeParams::new(0.3, 0.01);
        let link = Link::new(a, b, 12.4);
        let rho = link.rho_single(&DetectionSetup::new(Port::C, 6.0, window())).unwrap();
        assert!(rho.get(2, 2).norm() > 0.0);
        for (r, c) in [(0, 0), (1, 1), (1, 2), (2, 1)] {
            assert!(rho.get(r, c).norm() < 1e-18, "({r},{c})");
        }
    }

    #[test]
    fn symmetric_single_block_is_balanced() {
        let link = limit_link(0.1, 1e-3);
        let rho = link.rho_single(&DetectionSetup::new(Port::C, 6.0, window())).unwrap();
        let (a11, a22, a12) = (rho.get(1, 1).re, rho.get(2, 2).re, rho.get(1, 2).norm());
        assert!((a11 - a22).abs() < 1e-15 * a11.max(1e-300) + 1e-20);
        assert!((a12 - a11).abs() < 1e-12 * a11);
    }

    #[test]
    fn incoherent_block_is_diagonal_without_double_emission() {
        let node = NodeParams::new(0.2, 0.05).with_amplitudes(0.4, 0.0);
        let link = Link::symmetric(node, 12.4);
        let setup = DetectionSetup::new(Port::C, 6.0, window()).with_second_click(9.0);
        let rho = link.rho_incoherent(&setup).unwrap();
        let diag = (0..4).map(|i| rho.get(i, i).re).fold(0.0, f64::max);
        assert!(diag > 0.0);
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert!(rho.get(r, c).norm() < 1e-12 * diag, "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn double_emission_makes_lost_photon_branches_coherent() {
        let node = NodeParams::new(0.2, 0.05).with_amplitudes(0.0, 0.3);
        let link = Link::symmetric(node, 12.4);
        let rho = link.rho_incoherent(&DetectionSetup::new(Port::C, 6.0, window())).unwrap();
        assert!(rho.get(0, 1).norm() > 1e-3 * rho.get(0, 0).re);
    }

    #[test]
    fn noise_fills_the_dark_dark_corner() {
        let (pa, pb) = (NodeParams::new(0.07, 3.8e-4), NodeParams::new(0.05, 5.2e-4));
        let link = Link::new(pa, pb, 12.4);
        let setup = DetectionSetup::new(Port::C, 6.0, window());
        let p_d = 1e-5;
        let parts = link.herald_parts(&setup, p_d, true).unwrap();
        let a33 = parts.total().get(3, 3).re;
        assert!((a33 - p_d * 0.93 * 0.95).abs() < 1e-18, "{a33}");
        let c1 = NodeParams::new(0.3, 0.2).with_amplitudes(1.0, 0.0);
        let idle = Link::symmetric(c1.clone(), 12.4).rho_noise(0.5).unwrap();
        let want = engine::no_emission_product(&c1, &c1) * 0.5;
        assert!(idle.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn click_density_approaches_linear_rate() {
        let (alpha, eta) = (0.1, 1e-9);
        let link = limit_link(alpha, eta);
        let t = 6.0;
        let setup = DetectionSetup::new(Port::C, t, window());
        let h = link.assemble(&setup, 0.0, false).unwrap();
        let env = PhotonEnvelope::new(12.4, 0.0).amplitude(t).powi(2);
        let ratio = h.p_click / (alpha * eta * env);
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn click_probability_grows_with_efficiency_and_population() {
        let base = |alpha: f64, eta: f64| {
            let node = NodeParams::new(alpha, eta).with_amplitudes(0.2, 0.2);
            let link = Link::new(node, NodeParams::new(0.1, 0.01).with_amplitudes(0.2, 0.2), 12.4);
            let setup = DetectionSetup::new(Port::C, 6.0, window());
            link.assemble(&setup, 1e-4, true).unwrap().p_click
        };
        let mut last = 0.0;
        for eta in [0.001, 0.01, 0.1, 0.5, 1.0] {
            let p = base(0.2, eta);
            assert!(p >= last, "eta {eta}");
            last = p;
        }
        last = 0.0;
        for alpha in [0.0, 0.1, 0.4, 0.8, 1.0] {
            let p = base(alpha, 0.05);
            assert!(p >= last, "alpha {alpha}");
            last = p;
        }
    }
}
