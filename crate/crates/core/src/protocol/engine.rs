//! Per-detection-pattern density matrices.
//!
//! A detection record is the ordered list of click times in one port (empty
//! for a noise count). Each node, conditioned on its qubit being bright,
//! contributes a branch with `n` photons arriving at the beam splitter and
//! `l` photons lost (n + l ≤ 2). Branches of the two nodes whose arrivals
//! fill the record are combined through the port projector; lost photons are
//! traced out, so only branches leaving identical loss-mode content add
//! coherently. Polarization is resolved in the basis {ε_A, ε_⊥} and summed
//! incoherently, as the detectors do not resolve it.

use nalgebra::Vector4;
use num_complex::Complex64;

use super::density::DensityMatrix4;
use super::modes::{pair_either_order, EmissionModes};
use super::params::{Node, NodeParams};

/// Which loss configurations contribute to a pattern. A photon counts as
/// lost when it never reaches the detectors inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSelection {
    /// No photon lost.
    NoLoss,
    /// At least one photon lost.
    WithLoss,
    Any,
}

impl LossSelection {
    fn admits(self, la: usize, lb: usize) -> bool {
        match self {
            LossSelection::NoLoss => la == 0 && lb == 0,
            LossSelection::WithLoss => la + lb > 0,
            LossSelection::Any => true,
        }
    }
}

const KEYS: usize = 8;
type Gram = [[Complex64; KEYS]; KEYS];

fn key(bit: usize, mask: usize) -> usize {
    bit * 4 + mask
}

fn zero_gram() -> Gram {
    [[Complex64::new(0.0, 0.0); KEYS]; KEYS]
}

struct Side<'a, M: ?Sized> {
    node: Node,
    params: &'a NodeParams,
    modes: &'a M,
    /// Amplitude of this node's photon in the (ε_A, ε_⊥) polarization basis.
    pol: [f64; 2],
}

impl<M: EmissionModes + ?Sized> Side<'_, M> {
    /// Amplitude of qubit state `bit` with the record slots in `mask` filled by
    /// this node, with `lost` photons lost at the given times.
    fn amplitude(&self, bit: usize, mask: usize, record: &[f64], lost: &[f64]) -> Complex64 {
        let p = self.params;
        let zero = Complex64::new(0.0, 0.0);
        let arrived: Vec<f64> = (0..record.len())
            .filter(|s| mask & (1 << s) != 0)
            .map(|s| record[s])
            .collect();
        if bit == 1 {
            return if arrived.is_empty() && lost.is_empty() {
                Complex64::from_polar((1.0 - p.alpha).sqrt(), -p.theta_phase)
            } else {
                zero
            };
        }
        let eta = p.eta;
        let undetected = |r: f64| self.modes.undetected_weight(self.node, eta, r).sqrt();
        let branch = match (arrived.as_slice(), lost) {
            ([], []) => Complex64::new(p.c0, 0.0),
            ([t], []) => self.modes.single(self.node, *t) * eta.sqrt(),
            ([], [r]) => self.modes.single(self.node, *r) * undetected(*r),
            ([t1, t2], []) => self.modes.pair(self.node, *t1, *t2) * eta,
            ([t], [r]) => {
                pair_either_order(self.modes, self.node, *t, *r) * (eta.sqrt() * undetected(*r))
            }
            _ => zero,
        };
        branch * p.alpha.sqrt()
    }

    /// Gram matrices of this node's amplitudes for 0, 1 and 2 lost photons.
    fn grams(&self, record: &[f64]) -> [Gram; 3] {
        let masks = 1usize << record.len();
        let mut g0 = zero_gram();
        let f0: Vec<(usize, Complex64)> = (0..2)
            .flat_map(|bit| (0..masks).map(move |m| (bit, m)))
            .map(|(bit, m)| (key(bit, m), self.amplitude(bit, m, record, &[])))
            .collect();
        for &(kx, fx) in &f0 {
            for &(ky, fy) in &f0 {
                g0[kx][ky] = fx * fy.conj();
            }
        }

        // One lost photon: only the bright branch can lose it.
        let mut g1 = zero_gram();
        let rule = self.modes.loss_rule(self.node, record);
        let mut buf = vec![Complex64::new(0.0, 0.0); masks];
        for &(r, w) in &rule.points {
            for (m, b) in buf.iter_mut().enumerate() {
                *b = self.amplitude(0, m, record, &[r]);
            }
            for mx in 0..masks {
                if buf[mx] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for my in 0..masks {
                    g1[key(0, mx)][key(0, my)] += buf[mx] * buf[my].conj() * w;
                }
            }
        }

        let mut g2 = zero_gram();
        let p = self.params;
        g2[0][0] = Complex64::new(
            p.alpha * self.modes.undetected_pair_mass(self.node, p.eta),
            0.0,
        );
        [g0, g1, g2]
    }

    fn pol_factor(&self, mask: usize, pols: usize, slots: usize) -> f64 {
        (0..slots)
            .filter(|s| mask & (1 << s) != 0)
            .map(|s| self.pol[(pols >> s) & 1])
            .product()
    }
}

/// Density matrix (unnormalized) conditioned on the click record `record`
/// (ascending times) in the port with relative B sign `sign`.
pub fn pattern_density<M: EmissionModes + ?Sized>(
    a: &NodeParams,
    b: &NodeParams,
    pol_dot: f64,
    modes: &M,
    record: &[f64],
    sign: f64,
    selection: LossSelection,
) -> DensityMatrix4 {
    debug_assert!(record.len() <= 2);
    debug_assert!(record.windows(2).all(|w| w[0] < w[1]));
    let slots = record.len();
    let full = (1usize << slots) - 1;
    let side_a = Side {
        node: Node::A,
        params: a,
        modes,
        pol: [1.0, 0.0],
    };
    let side_b = Side {
        node: Node::B,
        params: b,
        modes,
        pol: [pol_dot, (1.0 - pol_dot * pol_dot).max(0.0).sqrt()],
    };
    let grams_a = side_a.grams(record);
    let grams_b = side_b.grams(record);

    let bs_norm = match slots {
        0 => 1.0,
        1 => std::f64::consts::FRAC_1_SQRT_2,
        _ => 0.5,
    };
    let bs = |mask_a: usize| -> f64 {
        let n_b = (full & !mask_a).count_ones() as i32;
        bs_norm * sign.powi(n_b)
    };

    let mut rho = nalgebra::Matrix4::<Complex64>::zeros();
    for pols in 0..(1usize << slots) {
        for (la, ga) in grams_a.iter().enumerate() {
            for (lb, gb) in grams_b.iter().enumerate() {
                if !selection.admits(la, lb) {
                    continue;
                }
                for row in 0..4 {
                    let (ba, bb) = (row >> 1, row & 1);
                    for col in 0..4 {
                        let (ca, cb) = (col >> 1, col & 1);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for ma in 0..=full {
                            let mb = full & !ma;
                            let pa = side_a.pol_factor(ma, pols, slots)
                                * side_b.pol_factor(mb, pols, slots);
                            if pa == 0.0 {
                                continue;
                            }
                            for ma2 in 0..=full {
                                let mb2 = full & !ma2;
                                let pb = side_a.pol_factor(ma2, pols, slots)
                                    * side_b.pol_factor(mb2, pols, slots);
                                if pb == 0.0 {
                                    continue;
                                }
                                let x = ga[key(ba, ma)][key(ca, ma2)];
                                let y = gb[key(bb, mb)][key(cb, mb2)];
                                acc += x * y * (bs(ma) * bs(ma2) * pa * pb);
                            }
                        }
                        rho[(row, col)] += acc;
                    }
                }
            }
        }
    }
    DensityMatrix4::from_matrix(rho)
}

/// State of one node after the first unitary, for reference computations.
pub fn initial_superposition(p: &NodeParams) -> [Complex64; 2] {
    [
        Complex64::new(p.alpha.sqrt(), 0.0),
        Complex64::from_polar((1.0 - p.alpha).sqrt(), -p.theta_phase),
    ]
}

/// Product state ρ0 of the two no-emission superpositions
/// √α c0|0⟩ + e^{−iϑ}√(1−α)|1⟩ (unnormalized).
pub fn no_emission_product(a: &NodeParams, b: &NodeParams) -> DensityMatrix4 {
    let va = [
        Complex64::new(a.alpha.sqrt() * a.c0, 0.0),
        Complex64::from_polar((1.0 - a.alpha).sqrt(), -a.theta_phase),
    ];
    let vb = [
        Complex64::new(b.alpha.sqrt() * b.c0, 0.0),
        Complex64::from_polar((1.0 - b.alpha).sqrt(), -b.theta_phase),
    ];
    let psi = Vector4::new(va[0] * vb[0], va[0] * vb[1], va[1] * vb[0], va[1] * vb[1]);
    DensityMatrix4::outer(&psi)
}
