//! Literal Fock-space reference for the pattern engine.
//!
//! Photons live in discrete time bins. Each node's state after excitation
//! and loss is expanded into monomials of creation operators over
//! (arrival|loss, node, bin, polarization) modes; detections apply the port
//! annihilation operators term by term, remaining arrival modes are
//! projected onto vacuum and loss modes are traced out with the bosonic
//! normalization of each monomial.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use num_complex::Complex64;

use heraldsim::protocol::{DiscreteModes, LossSelection, NodeParams};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Mode {
    lost: bool,
    node: u8,
    bin: u8,
    pol: u8,
}

type Monomial = Vec<Mode>;
type Poly = BTreeMap<Monomial, Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut m = ma.clone();
            m.extend(mb.iter().copied());
            m.sort();
            *out.entry(m).or_default() += ca * cb;
        }
    }
    out
}

fn add_into(acc: &mut Poly, p: &Poly, scale: Complex64) {
    for (m, v) in p {
        *acc.entry(m.clone()).or_default() += v * scale;
    }
}

/// a_m acting on a polynomial of creation operators.
fn annihilate(p: &Poly, mode: Mode) -> Poly {
    let mut out = Poly::new();
    for (m, v) in p {
        if let Some(pos) = m.iter().position(|x| *x == mode) {
            let count = m.iter().filter(|x| **x == mode).count();
            let mut rest = m.clone();
            rest.remove(pos);
            *out.entry(rest).or_default() += v * (count as f64);
        }
    }
    out
}

fn norm_sqr_of_monomial(m: &Monomial) -> f64 {
    let mut f = 1.0;
    let mut i = 0;
    while i < m.len() {
        let mut j = i;
        while j < m.len() && m[j] == m[i] {
            j += 1;
        }
        for k in 1..=(j - i) {
            f *= k as f64;
        }
        i = j;
    }
    f
}

/// Creation operator for node `node`'s emission in `bin`, after the loss
/// beam splitter, in the (ε_A, ε_⊥) polarization basis.
fn creation(node: u8, bin: u8, eta: f64, pol: [f64; 2]) -> Poly {
    let mut p = Poly::new();
    for (k, amp) in pol.iter().enumerate() {
        if *amp == 0.0 {
            continue;
        }
        let k = k as u8;
        p.insert(vec![Mode { lost: false, node, bin, pol: k }], c(amp * eta.sqrt()));
        p.insert(vec![Mode { lost: true, node, bin, pol: k }], c(amp * (1.0 - eta).sqrt()));
    }
    p
}

fn node_poly(node: u8, params: &NodeParams, modes: &DiscreteModes, pol: [f64; 2]) -> [Poly; 2] {
    let bins = modes.bins();
    let idx = node as usize;
    let mut bright = Poly::new();
    bright.insert(vec![], c(params.c0));
    for k in 0..bins {
        let cr = creation(node, k as u8, params.eta, pol);
        add_into(&mut bright, &cr, modes.single[idx][k]);
    }
    for k in 0..bins {
        for l in k + 1..bins {
            let pair = mul(
                &creation(node, k as u8, params.eta, pol),
                &creation(node, l as u8, params.eta, pol),
            );
            add_into(&mut bright, &pair, modes.pair[idx][k][l]);
        }
    }
    let mut scaled = Poly::new();
    add_into(&mut scaled, &bright, c(params.alpha.sqrt()));
    let mut dark = Poly::new();
    dark.insert(
        vec![],
        Complex64::from_polar((1.0 - params.alpha).sqrt(), -params.theta_phase),
    );
    [scaled, dark]
}

/// Reference density matrix for click `record` (bin indices) in the port
/// with relative sign `sign`.
pub fn oracle_density(
    a: &NodeParams,
    b: &NodeParams,
    pol_dot: f64,
    modes: &DiscreteModes,
    record: &[usize],
    sign: f64,
    selection: LossSelection,
) -> Matrix4<Complex64> {
    let pol_b = [pol_dot, (1.0 - pol_dot * pol_dot).max(0.0).sqrt()];
    let pa = node_poly(0, a, modes, [1.0, 0.0]);
    let pb = node_poly(1, b, modes, pol_b);
    // qubit index 2*bA + bB
    let mut states: Vec<Poly> = Vec::with_capacity(4);
    for ba in 0..2 {
        for bb in 0..2 {
            states.push(mul(&pa[ba], &pb[bb]));
        }
    }

    let mut rho = Matrix4::<Complex64>::zeros();
    let n = record.len();
    for pols in 0..(1usize << n) {
        let projected: Vec<Poly> = states
            .iter()
            .map(|s| {
                let mut cur = s.clone();
                for (slot, &bin) in record.iter().enumerate() {
                    let pol = ((pols >> slot) & 1) as u8;
                    let from_a = annihilate(&cur, Mode { lost: false, node: 0, bin: bin as u8, pol });
                    let from_b = annihilate(&cur, Mode { lost: false, node: 1, bin: bin as u8, pol });
                    let mut next = Poly::new();
                    add_into(&mut next, &from_a, c(std::f64::consts::FRAC_1_SQRT_2));
                    add_into(&mut next, &from_b, c(sign * std::f64::consts::FRAC_1_SQRT_2));
                    cur = next;
                }
                cur.into_iter()
                    .filter(|(m, _)| m.iter().all(|x| x.lost))
                    .collect()
            })
            .collect();

        for row in 0..4 {
            for col in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, v) in &projected[row] {
                    let la = m.iter().filter(|x| x.node == 0).count();
                    let lb = m.iter().filter(|x| x.node == 1).count();
                    let keep = match selection {
                        LossSelection::NoLoss => la + lb == 0,
                        LossSelection::WithLoss => la + lb > 0,
                        LossSelection::Any => true,
                    };
                    if !keep {
                        continue;
                    }
                    if let Some(w) = projected[col].get(m) {
                        acc += v * w.conj() * norm_sqr_of_monomial(m);
                    }
                }
                rho[(row, col)] += acc;
            }
        }
    }
    rho
}
