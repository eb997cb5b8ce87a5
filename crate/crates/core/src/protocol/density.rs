use std::ops::{Add, Mul};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{HeraldError, Result};

/// Two-qubit density matrix in the basis {|00⟩, |01⟩, |10⟩, |11⟩}, node A
/// being the first (most significant) qubit.
///
/// Unnormalized matrices carry the probability (or probability density) of
/// the detection pattern that produced them as their trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix4 {
    entries: Matrix4<Complex64>,
    normalized: bool,
}

impl DensityMatrix4 {
    pub fn zero() -> Self {
        Self {
            entries: Matrix4::zeros(),
            normalized: false,
        }
    }

    pub fn from_matrix(entries: Matrix4<Complex64>) -> Self {
        Self {
            entries,
            normalized: false,
        }
    }

    /// |ψ⟩⟨ψ| without normalizing ψ.
    pub fn outer(psi: &Vector4<Complex64>) -> Self {
        Self::from_matrix(psi * psi.adjoint())
    }

    /// Normalized projector onto (|01⟩ + e^{iφ}|10⟩)/√2.
    pub fn bell(phase: f64) -> Self {
        let psi = bell_vector(phase);
        Self {
            entries: psi * psi.adjoint(),
            normalized: true,
        }
    }

    pub fn basis_projector(index: usize) -> Self {
        let mut m = Matrix4::zeros();
        m[(index, index)] = Complex64::new(1.0, 0.0);
        Self {
            entries: m,
            normalized: true,
        }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Divides by the trace. Fails with [`HeraldError::NoHerald`] for a zero trace.
    pub fn normalize(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(HeraldError::NoHerald);
        }
        Ok(Self {
            entries: self.entries.map(|z| z / tr),
            normalized: true,
        })
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_modulus(&(self.entries - self.entries.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// ⟨ψ|ρ|ψ⟩ (real part; the imaginary part vanishes for Hermitian ρ).
    pub fn expectation(&self, psi: &Vector4<Complex64>) -> f64 {
        (psi.adjoint() * self.entries * psi)[(0, 0)].re
    }

    /// Tr(ρ O).
    pub fn expectation_of(&self, op: &Matrix4<Complex64>) -> f64 {
        (self.entries * op).trace().re
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_modulus(&(self.entries - other.entries))
    }

    /// Largest modulus among the entries.
    pub fn max_abs(&self) -> f64 {
        max_modulus(&self.entries)
    }

    /// Row-major (re, im) pairs.
    pub fn to_row_major(&self) -> [[f64; 2]; 16] {
        let mut out = [[0.0; 2]; 16];
        for r in 0..4 {
            for c in 0..4 {
                let z = self.entries[(r, c)];
                out[4 * r + c] = [z.re, z.im];
            }
        }
        out
    }
}

impl Add for DensityMatrix4 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            entries: self.entries + rhs.entries,
            normalized: false,
        }
    }
}

impl Mul<f64> for DensityMatrix4 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self {
            entries: self.entries * Complex64::new(rhs, 0.0),
            normalized: false,
        }
    }
}

impl std::iter::Sum for DensityMatrix4 {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

fn max_modulus(m: &Matrix4<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn bell_vector(phase: f64) -> Vector4<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(
        Complex64::new(0.0, 0.0),
        Complex64::new(s, 0.0),
        Complex64::from_polar(s, phase),
        Complex64::new(0.0, 0.0),
    )
}
