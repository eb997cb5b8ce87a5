//! Gauss–Legendre quadrature: fixed composite rules for the inner loss-time
//! integrals and an adaptive bisection driver for window integrals.

use std::ops::{Add, Mul};

use crate::error::{HeraldError, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A list of (abscissa, weight) pairs.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub points: Vec<(f64, f64)>,
}

impl Rule {
    /// Composite Gauss–Legendre over `[a, b]`, split at every breakpoint that
    /// falls inside the interval and into panels no longer than `max_panel`.
    pub fn composite(a: f64, b: f64, breakpoints: &[f64], max_panel: f64, order: usize) -> Rule {
        let mut cuts: Vec<f64> = vec![a, b];
        cuts.extend(breakpoints.iter().copied().filter(|&t| t > a && t < b));
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

        let (xs, ws) = gauss_legendre(order);
        let mut points = Vec::new();
        for seg in cuts.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            let panels = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
            let h = (hi - lo) / panels as f64;
            for p in 0..panels {
                let pa = lo + p as f64 * h;
                let half = 0.5 * h;
                let mid = pa + half;
                for (x, w) in xs.iter().zip(&ws) {
                    points.push((mid + half * x, half * w));
                }
            }
        }
        Rule { points }
    }

    pub fn integrate<T, F>(&self, zero: T, mut f: F) -> T
    where
        T: Add<Output = T> + Mul<f64, Output = T>,
        F: FnMut(f64) -> T,
    {
        self.points
            .iter()
            .fold(zero, |acc, &(t, w)| acc + f(t) * w)
    }
}

/// Adaptive Gauss–Legendre integration by interval bisection.
///
/// Each interval is accepted once the `order`-point estimate agrees with the
/// sum over its two halves to within `rel_tol` of the running total (or
/// `abs_tol`). `norm` measures the size of the integrand's values.
pub struct Adaptive {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub order: usize,
    pub max_depth: u32,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-300,
            order: 10,
            max_depth: 30,
        }
    }
}

impl Adaptive {
    pub fn integrate<T, F, N>(&self, a: f64, b: f64, zero: T, f: F, norm: N) -> Result<T>
    where
        T: Clone + Add<Output = T> + Mul<f64, Output = T>,
        F: Fn(f64) -> T,
        N: Fn(&T) -> f64,
    {
        if b <= a {
            return Ok(zero);
        }
        let (xs, ws) = gauss_legendre(self.order);
        let rule = |lo: f64, hi: f64| -> T {
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            xs.iter()
                .zip(&ws)
                .fold(zero.clone(), |acc, (x, w)| acc + f(mid + half * x) * (half * w))
        };

        let whole = rule(a, b);
        let scale = norm(&whole).max(self.abs_tol);
        let mut stack = vec![(a, b, whole, 0u32)];
        let mut total = zero.clone();
        while let Some((lo, hi, est, depth)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = rule(lo, mid);
            let right = rule(mid, hi);
            let refined = left.clone() + right.clone();
            let diff = norm(&(refined.clone() + est * -1.0));
            let width_share = (hi - lo) / (b - a);
            if diff <= (self.rel_tol * scale * width_share).max(self.abs_tol) {
                total = total + refined;
            } else if depth >= self.max_depth {
                return Err(HeraldError::Integration(format!(
                    "no convergence on [{lo}, {hi}] after {depth} bisections"
                )));
            } else {
                stack.push((mid, hi, right, depth + 1));
                stack.push((lo, mid, left, depth + 1));
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // degree 9 is exact for 5 points
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_respects_breakpoints() {
        let r = Rule::composite(0.0, 2.0, &[1.0], 10.0, 4);
        let step = r.integrate(0.0, |t| if t < 1.0 { 0.0 } else { 1.0 });
        assert!((step - 1.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_exponential() {
        let a = Adaptive::default();
        let v = a
            .integrate(0.0, 50.0, 0.0, |t: f64| (-t / 12.4).exp(), |x: &f64| x.abs())
            .unwrap();
        let exact = 12.4 * (1.0 - (-50.0f64 / 12.4).exp());
        assert!((v - exact).abs() / exact < 1e-10);
    }
}
