//! Weighted nonlinear least squares for the spectroscopy and phase fits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, HeraldError, Result};

/// One observation: abscissa, value and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: Option<f64>,
}

impl DataPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, sigma: None }
    }
}

/// How residuals are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// σ = √N with a floor of 1, for count data.
    Poisson,
    /// σ from the data's third column (1 where missing).
    Given,
    /// σ = 1; the covariance is rescaled by the reduced χ².
    Unit,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub param_tol: f64,
    pub weighting: Weighting,
}

impl FitOptions {
    pub fn new(weighting: Weighting) -> Self {
        Self {
            max_iter: 200,
            param_tol: 1e-10,
            weighting,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// √χ² of the weighted residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Quantities computed from the parameters, with standard errors.
    pub derived: Vec<(String, f64, f64)>,
    pub warnings: Vec<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    pub fn derived(&self, name: &str) -> Option<(f64, f64)> {
        self.derived
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, v, e)| (*v, *e))
    }

    /// `key = value` lines; the covariance is a row-major list.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "n_iter = {}", self.n_iter);
        let _ = writeln!(s, "residual_norm = {:e}", self.residual_norm);
        for (i, n) in self.names.iter().enumerate() {
            let _ = writeln!(s, "param.{n} = {:e}", self.values[i]);
            let _ = writeln!(s, "stderr.{n} = {:e}", self.covariance[(i, i)].max(0.0).sqrt());
        }
        for (n, v, e) in &self.derived {
            let _ = writeln!(s, "derived.{n} = {v:e}");
            let _ = writeln!(s, "derived_stderr.{n} = {e:e}");
        }
        let cov: Vec<String> = self
            .covariance
            .transpose()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        let _ = writeln!(s, "covariance = [{}]", cov.join(", "));
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

/// A model y = f(x; p) with its gradient in p.
pub trait Model {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    fn grad(&self, x: f64, p: &[f64], out: &mut [f64]);
}

fn sigma_of(d: &DataPoint, w: Weighting) -> f64 {
    match w {
        Weighting::Poisson => d.y.max(1.0).sqrt(),
        Weighting::Given => d.sigma.filter(|s| *s > 0.0).unwrap_or(1.0),
        Weighting::Unit => 1.0,
    }
}

/// Levenberg–Marquardt on the weighted residuals (f(x_i) − y_i)/σ_i.
pub fn fit<M: Model>(model: &M, data: &[DataPoint], p0: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let np = p0.len();
    if data.len() < np {
        return Err(invalid("data", format!("{} points for {np} parameters", data.len())));
    }
    let sig: Vec<f64> = data.iter().map(|d| sigma_of(d, opts.weighting)).collect();
    let eval = |p: &[f64], r: &mut DVector<f64>, j: Option<&mut DMatrix<f64>>| {
        for (i, d) in data.iter().enumerate() {
            r[i] = (model.eval(d.x, p) - d.y) / sig[i];
        }
        if let Some(j) = j {
            let mut g = vec![0.0; np];
            for (i, d) in data.iter().enumerate() {
                model.grad(d.x, p, &mut g);
                for k in 0..np {
                    j[(i, k)] = g[k] / sig[i];
                }
            }
        }
    };

    let n = data.len();
    let mut p = p0.to_vec();
    let mut r = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, np);
    eval(&p, &mut r, Some(&mut jac));
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(invalid("initial guess", "model is not finite at the starting point"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iter = 0;
    let mut trial = DVector::zeros(n);
    while iter < opts.max_iter {
        iter += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            eval(&cand, &mut trial, None);
            let c2 = trial.norm_squared();
            if c2.is_finite() && c2 <= chi2 {
                let small = step
                    .iter()
                    .zip(&cand)
                    .all(|(s, v)| s.abs() <= opts.param_tol * (v.abs() + opts.param_tol));
                p = cand;
                chi2 = c2;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        eval(&p, &mut r, Some(&mut jac));
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at working precision.
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    let jtj = jac.transpose() * &jac;
    let names = model.param_names();
    let eig = jtj.clone().symmetric_eigen();
    let emax = eig.eigenvalues.max();
    let mut covariance = DMatrix::from_element(np, np, f64::INFINITY);
    if eig.eigenvalues.min() <= 1e-14 * emax.max(f64::MIN_POSITIVE) {
        for k in 0..np {
            if jtj[(k, k)] <= 1e-14 * emax.max(f64::MIN_POSITIVE) {
                warnings.push(format!("{} is not identifiable from the data", names[k]));
            }
        }
        if warnings.is_empty() {
            warnings.push("parameters are degenerate".into());
        }
        converged = false;
    } else if let Some(inv) = jtj.try_inverse() {
        let scale = match opts.weighting {
            Weighting::Unit if n > np => chi2 / (n - np) as f64,
            _ => 1.0,
        };
        covariance = inv * scale;
    }
    if iter >= opts.max_iter && !converged {
        warnings.push(format!("no convergence after {iter} iterations"));
    }
    Ok(FitResult {
        model: model.name().to_string(),
        names,
        values: p,
        covariance,
        residual_norm: chi2.sqrt(),
        converged,
        n_iter: iter,
        derived: Vec::new(),
        warnings,
    })
}

fn require_converged(res: FitResult) -> Result<FitResult> {
    if res.converged || !res.warnings.iter().any(|w| w.starts_with("no convergence")) {
        Ok(res)
    } else {
        Err(HeraldError::FitNonConvergence {
            iterations: res.n_iter,
            reason: res.warnings.join("; "),
        })
    }
}

/// (area/π)·2γ/(4(f − f0)² + γ²) + offset, γ being the FWHM.
#[derive(Debug, Clone, Copy)]
pub struct Lorentzian {
    /// Fit the center instead of holding it at 0.
    pub float_center: bool,
}

impl Model for Lorentzian {
    fn name(&self) -> &str {
        "lorentzian"
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = vec!["area".to_string(), "gamma".into(), "offset".into()];
        if self.float_center {
            v.push("f0".into());
        }
        v
    }

    fn eval(&self, f: f64, p: &[f64]) -> f64 {
        let f0 = if self.float_center { p[3] } else { 0.0 };
        let u = f - f0;
        p[0] / std::f64::consts::PI * 2.0 * p[1] / (4.0 * u * u + p[1] * p[1]) + p[2]
    }

    fn grad(&self, f: f64, p: &[f64], out: &mut [f64]) {
        let pi = std::f64::consts::PI;
        let f0 = if self.float_center { p[3] } else { 0.0 };
        let (a, g) = (p[0], p[1]);
        let u = f - f0;
        let d = 4.0 * u * u + g * g;
        out[0] = 2.0 * g / (pi * d);
        out[1] = a / pi * 2.0 * (4.0 * u * u - g * g) / (d * d);
        out[2] = 1.0;
        if self.float_center {
            out[3] = a / pi * 2.0 * g * 8.0 * u / (d * d);
        }
    }
}

/// Lorentzian fit of counts vs. laser detuning (MHz).
pub fn fit_lorentzian(data: &[DataPoint], float_center: bool, weighting: Weighting) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(invalid("data", "a lineshape fit needs at least 5 points"));
    }
    let model = Lorentzian { float_center };
    let (ymin, ymax) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.y), hi.max(d.y)));
    let peak = data.iter().fold(data[0], |b, d| if d.y > b.y { *d } else { b });
    let half = ymin + 0.5 * (ymax - ymin);
    let above: Vec<f64> = data.iter().filter(|d| d.y >= half).map(|d| d.x).collect();
    let span = above.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut xs: Vec<f64> = data.iter().map(|d| d.x).collect();
    xs.sort_by(f64::total_cmp);
    let spacing = xs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let gamma = span.max(if spacing.is_finite() { spacing } else { 1.0 });
    let height = ymax - ymin;
    let mut p0 = vec![height * std::f64::consts::PI * gamma / 2.0, gamma, ymin];
    if float_center {
        p0.push(peak.x);
    }
    let mut res = fit(&model, data, &p0, &FitOptions::new(weighting))?;
    if let Some(i) = res.index("gamma") {
        res.values[i] = res.values[i].abs();
    }
    require_converged(res)
}

/// γ = √(γ0² + b·P).
#[derive(Debug, Clone, Copy)]
pub struct PowerBroadening;

impl Model for PowerBroadening {
    fn name(&self) -> &str {
        "power_broadening"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["gamma0".into(), "b".into()]
    }

    fn eval(&self, p_nw: f64, p: &[f64]) -> f64 {
        (p[0] * p[0] + p[1] * p_nw).max(0.0).sqrt()
    }

    fn grad(&self, p_nw: f64, p: &[f64], out: &mut [f64]) {
        let g = self.eval(p_nw, p).max(f64::MIN_POSITIVE);
        out[0] = p[0] / g;
        out[1] = p_nw / (2.0 * g);
    }
}

/// Linewidth (MHz) vs. optical power (nW).
pub fn fit_power_broadening(data: &[DataPoint], weighting: Weighting) -> Result<FitResult> {
    if data.len() < 3 {
        return Err(invalid("data", "a power-broadening fit needs at least 3 powers"));
    }
    // γ² is linear in P
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.x).sum::<f64>() / n;
    let my = data.iter().map(|d| d.y * d.y).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.x - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.x - mx) * (d.y * d.y - my)).sum();
    let b = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let g0 = (my - b * mx).max(1e-6 * my).sqrt();
    let res = fit(&PowerBroadening, data, &[g0, b], &FitOptions::new(weighting))?;
    let mut res = require_converged(res)?;
    res.values[0] = res.values[0].abs();
    Ok(res)
}

/// A·e^{−(t − t_ref)/τ}.
#[derive(Debug, Clone, Copy)]
pub struct Exponential {
    pub t_ref: f64,
}

impl Model for Exponential {
    fn name(&self) -> &str {
        "lifetime"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["amplitude".into(), "tau".into()]
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-(t - self.t_ref) / p[1]).exp()
    }

    fn grad(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let dt = t - self.t_ref;
        let e = (-dt / p[1]).exp();
        out[0] = e;
        out[1] = p[0] * e * dt / (p[1] * p[1]);
    }
}

/// 1/(2πτ) in MHz for τ in ns.
pub fn transform_limited_linewidth(tau_ns: f64) -> f64 {
    1e3 / (2.0 * std::f64::consts::PI * tau_ns)
}

/// Exponential fit of a detection-time histogram restricted to `range`
/// (ns). The result carries the transform-limited linewidth in MHz as
/// `linewidth`.
pub fn fit_lifetime(histogram: &[DataPoint], range: (f64, f64), weighting: Weighting) -> Result<FitResult> {
    let data: Vec<DataPoint> = histogram
        .iter()
        .filter(|d| d.x >= range.0 && d.x <= range.1)
        .copied()
        .collect();
    if data.len() < 3 {
        return Err(invalid("range", "fewer than 3 histogram bins inside the fit range"));
    }
    // log-linear start
    let pts: Vec<(f64, f64, f64)> = data
        .iter()
        .filter(|d| d.y > 0.0)
        .map(|d| (d.x - range.0, d.y.ln(), d.y))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if !(slope < 0.0) {
        return Err(invalid("histogram", "counts do not decay over the fit range"));
    }
    let model = Exponential { t_ref: range.0 };
    let p0 = [(my - slope * mx).exp(), -1.0 / slope];
    let mut res = require_converged(fit(&model, &data, &p0, &FitOptions::new(weighting))?)?;
    let tau = res.values[1];
    let dtau = res.stderr("tau").unwrap_or(f64::NAN);
    let gamma = transform_limited_linewidth(tau);
    res.derived.push(("linewidth".into(), gamma, gamma * dtau / tau));
    Ok(res)
}

/// A correlator value measured with readout angle `angle` on states heralded
/// in the port with sign `sign` (+1 for C, −1 for D).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosinePoint {
    pub angle: f64,
    pub sign: f64,
    pub value: f64,
    pub sigma: Option<f64>,
}

/// s·V·cos(β − φ) with the port sign s encoded in the abscissa.
#[derive(Debug, Clone)]
struct JointCosine {
    points: Vec<CosinePoint>,
}

impl Model for JointCosine {
    fn name(&self) -> &str {
        "joint_cosine"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["phi".into(), "V".into()]
    }

    fn eval(&self, i: f64, p: &[f64]) -> f64 {
        let c = &self.points[i as usize];
        c.sign * p[1] * (c.angle - p[0]).cos()
    }

    fn grad(&self, i: f64, p: &[f64], out: &mut [f64]) {
        let c = &self.points[i as usize];
        out[0] = c.sign * p[1] * (c.angle - p[0]).sin();
        out[1] = c.sign * (c.angle - p[0]).cos();
    }
}

fn wrap(phi: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (phi + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + tau
    } else {
        w
    }
}

/// Shared-phase cosine fit of port-C and port-D correlators. Returns φ in
/// (−π, π] and the visibility V ≥ 0.
pub fn fit_cosine_joint(data_c: &[CosinePoint], data_d: &[CosinePoint]) -> Result<FitResult> {
    if data_c.is_empty() && data_d.is_empty() {
        return Err(invalid("data", "no correlator values"));
    }
    let points: Vec<CosinePoint> = data_c
        .iter()
        .map(|c| CosinePoint { sign: 1.0, ..*c })
        .chain(data_d.iter().map(|c| CosinePoint { sign: -1.0, ..*c }))
        .collect();
    // s·y = a cos β + b sin β is linear in (a, b)
    let (mut m11, mut m12, mut m22, mut v1, mut v2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in &points {
        let (co, si) = (c.angle.cos(), c.angle.sin());
        let y = c.sign * c.value;
        m11 += co * co;
        m12 += co * si;
        m22 += si * si;
        v1 += co * y;
        v2 += si * y;
    }
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-12 * (m11 + m22).powi(2) {
        return Err(invalid("angles", "readout angles do not determine a phase"));
    }
    let a = (m22 * v1 - m12 * v2) / det;
    let b = (m11 * v2 - m12 * v1) / det;
    let weighting = if points.iter().all(|c| c.sigma.is_some()) {
        Weighting::Given
    } else {
        Weighting::Unit
    };
    let data: Vec<DataPoint> = points
        .iter()
        .enumerate()
        .map(|(i, c)| DataPoint {
            x: i as f64,
            y: c.value,
            sigma: c.sigma,
        })
        .collect();
    let model = JointCosine { points };
    let mut res = require_converged(fit(&model, &data, &[b.atan2(a), a.hypot(b)], &FitOptions::new(weighting))?)?;
    if res.values[1] < 0.0 {
        res.values[1] = -res.values[1];
        res.values[0] += std::f64::consts::PI;
    }
    res.values[0] = wrap(res.values[0]);
    Ok(res)
}

/// Reads two- or three-column numeric CSV (x, y[, σ]). A first row that
/// does not parse as numbers is taken as a header; `#` lines are comments.
pub fn read_csv(path: &Path) -> Result<Vec<DataPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match nums {
            Ok(v) if v.len() >= 2 => out.push(DataPoint {
                x: v[0],
                y: v[1],
                sigma: v.get(2).copied(),
            }),
            Err(_) if row == 0 => continue,
            _ => {
                return Err(invalid(
                    "csv",
                    format!("{}: row {} is not 2 or 3 numeric columns", path.display(), row + 1),
                ))
            }
        }
    }
    Ok(out)
}
