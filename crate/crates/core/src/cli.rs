//! Command implementations behind the `heraldsim` binary. Every command
//! returns its complete output so runs can be compared byte for byte.

use std::path::Path;

use crate::config::{
    OptimizeConfig, OptimizeMode, PulseConfig, ScenarioConfig, SweepAxis, SweepConfig,
};
use crate::error::{HeraldError, Result};
use crate::fitlab::{fit_lifetime, fit_lorentzian, fit_power_broadening, read_csv, Weighting};
use crate::montecarlo::run_ensemble;
use crate::nv::{fidelity, imperfect_excitation_click, imperfect_excitation_fidelity, NvLinkParams};
use crate::optimize::{
    optimal_alpha_fixed_theta, optimal_alpha_theta_on, optimal_alphas, pde_curve, OptimizationProblem,
};
use crate::protocol::{DetectionWindow, Port};
use crate::pulsesim::{evolve_emitter, PulseShape};

pub const DEFAULT_TAU: f64 = 12.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Herald,
    Sweep,
    Pulse,
    Optimize,
    Fit,
}

/// Named figure presets: the command to run and the section it fills in.
#[derive(Debug, Clone)]
pub struct Figure {
    pub name: &'static str,
    pub command: Command,
    pub sweep: Option<SweepConfig>,
    pub optimize: Option<OptimizeConfig>,
    pub pulse_theta: Option<Vec<f64>>,
}

pub const FIGURES: [&str; 10] = [
    "fig3a", "fig3b", "fig3c", "fig5c", "fig5d", "fig5e", "fig6d", "fig7d", "fig8", "fig9",
];

fn preset(axis: SweepAxis, values: Vec<f64>) -> Option<SweepConfig> {
    Some(SweepConfig {
        axis,
        values,
        start: None,
        stop: None,
        steps: None,
        phase_setpoints_deg: vec![0.0, 90.0],
    })
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn figure(name: &str) -> Result<Figure> {
    let mut f = Figure {
        name: FIGURES.iter().find(|n| **n == name).copied().ok_or_else(|| HeraldError::Config {
            field: "--figure".into(),
            reason: format!("unknown figure `{name}`; known: {}", FIGURES.join(", ")),
        })?,
        command: Command::Sweep,
        sweep: None,
        optimize: None,
        pulse_theta: None,
    };
    match name {
        "fig3a" | "fig3b" => f.sweep = preset(SweepAxis::Alpha, grid(0.0, 0.6, 13)),
        "fig5c" => f.sweep = preset(SweepAxis::VarthetaB, grid(0.0, 360.0, 9)),
        "fig5d" => f.sweep = preset(SweepAxis::PhaseSetpoint, grid(0.0, 360.0, 9)),
        "fig5e" => f.sweep = preset(SweepAxis::FreqOffset, vec![-12.0, -6.0, 6.0, 12.0]),
        "fig6d" => f.sweep = preset(SweepAxis::FreqFwhm, vec![0.0, 13.0]),
        "fig9" => f.sweep = preset(SweepAxis::Theta, grid(0.0, 180.0, 37)),
        "fig3c" => {
            f.command = Command::Optimize;
            f.optimize = Some(OptimizeConfig {
                mode: OptimizeMode::Alphas,
                eta: Some([4e-4, 8e-4]),
                p_click: grid(5e-6, 2e-4, 40),
                target_fidelity: vec![],
                pulse_fwhm_tau: vec![],
            });
        }
        "fig8" => {
            f.command = Command::Optimize;
            f.optimize = Some(OptimizeConfig {
                mode: OptimizeMode::AlphaTheta,
                eta: Some([4e-4; 2]),
                p_click: vec![],
                target_fidelity: grid(0.6, 0.975, 16),
                pulse_fwhm_tau: vec![0.1, 0.25, 0.5, 1.0],
            });
        }
        "fig7d" => {
            f.command = Command::Pulse;
            f.pulse_theta = Some(grid(0.0, 180.0, 37));
        }
        _ => unreachable!(),
    }
    Ok(f)
}

/// CSV text with the provenance comment line.
struct Table {
    buf: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(hash: &str, seed: Option<u64>, header: &[&str]) -> Result<Self> {
        let mut lead = format!("# config_hash={hash}");
        if let Some(s) = seed {
            lead.push_str(&format!(" seed={s}"));
        }
        lead.push('\n');
        let mut buf = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(lead.into_bytes());
        buf.write_record(header)?;
        Ok(Self { buf })
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        self.buf.write_record(cells)?;
        Ok(())
    }

    fn finish(self) -> Result<String> {
        let bytes = self.buf.into_inner().map_err(|e| HeraldError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn port_name(port: Port) -> &'static str {
    match port {
        Port::C => "C",
        Port::D => "D",
    }
}

/// One row per port: click probability, fidelity and the full state.
pub fn herald(cfg: &ScenarioConfig, workers: usize) -> Result<String> {
    let link = cfg.link_params();
    let mut ens = cfg.ensemble();
    ens.workers = workers;
    let res = run_ensemble(&link, &cfg.noise_params(), &ens)?;
    let mut header = vec![
        "port".to_string(),
        "p_click".into(),
        "fidelity".into(),
        "ensemble_fidelity".into(),
        "ensemble_stderr".into(),
    ];
    for r in 0..4 {
        for c in 0..4 {
            header.push(format!("rho_{r}{c}_re"));
            header.push(format!("rho_{r}{c}_im"));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&cfg.hash(), Some(cfg.montecarlo.seed), &header)?;
    for (i, port) in Port::both().into_iter().enumerate() {
        let rho = &res.mean_state[i];
        let mut row = vec![
            port_name(port).to_string(),
            num(res.port_click[i]),
            num(fidelity(rho, link.target_phase, port)),
            num(res.fidelity),
            num(res.fidelity_stderr),
        ];
        for [re, im] in rho.to_row_major() {
            row.push(num(re));
            row.push(num(im));
        }
        t.row(&row)?;
    }
    t.finish()
}

fn apply_axis(cfg: &ScenarioConfig, axis: SweepAxis, v: f64) -> ScenarioConfig {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Alpha => c.link.alpha = [v; 2],
        SweepAxis::VarthetaB => c.phase.vartheta_deg[1] = v,
        SweepAxis::PhaseSetpoint => c.link.phase_setpoint_deg = v,
        SweepAxis::FreqOffset => c.noise.freq_offset_mhz = v,
        SweepAxis::FreqFwhm => c.noise.freq_fwhm_mhz = v,
        SweepAxis::Theta => c.link.theta_deg = [v; 2],
    }
    c
}

/// Monte Carlo axes give one row per point per detection-time bin; the θ
/// axis gives one row per setpoint, angle and port from the symmetric
/// closed forms.
pub fn sweep(cfg: &ScenarioConfig, spec: &SweepConfig, workers: usize) -> Result<String> {
    let points = spec.points()?;
    if spec.axis == SweepAxis::Theta {
        return theta_sweep(cfg, spec, &points);
    }
    let mut t = Table::new(
        &cfg.hash(),
        Some(cfg.montecarlo.seed),
        &[
            spec.axis.name(),
            "bin_start",
            "bin_end",
            "samples",
            "fidelity",
            "fidelity_stderr",
            "phase_rad",
            "p_click",
            "fidelity_c",
            "fidelity_d",
        ],
    )?;
    for v in points {
        let c = apply_axis(cfg, spec.axis, v);
        c.validate()?;
        let link = c.link_params();
        let mut ens = c.ensemble();
        ens.workers = workers;
        let res = run_ensemble(&link, &c.noise_params(), &ens)?;
        let fc = fidelity(&res.mean_state[0], link.target_phase, Port::C);
        let fd = fidelity(&res.mean_state[1], link.target_phase, Port::D);
        for (k, bin) in res.bins.iter().enumerate() {
            t.row(&[
                num(v),
                num(res.bin_edges[k]),
                num(res.bin_edges[k + 1]),
                bin.map(|b| b.samples.to_string()).unwrap_or_else(|| "0".into()),
                opt(bin.map(|b| b.fidelity)),
                opt(bin.map(|b| b.stderr)),
                opt(bin.map(|b| b.phase)),
                num(res.p_click),
                num(fc),
                num(fd),
            ])?;
        }
    }
    t.finish()
}

fn theta_sweep(cfg: &ScenarioConfig, spec: &SweepConfig, points: &[f64]) -> Result<String> {
    let mut t = Table::new(
        &cfg.hash(),
        None,
        &["phase_setpoint_deg", "theta_deg", "port", "p_click", "fidelity"],
    )?;
    for &sp in &spec.phase_setpoints_deg {
        for &th in points {
            let mut p: NvLinkParams = cfg.link_params();
            p.phase_setpoint = sp.to_radians();
            p.theta = [th.to_radians(); 2];
            for port in Port::both() {
                t.row(&[
                    num(sp),
                    num(th),
                    port_name(port).into(),
                    num(imperfect_excitation_click(&p, port)),
                    num(imperfect_excitation_fidelity(&p, port)),
                ])?;
            }
        }
    }
    t.finish()
}

/// Emission statistics per rotation angle. The window is placed relative
/// to the pulse peak.
pub fn pulse(
    spec: &PulseConfig,
    tau: f64,
    window: &DetectionWindow,
    hash: &str,
) -> Result<String> {
    let shape = match (&spec.file, spec.gaussian_fwhm_ns) {
        (Some(f), None) => PulseShape::from_csv(f)?,
        (None, Some(w)) => PulseShape::gaussian(w, 0.0, 1.0)?,
        _ => {
            return Err(HeraldError::Config {
                field: "pulse".into(),
                reason: "give exactly one of a pulse file and a Gaussian width".into(),
            })
        }
    };
    let w = DetectionWindow::new(shape.peak_time() + window.start, window.duration);
    let mut t = Table::new(hash, None, &["theta_deg", "p0", "p1", "p2", "p_de"])?;
    for &deg in &spec.theta_deg {
        let s = if deg == 0.0 {
            let mut off = shape.clone();
            off.scale = 0.0;
            evolve_emitter(&off, tau, &w)?
        } else {
            evolve_emitter(&shape.clone().with_rotation_angle(deg.to_radians())?, tau, &w)?
        };
        t.row(&[num(deg), num(s.p0), num(s.p1), num(s.p2), num(s.p_de)])?;
    }
    t.finish()
}

pub fn optimize(spec: &OptimizeConfig, eta: [f64; 2], tau: f64, hash: &str) -> Result<String> {
    match spec.mode {
        OptimizeMode::Alphas => {
            let mut t = Table::new(
                hash,
                None,
                &["p_click", "alpha_a", "alpha_b", "fidelity", "imbalance"],
            )?;
            for &p in &spec.p_click {
                let o = optimal_alphas(eta[0], eta[1], p)?;
                let (ra, rb) = (o.alpha[0] * eta[0], o.alpha[1] * eta[1]);
                t.row(&[
                    num(p),
                    num(o.alpha[0]),
                    num(o.alpha[1]),
                    num(o.fidelity),
                    num((ra - rb).abs() / ra),
                ])?;
            }
            t.finish()
        }
        OptimizeMode::AlphaTheta => {
            let mut t = Table::new(
                hash,
                None,
                &[
                    "pulse_fwhm_tau",
                    "target_fidelity",
                    "alpha",
                    "theta_deg",
                    "p_click",
                    "p_de",
                    "alpha_fixed_theta",
                    "p_click_fixed_theta",
                ],
            )?;
            for &w in &spec.pulse_fwhm_tau {
                let problem = OptimizationProblem::new(eta[0], tau, w);
                let curve = pde_curve(&problem)?;
                for &target in &spec.target_fidelity {
                    let o = optimal_alpha_theta_on(&problem, &curve, target)?;
                    let fixed = optimal_alpha_fixed_theta(&problem, &curve, target).ok();
                    t.row(&[
                        num(w),
                        num(target),
                        num(o.alpha),
                        num(o.theta),
                        num(o.p_click),
                        num(o.p_de),
                        opt(fixed.map(|f| f.alpha)),
                        opt(fixed.map(|f| f.p_click)),
                    ])?;
                }
            }
            t.finish()
        }
    }
}

pub fn parse_weighting(name: &str) -> Result<Weighting> {
    match name {
        "poisson" => Ok(Weighting::Poisson),
        "given" => Ok(Weighting::Given),
        "unit" => Ok(Weighting::Unit),
        _ => Err(HeraldError::Config {
            field: "--weighting".into(),
            reason: format!("unknown weighting `{name}`; known: poisson, given, unit"),
        }),
    }
}

pub const FIT_MODELS: [&str; 4] = ["lorentzian", "lorentzian_center", "power_broadening", "lifetime"];

/// Fits `model` to a CSV file and returns the parameter report.
pub fn fit(model: &str, data: &Path, weighting: Option<Weighting>, range: Option<(f64, f64)>) -> Result<String> {
    if !FIT_MODELS.contains(&model) {
        return Err(HeraldError::Config {
            field: "model".into(),
            reason: format!("unknown fit model `{model}`; known: {}", FIT_MODELS.join(", ")),
        });
    }
    let points = read_csv(data)?;
    let res = match model {
        "lorentzian" | "lorentzian_center" => fit_lorentzian(
            &points,
            model == "lorentzian_center",
            weighting.unwrap_or(Weighting::Poisson),
        )?,
        "power_broadening" => fit_power_broadening(&points, weighting.unwrap_or(Weighting::Given))?,
        _ => {
            let span = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
            fit_lifetime(&points, range.unwrap_or(span), weighting.unwrap_or(Weighting::Poisson))?
        }
    };
    Ok(res.to_text())
}

/// 2 for bad input, 3 for numerical failures.
pub fn exit_code(e: &HeraldError) -> i32 {
    match e {
        HeraldError::Config { .. }
        | HeraldError::InvalidParameter { .. }
        | HeraldError::Io(_)
        | HeraldError::Csv(_) => 2,
        HeraldError::NoHerald
        | HeraldError::FitNonConvergence { .. }
        | HeraldError::Integration(_)
        | HeraldError::Infeasible { .. } => 3,
    }
}
