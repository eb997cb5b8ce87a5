use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::IntoDeserializer;
use serde::Deserialize;

use heraldsim::cli::{self, Command, DEFAULT_TAU};
use heraldsim::config::{content_hash, PulseConfig, ScenarioConfig, SweepAxis, SweepConfig};
use heraldsim::protocol::DetectionWindow;
use heraldsim::{HeraldError, Result};

/// Heralded entanglement simulator: states, sweeps, pulse statistics,
/// optimization and fits, written as CSV.
#[derive(Parser, Debug)]
#[command(name = "heraldsim", version)]
struct Args {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the scenario's Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the scenario's Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Run a named figure preset (fig3a, fig3b, fig3c, fig5c, fig5d, fig5e,
    /// fig6d, fig7d, fig8, fig9).
    #[arg(long, global = true)]
    figure: Option<String>,

    /// Worker threads for Monte Carlo runs; 0 uses all cores.
    #[arg(long, global = true, env = "HERALDSIM_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Heralded state per detector.
    Herald,
    /// Sweep one parameter.
    Sweep {
        /// alpha, vartheta_b, phase_setpoint, freq_offset, freq_fwhm or theta.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Emission statistics of an excitation pulse.
    Pulse {
        /// Two-column (t ns, intensity) CSV.
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// Rotation angles, degrees.
        #[arg(long, value_delimiter = ',')]
        theta: Option<Vec<f64>>,
        /// Lifetime, ns.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Bright-state and rotation-angle optimization.
    Optimize,
    /// Fit a model to two- or three-column CSV data.
    Fit {
        /// lorentzian, lorentzian_center, power_broadening or lifetime.
        model: String,
        data: PathBuf,
        /// poisson, given or unit.
        #[arg(long)]
        weighting: Option<String>,
        /// Fit range for the lifetime model, ns.
        #[arg(long, num_args = 2, allow_hyphen_values = true)]
        range: Option<Vec<f64>>,
    },
}

fn config_error(field: &str, reason: impl Into<String>) -> HeraldError {
    HeraldError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn scenario(args: &Args) -> Result<Option<ScenarioConfig>> {
    let Some(path) = &args.config else {
        return Ok(None);
    };
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = args.seed {
        cfg.montecarlo.seed = s;
    }
    if let Some(n) = args.samples {
        cfg.montecarlo.samples = n;
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

fn require(cfg: Option<ScenarioConfig>, what: &str) -> Result<ScenarioConfig> {
    cfg.ok_or_else(|| config_error("--config", format!("`{what}` needs a scenario file")))
}

fn parse_axis(name: &str) -> Result<SweepAxis> {
    SweepAxis::deserialize(name.into_deserializer())
        .map_err(|e: serde::de::value::Error| config_error("--axis", e.to_string()))
}

fn run(args: Args) -> Result<String> {
    let figure = args.figure.as_deref().map(cli::figure).transpose()?;
    let command = match (&args.command, &figure) {
        (None, None) => return Err(config_error("command", "give a subcommand or --figure")),
        (None, Some(f)) => f.command,
        (Some(c), f) => {
            let c = match c {
                Cmd::Herald => Command::Herald,
                Cmd::Sweep { .. } => Command::Sweep,
                Cmd::Pulse { .. } => Command::Pulse,
                Cmd::Optimize => Command::Optimize,
                Cmd::Fit { .. } => Command::Fit,
            };
            if let Some(f) = f {
                if f.command != c {
                    return Err(config_error("--figure", format!("{} does not use this subcommand", f.name)));
                }
            }
            c
        }
    };
    let cfg = scenario(&args)?;

    match command {
        Command::Herald => cli::herald(&require(cfg, "herald")?, args.workers),
        Command::Sweep => {
            let mut cfg = require(cfg, "sweep")?;
            let (axis, values) = match &args.command {
                Some(Cmd::Sweep { axis, values }) => (axis.clone(), values.clone()),
                _ => (None, None),
            };
            let mut spec = match (axis, figure) {
                (Some(a), _) => SweepConfig {
                    axis: parse_axis(&a)?,
                    values: vec![],
                    start: None,
                    stop: None,
                    steps: None,
                    phase_setpoints_deg: vec![0.0, 90.0],
                },
                (None, Some(f)) => f.sweep.expect("sweep figure"),
                (None, None) => cfg.sweep.clone().ok_or_else(|| config_error("sweep", "no [sweep] section, --axis or --figure"))?,
            };
            if let Some(v) = values {
                spec.values = v;
            }
            cfg.sweep = Some(spec.clone());
            cfg.validate()?;
            cli::sweep(&cfg, &spec, args.workers)
        }
        Command::Pulse => {
            let (file, theta, tau) = match &args.command {
                Some(Cmd::Pulse { pulse, theta, tau }) => (pulse.clone(), theta.clone(), *tau),
                _ => (None, None, None),
            };
            let mut spec = match (&file, cfg.as_ref().and_then(|c| c.pulse.clone())) {
                (Some(f), _) => PulseConfig {
                    file: Some(f.clone()),
                    gaussian_fwhm_ns: None,
                    theta_deg: vec![],
                },
                (None, Some(p)) => p,
                (None, None) => return Err(config_error("pulse", "give --pulse or a [pulse] section")),
            };
            if let Some(t) = theta.or(figure.and_then(|f| f.pulse_theta)) {
                spec.theta_deg = t;
            }
            if spec.theta_deg.is_empty() {
                spec.theta_deg = (0..=18).map(|i| 10.0 * i as f64).collect();
            }
            if let Some(f) = &spec.file {
                if !f.exists() {
                    return Err(config_error("pulse.file", format!("{} does not exist", f.display())));
                }
            }
            let tau = tau.or(cfg.as_ref().map(|c| c.link.tau)).unwrap_or(DEFAULT_TAU);
            let window = cfg
                .as_ref()
                .map(|c| c.detection_window())
                .unwrap_or(DetectionWindow::new(4.0, 15.0));
            let hash = content_hash(&(&spec, tau, window.start, window.duration));
            cli::pulse(&spec, tau, &window, &hash)
        }
        Command::Optimize => {
            let spec = match (figure, cfg.as_ref().and_then(|c| c.optimize.clone())) {
                (Some(f), _) => f.optimize.expect("optimize figure"),
                (None, Some(o)) => o,
                (None, None) => return Err(config_error("optimize", "no [optimize] section or --figure")),
            };
            let eta = spec
                .eta
                .or(cfg.as_ref().map(|c| c.link.eta))
                .ok_or_else(|| config_error("optimize.eta", "missing"))?;
            let tau = cfg.as_ref().map(|c| c.link.tau).unwrap_or(DEFAULT_TAU);
            let hash = content_hash(&(&spec, eta, tau));
            cli::optimize(&spec, eta, tau, &hash)
        }
        Command::Fit => {
            let Some(Cmd::Fit {
                model,
                data,
                weighting,
                range,
            }) = &args.command
            else {
                return Err(config_error("fit", "use the fit subcommand"));
            };
            let w = weighting.as_deref().map(cli::parse_weighting).transpose()?;
            let r = range.as_ref().map(|r| (r[0], r[1]));
            cli::fit(model, data, w, r)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out = args.out.clone();
    match run(args) {
        Ok(text) => {
            let written = match &out {
                Some(path) => std::fs::write(path, text.as_bytes()),
                None => std::io::stdout().lock().write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let HeraldError::Infeasible { best: Some(b), .. } = &e {
                eprintln!("best attainable: {b}");
            }
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
