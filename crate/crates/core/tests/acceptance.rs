//! Acceptance checks. Prints one PASS/FAIL line per criterion. Exits
//! nonzero on failure only with `HERALDSIM_ACCEPTANCE_STRICT=1`, so a full
//! `cargo test` still runs the remaining targets.

mod common;

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::cases::{random_case, random_records};
use common::oracle::oracle_density;
use heraldsim::fitlab::{fit_lifetime, fit_power_broadening, read_csv, Weighting};
use heraldsim::montecarlo::{run_ensemble, EnsembleConfig, NoiseParams, FWHM_PER_SIGMA};
use heraldsim::nv::{self, protocol_fidelity, NvLinkParams};
use heraldsim::optimize::{
    optimal_alpha_fixed_theta, optimal_alpha_theta_on, optimal_alphas, pde_curve, OptimizationProblem,
};
use heraldsim::protocol::*;
use heraldsim::pulsesim::{
    estimate_pde_from_counts, evolve_emitter, pde_estimate_stderr, sample_coincidences, PulseShape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = (u32, fn() -> Verdict, Duration);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ab_link() -> NvLinkParams {
    NvLinkParams::new([0.07, 0.05], [3.8e-4, 5.2e-4])
}

/// Least-squares slope of y on x.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Removes 2π jumps between consecutive values.
fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p + offset - out[i - 1];
            offset -= TAU * (d / TAU).round();
        }
        out.push(p + offset);
    }
    out
}

fn criterion_1() -> Verdict {
    let window = DetectionWindow::new(4.0, 15.0);
    let mut worst_rho: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    for alpha in [0.05, 0.1, 0.2] {
        let link = Link::symmetric(NodeParams::new(alpha, 1e-4), 12.4);
        let setup = DetectionSetup::new(Port::C, 6.0, window);
        let h = link.assemble(&setup, 0.0, true).unwrap();
        let ideal = DensityMatrix4::bell(0.0) * (1.0 - alpha) + DensityMatrix4::basis_projector(0) * alpha;
        worst_rho = worst_rho.max(h.rho.max_abs_diff(&ideal));
        worst_f = worst_f.max((h.rho.expectation(&bell_vector(0.0)) - (1.0 - alpha)).abs());
    }
    verdict(
        worst_rho < 1e-6 && worst_f < 1e-6,
        format!("max element error {worst_rho:.2e}, max |F - (1-alpha)| {worst_f:.2e} (tolerance 1e-6)"),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let sets = 120;
    for case in 0..sets {
        let (a, b, modes, pol_dot) = random_case(&mut rng, case);
        for rec in &random_records(&mut rng) {
            let times: Vec<f64> = rec.iter().map(|&k| k as f64).collect();
            for sign in [1.0, -1.0] {
                for sel in [LossSelection::NoLoss, LossSelection::WithLoss, LossSelection::Any] {
                    let got = pattern_density(&a, &b, pol_dot, &modes, &times, sign, sel);
                    let want = oracle_density(&a, &b, pol_dot, &modes, rec, sign, sel);
                    let d = (got.matrix() - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    worst = worst.max(d);
                    compared += 1;
                }
            }
        }
    }
    verdict(
        worst < 1e-8,
        format!("{sets} parameter sets, {compared} pattern matrices, max deviation {worst:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let tau = 12.4;
    let eta = 1e-10;
    let t = 6.0;
    let window = DetectionWindow::new(4.0, 15.0);
    let density = PhotonEnvelope::new(tau, 0.0).amplitude(t).powi(2);
    let engine = |alpha: f64, theta: f64, dphi: f64, port: Port| {
        let link = Link::symmetric(NodeParams::new(alpha, eta).with_rotation_angle(theta), tau);
        let setup = DetectionSetup::new(port, t, window).with_phase_setpoint(dphi);
        let h = link.assemble(&setup, 0.0, false).unwrap();
        (h.p_click / density, h.rho)
    };
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let alpha = 0.05 + 0.09 * i as f64;
        for j in 0..10 {
            let theta = 0.2 + (PI - 0.2) * j as f64 / 9.0;
            for k in 0..10 {
                let dphi = -3.0 + 6.0 * k as f64 / 9.0;
                let mut p = NvLinkParams::symmetric(alpha, eta);
                p.theta = [theta; 2];
                p.phase_setpoint = dphi;
                for port in Port::both() {
                    let (click, rho) = engine(alpha, theta, dphi, port);
                    let want = nv::imperfect_excitation_click(&p, port);
                    let df = (nv::fidelity(&rho, 0.0, port) - nv::imperfect_excitation_fidelity(&p, port)).abs();
                    worst = worst.max((click - want).abs() / want).max(df);
                }
            }
        }
    }
    let (_, rho) = engine(0.1, 1e-3, 0.0, Port::D);
    let fd = nv::fidelity(&rho, 0.0, Port::D);
    verdict(
        worst < 1e-8 && fd > 1.0 - 1e-5,
        format!("1000-point grid max deviation {worst:.2e}; detector D fidelity at theta=1e-3: {fd:.8}"),
    )
}

fn criterion_4() -> Verdict {
    let n = 100_000;
    let cfg = EnsembleConfig::new(12.4, DetectionWindow::new(4.0, 15.0), n, 4);
    let link = ab_link();
    let base = NoiseParams {
        p_d: 1.5e-7,
        sigma_phase: 30f64.to_radians(),
        freq_fwhm: 0.0,
        freq_offset: 0.0,
    };
    let mut worst_df: f64 = 0.0;
    for df in [-12.0, -6.0, 6.0, 12.0] {
        let noise = NoiseParams { freq_offset: df, ..base };
        let res = run_ensemble(&link, &noise, &cfg).unwrap();
        let (mut x, mut y) = (vec![], vec![]);
        for (k, b) in res.bins.iter().enumerate() {
            if let Some(b) = b {
                x.push(0.5 * (res.bin_edges[k] + res.bin_edges[k + 1]));
                y.push(b.phase);
            }
        }
        let s = slope(&x, &unwrap(&y));
        worst_df = worst_df.max((s / (TAU * df * 1e-3) - 1.0).abs());
    }

    let sweep_slope = |set: &dyn Fn(&mut NvLinkParams, &mut EnsembleConfig, f64)| {
        let angles: Vec<f64> = (0..9).map(|i| 45f64.to_radians() * i as f64).collect();
        let mut phases = vec![];
        for &a in &angles {
            let mut l = link.clone();
            let mut c = cfg.clone();
            set(&mut l, &mut c, a);
            let res = run_ensemble(&l, &base, &c).unwrap();
            phases.push(-res.mean_state[0].get(1, 2).arg());
        }
        slope(&angles, &unwrap(&phases))
    };
    let s_vartheta = sweep_slope(&|_, c, a| c.vartheta[1] = a);
    let s_dphi = sweep_slope(&|l, _, a| l.phase_setpoint = a);
    verdict(
        worst_df < 0.02 && (s_vartheta - 1.0).abs() <= 0.01 && (s_dphi - 1.0).abs() <= 0.01,
        format!(
            "detuning slopes within {:.2}% of 2*pi*df; vartheta_B slope {s_vartheta:.4}, setpoint slope {s_dphi:.4}",
            100.0 * worst_df
        ),
    )
}

fn criterion_5() -> Verdict {
    let tau = 12.4;
    let window = DetectionWindow::new(0.5, 20.0);
    let cfg = EnsembleConfig::new(tau, window, 1_000_000, 5);
    let link = ab_link();
    let noise = NoiseParams {
        freq_fwhm: 13.0,
        ..Default::default()
    };
    let res = run_ensemble(&link, &noise, &cfg).unwrap();

    // Independent closed form: populations and coherence of the heralded
    // state, with the coherence damped by the bin-averaged Gaussian factor.
    let [aa, ab] = link.alpha;
    let [ea, eb] = link.eta;
    let a11 = 0.5 * aa * (1.0 - ab) * ea;
    let a22 = 0.5 * ab * (1.0 - aa) * eb;
    let a00 = 0.5 * aa * ab * (ea + eb);
    let a12 = 0.5 * (aa * ab * (1.0 - aa) * (1.0 - ab) * ea * eb).sqrt();
    let p = a00 + a11 + a22;
    let sigma_f = 13.0 / FWHM_PER_SIGMA;
    let gauss = |t: f64| (-0.5 * (TAU * sigma_f * 1e-3 * t).powi(2)).exp();
    let bin_factor = |lo: f64, hi: f64| {
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            let t = lo + (i as f64 + 0.5) * h;
            let w = (-t / tau).exp();
            num += w * gauss(t);
            den += w;
        }
        num / den
    };
    let predict = |k: usize| (a11 + a22 + 2.0 * a12 * bin_factor(res.bin_edges[k], res.bin_edges[k + 1])) / (2.0 * p);
    let (k1, k15) = (0, 14);
    let b1 = res.bins[k1].unwrap();
    let b15 = res.bins[k15].unwrap();
    let drop = b1.fidelity - b15.fidelity;
    let want = predict(k1) - predict(k15);
    let sigma = (b1.stderr.powi(2) + b15.stderr.powi(2)).sqrt();
    verdict(
        (drop - want).abs() < 3.0 * sigma,
        format!(
            "F(1 ns) - F(15 ns) = {drop:.5} vs closed form {want:.5} (3 sigma = {:.5}); Gaussian factor at 15 ns {:.4}",
            3.0 * sigma,
            gauss(15.0)
        ),
    )
}

fn criterion_6() -> Verdict {
    let hist = read_csv(&root().join("data/lifetime.csv")).unwrap();
    let span = (hist[0].x, hist[hist.len() - 1].x);
    let life = fit_lifetime(&hist, span, Weighting::Poisson).unwrap();
    let (lw, _) = life.derived("linewidth").unwrap();
    let pb_data = read_csv(&root().join("data/power_broadening.csv")).unwrap();
    let pb = fit_power_broadening(&pb_data, Weighting::Given).unwrap();
    let z0 = (pb.get("gamma0").unwrap() - 12.4) / pb.stderr("gamma0").unwrap();
    let zb = (pb.get("b").unwrap() - 690.0) / pb.stderr("b").unwrap();
    verdict(
        (lw - 12.81).abs() <= 0.02 && z0.abs() < 3.0 && zb.abs() < 3.0,
        format!(
            "tau {:.4} ns -> linewidth {lw:.4} MHz; power broadening gamma0 {:.2} ({z0:+.2} sigma), b {:.1} ({zb:+.2} sigma)",
            life.get("tau").unwrap(),
            pb.get("gamma0").unwrap(),
            pb.get("b").unwrap()
        ),
    )
}

fn criterion_7() -> Verdict {
    let shape = PulseShape::from_csv(&root().join("data/pulse.csv")).unwrap();
    let window = DetectionWindow::new(shape.peak_time() + 4.0, 15.0);
    let stats = evolve_emitter(&shape.clone().with_rotation_angle(PI).unwrap(), 12.4, &window).unwrap();
    let (eta_p, eta_z, n) = (0.3, 0.05, 10_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let counts = sample_coincidences(&stats, eta_p, eta_z, n, &mut rng).unwrap();
    let est = estimate_pde_from_counts(counts.n_coin, counts.n_all(), eta_p).unwrap();
    let se = pde_estimate_stderr(counts.n_coin, counts.n_all(), eta_p, n);
    let all_clicks = estimate_pde_from_counts(counts.n_coin, counts.n_zpl, eta_p).unwrap();

    let mut last = -1.0;
    let mut monotone = true;
    for deg in 1..=180 {
        let s = evolve_emitter(&shape.clone().with_rotation_angle((deg as f64).to_radians()).unwrap(), 12.4, &window)
            .unwrap();
        monotone &= s.p_de > last;
        last = s.p_de;
    }
    verdict(
        (est - stats.p_de).abs() < 3.0 * se && monotone,
        format!(
            "integrator p_de {:.5}, estimate {est:.5} +- {se:.5} from {} coincidences; p_de(theta) monotone over 1..180 deg: {monotone}; estimator on all ZPL clicks: {all_clicks:.5}",
            stats.p_de, counts.n_coin
        ),
    )
}

fn criterion_8() -> Verdict {
    let (ea, eb) = (4e-4, 8e-4);
    let mut worst: f64 = 0.0;
    let mut at_worst = 0.0;
    for i in 1..=60 {
        let p = 2e-6 * i as f64;
        let o = optimal_alphas(ea, eb, p).unwrap();
        if o.fidelity < 0.8 {
            break;
        }
        let imb = (o.alpha[0] * ea - o.alpha[1] * eb).abs() / (o.alpha[0] * ea);
        if imb > worst {
            worst = imb;
            at_worst = o.fidelity;
        }
    }
    let boundary = [0.05, 0.3, 0.9]
        .iter()
        .map(|&b| (protocol_fidelity([0.0, b], [ea, eb]) - 0.5).abs())
        .fold(0.0, f64::max);

    let mut regime = vec![];
    for w in [0.1, 0.5, 1.0] {
        let problem = OptimizationProblem::new(4e-4, 12.4, w);
        let curve = pde_curve(&problem).unwrap();
        let free = optimal_alpha_theta_on(&problem, &curve, 0.95).unwrap();
        let fixed = optimal_alpha_fixed_theta(&problem, &curve, 0.95).ok();
        let gain = fixed.map(|f| free.p_click / f.p_click);
        let changed = free.theta < 150.0 && gain.is_none_or(|g| g >= 1.5);
        regime.push((w, free.theta, gain, changed));
    }
    let regime_ok = regime.iter().all(|r| r.3 == (r.0 >= 0.5));
    let regime_text: Vec<String> = regime
        .iter()
        .map(|(w, th, g, c)| {
            let g = g.map(|g| format!("{g:.2}x")).unwrap_or_else(|| "fixed infeasible".into());
            format!("{w} tau: theta* {th} deg, {g}, change {c}")
        })
        .collect();
    verdict(
        worst < 0.05 && boundary < 1e-12 && regime_ok,
        format!(
            "worst balance error {:.1}% at F={at_worst:.3} (tolerance 5% for F >= 0.8); alpha_A=0 gives |F-0.5| {boundary:.1e}; at F=0.95 {}",
            100.0 * worst,
            regime_text.join("; ")
        ),
    )
}

fn criterion_9() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_heraldsim");
    let commands: [&[&str]; 5] = [
        &["herald", "--config", "configs/ab.toml", "--seed", "7", "--samples", "40000"],
        &["--figure", "fig5e", "--config", "configs/bc.toml", "--seed", "9", "--samples", "20000"],
        &["pulse", "--config", "configs/ab.toml"],
        &["--figure", "fig3c"],
        &["fit", "lifetime", "data/lifetime.csv"],
    ];
    let mut failures = vec![];
    for args in commands {
        let run = |workers: &str| {
            Command::new(bin)
                .args(args)
                .current_dir(root())
                .env("HERALDSIM_WORKERS", workers)
                .output()
                .unwrap()
        };
        let (a, b) = (run("1"), run("3"));
        if !(a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty()) {
            failures.push(args.join(" "));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} seeded commands byte-identical across runs with 1 and 3 workers", commands.len())
        } else {
            format!("differing output: {}", failures.join("; "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Check; 9] = [
        (1, criterion_1, Duration::from_secs(1)),
        (2, criterion_2, Duration::from_secs(60)),
        (3, criterion_3, Duration::from_secs(10)),
        (4, criterion_4, Duration::from_secs(60)),
        (5, criterion_5, Duration::from_secs(120)),
        (6, criterion_6, Duration::from_secs(10)),
        (7, criterion_7, Duration::from_secs(300)),
        (8, criterion_8, Duration::from_secs(120)),
        (9, criterion_9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (id, check, budget) in criteria {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let pass = v.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id}: {} | {} | {:.2} s (budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        if std::env::var("HERALDSIM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            return ExitCode::FAILURE;
        }
        ExitCode::SUCCESS
    } else {
        println!("all 9 criteria passed");
        ExitCode::SUCCESS
    }
}
