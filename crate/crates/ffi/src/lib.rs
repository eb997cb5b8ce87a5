//! C interface to heraldsim.
//!
//! Every fallible call returns an [`HsStatus`]; on failure the message is
//! available from [`hs_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use heraldsim::montecarlo::{run_ensemble, EnsembleConfig, EnsembleResult, NoiseParams};
use heraldsim::nv::{self, NvLinkParams, Weights};
use heraldsim::optimize::optimal_alphas;
use heraldsim::protocol::{DetectionWindow, Port};
use heraldsim::pulsesim::{evolve_emitter, PulseShape};
use heraldsim::HeraldError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoHerald = 3,
    Infeasible = 4,
    Integration = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsPort {
    C = 0,
    D = 1,
}

impl From<HsPort> for Port {
    fn from(p: HsPort) -> Self {
        match p {
            HsPort::C => Port::C,
            HsPort::D => Port::D,
        }
    }
}

/// Link between two emitters.
pub struct HsLink(NvLinkParams);

/// Sampled excitation pulse.
pub struct HsPulse(PulseShape);

/// Result of an ensemble run.
pub struct HsEnsemble(EnsembleResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HsNoise {
    /// Noise-click probability per window.
    pub p_d: f64,
    /// Phase setpoint jitter, rad.
    pub sigma_phase: f64,
    /// Frequency jitter FWHM, MHz.
    pub freq_fwhm: f64,
    /// Mean frequency difference, MHz.
    pub freq_offset: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HsEmission {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p_de: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HsBin {
    pub start: f64,
    pub end: f64,
    /// NaN when the bin saw no heralds.
    pub fidelity: f64,
    pub fidelity_stderr: f64,
    pub phase: f64,
    pub samples: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &HeraldError) -> HsStatus {
    match err {
        HeraldError::InvalidParameter { .. } | HeraldError::Config { .. } => HsStatus::InvalidArgument,
        HeraldError::NoHerald => HsStatus::NoHerald,
        HeraldError::Infeasible { .. } => HsStatus::Infeasible,
        HeraldError::Integration(_) | HeraldError::FitNonConvergence { .. } => HsStatus::Integration,
        HeraldError::Io(_) | HeraldError::Csv(_) => HsStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HsStatus>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            HsStatus::Panic
        }
    }
}

fn fail(err: HeraldError) -> HsStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null(what: &str) -> HsStatus {
    set_error(&format!("`{what}` is null"));
    HsStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, HsStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, HsStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Creates a link with bright-state populations `alpha` and detection
/// efficiencies `eta`, ideal otherwise.
///
/// # Safety
/// `alpha` and `eta` must point to two doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_link_new(alpha: *const f64, eta: *const f64, out: *mut *mut HsLink) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let a = deref(alpha as *const [f64; 2], "alpha")?;
        let e = deref(eta as *const [f64; 2], "eta")?;
        let p = NvLinkParams::new(*a, *e);
        p.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(HsLink(p)));
        Ok(())
    })
}

/// # Safety
/// `link` must be null or come from [`hs_link_new`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn hs_link_free(link: *mut HsLink) {
    if !link.is_null() {
        drop(Box::from_raw(link));
    }
}

/// Sets double-excitation probability, noise-click probability and the
/// polarization overlap.
///
/// # Safety
/// `link` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_link_set_imperfections(link: *mut HsLink, p_de: f64, p_d: f64, pol_overlap: f64) -> HsStatus {
    guard(|| {
        let link = deref_mut(link, "link")?;
        let mut p = link.0.clone();
        p.p_de = p_de;
        p.p_d = p_d;
        p.pol_overlap = pol_overlap;
        p.validate().map_err(fail)?;
        link.0 = p;
        Ok(())
    })
}

/// Sets the phase setpoint and the target phase, rad.
///
/// # Safety
/// `link` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_link_set_phase(link: *mut HsLink, setpoint: f64, target: f64) -> HsStatus {
    guard(|| {
        let link = deref_mut(link, "link")?;
        if !setpoint.is_finite() || !target.is_finite() {
            return Err(fail(HeraldError::InvalidParameter {
                name: "phase",
                reason: "must be finite".into(),
            }));
        }
        link.0.phase_setpoint = setpoint;
        link.0.target_phase = target;
        Ok(())
    })
}

/// Window-integrated click probability and fidelity for one detector.
///
/// # Safety
/// `link` must be a live handle; `p_click` and `fidelity` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_link_herald(link: *const HsLink, port: HsPort, p_click: *mut f64, fidelity: *mut f64) -> HsStatus {
    guard(|| {
        let p = &deref(link, "link")?.0;
        let out_p = deref_mut(p_click, "p_click")?;
        let out_f = deref_mut(fidelity, "fidelity")?;
        let port = Port::from(port);
        let (rho, pc) = nv::heralded_state(p, &Weights::integrated(p), p.phase_setpoint, port).map_err(fail)?;
        *out_p = pc;
        *out_f = nv::fidelity(&rho, p.target_phase, port);
        Ok(())
    })
}

/// Bright-state populations maximizing fidelity at fixed click probability.
///
/// # Safety
/// `alpha` must point to two writable doubles; `fidelity` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_optimal_alphas(eta_a: f64, eta_b: f64, p_click: f64, alpha: *mut f64, fidelity: *mut f64) -> HsStatus {
    guard(|| {
        let a = deref_mut(alpha as *mut [f64; 2], "alpha")?;
        let f = deref_mut(fidelity, "fidelity")?;
        let o = optimal_alphas(eta_a, eta_b, p_click).map_err(fail)?;
        *a = o.alpha;
        *f = o.fidelity;
        Ok(())
    })
}

/// Monte Carlo ensemble over detection times and noise draws. `workers`
/// of 0 uses all cores; the result does not depend on it.
///
/// # Safety
/// `link` must be a live handle, `noise` readable and `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hs_ensemble_run(
    link: *const HsLink,
    noise: *const HsNoise,
    tau: f64,
    window_start: f64,
    window_duration: f64,
    samples: u64,
    seed: u64,
    workers: u32,
    out: *mut *mut HsEnsemble,
) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let p = &deref(link, "link")?.0;
        let n = deref(noise, "noise")?;
        let noise = NoiseParams {
            p_d: n.p_d,
            sigma_phase: n.sigma_phase,
            freq_fwhm: n.freq_fwhm,
            freq_offset: n.freq_offset,
        };
        let mut cfg = EnsembleConfig::new(tau, DetectionWindow::new(window_start, window_duration), samples as usize, seed);
        cfg.workers = workers as usize;
        let res = run_ensemble(p, &noise, &cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(HsEnsemble(res)));
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or come from [`hs_ensemble_run`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn hs_ensemble_free(ens: *mut HsEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Overall click probability, mean fidelity and its standard error.
///
/// # Safety
/// `ens` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn hs_ensemble_summary(
    ens: *const HsEnsemble,
    p_click: *mut f64,
    fidelity: *mut f64,
    fidelity_stderr: *mut f64,
) -> HsStatus {
    guard(|| {
        let r = &deref(ens, "ensemble")?.0;
        *deref_mut(p_click, "p_click")? = r.p_click;
        *deref_mut(fidelity, "fidelity")? = r.fidelity;
        *deref_mut(fidelity_stderr, "fidelity_stderr")? = r.fidelity_stderr;
        Ok(())
    })
}

/// Number of detection-time bins, 0 for a null handle.
///
/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_ensemble_bin_count(ens: *const HsEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.0.bins.len())
}

/// # Safety
/// `ens` must be a live handle; `bin` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_ensemble_bin(ens: *const HsEnsemble, index: usize, bin: *mut HsBin) -> HsStatus {
    guard(|| {
        let r = &deref(ens, "ensemble")?.0;
        let out = deref_mut(bin, "bin")?;
        let Some(slot) = r.bins.get(index) else {
            return Err(fail(HeraldError::InvalidParameter {
                name: "index",
                reason: format!("{index} out of range ({} bins)", r.bins.len()),
            }));
        };
        *out = HsBin {
            start: r.bin_edges[index],
            end: r.bin_edges[index + 1],
            fidelity: f64::NAN,
            fidelity_stderr: f64::NAN,
            phase: f64::NAN,
            samples: 0,
        };
        if let Some(s) = slot {
            out.fidelity = s.fidelity;
            out.fidelity_stderr = s.stderr;
            out.phase = s.phase;
            out.samples = s.samples as u64;
        }
        Ok(())
    })
}

/// Gaussian pulse with intensity FWHM `fwhm` ns peaking at `peak` ns,
/// scaled to rotation angle `theta` rad.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_pulse_gaussian(fwhm: f64, peak: f64, theta: f64, out: *mut *mut HsPulse) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let shape = PulseShape::gaussian(fwhm, peak, theta).map_err(fail)?;
        *out = Box::into_raw(Box::new(HsPulse(shape)));
        Ok(())
    })
}

/// Pulse from a two-column (t ns, intensity) CSV, scaled to `theta` rad.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_pulse_from_csv(path: *const c_char, theta: f64, out: *mut *mut HsPulse) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = std::ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| {
            fail(HeraldError::InvalidParameter {
                name: "path",
                reason: "not UTF-8".into(),
            })
        })?;
        let shape = PulseShape::from_csv(Path::new(path))
            .and_then(|s| s.with_rotation_angle(theta))
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(HsPulse(shape)));
        Ok(())
    })
}

/// # Safety
/// `pulse` must be null or a handle from this library, not used again.
#[no_mangle]
pub unsafe extern "C" fn hs_pulse_free(pulse: *mut HsPulse) {
    if !pulse.is_null() {
        drop(Box::from_raw(pulse));
    }
}

/// Emission statistics for a window given relative to the pulse peak.
///
/// # Safety
/// `pulse` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_pulse_emission(
    pulse: *const HsPulse,
    tau: f64,
    window_start: f64,
    window_duration: f64,
    out: *mut HsEmission,
) -> HsStatus {
    guard(|| {
        let shape = &deref(pulse, "pulse")?.0;
        let out = deref_mut(out, "out")?;
        let window = DetectionWindow::new(shape.peak_time() + window_start, window_duration);
        let s = evolve_emitter(shape, tau, &window).map_err(fail)?;
        *out = HsEmission {
            p0: s.p0,
            p1: s.p1,
            p2: s.p2,
            p_de: s.p_de,
            theta: s.theta,
        };
        Ok(())
    })
}
