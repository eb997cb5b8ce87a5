use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn heraldsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heraldsim"))
        .args(args)
        .current_dir(root())
        .env("HERALDSIM_WORKERS", "1")
        .output()
        .unwrap()
}

#[test]
fn malformed_config_exits_2() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "[link]\ntau = 12.4\neta = [1e-4, 1e-4]").unwrap();
    let out = heraldsim(&["herald", "--config", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn missing_pulse_file_exits_2() {
    let out = heraldsim(&["pulse", "--pulse", "no/such/pulse.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_fit_model_exits_2() {
    let out = heraldsim(&["fit", "voigt", "data/lorentzian.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_optimization_exits_3() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    let cfg = std::fs::read_to_string(root().join("configs/ab.toml")).unwrap();
    let cfg = cfg.replace("../data/pulse.csv", root().join("data/pulse.csv").to_str().unwrap());
    write!(f, "{cfg}\n[optimize]\nmode = \"alphas\"\np_click = [1.0]\n").unwrap();
    let out = heraldsim(&["optimize", "--config", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_carries_hash_and_seed() {
    let out = heraldsim(&["herald", "--config", "configs/ab.toml", "--seed", "11", "--samples", "5000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# config_hash=") && comment.ends_with(" seed=11"), "{comment}");
    assert!(lines.next().unwrap().starts_with("port,p_click,fidelity"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn fit_recovers_lorentzian_width() {
    let out = heraldsim(&["fit", "lorentzian", "data/lorentzian.csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gamma"), "{text}");
}
