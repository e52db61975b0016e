use std::path::Path;
use std::process::Command;

const SMALL: &str = "\
[geometry]
lx = 4 um
ly = 100 nm
lz = 1 um
nx = 40
ny = 1
nz = 10
[time]
t_end = 0.3 ns
[output]
snapshots = 0.3 ns
";

fn gatepulse(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gatepulse")).args(args).current_dir(cwd).output().unwrap()
}

fn read_metrics(path: &Path) -> Vec<(String, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gatepulse(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(gatepulse(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(gatepulse(&["sweep-td", "x.cfg", "--from", "1 parsec"], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "[pulse]\nt_r = -1 ns\n").unwrap();
    let out = gatepulse(&["run", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pulse.t_r"));
}

#[test]
fn zero_amplitude_run_gives_zero_metrics() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a0.cfg"), format!("{SMALL}[pulse]\namplitude = 0\n")).unwrap();
    let out = gatepulse(&["run", "a0.cfg", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_metrics(&dir.path().join("res/metrics.csv"));
    for key in ["rms_V", "max_modulus_V"] {
        assert_eq!(m.iter().find(|(k, _)| k == key).unwrap().1, 0.0);
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.cfg"), SMALL).unwrap();
    for out in ["a", "b"] {
        assert!(gatepulse(&["run", "s.cfg", "--out", out, "--step-log"], dir.path()).status.success());
    }
    let files = ["line_100nm.csv", "metrics.csv", "step_log.csv", "snapshot_0.300ns.vtk"];
    for f in files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty() && a == b, "{f} differs");
    }
}

#[test]
fn qubit_subcommand_reads_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t_s,phi1_V,phi2_V\n");
    for k in 0..=100 {
        let t = k as f64 * 1e-11;
        text.push_str(&format!("{t:e},{:e},0\n", 1e-5 * (2e10 * t).sin()));
    }
    std::fs::write(dir.path().join("dots.csv"), text).unwrap();
    let out = gatepulse(&["qubit", "dots.csv", "--delta-range", "1 ueV", "10 ueV", "--points", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "delta_ueV,infidelity");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let v: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn materials_reports_device_frame_speeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = gatepulse(&["materials", "--format", "csv"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let fast: f64 = text
        .lines()
        .find(|l| l.starts_with("velocity_m_per_s,1,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((fast - 5213.7).abs() < 0.5);
}
