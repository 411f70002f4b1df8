use korteweg::harness::io::{parse_mask, read_csv, Field};
use korteweg::harness::read_abar;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[geometry]
m = 8
eps = [0.25, 0.125]

[constitutive]
law = { kind = "polytropic", coef = 1.0, exponent = 2.0 }
gamma = 0.0
rho_s = 0.5
r_max = 5.0

[kernel]
delta = 0.1

[pore]
t_end = 0.002
fixed_dt = 0.001

[effective]
theta = 0.8125
abar = [[0.019, 0.0], [0.0, 0.019]]
t_end = 0.01

[study]
initial = { kind = "cosine", mean = 0.5, amp = 0.1, kx = 1.0, ky = 1.0 }
"#;

fn korteweg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_korteweg")).args(args).output().expect("binary runs")
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    (dir, cfg)
}

fn run_sub(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    korteweg(&args)
}

fn rows(path: &Path) -> Vec<HashMap<String, String>> {
    read_csv(path).unwrap()
}

#[test]
fn help_exits_zero_and_usage_errors_exit_two() {
    assert_eq!(korteweg(&["--help"]).status.code(), Some(0));
    assert_eq!(korteweg(&["nonsense"]).status.code(), Some(2));
    assert_eq!(korteweg(&["pore"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_two() {
    let (dir, cfg) = setup("[geometry]\nunknown_key = 1\n");
    let out = dir.path().join("o");
    assert_eq!(run_sub("pore", &cfg, &out, &[]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(run_sub("cell", &missing, &out, &[]).status.code(), Some(2));
    let (dir2, cfg2) = setup(&SMALL.replace("eps = [0.25, 0.125]", "eps = [0.125, 0.25]"));
    assert_eq!(run_sub("pore", &cfg2, &dir2.path().join("o"), &[]).status.code(), Some(2));
}

#[test]
fn oversized_fixed_step_exits_three() {
    let (dir, cfg) = setup(&SMALL.replace("t_end = 0.01\n", "t_end = 0.01\nfixed_dt = 1.0\n"));
    let out = dir.path().join("o");
    let o = run_sub("effective", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let man = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(man.contains("failed"), "{man}");
}

#[test]
fn cell_writes_isotropic_abar_and_mask() {
    let (dir, cfg) = setup(SMALL);
    let out = dir.path().join("o");
    let o = run_sub("cell", &cfg, &out, &["--fields"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let a = read_abar(&out.join("abar.csv")).unwrap();
    assert!(a[0][0] > 0.0 && (a[0][0] - a[1][1]).abs() < 1e-10 * a[0][0]);
    assert!(a[0][1].abs() < 1e-10 * a[0][0]);
    let (nx, ny, _, fluid) = parse_mask(&std::fs::read(out.join("unit_cell.mask")).unwrap()).unwrap();
    assert_eq!((nx, ny), (8, 8));
    let theta = fluid.iter().filter(|&&f| f).count() as f64 / 64.0;
    let report = rows(&out.join("cell_report.csv"));
    let t = report.iter().find(|r| r["quantity"] == "theta").unwrap();
    assert_eq!(t["value"].parse::<f64>().unwrap(), theta);
    let v = Field::read(&out.join("v1_x.field")).unwrap();
    assert_eq!((v.nx, v.ny, v.values.len()), (8, 8, 64));
}

#[test]
fn pore_outputs_conserve_mass_and_are_reproducible() {
    let (dir, cfg) = setup(SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run_sub("pore", &cfg, out, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for k in 0..2 {
        let name = format!("pore_eps{k}.csv");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        let r = rows(&a.join(&name));
        // steps shrink to land on the comparison times 0, T/4, .., T
        assert_eq!(r.len(), 5);
        assert_eq!(r.last().unwrap()["t"].parse::<f64>().unwrap(), 0.002);
        let m0: f64 = r[0]["mass"].parse().unwrap();
        for row in &r {
            let m: f64 = row["mass"].parse().unwrap();
            assert!((m - m0).abs() <= 1e-12 * m0.abs());
            assert_eq!(row["config_hash"], r[0]["config_hash"]);
        }
        let mask = parse_mask(&std::fs::read(a.join(format!("pore_eps{k}.mask"))).unwrap()).unwrap();
        let f = Field::read(&a.join(format!("pore_eps{k}_rho_4.field"))).unwrap();
        assert_eq!((f.nx, f.ny), (mask.0, mask.1));
    }
    let cfg_a = std::fs::read(a.join("config.toml")).unwrap();
    assert_eq!(cfg_a, std::fs::read(b.join("config.toml")).unwrap());
    let man = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(man.contains("pore_eps1.csv"));
}

#[test]
fn effective_conserves_mass() {
    let (dir, cfg) = setup(SMALL);
    let out = dir.path().join("o");
    let o = run_sub("effective", &cfg, &out, &["--fields"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("effective.csv"));
    assert!(r.len() > 1);
    let m0: f64 = r[0]["mass"].parse().unwrap();
    let t_last: f64 = r.last().unwrap()["t"].parse().unwrap();
    assert!((t_last - 0.01).abs() < 1e-12);
    for row in &r {
        let m: f64 = row["mass"].parse().unwrap();
        assert!((m - m0).abs() <= 1e-12 * m0.abs());
    }
    let f = Field::read(&out.join("effective_rho_0.field")).unwrap();
    assert_eq!(f.name, "rho_ch");
    assert!(f.values.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn check_pressure_reports_items() {
    let (dir, cfg) = setup(SMALL);
    let out = dir.path().join("o");
    let o = korteweg(&["check-pressure", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("verdict"), "{text}");
    let r = rows(&out.join("admissibility.csv"));
    assert!(!r.is_empty());
    assert!(r.iter().all(|row| row["pass"] == "true" || row["pass"] == "false"));
}
