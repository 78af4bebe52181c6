//! End-to-end runs of the command-line front end.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(cmd: &str, config: &str, out: &Path) -> std::process::Output {
    let cfg = out.with_extension("toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_optosqueeze"))
        .args([
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const FIG2: &str = r#"
[grid]
T_kappa_units = 42
[protocol]
kind = "constant"
g_minus_hz = 70e3
ratio_final = 0.86
[output]
every = 25
"#;

#[test]
fn simulate_reproduces_constant_protocol_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("simulate", FIG2, &a).status.success());
    assert!(run("simulate", FIG2, &b).status.success());
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let s = json(&a.join("summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    assert!((s["max_db"].as_f64().unwrap() - 10.1).abs() <= 0.3);
    let header = std::fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(header.starts_with(
        "t_s,g_plus_rad_s,g_minus_rad_s,var_x1,var_x2,db,purity_mech,purity_cav,purity_total,engine,mode,protocol\n"
    ));
}

#[test]
fn zero_drive_never_squeezes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nT_kappa_units = 5\n[protocol]\nkind = \"constant\"\ng_minus_hz = 0\nratio_final = 0\n";
    let out = run("simulate", cfg, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        json(&dir.path().join("summary.json"))["max_db"]
            .as_f64()
            .unwrap()
            <= 0.0
    );
}

#[test]
fn fock_and_moment_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[params]\nn_th = 0.5\n[cutoffs]\nn_cav = 5\nn_mech = 20\n[grid]\nT_kappa_units = 4\n[protocol]\nkind = \"constant\"\ng_minus_hz = 20e3\nratio_final = 0.8\n";
    let mut db = Vec::new();
    for engine in ["fock", "moments"] {
        let out = dir.path().join(engine);
        let cfg = format!("{base}[run]\nengine = \"{engine}\"\nmode = \"full\"\n");
        assert!(run("simulate", &cfg, &out).status.success());
        db.push(json(&out.join("summary.json"))["max_db"].as_f64().unwrap());
    }
    assert!((db[0] - db[1]).abs() <= 0.05, "{db:?}");
}

#[test]
fn compare_duplicates_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let entry = "[[protocols]]\nkind = \"constant\"\ng_minus_hz = 70e3\nratio_final = 0.7\n";
    let cfg = format!("[grid]\nT_kappa_units = 8\n{entry}{entry}");
    assert!(run("compare", &cfg, dir.path()).status.success());
    let s = json(&dir.path().join("summary.json"));
    let rows = s["protocols"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["max_db"], rows[1]["max_db"]);
    assert_eq!(
        rows[0]["time_to_threshold_s"],
        rows[1]["time_to_threshold_s"]
    );
}

#[test]
fn optimize_without_iterations_returns_guess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[params]\nn_th = 0.5\n[cutoffs]\nn_cav = 3\nn_mech = 10\n[grid]\nT_kappa_units = 1\n[run]\nengine = \"fock\"\n[protocol]\nkind = \"constant\"\ng_minus_hz = 5.8e3\nratio_final = 0.7\n[krotov]\nmax_iters = 0\n";
    let out = run("optimize", cfg, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read(dir.path().join("pulses_final.csv")).unwrap(),
        std::fs::read(dir.path().join("pulses_guess.csv")).unwrap()
    );
    let s = json(&dir.path().join("optimization.json"));
    assert_eq!(s["j_t_guess"], s["j_t_final"]);
}

#[test]
fn optimize_requires_fock_engine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nT_kappa_units = 1\n[run]\nengine = \"moments\"\n[protocol]\nkind = \"constant\"\ng_minus_hz = 5e3\nratio_final = 0.5\n";
    let out = run("optimize", cfg, dir.path());
    assert!(!out.status.success());
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[params]\nkappa_hz = -1\n[grid]\nT_s = 1e-6\n[protocol]\nkind = \"constant\"\ng_minus_hz = 5e3\nratio_final = 0.5\n";
    let out = run("simulate", cfg, dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.kappa"));
}

#[test]
fn kappa_study_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("kappa");
    assert!(run(
        "kappa-study",
        "[kappa_study]\nreductions = [1, 100]\n[output]\nevery = 50\n",
        &k
    )
    .status
    .success());
    assert!(k.join("kappa_study.csv").exists());
    assert_eq!(
        json(&k.join("kappa_study.json"))["runs"]
            .as_array()
            .unwrap()
            .len(),
        2
    );

    let q = dir.path().join("qsl");
    let out = run(
        "qsl-sweep",
        "[sweep]\nT_kappa_units = [1, 8]\nfamilies = [\"constant\"]\n",
        &q,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = json(&q.join("qsl.json"));
    assert_eq!(s["points"].as_array().unwrap().len(), 2);
    assert!(q.join("qsl.csv").exists());
}
