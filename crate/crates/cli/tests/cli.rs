use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn iles(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iles"))
        .current_dir(dir)
        .args(args)
        .env_remove("ILES_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const ILC: &str = r#"
mode = "ilc"
output_dir = "out"

[ilc]
beta = 0.5
k_max = 30
dump = [1, 30]
"#;

#[test]
fn malformed_config_exits_1_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", &ILC.replace("k_max = 30", "k_max = 30\nkmax = 3"));
    let o = iles(tmp.path(), &["run", "c.toml"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8") && err.contains("kmax"), "{err}");
    assert!(!tmp.path().join("out").exists());

    write(tmp.path(), "d.toml", &ILC.replace("dump = [1, 30]", "dump = [31]"));
    assert_eq!(code(&iles(tmp.path(), &["run", "d.toml"])), 1);
    assert!(!tmp.path().join("out").exists());

    assert_eq!(code(&iles(tmp.path(), &["run", "missing.toml"])), 1);
    assert_eq!(code(&iles(tmp.path(), &["frobnicate"])), 1);
}

#[test]
fn ilc_run_writes_outputs_and_reruns_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", ILC);
    let o = iles(tmp.path(), &["run", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let csv = fs::read_to_string(out.join("campaign.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("k,gamma_k,err_c,err_lambda,err_l2,j_index,fixed_point_gap,step_change")
    );
    assert_eq!(lines.count(), 30);
    for f in ["iter_1_z.csv", "iter_30_z.csv", "y_inf.csv", "run.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "iles");
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["config"]["ilc"]["alpha"], 0.1);

    fs::copy(out.join("run.json"), tmp.path().join("again.json")).unwrap();
    let before = fs::read(out.join("campaign.csv")).unwrap();
    assert_eq!(code(&iles(tmp.path(), &["run", "again.json"])), 0);
    assert_eq!(fs::read(out.join("campaign.csv")).unwrap(), before);
}

#[test]
fn failed_check_exits_2_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // lambda sits below lambda0 = 0.4 with this little forgetting
    write(tmp.path(), "c.toml", &ILC.replace("beta = 0.5", "beta = 0.1\nlambda = 0.01"));
    let o = iles(tmp.path(), &["run", "c.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL contraction"));
    let manifest = fs::read_to_string(tmp.path().join("out/run.json")).unwrap();
    assert!(manifest.contains("\"passed\": false"));
}

#[test]
fn beta_zero_run_improves_and_leaves_gamma_empty() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "mode = \"ilc-beta0\"\noutput_dir = \"b0\"\n[ilc-beta0]\ngain = 0.05\nk_max = 10\n",
    );
    assert_eq!(code(&iles(tmp.path(), &["run", "c.toml"])), 0);
    let csv = fs::read_to_string(tmp.path().join("b0/campaign.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("")));
}

#[test]
fn sweep_rejects_a_bad_thread_cap() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "mode = \"sweep-omega\"\noutput_dir = \"s\"\n[sweep-omega]\nomegas = [25.0, 50.0, 100.0, 200.0]\nk_probe = 2\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_iles"))
        .current_dir(tmp.path())
        .args(["run", "c.toml"])
        .env("ILES_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(!tmp.path().join("s").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_iles"))
        .current_dir(tmp.path())
        .args(["run", "c.toml"])
        .env("ILES_THREADS", "2")
        .output()
        .unwrap();
    assert!(matches!(code(&o), 0 | 2));
    assert!(tmp.path().join("s/sweep.csv").exists());
}

#[test]
fn verify_writes_an_analysis_file() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", ILC);
    let o = iles(tmp.path(), &["verify", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/analysis.json")).unwrap()).unwrap();
    assert!(a["ilc"]["contraction"]["rho"].as_f64().unwrap() < 1.0);
    assert!(a["ilc"]["bounds"]["d2"].as_f64().is_some());
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| (p.display().to_string(), fs::read(p.join("campaign.csv")).unwrap()))
        .collect();
    v.sort();
    v.into_iter()
        .map(|(p, b)| (Path::new(&p).file_name().unwrap().to_string_lossy().into_owned(), b))
        .collect()
}

#[test]
fn reproduce_figures_emits_the_full_set() {
    let tmp = tempfile::tempdir().unwrap();
    let o = iles(tmp.path(), &["reproduce-figures", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = tmp.path().join("a");
    let svgs: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert_eq!(svgs.len(), 10);
    for p in &svgs {
        let text = fs::read_to_string(p).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline")));
    }
    let first = csvs(&a);
    assert_eq!(first.len(), 4);

    assert_eq!(code(&iles(tmp.path(), &["reproduce-figures", "--out", "b"])), 0);
    assert_eq!(csvs(&tmp.path().join("b")), first);
}
