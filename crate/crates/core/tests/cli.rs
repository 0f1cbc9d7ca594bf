use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gammabarnes"))
}

fn write_config(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gammabarnes-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn verify(name: &str, text: &str, extra: &[&str]) -> Output {
    let path = write_config(name, text);
    bin().arg("verify").arg("--config").arg(&path).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CHAIN: &str = "# one chain case
seed = 5
case {
  identity = CHAIN_S
  z = (0, i) ; (0, 0)
  alpha = (0, 0.7) ; (0, 0.7)
}
";

#[test]
fn single_chain_case_passes() {
    let o = verify("chain.cfg", CHAIN, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1);
    let rec: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(rec["passed"], true);
    assert_eq!(rec["seed"], 5);
    assert_eq!(rec["params"]["alpha"][0]["twice_m"], 0);
    assert!(rec["residual"].as_f64().unwrap() <= 1e-7);
}

#[test]
fn star_triangle_off_constraint_is_a_config_error() {
    let text = "case {
  identity = STAR_TRIANGLE_S
  z = (0, 0) ; (0, 0.5i) ; (0, -0.5i)
  alpha = (0, 0.7) ; (0, 0.7) ; (0, 0.7)
}
";
    let o = verify("star.cfg", text, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("ConstraintError") && e.contains("alpha"), "{e}");
    assert!(o.stdout.is_empty());
}

#[test]
fn empty_case_list_is_a_config_error() {
    let o = verify("empty.cfg", "seed = 1\n# nothing to run\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = bin().args(["verify", "--config", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_case_exits_one() {
    // the quadrature tolerance cannot be met
    let text = CHAIN.replace("  alpha", "  tolerance = 1e-300\n  alpha");
    let o = verify("tight.cfg", &text, &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_is_deterministic_across_worker_counts() {
    let text = "seed = 21
case {
  identity = GUSTAFSON_I
  sample = 0
  count = 3
}
case {
  identity = REDUCED_II
  n = 2
  sector = HALF_INTEGER
  sample = 4
}
";
    let a = verify("det.cfg", text, &[]);
    let b = verify("det.cfg", text, &["--workers", "1"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 4);
}

#[test]
fn text_format_and_out_file() {
    let out = std::env::temp_dir().join(format!("gammabarnes-out-{}.txt", std::process::id()));
    let o = verify("text.cfg", CHAIN, &["--format", "text", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.contains("CHAIN_S") && table.contains("1/1 passed"), "{table}");
    let _ = std::fs::remove_file(out);
}

#[test]
fn timing_fills_wall_time() {
    let o = verify("timing.cfg", CHAIN, &["--timing"]);
    let rec: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rec["wall_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn selftest_is_clean_and_repeatable() {
    let a = bin().arg("selftest").output().unwrap();
    let b = bin().arg("selftest").output().unwrap();
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn selftest_names_reflection_under_a_perturbed_kernel() {
    let o = bin().args(["selftest", "--perturb-kernel", "1e-6"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma.reflection"), "{}", stderr(&o));
}

#[test]
fn zeta_sweep_emits_points_and_summary() {
    let o = bin()
        .args(["sweep", "--identity", "GUSTAFSON_I", "--param", "zeta", "--from", "1.2", "--to", "1.025", "--steps", "4"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 5);
    let zetas: Vec<f64> = recs[..4].iter().map(|r| r["value"].as_f64().unwrap()).collect();
    for (z, want) in zetas.iter().zip([1.2, 1.1, 1.05, 1.025]) {
        assert!((z - want).abs() < 1e-12);
    }
    // |ζ − 1|·I approaches the residue monotonically
    let scaled: Vec<f64> = recs[..4].iter().map(|r| r["scaled"][0].as_f64().unwrap()).collect();
    assert!(scaled.windows(2).all(|w| w[1] < w[0]), "{scaled:?}");
    assert_eq!(recs[4]["record"], "sweep_summary");
    assert_eq!(recs[4]["passed"], true);
}

#[test]
fn sweep_rejects_zero_steps_and_unknown_parameters() {
    let run = |extra: &[&str]| {
        bin()
            .args(["sweep", "--identity", "CHAIN", "--from", "16", "--to", "128"])
            .args(extra)
            .output()
            .unwrap()
    };
    assert_eq!(run(&["--param", "L", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--param", "alpha", "--steps", "4"]).status.code(), Some(2));
}
