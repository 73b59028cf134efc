use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-asympt"))
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn scenario(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, verb: &str, scenario: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
        let mut c = bin();
        c.arg(verb).arg("--scenario").arg(scenario).arg("--out").arg(out).args(extra);
        match threads {
            Some(t) => c.env("MIMO_ASYMPT_THREADS", t),
            None => c.env_remove("MIMO_ASYMPT_THREADS"),
        };
        c.output().unwrap()
    }
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

/// `10 log10(4)`: linear SNR 4.
const SNR_4: &str = "6.020599913279624";

#[test]
fn asymptotics_reports_iid_fixed_point() {
    let r = Run::new();
    let s = r.scenario("s.json", &format!(r#"{{"M": 8, "N": 16, "snr_db": {SNR_4}}}"#));
    ok(&r.exec("asymptotics", &s, &r.out("o"), &[], None));
    let v = json(&r.out("o").join("asymptotics.json"));
    let p = &v["points"][0];
    assert!((p["g"].as_f64().unwrap() - 4.701_562_118_716_424).abs() < 1e-9);
    assert!((p["optimal"]["c2"].as_f64().unwrap() - 0.415_52).abs() < 1e-4);
    assert_eq!(v["units"], "nats");
    assert_eq!(v["trace_r"], 16.0);
    // both mean variants share the leading term
    assert_eq!(p["mmse_taylor"]["c10"], p["mmse_as_printed"]["c10"]);
}

#[test]
fn asymptotics_vanish_at_tiny_snr() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 3, "N": 6, "snr_db": -120}"#);
    ok(&r.exec("asymptotics", &s, &r.out("o"), &[], None));
    let v = json(&r.out("o").join("asymptotics.json"));
    let p = &v["points"][0];
    for key in ["mmse_taylor", "mmse_as_printed", "optimal"] {
        assert!(p[key]["c1"].as_f64().unwrap().abs() < 1e-10);
        assert!(p[key]["c2"].as_f64().unwrap().abs() < 1e-10);
    }
    assert!(p["sigma"]["diag_mean"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn forced_non_convergence_exits_3_and_names_point() {
    let r = Run::new();
    let s = r.scenario(
        "s.json",
        r#"{"M": 8, "N": 8, "snr_db": [0, 40],
            "correlation": {"type": "exponential", "zeta_r": 0.99, "zeta_t": 0.99}, "max_iter": 1}"#,
    );
    let o = r.exec("asymptotics", &s, &r.out("o"), &[], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("snr_db = 0"));
}

#[test]
fn exit_codes_for_config_and_io() {
    let r = Run::new();
    let bad = r.scenario("bad.json", r#"{"M": 2, "N": 4, "snr_db": 3, "colour": "red"}"#);
    assert_eq!(r.exec("asymptotics", &bad, &r.out("o"), &[], None).status.code(), Some(2));
    let missing = r.out("missing.json");
    assert_eq!(r.exec("asymptotics", &missing, &r.out("o"), &[], None).status.code(), Some(4));
    let good = r.scenario("good.json", r#"{"M": 2, "N": 4, "snr_db": 3, "trials": 5}"#);
    // output directory path is an existing file
    let blocked = r.scenario("blocked", "");
    assert_eq!(r.exec("simulate", &good, &blocked, &[], None).status.code(), Some(4));
    assert_eq!(r.exec("simulate", &good, &r.out("o"), &[], Some("lots")).status.code(), Some(2));
    // sampling commands need trials
    let no_trials = r.scenario("nt.json", r#"{"M": 2, "N": 4, "snr_db": 3}"#);
    assert_eq!(r.exec("simulate", &no_trials, &r.out("o"), &[], None).status.code(), Some(2));
    let no_rate = r.scenario("nr.json", r#"{"M": 2, "N": 4, "snr_db": 3, "trials": 5}"#);
    assert_eq!(r.exec("outage", &no_rate, &r.out("o"), &[], None).status.code(), Some(2));
    assert_eq!(r.exec("simulate", &good, &r.out("o"), &["--units", "furlongs"], None).status.code(), Some(2));
}

#[test]
fn correlation_files_resolve_relative_to_scenario() {
    let r = Run::new();
    std::fs::create_dir(r.out("mats")).unwrap();
    std::fs::write(
        r.out("mats").join("r.json"),
        r#"{"n": 2, "entries": [[[1, 0], [0.5, 0]], [[0.5, 0], [1, 0]]]}"#,
    )
    .unwrap();
    std::fs::write(r.out("mats").join("t.json"), r#"{"n": 1, "entries": [[[1, 0]]]}"#).unwrap();
    let s = r.scenario(
        "s.json",
        r#"{"M": 1, "N": 2, "snr_db": 10, "correlation": {"type": "file", "r_path": "mats/r.json", "t_path": "mats/t.json"}}"#,
    );
    ok(&r.exec("asymptotics", &s, &r.out("o"), &[], None));
    let s2 = r.scenario(
        "s2.json",
        r#"{"M": 1, "N": 2, "snr_db": 10, "correlation": {"type": "file", "r_path": "mats/t.json", "t_path": "mats/t.json"}}"#,
    );
    assert_eq!(r.exec("asymptotics", &s2, &r.out("o"), &[], None).status.code(), Some(2));
}

#[test]
fn simulate_single_trial_and_determinism() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 3, "N": 5, "snr_db": 10, "trials": 1, "seed": 42}"#);
    ok(&r.exec("simulate", &s, &r.out("a"), &[], None));
    let (header, rows) = csv(&r.out("a").join("samples.csv"));
    assert_eq!(header, ["mi_nats", "opt_nats"]);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][1] >= rows[0][0]);

    let s = r.scenario("s2.json", r#"{"M": 3, "N": 5, "snr_db": 10, "trials": 9000, "seed": 42}"#);
    ok(&r.exec("simulate", &s, &r.out("b"), &[], Some("1")));
    ok(&r.exec("simulate", &s, &r.out("c"), &[], Some("8")));
    ok(&r.exec("simulate", &s, &r.out("d"), &[], Some("0")));
    for f in ["samples.csv", "summary.json"] {
        let b = std::fs::read(r.out("b").join(f)).unwrap();
        assert_eq!(b, std::fs::read(r.out("c").join(f)).unwrap(), "{f}");
        assert_eq!(b, std::fs::read(r.out("d").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn units_flag_changes_display_only() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 2, "N": 4, "snr_db": 10, "trials": 100}"#);
    let nats = ok(&r.exec("simulate", &s, &r.out("n"), &["--units", "nats"], None));
    let bits = ok(&r.exec("simulate", &s, &r.out("b"), &[], None));
    let field = |out: &str, key: &str| -> f64 {
        out.split_whitespace()
            .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    let (n, b) = (field(&nats, "mi_mean"), field(&bits, "mi_mean"));
    assert!((b - n / std::f64::consts::LN_2).abs() < 1e-9 * b);
    assert_eq!(
        std::fs::read(r.out("n").join("summary.json")).unwrap(),
        std::fs::read(r.out("b").join("summary.json")).unwrap()
    );
}

#[test]
fn simulate_mean_agrees_with_asymptotics() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 5, "N": 10, "snr_db": 3, "trials": 100000, "seed": 1}"#);
    ok(&r.exec("asymptotics", &s, &r.out("o"), &[], None));
    ok(&r.exec("simulate", &s, &r.out("o"), &[], None));
    let c1 = json(&r.out("o").join("asymptotics.json"))["points"][0]["mmse_taylor"]["c1"].as_f64().unwrap();
    let mc = json(&r.out("o").join("summary.json"))["mi_mean"].as_f64().unwrap();
    assert!((mc - c1).abs() / c1 <= 0.02, "{mc} vs {c1}");
}

#[test]
fn compare_curves_are_well_formed() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 5, "N": 10, "snr_db": 3, "trials": 100000, "seed": 3}"#);
    let stdout = ok(&r.exec("compare", &s, &r.out("o"), &[], None));
    let (header, rows) = csv(&r.out("o").join("compare.csv"));
    assert_eq!(
        header,
        ["mi_bpcu", "cdf_mmse_analytic", "cdf_mmse_empirical", "cdf_opt_analytic", "cdf_opt_empirical"]
    );
    assert_eq!(rows.len(), 200);
    for w in rows.windows(2) {
        for (c, (a, b)) in w[0].iter().zip(&w[1]).enumerate() {
            assert!(b >= a, "column {c}");
        }
    }
    let last = rows.last().unwrap();
    assert_eq!(last[2], 1.0);
    assert_eq!(last[4], 1.0);
    assert!(last[1] > 0.999 && last[3] > 0.999);
    for row in &rows {
        assert!(row[3] <= row[1], "optimal analytic CDF lies right of MMSE");
    }
    let ks: f64 = stdout
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("ks_mmse="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ks <= 0.03, "{ks}");
    let report = json(&r.out("o").join("compare.json"));
    assert!((report["ks_mmse"].as_f64().unwrap() - ks).abs() <= 1e-11 * ks);
    assert_eq!(report["ks_mmse"], report["mmse_taylor"]["ks"]);
    assert!(report["mmse_as_printed"]["mean_rel_err"].is_f64());
    assert!(stdout.contains("variant=as-printed"));
}

#[test]
fn outage_high_snr_limit() {
    let r = Run::new();
    let s = r.scenario(
        "s.json",
        r#"{"M": 2, "N": 2, "snr_db": [50, 60], "rate_bpcu": 3, "trials": 100000, "seed": 5}"#,
    );
    ok(&r.exec("outage", &s, &r.out("o"), &[], None));
    let (header, rows) = csv(&r.out("o").join("outage.csv"));
    assert_eq!(header, ["snr_db", "pout_mmse_gauss", "pout_mmse_mc", "pout_opt_mc", "ci_halfwidth"]);
    assert_eq!(rows.len(), 2);
    let last = &rows[1];
    assert_eq!(last[0], 60.0);
    assert!(last[2] < 1e-3 && last[3] < 1e-3, "{last:?}");
    // With M = N the Gaussian variance grows like sqrt(rho) while the mean grows
    // like ln(rho), so the Gaussian column does not vanish; it must still be the
    // model CDF at the rate.
    ok(&r.exec("asymptotics", &s, &r.out("o"), &[], None));
    let m = &json(&r.out("o").join("asymptotics.json"))["points"][1]["mmse_taylor"];
    let (c1, c2) = (m["c1"].as_f64().unwrap(), m["c2"].as_f64().unwrap());
    let z = (3.0 * std::f64::consts::LN_2 - c1) / c2.sqrt();
    assert!(c2 > 10.0 && z > -2.0, "{c1} {c2}");

    let s = r.scenario(
        "s2.json",
        r#"{"M": 2, "N": 4, "snr_db": 60, "rate_bpcu": 3, "trials": 100000, "seed": 5}"#,
    );
    ok(&r.exec("outage", &s, &r.out("p"), &[], None));
    let row = &csv(&r.out("p").join("outage.csv")).1[0];
    for v in &row[1..4] {
        assert!(*v < 1e-3, "{row:?}");
    }
}

/// Adding receive antennas beats swapping in the optimal receiver at the
/// 1e-3 target (R = 3 bpcu, 15 dB).
#[test]
fn outage_antenna_configurations() {
    let r = Run::new();
    let pout = |m: usize, n: usize| -> Vec<f64> {
        let s = r.scenario(
            &format!("s{m}{n}.json"),
            &format!(r#"{{"M": {m}, "N": {n}, "snr_db": 15, "rate_bpcu": 3, "trials": 1000000, "seed": 2024}}"#),
        );
        let out = r.out(&format!("o{m}{n}"));
        ok(&r.exec("outage", &s, &out, &[], None));
        csv(&out.join("outage.csv")).1.remove(0)
    };
    let a = pout(2, 2);
    assert!(a[3] <= 1e-3 && a[2] > 1e-3, "{a:?}");
    assert!(pout(2, 4)[2] <= 1e-3);
    assert!(pout(3, 3)[2] <= 1e-3);
}

#[test]
fn outage_with_several_rates_writes_one_file_each() {
    let r = Run::new();
    let s = r.scenario("s.json", r#"{"M": 2, "N": 3, "snr_db": [5, 10], "rate_bpcu": [1, 2.5], "trials": 2000}"#);
    ok(&r.exec("outage", &s, &r.out("o"), &[], None));
    let (_, low) = csv(&r.out("o").join("outage_R1.csv"));
    let (_, high) = csv(&r.out("o").join("outage_R2.5.csv"));
    for (a, b) in low.iter().zip(&high) {
        assert!(a[1] <= b[1] && a[2] <= b[2] && a[3] <= b[3]);
    }
}
