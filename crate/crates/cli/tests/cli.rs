use std::path::Path;
use std::process::{Command, Output};

fn nlgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlgate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn dressed_header_and_resonant_angle() {
    let o = nlgate(&["dressed", "--detuning", "0", "--n-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("n,phi_n,E_plus,E_minus,bare_overlap"));
    for r in rows(&text) {
        let phi: f64 = r[1].parse().unwrap();
        assert!((phi - std::f64::consts::FRAC_PI_4).abs() < 1e-11);
    }
}

#[test]
fn dressed_energies_follow_closed_form() {
    let (w, g, d) = (10.0_f64, 1.0_f64, 3.0_f64);
    let o = nlgate(&["dressed", "--omega", "10", "--coupling", "1", "--detuning", "3"]);
    for r in rows(&stdout(&o)) {
        let n: f64 = r[0].parse().unwrap();
        let root = (d * d / 4.0 + g * g * (n + 1.0)).sqrt();
        let mid = w * (n + 1.0);
        let (ep, em): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((ep - (mid + root)).abs() < 1e-9 * ep.abs());
        assert!((em - (mid - root)).abs() < 1e-9 * em.abs());
    }
}

#[test]
fn rabi_columns_agree() {
    let o = nlgate(&["rabi", "--photons", "1", "--steps", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("t,P_e_closed_form,P_e_tdse,abs_diff"));
    assert_eq!(rows(&text).len(), 21);
    for r in rows(&text) {
        assert!(r[3].parse::<f64>().unwrap() < 1e-8);
    }
}

#[test]
fn formula_sweep_has_exact_header() {
    let o = nlgate(&["fidelity-sweep", "--mode", "formula", "--steps", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("x,F_formula,F_simulated,abs_diff"));
    let r = rows(&text);
    assert_eq!(r.len(), 3);
    assert_eq!(r[2][0], "0.1");
    assert_eq!(r[2][1], "0.999752449479");
}

#[test]
fn zero_drive_two_photon_is_zero() {
    let o = nlgate(&["two-photon", "--sigma0", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().next(),
        Some("convention,perturbative,exact,abs_diff,distance_to_target,chosen")
    );
    for r in rows(&text) {
        assert_eq!((r[1].as_str(), r[2].as_str()), ("0", "0"));
    }
}

#[test]
fn basis_protocol_succeeds() {
    let o = nlgate(&["protocol", "--a", "1", "--b", "0", "--c", "0", "--d", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 5);
    assert_eq!(r[4][..2], ["all".to_owned(), "average".to_owned()]);
    for row in &r[..4] {
        assert_eq!(row[3], "1");
    }
}

#[test]
fn validation_errors_exit_one() {
    for args in [
        &["dressed", "--bogus"][..],
        &["protocol", "--a", "2", "--b", "0", "--c", "1", "--d", "0"],
        &["rabi", "--tolerance", "0.5"],
        &["protocol", "--fock-cutoff", "2"],
        &["fidelity-sweep", "--mode", "simulated", "--x-min", "0"],
        &["ebit-noise", "--p-empty", "0.7", "--p-double", "0.7"],
    ] {
        assert_eq!(nlgate(args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(nlgate(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_rejects_unknown_keys_and_wrong_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[dressed]\nomegaa = 3.0\n");
    assert_eq!(nlgate(&["dressed", "--config", &bad]).status.code(), Some(1));
    let wrong = write(dir.path(), "wrong.toml", "experiment = \"rabi\"\n");
    assert_eq!(nlgate(&["dressed", "--config", &wrong]).status.code(), Some(1));
    let top = write(dir.path(), "top.toml", "colour = 1\n");
    assert_eq!(nlgate(&["dressed", "--config", &top]).status.code(), Some(1));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "experiment = \"dressed\"\n[dressed]\ndetuning = 0.0\nn_max = 1\n",
    );
    let from_file = rows(&stdout(&nlgate(&["dressed", "--config", &cfg])));
    assert_eq!(from_file.len(), 2);
    assert_eq!(from_file[0][1], "0.785398163397");
    let flagged = rows(&stdout(&nlgate(&["dressed", "--config", &cfg, "--n-max", "3"])));
    assert_eq!(flagged.len(), 4);
    assert_eq!(flagged[0][1], "0.785398163397");
}

#[test]
fn out_file_and_trace_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = nlgate(&[
        "protocol",
        "--random",
        "2",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4 + 1);
    let trace = std::fs::read_to_string(dir.path().join("p.csv.trace")).unwrap();
    assert_eq!(trace.lines().next(), Some("# protocol trace v1"));
    assert!(trace.contains("op=share_ebit"));
    assert!(trace.lines().any(|l| l.contains("node=Bob") && l.contains("step=step5")));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str]| {
        let out = dir.path().join(name);
        let mut a = args.to_vec();
        a.extend(["--out", out.to_str().unwrap()]);
        assert_eq!(nlgate(&a).status.code(), Some(0));
        let trace = std::fs::read(dir.path().join(format!("{name}.trace"))).unwrap_or_default();
        (std::fs::read(&out).unwrap(), trace)
    };
    let p = ["protocol", "--random", "3", "--sample", "--seed", "11"];
    assert_eq!(run("a.csv", &p), run("b.csv", &p));
    let e = ["ebit-noise", "--p-empty", "0,0.3", "--runs", "500", "--seed", "3"];
    assert_eq!(run("c.csv", &e), run("d.csv", &e));
}
