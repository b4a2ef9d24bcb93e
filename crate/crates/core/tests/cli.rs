use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cohtrans::sampling::random_majorizing_pair;
use cohtrans::sequential::plan_sequence;
use cohtrans::Tolerances;

const SIX: &str = r#"{"source_mu": [0.20754716981132076, 0.20754716981132076, 0.1509433962264151, 0.1509433962264151, 0.1509433962264151, 0.1320754716981132],
                      "target_mu": [0.22641509433962265, 0.22641509433962265, 0.18867924528301888, 0.16981132075471697, 0.11320754716981132, 0.07547169811320754]}"#;

fn cohtrans(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cohtrans"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn check_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "six.json", SIX);
    let out = cohtrans(&["check", "--input", &input], None);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["majorization"]["holds"], true);
    assert_eq!(v["pattern"].as_array().unwrap().len(), 6);
}

#[test]
fn synthesize_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "six.json", SIX);
    let report = dir.path().join("report.json");
    let report = report.to_str().unwrap();
    let out = cohtrans(&["synthesize", "--input", &input, "--output", report], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let out = cohtrans(&["verify", "--input", report, "--seed", "11"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["verification"]["consistent"], true);
    assert_eq!(v["verification"]["incoherent"], true);
}

#[test]
fn sequence_from_stdin() {
    let out = cohtrans(&["sequence", "--input", "-"], Some(SIX));
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["plan"]["step_count"], 2);
    let out = cohtrans(&["sequence", "--input", "-", "--d-prime", "6"], Some(SIX));
    assert_eq!(json(&out)["plan"]["step_count"], 1);
}

#[test]
fn output_is_deterministic() {
    let args = ["locc", "--input", "-", "--enumerate-all"];
    let a = cohtrans(&args, Some(SIX));
    let b = cohtrans(&args, Some(SIX));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn numbers_carry_seventeen_digits() {
    let out = cohtrans(&["check", "--input", "-"], Some(SIX));
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let literals: Vec<&str> = text
        .lines()
        .map(|l| l.trim().trim_end_matches(','))
        .filter(|l| l.parse::<f64>().is_ok() && l.contains('e'))
        .collect();
    assert!(literals.len() >= 24);
    for lit in literals {
        let (mantissa, _) = lit.split_once('e').unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{lit}");
    }
    let first = v["target"]["mu"][0].as_f64().unwrap();
    assert!((first - 0.22641509433962265).abs() < 1e-16);
}

#[test]
fn error_exit_codes() {
    let out = cohtrans(&["check", "--input", "-"], Some("{"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["code"], "parse");

    let bad = r#"{"source": [0.9, 0.3], "target": [0.8, 0.6]}"#;
    assert_eq!(cohtrans(&["check", "--input", "-"], Some(bad)).status.code(), Some(2));

    let reversed = r#"{"source_mu": [0.6, 0.4], "target_mu": [0.5, 0.5]}"#;
    let out = cohtrans(&["synthesize", "--input", "-"], Some(reversed));
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["majorization"]["first_violation"], 1);

    let out = cohtrans(&["check", "--input", "/nonexistent/file.json"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(cohtrans(&["transmute", "--input", "-"], Some(SIX)).status.code(), Some(2));
}

#[test]
fn fallback_exits_with_five() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (s, t) = loop {
        let (s, t) = random_majorizing_pair(8, &mut rng, &tol);
        if matches!(plan_sequence(&s, &t, 5, &tol), Ok(p) if p.fallback) {
            break (s, t);
        }
    };
    let doc = serde_json::json!({"source_mu": s.mu().entries, "target_mu": t.mu().entries}).to_string();
    let out = cohtrans(&["sequence", "--input", "-"], Some(&doc));
    assert_eq!(out.status.code(), Some(5));
    let v = json(&out);
    assert_eq!(v["plan"]["fallback"], true);
    assert_eq!(v["status"], "fallback");
}
