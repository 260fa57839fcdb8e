use std::path::Path;
use std::process::{Command, Output};

fn rtemu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtemu")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_config_exits_1() {
    let o = rtemu(&["emulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn invalid_config_exits_1_listing_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        r#"
[topology]
nodes = [{ name = "a", kind = "router" }, { name = "b", kind = "router" }]
channels = [{ from = "a", to = "b", delay = "1ms", datarate = 0 }]
[bench]
count = 0
"#,
    );
    let o = rtemu(&["bench", "ping", "--config", &cfg, "--clock", "test"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("datarate") && err.contains("bench.count"), "{err}");
}

#[test]
fn syntax_error_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "[scheduler]\npolcy = \"corrected\"\n");
    let o = rtemu(&["emulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn empty_samples_report_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "empty.csv", "seq,send_ns,recv_ns,rtt_ns\n");
    let o = rtemu(&["report", "--input", &input, "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty sample set"));
}

#[test]
fn ping_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let samples = dir.path().join(format!("samples-{tag}.csv"));
        let summary = dir.path().join(format!("summary-{tag}.csv"));
        let cfg = write(
            dir.path(),
            &format!("{tag}.toml"),
            &format!(
                "[topology]\npreset = \"emulated-link\"\n[clock]\nkind = \"test\"\n[output]\nsamples = {:?}\nsummary = {:?}\n",
                samples, summary
            ),
        );
        let o = rtemu(&["bench", "ping", "--config", &cfg, "--count", "20", "--interval", "15"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(samples).unwrap(), std::fs::read_to_string(summary).unwrap())
    };
    let (a, sa) = run("a");
    let (b, sb) = run("b");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert!(sa.lines().nth(1).unwrap().starts_with("20,20002048.0,20002048.0,"));

    let input = dir.path().join("samples-a.csv");
    let o = rtemu(&["report", "--input", input.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), sa);
}

#[test]
fn loss_runs_both_modes() {
    let o = rtemu(&["bench", "loss", "--clock", "test", "--rate", "500", "--size", "100", "--duration", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let v: toml::Value = toml::from_str(&text).unwrap();
    let runs = v["run"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["mode"].as_str(), Some("immediate"));
    assert_eq!(runs[0]["sent"].as_integer(), Some(250));
    assert_eq!(runs[1]["echoed"].as_integer(), Some(250));
}

#[test]
fn emulate_test_clock_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "arrivals.csv", "0,64\n1000000,64\n2500000,128\n");
    let cfg = write(
        dir.path(),
        "emu.toml",
        &format!("[clock]\nkind = \"test\"\nscript = {script:?}\n[emulate]\nduration = \"50ms\"\n"),
    );
    let o = rtemu(&["emulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: toml::Value = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(v["injected"].as_integer(), Some(3));
    assert_eq!(v["emitted"].as_integer(), Some(3));
}

#[test]
fn bad_flag_value_is_usage_error() {
    let o = rtemu(&["bench", "ping", "--policy", "sometimes"]);
    assert_eq!(o.status.code(), Some(1));
}
