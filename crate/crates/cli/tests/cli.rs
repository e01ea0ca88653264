use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gcodeloop::tasks::canonical_tasks;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gcodeloop"));
    for var in [
        "GLLM_ENDPOINT_URL",
        "GLLM_API_KEY",
        "GLLM_MODEL",
        "GLLM_TIMEOUT_SECS",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn core_fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn tasks_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tasks")
}

fn square_params() -> String {
    canonical_tasks()[0].params.to_json()
}

#[test]
fn validate_exit_codes() {
    let o = run(&["validate", &core_fixture("task1_square.gcode")]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "");
    let o = run(&["validate", &core_fixture("g022.gcode")]);
    assert_eq!(code(&o), 1);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("LINE 7: SYNTAX:"));
    assert_eq!(code(&run(&["validate", "/no/such/file.gcode"])), 3);
    let o = run(&["validate", "--drilling", &core_fixture("drill/pos1.gcode")]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("UNSAFE_DRILL_MOVE"));
    assert_eq!(
        code(&run(&[
            "validate",
            "--safe-height",
            "-1",
            &core_fixture("g022.gcode")
        ])),
        2
    );
    assert_eq!(code(&run(&["validate"])), 2);
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("out.svg");
    let json = dir.path().join("out.json");
    let o = run(&[
        "simulate",
        &core_fixture("task1_square.gcode"),
        "--svg",
        svg.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let golden = std::fs::read_to_string(core_fixture("task1_square.svg")).unwrap();
    assert_eq!(std::fs::read_to_string(&svg).unwrap(), golden);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(v["points"].is_array());
    assert_eq!(
        code(&run(&["simulate", &core_fixture("no_motion.gcode")])),
        1
    );
}

#[test]
fn compare_prints_distance() {
    let square = core_fixture("task1_square.gcode");
    let params = square_params();
    let o = run(&["compare", &square, "--params", &params]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o),
        "tool paths match within tolerance\nd=0.000000\n"
    );

    let dir = tempfile::tempdir().unwrap();
    let wide = dir.path().join("wide.gcode");
    let text = std::fs::read_to_string(&square)
        .unwrap()
        .replace("X50", "X60");
    std::fs::write(&wide, text).unwrap();
    let o = run(&["compare", wide.to_str().unwrap(), "--params", &params]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o), "tool paths do not match\nd=10.000000\n");
    let o = run(&[
        "compare",
        wide.to_str().unwrap(),
        "--params",
        &params,
        "--tolerance",
        "10",
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn generate_writes_program_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("square.gcode");
    let trace = dir.path().join("trace.json");
    let o = run(&[
        "generate",
        "--params",
        &square_params(),
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().contains("M30"));
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["trace"].as_array().unwrap().len(), 1);

    let o = run(&[
        "generate",
        "--params",
        r#"{"material":"aluminum","operation":"milling"}"#,
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("feed_rate"));

    assert_eq!(
        code(&run(&[
            "generate",
            "--params",
            &square_params(),
            "--generator",
            "remote"
        ])),
        3
    );

    let o = run(&[
        "generate",
        "--params",
        &square_params(),
        "--generator",
        "fault",
        "--faults",
        r#"{"attempts":["unreachable"],"then":"none"}"#,
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("attempt 1: retry, 1 diagnostics"));
}

#[test]
fn decompose_numbers_subtasks() {
    let pocket = gcodeloop::tasks::POCKET_DESCRIPTION;
    let o = run(&["decompose", "--description", pocket]);
    assert_eq!(code(&o), 0);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("1. ") && lines[2].starts_with("3. "));
    let o = run(&["decompose", "--description", "mill a square"]);
    assert_eq!(stdout(&o), "1. mill a square\n");
    assert_eq!(code(&run(&["decompose", "--description", "  "])), 2);
}

#[test]
fn task_files_match_builtin_tasks() {
    let dir = tasks_dir();
    let tasks = canonical_tasks();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&dir).unwrap();
        for (i, t) in tasks.iter().enumerate() {
            let mut t = t.clone();
            if t.params.shape != Some(gcodeloop::params::Shape::Custom) {
                t.params.tool_path = None;
            }
            let text = serde_json::to_string_pretty(&t).unwrap() + "\n";
            std::fs::write(dir.join(format!("{}_{}.json", i + 1, t.name)), text).unwrap();
        }
    }
    for (i, t) in tasks.iter().enumerate() {
        let text = std::fs::read_to_string(dir.join(format!("{}_{}.json", i + 1, t.name))).unwrap();
        let mut loaded: gcodeloop::corrector::BenchmarkTask = serde_json::from_str(&text).unwrap();
        loaded.params = gcodeloop::extract::fill_defaults(&loaded.params);
        assert_eq!(&loaded, t);
    }
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let tasks = tasks_dir();
    let o = run(&[
        "bench",
        "--tasks",
        tasks.to_str().unwrap(),
        "--runs",
        "5",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("success_rate=1.0000 avg_iterations=1.0000"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("task,run,success,iterations,final_distance")
    );
    assert_eq!(text.lines().count(), 31);

    assert_eq!(
        code(&run(&[
            "bench",
            "--runs",
            "0",
            "--csv",
            csv.to_str().unwrap()
        ])),
        2
    );

    let o = run(&[
        "bench",
        "--runs",
        "2",
        "--generator",
        "fault",
        "--faults",
        r#"{"attempts":["syntax","unreachable"],"then":"none"}"#,
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(
        stdout(&o).contains("avg_iterations=3.0000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn serve_reports_busy_port() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = run(&["serve", "--port", &port]);
    assert_eq!(code(&o), 3);
}

#[test]
fn serve_answers_health() {
    use std::io::{Read, Write};
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut child = bin()
        .args(["serve", "--port", &port.to_string()])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut reply = String::new();
    for _ in 0..100 {
        if let Ok(mut s) = std::net::TcpStream::connect(("127.0.0.1", port)) {
            s.write_all(b"GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
                .unwrap();
            s.read_to_string(&mut reply).unwrap();
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let _ = child.kill();
    let _ = child.wait();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
}
