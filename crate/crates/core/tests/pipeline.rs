mod common;

use std::process::Command;

use common::*;
use kernmodel::report::{run, AnalysisRequest, Body, Mode, SweepRange};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kernmodel"))
}

fn path(rel: &str) -> String {
    fixture(rel).to_string_lossy().into_owned()
}

fn jacobi_args(mode: &str) -> Vec<String> {
    [
        "-p", mode, "-m", &path("machines/snb.yaml"), &path("kernels/2d-5pt.c"),
        "-D", "N", "6000", "-D", "M", "6000",
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn ecm_run_with_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("out.json");
    let out = bin()
        .args(jacobi_args("ECM"))
        .args(["--ports", &path("ports/snb/2d-5pt.toml"), "--json"])
        .arg(&json)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("36.7 cy/CL"));
    assert!(text.contains("saturating at 3 cores"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["version"], 1);
    assert_eq!(doc["request"]["mode"], "ECM");
    let t = doc["model"]["ecm"]["prediction"]["residences"][3][1].as_f64().unwrap();
    assert!((t - 36.7).abs() < 0.05);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let go = || {
        bin()
            .args(jacobi_args("Roofline"))
            .args(["--json", "-"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(go(), go());
}

#[test]
fn exit_codes() {
    let code = |args: Vec<String>| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(jacobi_args("Bogus")), Some(1));
    assert_eq!(code(jacobi_args("ECM")), Some(1));
    assert_eq!(code(vec!["-p".into(), "ECM".into()]), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.c");
    std::fs::write(&bad, "double a[N];\nfor(int i=0;i<N;++i) a[i] = a[i] +;\n").unwrap();
    let mut args = jacobi_args("ECMData");
    args[4] = bad.to_string_lossy().into_owned();
    assert_eq!(code(args), Some(2));

    let yaml = dir.path().join("m.yaml");
    std::fs::write(&yaml, "memory hierarchy: 7\n").unwrap();
    let mut args = jacobi_args("ECMData");
    args[3] = yaml.to_string_lossy().into_owned();
    assert_eq!(code(args), Some(3));

    let mut m = machine("snb");
    m.measurements.retain(|x| x.level_name != "MEM");
    let nomem = dir.path().join("nomem.yaml");
    std::fs::write(&nomem, m.to_yaml_string()).unwrap();
    let mut args = jacobi_args("ECMData");
    args[3] = nomem.to_string_lossy().into_owned();
    assert_eq!(code(args), Some(4));
}

#[test]
fn compare_subcommand() {
    let out = bin()
        .args(jacobi_args("Compare"))
        .args(["--ports", &path("ports/snb/2d-5pt.toml"), "--measured", &path("measured/table5.csv")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-0.8%"), "{text}");
    assert!(!text.contains("FLAG"));
}

#[test]
fn sweep_rows_do_not_depend_on_the_grid() {
    let req = |start, end, points| {
        let mut r = AnalysisRequest::new(fixture("kernels/long-range.c"), fixture("machines/snb.yaml"), Mode::Sweep)
            .constant("M", 100)
            .ports(fixture("ports/snb/long-range.toml"));
        r.sweep = SweepRange { variable: "N".into(), start, end, points };
        r
    };
    let rows = |r: &AnalysisRequest| match run(r).unwrap().document.body {
        Body::Sweep(s) => s.rows,
        _ => unreachable!(),
    };
    let coarse = rows(&req(50, 2000, 12));
    let fine = rows(&req(50, 2000, 60));
    assert!(coarse.windows(2).all(|w| w[0].n < w[1].n));
    for r in &coarse {
        if let Some(f) = fine.iter().find(|f| f.n == r.n) {
            assert_eq!(f, r);
        }
    }
    let single = rows(&req(100, 100, 1));
    assert_eq!(single.len(), 1);
    let data: Vec<f64> = single[0].contributions.transfers.iter().map(|t| t.cycles).collect();
    assert_eq!(data[..2], [24.0, 24.0]);
}

#[test]
fn every_mode_runs_on_every_fixture() {
    for arch in ["snb", "hsw"] {
        for name in KERNELS {
            for mode in ["Roofline", "RooflinePorts", "ECM", "ECMData", "ECMCore"] {
                let mut r = AnalysisRequest::new(
                    fixture(&format!("kernels/{name}.c")),
                    fixture(&format!("machines/{arch}.yaml")),
                    mode.parse().unwrap(),
                )
                .ports(fixture(&format!("ports/{arch}/{name}.toml")));
                for (n, v) in in_memory_constants(name) {
                    r = r.constant(n, v);
                }
                for cores in [1, 2, 4] {
                    r.cores = cores;
                    let out = run(&r).unwrap_or_else(|e| panic!("{arch} {name} {mode}: {e}"));
                    assert!(out.text.contains("performance with"));
                }
            }
        }
    }
}
