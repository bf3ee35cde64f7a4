// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn qctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qctl")).args(args).output().expect("qctl runs")
}

fn ok(args: &[&str]) -> Output {
    let o = qctl(args);
    assert!(o.status.success(), "qctl {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

#[test]
fn assemble_writes_an_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tone.qcp");
    ok(&["assemble", s(&data("tone.qasm")), s(&out)]);
    assert!(std::fs::metadata(&out).unwrap().len() > 16);
    assert!(dir.path().join("tone.qcp.meta.json").exists());
}

#[test]
fn syntax_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = qctl(&["assemble", s(&data("bad.qasm")), s(&dir.path().join("bad.qcp"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") || err.contains(":3"), "{err}");
    assert!(!dir.path().join("bad.qcp").exists());
}

#[test]
fn text_binary_text_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/program.qasm");
    let a = dir.path().join("a.qcp");
    let b = dir.path().join("b.qcp");
    let text_a = dir.path().join("a.qasm");
    let text_b = dir.path().join("b.qasm");
    ok(&["assemble", s(&golden), s(&a)]);
    ok(&["disasm", s(&a), "-o", s(&text_a)]);
    ok(&["assemble", s(&text_a), s(&b)]);
    ok(&["disasm", s(&b), "-o", s(&text_b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (ta, tb) = (std::fs::read_to_string(&text_a).unwrap(), std::fs::read_to_string(&text_b).unwrap());
    assert_eq!(body(&ta), body(&tb));
    let frozen = std::fs::read(golden.with_extension("qcp")).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), frozen);
}

#[test]
fn waveform_dump_carries_the_programmed_tone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&["run", s(&data("tone.qasm")), "--out-dir", s(&out)]);
    let csv = std::fs::read_to_string(out.join("waveform.csv")).unwrap();
    let mut rows = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next(), Some("time_ns,ch0_i,ch0_q"));
    let samples: Vec<Complex<f64>> = rows
        .map(|r| {
            let v: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
            Complex::new(v[1], v[2])
        })
        .collect();
    let n = 8192;
    let mut x = samples[5..5 + n].to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut x);
    let peak = (0..n).max_by(|&a, &b| x[a].norm().total_cmp(&x[b].norm())).unwrap();
    // 62.5 MHz at 1 GS/s.
    assert_eq!(peak, n / 16);
}

#[test]
fn thousand_shot_readout_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&[
        "run",
        s(&data("readout.qasm")),
        "--config",
        s(&data("qubit_run.json")),
        "--shots",
        "1000",
        "--seed",
        "5",
        "--out-dir",
        s(&out),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let st = &stats["statistics"];
    assert_eq!(st["shots"], 1000);
    let bit0 = &st["bits"][0];
    assert_eq!(bit0["bit"], 0);
    assert_eq!(bit0["count0"].as_u64().unwrap() + bit0["count1"].as_u64().unwrap(), 1000);
    let mean = bit0["mean"].as_f64().unwrap();
    assert!((mean - 0.5).abs() < 0.1, "{mean}");
    assert!(out.join("capture.qrc").exists());
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "run",
            s(&data("readout.qasm")),
            "--config",
            s(&data("qubit_run.json")),
            "--shots",
            "200",
            "--seed",
            seed,
            "--out-dir",
            s(&out),
        ]);
        ["waveform.csv", "stats.json", "capture.qrc"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = run("9", "a");
    let b = run("9", "b");
    let c = run("10", "c");
    assert_eq!(a, b);
    assert_ne!(a[2], c[2]);
}

#[test]
fn ideal_experiment_runs_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&["experiment", "rabi_linecut", "--mode", "ideal", "--out-dir", s(&out)]);
    assert!(out.join("rabi_linecut.csv").exists());
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("rabi_linecut_fit.json")).unwrap()).unwrap();
    assert!(fit.to_string().contains("params"), "{fit}");
}

#[test]
fn ensemble_merges_only_when_aligned() {
    let dir = tempfile::tempdir().unwrap();
    for (k, ch) in [(0, 0), (1, 7), (2, 15)] {
        let text = format!("ch{ch}: STF ftw=268435456 d=1 off\nch{ch}: WAIT {} off\nch{ch}: STA a=0.4 d=30 on\n", 5 + 3 * k);
        std::fs::write(dir.path().join(format!("u{k}.qasm")), text).unwrap();
    }
    let write_cfg = |skews: [i64; 3]| {
        let units: Vec<_> = skews
            .iter()
            .enumerate()
            .map(|(k, sk)| {
                serde_json::json!({"unit_id": k, "role": if k == 0 { "conductor" } else { "performer" }, "clock_skew_ps": sk, "program": format!("u{k}.qasm")})
            })
            .collect();
        let p = dir.path().join("ensemble.json");
        std::fs::write(&p, serde_json::json!({"units": units}).to_string()).unwrap();
        p
    };
    let cfg = write_cfg([0, 0, 0]);
    let out = dir.path().join("aligned");
    ok(&["ensemble", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert!(out.join("merged.csv").exists());
    let timeline: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("timeline.json")).unwrap()).unwrap();
    assert_eq!(timeline["units"].as_array().unwrap().len(), 3);

    let cfg = write_cfg([0, 700, -300]);
    let skewed = dir.path().join("skewed");
    let o = ok(&["ensemble", "--config", s(&cfg), "--out-dir", s(&skewed)]);
    assert!(!skewed.join("merged.csv").exists());
    let err = String::from_utf8_lossy(&o.stderr);
    // Unit k starts its pulse 3k cycles after the Conductor, plus its skew.
    assert!(err.contains("\"1\": 15700") && err.contains("\"2\": 29700"), "{err}");
    let fixed = dir.path().join("fixed");
    ok(&["ensemble", "--config", s(&cfg), "--deskew", "--out-dir", s(&fixed)]);
    let merged = |d: &Path| body(&std::fs::read_to_string(d.join("merged.csv")).unwrap());
    assert_eq!(merged(&fixed), merged(&out));
}

#[test]
fn binary_and_csv_dumps_agree() {
    let dir = tempfile::tempdir().unwrap();
    let run = |format: &str| {
        let out = dir.path().join(format);
        ok(&[
            "run",
            s(&data("sync.qasm")),
            "--config",
            s(&data("run.json")),
            "--format",
            format,
            "--out-dir",
            s(&out),
        ]);
        out
    };
    let csv_dir = run("csv");
    let bin_dir = run("binary");
    let (_, frames) = qctl_core::exec::read_binary_trace(&std::fs::read(bin_dir.join("waveform.qct")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(csv_dir.join("waveform.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|r| r.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5 * frames.len());
    for (n, row) in rows.iter().enumerate() {
        let f = &frames[n / 5];
        assert_eq!(f.cycle, (n / 5) as u64);
        let code = |c: usize, q: bool| {
            let (i, qq) = f.dac[c][n % 5];
            (if q { qq } else { i }) as f64 / 32768.0
        };
        assert_eq!(row[0], n as f64);
        assert_eq!(&row[1..], &[code(0, false), code(0, true), code(3, false), code(3, true), code(20, false)]);
    }

    let events: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(csv_dir.join("waveform_events.json")).unwrap()).unwrap();
    let release = events["events"].as_array().unwrap().iter().find(|e| e["kind"] == "sync_release").unwrap();
    assert_eq!(release["cycle"], 50);
}
