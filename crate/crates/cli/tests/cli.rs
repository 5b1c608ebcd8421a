mod common;

use std::f64::consts::PI;

use common::{bytes, ok, Fixture};
use echotrace::audio::{convolve, AudioClip};
use echotrace::spatial::{ImpulseResponse, Layout};
use echotrace_cli::dataset::Manifest;
use echotrace_cli::job::Sidecar;

#[test]
fn channel_count_follows_microphone() {
    let f = Fixture::new();
    for (mic, n) in [("binaural", 2), ("ambisonics2", 9), ("5.1", 6)] {
        ok(&f.render("out", mic, mic, "1"));
        let clip = AudioClip::read_wav(f.path(&format!("out/{mic}.wav"))).unwrap();
        assert_eq!(clip.channel_count(), n, "{mic}");
        assert_eq!(clip.sampling_rate, 44_100);
        let meta = Sidecar::load(&f.path(&format!("out/{mic}.json"))).unwrap();
        assert_eq!(meta.labels.len(), n);
        assert_eq!(meta.samples, clip.len());
    }
    let meta = Sidecar::load(&f.path("out/ambisonics2.json")).unwrap();
    assert_eq!(meta.layout, Layout::Ambisonics { order: 2 });
}

#[test]
fn rerun_is_byte_identical() {
    let f = Fixture::new();
    ok(&f.render("a", "ir", "binaural", "1"));
    ok(&f.render("b", "ir", "binaural", "1"));
    assert_eq!(bytes(f.path("a/ir.wav")), bytes(f.path("b/ir.wav")));
    assert_eq!(bytes(f.path("a/ir.json")), bytes(f.path("b/ir.json")));

    ok(&f.run(&["render-ir", "--from-sidecar", "a/ir.json", "--out", "c", "--threads", "1"]));
    assert_eq!(bytes(f.path("a/ir.wav")), bytes(f.path("c/ir.wav")));
    assert_eq!(bytes(f.path("a/ir.json")), bytes(f.path("c/ir.json")));

    let o = f.run(&[
        "render-ir", "--scene", "room.obj", "--params", "params.json", "--source", "1,1,1.5", "--listener",
        "3.5,2.5,1.5", "--heading", "30", "--mic", "binaural", "--seed", "6", "--threads", "1", "--out", "d",
        "--name", "ir",
    ]);
    ok(&o);
    assert_ne!(bytes(f.path("a/ir.wav")), bytes(f.path("d/ir.wav")));
}

#[test]
fn job_file_and_flags() {
    let f = Fixture::new();
    std::fs::write(
        f.path("job.json"),
        r#"{"schema_version": 1, "scene": "room.obj", "params": "params.json", "source": [1, 1, 1.5],
            "listener": {"position": [3.5, 2.5, 1.5], "heading_deg": 30}, "microphone": {"type": "binaural"}, "seed": 5}"#,
    )
    .unwrap();
    ok(&f.run(&["render-ir", "--config", "job.json", "--out", "j", "--name", "ir", "--threads", "1"]));
    ok(&f.render("a", "ir", "binaural", "1"));
    assert_eq!(bytes(f.path("a/ir.wav")), bytes(f.path("j/ir.wav")));
}

#[test]
fn configuration_errors_exit_2() {
    let f = Fixture::new();
    std::fs::write(
        f.path("bad.json"),
        r#"{"schema_version": 1, "scene": "room.obj", "source": [1, 1, 1.5], "listner": {"position": [3, 2, 1.5]}}"#,
    )
    .unwrap();
    let o = f.run(&["render-ir", "--config", "bad.json", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("listner"));

    let o = f.run(&["render-ir", "--scene", "nowhere.obj", "--source", "1,1,1", "--listener", "2,2,1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.obj"));

    std::fs::write(f.path("p2.json"), r#"{"schema_version": 1, "num_source_rays": 10, "rays": 3}"#).unwrap();
    let o = f.run(&[
        "render-ir", "--scene", "room.obj", "--params", "p2.json", "--source", "1,1,1", "--listener", "2,2,1",
        "--out", "x",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = f.run(&["validate", "continuity", "--scene", "missing.obj"]);
    assert_eq!(o.status.code(), Some(2));
    let o = f.run(&["validate", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_report() {
    let f = Fixture::new();
    let fs = 44_100;
    // exp(-t/τ) pressure, τ = 0.1 s: RT60 = 3τ ln 10.
    let x: Vec<f64> = (0..fs).map(|i| (-(i as f64) / fs as f64 / 0.1).exp() * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    echotrace::audio::write_ir_wav(f.path("exp.wav"), &ImpulseResponse::mono(fs, x)).unwrap();
    let mut d = vec![0.0; 2000];
    d[100] = 0.5;
    echotrace::audio::write_ir_wav(f.path("direct.wav"), &ImpulseResponse::mono(fs, d)).unwrap();

    let o = f.run(&["metrics", "exp.wav", "direct.wav", "--edc-dir", "edc"]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rt = v["irs"][0]["rt60"]["seconds"].as_f64().unwrap();
    let want = 0.3 * 10f64.ln();
    assert!((rt / want - 1.0).abs() < 0.02, "{rt} vs {want}");
    assert_eq!(v["irs"][1]["drr"]["direct_only"], serde_json::Value::Bool(true));
    assert!(f.path("edc/exp.edc.csv").is_file());

    let o = f.run(&["metrics", "exp.wav", "--reference", "exp.wav", "--out", "r.json"]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&bytes(f.path("r.json"))).unwrap();
    assert_eq!(v["relative_rt60_error"]["median_percent"].as_f64(), Some(0.0));
}

#[test]
fn one_step_trajectory_equals_render_and_convolve() {
    let f = Fixture::new();
    let fs = 44_100;
    let x: Vec<f64> = (0..fs).map(|i| (2.0 * PI * 440.0 * i as f64 / fs as f64).sin() * 0.5).collect();
    AudioClip::mono(fs, x.clone()).write_wav(f.path("tone.wav")).unwrap();
    std::fs::write(f.path("walk.txt"), "0.5 3.5 2.5 1.5 30\n").unwrap();
    ok(&f.run(&[
        "render-trajectory", "--scene", "room.obj", "--params", "params.json", "--source", "1,1,1.5",
        "--trajectory", "walk.txt", "--audio", "tone.wav", "--seed", "5", "--threads", "1", "--out", "t",
        "--dump-steps",
    ]));
    ok(&f.render("a", "ir", "mono", "1"));
    let out = AudioClip::read_wav(f.path("t/trajectory.wav")).unwrap();
    let ir = AudioClip::read_wav(f.path("a/ir.wav")).unwrap();
    let ir = ImpulseResponse::mono(fs, ir.channels[0].clone());
    let full = convolve(&AudioClip::mono(fs, x), &ir).unwrap();
    let s0 = fs as usize / 2;
    let want = &full.channels[0][s0..s0 + out.len()];
    let peak = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = out.channels[0].iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 1e-5 * peak, "{err} vs peak {peak}");

    let steps: serde_json::Value = serde_json::from_slice(&bytes(f.path("t/trajectory.steps.json"))).unwrap();
    assert_eq!(steps.as_array().unwrap().len(), 1);
    ok(&f.run(&["render-trajectory", "--from-sidecar", "t/trajectory.json", "--out", "u", "--threads", "1"]));
    assert_eq!(bytes(f.path("t/trajectory.wav")), bytes(f.path("u/trajectory.wav")));
}

#[test]
fn dataset_manifest() {
    let f = Fixture::new();
    let args = ["gen-dataset", "--scene", "room.obj", "--params", "params.json", "--count", "6", "--seed", "9", "--threads", "1"];
    ok(&f.run(&[&args[..], &["--out", "ds1"]].concat()));
    ok(&f.run(&[&args[..], &["--out", "ds2"]].concat()));
    let text = bytes(f.path("ds1/manifest.json"));
    assert_eq!(text, bytes(f.path("ds2/manifest.json")));
    let m: Manifest = serde_json::from_slice(&text).unwrap();
    assert_eq!(m.records.len(), 6);
    for r in &m.records {
        assert!(r.distance > 0.0 && r.distance <= 5.0);
        assert!((0.0..2.0 * PI).contains(&r.theta));
        assert!((r.source[2] - 1.5).abs() < 1e-12 && (r.listener.position[2] - 1.5).abs() < 1e-12);
        // θ from the stored poses: rotate the offset into the listener frame.
        let h = r.listener.heading_deg.to_radians();
        let dx = r.source[0] - r.listener.position[0];
        let dy = r.source[1] - r.listener.position[1];
        let fwd = dx * h.cos() + dy * h.sin();
        let left = -dx * h.sin() + dy * h.cos();
        let theta = left.atan2(fwd).rem_euclid(2.0 * PI);
        let diff = (theta - r.theta).abs();
        assert!(diff.min(2.0 * PI - diff) < 1e-6, "{theta} vs {}", r.theta);
        assert!((dx.hypot(dy) - r.distance).abs() < 1e-9);
        assert!(f.path(&format!("ds1/{}", r.ir)).is_file());
    }
}

#[test]
fn validate_decay_passes() {
    let f = Fixture::new();
    let o = f.run(&["validate", "decay", "--json"]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["passed"] == serde_json::Value::Bool(true)));
}
