#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echotrace::scene::primitives;

pub const BIN: &str = env!("CARGO_BIN_EXE_echotrace");

/// Temporary directory holding a 5×4×3 m room and a cheap parameter file.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("room.obj"), primitives::shoebox(5.0, 4.0, 3.0).to_obj()).unwrap();
        std::fs::write(
            dir.path().join("params.json"),
            r#"{"schema_version": 1, "num_source_rays": 3000, "num_listener_rays": 3000, "max_ir_seconds": 0.3}"#,
        )
        .unwrap();
        Fixture { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// `echotrace <args>` with the fixture as working directory.
    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN).args(args).current_dir(self.dir.path()).env_remove("ECHOTRACE_THREADS").output().unwrap()
    }

    /// Renders an IR named `name` into `out`.
    pub fn render(&self, out: &str, name: &str, mic: &str, threads: &str) -> Output {
        self.run(&[
            "render-ir", "--scene", "room.obj", "--params", "params.json", "--source", "1,1,1.5", "--listener",
            "3.5,2.5,1.5", "--heading", "30", "--mic", mic, "--seed", "5", "--threads", threads, "--out", out,
            "--name", name,
        ])
    }
}

pub fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

pub fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}
