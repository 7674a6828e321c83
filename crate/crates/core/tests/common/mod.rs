#![allow(dead_code)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    // also included from other crates' tests, so anchor on this crate's layout
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures")).to_path_buf()
}

pub fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

/// A throwaway fake docker daemon: a wrapper script that points the fake
/// CLI at a private state directory.
pub struct FakeDocker {
    pub dir: TempDir,
    pub bin: PathBuf,
}

impl FakeDocker {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let state = dir.path().join("state");
        fs::create_dir_all(&state).unwrap();
        let bin = dir.path().join("docker");
        let script = format!(
            "#!/usr/bin/env bash\nFAKE_DOCKER_STATE='{}' exec bash '{}' \"$@\"\n",
            state.display(),
            fixtures().join("fake-docker.sh").display()
        );
        fs::write(&bin, script).unwrap();
        fs::set_permissions(&bin, fs::Permissions::from_mode(0o755)).unwrap();
        FakeDocker { dir, bin }
    }

    pub fn state(&self) -> PathBuf {
        self.dir.path().join("state")
    }

    /// Registers an image that was present before the harness ran.
    pub fn seed_image(&self, tag: &str) {
        let dir = self.state().join("images").join(tag.replace(['/', ':'], "_"));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("tag"), format!("{tag}\n")).unwrap();
    }

    pub fn stop_daemon(&self) {
        fs::write(self.state().join("down"), "").unwrap();
    }

    pub fn calls(&self) -> String {
        fs::read_to_string(self.state().join("calls.log")).unwrap_or_default()
    }
}

/// Copies the named stub systems into a fresh systems directory.
pub fn systems_dir(stubs: &[&str]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for s in stubs {
        let from = fixtures().join("stubs").join(s);
        let to = dir.path().join(s);
        fs::create_dir_all(&to).unwrap();
        for e in fs::read_dir(from).unwrap() {
            let e = e.unwrap();
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
    dir
}
