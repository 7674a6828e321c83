//! Builds and runs dockerized systems under the data/predictions contract.
//!
//! Each system directory holds a `Dockerfile`. For every run the harness
//! creates a fresh staging directory containing only the source side of the
//! test set (`source` for MT, `images/` for OCR), mounts it at `/data` and
//! expects the container to leave its output at `/data/predictions`.
//!
//! Docker is driven through its command-line client. The binary defaults to
//! `docker` and can be overridden with `SYSRANK_DOCKER`; the usual
//! `DOCKER_HOST` variable selects the daemon.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::Task;

pub const DOCKER_ENV: &str = "SYSRANK_DOCKER";
pub const MANIFEST_FILE: &str = "times.json";
pub const PREDICTIONS_NAME: &str = "predictions";
const MOUNT_POINT: &str = "/data";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("docker is unavailable: {0}")]
    DockerUnavailable(String),
    #[error("no dockerized systems found in {0}")]
    NoSystems(PathBuf),
    #[error("no systems to run")]
    NoEntries,
    #[error("baseline {0:?} is not among the discovered systems")]
    UnknownBaseline(String),
    #[error("invalid system name {0:?} (allowed: letters, digits, '.', '_' and '-')")]
    InvalidName(String),
    #[error("systems {0:?} and {1:?} map to the same image tag")]
    NameCollision(String, String),
    #[error("{path} has no Dockerfile")]
    MissingDockerfile { path: PathBuf },
    #[error("building {system} failed:\n{log}")]
    Build { system: String, log: String },
    #[error("{system} exceeded the {seconds} s timeout")]
    Timeout { system: String, seconds: f64 },
    #[error("{system} exited with status {code}")]
    NonZeroExit { system: String, code: i32 },
    #[error("{system} produced no {PREDICTIONS_NAME} {kind}")]
    MissingPredictions { system: String, kind: &'static str },
    #[error("`docker {command}` failed: {detail}")]
    Docker { command: String, detail: String },
    #[error("malformed run manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl RunnerError {
    /// Whether the error concerns one system only, so a batch run can go on.
    pub fn is_per_system(&self) -> bool {
        matches!(
            self,
            RunnerError::Build { .. }
                | RunnerError::Timeout { .. }
                | RunnerError::NonZeroExit { .. }
                | RunnerError::MissingPredictions { .. }
                | RunnerError::Docker { .. }
        )
    }
}

type Result<T> = std::result::Result<T, RunnerError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunnerConfig {
    pub docker: PathBuf,
    pub out_dir: PathBuf,
    pub timeout: Duration,
    /// Leave container networking enabled.
    pub network: bool,
    pub namespace: String,
}

impl RunnerConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        let docker = std::env::var_os(DOCKER_ENV)
            .filter(|v| !v.is_empty())
            .map_or_else(|| PathBuf::from("docker"), PathBuf::from);
        RunnerConfig {
            docker,
            out_dir: out_dir.into(),
            timeout: Duration::from_secs(3600),
            network: false,
            namespace: "sysrank".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemEntry {
    pub name: String,
    pub context_dir: PathBuf,
    pub is_baseline: bool,
}

impl SystemEntry {
    pub fn new(name: impl Into<String>, context_dir: impl Into<PathBuf>) -> Self {
        SystemEntry {
            name: name.into(),
            context_dir: context_dir.into(),
            is_baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system_name: String,
    pub is_baseline: bool,
    pub wall_time_seconds: f64,
    pub predictions_path: PathBuf,
    pub exit_status: i32,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub is_baseline: bool,
    pub wall_time_seconds: Option<f64>,
    pub exit_status: i32,
    pub error: Option<String>,
}

/// `<out>/times.json`: per-system timing and status of a batch run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: Option<Task>,
    pub systems: BTreeMap<String, ManifestEntry>,
}

impl RunManifest {
    pub fn from_records(task: Task, records: &[RunRecord]) -> Self {
        let systems = records
            .iter()
            .map(|r| {
                let entry = ManifestEntry {
                    is_baseline: r.is_baseline,
                    wall_time_seconds: r.succeeded().then_some(r.wall_time_seconds),
                    exit_status: r.exit_status,
                    error: r.error.clone(),
                };
                (r.system_name.clone(), entry)
            })
            .collect();
        RunManifest {
            task: Some(task),
            systems,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(io_err(path))
    }
}

fn has_dockerfile(dir: &Path) -> bool {
    fs::read_dir(dir)
        .map(|entries| {
            entries.flatten().any(|e| {
                e.file_name().eq_ignore_ascii_case("dockerfile") && e.path().is_file()
            })
        })
        .unwrap_or(false)
}

/// One entry per subdirectory of `systems_dir` that contains a Dockerfile,
/// sorted by name.
pub fn discover_systems(systems_dir: &Path, baselines: &[String]) -> Result<Vec<SystemEntry>> {
    let mut entries = Vec::new();
    for e in fs::read_dir(systems_dir).map_err(io_err(systems_dir))? {
        let e = e.map_err(io_err(systems_dir))?;
        let path = e.path();
        if path.is_dir() && has_dockerfile(&path) {
            let name = e.file_name().to_string_lossy().into_owned();
            entries.push(SystemEntry::new(name, path));
        }
    }
    if entries.is_empty() {
        return Err(RunnerError::NoSystems(systems_dir.to_path_buf()));
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    for b in baselines {
        let entry = entries
            .iter_mut()
            .find(|e| &e.name == b)
            .ok_or_else(|| RunnerError::UnknownBaseline(b.clone()))?;
        entry.is_baseline = true;
    }
    Ok(entries)
}

/// Source side of a test set to stage for each container.
#[derive(Debug, Clone)]
pub struct StagedInput {
    pub task: Task,
    /// MT: source text/XML file. OCR: directory of images.
    pub path: PathBuf,
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to).map_err(io_err(to))?;
    for e in fs::read_dir(from).map_err(io_err(from))? {
        let e = e.map_err(io_err(from))?;
        let target = to.join(e.file_name());
        if e.path().is_dir() {
            copy_dir(&e.path(), &target)?;
        } else {
            fs::copy(e.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}

fn remove_path(path: &Path) -> Result<()> {
    let res = if path.is_dir() {
        fs::remove_dir_all(path)
    } else if path.exists() {
        fs::remove_file(path)
    } else {
        return Ok(());
    };
    res.map_err(io_err(path))
}

fn tail(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(40)..].join("\n")
}

pub struct Runner {
    config: RunnerConfig,
}

impl Runner {
    pub fn new(config: RunnerConfig) -> Self {
        Runner { config }
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    fn docker(&self) -> Command {
        Command::new(&self.config.docker)
    }

    fn docker_output(&self, args: &[&str]) -> Result<String> {
        let out = self.docker().args(args).stdin(Stdio::null()).output().map_err(|e| {
            RunnerError::DockerUnavailable(format!("{}: {e}", self.config.docker.display()))
        })?;
        if !out.status.success() {
            return Err(RunnerError::Docker {
                command: args.join(" "),
                detail: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    /// Fails with [`RunnerError::DockerUnavailable`] unless the daemon answers.
    pub fn check_daemon(&self) -> Result<()> {
        match self.docker_output(&["version", "--format", "{{.Server.Version}}"]) {
            Ok(_) => Ok(()),
            Err(RunnerError::Docker { detail, .. }) => Err(RunnerError::DockerUnavailable(detail)),
            Err(e) => Err(e),
        }
    }

    pub fn image_tag(&self, name: &str) -> Result<String> {
        let valid = !name.is_empty()
            && !name.starts_with(['.', '-'])
            && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
        if !valid {
            return Err(RunnerError::InvalidName(name.to_string()));
        }
        Ok(format!("{}/{}", self.config.namespace, name.to_ascii_lowercase()))
    }

    pub fn log_path(&self, system: &str) -> PathBuf {
        self.config.out_dir.join("logs").join(format!("{system}.log"))
    }

    pub fn predictions_dir(&self, system: &str) -> PathBuf {
        self.config.out_dir.join(PREDICTIONS_NAME).join(system)
    }

    fn staging_root(&self) -> PathBuf {
        self.config.out_dir.join("staging")
    }

    fn open_log(&self, system: &str, truncate: bool) -> Result<File> {
        let path = self.log_path(system);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        OpenOptions::new()
            .create(true)
            .write(true)
            .append(!truncate)
            .truncate(truncate)
            .open(&path)
            .map_err(io_err(&path))
    }

    fn logged_status(&self, mut cmd: Command, system: &str) -> Result<(ExitStatus, File)> {
        let log = self.open_log(system, false)?;
        let path = self.log_path(system);
        let err = log.try_clone().map_err(io_err(&path))?;
        let status = cmd
            .stdin(Stdio::null())
            .stdout(log.try_clone().map_err(io_err(&path))?)
            .stderr(err)
            .status()
            .map_err(|e| RunnerError::DockerUnavailable(format!("{}: {e}", self.config.docker.display())))?;
        Ok((status, log))
    }

    pub fn build_image(&self, entry: &SystemEntry) -> Result<String> {
        let tag = self.image_tag(&entry.name)?;
        if !has_dockerfile(&entry.context_dir) {
            return Err(RunnerError::MissingDockerfile {
                path: entry.context_dir.clone(),
            });
        }
        let mut log = self.open_log(&entry.name, false)?;
        let _ = writeln!(log, "$ docker build -t {tag} {}", entry.context_dir.display());
        drop(log);
        let mut cmd = self.docker();
        cmd.arg("build").arg("-t").arg(&tag).arg(&entry.context_dir);
        let (status, _) = self.logged_status(cmd, &entry.name)?;
        if !status.success() {
            let text = fs::read_to_string(self.log_path(&entry.name)).unwrap_or_default();
            return Err(RunnerError::Build {
                system: entry.name.clone(),
                log: tail(&text),
            });
        }
        info!("built {tag}");
        Ok(tag)
    }

    fn stage(&self, system: &str, input: &StagedInput) -> Result<PathBuf> {
        let dir = self.staging_root().join(system);
        remove_path(&dir)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        match input.task {
            Task::Mt => {
                let target = dir.join("source");
                fs::copy(&input.path, &target).map_err(io_err(&input.path))?;
            }
            Task::Ocr => copy_dir(&input.path, &dir.join("images"))?,
        }
        fs::canonicalize(&dir).map_err(io_err(&dir))
    }

    fn remove_container(&self, id: &str) {
        if let Err(e) = self.docker_output(&["rm", "-f", id]) {
            warn!("could not remove container {id}: {e}");
        }
    }

    /// Runs one built image against `input`; the clock covers `docker start`
    /// until the container exits.
    pub fn run_system(&self, system: &str, image_tag: &str, input: &StagedInput) -> Result<RunRecord> {
        let staging = self.stage(system, input)?;
        let mount = format!("{}:{MOUNT_POINT}", staging.display());
        let container_name = format!("{}-{}-{}", self.config.namespace, system.to_ascii_lowercase(), std::process::id());
        let mut args = vec!["create", "--name", &container_name];
        if !self.config.network {
            args.extend(["--network", "none"]);
        }
        args.extend(["-v", &mount, image_tag]);
        let id = self.docker_output(&args)?.trim().to_string();

        let log = self.open_log(system, false)?;
        let log_path = self.log_path(system);
        let mut child = self
            .docker()
            .args(["start", "-a", &id])
            .stdin(Stdio::null())
            .stdout(log.try_clone().map_err(io_err(&log_path))?)
            .stderr(log)
            .spawn()
            .map_err(|e| RunnerError::DockerUnavailable(format!("{}: {e}", self.config.docker.display())))?;
        let started = Instant::now();
        let waited = child.wait_timeout(self.config.timeout).map_err(io_err(&log_path))?;
        let wall_time = started.elapsed().as_secs_f64();

        let status = match waited {
            Some(status) => status,
            None => {
                let _ = self.docker_output(&["kill", &id]);
                let _ = child.kill();
                let _ = child.wait();
                self.remove_container(&id);
                return Err(RunnerError::Timeout {
                    system: system.to_string(),
                    seconds: self.config.timeout.as_secs_f64(),
                });
            }
        };
        self.remove_container(&id);

        let code = status.code().unwrap_or(-1);
        if !status.success() {
            return Err(RunnerError::NonZeroExit {
                system: system.to_string(),
                code,
            });
        }

        let produced = staging.join(PREDICTIONS_NAME);
        let (ok, kind) = match input.task {
            Task::Mt => (produced.is_file(), "file"),
            Task::Ocr => (produced.is_dir(), "directory"),
        };
        if !ok {
            return Err(RunnerError::MissingPredictions {
                system: system.to_string(),
                kind,
            });
        }
        let target_dir = self.predictions_dir(system);
        remove_path(&target_dir)?;
        fs::create_dir_all(&target_dir).map_err(io_err(&target_dir))?;
        let target = target_dir.join(PREDICTIONS_NAME);
        match input.task {
            Task::Mt => {
                fs::copy(&produced, &target).map_err(io_err(&target))?;
            }
            Task::Ocr => copy_dir(&produced, &target)?,
        }
        if let Err(e) = remove_path(&staging) {
            warn!("could not remove staging directory: {e}");
        }
        Ok(RunRecord {
            system_name: system.to_string(),
            is_baseline: false,
            wall_time_seconds: wall_time,
            predictions_path: target,
            exit_status: code,
            error: None,
        })
    }

    fn check_names(entries: &[SystemEntry]) -> Result<()> {
        let mut seen: HashMap<String, &str> = HashMap::new();
        for e in entries {
            if let Some(prev) = seen.insert(e.name.to_ascii_lowercase(), &e.name) {
                return Err(RunnerError::NameCollision(prev.to_string(), e.name.clone()));
            }
        }
        Ok(())
    }

    /// Builds and runs every entry, one at a time in name order, then writes
    /// the run manifest. Failures of individual systems are recorded and the
    /// batch goes on; the built image tags are returned for [`Runner::cleanup`].
    pub fn run_all(&self, entries: &[SystemEntry], input: &StagedInput) -> Result<(Vec<RunRecord>, Vec<String>)> {
        if entries.is_empty() {
            return Err(RunnerError::NoEntries);
        }
        Self::check_names(entries)?;
        for e in entries {
            self.image_tag(&e.name)?;
        }
        self.check_daemon()?;
        fs::create_dir_all(&self.config.out_dir).map_err(io_err(&self.config.out_dir))?;

        let mut sorted: Vec<&SystemEntry> = entries.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));

        let mut records = Vec::with_capacity(sorted.len());
        let mut tags = Vec::new();
        for entry in sorted {
            self.open_log(&entry.name, true)?;
            remove_path(&self.predictions_dir(&entry.name))?;
            let outcome = self.build_image(entry).and_then(|tag| {
                tags.push(tag.clone());
                info!("running {}", entry.name);
                self.run_system(&entry.name, &tag, input)
            });
            let record = match outcome {
                Ok(mut r) => {
                    r.is_baseline = entry.is_baseline;
                    info!("{} finished in {:.2} s", entry.name, r.wall_time_seconds);
                    r
                }
                Err(e) if e.is_per_system() => {
                    warn!("{}: {e}", entry.name);
                    let exit_status = match &e {
                        RunnerError::NonZeroExit { code, .. } => *code,
                        _ => -1,
                    };
                    RunRecord {
                        system_name: entry.name.clone(),
                        is_baseline: entry.is_baseline,
                        wall_time_seconds: 0.0,
                        predictions_path: self.predictions_dir(&entry.name).join(PREDICTIONS_NAME),
                        exit_status,
                        error: Some(e.to_string()),
                    }
                }
                Err(e) => return Err(e),
            };
            records.push(record);
        }
        let _ = fs::remove_dir(self.staging_root());
        RunManifest::from_records(input.task, &records).write(&self.config.out_dir.join(MANIFEST_FILE))?;
        Ok((records, tags))
    }

    /// Removes the given images and any leftover staging directories.
    /// Missing images are ignored; other failures come back as warnings.
    pub fn cleanup(&self, image_tags: &[String]) -> Vec<String> {
        let mut warnings = Vec::new();
        for tag in image_tags {
            match self.docker_output(&["rmi", "-f", tag]) {
                Ok(_) => info!("removed {tag}"),
                Err(RunnerError::Docker { detail, .. }) if detail.contains("No such image") => {}
                Err(e) => warnings.push(format!("{tag}: {e}")),
            }
        }
        let staging = self.staging_root();
        if staging.exists() {
            if let Err(e) = fs::remove_dir_all(&staging) {
                warnings.push(format!("{}: {e}", staging.display()));
            }
        }
        for w in &warnings {
            warn!("cleanup: {w}");
        }
        warnings
    }

    /// `repository:tag` of every image known to the daemon.
    pub fn list_images(&self) -> Result<BTreeSet<String>> {
        let out = self.docker_output(&["images", "--format", "{{.Repository}}:{{.Tag}}"])?;
        Ok(out.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
    }
}
