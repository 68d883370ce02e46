//! Subprocess adapters: the sandboxed renderer and command-line model
//! clients. Commands are argv templates; `{source}`, `{output}`, `{workdir}`
//! and `{image}` are substituted per call. Children run in a fresh temporary
//! directory with a cleared environment (plus `PATH` and any names listed in
//! `pass_env`) under CPU, file-size and optional address-space limits.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::BackendError;
use crate::imaging::RasterImage;
use crate::metrics::{EmbedderBackend, OcrBackend, OcrResult};
use crate::synth::{
    CodeArtifact, LlmBackend, RenderError, RenderLanguage, RenderLimits, RenderOutput,
    RendererBackend, StructureGraph, TextRegion, REGIONS_FILE, STRUCTURE_FILE,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    pub argv: Vec<String>,
    #[serde(default)]
    pub pass_env: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Address-space cap for the child in MiB.
    #[serde(default)]
    pub memory_mb: Option<u64>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl CommandSpec {
    pub fn new<I, S>(argv: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            argv: argv.into_iter().map(Into::into).collect(),
            pass_env: Vec::new(),
            timeout_ms: default_timeout_ms(),
            memory_mb: None,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Finished {
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

#[derive(Debug)]
pub(crate) enum RunError {
    Spawn(String),
    Timeout,
}

fn substitute(arg: &str, vars: &[(&str, &Path)]) -> String {
    let mut out = arg.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), &value.to_string_lossy());
    }
    out
}

fn drain(mut r: impl Read + Send + 'static) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

#[cfg(unix)]
fn apply_limits(cmd: &mut Command, cpu_secs: u64, memory_mb: Option<u64>) {
    use std::os::unix::process::CommandExt;
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let set = |res, value: u64| {
                let lim = libc::rlimit {
                    rlim_cur: value as libc::rlim_t,
                    rlim_max: value as libc::rlim_t,
                };
                libc::setrlimit(res, &lim);
            };
            set(libc::RLIMIT_CPU, cpu_secs);
            set(libc::RLIMIT_FSIZE, 512 * 1024 * 1024);
            if let Some(mb) = memory_mb {
                set(libc::RLIMIT_AS, mb * 1024 * 1024);
            }
            libc::setsid();
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn apply_limits(_: &mut Command, _: u64, _: Option<u64>) {}

#[cfg(unix)]
fn kill_group(child: &mut std::process::Child) {
    // the child leads its own session, so this also reaches grandchildren
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_group(child: &mut std::process::Child) {
    let _ = child.kill();
}

pub(crate) fn run(
    spec: &CommandSpec,
    workdir: &Path,
    vars: &[(&str, &Path)],
    stdin: Option<&str>,
    timeout: Duration,
) -> Result<Finished, RunError> {
    let argv: Vec<String> = spec.argv.iter().map(|a| substitute(a, vars)).collect();
    let (prog, args) = argv
        .split_first()
        .ok_or_else(|| RunError::Spawn("empty command".into()))?;
    let mut cmd = Command::new(prog);
    cmd.args(args)
        .current_dir(workdir)
        .env_clear()
        .env("HOME", workdir)
        .env("TMPDIR", workdir)
        .env("MPLBACKEND", "Agg")
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Ok(path) = std::env::var("PATH") {
        cmd.env("PATH", path);
    }
    for name in &spec.pass_env {
        if let Ok(v) = std::env::var(name) {
            cmd.env(name, v);
        }
    }
    apply_limits(&mut cmd, timeout.as_secs() + 1, spec.memory_mb);

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| RunError::Spawn(format!("{prog}: {e}")))?;
    let out = drain(child.stdout.take().expect("piped"));
    let err = drain(child.stderr.take().expect("piped"));
    if let (Some(text), Some(mut pipe)) = (stdin, child.stdin.take()) {
        let text = text.to_string();
        std::thread::spawn(move || {
            let _ = pipe.write_all(text.as_bytes());
        });
    }
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            kill_group(&mut child);
            let _ = child.wait();
            return Err(RunError::Timeout);
        }
        Err(e) => {
            kill_group(&mut child);
            return Err(RunError::Spawn(e.to_string()));
        }
    };
    Ok(Finished {
        code: status.code(),
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        elapsed: start.elapsed(),
    })
}

fn read_sidecar<T: serde::de::DeserializeOwned>(dir: &Path, file: &str) -> Result<Option<T>, RenderError> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| RenderError::Sidecar {
        file: file.into(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map(Some).map_err(|e| RenderError::Sidecar {
        file: file.into(),
        message: e.to_string(),
    })
}

/// Runs generated code with a per-language interpreter command. The program
/// must write a PNG to `{output}` and may write the region and structure
/// sidecars into `{workdir}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SubprocessRenderer {
    pub commands: BTreeMap<RenderLanguage, CommandSpec>,
}

impl SubprocessRenderer {
    pub fn with_command(mut self, language: RenderLanguage, spec: CommandSpec) -> Self {
        self.commands.insert(language, spec);
        self
    }
}

impl RendererBackend for SubprocessRenderer {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn render(&self, artifact: &CodeArtifact, limits: &RenderLimits) -> Result<RenderOutput, RenderError> {
        let language = artifact.language();
        let spec = self
            .commands
            .get(&language)
            .ok_or_else(|| RenderError::NoRenderer(language.to_string()))?;
        let dir = tempfile::Builder::new()
            .prefix("cage-render-")
            .tempdir()
            .map_err(|e| RenderError::Sandbox(e.to_string()))?;
        let workdir = dir.path();
        let source: PathBuf = workdir.join(format!("diagram.{}", language.file_extension()));
        let output: PathBuf = workdir.join("output.png");
        std::fs::write(&source, artifact.source()).map_err(|e| RenderError::Sandbox(e.to_string()))?;
        let vars = [("source", source.as_path()), ("output", output.as_path()), ("workdir", workdir)];
        let timeout = Duration::from_millis(limits.timeout_ms);
        let done = match run(spec, workdir, &vars, None, timeout) {
            Ok(done) => done,
            Err(RunError::Timeout) => {
                return Err(RenderError::Timeout {
                    limit_ms: limits.timeout_ms,
                })
            }
            Err(RunError::Spawn(msg)) => return Err(RenderError::Sandbox(msg)),
        };
        if done.code != Some(0) {
            return Err(RenderError::NonZeroExit {
                code: done.code,
                stderr: done.stderr,
                stdout: done.stdout,
            });
        }
        if !output.exists() {
            return Err(RenderError::MissingOutput(output));
        }
        let image = RasterImage::read_png(&output).map_err(|e| RenderError::Decode {
            path: output.clone(),
            message: e.to_string(),
        })?;
        let regions: Vec<TextRegion> = read_sidecar(workdir, REGIONS_FILE)?.unwrap_or_default();
        let structure: Option<StructureGraph> = read_sidecar(workdir, STRUCTURE_FILE)?;
        Ok(RenderOutput {
            image,
            regions,
            structure,
            stdout: done.stdout,
            stderr: done.stderr,
            wall_time_ms: done.elapsed.as_millis() as u64,
        })
    }
}

fn map_run_error(backend: &str, spec: &CommandSpec, e: RunError) -> BackendError {
    match e {
        RunError::Timeout => BackendError::Timeout {
            backend: backend.into(),
            ms: spec.timeout_ms,
        },
        RunError::Spawn(msg) => BackendError::failed(backend, msg),
    }
}

fn checked(backend: &str, done: Finished) -> Result<String, BackendError> {
    if done.code != Some(0) {
        return Err(BackendError::failed(
            backend,
            format!("exit status {:?}: {}", done.code, done.stderr.trim()),
        ));
    }
    Ok(done.stdout)
}

fn scratch(backend: &str) -> Result<tempfile::TempDir, BackendError> {
    tempfile::Builder::new()
        .prefix("cage-backend-")
        .tempdir()
        .map_err(|e| BackendError::failed(backend, e.to_string()))
}

/// Sends the instruction on stdin, reads the program from stdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandLlm {
    pub name: String,
    pub spec: CommandSpec,
}

impl LlmBackend for CommandLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, instruction: &str) -> Result<String, BackendError> {
        let dir = scratch(&self.name)?;
        let timeout = Duration::from_millis(self.spec.timeout_ms);
        let done = run(&self.spec, dir.path(), &[("workdir", dir.path())], Some(instruction), timeout)
            .map_err(|e| map_run_error(&self.name, &self.spec, e))?;
        checked(&self.name, done)
    }
}

fn with_image_file<T>(
    backend: &str,
    spec: &CommandSpec,
    image: &RasterImage,
    parse: impl FnOnce(&str) -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let dir = scratch(backend)?;
    let path = dir.path().join("image.png");
    image
        .write_png(&path)
        .map_err(|e| BackendError::failed(backend, e.to_string()))?;
    let timeout = Duration::from_millis(spec.timeout_ms);
    let done = run(spec, dir.path(), &[("image", path.as_path()), ("workdir", dir.path())], None, timeout)
        .map_err(|e| map_run_error(backend, spec, e))?;
    parse(&checked(backend, done)?)
}

/// Runs with `{image}` set to a PNG; stdout is an [`OcrResult`] as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandOcr {
    pub name: String,
    pub spec: CommandSpec,
}

impl OcrBackend for CommandOcr {
    fn name(&self) -> &str {
        &self.name
    }

    fn recognize(&self, image: &RasterImage) -> Result<OcrResult, BackendError> {
        with_image_file(&self.name, &self.spec, image, |out| {
            serde_json::from_str(out).map_err(|e| BackendError::protocol(&self.name, e.to_string()))
        })
    }
}

/// Runs with `{image}` set to a PNG; stdout is a JSON array of numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandEmbedder {
    pub name: String,
    pub dimension: usize,
    pub spec: CommandSpec,
}

impl EmbedderBackend for CommandEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, image: &RasterImage) -> Result<Vec<f64>, BackendError> {
        with_image_file(&self.name, &self.spec, image, |out| {
            serde_json::from_str(out).map_err(|e| BackendError::protocol(&self.name, e.to_string()))
        })
    }
}
