//! External adapters: one JSON request in, one annotated image set out.
//!
//! Subprocess adapters receive the request as a single newline-terminated
//! line on stdin and answer on stdout. HTTP adapters receive it as a POST
//! body. Responses are validated like recorded corpora.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::recorded::parse_sets;
use super::{GenerationRequest, ImageSetProvider};
use crate::domain::{AnnotatedImageSet, AxisSet};
use crate::error::{Error, ProviderError, Result};

pub const TIMEOUT_ENV: &str = "BIASENGINE_ADAPTER_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Timeout from the environment override if set, else `configured`, else
/// the default.
pub fn effective_timeout(configured: Option<Duration>) -> Result<Duration> {
    match std::env::var(TIMEOUT_ENV) {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Duration::from_millis)
            .map_err(|_| Error::config(format!("{TIMEOUT_ENV} must be milliseconds, got `{raw}`"))),
        Err(_) => Ok(configured.unwrap_or(DEFAULT_TIMEOUT)),
    }
}

/// Counting semaphore bounding concurrent calls to one endpoint.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(parallelism: usize) -> Self {
        Limiter { free: Mutex::new(parallelism.max(1)), released: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

fn parse_response(body: &str, axes: &AxisSet, source: &str) -> Result<AnnotatedImageSet> {
    let mut corpus = parse_sets(body, source, axes).map_err(|e| match e {
        Error::Schema { location, message } => {
            Error::Provider(ProviderError::Schema(format!("{location}: {message}")))
        }
        other => other,
    })?;
    if corpus.sets.len() != 1 {
        return Err(ProviderError::Schema(format!(
            "{source}: expected one image set, got {}",
            corpus.sets.len()
        ))
        .into());
    }
    Ok(corpus.sets.remove(0))
}

/// Runs a command per request.
#[derive(Debug)]
pub struct SubprocessAdapter {
    program: String,
    args: Vec<String>,
    timeout: Duration,
    axes: AxisSet,
    limiter: Limiter,
    working_dir: Option<std::path::PathBuf>,
}

impl SubprocessAdapter {
    pub fn new(command: &[String], axes: AxisSet, timeout: Duration, parallelism: usize) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::config("adapter command is empty"))?;
        Ok(SubprocessAdapter {
            program: program.clone(),
            args: args.to_vec(),
            timeout,
            axes,
            limiter: Limiter::new(parallelism),
            working_dir: None,
        })
    }

    /// Directory the command runs in; defaults to the caller's.
    pub fn with_working_dir(mut self, dir: impl Into<std::path::PathBuf>) -> Self {
        self.working_dir = Some(dir.into());
        self
    }

    fn run(&self, line: String) -> Result<String, ProviderError> {
        let mut cmd = Command::new(&self.program);
        if let Some(dir) = &self.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Transport(format!("cannot start `{}`: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        // a child that exits without reading stdin closes the pipe; that
        // surfaces through its exit status, not as a write failure here
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(line.as_bytes());
        });
        let out_reader = thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ProviderError::Timeout(self.timeout));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(ProviderError::Transport(e.to_string())),
            }
        };
        let _ = writer.join();
        let stdout = out_reader
            .join()
            .map_err(|_| ProviderError::Transport("stdout reader panicked".into()))?
            .map_err(|e| ProviderError::Schema(format!("adapter output is not UTF-8: {e}")))?;
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(ProviderError::Exit { code: status.code(), stderr: stderr.trim().to_string() });
        }
        Ok(stdout)
    }
}

impl ImageSetProvider for SubprocessAdapter {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        let mut line = serde_json::to_string(request).map_err(|e| Error::invalid(e.to_string()))?;
        line.push('\n');
        let body = {
            let _permit = self.limiter.acquire();
            self.run(line)?
        };
        parse_response(&body, &self.axes, &self.program)
    }
}

/// POSTs each request to a URL.
#[derive(Debug)]
pub struct HttpAdapter {
    url: String,
    timeout: Duration,
    axes: AxisSet,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl HttpAdapter {
    pub fn new(url: impl Into<String>, axes: AxisSet, timeout: Duration, parallelism: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpAdapter { url: url.into(), timeout, axes, agent, limiter: Limiter::new(parallelism) }
    }
}

impl ImageSetProvider for HttpAdapter {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        let body = {
            let _permit = self.limiter.acquire();
            let response = self.agent.post(&self.url).send_json(request).map_err(|e| match e {
                ureq::Error::StatusCode(code) => ProviderError::Http(code),
                ureq::Error::Timeout(_) => ProviderError::Timeout(self.timeout),
                other => ProviderError::Transport(other.to_string()),
            })?;
            response
                .into_body()
                .read_to_string()
                .map_err(|e| match e {
                    ureq::Error::Timeout(_) => ProviderError::Timeout(self.timeout),
                    other => ProviderError::Transport(other.to_string()),
                })?
        };
        parse_response(&body, &self.axes, &self.url)
    }
}
