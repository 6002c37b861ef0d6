//! Line-delimited JSON protocol to an external proof-checking REPL.
//!
//! The child process first prints a handshake line `{"ready": true}`. It then
//! answers each request line
//!
//! ```text
//! {"id": 7, "context": "...", "statement": "...", "proof": "..."}
//! ```
//!
//! with exactly one response line
//!
//! ```text
//! {"id": 7, "errors": [{"message": "...", "line": 3, "col": 2, "severity": "error"}],
//!  "states": [{"goals": ["..."], "solved": false}], "solved": false}
//! ```
//!
//! Messages with severity `warning`/`info` are dropped, except warnings about
//! `sorry`, which count as errors.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CheckRequest, ProofState, VerificationResult, VerifierBackend, VerifierMessage, TIMEOUT_MESSAGE};
use crate::error::VerifierError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub context: String,
    pub statement: String,
    pub proof: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub message: String,
    #[serde(default)]
    pub line: u32,
    #[serde(default)]
    pub col: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(default)]
    pub errors: Vec<WireMessage>,
    #[serde(default)]
    pub states: Vec<ProofState>,
    pub solved: bool,
}

#[derive(Deserialize)]
struct Handshake {
    ready: bool,
}

impl WireResponse {
    fn into_result(self, elapsed: Duration) -> VerificationResult {
        let errors: Vec<VerifierMessage> = self
            .errors
            .into_iter()
            .filter(|m| match m.severity.as_deref() {
                None | Some("error") => true,
                Some(_) => m.message.contains("sorry"),
            })
            .map(|m| VerifierMessage::new(m.message, m.line, m.col))
            .collect();
        VerificationResult {
            solved: self.solved && errors.is_empty(),
            errors,
            states: self.states,
            elapsed,
        }
    }

    fn from_result(id: u64, result: &VerificationResult) -> Self {
        WireResponse {
            id: Some(id),
            errors: result
                .errors
                .iter()
                .map(|e| WireMessage {
                    message: e.message.clone(),
                    line: e.line,
                    col: e.col,
                    severity: Some("error".into()),
                })
                .collect(),
            states: result.states.clone(),
            solved: result.solved,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    pub pool_size: usize,
    pub timeout: Duration,
}

impl ReplConfig {
    pub fn new(command: Vec<String>) -> Self {
        ReplConfig {
            command,
            pool_size: 1,
            timeout: Duration::from_secs(60),
        }
    }

    /// Splits a shell-style command line on whitespace.
    pub fn from_command_line(line: &str) -> Self {
        Self::new(line.split_whitespace().map(str::to_string).collect())
    }
}

struct ReplProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl ReplProcess {
    fn spawn(config: &ReplConfig) -> Result<Self, VerifierError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| VerifierError::BackendUnavailable("empty backend command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| VerifierError::BackendUnavailable(format!("failed to start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut proc = ReplProcess {
            child,
            stdin,
            lines: rx,
            next_id: 0,
        };
        let deadline = Instant::now() + config.timeout;
        let line = proc.read_line(deadline).map_err(|e| match e {
            VerifierError::Timeout(_) => VerifierError::BackendUnavailable("handshake timed out".into()),
            other => other,
        })?;
        match serde_json::from_str::<Handshake>(&line) {
            Ok(Handshake { ready: true }) => Ok(proc),
            _ => {
                proc.kill();
                Err(VerifierError::BackendUnavailable(format!("bad handshake: {line}")))
            }
        }
    }

    fn read_line(&mut self, deadline: Instant) -> Result<String, VerifierError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(VerifierError::BackendUnavailable(e.to_string())),
                Err(RecvTimeoutError::Timeout) => return Err(VerifierError::Timeout(left)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(VerifierError::BackendUnavailable("backend process exited".into()))
                }
            }
        }
    }

    fn roundtrip(&mut self, request: &CheckRequest, timeout: Duration) -> Result<VerificationResult, VerifierError> {
        let id = self.next_id;
        self.next_id += 1;
        let wire = WireRequest {
            id,
            context: request.context.clone(),
            statement: request.statement.clone(),
            proof: request.proof.clone(),
        };
        let started = Instant::now();
        let mut line = serde_json::to_string(&wire).map_err(|e| VerifierError::ProtocolError(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| VerifierError::BackendUnavailable(e.to_string()))?;
        let reply = self.read_line(started + timeout)?;
        let response: WireResponse = serde_json::from_str(&reply)
            .map_err(|e| VerifierError::ProtocolError(format!("{e}: {reply}")))?;
        if response.id.is_some_and(|r| r != id) {
            return Err(VerifierError::ProtocolError(format!(
                "response id {:?} does not match request {id}",
                response.id
            )));
        }
        Ok(response.into_result(started.elapsed()))
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ReplProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

struct PoolState {
    idle: Vec<ReplProcess>,
    live: usize,
}

/// Pool of REPL child processes, one in-flight request per process.
pub struct ReplBackend {
    config: ReplConfig,
    state: Mutex<PoolState>,
    freed: Condvar,
}

impl ReplBackend {
    pub fn new(config: ReplConfig) -> Self {
        ReplBackend {
            config,
            state: Mutex::new(PoolState {
                idle: Vec::new(),
                live: 0,
            }),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Result<ReplProcess, VerifierError> {
        let mut state = self.state.lock().expect("pool lock");
        loop {
            if let Some(p) = state.idle.pop() {
                return Ok(p);
            }
            if state.live < self.config.pool_size.max(1) {
                state.live += 1;
                drop(state);
                return ReplProcess::spawn(&self.config).inspect_err(|_| {
                    self.state.lock().expect("pool lock").live -= 1;
                    self.freed.notify_one();
                });
            }
            state = self.freed.wait(state).expect("pool lock");
        }
    }

    fn release(&self, process: Option<ReplProcess>) {
        let mut state = self.state.lock().expect("pool lock");
        match process {
            Some(p) => state.idle.push(p),
            None => state.live -= 1,
        }
        drop(state);
        self.freed.notify_one();
    }
}

impl VerifierBackend for ReplBackend {
    fn id(&self) -> &str {
        "repl"
    }

    fn check(&self, request: &CheckRequest) -> Result<VerificationResult, VerifierError> {
        let mut process = self.acquire()?;
        match process.roundtrip(request, self.config.timeout) {
            Ok(result) => {
                self.release(Some(process));
                Ok(result)
            }
            Err(VerifierError::Timeout(_)) => {
                log::warn!("verification timed out after {:?}; restarting backend", self.config.timeout);
                drop(process);
                self.release(None);
                let mut r = VerificationResult::failed(TIMEOUT_MESSAGE);
                r.elapsed = self.config.timeout;
                Ok(r)
            }
            Err(e) => {
                drop(process);
                self.release(None);
                Err(e)
            }
        }
    }
}

/// Serves the REPL protocol on `input`/`output` using `backend`.
pub fn serve<R: BufRead, W: Write>(backend: &dyn VerifierBackend, input: R, mut output: W) -> std::io::Result<()> {
    writeln!(output, "{}", serde_json::json!({ "ready": true }))?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<WireRequest>(&line) {
            Ok(req) => {
                let check = CheckRequest {
                    context: req.context,
                    statement: req.statement,
                    proof: req.proof,
                };
                match backend.check(&check) {
                    Ok(result) => WireResponse::from_result(req.id, &result),
                    Err(e) => WireResponse::from_result(req.id, &VerificationResult::failed(e.to_string())),
                }
            }
            Err(e) => WireResponse::from_result(0, &VerificationResult::failed(format!("malformed request: {e}"))),
        };
        writeln!(output, "{}", serde_json::to_string(&response).map_err(std::io::Error::other)?)?;
        output.flush()?;
    }
    Ok(())
}
