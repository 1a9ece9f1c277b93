//! Subprocess-backed CAS session.
//!
//! The driver writes one input line at a time and waits for the backend's
//! prompt before sending the next. The session counts as ready when the
//! prompt marker sits at the start of a line with nothing after it and the
//! stream stays quiet for a short window; the marker can also appear inside
//! echoed input, so line anchoring plus quiescence is what disambiguates.
//!
//! Echo handling: backends in the Maple family echo input lines prefixed by
//! the prompt. Captured lines that match the next expected input line after
//! removing prompt prefixes are dropped, as are bare prompt lines, so the
//! agent only ever sees genuine output.

use std::io::{Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::{
    classify_output, split_statements, BackendDescriptor, CasSession, OutputBlock, OutputKind,
    ReplError, StatementResult,
};

const QUIESCENCE: Duration = Duration::from_millis(50);
const POLL_STEP: Duration = Duration::from_millis(200);

pub struct Session {
    descriptor: BackendDescriptor,
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<Vec<u8>>,
    dead: bool,
    banner: Vec<OutputBlock>,
}

enum WaitOutcome {
    Ready(Vec<u8>),
    Died(Vec<u8>),
    TimedOut,
}

impl Session {
    /// Launch the backend, swallow its banner, and run the init statements.
    pub fn start(descriptor: BackendDescriptor) -> Result<Self, ReplError> {
        if descriptor.launch_command.is_empty() {
            return Err(ReplError::LaunchFailed("empty launch command".to_string()));
        }
        if descriptor.prompt_marker.is_empty() {
            return Err(ReplError::LaunchFailed("prompt marker must be non-empty".to_string()));
        }

        let mut child = Command::new(&descriptor.launch_command[0])
            .args(&descriptor.launch_command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                ReplError::LaunchFailed(format!("{}: {e}", descriptor.launch_command[0]))
            })?;

        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let stderr = child.stderr.take().expect("stderr piped");

        // stderr is merged into the same stream; error/warning prefixes tag it.
        let (tx, rx) = mpsc::channel();
        spawn_reader(stdout, tx.clone());
        spawn_reader(stderr, tx);

        let mut session = Session {
            descriptor,
            child,
            stdin,
            rx,
            dead: false,
            banner: Vec::new(),
        };

        let timeout = session.descriptor.statement_timeout;
        match session.wait_for_prompt(Instant::now() + timeout) {
            WaitOutcome::Ready(bytes) => {
                let text = to_text(&bytes);
                if !text.is_empty() {
                    session.banner = vec![OutputBlock { kind: OutputKind::Banner, text }];
                }
            }
            WaitOutcome::Died(bytes) => {
                session.dead = true;
                return Err(ReplError::LaunchFailed(format!(
                    "backend exited before first prompt: {}",
                    to_text(&bytes)
                )));
            }
            WaitOutcome::TimedOut => {
                session.shutdown();
                return Err(ReplError::LaunchFailed(format!(
                    "no prompt within {timeout:?}"
                )));
            }
        }

        session.run_init()?;
        Ok(session)
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    /// Startup text printed before the first prompt.
    pub fn banner(&self) -> &[OutputBlock] {
        &self.banner
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    fn run_init(&mut self) -> Result<(), ReplError> {
        for stmt in self.descriptor.init_statements.clone() {
            let (text, _) = self.send_statement(&stmt)?;
            let blocks = classify_output(
                &text,
                &self.descriptor.warning_prefix,
                &self.descriptor.error_prefix,
            );
            if blocks.iter().any(|b| b.kind == OutputKind::Error) {
                self.shutdown();
                return Err(ReplError::InitFailed(format!("{stmt:?} -> {text}")));
            }
        }
        Ok(())
    }

    /// Send one statement line by line and capture everything the backend
    /// prints until the next true prompt.
    fn send_statement(&mut self, statement: &str) -> Result<(String, Duration), ReplError> {
        let started = Instant::now();
        let deadline = started + self.descriptor.statement_timeout;
        let mut captured: Vec<String> = Vec::new();

        for line in statement.split('\n') {
            if let Err(e) = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()) {
                log::debug!("backend write failed: {e}");
                self.shutdown();
                return Err(ReplError::SessionDead);
            }
            match self.wait_for_prompt(deadline) {
                WaitOutcome::Ready(bytes) => {
                    let text = to_text(&bytes);
                    captured.extend(self.strip_echoes(&text, line));
                }
                WaitOutcome::Died(_) => {
                    self.shutdown();
                    return Err(ReplError::SessionDead);
                }
                WaitOutcome::TimedOut => {
                    self.shutdown();
                    return Err(ReplError::Timeout {
                        statement: statement.to_string(),
                        timeout: self.descriptor.statement_timeout,
                    });
                }
            }
        }
        Ok((captured.join("\n"), started.elapsed()))
    }

    /// Drop the echo of the line just sent plus bare prompt lines from one
    /// capture window.
    fn strip_echoes(&self, text: &str, sent: &str) -> Vec<String> {
        let marker = self.descriptor.prompt_marker.as_str();
        let mut echo_pending = true;
        let mut kept = Vec::new();
        for line in text.split('\n') {
            if line.is_empty() && kept.is_empty() {
                continue; // blank left behind by a prompt strip
            }
            let mut bare = line;
            let mut had_prompt = false;
            while let Some(rest) = bare.strip_prefix(marker) {
                bare = rest;
                had_prompt = true;
            }
            if had_prompt {
                if bare.is_empty() {
                    continue;
                }
                if echo_pending && bare == sent {
                    echo_pending = false;
                    continue;
                }
            }
            kept.push(line.to_string());
        }
        while kept.last().is_some_and(|l| l.is_empty()) {
            kept.pop();
        }
        kept
    }

    /// Accumulate stream bytes until the prompt marker ends the buffer at a
    /// line start and nothing else arrives within the quiescence window.
    fn wait_for_prompt(&mut self, deadline: Instant) -> WaitOutcome {
        let marker = self.descriptor.prompt_marker.as_bytes().to_vec();
        let mut buf: Vec<u8> = Vec::new();
        let mut open = true;
        loop {
            if ends_at_prompt(&buf, &marker) {
                if !open {
                    buf.truncate(buf.len() - marker.len());
                    return WaitOutcome::Ready(buf);
                }
                match self.rx.recv_timeout(QUIESCENCE) {
                    Ok(bytes) => buf.extend(bytes),
                    Err(RecvTimeoutError::Timeout) => {
                        buf.truncate(buf.len() - marker.len());
                        return WaitOutcome::Ready(buf);
                    }
                    Err(RecvTimeoutError::Disconnected) => open = false,
                }
                continue;
            }
            if !open {
                return WaitOutcome::Died(buf);
            }
            let now = Instant::now();
            if now >= deadline {
                return WaitOutcome::TimedOut;
            }
            let step = POLL_STEP.min(deadline - now);
            match self.rx.recv_timeout(step) {
                Ok(bytes) => buf.extend(bytes),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => open = false,
            }
        }
    }

    fn shutdown(&mut self) {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl CasSession for Session {
    /// Execute every statement of the chunk in order. Comment-only and blank
    /// statements never touch the backend; a restart statement re-applies the
    /// init statements afterward with their outputs hidden.
    fn execute_chunk(&mut self, chunk: &str) -> Result<Vec<StatementResult>, ReplError> {
        if self.dead {
            return Err(ReplError::SessionDead);
        }
        let statements = split_statements(chunk);
        let mut results = Vec::with_capacity(statements.len());
        for statement in statements {
            if !statement.kind.runs_on_backend() {
                results.push(StatementResult {
                    statement,
                    outputs: Vec::new(),
                    duration_ms: 0,
                    truncated: false,
                });
                continue;
            }
            let (raw, duration) = self.send_statement(&statement.text)?;
            let (text, truncated) = truncate_output(raw, self.descriptor.output_byte_limit);
            let outputs = classify_output(
                &text,
                &self.descriptor.warning_prefix,
                &self.descriptor.error_prefix,
            );
            let is_restart = statement.kind == super::StatementKind::Restart;
            results.push(StatementResult {
                statement,
                outputs,
                duration_ms: duration.as_millis() as u64,
                truncated,
            });
            if is_restart {
                self.run_init()?;
            }
        }
        Ok(results)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn_reader(mut stream: impl Read + Send + 'static, tx: mpsc::Sender<Vec<u8>>) {
    thread::spawn(move || {
        let mut buf = [0u8; 8192];
        loop {
            match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if tx.send(buf[..n].to_vec()).is_err() {
                        break;
                    }
                }
            }
        }
    });
}

fn ends_at_prompt(buf: &[u8], marker: &[u8]) -> bool {
    if buf.len() < marker.len() || !buf.ends_with(marker) {
        return false;
    }
    let start = buf.len() - marker.len();
    start == 0 || buf[start - 1] == b'\n'
}

fn to_text(bytes: &[u8]) -> String {
    let mut text = String::from_utf8_lossy(bytes).into_owned();
    while text.ends_with('\n') {
        text.pop();
    }
    text
}

fn truncate_output(text: String, limit: Option<usize>) -> (String, bool) {
    let Some(limit) = limit else { return (text, false) };
    if text.len() <= limit {
        return (text, false);
    }
    let mut cut = limit;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    let omitted = text.len() - cut;
    let mut kept = text[..cut].to_string();
    kept.push_str(&format!("\n[[output truncated: {omitted} bytes omitted]]"));
    (kept, true)
}
