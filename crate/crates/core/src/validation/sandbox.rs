//! Child-process execution with a wall-clock limit and timestamped stdout.

use std::io::{self, BufRead, BufReader, Read};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

/// One line of standard output and when it arrived, relative to spawn.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedLine {
    pub at: Duration,
    pub text: String,
}

#[derive(Debug)]
pub struct ProcessOutput {
    /// `None` when the process was killed on timeout.
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: Vec<TimedLine>,
    pub stderr: String,
    pub elapsed: Duration,
}

impl ProcessOutput {
    pub fn success(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }

    pub fn stdout_text(&self) -> String {
        self.stdout.iter().map(|l| l.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

/// Runs `cmd` with stdin closed, killing it after `timeout`. At most
/// `capture_cap` bytes of each output stream are kept; the rest is drained.
pub fn run_with_timeout(cmd: &mut Command, timeout: Duration, capture_cap: usize) -> io::Result<ProcessOutput> {
    let start = Instant::now();
    // Own process group, so a timeout also reaches grandchildren holding the pipes.
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(cmd, 0);
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;

    let stdout = child.stdout.take().expect("stdout piped");
    let stderr = child.stderr.take().expect("stderr piped");

    let out_reader = thread::spawn(move || {
        let mut lines = Vec::new();
        let mut kept = 0usize;
        let mut reader = BufReader::new(stdout);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    let at = start.elapsed();
                    if kept < capture_cap {
                        kept += buf.len();
                        let text = String::from_utf8_lossy(&buf).trim_end_matches(['\n', '\r']).to_string();
                        lines.push(TimedLine { at, text });
                    }
                }
            }
        }
        lines
    });
    let err_reader = thread::spawn(move || {
        let mut kept = Vec::new();
        let mut reader = stderr;
        let mut chunk = [0u8; 8192];
        loop {
            match reader.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = capture_cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                }
            }
        }
        String::from_utf8_lossy(&kept).into_owned()
    });

    let mut poll = Duration::from_micros(200);
    let (status, timed_out) = loop {
        if let Some(status) = child.try_wait()? {
            break (Some(status), false);
        }
        if start.elapsed() >= timeout {
            kill_group(child.id());
            let _ = child.kill();
            let _ = child.wait();
            break (None, true);
        }
        thread::sleep(poll);
        poll = (poll * 2).min(Duration::from_millis(10));
    };
    let elapsed = start.elapsed();

    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(ProcessOutput {
        status,
        timed_out,
        stdout,
        stderr,
        elapsed,
    })
}

fn kill_group(pid: u32) {
    #[cfg(unix)]
    // SAFETY: kill(2) with a negative pid signals the process group we created.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
    #[cfg(not(unix))]
    let _ = pid;
}

/// Environment-cleared command rooted in `dir`, keeping only `PATH`.
pub fn isolated_command(program: &std::path::Path, dir: &std::path::Path) -> Command {
    let mut cmd = Command::new(program);
    cmd.current_dir(dir).env_clear();
    if let Some(path) = std::env::var_os("PATH") {
        cmd.env("PATH", path);
    }
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Command {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(script);
        cmd
    }

    #[test]
    fn captures_lines_in_order() {
        let out = run_with_timeout(&mut sh("echo one; echo two >&2; echo three"), Duration::from_secs(5), 1 << 16).unwrap();
        assert!(out.success());
        let lines: Vec<&str> = out.stdout.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(lines, vec!["one", "three"]);
        assert_eq!(out.stderr.trim(), "two");
        assert!(out.stdout[0].at <= out.stdout[1].at);
    }

    #[test]
    fn kills_on_timeout() {
        let start = Instant::now();
        let out = run_with_timeout(&mut sh("sleep 5; echo late"), Duration::from_millis(200), 1024).unwrap();
        assert!(out.timed_out);
        assert!(out.status.is_none());
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn caps_captured_output() {
        let out = run_with_timeout(&mut sh("head -c 100000 /dev/zero >&2"), Duration::from_secs(5), 1000).unwrap();
        assert_eq!(out.stderr.len(), 1000);
    }
}
