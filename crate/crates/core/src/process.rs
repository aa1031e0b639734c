//! External process execution with a wall-clock limit.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

#[derive(Debug, Clone)]
pub struct ProcOutput {
    pub status: ExitStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl ProcOutput {
    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }

    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }
}

#[derive(Debug)]
pub enum ProcError {
    NotFound(String),
    Timeout,
    Io(std::io::Error),
}

/// Run `program args..` in `cwd`, feeding `stdin` and collecting both
/// output streams. The child is killed when `timeout` elapses.
pub fn run(program: &str, args: &[String], cwd: &Path, stdin: &[u8], timeout: Duration) -> Result<ProcOutput, ProcError> {
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => ProcError::NotFound(program.to_string()),
            _ => ProcError::Io(e),
        })?;

    let mut child_in = child.stdin.take().expect("piped stdin");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // a child that exits early closes the pipe; that is not our error
        let _ = child_in.write_all(&input);
    });
    let mut out = child.stdout.take().expect("piped stdout");
    let reader_out = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out.read_to_end(&mut buf);
        buf
    });
    let mut err = child.stderr.take().expect("piped stderr");
    let reader_err = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err.read_to_end(&mut buf);
        buf
    });

    let status = match child.wait_timeout(timeout).map_err(ProcError::Io)? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            let _ = writer.join();
            let _ = reader_out.join();
            let _ = reader_err.join();
            return Err(ProcError::Timeout);
        }
    };
    let _ = writer.join();
    let stdout = reader_out.join().unwrap_or_default();
    let stderr = reader_err.join().unwrap_or_default();
    Ok(ProcOutput { status, stdout, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoes_stdin() {
        let dir = std::env::temp_dir();
        let o = run("cat", &[], &dir, b"hello", Duration::from_secs(10)).unwrap();
        assert!(o.status.success());
        assert_eq!(o.stdout, b"hello");
    }

    #[test]
    fn missing_program() {
        let dir = std::env::temp_dir();
        assert!(matches!(run("no-such-program-xyz", &[], &dir, b"", Duration::from_secs(1)), Err(ProcError::NotFound(_))));
    }

    #[test]
    fn timeout_kills() {
        let dir = std::env::temp_dir();
        let r = run("sleep", &["5".to_string()], &dir, b"", Duration::from_millis(200));
        assert!(matches!(r, Err(ProcError::Timeout)));
    }
}
