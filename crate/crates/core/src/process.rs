//! Child-process plumbing shared by the compile, verify and bench stages.

use std::fmt;
use std::io::{self, Read};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Splits a configured command line into program and arguments.
///
/// Tokens are whitespace separated; single or double quotes group a token.
pub fn split_command(cmd: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut have = false;
    for ch in cmd.chars() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => cur.push(ch),
            None if ch == '"' || ch == '\'' => {
                quote = Some(ch);
                have = true;
            }
            None if ch.is_whitespace() => {
                if have {
                    out.push(std::mem::take(&mut cur));
                    have = false;
                }
            }
            None => {
                cur.push(ch);
                have = true;
            }
        }
    }
    if have {
        out.push(cur);
    }
    out
}

/// How a built binary gets executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Runner {
    Native,
    /// User-mode emulator command; the binary path is appended.
    Emulate(String),
}

impl Runner {
    pub fn command(&self, binary: &Path, args: &[String]) -> Command {
        let mut cmd = match self {
            Runner::Native => Command::new(binary),
            Runner::Emulate(emu) => {
                let argv = split_command(emu);
                let mut c = Command::new(&argv[0]);
                c.args(&argv[1..]).arg(binary);
                c
            }
        };
        cmd.args(args);
        cmd
    }

    /// First word of the command that must be resolvable for this runner.
    pub fn program(&self) -> Option<String> {
        match self {
            Runner::Native => None,
            Runner::Emulate(emu) => split_command(emu).into_iter().next(),
        }
    }
}

impl fmt::Display for Runner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Runner::Native => f.write_str("native"),
            Runner::Emulate(cmd) => write!(f, "emulate:{cmd}"),
        }
    }
}

impl FromStr for Runner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "native" {
            return Ok(Runner::Native);
        }
        match s.strip_prefix("emulate:") {
            Some(cmd) if !split_command(cmd).is_empty() => Ok(Runner::Emulate(cmd.trim().to_string())),
            _ => Err(format!("invalid runner '{s}' (expected native or emulate:<command>)")),
        }
    }
}

impl From<Runner> for String {
    fn from(r: Runner) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Runner {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub status: Option<ExitStatus>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl Captured {
    pub fn success(&self) -> bool {
        !self.timed_out && self.status.is_some_and(|s| s.success())
    }

    pub fn signal(&self) -> Option<i32> {
        use std::os::unix::process::ExitStatusExt;
        self.status.and_then(|s| s.signal())
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Waits for `child`, killing it once `timeout` elapses.
pub fn wait_with_timeout(child: &mut Child, timeout: Option<Duration>) -> io::Result<(Option<ExitStatus>, bool)> {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok((Some(status), false));
        }
        if let Some(limit) = timeout {
            if start.elapsed() >= limit {
                let _ = child.kill();
                let _ = child.wait();
                return Ok((None, true));
            }
        }
        thread::sleep(Duration::from_millis(2));
    }
}

/// Runs `cmd` to completion capturing both output streams.
pub fn run_captured(mut cmd: Command, timeout: Option<Duration>) -> io::Result<Captured> {
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let (status, timed_out) = wait_with_timeout(&mut child, timeout)?;
    let elapsed = start.elapsed();
    Ok(Captured {
        status,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        timed_out,
        elapsed,
    })
}

/// Renders an argv for logs.
pub fn render_argv(cmd: &Command) -> String {
    let mut parts = vec![cmd.get_program().to_string_lossy().into_owned()];
    parts.extend(cmd.get_args().map(|a| a.to_string_lossy().into_owned()));
    parts.join(" ")
}

/// Whether `program` resolves to an executable, either as a path or via `PATH`.
pub fn resolve_program(program: &str) -> Option<std::path::PathBuf> {
    use std::os::unix::fs::PermissionsExt;
    let is_exec = |p: &Path| p.metadata().map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0).unwrap_or(false);
    if program.contains('/') {
        let p = Path::new(program);
        return is_exec(p).then(|| p.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(program)).find(|p| is_exec(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_quoted_words() {
        assert_eq!(split_command("clang --target=aarch64-linux-gnu"), vec!["clang", "--target=aarch64-linux-gnu"]);
        assert_eq!(split_command("python3 'my dir/emu.py'  -v"), vec!["python3", "my dir/emu.py", "-v"]);
        assert_eq!(split_command("a ''"), vec!["a", ""]);
        assert!(split_command("   ").is_empty());
    }

    #[test]
    fn runner_parse() {
        assert_eq!("native".parse::<Runner>().unwrap(), Runner::Native);
        assert_eq!("emulate:qemu-aarch64 -L /x".parse::<Runner>().unwrap(), Runner::Emulate("qemu-aarch64 -L /x".into()));
        assert!("emulate:".parse::<Runner>().is_err());
        assert!("docker".parse::<Runner>().is_err());
    }

    #[test]
    fn timeout_kills_child() {
        let mut cmd = Command::new("sleep");
        cmd.arg("5");
        let c = run_captured(cmd, Some(Duration::from_millis(200))).unwrap();
        assert!(c.timed_out);
        assert!(c.elapsed < Duration::from_secs(2));
    }

    #[test]
    fn captures_streams() {
        let mut cmd = Command::new("sh");
        cmd.args(["-c", "echo out; echo err >&2; exit 3"]);
        let c = run_captured(cmd, None).unwrap();
        assert_eq!(c.stdout, "out\n");
        assert_eq!(c.stderr, "err\n");
        assert_eq!(c.status.unwrap().code(), Some(3));
    }
}
