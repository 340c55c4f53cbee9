//! Advisory exclusive lock files.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write as _};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LockError {
    #[error("{path} is held by another process{}", holder.as_deref().map(|h| format!(" (pid {h})")).unwrap_or_default())]
    Held { path: PathBuf, holder: Option<String> },
    #[error("cannot open lock file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Held until dropped; the kernel releases it if the process dies.
#[derive(Debug)]
pub struct LockFile {
    file: File,
    path: PathBuf,
}

impl LockFile {
    /// Takes the lock without waiting.
    pub fn try_acquire(path: &Path) -> Result<Self, LockError> {
        let io_err = |source| LockError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path).map_err(io_err)?;
        // SAFETY: flock on a descriptor we own.
        let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
        if rc != 0 {
            let err = io::Error::last_os_error();
            if err.raw_os_error() == Some(libc::EWOULDBLOCK) {
                let holder = fs::read_to_string(path).ok().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
                return Err(LockError::Held { path: path.to_path_buf(), holder });
            }
            return Err(io_err(err));
        }
        file.set_len(0).map_err(io_err)?;
        let _ = write!(file, "{}", std::process::id());
        Ok(LockFile { file, path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = self.file.set_len(0);
        // SAFETY: unlocking a descriptor we own.
        unsafe {
            libc::flock(self.file.as_raw_fd(), libc::LOCK_UN);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_holder_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/run.lock");
        let first = LockFile::try_acquire(&p).unwrap();
        match LockFile::try_acquire(&p) {
            Err(LockError::Held { holder, .. }) => assert_eq!(holder, Some(std::process::id().to_string())),
            other => panic!("expected Held, got {other:?}"),
        }
        drop(first);
        assert!(LockFile::try_acquire(&p).is_ok());
    }
}
