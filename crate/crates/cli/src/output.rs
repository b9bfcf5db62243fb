//! Outputs are staged next to their destination and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::{NamedTempFile, TempDir};

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Checks an output path before any work starts.
pub fn check_output(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    let parent = parent_of(path);
    if !parent.is_dir() {
        return Err(CliError::Io(format!("{} is not a directory", parent.display())));
    }
    Ok(())
}

pub fn check_input(path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("{} does not exist", path.display())));
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = NamedTempFile::new_in(parent_of(path)).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// A directory being filled before it replaces `target`.
pub struct StagedDir {
    tmp: TempDir,
    target: PathBuf,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<Self, CliError> {
        let tmp = tempfile::Builder::new()
            .prefix(".apr-staging-")
            .tempdir_in(parent_of(target))
            .map_err(|e| io_err(target, e))?;
        Ok(Self {
            tmp,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.tmp.path().join(name);
        fs::write(&p, bytes).map_err(|e| io_err(&p, e))
    }

    pub fn commit(self) -> Result<(), CliError> {
        let target = self.target;
        if target.is_dir() {
            fs::remove_dir_all(&target).map_err(|e| io_err(&target, e))?;
        } else if target.exists() {
            fs::remove_file(&target).map_err(|e| io_err(&target, e))?;
        }
        let staged = self.tmp.keep();
        // staging directories are created owner-only
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&staged, fs::Permissions::from_mode(0o755)).map_err(|e| io_err(&staged, e))?;
        }
        fs::rename(&staged, &target).map_err(|e| io_err(&target, e))
    }
}
