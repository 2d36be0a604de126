//! Run directories. Files are written into a hidden staging directory that
//! is renamed into place once the command finishes, so a run directory is
//! either complete or absent. Existing directories are never reused.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

pub struct RunDir {
    root: PathBuf,
    name: String,
    staging: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, name: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(CliError::io("creating output root", root))?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let staging = root.join(format!(".staging-{name}-{}-{stamp}", std::process::id()));
        fs::create_dir(&staging).map_err(CliError::io("creating staging directory", &staging))?;
        Ok(Self {
            root: root.to_path_buf(),
            name: name.to_string(),
            staging,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    pub fn subdir(&self, dir: &str) -> Result<PathBuf, CliError> {
        let p = self.staging.join(dir);
        fs::create_dir_all(&p).map_err(CliError::io("creating directory", &p))?;
        Ok(p)
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(file);
        let mut f = fs::File::create(&p).map_err(CliError::io("creating file", &p))?;
        f.write_all(text.as_bytes()).map_err(CliError::io("writing file", &p))
    }

    pub fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable value");
        text.push('\n');
        self.write_text(file, &text)
    }

    /// Moves the staged files to `<root>/<name>`, appending `-2`, `-3`, ...
    /// when that name is taken.
    pub fn commit(self) -> Result<PathBuf, CliError> {
        for attempt in 1.. {
            let target = if attempt == 1 {
                self.root.join(&self.name)
            } else {
                self.root.join(format!("{}-{attempt}", self.name))
            };
            if target.exists() {
                continue;
            }
            match fs::rename(&self.staging, &target) {
                Ok(()) => return Ok(target),
                // lost a race for the name; try the next one
                Err(_) if target.exists() => continue,
                Err(e) => return Err(CliError::io("publishing run directory", target)(e)),
            }
        }
        unreachable!()
    }
}

pub fn timestamp() -> String {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
        .to_string()
}
