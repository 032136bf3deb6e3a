//! Staged output: everything is written into a hidden sibling directory and
//! moved into place only when the whole command has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::error::{CliError, Result};
use crate::manifest::FileDigest;

enum Target {
    /// Staging root becomes this directory.
    Directory(PathBuf),
    /// Top-level staged files are moved into this existing directory.
    Files(PathBuf),
}

pub struct Staging {
    dir: TempDir,
    target: Target,
}

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn staging_dir_in(parent: &Path) -> Result<TempDir> {
    fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    tempfile::Builder::new()
        .prefix(".projspec-staging-")
        .tempdir_in(parent)
        .map_err(|e| CliError::io(format!("staging in {}", parent.display()), e))
}

impl Staging {
    /// Stage a fresh output directory. An existing non-empty target is refused.
    pub fn for_directory(target: &Path) -> Result<Self> {
        if let Ok(mut entries) = fs::read_dir(target) {
            if entries.next().is_some() {
                return Err(CliError::OutputExists(target.to_path_buf()));
            }
        } else if target.exists() {
            return Err(CliError::OutputExists(target.to_path_buf()));
        }
        Ok(Self {
            dir: staging_dir_in(&parent_of(target))?,
            target: Target::Directory(target.to_path_buf()),
        })
    }

    /// Stage files that will land next to `output_file`.
    pub fn for_files(output_file: &Path) -> Result<Self> {
        let parent = parent_of(output_file);
        Ok(Self {
            dir: staging_dir_in(&parent)?,
            target: Target::Files(parent),
        })
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    /// Staged location of `relative`, with parent directories created.
    pub fn path(&self, relative: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.dir.path().join(relative);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
        }
        Ok(p)
    }

    /// Digests of every staged file, sorted by relative path.
    pub fn digests(&self) -> Result<Vec<FileDigest>> {
        let mut files = Vec::new();
        collect_files(self.dir.path(), &mut files)?;
        files.sort();
        files
            .iter()
            .map(|f| {
                let rel = f.strip_prefix(self.dir.path()).expect("inside staging root");
                Ok(FileDigest {
                    path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                    sha256: digest_file(f)?,
                })
            })
            .collect()
    }

    pub fn commit(self) -> Result<()> {
        match &self.target {
            Target::Directory(target) => {
                if target.exists() {
                    fs::remove_dir(target).map_err(|e| CliError::io(format!("replacing {}", target.display()), e))?;
                }
                let staged = self.dir.keep();
                fs::rename(&staged, target).map_err(|e| CliError::io(format!("moving output to {}", target.display()), e))
            }
            Target::Files(parent) => {
                let entries = fs::read_dir(self.dir.path()).map_err(|e| CliError::io("reading staging directory", e))?;
                let mut names: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.file_name())).collect();
                names.sort();
                for name in names {
                    let dest = parent.join(&name);
                    fs::rename(self.dir.path().join(&name), &dest)
                        .map_err(|e| CliError::io(format!("moving output to {}", dest.display()), e))?;
                }
                Ok(())
            }
        }
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io("listing staged files", e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fails with a missing-input error for the first path that does not exist.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::MissingInput(p.to_path_buf()));
        }
    }
    Ok(())
}
