use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Tracks files written by a command. Each file is written to a temporary
/// sibling and renamed into place; unless `commit` is called, every file
/// written so far is removed when the guard drops.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("encoding {}", path.display()))?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
        tmp.write_all(&buf).with_context(|| format!("writing {}", path.display()))?;
        tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.to_owned());
        Ok(())
    }

    pub fn write_str(&mut self, path: &Path, text: &str) -> Result<()> {
        self.write(path, |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        {
            let mut out = Outputs::new();
            out.write_str(&a, "hi").unwrap();
            assert!(a.exists());
        }
        assert!(!a.exists());
        let mut out = Outputs::new();
        out.write_str(&a, "hi").unwrap();
        out.commit();
        assert_eq!(fs::read_to_string(&a).unwrap(), "hi");
    }
}
