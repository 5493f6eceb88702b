use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Runs `write` against a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(File) -> Result<()>) -> Result<()> {
    let tmp = temp_sibling(path);
    let file = File::create(&tmp)?;
    match write(file) {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |mut f| {
        use std::io::Write;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}
