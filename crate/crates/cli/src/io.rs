use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pop_core::series::Probe;
use pop_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// Reads an output of an earlier stage. A missing file names the stage
/// that should have produced it.
pub fn read_stage_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingData(format!(
            "{} not found; run `pop {stage}` first",
            path.display()
        )));
    }
    read_json(path)
}

/// Maps an image id onto a safe file or directory name.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Probes in manifest order, each with its output directory name.
pub fn load_probes(path: &Path) -> Result<Vec<(Probe, String)>> {
    if !path.exists() {
        return Err(Error::invalid(format!(
            "probe manifest {} does not exist",
            path.display()
        )));
    }
    let raw: Vec<Probe> = read_json(path)?;
    if raw.is_empty() {
        return Err(Error::invalid(format!("{} lists no probes", path.display())));
    }
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for p in raw {
        let probe = Probe::new(p.image_id, &p.tags, p.observation_week)?;
        let dir = sanitize_id(&probe.image_id);
        if let Some(other) = seen.insert(dir.clone(), probe.image_id.clone()) {
            return Err(Error::invalid(format!(
                "probes `{other}` and `{}` map to the same output name `{dir}`",
                probe.image_id
            )));
        }
        out.push((probe, dir));
    }
    Ok(out)
}

pub fn require_dir(path: &Path, what: &str) -> Result<PathBuf> {
    if !path.is_dir() {
        return Err(Error::invalid(format!("{what} {} is not a directory", path.display())));
    }
    Ok(path.to_path_buf())
}
