//! Artifact writers: ASCII PGM rasters, CSV tables and the run manifest.
//!
//! Everything written here is a pure function of the inputs, so two runs
//! with the same configuration produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Value;
use crate::error::{Error, Result};

/// Float formatting shared by every CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// P2 (ASCII) greymap, row 0 first, at most 17 values per line.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Result<String> {
    if pixels.len() != width * height {
        return Err(Error::InvalidParameter(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut s = format!("P2\n{width} {height}\n255\n");
    for row in pixels.chunks(width.max(1)) {
        for (i, chunk) in row.chunks(17).enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let line: Vec<String> = chunk.iter().map(|p| p.to_string()).collect();
            s.push_str(&line.join(" "));
        }
        s.push('\n');
    }
    Ok(s)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into one directory and remembers their digests.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        fs::write(self.dir.join(name), content.as_bytes())?;
        self.digests.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    /// Writes a file that is not part of the reproducible set.
    pub fn write_untracked(&self, name: &str, content: &str) -> Result<()> {
        fs::write(self.dir.join(name), content.as_bytes())?;
        Ok(())
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Everything needed to reproduce a run; wall-clock time lives in a
/// separate `timing.json` so that manifests compare byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, BTreeMap<String, Value>>,
    pub outputs: BTreeMap<String, String>,
    pub violations: BTreeMap<String, u64>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Recomputes the digest of every output listed in a manifest and returns
/// the names whose file content no longer matches.
pub fn verify_digests(dir: &Path, m: &RunManifest) -> Result<Vec<String>> {
    let mut bad = vec![];
    for (name, digest) in &m.outputs {
        let bytes = fs::read(dir.join(name))?;
        if &sha256_hex(&bytes) != digest {
            bad.push(name.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let s = pgm(2, 2, &[0, 128, 255, 0]).unwrap();
        assert_eq!(s, "P2\n2 2\n255\n0 128\n255 0\n");
        assert!(pgm(3, 1, &[0]).is_err());
    }

    #[test]
    fn csv_float_format() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(-2.5)]);
        assert_eq!(t.render(), "a,b\n1,-2.5000000000000000e0\n");
    }

    #[test]
    fn writer_records_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("x.csv", "a\n").unwrap();
        assert_eq!(w.digests()["x.csv"], sha256_hex(b"a\n"));
        let m = RunManifest {
            tool: "t".into(),
            version: "0".into(),
            command: "basin".into(),
            config: BTreeMap::new(),
            outputs: w.digests().clone(),
            violations: BTreeMap::new(),
            summary: BTreeMap::new(),
            exit_code: 0,
        };
        assert!(verify_digests(dir.path(), &m).unwrap().is_empty());
        fs::write(dir.path().join("x.csv"), "b\n").unwrap();
        assert_eq!(verify_digests(dir.path(), &m).unwrap(), vec!["x.csv".to_string()]);
    }
}
