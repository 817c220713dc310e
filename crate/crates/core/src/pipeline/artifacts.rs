use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cdr::{UserIndex, UserSets};
use crate::demographics::DemographicLabel;
use crate::error::{Error, Result};

/// Provenance written next to every stage output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub config_sha256: String,
    pub seed: u64,
}

/// Directory layout of a pipeline run.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Workspace { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path under the root, creating parent directories.
    pub fn output(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(path)
    }

    /// Path of an upstream artifact, or an error naming the stage that
    /// produces it.
    pub fn require(&self, rel: impl AsRef<Path>, stage: &'static str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact { stage, path })
        }
    }

    pub fn stamp(&self, rel: impl AsRef<Path>, stamp: &Stamp) -> Result<()> {
        write_json(&self.output(rel)?, stamp)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

const MATRIX_MAGIC: &[u8; 4] = b"DGMX";
const MATRIX_VERSION: u32 = 1;

/// Dense matrix with one `u32` id per row: magic `DGMX`, version, rows and
/// columns as `u64`, the row ids, then the values row-major, all
/// little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMatrix {
    pub ids: Vec<u32>,
    pub values: Array2<f64>,
}

impl IdMatrix {
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::with_capacity(1 << 20, File::create(path).map_err(io)?);
        let (rows, cols) = self.values.dim();
        w.write_all(MATRIX_MAGIC).map_err(io)?;
        w.write_all(&MATRIX_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(rows as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(cols as u64).to_le_bytes()).map_err(io)?;
        for id in &self.ids {
            w.write_all(&id.to_le_bytes()).map_err(io)?;
        }
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut r = BufReader::with_capacity(1 << 20, File::open(path).map_err(io)?);
        let mut header = [0u8; 24];
        r.read_exact(&mut header).map_err(io)?;
        if &header[0..4] != MATRIX_MAGIC {
            return Err(Error::data(format!("{} is not a matrix artifact", path.display())));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != MATRIX_VERSION {
            return Err(Error::data(format!("unsupported matrix version {version}")));
        }
        let rows = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
        let cols = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
        let mut raw = vec![0u8; rows * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let ids = raw
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let mut raw = vec![0u8; rows * cols * 8];
        r.read_exact(&mut raw).map_err(io)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let values = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::data(e.to_string()))?;
        Ok(IdMatrix { ids, values })
    }
}

/// Writes `user_id,client,gender,age_years` in dense index order.
pub fn write_users(path: &Path, users: &UserIndex, sets: &UserSets) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path).map_err(io)?);
    writeln!(w, "user_id,client,gender,age_years").map_err(io)?;
    for (i, id) in users.ids().iter().enumerate() {
        let i = i as u32;
        let client = u8::from(sets.is_client(i));
        match sets.label(i) {
            Some(l) => writeln!(w, "{id},{client},{},{}", l.gender, l.age),
            None => writeln!(w, "{id},{client},,"),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_users(path: &Path) -> Result<(UserIndex, UserSets)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut users = UserIndex::new();
    let mut sets = UserSets::new();
    let mut pending = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = || Error::data(format!("{}: malformed row {}", path.display(), line + 2));
        if record.len() != 4 {
            return Err(bad());
        }
        let idx = users.intern(&record[0]);
        if idx as usize != line {
            return Err(Error::data(format!("{}: duplicate user {}", path.display(), &record[0])));
        }
        sets.resize(users.len());
        match &record[1] {
            "1" => sets.mark_client(idx),
            "0" => {}
            _ => return Err(bad()),
        }
        if !record[2].is_empty() {
            let gender = record[2].parse()?;
            let age = record[3].parse().map_err(|_| bad())?;
            pending.push((idx, DemographicLabel { gender, age }));
        }
    }
    sets.resize(users.len());
    for (idx, label) in pending {
        sets.set_label(idx, label)?;
    }
    Ok((users, sets))
}
