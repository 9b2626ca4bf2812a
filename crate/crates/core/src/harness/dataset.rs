//! Dataset ingestion.
//!
//! Native format: one hyperedge per line, whitespace-separated non-negative
//! integer vertex ids, `#` starts a comment. Simplex-triple format: a
//! directory holding `<name>-nverts.txt` (one simplex size per line) and
//! `<name>-simplices.txt` (the concatenated 1-based vertex ids, one per
//! line). `<name>-times.txt` may be present and is ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{ingest, Hypergraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Native,
    SimplexTriple,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub format: DatasetFormat,
    /// The native file, or the simplex-triple directory.
    pub path: PathBuf,
    pub name: String,
}

impl DatasetSource {
    /// A regular file is read as native; a directory as simplex-triple named
    /// after its last path component.
    pub fn resolve(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Format(format!("cannot name dataset at {}", path.display())))?
            .to_string();
        let format = if meta.is_dir() {
            DatasetFormat::SimplexTriple
        } else {
            DatasetFormat::Native
        };
        Ok(DatasetSource {
            format,
            path: path.to_path_buf(),
            name,
        })
    }

    pub fn load(&self) -> Result<Hypergraph> {
        match self.format {
            DatasetFormat::Native => load_native(&self.path),
            DatasetFormat::SimplexTriple => load_simplex_triple(&self.path, &self.name),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_native(path: impl AsRef<Path>) -> Result<Hypergraph> {
    let path = path.as_ref();
    parse_native(&read(path)?, path)
}

/// `origin` only labels errors.
pub fn parse_native(text: &str, origin: &Path) -> Result<Hypergraph> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let edge = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u64>().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("`{tok}` is not a non-negative integer vertex id"),
                })
            })
            .collect::<Result<Vec<u64>>>()?;
        edges.push(edge);
    }
    ingest(&edges, None)
}

fn read_ids(path: &Path) -> Result<Vec<u64>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<u64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("`{}` is not a non-negative integer", l.trim()),
            })
        })
        .collect()
}

pub fn load_simplex_triple(dir: impl AsRef<Path>, name: &str) -> Result<Hypergraph> {
    let dir = dir.as_ref();
    let sizes = read_ids(&dir.join(format!("{name}-nverts.txt")))?;
    let simplices_path = dir.join(format!("{name}-simplices.txt"));
    let ids = read_ids(&simplices_path)?;
    chunk_simplices(&sizes, &ids, &simplices_path)
}

/// Re-chunk concatenated 1-based ids by `sizes` into 0-based edges.
pub fn chunk_simplices(sizes: &[u64], ids: &[u64], origin: &Path) -> Result<Hypergraph> {
    let total: u64 = sizes.iter().sum();
    if total != ids.len() as u64 {
        return Err(Error::Format(format!(
            "{}: simplex sizes sum to {total} but {} vertex ids are listed",
            origin.display(),
            ids.len()
        )));
    }
    let mut edges = Vec::with_capacity(sizes.len());
    let mut at = 0usize;
    for &s in sizes {
        let chunk = &ids[at..at + s as usize];
        at += s as usize;
        let edge = chunk
            .iter()
            .map(|&v| {
                v.checked_sub(1).ok_or_else(|| {
                    Error::Format(format!("{}: vertex id 0 in 1-based file", origin.display()))
                })
            })
            .collect::<Result<Vec<u64>>>()?;
        edges.push(edge);
    }
    ingest(&edges, None)
}

/// Native text for `h`, using its dense ids.
pub fn to_native(h: &Hypergraph) -> String {
    let mut out = String::new();
    for e in h.edges() {
        let mut first = true;
        for v in e {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_native(h: &Hypergraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_native(h)).map_err(|e| Error::io(path, e))
}
