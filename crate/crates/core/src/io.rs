//! On-disk artifacts: graph directories, embedding files, sorted-key JSON
//! reports, JSON-lines training logs and run manifests.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{GradeError, Result};
use crate::graph::{load_graph, save_graph, LoadedGraph};
use crate::model::ModelParams;
use crate::trainer::TrainLog;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"GRADEEMB";
pub const EMBEDDING_VERSION: u32 = 1;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";

/// Paths of the three graph files inside a dataset directory.
pub fn graph_files(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(EDGES_FILE), dir.join(FEATURES_FILE), dir.join(LABELS_FILE))
}

/// Loads a dataset directory; the label file is optional.
pub fn load_graph_dir(dir: &Path) -> Result<LoadedGraph> {
    let (e, f, l) = graph_files(dir);
    let labels = l.exists().then_some(l.as_path());
    load_graph(&e, &f, labels)
}

pub fn save_graph_dir(graph: &crate::Graph, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let (e, f, l) = graph_files(dir);
    save_graph(graph, &e, &f, Some(&l))?;
    let mut written = vec![e, f];
    if graph.labels().is_some() {
        written.push(l);
    }
    Ok(written)
}

/// Header (magic, version u32, N u64, d u64) then row-major little-endian f64.
pub fn write_embeddings<W: Write>(emb: &Array2<f64>, mut w: W) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(emb.nrows() as u64).to_le_bytes())?;
    w.write_all(&(emb.ncols() as u64).to_le_bytes())?;
    for v in emb.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let header = 8 + 4 + 8 + 8;
    if bytes.len() < header || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(GradeError::Format("not an embedding file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(GradeError::Format(format!(
            "unsupported embedding version {version}"
        )));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| GradeError::Format("embedding shape overflows".into()))?;
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(GradeError::Format(format!(
            "expected {expected} payload bytes for {n}×{d}, found {}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((n, d), values).map_err(|e| GradeError::Format(e.to_string()))
}

pub fn save_embeddings(emb: &Array2<f64>, path: &Path) -> Result<()> {
    write_embeddings(emb, std::io::BufWriter::new(fs::File::create(path)?))
}

pub fn load_embeddings(path: &Path) -> Result<Array2<f64>> {
    read_embeddings(fs::File::open(path)?)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    params.write_checkpoint(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    ModelParams::read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_sorted_json(value)?)?;
    Ok(())
}

/// One JSON object per epoch; `include_timing = false` drops wall times so the
/// file is reproducible byte for byte.
pub fn train_log_jsonl(log: &TrainLog, include_timing: bool) -> Result<String> {
    let mut out = String::new();
    for r in &log.records {
        let mut v = serde_json::to_value(r)?;
        if !include_timing {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("wall_time_ms");
            }
        }
        out.push_str(&serde_json::to_string(&v)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. No timestamps, so identical inputs
/// give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: std::collections::BTreeMap<String, String>,
    pub seed: u64,
    pub code_version: String,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &crate::config::RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: crate::config::KEYS
                .iter()
                .map(|k| (k.to_string(), cfg.get(k).expect("listed key")))
                .collect(),
            seed: cfg.train.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: 1,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Records an output by file name relative to the output directory.
    pub fn add_output(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(name);
    }
}
