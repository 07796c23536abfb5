//! Dataset and model persistence.
//!
//! Datasets are stored as a JSON manifest next to a raw little-endian
//! float32 tensor in `[block][target][channel][sample]` order. Models are
//! stored in a single container file: magic bytes `SSVF`, a version byte,
//! a little-endian u32 JSON header length, the JSON header, then raw
//! little-endian float64 payload blocks in header order.
//!
//! Public datasets are brought in through the CSV import convention
//! (`block{b}_target{t}.csv`, rows = samples, columns = channels) rather
//! than native readers of their original containers.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::adtrca::{AdTrcaModel, TestFilterMode};
use crate::data::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::mtl_ard::TemporalFilter;
use crate::trca::TrcaModel;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MODEL_MAGIC: &[u8; 4] = b"SSVF";
pub const MODEL_FORMAT_VERSION: u8 = 1;

const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sampling_rate_hz: f64,
    pub stimulus_frequencies_hz: Vec<f64>,
    pub channel_names: Vec<String>,
    pub n_blocks: usize,
    pub n_targets: usize,
    pub n_samples: usize,
    pub latency_s: f64,
    pub tensor_file: String,
    pub byte_order: String,
    pub sample_type: String,
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes `manifest.json` plus the f32 tensor into `dir`. The dataset must
/// be complete (every block/target cell present) because the tensor is
/// dense. Values are rounded to f32; data produced by this crate's
/// generator and loaders already carry f32 precision, so round-trips are
/// exact.
pub fn save_dataset(dataset: &Dataset, dir: &Path, latency_s: f64) -> Result<()> {
    let n_samples = dataset
        .n_samples()
        .ok_or_else(|| Error::InvalidDataset("cannot save an empty dataset".into()))?;
    fs::create_dir_all(dir)?;
    let tensor_file = "tensor.f32le".to_string();
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        sampling_rate_hz: dataset.sampling_rate_hz(),
        stimulus_frequencies_hz: dataset.stimulus_frequencies_hz().to_vec(),
        channel_names: dataset.channel_names().to_vec(),
        n_blocks: dataset.n_blocks(),
        n_targets: dataset.n_stimuli(),
        n_samples,
        latency_s,
        tensor_file: tensor_file.clone(),
        byte_order: "little".into(),
        sample_type: "f32".into(),
    };
    let mut payload = Vec::with_capacity(
        dataset.n_blocks() * dataset.n_stimuli() * dataset.n_channels() * n_samples * 4,
    );
    for b in 0..dataset.n_blocks() {
        for s in 0..dataset.n_stimuli() {
            let trial = dataset.trial(b, s).ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "dataset is missing block {b} stimulus {s}; dense tensors need every cell"
                ))
            })?;
            for v in trial.samples().iter() {
                payload.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    fs::write(dir.join(&tensor_file), payload)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Reads a manifest from a dataset directory or manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| corrupt(&mpath, format!("bad manifest: {e}")))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version(format!(
            "dataset format version {} (this build reads {})",
            manifest.format_version, DATASET_FORMAT_VERSION
        )));
    }
    if manifest.byte_order != "little" || manifest.sample_type != "f32" {
        return Err(Error::Version(format!(
            "unsupported tensor encoding {}/{}",
            manifest.byte_order, manifest.sample_type
        )));
    }
    Ok(manifest)
}

/// Loads a dataset saved by [`save_dataset`]. Accepts the directory or the
/// manifest path.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(path)?;
    let mpath = manifest_path(path);
    let base = mpath.parent().unwrap_or_else(|| Path::new("."));
    let tpath = base.join(&manifest.tensor_file);
    let bytes = fs::read(&tpath)?;
    let n_ch = manifest.channel_names.len();
    let expected = manifest.n_blocks * manifest.n_targets * n_ch * manifest.n_samples * 4;
    if bytes.len() != expected {
        return Err(corrupt(
            &tpath,
            format!(
                "tensor holds {} bytes, manifest declares {expected}",
                bytes.len()
            ),
        ));
    }
    let mut trials = Vec::with_capacity(manifest.n_blocks * manifest.n_targets);
    let mut offset = 0;
    for b in 0..manifest.n_blocks {
        for s in 0..manifest.n_targets {
            let mut samples = Array2::<f64>::zeros((n_ch, manifest.n_samples));
            for ch in 0..n_ch {
                for t in 0..manifest.n_samples {
                    let raw: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
                    samples[[ch, t]] = f32::from_le_bytes(raw) as f64;
                    offset += 4;
                }
            }
            trials.push(Trial::new(samples, s, b)?);
        }
    }
    Dataset::new(
        trials,
        manifest.sampling_rate_hz,
        manifest.stimulus_frequencies_hz,
        manifest.n_blocks,
        manifest.channel_names,
    )
}

/// Metadata a CSV import needs beyond the trial files themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvImportSpec {
    pub sampling_rate_hz: f64,
    pub stimulus_frequencies_hz: Vec<f64>,
    pub channel_names: Vec<String>,
    pub n_blocks: usize,
    #[serde(default)]
    pub latency_s: f64,
}

/// Assembles a dataset from `block{b}_target{t}.csv` files in `dir`.
pub fn import_csv(dir: &Path, spec: &CsvImportSpec) -> Result<Dataset> {
    let n_targets = spec.stimulus_frequencies_hz.len();
    let n_ch = spec.channel_names.len();
    let mut trials = Vec::with_capacity(spec.n_blocks * n_targets);
    let mut n_samples: Option<usize> = None;
    for b in 0..spec.n_blocks {
        for t in 0..n_targets {
            let file = dir.join(format!("block{b}_target{t}.csv"));
            if !file.exists() {
                return Err(Error::InvalidDataset(format!(
                    "missing trial file for block {b} target {t}: {}",
                    file.display()
                )));
            }
            let reader = BufReader::new(fs::File::open(&file)?);
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for (line_idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let values: Vec<f64> = line
                    .split(',')
                    .map(|field| {
                        field.trim().parse::<f64>().map_err(|e| Error::Parse {
                            path: file.display().to_string(),
                            line: line_idx + 1,
                            message: format!("bad float {field:?}: {e}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if values.len() != n_ch {
                    return Err(Error::Parse {
                        path: file.display().to_string(),
                        line: line_idx + 1,
                        message: format!("{} columns, expected {n_ch}", values.len()),
                    });
                }
                rows.push(values);
            }
            match n_samples {
                None => n_samples = Some(rows.len()),
                Some(n) if n != rows.len() => {
                    return Err(Error::InvalidDataset(format!(
                        "{} has {} samples, earlier trials had {n}",
                        file.display(),
                        rows.len()
                    )));
                }
                _ => {}
            }
            // CSV rows are samples; trials are channel-major.
            let mut samples = Array2::<f64>::zeros((n_ch, rows.len()));
            for (r, row) in rows.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    samples[[c, r]] = v;
                }
            }
            trials.push(Trial::new(samples, t, b)?);
        }
    }
    Dataset::new(
        trials,
        spec.sampling_rate_hz,
        spec.stimulus_frequencies_hz.clone(),
        spec.n_blocks,
        spec.channel_names.clone(),
    )
}

/// A model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Trca(TrcaModel),
    AdTrca(AdTrcaModel),
}

impl SavedModel {
    pub fn method_tag(&self) -> &'static str {
        match self {
            SavedModel::Trca(_) => "trca",
            SavedModel::AdTrca(_) => "adtrca",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    method: String,
    n_stimuli: usize,
    n_channels: usize,
    n_samples: usize,
    #[serde(default)]
    test_filter: Option<TestFilterMode>,
    blocks: Vec<BlockInfo>,
}

struct BlockWriter {
    infos: Vec<BlockInfo>,
    payload: Vec<u8>,
}

impl BlockWriter {
    fn new() -> Self {
        Self {
            infos: Vec::new(),
            payload: Vec::new(),
        }
    }

    fn push_matrix(&mut self, name: String, m: &Array2<f64>) {
        self.infos.push(BlockInfo {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
        });
        for v in m.iter() {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn push_vector(&mut self, name: String, v: &Array1<f64>) {
        self.infos.push(BlockInfo {
            name,
            rows: 1,
            cols: v.len(),
        });
        for x in v.iter() {
            self.payload.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct BlockReader<'a> {
    infos: std::slice::Iter<'a, BlockInfo>,
    payload: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> BlockReader<'a> {
    fn next_matrix(&mut self, expect_name: &str) -> Result<Array2<f64>> {
        let info = self
            .infos
            .next()
            .ok_or_else(|| corrupt(self.path, format!("missing block {expect_name}")))?;
        if info.name != expect_name {
            return Err(corrupt(
                self.path,
                format!("expected block {expect_name}, found {}", info.name),
            ));
        }
        let count = info.rows * info.cols;
        let bytes = count * 8;
        if self.offset + bytes > self.payload.len() {
            return Err(corrupt(self.path, "payload shorter than declared blocks"));
        }
        let mut m = Array2::<f64>::zeros((info.rows, info.cols));
        for idx in 0..count {
            let start = self.offset + idx * 8;
            let raw: [u8; 8] = self.payload[start..start + 8].try_into().unwrap();
            m.as_slice_mut().unwrap()[idx] = f64::from_le_bytes(raw);
        }
        self.offset += bytes;
        Ok(m)
    }

    fn next_vector(&mut self, expect_name: &str) -> Result<Array1<f64>> {
        let m = self.next_matrix(expect_name)?;
        Ok(m.row(0).to_owned())
    }
}

/// Serializes a fitted model, exact to the bit.
pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    let mut blocks = BlockWriter::new();
    let header = match model {
        SavedModel::Trca(m) => {
            for (s, w) in m.filters.iter().enumerate() {
                blocks.push_vector(format!("filter_{s}"), w);
            }
            for (s, t) in m.templates.iter().enumerate() {
                blocks.push_matrix(format!("template_{s}"), t);
            }
            if let Some(bank) = &m.ensemble {
                blocks.push_matrix("ensemble".into(), bank);
            }
            ModelHeader {
                method: "trca".into(),
                n_stimuli: m.n_stimuli(),
                n_channels: m.n_channels(),
                n_samples: m.templates.first().map_or(0, Array2::ncols),
                test_filter: None,
                blocks: Vec::new(),
            }
        }
        SavedModel::AdTrca(m) => {
            for (s, f) in m.temporal_filters.iter().enumerate() {
                blocks.push_matrix(format!("temporal_filter_{s}"), f.matrix());
            }
            for (s, w) in m.filters.iter().enumerate() {
                blocks.push_vector(format!("filter_{s}"), w);
            }
            for (s, t) in m.templates.iter().enumerate() {
                blocks.push_matrix(format!("template_{s}"), t);
            }
            if let Some(bank) = &m.ensemble {
                blocks.push_matrix("ensemble".into(), bank);
            }
            ModelHeader {
                method: "adtrca".into(),
                n_stimuli: m.n_stimuli(),
                n_channels: m.n_channels(),
                n_samples: m.templates.first().map_or(0, Array2::ncols),
                test_filter: Some(m.test_filter),
                blocks: Vec::new(),
            }
        }
    };
    let header = ModelHeader {
        blocks: blocks.infos.clone(),
        ..header
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::InvalidInput(format!("model header serialization failed: {e}")))?;
    let mut out = fs::File::create(path)?;
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&[MODEL_FORMAT_VERSION])?;
    out.write_all(&(header_json.len() as u32).to_le_bytes())?;
    out.write_all(&header_json)?;
    out.write_all(&blocks.payload)?;
    Ok(())
}

/// Loads a model container written by [`save_model`].
pub fn load_model(path: &Path) -> Result<SavedModel> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| corrupt(path, "file shorter than the magic header"))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Version(format!(
            "not a model container (magic {magic:?})"
        )));
    }
    let mut version = [0u8; 1];
    file.read_exact(&mut version)
        .map_err(|_| corrupt(path, "missing version byte"))?;
    if version[0] != MODEL_FORMAT_VERSION {
        return Err(Error::Version(format!(
            "model format version {} (this build reads {})",
            version[0], MODEL_FORMAT_VERSION
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| corrupt(path, "missing header length"))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)
        .map_err(|_| corrupt(path, "header shorter than declared"))?;
    let header: ModelHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Version(format!("unreadable model header: {e}")))?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let declared: usize = header.blocks.iter().map(|b| b.rows * b.cols * 8).sum();
    if payload.len() != declared {
        return Err(corrupt(
            path,
            format!(
                "payload holds {} bytes, header declares {declared}",
                payload.len()
            ),
        ));
    }
    let mut reader = BlockReader {
        infos: header.blocks.iter(),
        payload: &payload,
        offset: 0,
        path,
    };
    match header.method.as_str() {
        "trca" => {
            let mut filters = Vec::with_capacity(header.n_stimuli);
            for s in 0..header.n_stimuli {
                filters.push(reader.next_vector(&format!("filter_{s}"))?);
            }
            let mut templates = Vec::with_capacity(header.n_stimuli);
            for s in 0..header.n_stimuli {
                templates.push(reader.next_matrix(&format!("template_{s}"))?);
            }
            let ensemble = if header.blocks.len() > 2 * header.n_stimuli {
                Some(reader.next_matrix("ensemble")?)
            } else {
                None
            };
            Ok(SavedModel::Trca(TrcaModel {
                filters,
                templates,
                ensemble,
            }))
        }
        "adtrca" => {
            let mut temporal_filters = Vec::with_capacity(header.n_stimuli);
            for s in 0..header.n_stimuli {
                let m = reader.next_matrix(&format!("temporal_filter_{s}"))?;
                temporal_filters.push(
                    TemporalFilter::from_matrix(m)
                        .map_err(|e| corrupt(path, format!("bad temporal filter: {e}")))?,
                );
            }
            let mut filters = Vec::with_capacity(header.n_stimuli);
            for s in 0..header.n_stimuli {
                filters.push(reader.next_vector(&format!("filter_{s}"))?);
            }
            let mut templates = Vec::with_capacity(header.n_stimuli);
            for s in 0..header.n_stimuli {
                templates.push(reader.next_matrix(&format!("template_{s}"))?);
            }
            let ensemble = if header.blocks.len() > 3 * header.n_stimuli {
                Some(reader.next_matrix("ensemble")?)
            } else {
                None
            };
            Ok(SavedModel::AdTrca(AdTrcaModel {
                temporal_filters,
                filters,
                templates,
                ensemble,
                test_filter: header.test_filter.unwrap_or_default(),
            }))
        }
        other => Err(Error::Version(format!("unknown method tag {other:?}"))),
    }
}
