//! Audio and manifest loading, plus z-score scaling.
//!
//! WAV decoding goes through `hound`; every integer encoding is mapped onto
//! the ±1.0 full-scale range by dividing by `2^(bits-1)`, and multichannel
//! audio is folded to mono by averaging the channels of each frame.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Severity class name, compared case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeverityLabel(String);

impl SeverityLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Parse("empty severity label".into()));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SeverityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: SeverityLabel,
}

/// Dataset listing: one audio file per row with its severity label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    label_set: Vec<SeverityLabel>,
    base_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut label_set: Vec<SeverityLabel> = Vec::new();
        for entry in &entries {
            if !seen.insert(entry.path.as_str()) {
                return Err(Error::DuplicateEntry(entry.path.clone()));
            }
            if !label_set.contains(&entry.label) {
                label_set.push(entry.label.clone());
            }
        }
        Ok(Self {
            entries,
            label_set,
            base_dir: None,
        })
    }

    /// Relative entry paths are resolved against this directory.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn label_set(&self) -> &[SeverityLabel] {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["path", "label"]).map_err(|e| csv_error(path, e))?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.as_str()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(format!("{}: {e}", path.display()))
    }
}

/// Reads a `path,label` CSV. Relative paths in the manifest are resolved
/// against the manifest's own directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(BufReader::new(file))?;
    if let Some(parent) = path.parent() {
        manifest.base_dir = Some(parent.to_path_buf());
    }
    Ok(manifest)
}

pub fn parse_manifest<R: std::io::Read>(reader: R) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("manifest header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("manifest is missing the `{name}` column")))
    };
    let path_col = col("path")?;
    let label_col = col("label")?;

    let mut entries = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("manifest row {}: {e}", line + 1)))?;
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Parse(format!("manifest row {} is short", line + 1)))
        };
        let path = field(path_col)?.to_string();
        if path.is_empty() {
            return Err(Error::Parse(format!("manifest row {} has an empty path", line + 1)));
        }
        let label = SeverityLabel::new(field(label_col)?)?;
        entries.push(ManifestEntry { path, label });
    }
    Manifest::from_entries(entries)
}

/// Loads a PCM or IEEE-float WAV file as a mono signal in ±1.0 full scale.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_wav(BufReader::new(file), &path.display().to_string())
}

pub fn decode_wav<R: std::io::Read>(reader: R, source_id: &str) -> Result<Signal> {
    let mut wav = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = wav.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::Parse("WAV header declares zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => wav
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            wav.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        (fmt, bits) => return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample"))),
    };

    if interleaved.is_empty() {
        return Err(Error::EmptySignal);
    }
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if mono.is_empty() {
        return Err(Error::EmptySignal);
    }
    Signal::new(mono, spec.sample_rate, source_id)
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Parse(format!("malformed or truncated WAV: {io}")),
        hound::Error::FormatError(msg) => Error::Parse(format!("malformed WAV: {msg}")),
        hound::Error::Unsupported => Error::UnsupportedFormat("WAV encoding not supported".into()),
        other => Error::Parse(other.to_string()),
    }
}

/// Writes 32-bit float mono WAV; reloading reproduces `f32`-representable samples exactly.
pub fn write_wav_f32(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| write_error(path, e))?;
    for &s in &signal.samples {
        w.write_sample(s as f32).map_err(|e| write_error(path, e))?;
    }
    w.finalize().map_err(|e| write_error(path, e))
}

/// Writes 16-bit PCM mono WAV using the same full-scale mapping the reader uses.
pub fn write_wav_pcm16(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| write_error(path, e))?;
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| write_error(path, e))?;
    }
    w.finalize().map_err(|e| write_error(path, e))
}

fn write_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Parse(other.to_string()),
    }
}

/// Result of standardizing one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScored {
    pub values: Vec<f64>,
    /// Set when the input had zero spread; `values` is then all zeros.
    pub degenerate_scale: bool,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n − 1 denominator).
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// `(x − mean) / sd` with the sample standard deviation.
pub fn zscore_normalize(values: &[f64]) -> Result<ZScored> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let sd = sample_variance(values).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ok(ZScored {
            values: vec![0.0; values.len()],
            degenerate_scale: true,
        });
    }
    Ok(ZScored {
        values: values.iter().map(|v| (v - m) / sd).collect(),
        degenerate_scale: false,
    })
}

/// Per-column z-score parameters fitted on one matrix and reusable on another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns whose spread was zero; they map to 0.
    pub degenerate_columns: Vec<usize>,
}

impl ColumnScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: rows.len(),
            });
        }
        let d = rows[0].len();
        let mut means = Vec::with_capacity(d);
        let mut sds = Vec::with_capacity(d);
        let mut degenerate_columns = Vec::new();
        let mut column = vec![0.0; rows.len()];
        for j in 0..d {
            for (c, row) in column.iter_mut().zip(rows) {
                if row.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        got: row.len(),
                    });
                }
                *c = row[j];
            }
            let m = mean(&column);
            let sd = sample_variance(&column).sqrt();
            if sd == 0.0 || !sd.is_finite() {
                degenerate_columns.push(j);
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Self {
            means,
            sds,
            degenerate_columns,
        })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|row| {
                if row.len() != self.means.len() {
                    return Err(Error::Dimension {
                        expected: self.means.len(),
                        got: row.len(),
                    });
                }
                Ok(row
                    .iter()
                    .zip(self.means.iter().zip(&self.sds))
                    .map(|(&v, (&m, &sd))| {
                        if sd == 0.0 || !sd.is_finite() {
                            0.0
                        } else {
                            (v - m) / sd
                        }
                    })
                    .collect())
            })
            .collect()
    }
}
