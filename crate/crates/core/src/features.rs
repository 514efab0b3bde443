//! The WHFEMD feature pipeline.
//!
//! A signal's FFT magnitude spectrum is decomposed by EMD ("FEMD"); the
//! first `j` IMFs feed five feature sets:
//!
//! | set      | contents                                             | dim (j=5, a=5) |
//! |----------|------------------------------------------------------|----------------|
//! | FESF     | statistics of each IMF                               | 25             |
//! | WHFESF   | statistics of each IMF's Walsh–Hadamard coefficients | 25             |
//! | FEPSD    | statistics of each IMF's Welch PSD                   | 25             |
//! | WH2FEPSD | WHFESF ⊕ total Welch power per IMF                   | 30             |
//! | WHGFCC   | WHFESF ⊕ utterance-mean GFCC                         | 38             |
//!
//! When the spectrum yields fewer than `j` IMFs the missing slots are
//! all-zero sequences, so every set keeps a fixed dimension.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emd::{self, EmdConfig, ImfDecomposition};
use crate::error::{Error, Result};
use crate::fwht::{self, Normalization, Ordering};
use crate::gammatone::{self, GfccConfig};
use crate::learn::LabeledDataset;
use crate::signal_io::{self, ColumnScaler, Manifest, Signal};
use crate::spectral::{self, FftSize, MagnitudeSpectrum, WelchConfig};

/// Tolerance for the `Σ IMF + residual = spectrum` identity.
const RECONSTRUCTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "FESF")]
    Fesf,
    #[serde(rename = "WHFESF")]
    Whfesf,
    #[serde(rename = "FEPSD")]
    Fepsd,
    #[serde(rename = "WH2FEPSD")]
    Wh2fepsd,
    #[serde(rename = "WHGFCC")]
    Whgfcc,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Fesf,
        FeatureSet::Whfesf,
        FeatureSet::Fepsd,
        FeatureSet::Wh2fepsd,
        FeatureSet::Whgfcc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FeatureSet::Fesf => "FESF",
            FeatureSet::Whfesf => "WHFESF",
            FeatureSet::Fepsd => "FEPSD",
            FeatureSet::Wh2fepsd => "WH2FEPSD",
            FeatureSet::Whgfcc => "WHGFCC",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|set| set.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown feature set `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Sd,
    Max,
    Min,
    Variance,
}

impl Statistic {
    /// The fixed default order: mean, SD, max, min, variance.
    pub const DEFAULT: [Statistic; 5] = [
        Statistic::Mean,
        Statistic::Sd,
        Statistic::Max,
        Statistic::Min,
        Statistic::Variance,
    ];
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Statistic::Mean),
            "sd" | "std" => Ok(Statistic::Sd),
            "max" => Ok(Statistic::Max),
            "min" => Ok(Statistic::Min),
            "var" | "variance" => Ok(Statistic::Variance),
            other => Err(Error::Argument(format!("unknown statistic `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fft_size: FftSize,
    /// `emd.max_imfs` is the number of IMF slots `j`.
    pub emd: EmdConfig,
    pub stats: Vec<Statistic>,
    pub fwht_ordering: Ordering,
    pub fwht_normalization: Normalization,
    pub welch: WelchConfig,
    pub gfcc: GfccConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fft_size: FftSize::Auto,
            emd: EmdConfig::default(),
            stats: Statistic::DEFAULT.to_vec(),
            fwht_ordering: Ordering::Sequency,
            fwht_normalization: Normalization::OneOverN,
            welch: WelchConfig::default(),
            gfcc: GfccConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_imfs(mut self, j: usize) -> Self {
        self.emd.max_imfs = j;
        self
    }

    pub fn imf_slots(&self) -> usize {
        self.emd.max_imfs
    }

    pub fn dim(&self, set: FeatureSet) -> usize {
        let j = self.imf_slots();
        let a = self.stats.len();
        match set {
            FeatureSet::Fesf | FeatureSet::Whfesf | FeatureSet::Fepsd => j * a,
            FeatureSet::Wh2fepsd => j * a + j,
            FeatureSet::Whgfcc => j * a + self.gfcc.n_coeffs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.emd.validate()?;
        if self.stats.is_empty() {
            return Err(Error::Argument("at least one statistic is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub set_id: FeatureSet,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// FFT magnitude spectrum and its EMD.
#[derive(Debug, Clone, PartialEq)]
pub struct Femd {
    pub spectrum: MagnitudeSpectrum,
    pub decomposition: ImfDecomposition,
    /// Exactly `j` sequences: the IMFs followed by all-zero padding.
    pub slots: Vec<Vec<f64>>,
    /// Fewer than `j` IMFs were found.
    pub short_decomposition: bool,
}

impl Femd {
    pub fn n_imfs(&self) -> usize {
        self.decomposition.len()
    }
}

/// FFT magnitude followed by EMD of the magnitude sequence.
pub fn femd(sig: &Signal, cfg: &PipelineConfig) -> Result<Femd> {
    cfg.validate()?;
    let spectrum = spectral::fft_magnitude(sig, cfg.fft_size)?;
    let decomposition = emd::decompose(&spectrum.magnitudes, &cfg.emd)?;
    let err = decomposition.reconstruction_error(&spectrum.magnitudes);
    if err > RECONSTRUCTION_TOL {
        return Err(Error::Invariant(format!(
            "spectrum reconstruction error {err:e} exceeds {RECONSTRUCTION_TOL:e}"
        )));
    }
    let j = cfg.imf_slots();
    let len = spectrum.magnitudes.len();
    let mut slots = decomposition.imfs.clone();
    let short_decomposition = slots.len() < j;
    slots.resize(j, vec![0.0; len]);
    Ok(Femd {
        spectrum,
        decomposition,
        slots,
        short_decomposition,
    })
}

/// `[mean, sample SD, max, min, sample variance]`.
pub fn stats5(values: &[f64]) -> Result<[f64; 5]> {
    let v = statistics(values, &Statistic::DEFAULT)?;
    Ok([v[0], v[1], v[2], v[3], v[4]])
}

/// Selected statistics in the order given.
pub fn statistics(values: &[f64], which: &[Statistic]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let mean = signal_io::mean(values);
    let var = signal_io::sample_variance(values);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(which
        .iter()
        .map(|s| match s {
            Statistic::Mean => mean,
            Statistic::Sd => var.sqrt(),
            Statistic::Max => max,
            Statistic::Min => min,
            Statistic::Variance => var,
        })
        .collect())
}

/// Per-signal bookkeeping produced alongside a feature vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFlags {
    pub n_imfs: usize,
    pub short_decomposition: bool,
    /// IMF slots whose Welch estimate used the short-input fallback.
    pub welch_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub vector: FeatureVector,
    pub flags: ExtractionFlags,
}

/// Computes several feature sets from one FEMD pass.
pub struct FeatureExtractor<'a> {
    sig: &'a Signal,
    cfg: &'a PipelineConfig,
    femd: Femd,
    welch_fallbacks: usize,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(sig: &'a Signal, cfg: &'a PipelineConfig) -> Result<Self> {
        Ok(Self {
            sig,
            cfg,
            femd: femd(sig, cfg)?,
            welch_fallbacks: 0,
        })
    }

    pub fn femd(&self) -> &Femd {
        &self.femd
    }

    pub fn flags(&self) -> ExtractionFlags {
        ExtractionFlags {
            n_imfs: self.femd.n_imfs(),
            short_decomposition: self.femd.short_decomposition,
            welch_fallbacks: self.welch_fallbacks,
        }
    }

    fn stats_of(&self, values: &[f64]) -> Result<Vec<f64>> {
        statistics(values, &self.cfg.stats)
    }

    pub fn fesf(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.cfg.dim(FeatureSet::Fesf));
        for slot in &self.femd.slots {
            out.extend(self.stats_of(slot)?);
        }
        Ok(out)
    }

    pub fn whfesf(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.cfg.dim(FeatureSet::Whfesf));
        for slot in &self.femd.slots {
            let wc = fwht::fwht(slot, self.cfg.fwht_ordering, self.cfg.fwht_normalization);
            out.extend(self.stats_of(&wc.coeffs)?);
        }
        Ok(out)
    }

    /// Welch PSD of every slot; the IMFs are indexed by frequency bin, so
    /// the estimate uses unit sampling along that axis.
    fn slot_psds(&mut self) -> Result<Vec<Vec<f64>>> {
        let mut fallbacks = 0;
        let psds = self
            .femd
            .slots
            .iter()
            .map(|slot| {
                let p = spectral::welch_psd_with_fallback(slot, 1.0, &self.cfg.welch)?;
                if p.fallback {
                    fallbacks += 1;
                }
                Ok(p.power)
            })
            .collect::<Result<Vec<_>>>()?;
        self.welch_fallbacks = fallbacks;
        Ok(psds)
    }

    pub fn fepsd(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.cfg.dim(FeatureSet::Fepsd));
        for psd in self.slot_psds()? {
            out.extend(self.stats_of(&psd)?);
        }
        Ok(out)
    }

    pub fn wh2fepsd(&mut self) -> Result<Vec<f64>> {
        let mut out = self.whfesf()?;
        out.extend(self.slot_psds()?.iter().map(|p| p.iter().sum::<f64>()));
        Ok(out)
    }

    pub fn whgfcc(&self) -> Result<Vec<f64>> {
        let mut out = self.whfesf()?;
        let bank = self.cfg.gfcc.filterbank(self.sig.sample_rate())?;
        let matrix = gammatone::gfcc(self.sig, &bank, &self.cfg.gfcc)?;
        out.extend(gammatone::gfcc_utterance_vector(&matrix));
        Ok(out)
    }

    pub fn extract(&mut self, set: FeatureSet) -> Result<FeatureVector> {
        let values = match set {
            FeatureSet::Fesf => self.fesf()?,
            FeatureSet::Whfesf => self.whfesf()?,
            FeatureSet::Fepsd => self.fepsd()?,
            FeatureSet::Wh2fepsd => self.wh2fepsd()?,
            FeatureSet::Whgfcc => self.whgfcc()?,
        };
        let want = self.cfg.dim(set);
        if values.len() != want {
            return Err(Error::Invariant(format!(
                "{set} produced {} values, expected {want}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("{set} value {i} is not finite")));
        }
        Ok(FeatureVector { values, set_id: set })
    }
}

pub fn extract(sig: &Signal, set: FeatureSet, cfg: &PipelineConfig) -> Result<Extraction> {
    let mut ex = FeatureExtractor::new(sig, cfg)?;
    let vector = ex.extract(set)?;
    Ok(Extraction {
        vector,
        flags: ex.flags(),
    })
}

pub fn fesf(sig: &Signal, cfg: &PipelineConfig) -> Result<FeatureVector> {
    extract(sig, FeatureSet::Fesf, cfg).map(|e| e.vector)
}

pub fn whfesf(sig: &Signal, cfg: &PipelineConfig) -> Result<FeatureVector> {
    extract(sig, FeatureSet::Whfesf, cfg).map(|e| e.vector)
}

pub fn fepsd(sig: &Signal, cfg: &PipelineConfig) -> Result<FeatureVector> {
    extract(sig, FeatureSet::Fepsd, cfg).map(|e| e.vector)
}

pub fn wh2fepsd(sig: &Signal, cfg: &PipelineConfig) -> Result<FeatureVector> {
    extract(sig, FeatureSet::Wh2fepsd, cfg).map(|e| e.vector)
}

pub fn whgfcc(sig: &Signal, cfg: &PipelineConfig) -> Result<FeatureVector> {
    extract(sig, FeatureSet::Whgfcc, cfg).map(|e| e.vector)
}

/// How to standardize the extracted matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Standardize {
    None,
    /// Statistics over all extracted rows.
    #[default]
    Corpus,
    /// Statistics over these manifest rows only (a training partition).
    TrainRows(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStatus {
    pub path: String,
    pub label: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flags: Option<ExtractionFlags>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExtraction {
    pub dataset: LabeledDataset,
    /// One entry per manifest row, in manifest order.
    pub files: Vec<FileStatus>,
    /// Columns with zero spread under the chosen standardization.
    pub degenerate_columns: Vec<usize>,
    /// Distinct sample rates seen, ascending.
    pub sample_rates: Vec<u32>,
}

impl MatrixExtraction {
    pub fn failures(&self) -> usize {
        self.files.iter().filter(|f| !f.ok).count()
    }
}

/// Extracts one feature set for every manifest entry. Entries are processed
/// on up to `threads` workers (all cores when `None`); rows keep manifest
/// order and unreadable files are reported rather than aborting the batch.
pub fn extract_matrix(
    manifest: &Manifest,
    set: FeatureSet,
    cfg: &PipelineConfig,
    standardize: &Standardize,
    threads: Option<usize>,
) -> Result<MatrixExtraction> {
    cfg.validate()?;
    let work = |i: usize| -> (usize, Result<(Signal, Extraction)>) {
        let entry = &manifest.entries()[i];
        let res = signal_io::load_wav(manifest.resolve(entry)).and_then(|sig| {
            let ex = extract(&sig, set, cfg)?;
            Ok((sig, ex))
        });
        (i, res)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| (0..manifest.len()).into_par_iter().map(work).collect());

    let mut files = Vec::with_capacity(manifest.len());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut source_ids = Vec::new();
    let mut kept_rows = Vec::new();
    let mut sample_rates = Vec::new();
    for (i, res) in results {
        let entry = &manifest.entries()[i];
        match res {
            Ok((sig, ex)) => {
                if !sample_rates.contains(&sig.sample_rate()) {
                    sample_rates.push(sig.sample_rate());
                }
                let label = manifest
                    .label_set()
                    .iter()
                    .position(|l| *l == entry.label)
                    .expect("manifest labels are in its label set");
                files.push(FileStatus {
                    path: entry.path.clone(),
                    label: entry.label.to_string(),
                    ok: true,
                    error: None,
                    sample_rate: Some(sig.sample_rate()),
                    flags: Some(ex.flags),
                });
                kept_rows.push(i);
                rows.push(ex.vector.values);
                labels.push(label);
                source_ids.push(entry.path.clone());
            }
            Err(e) => files.push(FileStatus {
                path: entry.path.clone(),
                label: entry.label.to_string(),
                ok: false,
                error: Some(e.to_string()),
                sample_rate: None,
                flags: None,
            }),
        }
    }
    sample_rates.sort_unstable();

    let mut degenerate_columns = Vec::new();
    let fit_rows: Option<Vec<Vec<f64>>> = match standardize {
        Standardize::None => None,
        Standardize::Corpus => Some(rows.clone()),
        Standardize::TrainRows(train) => Some(
            kept_rows
                .iter()
                .zip(&rows)
                .filter(|(i, _)| train.contains(i))
                .map(|(_, r)| r.clone())
                .collect(),
        ),
    };
    if let Some(fit_rows) = fit_rows {
        if fit_rows.len() >= 2 {
            let scaler = ColumnScaler::fit(&fit_rows)?;
            rows = scaler.transform(&rows)?;
            degenerate_columns = scaler.degenerate_columns;
        }
    }

    Ok(MatrixExtraction {
        dataset: LabeledDataset {
            feature_set: set.id().to_string(),
            source_ids,
            rows,
            labels,
            label_set: manifest.label_set().to_vec(),
            split_seed: None,
        },
        files,
        degenerate_columns,
        sample_rates,
    })
}

/// Writes `source_id,label,<SET>_0..<SET>_{d-1}` with round-trippable decimals.
pub fn write_feature_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_csv_to(ds, file).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_feature_csv_to<W: std::io::Write>(ds: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = ds.dim();
    let mut header = vec!["source_id".to_string(), "label".to_string()];
    header.extend((0..d).map(|k| format!("{}_{k}", ds.feature_set)));
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for ((id, row), &label) in ds.source_ids.iter().zip(&ds.rows).zip(&ds.labels) {
        let mut rec = vec![id.clone(), ds.label_set[label].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv_from(std::io::BufReader::new(file))
}

pub fn read_feature_csv_from<R: std::io::Read>(input: R) -> Result<LabeledDataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "source_id" || &headers[1] != "label" {
        return Err(Error::Parse(
            "feature CSV must start with `source_id,label` followed by feature columns".into(),
        ));
    }
    let feature_set = headers[2]
        .rsplit_once('_')
        .map(|(set, _)| set.to_string())
        .ok_or_else(|| Error::Parse(format!("bad feature column name `{}`", &headers[2])))?;
    let d = headers.len() - 2;

    let mut ds = LabeledDataset {
        feature_set,
        source_ids: Vec::new(),
        rows: Vec::new(),
        labels: Vec::new(),
        label_set: Vec::new(),
        split_seed: None,
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("feature CSV row {}: {e}", line + 1)))?;
        if rec.len() != d + 2 {
            return Err(Error::Dimension {
                expected: d + 2,
                got: rec.len(),
            });
        }
        let label = signal_io::SeverityLabel::new(&rec[1])?;
        let idx = match ds.label_set.iter().position(|l| *l == label) {
            Some(i) => i,
            None => {
                ds.label_set.push(label);
                ds.label_set.len() - 1
            }
        };
        let row = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("feature CSV row {}: `{s}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        ds.source_ids.push(rec[0].to_string());
        ds.rows.push(row);
        ds.labels.push(idx);
    }
    Ok(ds)
}
