//! Source-filter generator for speech-like test corpora.
//!
//! A glottal impulse train with per-cycle period (jitter) and amplitude
//! (shimmer) perturbation drives a cascade of two-pole formant resonators.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{write_wav_pcm16, Manifest, ManifestEntry, SeverityLabel, Signal};

/// Output is scaled so its peak sits at this level.
const PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f0: f64,
    pub jitter: f64,
    pub shimmer: f64,
    /// `(centre Hz, bandwidth Hz)`, at most three.
    pub formants: Vec<(f64, f64)>,
    pub duration: f64,
    pub sample_rate: u32,
    /// `None` adds no noise.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            f0: 120.0,
            jitter: 0.0,
            shimmer: 0.0,
            formants: vec![(700.0, 130.0), (1220.0, 70.0), (2600.0, 160.0)],
            duration: 0.5,
            sample_rate: 16_000,
            noise_snr_db: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let sr = self.sample_rate as f64;
        if self.sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if !(self.f0 > 0.0 && self.f0 < sr / 4.0) {
            return Err(Error::Argument(format!("f0 {} must lie in (0, {})", self.f0, sr / 4.0)));
        }
        for (name, v) in [("jitter", self.jitter), ("shimmer", self.shimmer)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::Argument(format!("{name} {v} outside [0, 0.5]")));
            }
        }
        if self.formants.len() > 3 {
            return Err(Error::Argument(format!(
                "{} formants given, at most 3",
                self.formants.len()
            )));
        }
        for &(f, bw) in &self.formants {
            if !(f > 0.0 && f < sr / 2.0 && bw > 0.0) {
                return Err(Error::Argument(format!("formant ({f}, {bw}) invalid at {sr} Hz")));
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Argument(format!("duration {} must be positive", self.duration)));
        }
        if (self.duration * sr).round() < 4.0 {
            return Err(Error::Argument("duration too short for the sample rate".into()));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::Argument("noise SNR must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Two-pole resonator `y[n] = a·x[n] + b·y[n−1] + c·y[n−2]`, unit gain at DC.
fn resonate(x: &mut [f64], freq: f64, bw: f64, sr: f64) {
    let t = 1.0 / sr;
    let c = -(-2.0 * std::f64::consts::PI * bw * t).exp();
    let b = 2.0 * (-std::f64::consts::PI * bw * t).exp() * (2.0 * std::f64::consts::PI * freq * t).cos();
    let a = 1.0 - b - c;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = a * *v + b * y1 + c * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

pub fn synth_utterance(spec: &SynthSpec) -> Result<Signal> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let n = (spec.duration * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut x = vec![0.0; n];
    let period = sr / spec.f0;
    let mut t = 0.0f64;
    while (t.round() as usize) < n {
        let amp = 1.0 + spec.shimmer * rng.random_range(-1.0..=1.0);
        x[t.round() as usize] += amp;
        t += period * (1.0 + spec.jitter * rng.random_range(-1.0..=1.0));
    }
    for &(f, bw) in &spec.formants {
        resonate(&mut x, f, bw, sr);
    }

    if let Some(snr) = spec.noise_snr_db {
        let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
        for v in &mut x {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
    Signal::new(x, spec.sample_rate, format!("synth:{}", spec.seed))
}

/// A class in a generated corpus. Each utterance draws its f0 uniformly
/// from `spec.f0 · (1 ± f0_spread)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub label: String,
    pub spec: SynthSpec,
    #[serde(default)]
    pub f0_spread: f64,
}

impl ClassTemplate {
    /// Steady phonation with light noise.
    pub fn typical() -> Self {
        Self {
            label: "typical".into(),
            spec: SynthSpec {
                jitter: 0.005,
                shimmer: 0.02,
                noise_snr_db: Some(30.0),
                ..SynthSpec::default()
            },
            f0_spread: 0.15,
        }
    }

    /// Strong cycle-to-cycle perturbation and a noisier source.
    pub fn disordered() -> Self {
        Self {
            label: "disordered".into(),
            spec: SynthSpec {
                jitter: 0.15,
                shimmer: 0.3,
                noise_snr_db: Some(15.0),
                ..SynthSpec::default()
            },
            f0_spread: 0.15,
        }
    }
}

/// Seed for utterance `index` of a corpus generated with `corpus_seed`.
pub fn utterance_seed(corpus_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Writes `n_per_class` WAVs per template into `out_dir` plus a
/// `manifest.csv` with paths relative to it. Returns the manifest.
pub fn synth_corpus(
    n_per_class: usize,
    templates: &[ClassTemplate],
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Manifest> {
    synth_corpus_counts(&vec![n_per_class; templates.len()], templates, out_dir, seed)
}

/// Like [`synth_corpus`] with a separate utterance count per template.
pub fn synth_corpus_counts(
    counts: &[usize],
    templates: &[ClassTemplate],
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if templates.len() < 2 {
        return Err(Error::Argument("a corpus needs at least 2 classes".into()));
    }
    if counts.len() != templates.len() {
        return Err(Error::Argument("one utterance count per class is required".into()));
    }
    for t in templates {
        SeverityLabel::new(t.label.clone())?;
        t.spec.validate()?;
        if !(0.0..1.0).contains(&t.f0_spread) {
            return Err(Error::Argument(format!("f0 spread {} outside [0, 1)", t.f0_spread)));
        }
        if t.label.contains(['/', '\\']) {
            return Err(Error::Argument(format!(
                "label `{}` cannot be used in a file name",
                t.label
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let jobs: Vec<(usize, &ClassTemplate, usize)> = templates
        .iter()
        .zip(counts)
        .flat_map(|(t, &n)| (0..n).map(move |i| (t, i)))
        .enumerate()
        .map(|(g, (t, i))| (g, t, i))
        .collect();

    let entries = jobs
        .par_iter()
        .map(|&(g, t, i)| {
            let s = utterance_seed(seed, g);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut spec = t.spec.clone();
            spec.f0 *= 1.0 + t.f0_spread * rng.random_range(-1.0..=1.0);
            spec.seed = rng.next_u64();
            let signal = synth_utterance(&spec)?;
            let name = format!("{}_{i:04}.wav", t.label);
            write_wav_pcm16(&signal, out_dir.join(&name))?;
            Ok(ManifestEntry {
                path: name,
                label: SeverityLabel::new(t.label.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest::from_entries(entries)?.with_base_dir(out_dir);
    manifest.write_csv(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
