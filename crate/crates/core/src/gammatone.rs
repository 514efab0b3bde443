//! ERB-spaced gammatone filterbank and gammatone cepstral coefficients.
//!
//! Each channel is a fourth-order gammatone approximated by four cascaded
//! complex one-pole sections at the channel's centre frequency, with
//! bandwidth `1.019 · ERB(fc)` and unit gain at `fc`. Frame energies are
//! root-compressed and decorrelated with an orthonormal DCT-II.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Signal;

/// Floor applied to frame energies before compression.
pub const ENERGY_FLOOR: f64 = 1e-12;

const GAMMATONE_ORDER: usize = 4;
const BANDWIDTH_FACTOR: f64 = 1.019;

/// Glasberg–Moore ERB-rate (in ERB numbers).
pub fn erb_rate(hz: f64) -> f64 {
    21.4 * (4.37 * hz / 1000.0 + 1.0).log10()
}

pub fn erb_rate_to_hz(rate: f64) -> f64 {
    (10f64.powf(rate / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Equivalent rectangular bandwidth at `hz`.
pub fn erb_bandwidth(hz: f64) -> f64 {
    24.7 * (4.37 * hz / 1000.0 + 1.0)
}

/// `n` centre frequencies uniformly spaced in ERB-rate, endpoints included.
pub fn erb_center_freqs(n: usize, f_low: f64, f_high: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 filters, got {n}")));
    }
    if !(f_low > 0.0 && f_low < f_high && f_high.is_finite()) {
        return Err(Error::Argument(format!("invalid band {f_low}..{f_high} Hz")));
    }
    let lo = erb_rate(f_low);
    let hi = erb_rate(f_high);
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| match i {
            0 => f_low,
            i if i == n - 1 => f_high,
            i => erb_rate_to_hz(lo + step * i as f64),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneFilterbank {
    center_freqs: Vec<f64>,
    f_low: f64,
    f_high: f64,
    sample_rate: u32,
    /// Per-channel complex pole.
    poles: Vec<Complex64>,
    gains: Vec<f64>,
}

impl GammatoneFilterbank {
    pub fn new(n_filters: usize, f_low: f64, f_high: f64, sample_rate: u32) -> Result<Self> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if f_high >= nyquist {
            return Err(Error::Argument(format!(
                "upper band edge {f_high} Hz must lie below Nyquist ({nyquist} Hz)"
            )));
        }
        let center_freqs = erb_center_freqs(n_filters, f_low, f_high)?;
        let fs = f64::from(sample_rate);
        let (poles, gains) = center_freqs
            .iter()
            .map(|&fc| {
                let b = BANDWIDTH_FACTOR * erb_bandwidth(fc);
                let radius = (-2.0 * PI * b / fs).exp();
                let pole = Complex64::from_polar(radius, 2.0 * PI * fc / fs);
                (pole, 1.0 - radius)
            })
            .unzip();
        Ok(Self {
            center_freqs,
            f_low,
            f_high,
            sample_rate,
            poles,
            gains,
        })
    }

    /// 64 channels from 50 Hz to 99% of Nyquist.
    pub fn with_defaults(sample_rate: u32) -> Result<Self> {
        Self::new(64, 50.0, 0.99 * f64::from(sample_rate) / 2.0, sample_rate)
    }

    pub fn n_filters(&self) -> usize {
        self.center_freqs.len()
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.center_freqs
    }

    pub fn band(&self) -> (f64, f64) {
        (self.f_low, self.f_high)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn order(&self) -> usize {
        GAMMATONE_ORDER
    }

    /// Complex channel output for a real input.
    pub fn filter_channel(&self, channel: usize, input: &[f64]) -> Vec<Complex64> {
        let pole = self.poles[channel];
        let gain = self.gains[channel];
        let mut state = [Complex64::new(0.0, 0.0); GAMMATONE_ORDER];
        input
            .iter()
            .map(|&x| {
                let mut v = Complex64::new(x, 0.0);
                for s in state.iter_mut() {
                    *s = v * gain + pole * *s;
                    v = *s;
                }
                v
            })
            .collect()
    }

    /// Analytic magnitude response of one channel at `hz`.
    pub fn magnitude_response(&self, channel: usize, hz: f64) -> f64 {
        let w = 2.0 * PI * hz / f64::from(self.sample_rate);
        let z_inv = Complex64::from_polar(1.0, -w);
        let stage = self.gains[channel] / (Complex64::new(1.0, 0.0) - self.poles[channel] * z_inv).norm();
        stage.powi(GAMMATONE_ORDER as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfccConfig {
    pub n_filters: usize,
    pub f_low: f64,
    /// `None` selects 99% of Nyquist.
    pub f_high: Option<f64>,
    pub frame_secs: f64,
    pub hop_secs: f64,
    pub n_coeffs: usize,
}

impl Default for GfccConfig {
    fn default() -> Self {
        Self {
            n_filters: 64,
            f_low: 50.0,
            f_high: None,
            frame_secs: 0.025,
            hop_secs: 0.010,
            n_coeffs: 13,
        }
    }
}

impl GfccConfig {
    pub fn filterbank(&self, sample_rate: u32) -> Result<GammatoneFilterbank> {
        let f_high = self.f_high.unwrap_or(0.99 * f64::from(sample_rate) / 2.0);
        GammatoneFilterbank::new(self.n_filters, self.f_low, f_high, sample_rate)
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_secs * f64::from(sample_rate)).round().max(1.0) as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_secs * f64::from(sample_rate)).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfccFrameMatrix {
    /// `frames × n_coeffs`.
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop_len: usize,
    pub n_coeffs: usize,
}

/// Orthonormal DCT-II, first `keep` coefficients.
fn dct2(input: &[f64], keep: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..keep)
        .map(|k| {
            let sum: f64 = input
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            let norm = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            sum * norm
        })
        .collect()
}

/// Frame-wise GFCCs: channel energies, cube-root compression relative to
/// the energy floor (so silence maps to zero), then DCT-II.
pub fn gfcc(sig: &Signal, bank: &GammatoneFilterbank, cfg: &GfccConfig) -> Result<GfccFrameMatrix> {
    if sig.sample_rate() != bank.sample_rate() {
        return Err(Error::Argument(format!(
            "signal rate {} Hz does not match filterbank rate {} Hz",
            sig.sample_rate(),
            bank.sample_rate()
        )));
    }
    if cfg.n_coeffs == 0 || cfg.n_coeffs > bank.n_filters() {
        return Err(Error::Argument(format!(
            "n_coeffs must be in 1..={}, got {}",
            bank.n_filters(),
            cfg.n_coeffs
        )));
    }
    let frame_len = cfg.frame_len(sig.sample_rate());
    let hop_len = cfg.hop_len(sig.sample_rate());
    if sig.len() < frame_len {
        return Err(Error::InsufficientData {
            needed: frame_len,
            got: sig.len(),
        });
    }
    let n_frames = 1 + (sig.len() - frame_len) / hop_len;

    // energies[frame][channel]
    let mut energies = vec![vec![0.0; bank.n_filters()]; n_frames];
    for ch in 0..bank.n_filters() {
        let out = bank.filter_channel(ch, sig.samples());
        for (f, row) in energies.iter_mut().enumerate() {
            let start = f * hop_len;
            row[ch] = out[start..start + frame_len].iter().map(|c| c.norm_sqr()).sum::<f64>() / frame_len as f64;
        }
    }

    let floor = ENERGY_FLOOR.cbrt();
    let frames = energies
        .iter()
        .map(|row| {
            let compressed: Vec<f64> = row.iter().map(|&e| e.max(ENERGY_FLOOR).cbrt() - floor).collect();
            dct2(&compressed, cfg.n_coeffs)
        })
        .collect();
    Ok(GfccFrameMatrix {
        frames,
        frame_len,
        hop_len,
        n_coeffs: cfg.n_coeffs,
    })
}

/// Mean of each coefficient over frames.
pub fn gfcc_utterance_vector(matrix: &GfccFrameMatrix) -> Vec<f64> {
    let n = matrix.frames.len().max(1) as f64;
    let mut out = vec![0.0; matrix.n_coeffs];
    for frame in &matrix.frames {
        for (o, v) in out.iter_mut().zip(frame) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= n);
    out
}
