//! One-sided FFT magnitude spectra and Welch power spectral density.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Signal;

/// FFT length selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FftSize {
    /// Next power of two at or above the signal length.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrum {
    /// `|S(f)|` for bins `0..=n_fft/2`.
    pub magnitudes: Vec<f64>,
    pub bin_hz: f64,
    pub n_fft: usize,
}

/// Zero-pads the signal to `n_fft` and returns the one-sided magnitude spectrum.
pub fn fft_magnitude(sig: &Signal, size: FftSize) -> Result<MagnitudeSpectrum> {
    let len = sig.len();
    let n_fft = match size {
        FftSize::Auto => len.next_power_of_two().max(2),
        FftSize::Fixed(n) => {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::Argument(format!("FFT length {n} is not a power of two >= 2")));
            }
            if n < len {
                return Err(Error::Length { n_fft: n, len });
            }
            n
        }
    };
    let mut buf: Vec<Complex64> = sig
        .samples()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(MagnitudeSpectrum {
        magnitudes: buf[..=n_fft / 2].iter().map(|c| c.norm()).collect(),
        bin_hz: f64::from(sig.sample_rate()) / n_fft as f64,
        n_fft,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann: `0.5 − 0.5·cos(2πn/N)`.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Fraction of `segment_len` shared by consecutive segments, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_len: 256,
            overlap: 0.5,
            window: Window::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// One-sided density, amplitude²/Hz.
    pub power: Vec<f64>,
    pub freqs: Vec<f64>,
    pub segment_len: usize,
    pub overlap: f64,
    pub window: Window,
    pub n_segments: usize,
    /// True when the input was shorter than the configured segment and a
    /// single shorter segment was used instead.
    pub fallback: bool,
}

impl PsdEstimate {
    /// Rectangle-rule integral of the density over frequency.
    pub fn integral(&self) -> f64 {
        let df = if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        };
        self.power.iter().sum::<f64>() * df
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Welch estimate: the mean of windowed, overlapping segment periodograms.
pub fn welch_psd(values: &[f64], sample_rate: f64, cfg: &WelchConfig) -> Result<PsdEstimate> {
    validate(sample_rate, cfg)?;
    if values.len() < cfg.segment_len {
        return Err(Error::InsufficientData {
            needed: cfg.segment_len,
            got: values.len(),
        });
    }
    Ok(welch_unchecked(values, sample_rate, cfg, false))
}

/// Like [`welch_psd`], but inputs shorter than the segment length are
/// estimated from one segment whose length is the largest power of two
/// that fits.
pub fn welch_psd_with_fallback(values: &[f64], sample_rate: f64, cfg: &WelchConfig) -> Result<PsdEstimate> {
    validate(sample_rate, cfg)?;
    if values.len() >= cfg.segment_len {
        return Ok(welch_unchecked(values, sample_rate, cfg, false));
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let seg = 1usize << (usize::BITS - 1 - values.len().leading_zeros());
    let short = WelchConfig {
        segment_len: seg,
        overlap: 0.0,
        window: cfg.window,
    };
    Ok(welch_unchecked(&values[..seg], sample_rate, &short, true))
}

fn validate(sample_rate: f64, cfg: &WelchConfig) -> Result<()> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Argument(format!("sample rate {sample_rate} must be positive")));
    }
    if cfg.segment_len < 2 {
        return Err(Error::Argument("Welch segment length must be >= 2".into()));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::Argument(format!("overlap {} outside [0, 1)", cfg.overlap)));
    }
    Ok(())
}

fn welch_unchecked(values: &[f64], sample_rate: f64, cfg: &WelchConfig, fallback: bool) -> PsdEstimate {
    let seg = cfg.segment_len;
    let step = (seg - (seg as f64 * cfg.overlap).floor() as usize).max(1);
    let n_segments = 1 + (values.len() - seg) / step;
    let window = cfg.window.coefficients(seg);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg / 2 + 1;

    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut acc = vec![0.0; n_bins];
    for t in 0..n_segments {
        let start = t * step;
        for ((b, &x), &w) in buf.iter_mut().zip(&values[start..start + seg]).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }

    let scale = 1.0 / (sample_rate * win_power * n_segments as f64);
    // bins that have a negative-frequency twin carry its power too
    let last_doubled = if seg.is_multiple_of(2) { n_bins - 1 } else { n_bins };
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if k > 0 && k < last_doubled {
                2.0 * p * scale
            } else {
                p * scale
            }
        })
        .collect();
    PsdEstimate {
        power,
        freqs: (0..n_bins).map(|k| k as f64 * sample_rate / seg as f64).collect(),
        segment_len: seg,
        overlap: cfg.overlap,
        window: cfg.window,
        n_segments,
        fallback,
    }
}
