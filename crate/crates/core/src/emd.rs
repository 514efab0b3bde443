//! Empirical mode decomposition.
//!
//! Sifting repeatedly subtracts the mean of the upper and lower cubic-spline
//! envelopes until the candidate is an intrinsic mode function. Envelope ends
//! are anchored by mirroring the two extrema nearest each boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of samples ignored at each end when checking the
/// extrema/zero-crossing balance of an IMF.
pub const IMF_EDGE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    pub max_imfs: usize,
    pub max_sift_iters: usize,
    /// Cauchy-type stop: `Σ(h_prev − h)² / Σ h_prev²` must fall below this.
    pub sd_threshold: f64,
    pub boundary: Boundary,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_imfs: 5,
            max_sift_iters: 100,
            sd_threshold: 0.2,
            boundary: Boundary::Mirror,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_imfs == 0 {
            return Err(Error::Argument("max_imfs must be >= 1".into()));
        }
        if self.max_sift_iters == 0 {
            return Err(Error::Argument("max_sift_iters must be >= 1".into()));
        }
        if self.sd_threshold.is_nan() || self.sd_threshold <= 0.0 {
            return Err(Error::Argument("sd_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extrema {
    pub maxima: Vec<usize>,
    pub minima: Vec<usize>,
}

impl Extrema {
    pub fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }

    fn can_envelope(&self) -> bool {
        self.maxima.len() >= 2 && self.minima.len() >= 2
    }
}

/// Strict local extrema by neighbour comparison. A flat run bounded by
/// lower (higher) values on both sides counts once, at its left edge.
pub fn find_extrema(values: &[f64]) -> Extrema {
    let mut out = Extrema::default();
    let n = values.len();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        let v = values[i];
        let prev = values[i - 1];
        if v == prev {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && values[j + 1] == v {
            j += 1;
        }
        if j + 1 < n {
            let next = values[j + 1];
            if v > prev && v > next {
                out.maxima.push(i);
            } else if v < prev && v < next {
                out.minima.push(i);
            }
        }
        i = j + 1;
    }
    out
}

fn is_nonneg(v: f64) -> bool {
    v >= 0.0
}

/// Sign changes between consecutive samples (zero counts as positive).
pub fn count_zero_crossings(values: &[f64]) -> usize {
    values.windows(2).filter(|w| is_nonneg(w[0]) != is_nonneg(w[1])).count()
}

/// `#extrema − #zero-crossings` over the interior, excluding
/// `margin_frac` of the samples at each end.
pub fn imf_balance(values: &[f64], margin_frac: f64) -> i64 {
    let n = values.len();
    let m = (n as f64 * margin_frac).floor() as usize;
    if n < 2 * m + 2 {
        return 0;
    }
    let (lo, hi) = (m, n - m);
    let ext = find_extrema(values);
    let n_ext = ext
        .maxima
        .iter()
        .chain(&ext.minima)
        .filter(|&&i| i >= lo && i < hi)
        .count();
    let n_zc = count_zero_crossings(&values[lo..hi]);
    n_ext as i64 - n_zc as i64
}

/// True when extrema and zero crossings differ by at most one on the interior.
pub fn satisfies_imf_balance(values: &[f64]) -> bool {
    imf_balance(values, IMF_EDGE_MARGIN).abs() <= 1
}

/// Natural cubic spline through `(xs, ys)` evaluated at `0, 1, …, len − 1`.
/// `xs` must be strictly increasing and span the evaluation range.
fn natural_spline_on_grid(xs: &[f64], ys: &[f64], len: usize) -> Vec<f64> {
    let k = xs.len();
    debug_assert!(k >= 2 && xs.len() == ys.len());
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();

    // second derivatives; zero at both ends
    let mut m = vec![0.0; k];
    if k > 2 {
        let inner = k - 2;
        let mut diag = vec![0.0; inner];
        let mut upper = vec![0.0; inner];
        let mut rhs = vec![0.0; inner];
        for r in 0..inner {
            let i = r + 1;
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            upper[r] = h[i];
            rhs[r] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        // Thomas algorithm; sub-diagonal entry of row r is h[r]
        for r in 1..inner {
            let w = h[r] / diag[r - 1];
            diag[r] -= w * upper[r - 1];
            rhs[r] -= w * rhs[r - 1];
        }
        m[inner] = rhs[inner - 1] / diag[inner - 1];
        for r in (0..inner - 1).rev() {
            m[r + 1] = (rhs[r] - upper[r] * m[r + 2]) / diag[r];
        }
    }

    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for t in 0..len {
        let t = t as f64;
        while seg + 2 < k && t > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let hh = h[seg];
        let a = x1 - t;
        let b = t - x0;
        let v = m[seg] * a * a * a / (6.0 * hh)
            + m[seg + 1] * b * b * b / (6.0 * hh)
            + (ys[seg] / hh - m[seg] * hh / 6.0) * a
            + (ys[seg + 1] / hh - m[seg + 1] * hh / 6.0) * b;
        out.push(v);
    }
    out
}

/// Natural cubic spline through the given extrema, evaluated at every index.
/// The two extrema nearest each end are reflected about that end so the
/// spline covers the whole range.
pub fn envelope(values: &[f64], extrema: &[usize]) -> Result<Vec<f64>> {
    if extrema.len() < 2 {
        return Err(Error::TooFewExtrema { found: extrema.len() });
    }
    let n = values.len();
    let last = (n - 1) as f64;
    let k = extrema.len();

    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(k + 4);
    for &i in extrema[..2].iter().rev() {
        knots.push((-(i as f64), values[i]));
    }
    knots.extend(extrema.iter().map(|&i| (i as f64, values[i])));
    for &i in extrema[k - 2..].iter().rev() {
        knots.push((2.0 * last - i as f64, values[i]));
    }
    // reflections of extrema sitting on the boundary coincide with them
    knots.dedup_by(|cur, prev| cur.0 <= prev.0);

    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    Ok(natural_spline_on_grid(&xs, &ys, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftOutcome {
    pub imf: Vec<f64>,
    /// The stop rule was met before `max_sift_iters`.
    pub converged: bool,
    pub iterations: usize,
}

/// Extracts one IMF.
///
/// Stops once the Cauchy-type difference drops under `sd_threshold` and the
/// candidate has balanced extrema and zero crossings, or after
/// `max_sift_iters`. Fails with `NotOscillatory` when the input itself
/// lacks two maxima and two minima.
pub fn sift(values: &[f64], cfg: &EmdConfig) -> Result<SiftOutcome> {
    cfg.validate()?;
    if values.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: values.len(),
        });
    }
    let mut h = values.to_vec();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_sift_iters {
        let ext = find_extrema(&h);
        if !ext.can_envelope() {
            if iterations == 0 {
                return Err(Error::NotOscillatory);
            }
            break;
        }
        let upper = envelope(&h, &ext.maxima)?;
        let lower = envelope(&h, &ext.minima)?;
        let mut diff = 0.0;
        let mut energy = 0.0;
        for ((x, u), l) in h.iter_mut().zip(&upper).zip(&lower) {
            let mean = 0.5 * (u + l);
            energy += *x * *x;
            diff += mean * mean;
            *x -= mean;
        }
        iterations += 1;
        let sd = if energy > 0.0 { diff / energy } else { 0.0 };
        if sd < cfg.sd_threshold && satisfies_imf_balance(&h) {
            converged = true;
            break;
        }
    }
    Ok(SiftOutcome {
        imf: h,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImfDecomposition {
    /// Highest characteristic frequency first.
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub sift_counts: Vec<usize>,
    pub converged: Vec<bool>,
}

impl ImfDecomposition {
    pub fn len(&self) -> usize {
        self.imfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imfs.is_empty()
    }

    /// `Σ imfs + residual`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }

    /// `max |input − reconstruction|`, relative to `max |input|`.
    pub fn reconstruction_error(&self, input: &[f64]) -> f64 {
        let scale = input.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = self
            .reconstruct()
            .iter()
            .zip(input)
            .fold(0.0f64, |a, (r, x)| a.max((r - x).abs()));
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

/// Sifts IMFs out of `values` until the residual can no longer be
/// enveloped (monotone, constant, or a single turn) or `max_imfs` is reached.
pub fn decompose(values: &[f64], cfg: &EmdConfig) -> Result<ImfDecomposition> {
    cfg.validate()?;
    if values.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: values.len(),
        });
    }
    let mut residual = values.to_vec();
    let mut out = ImfDecomposition {
        imfs: Vec::new(),
        residual: Vec::new(),
        sift_counts: Vec::new(),
        converged: Vec::new(),
    };
    while out.imfs.len() < cfg.max_imfs {
        if !find_extrema(&residual).can_envelope() {
            break;
        }
        let step = match sift(&residual, cfg) {
            Ok(s) => s,
            Err(Error::NotOscillatory) => break,
            Err(e) => return Err(e),
        };
        for (r, v) in residual.iter_mut().zip(&step.imf) {
            *r -= v;
        }
        out.imfs.push(step.imf);
        out.sift_counts.push(step.iterations);
        out.converged.push(step.converged);
    }
    out.residual = residual;
    Ok(out)
}
