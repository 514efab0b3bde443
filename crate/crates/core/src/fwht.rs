//! Fast Walsh–Hadamard transform.
//!
//! The butterfly produces coefficients in natural (Hadamard) order; sequency
//! order is reached by reading natural index `bitrev(gray(s))` for output
//! slot `s`. Inputs are zero-padded to the next power of two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Natural,
    /// Walsh order: coefficient `s` belongs to the basis function with `s` sign changes.
    #[default]
    Sequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Forward transform scaled by `1/N`.
    #[default]
    OneOverN,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalshCoefficients {
    pub coeffs: Vec<f64>,
    pub ordering: Ordering,
    pub normalization: Normalization,
    pub original_len: usize,
    pub padded_len: usize,
}

/// In-place unnormalized transform in natural order. Only additions and
/// subtractions; `data.len()` must be a power of two.
pub fn fwht_in_place(data: &mut [f64]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

fn bit_reverse(mut v: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (v & 1);
        v >>= 1;
    }
    r
}

/// Natural-order index holding sequency coefficient `s`.
pub fn sequency_to_natural(s: usize, n: usize) -> usize {
    let bits = n.trailing_zeros();
    bit_reverse(s ^ (s >> 1), bits)
}

fn padded(values: &[f64]) -> Vec<f64> {
    let n = values.len().next_power_of_two();
    let mut buf = Vec::with_capacity(n);
    buf.extend_from_slice(values);
    buf.resize(n, 0.0);
    buf
}

fn to_ordering(natural: Vec<f64>, ordering: Ordering) -> Vec<f64> {
    match ordering {
        Ordering::Natural => natural,
        Ordering::Sequency => {
            let n = natural.len();
            (0..n).map(|s| natural[sequency_to_natural(s, n)]).collect()
        }
    }
}

fn from_ordering(coeffs: &[f64], ordering: Ordering) -> Vec<f64> {
    match ordering {
        Ordering::Natural => coeffs.to_vec(),
        Ordering::Sequency => {
            let n = coeffs.len();
            let mut natural = vec![0.0; n];
            for (s, &c) in coeffs.iter().enumerate() {
                natural[sequency_to_natural(s, n)] = c;
            }
            natural
        }
    }
}

pub fn fwht(values: &[f64], ordering: Ordering, normalization: Normalization) -> WalshCoefficients {
    let original_len = values.len();
    let mut buf = padded(values);
    let n = buf.len();
    fwht_in_place(&mut buf);
    if normalization == Normalization::OneOverN {
        let inv = 1.0 / n as f64;
        buf.iter_mut().for_each(|c| *c *= inv);
    }
    WalshCoefficients {
        coeffs: to_ordering(buf, ordering),
        ordering,
        normalization,
        original_len,
        padded_len: n,
    }
}

/// Inverse transform; returns the zero-padded input.
pub fn ifwht(wc: &WalshCoefficients) -> Vec<f64> {
    let mut buf = from_ordering(&wc.coeffs, wc.ordering);
    fwht_in_place(&mut buf);
    if wc.normalization == Normalization::None {
        let inv = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= inv);
    }
    buf
}

/// Share of coefficient energy held by the first (DC) coefficient.
pub fn energy_compaction(coeffs: &[f64]) -> Result<f64> {
    let total: f64 = coeffs.iter().map(|c| c * c).sum();
    if total == 0.0 || coeffs.is_empty() {
        return Err(Error::DegenerateInput("all Walsh coefficients are zero".into()));
    }
    Ok(coeffs[0] * coeffs[0] / total)
}

/// Direct `O(N²)` matrix product used as a reference and as the slow
/// baseline in benchmarks. Natural rows use the kernel
/// `(−1)^popcount(u & t)`; sequency rows use the Rademacher-product kernel
/// `(−1)^Σ r_k(s)·t_k` with `r_0 = s_{m−1}`, `r_k = s_{m−k} ⊕ s_{m−k−1}`.
pub fn naive_walsh_hadamard(values: &[f64], ordering: Ordering, normalization: Normalization) -> Vec<f64> {
    let x = padded(values);
    let n = x.len();
    let m = n.trailing_zeros();
    let bit = |v: usize, k: u32| (v >> k) & 1;
    let row_mask = |u: usize| -> usize {
        match ordering {
            Ordering::Natural => u,
            Ordering::Sequency => {
                // mask over time bits t_k
                let mut mask = 0;
                for k in 0..m {
                    let r = if k == 0 {
                        bit(u, m - 1)
                    } else {
                        bit(u, m - k) ^ bit(u, m - k - 1)
                    };
                    mask |= r << k;
                }
                mask
            }
        }
    };
    let scale = match normalization {
        Normalization::OneOverN => 1.0 / n as f64,
        Normalization::None => 1.0,
    };
    (0..n)
        .map(|u| {
            let mask = row_mask(u);
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(t, &v)| if (mask & t).count_ones() % 2 == 0 { v } else { -v })
                .sum();
            sum * scale
        })
        .collect()
}
