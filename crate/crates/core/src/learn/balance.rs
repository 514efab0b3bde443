use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Principal axes fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Retained unit-length axes, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    /// Every eigenvalue of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub retained_variance: f64,
    /// The covariance was zero, so one arbitrary axis was kept.
    pub degenerate: bool,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn transform_one(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(a, (v, m))| a * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(bad) = rows.iter().find(|r| r.len() != self.mean.len()) {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: bad.len(),
            });
        }
        Ok(rows.iter().map(|r| self.transform_one(r)).collect())
    }

    pub fn inverse_transform_one(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += w * ci;
            }
        }
        x
    }

    /// Sum of the eigenvalues whose axes were dropped.
    pub fn discarded_variance(&self) -> f64 {
        self.eigenvalues[self.k()..].iter().sum()
    }
}

/// Keeps the fewest leading axes whose eigenvalues reach `retained_variance`
/// of the total.
pub fn pca_fit(rows: &[Vec<f64>], retained_variance: f64) -> Result<PcaBasis> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: rows.len(),
        });
    }
    if !(retained_variance > 0.0 && retained_variance <= 1.0) {
        return Err(Error::Argument(format!(
            "retained variance {retained_variance} outside (0, 1]"
        )));
    }
    let n = rows.len();
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Argument("cannot fit PCA on zero-width rows".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // rounding can leave tiny negative eigenvalues on rank-deficient data
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let degenerate = total <= 0.0;
    let k = if degenerate {
        1
    } else {
        let mut acc = 0.0;
        let mut k = d;
        for (i, ev) in eigenvalues.iter().enumerate() {
            acc += ev;
            if acc / total >= retained_variance - 1e-12 {
                k = i + 1;
                break;
            }
        }
        k
    };

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // fix the sign so the largest-magnitude entry is positive
            let pivot = c
                .iter()
                .copied()
                .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();

    Ok(PcaBasis {
        mean,
        components,
        eigenvalues,
        retained_variance,
        degenerate,
    })
}

/// Fits on `train` and projects both partitions with the training basis.
pub fn pca_fit_transform(
    train: &LabeledDataset,
    test: &LabeledDataset,
    retained_variance: f64,
) -> Result<(LabeledDataset, LabeledDataset, PcaBasis)> {
    let basis = pca_fit(&train.rows, retained_variance)?;
    let tr = train.with_rows(basis.transform(&train.rows)?);
    let te = test.with_rows(basis.transform(&test.rows)?);
    Ok((tr, te, basis))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutcome {
    /// Original rows followed by the synthetic ones.
    pub dataset: LabeledDataset,
    pub synthetic_per_class: Vec<usize>,
    pub warnings: Vec<String>,
    /// For each synthetic row: `(seed row, neighbour row, u)`, indices into the input.
    pub origins: Vec<(usize, usize, f64)>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversamples every class up to the majority count by interpolating
/// between a member and one of its `k` nearest same-class neighbours.
/// Seed members are taken round-robin in row order.
pub fn smote(ds: &LabeledDataset, k: usize, seed: u64) -> Result<SmoteOutcome> {
    if k == 0 {
        return Err(Error::Argument("SMOTE needs k ≥ 1".into()));
    }
    let counts = ds.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    let mut synthetic_per_class = vec![0; counts.len()];
    let mut warnings = Vec::new();
    let mut origins = Vec::new();

    for (class, &n_c) in counts.iter().enumerate() {
        if n_c == 0 || n_c == target {
            continue;
        }
        if n_c < 2 {
            return Err(Error::Smote(format!(
                "class `{}` has {n_c} sample; at least 2 are needed",
                ds.label_set[class]
            )));
        }
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        let k_eff = if k > n_c - 1 {
            let msg = format!("k = {k} clipped to {} for class `{}`", n_c - 1, ds.label_set[class]);
            log::warn!("{msg}");
            warnings.push(msg);
            n_c - 1
        } else {
            k
        };
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut others: Vec<usize> = members.iter().copied().filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| {
                    sq_dist(&ds.rows[i], &ds.rows[a])
                        .total_cmp(&sq_dist(&ds.rows[i], &ds.rows[b]))
                        .then(a.cmp(&b))
                });
                others.truncate(k_eff);
                others
            })
            .collect();
        for s in 0..target - n_c {
            let m = s % n_c;
            let i = members[m];
            let j = neighbours[m][rng.random_range(0..k_eff)];
            let u: f64 = rng.random_range(0.0..=1.0);
            let row = ds.rows[i]
                .iter()
                .zip(&ds.rows[j])
                .map(|(a, b)| a + u * (b - a))
                .collect();
            out.rows.push(row);
            out.labels.push(class);
            out.source_ids.push(format!("smote:{}:{s}", ds.source_ids[i]));
            origins.push((i, j, u));
        }
        synthetic_per_class[class] = target - n_c;
    }
    Ok(SmoteOutcome {
        dataset: out,
        synthetic_per_class,
        warnings,
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::SeverityLabel;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(n: usize) -> Vec<SeverityLabel> {
        (0..n).map(|i| SeverityLabel::new(format!("c{i}")).unwrap()).collect()
    }

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn line_in_three_d_keeps_one_axis() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.3 - 2.0;
                vec![1.0 + t, 2.0 - 2.0 * t, 0.5 * t]
            })
            .collect();
        let b = pca_fit(&rows, 0.95).unwrap();
        assert_eq!(b.k(), 1);
        for r in &rows {
            let back = b.inverse_transform_one(&b.transform_one(r));
            for (x, y) in r.iter().zip(&back) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isotropic_noise_keeps_all_axes() {
        let b = pca_fit(&gaussian_rows(5000, 5, 3), 0.95).unwrap();
        assert_eq!(b.k(), 5);
        // sample eigenvalues of a unit covariance concentrate near 1 at this n
        for ev in &b.eigenvalues {
            assert!((ev - 1.0).abs() < 0.1, "{ev}");
        }
    }

    #[test]
    fn constant_data_is_flagged() {
        let b = pca_fit(&vec![vec![2.0, 3.0]; 6], 0.95).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.k(), 1);
    }

    #[test]
    fn reconstruction_error_equals_discarded_mass() {
        let mut rows = gaussian_rows(200, 4, 8);
        for r in &mut rows {
            r[0] *= 5.0;
            r[1] *= 3.0;
            r[3] *= 0.2;
        }
        let b = pca_fit(&rows, 0.9).unwrap();
        assert!(b.k() < 4);
        let sse: f64 = rows
            .iter()
            .map(|r| sq_dist(r, &b.inverse_transform_one(&b.transform_one(r))))
            .sum();
        let per_sample = sse / (rows.len() as f64 - 1.0);
        assert!((per_sample - b.discarded_variance()).abs() < 1e-9);
    }

    #[test]
    fn smote_balances_ten_vs_fifty() {
        let mut rows = gaussian_rows(60, 3, 1);
        for r in rows.iter_mut().take(10) {
            r[0] += 10.0;
        }
        let ls: Vec<usize> = (0..60).map(|i| usize::from(i >= 10)).collect();
        let ds = LabeledDataset::new("T", rows, ls, labels(2)).unwrap();
        let out = smote(&ds, 5, 7).unwrap();
        assert_eq!(out.dataset.class_counts(), vec![50, 50]);
        assert_eq!(out.synthetic_per_class, vec![40, 0]);
        assert!(out.warnings.is_empty());
        assert_eq!(smote(&ds, 5, 7).unwrap(), out);
    }

    #[test]
    fn two_points_give_segment() {
        let a = vec![0.0, 0.0];
        let b = vec![2.0, 4.0];
        let mut rows = vec![a.clone(), b.clone()];
        rows.extend(gaussian_rows(8, 2, 2));
        let ls = [vec![0, 0], vec![1; 8]].concat();
        let ds = LabeledDataset::new("T", rows, ls, labels(2)).unwrap();
        let out = smote(&ds, 5, 0).unwrap();
        assert_eq!(out.warnings.len(), 1);
        for r in &out.dataset.rows[10..] {
            // on the segment: y = 2x with x in [0, 2]
            assert!((r[1] - 2.0 * r[0]).abs() < 1e-12);
            assert!((0.0..=2.0).contains(&r[0]));
        }
    }

    #[test]
    fn balanced_input_unchanged() {
        let ds = LabeledDataset::new("T", gaussian_rows(6, 2, 0), vec![0, 1, 0, 1, 0, 1], labels(2)).unwrap();
        assert_eq!(smote(&ds, 5, 0).unwrap().dataset, ds);
    }

    #[test]
    fn singleton_minority_rejected() {
        let ds = LabeledDataset::new("T", gaussian_rows(4, 2, 0), vec![0, 1, 1, 1], labels(2)).unwrap();
        assert!(matches!(smote(&ds, 5, 0), Err(Error::Smote(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pca_axes_are_orthonormal(seed in 0u64..1000, n in 10usize..60, d in 2usize..7) {
            let b = pca_fit(&gaussian_rows(n, d, seed), 1.0).unwrap();
            for (i, u) in b.components.iter().enumerate() {
                for (j, v) in b.components.iter().enumerate() {
                    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn smote_samples_lie_between_seed_and_neighbour(seed in 0u64..1000, n_min in 2usize..8) {
            let rows = gaussian_rows(n_min + 20, 3, seed);
            let ls: Vec<usize> = (0..rows.len()).map(|i| usize::from(i >= n_min)).collect();
            let ds = LabeledDataset::new("T", rows, ls, labels(2)).unwrap();
            let out = smote(&ds, 5, seed).unwrap();
            let base = ds.len();
            for (s, &(i, j, u)) in out.origins.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&u));
                prop_assert_eq!(ds.labels[i], ds.labels[j]);
                let r = &out.dataset.rows[base + s];
                for ((&v, &a), &b) in r.iter().zip(&ds.rows[i]).zip(&ds.rows[j]) {
                    prop_assert!((v - (a + u * (b - a))).abs() < 1e-12);
                    prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
                }
            }
        }
    }
}
