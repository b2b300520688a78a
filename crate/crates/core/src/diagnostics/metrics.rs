use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DaviesBouldin {
    pub index: f64,
    /// Two distinct clusters share a centroid, so some ratio is infinite.
    pub coincident_centroids: bool,
}

fn group(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        g.entry(*l).or_default().push(i);
    }
    g
}

/// Davies–Bouldin index of `points` (one row per point) under `labels`.
///
/// Scatter `s_i` is the mean Euclidean distance to the cluster centroid and
/// `d_ij` the distance between centroids.
pub fn davies_bouldin(points: &DMatrix<f64>, labels: &[usize]) -> Result<DaviesBouldin> {
    if points.nrows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} points but {} labels",
            points.nrows(),
            labels.len()
        )));
    }
    let groups = group(labels);
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("Davies-Bouldin needs at least two clusters".into()));
    }
    let d = points.ncols();
    let mut centroids = Vec::with_capacity(groups.len());
    let mut scatter = Vec::with_capacity(groups.len());
    for idx in groups.values() {
        let mut c = DVector::zeros(d);
        for &i in idx {
            c += points.row(i).transpose();
        }
        c /= idx.len() as f64;
        let s = idx.iter().map(|&i| (points.row(i).transpose() - &c).norm()).sum::<f64>() / idx.len() as f64;
        centroids.push(c);
        scatter.push(s);
    }
    let k = centroids.len();
    let mut total = 0.0;
    let mut coincident = false;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let dij = (&centroids[i] - &centroids[j]).norm();
            let r = if dij > 0.0 {
                (scatter[i] + scatter[j]) / dij
            } else {
                coincident = true;
                f64::INFINITY
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(DaviesBouldin {
        index: total / k as f64,
        coincident_centroids: coincident,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Nmi {
    pub value: f64,
    /// One labeling has a single cluster, so the score is defined as 0.
    pub degenerate: bool,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|c| *c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `MI(a, b) / √(H(a) H(b))` with natural-log entropies.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> Result<Nmi> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty labelings".into()));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((*x, *y)).or_default() += 1;
        *ca.entry(*x).or_default() += 1;
        *cb.entry(*y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ca.len() < 2 || cb.len() < 2 || ha <= 0.0 || hb <= 0.0 {
        return Ok(Nmi {
            value: 0.0,
            degenerate: true,
        });
    }
    let mi: f64 = joint
        .iter()
        .map(|((x, y), c)| {
            let pxy = *c as f64 / n;
            let px = ca[x] as f64 / n;
            let py = cb[y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok(Nmi {
        value: (mi / (ha * hb).sqrt()).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Lloyd's k-means with k-means++ seeding. Returns one label per row.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, max_iters: usize) -> Vec<usize> {
    let n = points.nrows();
    assert!(k >= 1 && k <= n, "k must lie in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| points.row(i).transpose();
    let mut centers: Vec<DVector<f64>> = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| (row(i) - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = row(next);
        for i in 0..n {
            d2[i] = d2[i].min((row(i) - &c).norm_squared());
        }
        centers.push(c);
    }
    let mut labels = vec![0; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let r = row(i);
            let best = (0..k)
                .min_by(|&a, &b| (&r - &centers[a]).norm_squared().total_cmp(&(&r - &centers[b]).norm_squared()))
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![DVector::zeros(points.ncols()); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[labels[i]] += row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Scores of the centred `points` on their first `k` principal components.
pub fn principal_components(points: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = points.nrows().max(1) as f64;
    let mut centred = points.clone();
    for mut col in centred.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let k = k.min(order.len());
    let mut out = DMatrix::zeros(points.nrows(), k);
    for (j, &o) in order.iter().take(k).enumerate() {
        out.set_column(j, &(&centred * v_t.row(o).transpose()));
    }
    out
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `sample` and the
/// normal distribution with the sample's own mean and standard deviation.
pub fn ks_distance_to_fitted_normal(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let Ok(normal) = Normal::new(mean, sd) else {
        return 1.0;
    };
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn principal_components_keep_the_dominant_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DMatrix::from_fn(200, 3, |_, j| rng.sample::<f64, _>(StandardNormal) * [0.1, 5.0, 1.0][j]);
        let pc = principal_components(&p, 2);
        assert_eq!(pc.shape(), (200, 2));
        let var = |c: usize| pc.column(c).norm_squared() / 199.0;
        assert!(var(0) > 15.0 && var(1) < 2.0 && var(1) > 0.5);
        assert!(pc.column(0).sum().abs() < 1e-9);
    }

    #[test]
    fn db_zero_scatter() {
        let p = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 5.0, 5.0]);
        let r = davies_bouldin(&p, &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.index, 0.0);
    }

    #[test]
    fn db_uniform_clusters() {
        // symmetric about each centre with mean absolute deviation 0.5
        let vals = [-1.0, 1.0, -0.5, 0.5, 0.0, 0.0, 9.0, 11.0, 9.5, 10.5, 10.0, 10.0];
        let p = DMatrix::from_row_slice(12, 1, &vals);
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let r = davies_bouldin(&p, &labels).unwrap();
        assert!((r.index - 0.1).abs() < 1e-12, "{}", r.index);
    }

    #[test]
    fn db_is_label_and_motion_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DMatrix::from_fn(30, 2, |i, _| rng.sample::<f64, _>(StandardNormal) + (i % 3) as f64 * 3.0);
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let perm: Vec<usize> = labels.iter().map(|l| [2, 0, 1][*l]).collect();
        let a = davies_bouldin(&p, &labels).unwrap().index;
        let b = davies_bouldin(&p, &perm).unwrap().index;
        assert!((a - b).abs() < 1e-12);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let moved = (&p * rot).add_scalar(4.0);
        let m = davies_bouldin(&moved, &labels).unwrap().index;
        assert!((a - m).abs() < 1e-10);
    }

    #[test]
    fn db_flags_coincident_centroids() {
        let p = DMatrix::from_row_slice(4, 1, &[-1.0, 1.0, -2.0, 2.0]);
        let r = davies_bouldin(&p, &[0, 0, 1, 1]).unwrap();
        assert!(r.coincident_centroids && r.index.is_infinite());
    }

    #[test]
    fn nmi_values() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((normalized_mutual_information(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        let renamed = [5, 5, 3, 3, 9, 9];
        assert!((normalized_mutual_information(&a, &renamed).unwrap().value - 1.0).abs() < 1e-12);
        let c = normalized_mutual_information(&a, &[0; 6]).unwrap();
        assert!(c.degenerate && c.value == 0.0);
        assert!(normalized_mutual_information(&a, &[0, 1]).is_err());
    }

    #[test]
    fn nmi_independent_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let v = normalized_mutual_information(&a, &b).unwrap().value;
        assert!(v < 0.01);
        let w = normalized_mutual_information(&b, &a).unwrap().value;
        assert!((v - w).abs() < 1e-15);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DMatrix::from_fn(60, 2, |i, _| rng.sample::<f64, _>(StandardNormal) * 0.1 + (i / 20) as f64 * 5.0);
        let truth: Vec<usize> = (0..60).map(|i| i / 20).collect();
        let l = kmeans(&p, 3, 0, 100);
        assert!((normalized_mutual_information(&truth, &l).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_normal_sample_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_distance_to_fitted_normal(&x) < 0.015);
        let u: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance_to_fitted_normal(&u) > 0.04);
    }
}
