use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("k = {k} exceeds min(rows - 1, dim) = {max}")]
    TooManyComponents { k: usize, max: usize },
    #[error("input has zero variance")]
    Degenerate,
    #[error("shape mismatch: expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("silhouette needs at least 2 clusters")]
    SingleCluster,
    #[error("{values} values but {labels} labels")]
    LabelCount { values: usize, labels: usize },
}

/// A fitted principal component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `dim x k`, orthonormal columns in decreasing variance order.
    pub components: DMatrix<f64>,
    /// Variance along each component.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl Pca {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }
}

fn centered(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (xc, mean)
}

/// Eigenpairs sorted by decreasing eigenvalue, ties by original index.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Extends orthonormal `basis` to `k` vectors in `dim` dimensions using the
/// standard basis.
fn complete_basis(mut basis: Vec<DVector<f64>>, dim: usize, k: usize) -> Vec<DVector<f64>> {
    let mut e = 0;
    while basis.len() < k && e < dim {
        let mut v = DVector::zeros(dim);
        v[e] = 1.0;
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        e += 1;
    }
    basis
}

/// Principal components of the rows of `x`.
///
/// Decomposes the `dim x dim` covariance, or the `rows x rows` Gram matrix
/// when `dim > rows`.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<Pca, AnalysisError> {
    let (rows, dim) = x.shape();
    if rows < 2 {
        return Err(AnalysisError::TooFewRows(rows));
    }
    let max = (rows - 1).min(dim);
    if k == 0 || k > max {
        return Err(AnalysisError::TooManyComponents { k, max });
    }
    let (xc, mean) = centered(x);
    let denom = (rows - 1) as f64;
    let total_variance = xc.iter().map(|v| v * v).sum::<f64>() / denom;
    if total_variance <= 0.0 {
        return Err(AnalysisError::Degenerate);
    }
    let (values, mut vectors): (Vec<f64>, Vec<DVector<f64>>) = if dim <= rows {
        let cov = xc.transpose() * &xc / denom;
        let (values, vecs) = sorted_eigen(cov);
        (values[..k].to_vec(), (0..k).map(|i| vecs.column(i).into_owned()).collect())
    } else {
        let gram = &xc * xc.transpose() / denom;
        let (values, vecs) = sorted_eigen(gram);
        let tol = values[0] * 1e-12;
        let mut basis = Vec::new();
        for i in 0..k {
            if values[i] <= tol {
                break;
            }
            let v = xc.transpose() * vecs.column(i) / (values[i] * denom).sqrt();
            basis.push(v.normalize());
        }
        let basis = complete_basis(basis, dim, k);
        let values = (0..k).map(|i| if values[i] <= tol { 0.0 } else { values[i] }).collect();
        (values, basis)
    };
    for v in &mut vectors {
        fix_sign(v);
    }
    Ok(Pca { mean, components: DMatrix::from_columns(&vectors), explained_variance: values, total_variance })
}

/// `(x - mean) * components`.
pub fn project(x: &DMatrix<f64>, pca: &Pca) -> Result<DMatrix<f64>, AnalysisError> {
    if x.ncols() != pca.mean.len() {
        return Err(AnalysisError::Shape { expected: pca.mean.len(), got: x.ncols() });
    }
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-pca.mean[j]);
    }
    Ok(xc * &pca.components)
}

/// Mean silhouette of 1-D points under the given labels.
///
/// Singleton clusters score 0, as do points with `a = b = 0`. Uses sorted
/// prefix sums, so the cost is `O(n log n)` per cluster.
pub fn silhouette<L: Ord + Clone>(values: &[f64], labels: &[L]) -> Result<f64, AnalysisError> {
    if values.len() != labels.len() {
        return Err(AnalysisError::LabelCount { values: values.len(), labels: labels.len() });
    }
    let mut clusters: BTreeMap<&L, Vec<f64>> = BTreeMap::new();
    for (v, l) in values.iter().zip(labels) {
        clusters.entry(l).or_default().push(*v);
    }
    if clusters.len() < 2 {
        return Err(AnalysisError::SingleCluster);
    }
    struct Sorted {
        ys: Vec<f64>,
        prefix: Vec<f64>,
    }
    let index: BTreeMap<&L, Sorted> = clusters
        .into_iter()
        .map(|(l, mut ys)| {
            ys.sort_by(f64::total_cmp);
            let mut prefix = Vec::with_capacity(ys.len() + 1);
            prefix.push(0.0);
            for y in &ys {
                prefix.push(prefix.last().unwrap() + y);
            }
            (l, Sorted { ys, prefix })
        })
        .collect();
    // Sum of |x - y| over the cluster.
    let dist_sum = |c: &Sorted, x: f64| {
        let m = c.ys.len();
        let k = c.ys.partition_point(|y| *y <= x);
        let below = x * k as f64 - c.prefix[k];
        let above = (c.prefix[m] - c.prefix[k]) - x * (m - k) as f64;
        below + above
    };
    let mut total = 0.0;
    for (x, l) in values.iter().zip(labels) {
        let own = &index[l];
        if own.ys.len() == 1 {
            continue;
        }
        let a = dist_sum(own, *x) / (own.ys.len() - 1) as f64;
        let b = index
            .iter()
            .filter(|(other, _)| **other != l)
            .map(|(_, c)| dist_sum(c, *x) / c.ys.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / values.len() as f64)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant or lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
