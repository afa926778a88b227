//! PCA followed by Fisher LDA, composed into one affine projection
//! `x -> W^T (x - mean)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default fraction of variance kept by the PCA stage.
pub const DEFAULT_RETENTION: f64 = 0.99;
/// Within-class scatter is regularized by `WITHIN_CLASS_RIDGE * trace / dim`.
pub const WITHIN_CLASS_RIDGE: f64 = 1e-6;

const RETENTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained principal directions, one unit vector per row.
    pub components: Vec<Vec<f64>>,
    /// Variance along each retained direction, non-increasing.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub retention: f64,
}

impl PcaModel {
    pub fn retained(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.input_dim())?;
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(w, (v, m))| w * (v - m))
                    .sum()
            })
            .collect())
    }

    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(y, self.retained())?;
        let mut x = self.mean.clone();
        for (c, &coef) in self.components.iter().zip(y) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += coef * ci;
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Discriminant directions in the input space, unit length, ordered by
    /// descending eigenvalue.
    pub directions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub class_count: usize,
}

impl LdaModel {
    pub fn output_dim(&self) -> usize {
        self.directions.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.directions
            .iter()
            .map(|d| d.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// The composed PCA+LDA map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubspaceModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub retention: f64,
    pub pca_retained: usize,
    pub class_count: usize,
    pub mean: Vec<f64>,
    /// `input_dim x output_dim`, row-major.
    pub weights: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub eigenvalues: Vec<f64>,
}

impl SubspaceModel {
    pub fn compose(pca: &PcaModel, lda: &LdaModel) -> Result<Self> {
        if lda.directions.iter().any(|d| d.len() != pca.retained()) {
            return Err(Error::invalid("LDA directions do not match the PCA output dimension"));
        }
        let input_dim = pca.input_dim();
        let output_dim = lda.output_dim();
        let mut weights = vec![0.0; input_dim * output_dim];
        for (i, row) in weights.chunks_mut(output_dim.max(1)).enumerate().take(input_dim) {
            for (j, w) in row.iter_mut().enumerate() {
                *w = pca
                    .components
                    .iter()
                    .zip(&lda.directions[j])
                    .map(|(c, v)| c[i] * v)
                    .sum();
            }
        }
        Ok(SubspaceModel {
            input_dim,
            output_dim,
            retention: pca.retention,
            pca_retained: pca.retained(),
            class_count: lda.class_count,
            mean: pca.mean.clone(),
            weights,
            eigenvalues: lda.eigenvalues.clone(),
        })
    }

    /// A model from raw parts, e.g. after deserialization.
    pub fn from_parts(mean: Vec<f64>, weights: Vec<f64>, output_dim: usize) -> Result<Self> {
        let input_dim = mean.len();
        let model = SubspaceModel {
            input_dim,
            output_dim,
            retention: 1.0,
            pca_retained: input_dim,
            class_count: output_dim + 1,
            mean,
            weights,
            eigenvalues: Vec::new(),
        };
        model.check()?;
        Ok(model)
    }

    /// Zero mean and `W = I`.
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        SubspaceModel {
            input_dim: dim,
            output_dim: dim,
            retention: 1.0,
            pca_retained: dim,
            class_count: dim + 1,
            mean: vec![0.0; dim],
            weights,
            eigenvalues: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("subspace model with zero dimension"));
        }
        if self.mean.len() != self.input_dim || self.weights.len() != self.input_dim * self.output_dim {
            return Err(Error::invalid(format!(
                "subspace model shape mismatch: mean {}, weights {}, dims {}x{}",
                self.mean.len(),
                self.weights.len(),
                self.input_dim,
                self.output_dim
            )));
        }
        if self.mean.iter().chain(&self.weights).any(|v| !v.is_finite()) {
            return Err(Error::invalid("subspace model contains non-finite values"));
        }
        Ok(())
    }

    /// `W^T (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.input_dim)?;
        let mut y = vec![0.0; self.output_dim];
        for ((xi, mi), row) in x.iter().zip(&self.mean).zip(self.weights.chunks(self.output_dim)) {
            let c = xi - mi;
            for (yj, w) in y.iter_mut().zip(row) {
                *yj += c * w;
            }
        }
        Ok(y)
    }

    /// `W^T x`, without centering.
    pub fn apply_linear(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.input_dim)?;
        let mut y = vec![0.0; self.output_dim];
        for (xi, row) in x.iter().zip(self.weights.chunks(self.output_dim)) {
            for (yj, w) in y.iter_mut().zip(row) {
                *yj += xi * w;
            }
        }
        Ok(y)
    }
}

fn check_dim(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::invalid(format!(
            "dimension mismatch: got {}, model expects {expected}",
            x.len()
        )));
    }
    Ok(())
}

/// Flips `v` so its largest-magnitude component is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) {
    let n = crate::feature::norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Eigenpairs sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

fn to_matrix<V: AsRef<[f64]>>(rows: &[V], dim: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        check_dim(r, dim)?;
        for (j, &v) in r.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Principal component analysis of `training` keeping the smallest number of
/// components whose cumulative variance reaches `retention` of the total.
/// Uses the Gram matrix when there are fewer samples than dimensions.
pub fn fit_pca<V: AsRef<[f64]>>(training: &[V], retention: f64) -> Result<PcaModel> {
    let n = training.len();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::invalid(format!(
            "PCA retention must be in (0, 1], got {retention}"
        )));
    }
    let dim = training[0].as_ref().len();
    if dim == 0 {
        return Err(Error::invalid("PCA on zero-dimensional data"));
    }
    let mut x = to_matrix(training, dim)?;
    let mean: Vec<f64> = (0..dim).map(|j| x.column(j).sum() / n as f64).collect();
    for (j, &m) in mean.iter().enumerate() {
        x.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let denom = (n - 1) as f64;
    let total_variance = x.iter().map(|v| v * v).sum::<f64>() / denom;
    if total_variance.is_nan() || total_variance <= 0.0 {
        return Err(Error::DegenerateData("training data has zero variance".into()));
    }

    let pairs: Vec<(f64, Vec<f64>)> = if dim <= n {
        let cov = x.transpose() * &x / denom;
        sorted_eigen(cov)
            .into_iter()
            .map(|(l, v)| (l.max(0.0), v.iter().copied().collect()))
            .collect()
    } else {
        let gram = &x * x.transpose() / denom;
        sorted_eigen(gram)
            .into_iter()
            .filter(|(l, _)| *l > 0.0)
            .map(|(l, u)| {
                let mut v: Vec<f64> = (x.transpose() * u).iter().copied().collect();
                normalize(&mut v);
                (l, v)
            })
            .collect()
    };

    let mut components = Vec::new();
    let mut explained_variance = Vec::new();
    let mut cumulative = 0.0;
    for (l, mut v) in pairs {
        if cumulative / total_variance >= retention - RETENTION_SLACK {
            break;
        }
        cumulative += l;
        fix_sign(&mut v);
        components.push(v);
        explained_variance.push(l);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
        retention,
    })
}

/// Fisher discriminant analysis. Solves `S_b w = l S_w w` through the
/// Cholesky factor of the regularized within-class scatter.
pub fn fit_lda<V: AsRef<[f64]>>(labels: &[usize], features: &[V]) -> Result<LdaModel> {
    if labels.len() != features.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} features",
            labels.len(),
            features.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::invalid("LDA needs training samples"));
    }
    let dim = features[0].as_ref().len();
    if dim == 0 {
        return Err(Error::invalid("LDA on zero-dimensional data"));
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let class_count = classes.len();
    if class_count < 2 {
        return Err(Error::invalid("LDA needs at least two classes"));
    }
    if classes.values().all(|m| m.len() < 2) {
        return Err(Error::invalid("LDA needs at least one class with two samples"));
    }
    let x = to_matrix(features, dim)?;
    let n = features.len() as f64;
    let overall: DVector<f64> = x.row_sum().transpose() / n;

    let mut s_w = DMatrix::<f64>::zeros(dim, dim);
    let mut s_b = DMatrix::<f64>::zeros(dim, dim);
    for members in classes.values() {
        let mut mu = DVector::<f64>::zeros(dim);
        for &i in members {
            mu += x.row(i).transpose();
        }
        mu /= members.len() as f64;
        for &i in members {
            let c = x.row(i).transpose() - &mu;
            s_w.ger(1.0, &c, &c, 1.0);
        }
        let c = &mu - &overall;
        s_b.ger(members.len() as f64, &c, &c, 1.0);
    }

    let ridge = WITHIN_CLASS_RIDGE * s_w.trace() / dim as f64;
    for i in 0..dim {
        s_w[(i, i)] += ridge;
    }
    let chol = s_w
        .cholesky()
        .ok_or_else(|| Error::Numeric("within-class scatter is singular after regularization".into()))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&s_b)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    let m = (&m + m.transpose()) * 0.5;

    let out = (class_count - 1).min(dim);
    let lt = l.transpose();
    let mut directions = Vec::with_capacity(out);
    let mut eigenvalues = Vec::with_capacity(out);
    for (lambda, v) in sorted_eigen(m).into_iter().take(out) {
        let w = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let mut w: Vec<f64> = w.iter().copied().collect();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite discriminant direction".into()));
        }
        normalize(&mut w);
        fix_sign(&mut w);
        directions.push(w);
        eigenvalues.push(lambda);
    }
    Ok(LdaModel {
        directions,
        eigenvalues,
        class_count,
    })
}

/// PCA on the training features, LDA on their PCA projections, composed.
pub fn fit_subspace<V: AsRef<[f64]>>(labels: &[usize], features: &[V], retention: f64) -> Result<SubspaceModel> {
    let pca = fit_pca(features, retention)?;
    let reduced = features
        .iter()
        .map(|f| pca.project(f.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let lda = fit_lda(labels, &reduced)?;
    SubspaceModel::compose(&pca, &lda)
}
