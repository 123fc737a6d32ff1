//! Dense matrices and a one-sided (Hestenes) Jacobi SVD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data; `data.len()` must be `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// `self -= scale * u v^T`.
    pub fn sub_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (x, vj) in row.iter_mut().zip(v) {
                *x -= scale * ui * vj;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// One singular triplet `(sigma, u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

const MAX_SWEEPS: usize = 80;
const EPS: f64 = f64::EPSILON;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn rotate(a: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = a.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (vp, vq) = (*xp, *xq);
        *xp = c * vp - s * vq;
        *xq = s * vp + c * vq;
    }
}

/// Extends `basis` (orthonormal vectors of length `dim`) to `target` vectors
/// by Gram-Schmidt over the standard basis.
fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize, target: usize) {
    let mut e = 0;
    while basis.len() < target && e < dim {
        let mut cand = vec![0.0; dim];
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let d = dot(&cand, b);
                cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= d * bi);
            }
        }
        let n = norm(&cand);
        if n > 0.5 {
            cand.iter_mut().for_each(|c| *c /= n);
            basis.push(cand);
        }
    }
}

/// Singular value decomposition by one-sided Jacobi rotations.
///
/// Returns `min(m, n)` triplets with `sigma` descending. Left vectors of
/// numerically zero singular values are completed to an orthonormal set.
pub fn svd(a: &Matrix) -> Result<Vec<Triplet>> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::Config("svd of an empty matrix".into()));
    }
    for i in 0..a.rows {
        for j in 0..a.cols {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(t
            .into_iter()
            .map(|Triplet { sigma, u, v }| Triplet { sigma, u: v, v: u })
            .collect());
    }

    let (m, n) = (a.rows, a.cols);
    // columns of A V, and of V
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = w.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let sigma_max = order[0].0;
    let cutoff = sigma_max * EPS * (m.max(n) as f64) * 4.0;

    let mut triplets = Vec::with_capacity(n);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (s, j) in order {
        if s > cutoff && s > 0.0 {
            let u: Vec<f64> = w[j].iter().map(|x| x / s).collect();
            left.push(u.clone());
            triplets.push(Triplet {
                sigma: s,
                u,
                v: v[j].clone(),
            });
        } else {
            pending.push(j);
        }
    }
    let have = left.len();
    complete_basis(&mut left, m, have + pending.len());
    for (k, j) in pending.into_iter().enumerate() {
        triplets.push(Triplet {
            sigma: 0.0,
            u: left[have + k].clone(),
            v: v[j].clone(),
        });
    }
    Ok(triplets)
}

/// `sum_k sigma_k u_k v_k^T` over the given triplets.
pub fn reconstruct<'a>(rows: usize, cols: usize, triplets: impl IntoIterator<Item = &'a Triplet>) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    for t in triplets {
        out.sub_outer(-t.sigma, &t.u, &t.v);
    }
    out
}

/// Largest absolute deviation of `X^T X` from the identity for the columns
/// `u` (or `v`) of the triplets.
pub fn orthonormality_residual(vectors: &[&[f64]]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn residual(a: &Matrix, t: &[Triplet]) -> f64 {
        let mut r = a.clone();
        for tr in t {
            r.sub_outer(tr.sigma, &tr.u, &tr.v);
        }
        r.frobenius_norm() / a.frobenius_norm()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let t = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(t.len(), 2);
        for tr in &t {
            assert_relative_eq!(tr.sigma, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let a = [1.0, -2.0, 3.0, 0.5];
        let b = [2.0, 1.0, -1.0];
        let m = Matrix::from_fn(4, 3, |i, j| a[i] * b[j]);
        let t = svd(&m).unwrap();
        assert_relative_eq!(t[0].sigma, norm(&a) * norm(&b), max_relative = 1e-12);
        assert_eq!(t[1].sigma, 0.0);
        assert_eq!(t[2].sigma, 0.0);
        let us: Vec<&[f64]> = t.iter().map(|x| x.u.as_slice()).collect();
        assert!(orthonormality_residual(&us) < 1e-9);
        assert!(residual(&m, &t) < 1e-12);
    }

    #[test]
    fn wide_matrix_via_transpose() {
        let m = Matrix::from_row_major(2, 3, vec![3.0, 2.0, 2.0, 2.0, 3.0, -2.0]);
        let t = svd(&m).unwrap();
        assert_eq!(t.len(), 2);
        assert_relative_eq!(t[0].sigma, 5.0, max_relative = 1e-12);
        assert_relative_eq!(t[1].sigma, 3.0, max_relative = 1e-12);
        assert_eq!(t[0].u.len(), 2);
        assert_eq!(t[0].v.len(), 3);
        assert!(residual(&m, &t) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(3);
        m[(1, 2)] = f64::NAN;
        assert_eq!(svd(&m).unwrap_err(), Error::NonFinite { row: 1, col: 2 });
    }

    #[test]
    fn zero_matrix_gives_orthonormal_factors() {
        let t = svd(&Matrix::zeros(3, 3)).unwrap();
        assert!(t.iter().all(|x| x.sigma == 0.0));
        let us: Vec<&[f64]> = t.iter().map(|x| x.u.as_slice()).collect();
        assert!(orthonormality_residual(&us) < 1e-12);
    }
}
