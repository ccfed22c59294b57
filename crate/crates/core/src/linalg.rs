//! Thin wrappers over dense and sparse Cholesky factorizations, plus
//! condition-number estimation for SPD operators.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, SymmetricOrdering};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, MatMut, Side};

use crate::error::{check_len, Error, Result};

/// Dense `L Lᵀ` factorization of an SPD matrix.
#[derive(Debug)]
pub struct DenseCholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl DenseCholesky {
    pub fn factor(a: &Mat<f64>, context: &str) -> Result<Self> {
        let n = a.nrows();
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::NotSpd(format!("{context}: {e:?}")))?;
        Ok(Self { llt, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        self.llt.solve_in_place(rhs);
    }

    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }

    /// Stored entries of the factor.
    pub fn stored_entries(&self) -> u64 {
        (self.n * self.n) as u64
    }
}

/// Symmetric sparse matrix storing only the lower triangle in CSC layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymmetricCsc {
    /// Builds the pattern from per-column sorted, deduplicated row lists.
    pub fn from_pattern(n: usize, columns: Vec<Vec<usize>>) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for col in columns {
            row_idx.extend(col);
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        Self {
            n,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Sums `(row, col, value)` triplets of a symmetric matrix; entries above the
    /// diagonal are ignored. Duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut lower: Vec<(usize, usize, f64)> = triplets.iter().copied().filter(|&(r, c, _)| r >= c).collect();
        lower.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lower.len());
        let mut values: Vec<f64> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in lower {
            if last == Some((r, c)) {
                *values.last_mut().expect("value present") += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of lower-triangle entry `(row, col)`, `row >= col`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[a..b].binary_search(&row).ok().map(|k| a + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let v = self.values[k];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                m[(r, c)] = self.values[k];
                m[(c, r)] = self.values[k];
            }
        }
        m
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(symbolic, &self.values)
    }

    /// Number of stored entries of the Cholesky factor, from a symbolic analysis.
    pub fn factor_entries(&self) -> Result<u64> {
        if self.n == 0 {
            return Ok(0);
        }
        let sym = factorize_symbolic_cholesky(
            self.as_faer().symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
        Ok(sym.len_val() as u64)
    }

    pub fn cholesky(&self, context: &str) -> Result<SparseCholesky> {
        let llt = self
            .as_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::NotSpd(format!("{context}: {e:?}")))?;
        Ok(SparseCholesky { llt, n: self.n })
    }

    /// Largest relative asymmetry is zero by construction; this checks the
    /// diagonal is positive, a cheap necessary condition for definiteness.
    pub fn has_positive_diagonal(&self) -> bool {
        (0..self.n).all(|c| self.position(c, c).is_some_and(|k| self.values[k] > 0.0))
    }
}

/// Sparse `L Lᵀ` factorization with fill-reducing ordering.
#[derive(Debug)]
pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        self.llt.solve_in_place(rhs);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }
}

/// An SPD operator whose extreme eigenvalues can be estimated.
pub trait SpdOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn solve(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn to_dense(&self) -> Mat<f64>;
}

/// Dense SPD matrix, optionally with its factor.
pub struct DenseSpd<'a> {
    pub matrix: &'a Mat<f64>,
    pub factor: Option<&'a DenseCholesky>,
}

impl SpdOperator for DenseSpd<'_> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += self.matrix[(i, j)] * xj;
                }
            }
        }
        y
    }

    fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.factor {
            Some(f) => Ok(f.solve(x)),
            None => Ok(DenseCholesky::factor(self.matrix, "condition estimate")?.solve(x)),
        }
    }

    fn to_dense(&self) -> Mat<f64> {
        self.matrix.clone()
    }
}

/// Sparse SPD matrix together with its factor.
pub struct SparseSpd<'a> {
    pub matrix: &'a SymmetricCsc,
    pub factor: &'a SparseCholesky,
}

impl SpdOperator for SparseSpd<'_> {
    fn dim(&self) -> usize {
        self.matrix.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.apply(x)
    }

    fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor.solve(x))
    }

    fn to_dense(&self) -> Mat<f64> {
        self.matrix.to_dense()
    }
}

/// Size up to which condition numbers come from a full symmetric eigensolve.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

const LANCZOS_MAX_STEPS: usize = 300;
const LANCZOS_RTOL: f64 = 1e-6;

/// 2-norm condition number of an SPD operator.
///
/// Exact eigenvalues for dimensions up to [`DENSE_EIGEN_LIMIT`]; above that,
/// Lanczos with full reorthogonalization estimates `λ_max` of the operator and
/// of its inverse (shift-invert about zero).
pub fn condition_estimate(op: &dyn SpdOperator) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Config("condition number of an empty matrix".into()));
    }
    if n <= DENSE_EIGEN_LIMIT {
        let ev = op
            .to_dense()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("eigenvalue computation failed: {e:?}")))?;
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min > 0.0) {
            return Err(Error::NotSpd(format!("smallest eigenvalue {min:e}")));
        }
        return Ok(max / min);
    }
    let lmax = lanczos_max(n, &mut |x| Ok(op.apply(x)))?;
    let inv_max = lanczos_max(n, &mut |x| op.solve(x))?;
    if !(inv_max > 0.0) {
        return Err(Error::NotSpd("inverse has a nonpositive spectrum estimate".into()));
    }
    Ok(lmax * inv_max)
}

fn start_vector(n: usize) -> Vec<f64> {
    // fixed, non-symmetric start so results do not depend on any RNG state
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            0.5 + ((h >> 11) as f64) / ((1u64 << 53) as f64)
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full reorthogonalization.
pub fn lanczos_max(n: usize, apply: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<f64> {
    let steps = LANCZOS_MAX_STEPS.min(n);
    let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev_est = 0.0;
    let mut stable = 0;
    for k in 0..steps {
        let mut w = apply(&basis[k])?;
        check_len("lanczos", n, w.len())?;
        let a: f64 = w.iter().zip(&basis[k]).map(|(x, y)| x * y).sum();
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = w.iter().zip(q).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let est = tridiagonal_max(&alpha, &beta)?;
        if k > 0 && ((est - prev_est) / est).abs() < LANCZOS_RTOL {
            stable += 1;
            if stable >= 3 {
                return Ok(est);
            }
        } else {
            stable = 0;
        }
        prev_est = est;
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b <= 1e-14 * est.abs().max(1e-300) {
            return Ok(est);
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    Ok(prev_est)
}

fn tridiagonal_max(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let ev = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("tridiagonal eigensolve failed: {e:?}")))?;
    Ok(ev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SymmetricCsc {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i + 1, i, -1.0));
                t.push((i, i + 1, -1.0));
            }
        }
        SymmetricCsc::from_triplets(n, &t)
    }

    #[test]
    fn identity_and_diagonal_condition_numbers() {
        let id = Mat::<f64>::identity(5, 5);
        assert!(
            (condition_estimate(&DenseSpd {
                matrix: &id,
                factor: None
            })
            .unwrap()
                - 1.0)
                .abs()
                < 1e-12
        );
        let d = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 10.0][i] } else { 0.0 });
        assert!(
            (condition_estimate(&DenseSpd {
                matrix: &d,
                factor: None
            })
            .unwrap()
                - 10.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn lanczos_matches_dense_on_large_laplacian() {
        let n = 2500;
        let a = laplacian_1d(n);
        let f = a.cholesky("test").unwrap();
        let est = condition_estimate(&SparseSpd { matrix: &a, factor: &f }).unwrap();
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let exact = (1.0 - (n as f64 * h).cos()) / (1.0 - h.cos());
        assert!(((est - exact) / exact).abs() < 1e-3, "{est} vs {exact}");
    }

    #[test]
    fn triplets_sum_duplicates_and_keep_lower() {
        let a = SymmetricCsc::from_triplets(
            3,
            &[
                (0, 0, 1.0),
                (0, 0, 2.0),
                (2, 0, 1.5),
                (0, 2, 1.5),
                (1, 1, 4.0),
                (2, 2, 5.0),
            ],
        );
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 2), 1.5);
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]), vec![4.5, 4.0, 6.5]);
    }

    #[test]
    fn sparse_cholesky_solves() {
        let a = laplacian_1d(50);
        let f = a.cholesky("test").unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = a.apply(&x);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
        assert!(a.factor_entries().unwrap() >= 50);
    }

    #[test]
    fn dense_cholesky_rejects_indefinite() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 3.0 });
        assert!(matches!(DenseCholesky::factor(&m, "x"), Err(Error::NotSpd(_))));
    }
}
