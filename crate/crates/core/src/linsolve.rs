//! Sparse matrices, conjugate gradients and thin wrappers over faer's sparse
//! Cholesky and LU factorizations.

use crate::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};

/// Compressed sparse rows, duplicates summed.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    rowptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = t.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut rowptr = vec![0; nrows + 1];
        let mut col = Vec::with_capacity(sorted.len());
        let mut val: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                rowptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            rowptr[r + 1] += rowptr[r];
        }
        Csr { nrows, ncols, rowptr, col, val }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                (self.rowptr[r]..self.rowptr[r + 1]).map(|k| self.val[k] * x[self.col[k]]).sum()
            })
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }
}

fn to_faer(n: usize, m: usize, t: &[(usize, usize, f64)]) -> Result<SparseColMat<usize, f64>> {
    let trip: Vec<_> = t.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(n, m, &trip)
        .map_err(|e| Error::Internal(format!("sparse assembly: {e:?}")))
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl Cholesky {
    pub fn new(n: usize, t: &[(usize, usize, f64)]) -> Result<Self> {
        let a = to_faer(n, n, t)?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::solver(format!("sparse Cholesky failed: {e:?}"), f64::NAN))?;
        Ok(Cholesky { n, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Col::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Sparse LU factor of a general square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(n: usize, t: &[(usize, usize, f64)]) -> Result<Self> {
        let a = to_faer(n, n, t)?;
        let lu = a.sp_lu().map_err(|e| Error::solver(format!("sparse LU failed: {e:?}"), f64::NAN))?;
        Ok(SparseLu { n, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Col::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual 2-norm relative to the right-hand side.
    pub rel_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
/// `project` maps vectors onto the subspace where the operator is definite
/// (e.g. removes the mean for a pure-Neumann pressure problem).
pub fn cg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    project: impl Fn(&mut [f64]),
) -> Result<CgOutcome> {
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm2(&rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let mut r = rhs;
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        let mut ap = apply(&p);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::solver("CG lost positive definiteness", rr.sqrt() / bnorm));
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome { x, iterations: it, rel_residual: rr_new.sqrt() / bnorm });
        }
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    Err(Error::solver(format!("CG did not converge in {max_iter} iterations"), rr.sqrt() / bnorm))
}
