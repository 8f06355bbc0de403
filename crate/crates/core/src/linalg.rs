//! Compressed sparse row matrices, 3x3 block systems over the unknown
//! ordering `(phi, c, mu)`, and the direct solver used once per time step.
//!
//! Factorization is delegated to `faer`'s sparse LU with partial pivoting.
//! The symbolic analysis is cached and reused while the sparsity pattern is
//! unchanged, which is the case for every step of a run.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Col, Par};

use crate::{Error, Result};

/// Relative residual `|Ax - b| / max(1, |b|)` accepted from [`DirectSolver`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const MAX_REFINEMENT_SWEEPS: usize = 3;

/// Row-major sparsity structure with sorted, duplicate-free columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern from per-row column lists; columns are sorted and deduplicated.
    pub fn from_rows(ncols: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if let Some(&j) = row.last() {
                if j >= ncols {
                    return Err(Error::IndexOutOfRange { index: j, len: ncols });
                }
            }
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Ok(SparsityPattern {
            nrows: rows.len(),
            ncols,
            row_ptr,
            col_idx,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Storage position of `(i, j)`, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// All-zero matrix on an existing pattern.
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        SparseMatrix {
            pattern,
            values: vec![0.0; nnz],
            symmetric: false,
        }
    }

    pub fn from_parts(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::Dimension {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite matrix entry".into()));
        }
        Ok(SparseMatrix {
            pattern,
            values,
            symmetric: false,
        })
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::IndexOutOfRange { index: i, len: nrows });
            }
            rows[i].push(j);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(ncols, rows)?);
        let mut m = SparseMatrix::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add(i, j, v)?;
        }
        if m.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite matrix entry".into()));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        let mut m = Self::from_triplets(n, n, &triplets).expect("identity is well formed");
        m.symmetric = true;
        m
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Advisory flag set by assemblers of symmetric forms.
    pub fn is_flagged_symmetric(&self) -> bool {
        self.symmetric
    }

    pub(crate) fn set_symmetric_flag(&mut self, flag: bool) {
        self.symmetric = flag;
    }

    /// Accumulate `v` into a structurally present entry.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= self.nrows() {
            return Err(Error::IndexOutOfRange { index: i, len: self.nrows() });
        }
        match self.pattern.position(i, j) {
            Some(k) => {
                self.values[k] += v;
                Ok(())
            }
            None => Err(Error::Argument(format!("entry ({i}, {j}) is not in the sparsity pattern"))),
        }
    }

    /// Entry `(i, j)`, zero when structurally absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.nrows() {
            return 0.0;
        }
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::Dimension {
                expected: self.ncols(),
                got: x.len(),
            });
        }
        let p = &*self.pattern;
        Ok((0..p.nrows)
            .map(|i| {
                let (s, e) = (p.row_ptr[i], p.row_ptr[i + 1]);
                p.col_idx[s..e]
                    .iter()
                    .zip(&self.values[s..e])
                    .map(|(&j, &a)| a * x[j])
                    .sum()
            })
            .collect())
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ay = self.matvec(y)?;
        if x.len() != ay.len() {
            return Err(Error::Dimension {
                expected: ay.len(),
                got: x.len(),
            });
        }
        Ok(dot(x, &ay))
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        SparseMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| s * v).collect(),
            symmetric: self.symmetric,
        }
    }

    /// `sum_k coeff_k * A_k` over matrices sharing one pattern.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::Argument("empty linear combination".into()))?;
        let mut values = vec![0.0; first.nnz()];
        let mut symmetric = true;
        for (c, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &first.pattern) && m.pattern != first.pattern {
                return Err(Error::Argument("linear combination of matrices with different patterns".into()));
            }
            if *c != 0.0 {
                for (acc, v) in values.iter_mut().zip(&m.values) {
                    *acc += c * v;
                }
            }
            symmetric &= m.symmetric;
        }
        Ok(SparseMatrix {
            pattern: first.pattern.clone(),
            values,
            symmetric,
        })
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let p = &*self.pattern;
        let mut worst = 0.0f64;
        for i in 0..p.nrows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                row[self.pattern.col_idx[k]] += self.values[k];
            }
        }
        d
    }

    /// MatrixMarket coordinate text with 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.nrows(), self.ncols(), self.nnz());
        for i in 0..self.nrows() {
            for k in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                let _ = writeln!(out, "{} {} {:?}", i + 1, self.pattern.col_idx[k] + 1, self.values[k]);
            }
        }
        out
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_matrix_market()).map_err(|e| Error::io(path, e))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|Ax - b|_2 / max(1, |b|_2)`.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = a.matvec(x)?;
    if ax.len() != b.len() {
        return Err(Error::Dimension {
            expected: ax.len(),
            got: b.len(),
        });
    }
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    Ok(norm2(&r) / norm2(b).max(1.0))
}

/// Field index inside the coupled unknown vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Phi = 0,
    C = 1,
    Mu = 2,
}

/// Coupled one-step operator: a 3x3 grid of `n x n` blocks over the
/// contiguous unknown ordering `(phi, c, mu)`, its monolithic assembly and
/// right-hand side.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    block_size: usize,
    blocks: [[Option<SparseMatrix>; 3]; 3],
    matrix: SparseMatrix,
    rhs: Vec<f64>,
}

impl BlockSystem {
    /// Compose the monolithic matrix; absent blocks are structurally zero.
    pub fn new(blocks: [[Option<SparseMatrix>; 3]; 3], rhs: Vec<f64>) -> Result<Self> {
        let n = blocks
            .iter()
            .flatten()
            .flatten()
            .map(|b| b.nrows())
            .next()
            .ok_or_else(|| Error::Argument("block system without blocks".into()))?;
        for b in blocks.iter().flatten().flatten() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: if b.nrows() != n { b.nrows() } else { b.ncols() },
                });
            }
        }
        if rhs.len() != 3 * n {
            return Err(Error::Dimension {
                expected: 3 * n,
                got: rhs.len(),
            });
        }
        let mut row_ptr = Vec::with_capacity(3 * n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for block_row in &blocks {
            for i in 0..n {
                for (bc, block) in block_row.iter().enumerate() {
                    if let Some(b) = block {
                        let p = &*b.pattern;
                        let (s, e) = (p.row_ptr[i], p.row_ptr[i + 1]);
                        col_idx.extend(p.col_idx[s..e].iter().map(|&j| j + bc * n));
                        values.extend_from_slice(&b.values[s..e]);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let pattern = Arc::new(SparsityPattern {
            nrows: 3 * n,
            ncols: 3 * n,
            row_ptr,
            col_idx,
        });
        let matrix = SparseMatrix::from_parts(pattern, values)?;
        Ok(BlockSystem {
            block_size: n,
            blocks,
            matrix,
            rhs,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block(&self, row: Field, col: Field) -> Option<&SparseMatrix> {
        self.blocks[row as usize][col as usize].as_ref()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut [f64] {
        &mut self.rhs
    }

    /// Slice of a coupled vector belonging to one field.
    pub fn field<'a>(&self, x: &'a [f64], f: Field) -> &'a [f64] {
        let n = self.block_size;
        &x[f as usize * n..(f as usize + 1) * n]
    }
}

/// Solution vector with the relative residual it achieved.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub residual: f64,
}

struct CachedAnalysis {
    pattern: Arc<SparsityPattern>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    csr_to_csc: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

/// Sparse LU solver that keeps the symbolic factorization between calls.
#[derive(Default)]
pub struct DirectSolver {
    cache: Option<CachedAnalysis>,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver")
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn analysis(&mut self, a: &SparseMatrix) -> Result<&CachedAnalysis> {
        let reusable = self
            .cache
            .as_ref()
            .is_some_and(|c| Arc::ptr_eq(&c.pattern, &a.pattern) || *c.pattern == *a.pattern);
        if !reusable {
            let p = &*a.pattern;
            let (n, m) = (p.nrows, p.ncols);
            let mut col_ptr = vec![0usize; m + 1];
            for &j in &p.col_idx {
                col_ptr[j + 1] += 1;
            }
            for j in 0..m {
                col_ptr[j + 1] += col_ptr[j];
            }
            let mut next = col_ptr.clone();
            let mut row_idx = vec![0usize; p.nnz()];
            let mut csr_to_csc = vec![0usize; p.nnz()];
            for i in 0..n {
                for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                    let j = p.col_idx[k];
                    row_idx[next[j]] = i;
                    csr_to_csc[k] = next[j];
                    next[j] += 1;
                }
            }
            let structure = SymbolicSparseColMatRef::new_checked(n, m, &col_ptr, None, &row_idx);
            let symbolic = SymbolicLu::try_new(structure).map_err(|e| Error::Solver {
                reason: format!("symbolic analysis failed: {e:?}"),
                residual: f64::INFINITY,
            })?;
            self.cache = Some(CachedAnalysis {
                pattern: a.pattern.clone(),
                col_ptr,
                row_idx,
                csr_to_csc,
                symbolic,
            });
        }
        Ok(self.cache.as_ref().expect("analysis cached above"))
    }

    /// Solve `A x = b`, with up to three sweeps of iterative refinement when
    /// the first solve misses [`RESIDUAL_TOLERANCE`].
    pub fn solve_matrix(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Solution> {
        if a.nrows() != a.ncols() {
            return Err(Error::Argument(format!(
                "solve needs a square matrix, got {} x {}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != a.nrows() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let analysis = self.analysis(a)?;
        let mut csc_values = vec![0.0; a.nnz()];
        for (k, &v) in a.values.iter().enumerate() {
            csc_values[analysis.csr_to_csc[k]] = v;
        }
        let structure = SymbolicSparseColMatRef::new_checked(
            a.nrows(),
            a.ncols(),
            &analysis.col_ptr,
            None,
            &analysis.row_idx,
        );
        let csc = SparseColMatRef::new(structure, &csc_values);
        let lu = Lu::try_new_with_symbolic(analysis.symbolic.clone(), csc).map_err(|e| Error::Solver {
            reason: format!("numeric factorization failed: {e:?}"),
            residual: f64::INFINITY,
        })?;

        let lu_solve = |rhs: &[f64]| -> Vec<f64> {
            let rhs = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
            let sol = lu.solve(&rhs);
            (0..sol.nrows()).map(|i| sol[i]).collect()
        };
        let mut x = lu_solve(b);
        let bnorm = norm2(b).max(1.0);
        let mut residual;
        let mut sweeps = 0;
        loop {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver {
                    reason: "factorization produced non-finite values (singular matrix)".into(),
                    residual: f64::INFINITY,
                });
            }
            let ax = a.matvec(&x)?;
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            residual = norm2(&r) / bnorm;
            if residual <= RESIDUAL_TOLERANCE || sweeps == MAX_REFINEMENT_SWEEPS {
                break;
            }
            let dx = lu_solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            sweeps += 1;
        }
        if residual.is_nan() || residual > RESIDUAL_TOLERANCE {
            return Err(Error::Solver {
                reason: "residual above tolerance (matrix singular or numerically rank deficient)".into(),
                residual,
            });
        }
        Ok(Solution { x, residual })
    }

    pub fn solve(&mut self, sys: &BlockSystem) -> Result<Solution> {
        self.solve_matrix(&sys.matrix, &sys.rhs)
    }
}

/// One-off solve of a block system.
pub fn solve(sys: &BlockSystem) -> Result<Solution> {
    DirectSolver::new().solve(sys)
}

/// Cap the factorization's internal parallelism. `0` or `1` runs sequentially.
pub fn set_thread_count(threads: usize) {
    let par = if threads <= 1 { Par::Seq } else { Par::rayon(threads) };
    faer::set_global_parallelism(par);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_examples() {
        let id = SparseMatrix::identity(3);
        assert_eq!(id.matvec(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        let z = SparseMatrix::from_triplets(2, 2, &[]).unwrap();
        assert_eq!(z.matvec(&[4.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        assert!(matches!(a.matvec(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn triplet_duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 2, 2.5), (1, 0, -1.0), (0, 0, 0.5)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 3.5);
        assert_eq!(a.pattern().row(0), &[0, 2]);
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(0, 5, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn diagonal_block_solve() {
        let d = |v: f64| SparseMatrix::from_triplets(1, 1, &[(0, 0, v)]).unwrap();
        let sys = BlockSystem::new(
            [[Some(d(2.0)), None, None], [None, Some(d(3.0)), None], [None, None, Some(d(4.0))]],
            vec![2.0, 3.0, 4.0],
        )
        .unwrap();
        let sol = solve(&sys).unwrap();
        for v in &sol.x {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(sys.field(&sol.x, Field::Mu), &sol.x[2..3]);
    }

    #[test]
    fn monolithic_layout() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 1, 3.0)]).unwrap();
        let sys = BlockSystem::new(
            [[Some(a.clone()), None, Some(a.scaled(-1.0))], [None, Some(a.clone()), None], [Some(a.clone()), None, Some(a)]],
            vec![0.0; 6],
        )
        .unwrap();
        let m = sys.matrix();
        assert_eq!((m.nrows(), m.ncols()), (6, 6));
        assert_eq!(m.get(0, 5), -3.0);
        assert_eq!(m.get(3, 3), 2.0);
        assert_eq!(m.get(5, 1), 2.0);
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.get(3, 2), 0.0);
        assert!(BlockSystem::new([[None, None, None], [None, None, None], [None, None, None]], vec![]).is_err());
    }

    #[test]
    fn singular_matrix_reports_residual() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let err = DirectSolver::new().solve_matrix(&a, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }));
        assert!(err.residual().unwrap() > RESIDUAL_TOLERANCE);
    }

    #[test]
    fn symbolic_reuse_with_new_values() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let mut solver = DirectSolver::new();
        let x1 = solver.solve_matrix(&a, &[1.0, 2.0]).unwrap().x;
        let b = a.scaled(2.0);
        let x2 = solver.solve_matrix(&b, &[1.0, 2.0]).unwrap().x;
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - 2.0 * q).abs() < 1e-15);
        }
    }

    #[test]
    fn matrix_market_header() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.5), (1, 0, -2.0)]).unwrap();
        let text = a.to_matrix_market();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines[1], "2 2 2");
        assert_eq!(lines[2], "1 1 1.5");
        assert_eq!(lines[3], "2 1 -2.0");
    }
}
