//! Symmetric positive-definite block-tridiagonal matrices.
//!
//! The matrix is stored as `N` diagonal `n x n` blocks and `N - 1` blocks
//! below the diagonal; the blocks above the diagonal are the transposes.
//! Factorization is a forward block-Cholesky sweep: every pivot is the
//! Cholesky factor of the Schur complement left after eliminating the
//! previous block row, so factor + solve costs `O(n^3 N)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Result, SmootherError};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalMatrix {
    n: usize,
    diag: Vec<DMatrix<f64>>,
    sub: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalMatrix {
    /// Builds the matrix from its diagonal blocks and the blocks directly
    /// below them (`sub[k]` sits at block row `k + 1`, block column `k`).
    ///
    /// Diagonal blocks are symmetrized as `(B + B^T) / 2`.
    pub fn new(diag: Vec<DMatrix<f64>>, sub: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = match diag.first() {
            Some(b) => b.nrows(),
            None => return Err(SmootherError::DimensionMismatch { expected: 1, found: 0 }),
        };
        if n == 0 {
            return Err(SmootherError::DimensionMismatch { expected: 1, found: 0 });
        }
        if sub.len() + 1 != diag.len() {
            return Err(SmootherError::DimensionMismatch {
                expected: diag.len() - 1,
                found: sub.len(),
            });
        }
        for b in diag.iter().chain(sub.iter()) {
            if b.nrows() != n || b.ncols() != n {
                return Err(SmootherError::DimensionMismatch {
                    expected: n,
                    found: if b.nrows() != n { b.nrows() } else { b.ncols() },
                });
            }
        }
        let diag = diag
            .into_iter()
            .map(|b| (&b + b.transpose()) * 0.5)
            .collect();
        Ok(Self { n, diag, sub })
    }

    pub fn identity(n: usize, num_blocks: usize) -> Self {
        Self {
            n,
            diag: vec![DMatrix::identity(n, n); num_blocks],
            sub: vec![DMatrix::zeros(n, n); num_blocks.saturating_sub(1)],
        }
    }

    pub fn block_dim(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    /// Total dimension `n * N`.
    pub fn dim(&self) -> usize {
        self.n * self.diag.len()
    }

    pub fn diag_block(&self, k: usize) -> &DMatrix<f64> {
        &self.diag[k]
    }

    /// Block at block row `k + 1`, block column `k`.
    pub fn sub_block(&self, k: usize) -> &DMatrix<f64> {
        &self.sub[k]
    }

    /// Adds a symmetric `n x n` block to diagonal block `k`.
    pub fn add_to_diag(&mut self, k: usize, block: &DMatrix<f64>) {
        let sym = (block + block.transpose()) * 0.5;
        self.diag[k] += sym;
    }

    /// Adds `shift * I` to every diagonal block.
    pub fn shift_diag(&mut self, shift: f64) {
        for b in &mut self.diag {
            for i in 0..self.n {
                b[(i, i)] += shift;
            }
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        if x.len() != self.dim() {
            return Err(SmootherError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut y = DVector::zeros(self.dim());
        for k in 0..self.num_blocks() {
            let xk = x.rows(k * n, n);
            let mut yk = &self.diag[k] * xk;
            if k > 0 {
                yk += &self.sub[k - 1] * x.rows((k - 1) * n, n);
            }
            if k + 1 < self.num_blocks() {
                yk += self.sub[k].transpose() * x.rows((k + 1) * n, n);
            }
            y.rows_mut(k * n, n).copy_from(&yk);
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (k, b) in self.diag.iter().enumerate() {
            m.view_mut((k * n, k * n), (n, n)).copy_from(b);
        }
        for (k, b) in self.sub.iter().enumerate() {
            m.view_mut(((k + 1) * n, k * n), (n, n)).copy_from(b);
            m.view_mut((k * n, (k + 1) * n), (n, n)).copy_from(&b.transpose());
        }
        m
    }

    pub fn factor(&self) -> Result<BlockTriFactorization> {
        let num_blocks = self.num_blocks();
        let mut pivots: Vec<DMatrix<f64>> = Vec::with_capacity(num_blocks);
        let mut coupling: Vec<DMatrix<f64>> = Vec::with_capacity(num_blocks.saturating_sub(1));

        let mut schur = self.diag[0].clone();
        for k in 0..num_blocks {
            let chol = Cholesky::new(schur).ok_or(SmootherError::NotPositiveDefinite { block: k })?;
            let l = chol.unpack();
            if k + 1 < num_blocks {
                // B = A L^{-T}, so that S_{k+1} = C_{k+1} - B B^T.
                let bt = l
                    .solve_lower_triangular(&self.sub[k].transpose())
                    .ok_or(SmootherError::NotPositiveDefinite { block: k })?;
                let b = bt.transpose();
                schur = &self.diag[k + 1] - &b * &bt;
                coupling.push(b);
            } else {
                schur = DMatrix::zeros(0, 0);
            }
            pivots.push(l);
        }
        Ok(BlockTriFactorization { n: self.n, pivots, coupling })
    }
}

/// Block lower-bidiagonal Cholesky factor `L` with `L L^T = M`.
#[derive(Debug, Clone)]
pub struct BlockTriFactorization {
    n: usize,
    pivots: Vec<DMatrix<f64>>,
    coupling: Vec<DMatrix<f64>>,
}

impl BlockTriFactorization {
    /// Lower Cholesky factor of the `k`-th Schur-complemented pivot.
    pub fn pivot_factor(&self, k: usize) -> &DMatrix<f64> {
        &self.pivots[k]
    }

    /// The Schur-complemented pivot block itself, `L_k L_k^T`.
    pub fn schur_pivot(&self, k: usize) -> DMatrix<f64> {
        &self.pivots[k] * self.pivots[k].transpose()
    }

    pub fn dim(&self) -> usize {
        self.n * self.pivots.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let num_blocks = self.pivots.len();
        if b.len() != self.dim() {
            return Err(SmootherError::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let mut y = DVector::zeros(self.dim());
        for k in 0..num_blocks {
            let mut rhs: DVector<f64> = b.rows(k * n, n).into_owned();
            if k > 0 {
                rhs -= &self.coupling[k - 1] * y.rows((k - 1) * n, n);
            }
            self.pivots[k].solve_lower_triangular_mut(&mut rhs);
            y.rows_mut(k * n, n).copy_from(&rhs);
        }
        let mut x = DVector::zeros(self.dim());
        for k in (0..num_blocks).rev() {
            let mut rhs: DVector<f64> = y.rows(k * n, n).into_owned();
            if k + 1 < num_blocks {
                rhs -= self.coupling[k].transpose() * x.rows((k + 1) * n, n);
            }
            self.pivots[k].tr_solve_lower_triangular_mut(&mut rhs);
            x.rows_mut(k * n, n).copy_from(&rhs);
        }
        Ok(x)
    }
}
