//! Small dense matrices of expressions (dimension ≤ 4 in practice).

use nalgebra::DMatrix;

use crate::error::Result;
use crate::expr::Expr;

#[derive(Clone, Debug, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Expr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExprMatrix {
            rows,
            cols,
            data: vec![Expr::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = ExprMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Expr::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ExprMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<Expr>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        ExprMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expr) {
        self.data[i * self.cols + j] = e;
    }

    pub fn transpose(&self) -> Self {
        ExprMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &ExprMatrix) -> Self {
        assert_eq!(self.cols, other.rows);
        ExprMatrix::from_fn(self.rows, other.cols, |i, j| {
            let terms: Vec<Expr> = (0..self.cols)
                .map(|k| Expr::mul(self.get(i, k), other.get(k, j)))
                .collect();
            Expr::sum(&terms)
        })
    }

    /// `Aᵀ g A` for symmetric `g`, built so the result is syntactically symmetric.
    pub fn congruence(&self, g: &ExprMatrix) -> Self {
        let full = self.transpose().mul(&g.mul(self));
        let n = self.cols;
        ExprMatrix::from_fn(n, n, |i, j| {
            if i <= j {
                full.get(i, j).clone()
            } else {
                full.get(j, i).clone()
            }
        })
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        ExprMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.get(rows[i], cols[j]).clone()
        })
    }

    /// Laplace expansion along the first row.
    pub fn det(&self) -> Expr {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let n = self.rows;
        match n {
            0 => Expr::one(),
            1 => self.get(0, 0).clone(),
            2 => Expr::sub(
                &Expr::mul(self.get(0, 0), self.get(1, 1)),
                &Expr::mul(self.get(0, 1), self.get(1, 0)),
            ),
            _ => {
                let rest: Vec<usize> = (1..n).collect();
                let mut acc = Expr::zero();
                for j in 0..n {
                    if self.get(0, j).is_zero() {
                        continue;
                    }
                    let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
                    let minor = self.submatrix(&rest, &cols).det();
                    let term = Expr::mul(self.get(0, j), &minor);
                    acc = if j % 2 == 0 {
                        Expr::add(&acc, &term)
                    } else {
                        Expr::sub(&acc, &term)
                    };
                }
                acc
            }
        }
    }

    /// Inverse through the adjugate. Entries are closed-form expressions.
    pub fn inverse(&self) -> Self {
        let n = self.rows;
        assert_eq!(n, self.cols);
        let det = self.det();
        if n == 1 {
            return ExprMatrix::from_fn(1, 1, |_, _| Expr::div(&Expr::one(), &det));
        }
        ExprMatrix::from_fn(n, n, |i, j| {
            // (A^{-1})_{ij} = C_{ji} / det
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let minor = self.submatrix(&rows, &cols).det();
            let cof = if (i + j) % 2 == 0 {
                minor
            } else {
                Expr::neg(&minor)
            };
            Expr::div(&cof, &det)
        })
    }

    pub fn eval(&self, vals: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).eval(vals)?;
            }
        }
        Ok(out)
    }

    pub fn substitute(&self, subs: &[Expr]) -> Self {
        ExprMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).substitute(subs))
    }

    pub fn diff(&self, v: usize) -> Self {
        ExprMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).diff(v))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let v = ["x", "y"];
        let m = ExprMatrix::from_rows(vec![
            vec![
                parse_expr("1+x^2", &v).unwrap(),
                parse_expr("x*y", &v).unwrap(),
                Expr::zero(),
            ],
            vec![
                parse_expr("x*y", &v).unwrap(),
                parse_expr("2+y^2", &v).unwrap(),
                parse_expr("x", &v).unwrap(),
            ],
            vec![
                Expr::zero(),
                parse_expr("x", &v).unwrap(),
                parse_expr("3", &v).unwrap(),
            ],
        ]);
        let prod = m.mul(&m.inverse()).eval(&[0.3, -0.7]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_determinant_folds() {
        let m = ExprMatrix::identity(4);
        assert!(m.det().is_one());
        assert!(m.inverse().get(2, 2).is_one());
        assert!(m.inverse().get(1, 2).is_zero());
    }
}
