//! Coordinate Riemannian geometry of a chart metric, evaluated pointwise.
//!
//! Derivatives of the metric are exact; the inverse metric is numeric at each
//! point. Index conventions: `Γ^i_{jk}` is symmetric in `j,k`,
//! `R(∂_k,∂_l)∂_j = R^i_{jkl} ∂_i`, `Ric_{jl} = R^i_{jil}`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forms::Chart;
use crate::symbolic::ExprMatrix;

#[derive(Debug, Clone)]
pub struct MetricField {
    chart: Arc<Chart>,
    g: ExprMatrix,
    dg: Vec<ExprMatrix>,
    ddg: Vec<Vec<ExprMatrix>>,
}

/// Curvature data of a metric at one point, stored densely.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub dim: usize,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    gamma: Vec<f64>,
    riemann: Vec<f64>,
}

impl MetricField {
    pub fn new(chart: &Arc<Chart>, g: ExprMatrix) -> Result<Self> {
        let m = chart.dim();
        if g.nrows() != m || g.ncols() != m {
            return Err(Error::RankMismatch {
                expected: m,
                found: g.nrows(),
            });
        }
        if !g.is_symmetric() {
            return Err(Error::Precondition("chart metric must be symmetric".into()));
        }
        let dg: Vec<ExprMatrix> = (0..m).map(|a| g.diff(a)).collect();
        let ddg = (0..m)
            .map(|a| (0..m).map(|b| dg[a].diff(b)).collect())
            .collect();
        Ok(MetricField {
            chart: chart.clone(),
            g,
            dg,
            ddg,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.g
    }

    pub fn at(&self, x: &[f64]) -> Result<PointGeometry> {
        let m = self.chart.dim();
        let g = self.g.eval(x)?;
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::Singular {
            what: "chart metric".into(),
            point: x.to_vec(),
        })?;
        let dg: Vec<DMatrix<f64>> = self.dg.iter().map(|d| d.eval(x)).collect::<Result<_>>()?;
        let mut ddg = vec![DMatrix::zeros(m, m); m * m];
        for a in 0..m {
            for b in 0..m {
                ddg[a * m + b] = self.ddg[a][b].eval(x)?;
            }
        }
        let idx3 = |i: usize, j: usize, k: usize| (i * m + j) * m + k;

        // Γ_{l jk} (first kind) and its derivatives.
        let first =
            |l: usize, j: usize, k: usize| 0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
        let dfirst = |c: usize, l: usize, j: usize, k: usize| {
            0.5 * (ddg[c * m + j][(l, k)] + ddg[c * m + k][(l, j)] - ddg[c * m + l][(j, k)])
        };
        let mut gamma = vec![0.0; m * m * m];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    gamma[idx3(i, j, k)] = (0..m).map(|l| ginv[(i, l)] * first(l, j, k)).sum();
                }
            }
        }
        // ∂_c g^{il} = −g^{ia} ∂_c g_{ab} g^{bl}
        let dginv: Vec<DMatrix<f64>> = dg.iter().map(|d| -(&ginv * d * &ginv)).collect();
        let mut dgamma = vec![0.0; m * m * m * m];
        for c in 0..m {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let mut s = 0.0;
                        for l in 0..m {
                            s += dginv[c][(i, l)] * first(l, j, k)
                                + ginv[(i, l)] * dfirst(c, l, j, k);
                        }
                        dgamma[c * m * m * m + idx3(i, j, k)] = s;
                    }
                }
            }
        }
        let dgam = |c: usize, i: usize, j: usize, k: usize| dgamma[c * m * m * m + idx3(i, j, k)];
        let mut riemann = vec![0.0; m * m * m * m];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let mut r = dgam(k, i, l, j) - dgam(l, i, k, j);
                        for p in 0..m {
                            r += gamma[idx3(i, k, p)] * gamma[idx3(p, l, j)]
                                - gamma[idx3(i, l, p)] * gamma[idx3(p, k, j)];
                        }
                        riemann[((i * m + j) * m + k) * m + l] = r;
                    }
                }
            }
        }
        Ok(PointGeometry {
            dim: m,
            g,
            ginv,
            gamma,
            riemann,
        })
    }
}

impl PointGeometry {
    /// `Γ^i_{jk}`.
    pub fn christoffel(&self, i: usize, j: usize, k: usize) -> f64 {
        let m = self.dim;
        self.gamma[(i * m + j) * m + k]
    }

    /// `R^i_{jkl}`.
    pub fn riemann(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let m = self.dim;
        self.riemann[((i * m + j) * m + k) * m + l]
    }

    pub fn ricci(&self) -> DMatrix<f64> {
        let m = self.dim;
        DMatrix::from_fn(m, m, |j, l| (0..m).map(|i| self.riemann(i, j, i, l)).sum())
    }

    pub fn scalar(&self) -> f64 {
        let ric = self.ricci();
        self.ginv.component_mul(&ric).sum()
    }

    pub fn einstein(&self) -> DMatrix<f64> {
        self.ricci() - &self.g * (0.5 * self.scalar())
    }
}
