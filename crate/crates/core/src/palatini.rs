//! Field-equation residuals on four-dimensional isomorphism puzzles, and the
//! Yang–Mills residual for any connection.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;

use crate::bundle::{curvature, ConnectionForms, FormMatrix};
use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::forms::DifferentialForm;
use crate::puzzle::{induced_metric, Puzzle};
use crate::riemann::MetricField;
use crate::symbolic::ExprMatrix;

/// Sign of the permutation `(i, j, k, l)` of `(0, 1, 2, 3)`, or 0.
pub fn levi_civita_symbol(idx: [usize; 4]) -> f64 {
    let mut sign = 1.0;
    for a in 0..4 {
        for b in (a + 1)..4 {
            if idx[a] == idx[b] {
                return 0.0;
            }
            if idx[a] > idx[b] {
                sign = -sign;
            }
        }
    }
    sign
}

#[derive(Debug, Clone)]
pub struct PalatiniResidual {
    /// The four 3-forms `λ_ℓ`.
    pub lambda: Vec<DifferentialForm>,
}

impl PalatiniResidual {
    pub fn max_abs(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in points {
            for l in &self.lambda {
                worst = worst.max(l.max_abs_coefficient(x)?);
            }
        }
        Ok(worst)
    }
}

fn require_four(p: &Puzzle) -> Result<()> {
    if p.chart().dim() != 4 || p.rank() != 4 || p.degree() != 1 {
        return Err(Error::Precondition(format!(
            "Palatini residual needs m = n = 4 and a solder 1-form, found m = {}, n = {}, p = {}",
            p.chart().dim(),
            p.rank(),
            p.degree()
        )));
    }
    Ok(())
}

/// `λ_ℓ = ε_{ijkℓ} Ω^{ij} ∧ φ^k` summed over all `i, j, k`, `ε_{1234} = 1`.
pub fn palatini_residual(p: &Puzzle) -> Result<PalatiniResidual> {
    require_four(p)?;
    let g = p
        .metric()
        .ok_or_else(|| Error::Precondition("Palatini residual needs a fiber metric".into()))?;
    let raised: FormMatrix = curvature(p.connection())?.raise_second(&g.matrix().inverse())?;
    let chart = p.chart();
    let mut lambda = Vec::with_capacity(4);
    for l in 0..4 {
        let mut acc = DifferentialForm::zero(chart, 3);
        for i in 0..4 {
            for j in 0..4 {
                if i == j || raised.get(i, j).is_zero() {
                    continue;
                }
                for k in 0..4 {
                    let e = levi_civita_symbol([i, j, k, l]);
                    if e == 0.0 {
                        continue;
                    }
                    let term = raised.get(i, j).wedge(p.solder().component(k))?;
                    acc = if e > 0.0 {
                        acc.add(&term)?
                    } else {
                        acc.sub(&term)?
                    };
                }
            }
        }
        lambda.push(acc);
    }
    Ok(PalatiniResidual { lambda })
}

/// Integration box and tensor-product Gauss–Legendre order.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub domain: Vec<(f64, f64)>,
    pub nodes: usize,
}

/// Tensor-product Gauss–Legendre integral of `f` over a box.
pub fn integrate_box(
    domain: &[(f64, f64)],
    nodes: usize,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let order = NonZeroUsize::new(nodes)
        .ok_or_else(|| Error::Precondition("quadrature needs at least one node".into()))?;
    let rule: Vec<(f64, f64)> = GaussLegendre::new(order)
        .iter()
        .map(|(x, w)| (*x, *w))
        .collect();
    let dim = domain.len();
    let mut index = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for d in 0..dim {
            let (lo, hi) = domain[d];
            let (x, w) = rule[index[d]];
            point[d] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
            weight *= 0.5 * (hi - lo) * w;
        }
        total += weight * f(&point)?;
        let mut d = 0;
        loop {
            if d == dim {
                return Ok(total);
            }
            index[d] += 1;
            if index[d] < nodes {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

/// `∫ ε_{ijkℓ} Ω^{ij} ∧ φ^k ∧ φ^ℓ` over the box.
pub fn palatini_action(p: &Puzzle, quad: &Quadrature) -> Result<f64> {
    let lambda = palatini_residual(p)?;
    let mut integrand = DifferentialForm::zero(p.chart(), 4);
    for (l, form) in lambda.lambda.iter().enumerate() {
        integrand = integrand.add(&form.wedge(p.solder().component(l))?)?;
    }
    for (d, &(lo, hi)) in quad.domain.iter().enumerate() {
        let (clo, chi) = p.chart().domain()[d];
        if lo < clo || hi > chi {
            return Err(Error::OutOfDomain {
                point: vec![lo, hi],
            });
        }
    }
    if quad.domain.len() != 4 {
        return Err(Error::Precondition(
            "integration box must be four-dimensional".into(),
        ));
    }
    let tape = Tape::new(&[integrand.coefficient(&[0, 1, 2, 3])]);
    integrate_box(&quad.domain, quad.nodes, |x| Ok(tape.eval(x)?[0]))
}

/// `R_ij − ½ R g_ij` of the induced metric at each point.
pub fn einstein_residual(p: &Puzzle, points: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let field = MetricField::new(p.chart(), induced_metric(p)?)?;
    points.iter().map(|x| Ok(field.at(x)?.einstein())).collect()
}

pub fn einstein_defect(p: &Puzzle, points: &[Vec<f64>]) -> Result<f64> {
    Ok(einstein_residual(p, points)?
        .iter()
        .map(|e| e.amax())
        .fold(0.0, f64::max))
}

/// `D(*Ω) = d(*Ω) + ω∧*Ω − (−1)^{m} *Ω∧ω`, the covariant derivative of the
/// dual curvature with the sign fixed by its degree `m − 2`.
pub fn yang_mills_residual(omega: &ConnectionForms, g_chart: &ExprMatrix) -> Result<FormMatrix> {
    let big_omega = curvature(omega)?;
    let dual = big_omega.forms().map(|f| f.hodge_star(g_chart))?;
    dual.covariant_derivative(omega)
}
