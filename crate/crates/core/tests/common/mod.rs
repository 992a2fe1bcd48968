#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use solderlab_core::bundle::{BundleValuedForm, ConnectionForms};
use solderlab_core::expr::Expr;
use solderlab_core::forms::{multi_indices, Chart, DifferentialForm};
use solderlab_core::puzzle::Puzzle;
use solderlab_core::symbolic::ExprMatrix;

/// Monomials `c · Π x_i^{e_i}`.
pub type PolyData = Vec<(f64, Vec<u32>)>;

pub fn poly_data(m: usize, terms: usize) -> impl Strategy<Value = PolyData> {
    prop::collection::vec(
        (-2.0..2.0f64, prop::collection::vec(0u32..=2, m)),
        1..=terms,
    )
}

pub fn poly(data: &PolyData) -> Expr {
    let terms: Vec<Expr> = data
        .iter()
        .map(|(c, exps)| {
            exps.iter()
                .enumerate()
                .fold(Expr::constant(*c), |acc, (i, &e)| {
                    Expr::mul(&acc, &Expr::powi(&Expr::var(i), e as i32))
                })
        })
        .collect();
    Expr::sum(&terms)
}

pub fn point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.9..0.9f64, m)
}

pub fn points(m: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(point(m), count)
}

pub fn cube(m: usize) -> Arc<Chart> {
    let names: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
    Chart::new(names, vec![(-1.0, 1.0); m]).unwrap()
}

pub fn form_data(m: usize, p: usize) -> impl Strategy<Value = Vec<PolyData>> {
    prop::collection::vec(poly_data(m, 3), multi_indices(m, p).len())
}

pub fn form(chart: &Arc<Chart>, p: usize, data: &[PolyData]) -> DifferentialForm {
    let idx = multi_indices(chart.dim(), p);
    DifferentialForm::from_terms(chart, p, idx.into_iter().zip(data.iter().map(poly))).unwrap()
}

/// `n × n` connection with polynomial coefficients.
pub fn connection_data(m: usize, n: usize) -> impl Strategy<Value = Vec<Vec<PolyData>>> {
    prop::collection::vec(prop::collection::vec(poly_data(m, 2), m), n * n)
}

pub fn connection(chart: &Arc<Chart>, n: usize, data: &[Vec<PolyData>]) -> ConnectionForms {
    let coeffs: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| data[i * n + j].iter().map(poly).collect())
                .collect()
        })
        .collect();
    ConnectionForms::from_coefficients(chart, &coeffs).unwrap()
}

/// Antisymmetric connection, compatible with the identity metric.
pub fn skew_connection(chart: &Arc<Chart>, n: usize, data: &[Vec<PolyData>]) -> ConnectionForms {
    let coeffs: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        vec![Expr::zero(); chart.dim()]
                    } else {
                        let (a, b) = if i < j { (i, j) } else { (j, i) };
                        let c: Vec<Expr> = data[a * n + b].iter().map(poly).collect();
                        if i < j {
                            c
                        } else {
                            c.iter().map(Expr::neg).collect()
                        }
                    }
                })
                .collect()
        })
        .collect();
    ConnectionForms::from_coefficients(chart, &coeffs).unwrap()
}

pub fn bundle_form(chart: &Arc<Chart>, p: usize, data: &[Vec<PolyData>]) -> BundleValuedForm {
    BundleValuedForm::new(chart, p, data.iter().map(|d| form(chart, p, d)).collect()).unwrap()
}

pub fn max_abs(form: &DifferentialForm, x: &[f64]) -> f64 {
    form.max_abs_coefficient(x).unwrap()
}

/// Potential `u` (n polynomials) and gauge data (n² polynomials).
#[derive(Debug, Clone)]
pub struct IntegrableData {
    pub u: Vec<PolyData>,
    pub gauge: Vec<PolyData>,
}

pub fn integrable_data(m: usize, n: usize) -> impl Strategy<Value = IntegrableData> {
    (
        prop::collection::vec(poly_data(m, 3), n),
        prop::collection::vec(poly_data(m, 2), n * n),
    )
        .prop_map(|(u, gauge)| IntegrableData { u, gauge })
}

/// `P = D U` with `D = diag(exp(0.2 q_ii))` and `U` unit upper triangular.
pub fn gauge_matrix(n: usize, gauge: &[PolyData]) -> ExprMatrix {
    ExprMatrix::from_fn(n, n, |i, j| {
        let q = poly(&gauge[i * n + j]).scale(0.2);
        match i.cmp(&j) {
            std::cmp::Ordering::Greater => Expr::zero(),
            std::cmp::Ordering::Equal => Expr::exp(&q),
            std::cmp::Ordering::Less => {
                Expr::mul(&Expr::exp(&poly(&gauge[i * n + i]).scale(0.2)), &q)
            }
        }
    })
}

/// Flat `φ = du`, `ω = 0`, seen in the frame `P`: integrable by construction.
pub fn integrable_puzzle(chart: &Arc<Chart>, n: usize, data: &IntegrableData) -> Puzzle {
    let du: Vec<DifferentialForm> = data
        .u
        .iter()
        .map(|d| DifferentialForm::scalar(chart, poly(d)).exterior_derivative())
        .collect();
    let phi = BundleValuedForm::new(chart, 1, du).unwrap();
    let p = gauge_matrix(n, &data.gauge);
    let pinv = p.inverse();
    let omega = ConnectionForms::zero(chart, n)
        .gauge_transform_with_inverse(&p, &pinv)
        .unwrap();
    Puzzle::new(omega, phi.change_frame(&pinv).unwrap(), None).unwrap()
}

/// `u_k = x_k + 0.05 q_k`, close to a coordinate projection.
pub fn near_projection(data: &IntegrableData) -> IntegrableData {
    let mut out = data.clone();
    for (k, u) in out.u.iter_mut().enumerate() {
        for term in u.iter_mut() {
            term.0 *= 0.05;
        }
        let mut e = vec![0; u[0].1.len()];
        e[k] = 1;
        u.push((1.0, e));
    }
    out
}
