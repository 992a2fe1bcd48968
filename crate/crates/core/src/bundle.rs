//! Vector-bundle calculus in one fixed global frame over one chart.
//!
//! Convention: `∇e_j = e_i ω^i_j`, so that for `ψ = e_i ψ^i`
//! `(d^∇ψ)^i = dψ^i + ω^i_j ∧ ψ^j`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{check_chart, Chart, ChartMap, DifferentialForm};
use crate::symbolic::ExprMatrix;

/// Square matrix of forms of one common degree.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    chart: Arc<Chart>,
    rank: usize,
    degree: usize,
    entries: Vec<DifferentialForm>,
}

impl FormMatrix {
    pub fn new(
        chart: &Arc<Chart>,
        rank: usize,
        degree: usize,
        entries: Vec<DifferentialForm>,
    ) -> Result<Self> {
        if entries.len() != rank * rank {
            return Err(Error::RankMismatch {
                expected: rank * rank,
                found: entries.len(),
            });
        }
        for e in &entries {
            check_chart(chart, e.chart(), "form matrix entry")?;
            if e.degree() != degree {
                return Err(Error::DegreeMismatch(format!(
                    "entry of degree {} in a degree-{degree} matrix",
                    e.degree()
                )));
            }
        }
        Ok(FormMatrix {
            chart: chart.clone(),
            rank,
            degree,
            entries,
        })
    }

    pub fn zero(chart: &Arc<Chart>, rank: usize, degree: usize) -> Self {
        FormMatrix {
            chart: chart.clone(),
            rank,
            degree,
            entries: vec![DifferentialForm::zero(chart, degree); rank * rank],
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, i: usize, j: usize) -> &DifferentialForm {
        &self.entries[i * self.rank + j]
    }

    pub fn entries(&self) -> &[DifferentialForm] {
        &self.entries
    }

    pub fn map(&self, f: impl Fn(&DifferentialForm) -> Result<DifferentialForm>) -> Result<Self> {
        let entries = self.entries.iter().map(f).collect::<Result<Vec<_>>>()?;
        let degree = entries
            .first()
            .map_or(self.degree, DifferentialForm::degree);
        let chart = entries
            .first()
            .map_or(self.chart.clone(), |e| e.chart().clone());
        FormMatrix::new(&chart, self.rank, degree, entries)
    }

    /// Matrix product with wedge as the entry multiplication.
    pub fn wedge(&self, other: &FormMatrix) -> Result<FormMatrix> {
        check_chart(&self.chart, &other.chart, "form matrix wedge")?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch {
                expected: self.rank,
                found: other.rank,
            });
        }
        let n = self.rank;
        let degree = self.degree + other.degree;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = DifferentialForm::zero(&self.chart, degree);
                for k in 0..n {
                    acc = acc.add(&self.get(i, k).wedge(other.get(k, j))?)?;
                }
                entries.push(acc);
            }
        }
        FormMatrix::new(&self.chart, n, degree, entries)
    }

    pub fn add(&self, other: &FormMatrix) -> Result<FormMatrix> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        FormMatrix::new(&self.chart, self.rank, self.degree, entries)
    }

    pub fn sub(&self, other: &FormMatrix) -> Result<FormMatrix> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        FormMatrix::new(&self.chart, self.rank, self.degree, entries)
    }

    /// Left multiplication by a function matrix: `(A F)_ij = A_ik F_kj`.
    pub fn left_mul(&self, a: &ExprMatrix) -> Result<FormMatrix> {
        let n = self.rank;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = DifferentialForm::zero(&self.chart, self.degree);
                for k in 0..n {
                    if !a.get(i, k).is_zero() {
                        acc = acc.add(&self.get(k, j).scale(a.get(i, k)))?;
                    }
                }
                entries.push(acc);
            }
        }
        FormMatrix::new(&self.chart, n, self.degree, entries)
    }

    /// Right multiplication by a function matrix: `(F A)_ij = F_ik A_kj`.
    pub fn right_mul(&self, a: &ExprMatrix) -> Result<FormMatrix> {
        let n = self.rank;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = DifferentialForm::zero(&self.chart, self.degree);
                for k in 0..n {
                    if !a.get(k, j).is_zero() {
                        acc = acc.add(&self.get(i, k).scale(a.get(k, j)))?;
                    }
                }
                entries.push(acc);
            }
        }
        FormMatrix::new(&self.chart, n, self.degree, entries)
    }

    pub fn exterior_derivative(&self) -> FormMatrix {
        FormMatrix {
            chart: self.chart.clone(),
            rank: self.rank,
            degree: self.degree + 1,
            entries: self
                .entries
                .iter()
                .map(DifferentialForm::exterior_derivative)
                .collect(),
        }
    }

    pub fn max_abs_coefficient(&self, x: &[f64]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for e in &self.entries {
            m = m.max(e.max_abs_coefficient(x)?);
        }
        Ok(m)
    }

    /// Adjoint covariant derivative of a matrix-valued form:
    /// `dF + ω∧F − (−1)^deg F∧ω`.
    pub fn covariant_derivative(&self, omega: &ConnectionForms) -> Result<FormMatrix> {
        let w = omega.forms();
        let left = w.wedge(self)?;
        let right = self.wedge(w)?;
        let out = self.exterior_derivative().add(&left)?;
        if self.degree % 2 == 0 {
            out.sub(&right)
        } else {
            out.add(&right)
        }
    }
}

/// Connection 1-forms `ω^i_j` in the fixed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionForms(FormMatrix);

impl ConnectionForms {
    pub fn new(chart: &Arc<Chart>, rank: usize, entries: Vec<DifferentialForm>) -> Result<Self> {
        Ok(ConnectionForms(FormMatrix::new(chart, rank, 1, entries)?))
    }

    pub fn zero(chart: &Arc<Chart>, rank: usize) -> Self {
        ConnectionForms(FormMatrix::zero(chart, rank, 1))
    }

    /// `coeffs[i][j][a]` is the `dx^a` coefficient of `ω^i_j`.
    pub fn from_coefficients(chart: &Arc<Chart>, coeffs: &[Vec<Vec<Expr>>]) -> Result<Self> {
        let n = coeffs.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in coeffs {
            if row.len() != n {
                return Err(Error::RankMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for c in row {
                entries.push(DifferentialForm::one_form(chart, c)?);
            }
        }
        ConnectionForms::new(chart, n, entries)
    }

    pub fn from_matrix(m: FormMatrix) -> Result<Self> {
        if m.degree != 1 {
            return Err(Error::DegreeMismatch(
                "connection forms must have degree 1".into(),
            ));
        }
        Ok(ConnectionForms(m))
    }

    pub fn forms(&self) -> &FormMatrix {
        &self.0
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.0.chart
    }

    pub fn rank(&self) -> usize {
        self.0.rank
    }

    pub fn get(&self, i: usize, j: usize) -> &DifferentialForm {
        self.0.get(i, j)
    }

    /// Numeric matrix `ω(v)` at `x`.
    pub fn eval_on(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.rank();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (idx, c) in self.get(i, j).terms() {
                    s += c.eval(x)? * v[idx[0]];
                }
                out[(i, j)] = s;
            }
        }
        Ok(out)
    }

    pub fn pullback(&self, u: &ChartMap) -> Result<ConnectionForms> {
        ConnectionForms::from_matrix(self.0.map(|f| f.pullback(u))?)
    }

    /// Frame change `ω ↦ P⁻¹dP + P⁻¹ωP` for new frame `ẽ_j = e_i P^i_j`.
    pub fn gauge_transform(&self, p: &ExprMatrix) -> Result<ConnectionForms> {
        let pinv = p.inverse();
        self.gauge_transform_with_inverse(p, &pinv)
    }

    pub fn gauge_transform_with_inverse(
        &self,
        p: &ExprMatrix,
        pinv: &ExprMatrix,
    ) -> Result<ConnectionForms> {
        let n = self.rank();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::RankMismatch {
                expected: n,
                found: p.nrows(),
            });
        }
        let chart = self.chart().clone();
        let dp_entries: Vec<DifferentialForm> = (0..n * n)
            .map(|k| {
                DifferentialForm::scalar(&chart, p.get(k / n, k % n).clone()).exterior_derivative()
            })
            .collect();
        let dp = FormMatrix::new(&chart, n, 1, dp_entries)?;
        let first = dp.left_mul(pinv)?;
        let second = self.0.right_mul(p)?.left_mul(pinv)?;
        ConnectionForms::from_matrix(first.add(&second)?)
    }
}

/// Curvature 2-forms `Ω^i_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureForms(FormMatrix);

impl CurvatureForms {
    pub fn forms(&self) -> &FormMatrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> &DifferentialForm {
        self.0.get(i, j)
    }

    pub fn rank(&self) -> usize {
        self.0.rank
    }

    /// `Ω^{ij} := Ω^i_k g^{kj}` given the inverse fiber metric.
    pub fn raise_second(&self, ginv: &ExprMatrix) -> Result<FormMatrix> {
        self.0.right_mul(ginv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberMetric {
    chart: Arc<Chart>,
    matrix: ExprMatrix,
}

impl FiberMetric {
    pub fn new(chart: &Arc<Chart>, matrix: ExprMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::RankMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if !matrix.is_symmetric() {
            return Err(Error::Precondition("fiber metric must be symmetric".into()));
        }
        if let Some(v) = (0..matrix.nrows() * matrix.ncols())
            .filter_map(|k| matrix.get(k / matrix.ncols(), k % matrix.ncols()).max_var())
            .max()
        {
            if v >= chart.dim() {
                return Err(Error::ChartMismatch(
                    "metric uses a variable outside the chart".into(),
                ));
            }
        }
        Ok(FiberMetric {
            chart: chart.clone(),
            matrix,
        })
    }

    pub fn identity(chart: &Arc<Chart>, rank: usize) -> Self {
        FiberMetric {
            chart: chart.clone(),
            matrix: ExprMatrix::identity(rank),
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.matrix
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.matrix.eval(x)
    }

    /// Positive definiteness at each given point.
    pub fn check_positive_definite(&self, points: &[Vec<f64>]) -> Result<()> {
        for x in points {
            if self.eval(x)?.cholesky().is_none() {
                return Err(Error::Singular {
                    what: "fiber metric (not positive definite)".into(),
                    point: x.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Bundle-valued p-form `ψ = e_i ψ^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleValuedForm {
    chart: Arc<Chart>,
    degree: usize,
    components: Vec<DifferentialForm>,
}

impl BundleValuedForm {
    pub fn new(
        chart: &Arc<Chart>,
        degree: usize,
        components: Vec<DifferentialForm>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::RankMismatch {
                expected: 1,
                found: 0,
            });
        }
        for c in &components {
            check_chart(chart, c.chart(), "bundle-valued form component")?;
            if c.degree() != degree {
                return Err(Error::DegreeMismatch(format!(
                    "component of degree {} in a degree-{degree} bundle-valued form",
                    c.degree()
                )));
            }
        }
        Ok(BundleValuedForm {
            chart: chart.clone(),
            degree,
            components,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> &[DifferentialForm] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &DifferentialForm {
        &self.components[i]
    }

    pub fn max_abs_coefficient(&self, x: &[f64]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for c in &self.components {
            m = m.max(c.max_abs_coefficient(x)?);
        }
        Ok(m)
    }

    pub fn max_abs_over(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for x in points {
            m = m.max(self.max_abs_coefficient(x)?);
        }
        Ok(m)
    }

    /// For a 1-form: the numeric `n × m` matrix `φ^i_a` at `x`.
    pub fn one_form_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.degree != 1 {
            return Err(Error::DegreeMismatch("matrix view needs a 1-form".into()));
        }
        let mut out = DMatrix::zeros(self.rank(), self.chart.dim());
        for (i, c) in self.components.iter().enumerate() {
            for (idx, e) in c.terms() {
                out[(i, idx[0])] = e.eval(x)?;
            }
        }
        Ok(out)
    }

    /// For a 1-form: the symbolic `n × m` coefficient matrix.
    pub fn one_form_exprs(&self) -> Result<ExprMatrix> {
        if self.degree != 1 {
            return Err(Error::DegreeMismatch("matrix view needs a 1-form".into()));
        }
        Ok(ExprMatrix::from_fn(
            self.rank(),
            self.chart.dim(),
            |i, a| self.components[i].coefficient(&[a]),
        ))
    }

    /// Value `φ(v)` of a 1-form at `x`.
    pub fn apply(&self, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
        let m = self.one_form_matrix(x)?;
        Ok(m * DVector::from_column_slice(v))
    }

    pub fn pullback(&self, u: &ChartMap) -> Result<BundleValuedForm> {
        let comps = self
            .components
            .iter()
            .map(|c| c.pullback(u))
            .collect::<Result<Vec<_>>>()?;
        BundleValuedForm::new(u.source(), self.degree, comps)
    }

    /// Components in a new frame `ẽ_j = e_i P^i_j`: `ψ̃ = P⁻¹ψ`.
    pub fn change_frame(&self, pinv: &ExprMatrix) -> Result<BundleValuedForm> {
        let n = self.rank();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = DifferentialForm::zero(&self.chart, self.degree);
            for j in 0..n {
                if !pinv.get(i, j).is_zero() {
                    acc = acc.add(&self.components[j].scale(pinv.get(i, j)))?;
                }
            }
            comps.push(acc);
        }
        BundleValuedForm::new(&self.chart, self.degree, comps)
    }
}

/// `(d^∇ψ)^i = dψ^i + ω^i_j ∧ ψ^j`.
pub fn covariant_exterior_derivative(
    omega: &ConnectionForms,
    psi: &BundleValuedForm,
) -> Result<BundleValuedForm> {
    check_chart(omega.chart(), psi.chart(), "covariant exterior derivative")?;
    let n = omega.rank();
    if psi.rank() != n {
        return Err(Error::RankMismatch {
            expected: n,
            found: psi.rank(),
        });
    }
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = psi.component(i).exterior_derivative();
        for j in 0..n {
            acc = acc.add(&omega.get(i, j).wedge(psi.component(j))?)?;
        }
        comps.push(acc);
    }
    BundleValuedForm::new(psi.chart(), psi.degree() + 1, comps)
}

/// `Ω = dω + ω∧ω`.
pub fn curvature(omega: &ConnectionForms) -> Result<CurvatureForms> {
    let w = omega.forms();
    Ok(CurvatureForms(w.exterior_derivative().add(&w.wedge(w)?)?))
}

/// `dg_ij − g_kj ω^k_i − g_ik ω^k_j`; vanishes iff ∇ respects g.
pub fn metric_compatibility_residual(
    omega: &ConnectionForms,
    g: &FiberMetric,
) -> Result<FormMatrix> {
    let n = omega.rank();
    if g.rank() != n {
        return Err(Error::RankMismatch {
            expected: n,
            found: g.rank(),
        });
    }
    let chart = omega.chart().clone();
    let gm = g.matrix();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc =
                DifferentialForm::scalar(&chart, gm.get(i, j).clone()).exterior_derivative();
            for k in 0..n {
                acc = acc.sub(&omega.get(k, i).scale(gm.get(k, j)))?;
                acc = acc.sub(&omega.get(k, j).scale(gm.get(i, k)))?;
            }
            entries.push(acc);
        }
    }
    FormMatrix::new(&chart, n, 1, entries)
}

/// Sampled solution of a parallel-transport problem.
#[derive(Debug, Clone)]
pub struct TransportPath {
    pub times: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

impl TransportPath {
    pub fn last(&self) -> &DVector<f64> {
        self.vectors.last().expect("transport path is never empty")
    }
}

/// RK4 for `dv/dt = −ω(γ'(t)) v` over the curve's parameter interval.
pub fn parallel_transport(
    omega: &ConnectionForms,
    curve: &ChartMap,
    v0: &[f64],
    steps: usize,
) -> Result<TransportPath> {
    check_chart(omega.chart(), curve.target(), "parallel transport")?;
    if curve.source().dim() != 1 {
        return Err(Error::Precondition(
            "transport curve must have a 1-dimensional source".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    if v0.len() != omega.rank() {
        return Err(Error::RankMismatch {
            expected: omega.rank(),
            found: v0.len(),
        });
    }
    let velocity = curve.jacobian();
    let (t0, t1) = curve.source().domain()[0];
    let generator = |t: f64| -> Result<DMatrix<f64>> {
        let x = curve.eval(&[t])?;
        let v = velocity.eval(&[t])?;
        Ok(-omega.eval_on(&x, v.column(0).as_slice())?)
    };
    let h = (t1 - t0) / steps as f64;
    let mut v = DVector::from_column_slice(v0);
    let mut times = vec![t0];
    let mut vectors = vec![v.clone()];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let a_start = generator(t)?;
        let a_mid = generator(t + 0.5 * h)?;
        let a_end = generator(t + h)?;
        let k1 = &a_start * &v;
        let k2 = &a_mid * (&v + &k1 * (0.5 * h));
        let k3 = &a_mid * (&v + &k2 * (0.5 * h));
        let k4 = &a_end * (&v + &k3 * h);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        times.push(t + h);
        vectors.push(v.clone());
    }
    Ok(TransportPath { times, vectors })
}
