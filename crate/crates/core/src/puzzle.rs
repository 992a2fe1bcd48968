//! Puzzles `(chart, bundle, ∇, φ)` and their pointwise interrogation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bundle::{
    covariant_exterior_derivative, metric_compatibility_residual, BundleValuedForm,
    ConnectionForms, FiberMetric,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{check_chart, multi_indices, Chart, ChartMap, DifferentialForm, VectorField};
use crate::symbolic::ExprMatrix;

/// Relative singular-value threshold for numerical rank.
pub const RANK_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Puzzle {
    chart: Arc<Chart>,
    connection: ConnectionForms,
    solder: BundleValuedForm,
    metric: Option<FiberMetric>,
}

impl Puzzle {
    pub fn new(
        connection: ConnectionForms,
        solder: BundleValuedForm,
        metric: Option<FiberMetric>,
    ) -> Result<Self> {
        let chart = connection.chart().clone();
        check_chart(&chart, solder.chart(), "puzzle solder form")?;
        if solder.rank() != connection.rank() {
            return Err(Error::RankMismatch {
                expected: connection.rank(),
                found: solder.rank(),
            });
        }
        if solder.degree() == 0 || solder.degree() > chart.dim() {
            return Err(Error::DegreeMismatch(format!(
                "solder form degree {} must lie in 1..={}",
                solder.degree(),
                chart.dim()
            )));
        }
        if let Some(g) = &metric {
            check_chart(&chart, g.chart(), "puzzle fiber metric")?;
            if g.rank() != connection.rank() {
                return Err(Error::RankMismatch {
                    expected: connection.rank(),
                    found: g.rank(),
                });
            }
        }
        Ok(Puzzle {
            chart,
            connection,
            solder,
            metric,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.connection.rank()
    }

    pub fn degree(&self) -> usize {
        self.solder.degree()
    }

    pub fn connection(&self) -> &ConnectionForms {
        &self.connection
    }

    pub fn solder(&self) -> &BundleValuedForm {
        &self.solder
    }

    pub fn metric(&self) -> Option<&FiberMetric> {
        self.metric.as_ref()
    }

    pub fn with_metric(&self, metric: Option<FiberMetric>) -> Result<Self> {
        Puzzle::new(self.connection.clone(), self.solder.clone(), metric)
    }

    pub fn with_connection(&self, connection: ConnectionForms) -> Result<Self> {
        Puzzle::new(connection, self.solder.clone(), self.metric.clone())
    }

    fn require_metric(&self) -> Result<&FiberMetric> {
        self.metric
            .as_ref()
            .ok_or_else(|| Error::Precondition("puzzle has no fiber metric".into()))
    }

    /// Max metric-compatibility residual over `points`; `None` without a metric.
    pub fn metric_defect(&self, points: &[Vec<f64>]) -> Result<Option<f64>> {
        let Some(g) = &self.metric else {
            return Ok(None);
        };
        let r = metric_compatibility_residual(&self.connection, g)?;
        let mut worst: f64 = 0.0;
        for x in points {
            worst = worst.max(r.max_abs_coefficient(x)?);
        }
        Ok(Some(worst))
    }

    /// For `p = 1` the `n × m` matrix `φ^i_a`; for `p ≥ 2` the matrix of
    /// `ξ ↦ ξ⨼φ`, rows indexed by (component, degree-(p−1) multi-index).
    pub fn solder_map(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.chart.dim();
        let p = self.degree();
        if p == 1 {
            return self.solder.one_form_matrix(x);
        }
        let rows = multi_indices(m, p - 1);
        let n = self.rank();
        let mut out = DMatrix::zeros(n * rows.len(), m);
        for a in 0..m {
            let xi = VectorField::coordinate(&self.chart, a);
            for i in 0..n {
                let c = self.solder.component(i).interior_product(&xi)?;
                for (r, idx) in rows.iter().enumerate() {
                    out[(i * rows.len() + r, a)] = c.coefficient(idx).eval(x)?;
                }
            }
        }
        Ok(out)
    }
}

/// `d^∇φ`.
pub fn integrability_residual(p: &Puzzle) -> Result<BundleValuedForm> {
    covariant_exterior_derivative(&p.connection, &p.solder)
}

/// Max absolute coefficient of `d^∇φ` over `points`.
pub fn integrability_defect(p: &Puzzle, points: &[Vec<f64>]) -> Result<f64> {
    integrability_residual(p)?.max_abs_over(points)
}

pub fn is_integrable(p: &Puzzle, tol: f64, points: &[Vec<f64>]) -> Result<bool> {
    Ok(integrability_defect(p, points)? <= tol)
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

/// Rank with the relative threshold `RANK_THRESHOLD · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_THRESHOLD * top).count()
}

/// Orthonormal basis of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let m = a.ncols();
    let size = a.nrows().max(m);
    let mut sq = DMatrix::zeros(size, m);
    sq.view_mut((0, 0), (a.nrows(), m)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    (0..m)
        .filter(|&k| top == 0.0 || svd.singular_values[k] <= RANK_THRESHOLD * top)
        .map(|k| vt.row(k).transpose())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RankClass {
    Isomorphism,
    Injective,
    Surjective,
    ConstantRank { rank: usize },
    Variable,
}

impl fmt::Display for RankClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankClass::Isomorphism => write!(f, "isomorphism"),
            RankClass::Injective => write!(f, "injective"),
            RankClass::Surjective => write!(f, "surjective"),
            RankClass::ConstantRank { rank } => write!(f, "constant rank {rank}"),
            RankClass::Variable => write!(f, "variable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankProfile {
    pub rows: usize,
    pub cols: usize,
    pub ranks: Vec<usize>,
    pub class: RankClass,
}

impl RankProfile {
    /// Kernel dimension when the rank is constant.
    pub fn kernel_dim(&self) -> Option<usize> {
        match self.class {
            RankClass::Variable => None,
            _ => self.ranks.first().map(|r| self.cols - r),
        }
    }
}

pub fn rank_profile(p: &Puzzle, points: &[Vec<f64>]) -> Result<RankProfile> {
    let mut ranks = Vec::with_capacity(points.len());
    let mut shape = (0, p.chart.dim());
    for x in points {
        let a = p.solder_map(x)?;
        shape = (a.nrows(), a.ncols());
        ranks.push(numerical_rank(&a));
    }
    if points.is_empty() {
        shape.0 = p.solder_map(&p.chart.center())?.nrows();
    }
    let (rows, cols) = shape;
    let class = match ranks.first() {
        None => RankClass::Variable,
        Some(&r) if ranks.iter().any(|&q| q != r) => RankClass::Variable,
        Some(&r) if r == rows && r == cols => RankClass::Isomorphism,
        Some(&r) if r == cols => RankClass::Injective,
        Some(&r) if r == rows => RankClass::Surjective,
        Some(&r) => RankClass::ConstantRank { rank: r },
    };
    Ok(RankProfile {
        rows,
        cols,
        ranks,
        class,
    })
}

/// `(φ^*g)_{ab} = g_{ij} φ^i_a φ^j_b`.
pub fn induced_metric(p: &Puzzle) -> Result<ExprMatrix> {
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "induced metric needs a solder 1-form".into(),
        ));
    }
    let g = p.require_metric()?;
    let phi = p.solder.one_form_exprs()?;
    Ok(phi.congruence(g.matrix()))
}

/// Pull-back of the whole puzzle along `u`.
pub fn pullback_puzzle(p: &Puzzle, u: &ChartMap) -> Result<Puzzle> {
    check_chart(&p.chart, u.target(), "puzzle pullback")?;
    let connection = p.connection.pullback(u)?;
    let solder = p.solder.pullback(u)?;
    let metric = match &p.metric {
        Some(g) => Some(FiberMetric::new(
            u.source(),
            g.matrix().substitute(u.components()),
        )?),
        None => None,
    };
    Puzzle::new(connection, solder, metric)
}

/// Orthonormal basis of `K_x` (kernel of the solder map at `x`).
pub fn kernel_distribution(p: &Puzzle, x: &[f64]) -> Result<Vec<DVector<f64>>> {
    Ok(null_space(&p.solder_map(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrobeniusReport {
    /// Max of `|[X,Y]⨼φ|` over the samples.
    pub bracket: f64,
    /// Max of `|X⨼φ|, |Y⨼φ|`; should vanish for genuine kernel fields.
    pub kernel_violation: f64,
}

pub fn frobenius_residual(
    p: &Puzzle,
    x: &VectorField,
    y: &VectorField,
    points: &[Vec<f64>],
) -> Result<FrobeniusReport> {
    let bracket = x.lie_bracket(y)?;
    let contract = |v: &VectorField| -> Result<Vec<DifferentialForm>> {
        p.solder
            .components()
            .iter()
            .map(|c| c.interior_product(v))
            .collect()
    };
    let (cb, cx, cy) = (contract(&bracket)?, contract(x)?, contract(y)?);
    let mut report = FrobeniusReport {
        bracket: 0.0,
        kernel_violation: 0.0,
    };
    for pt in points {
        for i in 0..p.rank() {
            report.bracket = report.bracket.max(cb[i].max_abs_coefficient(pt)?);
            report.kernel_violation = report
                .kernel_violation
                .max(cx[i].max_abs_coefficient(pt)?)
                .max(cy[i].max_abs_coefficient(pt)?);
        }
    }
    Ok(report)
}

/// Levi-Civita spin connection of an orthonormal coframe: the unique
/// antisymmetric `ω` with `dθ^i + ω^i_j∧θ^j = 0`.
pub fn torsion_free_connection(
    coframe: &BundleValuedForm,
    g: &FiberMetric,
) -> Result<ConnectionForms> {
    let chart = coframe.chart().clone();
    let n = coframe.rank();
    if coframe.degree() != 1 || n != chart.dim() {
        return Err(Error::Precondition(
            "torsion-free solver needs a coframe of n 1-forms on an n-chart".into(),
        ));
    }
    let gm = g.matrix();
    let orthonormal = gm.nrows() == n
        && (0..n).all(|i| {
            (0..n).all(|j| gm.get(i, j).as_const() == Some(if i == j { 1.0 } else { 0.0 }))
        });
    if !orthonormal {
        return Err(Error::Precondition(
            "torsion-free solver expects an orthonormal coframe (g = identity)".into(),
        ));
    }
    let e = coframe.one_form_exprs()?;
    let det = e.det();
    for x in chart.seeded_samples(50, 0x7f) {
        let d = det.eval(&x)?;
        if d.abs() < 1e-12 {
            return Err(Error::Singular {
                what: "coframe".into(),
                point: x,
            });
        }
    }
    let f = e.inverse();
    // C^i_{ab} = ∂_a E^i_b − ∂_b E^i_a
    let curl = |i: usize, a: usize, b: usize| Expr::sub(&e.get(i, b).diff(a), &e.get(i, a).diff(b));
    // B_{ijk} = C^i_{ab} F^a_j F^b_k, so that dθ^i = ½ B_{ijk} θ^j∧θ^k.
    let mut big_b = vec![Expr::zero(); n * n * n];
    for i in 0..n {
        for a in 0..n {
            for b in (a + 1)..n {
                let c = curl(i, a, b);
                if c.is_zero() {
                    continue;
                }
                for j in 0..n {
                    for k in 0..n {
                        let w = Expr::sub(
                            &Expr::mul(f.get(a, j), f.get(b, k)),
                            &Expr::mul(f.get(b, j), f.get(a, k)),
                        );
                        if w.is_zero() {
                            continue;
                        }
                        let slot = &mut big_b[(i * n + j) * n + k];
                        *slot = Expr::add(slot, &Expr::mul(&c, &w));
                    }
                }
            }
        }
    }
    let b = |i: usize, j: usize, k: usize| &big_b[(i * n + j) * n + k];
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                entries.push(DifferentialForm::zero(&chart, 1));
                continue;
            }
            let mut coeffs = vec![Expr::zero(); n];
            for k in 0..n {
                // A_{ijk} = ½(B_{ijk} + B_{jki} − B_{kij})
                let a = Expr::sub(&Expr::add(b(i, j, k), b(j, k, i)), b(k, i, j)).scale(0.5);
                if a.is_zero() {
                    continue;
                }
                for (col, coeff) in coeffs.iter_mut().enumerate() {
                    if !e.get(k, col).is_zero() {
                        *coeff = Expr::add(coeff, &Expr::mul(&a, e.get(k, col)));
                    }
                }
            }
            entries.push(DifferentialForm::one_form(&chart, &coeffs)?);
        }
    }
    // Exact antisymmetry: build the lower triangle from the upper one.
    for i in 0..n {
        for j in 0..i {
            entries[i * n + j] = entries[j * n + i].neg();
        }
    }
    ConnectionForms::new(&chart, n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::MetricField;

    fn chart(names: Vec<&str>, domain: Vec<(f64, f64)>) -> Arc<Chart> {
        Chart::new(names, domain).unwrap()
    }

    fn one(c: &Arc<Chart>, coeffs: &[&str]) -> DifferentialForm {
        let e: Vec<Expr> = coeffs.iter().map(|s| c.parse(s).unwrap()).collect();
        DifferentialForm::one_form(c, &e).unwrap()
    }

    fn flat(c: &Arc<Chart>, phi: &[&[&str]]) -> Puzzle {
        let comps: Vec<DifferentialForm> = phi.iter().map(|r| one(c, r)).collect();
        let n = comps.len();
        Puzzle::new(
            ConnectionForms::zero(c, n),
            BundleValuedForm::new(c, 1, comps).unwrap(),
            Some(FiberMetric::identity(c, n)),
        )
        .unwrap()
    }

    fn square() -> Arc<Chart> {
        chart(vec!["x", "y"], vec![(-1.0, 1.0), (-1.0, 1.0)])
    }

    #[test]
    fn integrability_examples() {
        let c = square();
        let pts = c.seeded_samples(20, 1);
        assert_eq!(
            integrability_defect(&flat(&c, &[&["1", "0"], &["0", "1"]]), &pts).unwrap(),
            0.0
        );
        let bad = flat(&c, &[&["0", "x"]]);
        let r = integrability_residual(&bad).unwrap();
        assert_eq!(r.component(0).coefficient(&[0, 1]).as_const(), Some(1.0));
    }

    #[test]
    fn rank_profiles() {
        let c = square();
        let pts = c.seeded_samples(10, 2);
        let iso = rank_profile(&flat(&c, &[&["1", "0"], &["0", "1"]]), &pts).unwrap();
        assert_eq!(iso.class, RankClass::Isomorphism);
        assert_eq!(iso.kernel_dim(), Some(0));
        let r1 = rank_profile(&flat(&c, &[&["1", "0"], &["0", "0"]]), &pts).unwrap();
        assert_eq!(r1.class, RankClass::ConstantRank { rank: 1 });
        let var = rank_profile(
            &flat(&c, &[&["x", "0"], &["0", "1"]]),
            &[vec![0.0, 0.0], vec![0.5, 0.0]],
        )
        .unwrap();
        assert_eq!(var.class, RankClass::Variable);

        let c3 = chart(vec!["x", "y", "z"], vec![(-3.0, 3.0); 3]);
        let proj = flat(&c3, &[&["1", "0", "0"], &["0", "1", "0"]]);
        let prof = rank_profile(&proj, &c3.seeded_samples(10, 3)).unwrap();
        assert_eq!(prof.class, RankClass::Surjective);
        assert_eq!(prof.kernel_dim(), Some(1));
        let k = kernel_distribution(&proj, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(k.len(), 1);
        assert!((k[0][2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn induced_metric_examples() {
        let c = square();
        let g = induced_metric(&flat(&c, &[&["2", "0"], &["0", "1"]]))
            .unwrap()
            .eval(&[0.0, 0.0])
            .unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn curve_pullback() {
        let c = square();
        let line = chart(vec!["t"], vec![(-1.0, 1.0)]);
        let u = ChartMap::parse(&line, &c, &["t", "t^2"]).unwrap();
        let q = pullback_puzzle(&flat(&c, &[&["1", "0"], &["0", "1"]]), &u).unwrap();
        assert_eq!(
            q.solder().component(0).coefficient(&[0]).as_const(),
            Some(1.0)
        );
        assert!(
            (q.solder()
                .component(1)
                .coefficient(&[0])
                .eval(&[0.7])
                .unwrap()
                - 1.4)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn decomposable_two_form_kernel() {
        let c = chart(vec!["x", "y", "z", "w"], vec![(-1.0, 1.0); 4]);
        let phi = DifferentialForm::from_terms(&c, 2, vec![(vec![0, 1], Expr::one())]).unwrap();
        let p = Puzzle::new(
            ConnectionForms::zero(&c, 1),
            BundleValuedForm::new(&c, 2, vec![phi]).unwrap(),
            None,
        )
        .unwrap();
        let k = kernel_distribution(&p, &[0.0; 4]).unwrap();
        assert_eq!(k.len(), 2);
        for v in &k {
            assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        let f = frobenius_residual(
            &p,
            &VectorField::coordinate(&c, 2),
            &VectorField::coordinate(&c, 3),
            &c.seeded_samples(5, 1),
        )
        .unwrap();
        assert_eq!(f.bracket, 0.0);
        assert_eq!(f.kernel_violation, 0.0);
    }

    #[test]
    fn contact_bracket_leaves_the_kernel() {
        let c = chart(vec!["x", "y", "z"], vec![(-1.0, 1.0); 3]);
        let p = flat(&c, &[&["-y", "0", "1"]]);
        let x = VectorField::parse(&c, &["1", "0", "y"]).unwrap();
        let y = VectorField::parse(&c, &["0", "1", "0"]).unwrap();
        let f = frobenius_residual(&p, &x, &y, &c.seeded_samples(10, 4)).unwrap();
        assert_eq!(f.kernel_violation, 0.0);
        assert!((f.bracket - 1.0).abs() < 1e-15);
    }

    fn coframe(c: &Arc<Chart>, rows: &[&[&str]]) -> BundleValuedForm {
        BundleValuedForm::new(c, 1, rows.iter().map(|r| one(c, r)).collect()).unwrap()
    }

    /// `ω^i_j(∂_c) = E^i_a (∂_c F^a_j + Γ^a_{cb} F^b_j)` from the Christoffel pipeline.
    fn christoffel_spin_connection(theta: &BundleValuedForm, x: &[f64]) -> DMatrix<f64> {
        let c = theta.chart();
        let n = c.dim();
        let e = theta.one_form_exprs().unwrap();
        let f = e.inverse();
        let geo = MetricField::new(c, e.congruence(&ExprMatrix::identity(n)))
            .unwrap()
            .at(x)
            .unwrap();
        let ev = e.eval(x).unwrap();
        let fv = f.eval(x).unwrap();
        let mut out = DMatrix::zeros(n * n, n);
        for cc in 0..n {
            let df = f.diff(cc).eval(x).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        let mut inner = df[(a, j)];
                        for b in 0..n {
                            inner += geo.christoffel(a, cc, b) * fv[(b, j)];
                        }
                        s += ev[(i, a)] * inner;
                    }
                    out[(i * n + j, cc)] = s;
                }
            }
        }
        out
    }

    fn check_against_oracle(theta: &BundleValuedForm) -> ConnectionForms {
        let c = theta.chart().clone();
        let w = torsion_free_connection(theta, &FiberMetric::identity(&c, c.dim())).unwrap();
        let n = c.dim();
        for x in c.seeded_samples(20, 9) {
            let oracle = christoffel_spin_connection(theta, &x);
            for i in 0..n {
                for j in 0..n {
                    for a in 0..n {
                        let got = w.get(i, j).coefficient(&[a]).eval(&x).unwrap();
                        assert!(
                            (got - oracle[(i * n + j, a)]).abs() < 1e-10,
                            "{i}{j}{a} at {x:?}"
                        );
                    }
                }
            }
            let residual = covariant_exterior_derivative(&w, theta).unwrap();
            assert!(residual.max_abs_coefficient(&x).unwrap() < 1e-12);
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(w.get(i, j), &w.get(j, i).neg());
            }
        }
        w
    }

    #[test]
    fn torsion_free_examples() {
        let c = square();
        let w = check_against_oracle(&coframe(&c, &[&["1", "0"], &["0", "1"]]));
        assert!(w.forms().entries().iter().all(DifferentialForm::is_zero));

        let polar = chart(vec!["r", "p"], vec![(0.5, 2.0), (-1.0, 1.0)]);
        let w = check_against_oracle(&coframe(&polar, &[&["1", "0"], &["0", "r"]]));
        assert!((w.get(0, 1).coefficient(&[1]).eval(&[1.3, 0.0]).unwrap() + 1.0).abs() < 1e-15);

        let sphere = chart(vec!["t", "p"], vec![(0.5, 2.5), (-1.0, 1.0)]);
        let w = check_against_oracle(&coframe(&sphere, &[&["1", "0"], &["0", "sin(t)"]]));
        assert!(
            (w.get(0, 1).coefficient(&[1]).eval(&[1.1, 0.0]).unwrap() + 1.1f64.cos()).abs() < 1e-15
        );

        let skew = chart(vec!["x", "y", "z"], vec![(0.5, 1.5); 3]);
        check_against_oracle(&coframe(
            &skew,
            &[
                &["1", "x*y", "0"],
                &["0", "exp(x)", "z"],
                &["y", "0", "1+x^2"],
            ],
        ));
    }

    #[test]
    fn torsion_free_rejects_bad_input() {
        let c = square();
        let theta = coframe(&c, &[&["x", "y"], &["2*x", "2*y"]]);
        assert!(matches!(
            torsion_free_connection(&theta, &FiberMetric::identity(&c, 2)),
            Err(Error::Singular { .. })
        ));
        let g = FiberMetric::new(
            &c,
            ExprMatrix::from_rows(vec![
                vec![Expr::constant(2.0), Expr::zero()],
                vec![Expr::zero(), Expr::one()],
            ]),
        )
        .unwrap();
        assert!(torsion_free_connection(&coframe(&c, &[&["1", "0"], &["0", "1"]]), &g).is_err());
    }
}
