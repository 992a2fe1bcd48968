//! Scalar exterior algebra on a single coordinate chart.
//!
//! A [`DifferentialForm`] of degree `p` stores its coefficients sparsely,
//! keyed by strictly increasing multi-indices of 0-based coordinate
//! indices. Missing keys are zero coefficients.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::symbolic::ExprMatrix;

/// Coordinate chart: ordered coordinate names and a closed domain box.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    names: Vec<String>,
    domain: Vec<(f64, f64)>,
}

impl Chart {
    pub fn new<S: Into<String>>(names: Vec<S>, domain: Vec<(f64, f64)>) -> Result<Arc<Chart>> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidChart("dimension must be positive".into()));
        }
        if names.len() != domain.len() {
            return Err(Error::InvalidChart(format!(
                "{} coordinates but {} domain intervals",
                names.len(),
                domain.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidChart(format!("duplicate coordinate `{n}`")));
            }
        }
        for (n, &(lo, hi)) in names.iter().zip(&domain) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidChart(format!(
                    "degenerate interval for `{n}`"
                )));
            }
        }
        Ok(Arc::new(Chart { names, domain }))
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn parse(&self, text: &str) -> Result<Expr> {
        Ok(parse_expr(text, &self.names)?)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.domain)
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Validate a point given as coordinate values in chart order.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.dim() {
            return Err(Error::ChartMismatch(format!(
                "point has {} coordinates, chart has {}",
                coords.len(),
                self.dim()
            )));
        }
        if !self.contains(coords) {
            return Err(Error::OutOfDomain {
                point: coords.to_vec(),
            });
        }
        Ok(Point {
            coords: coords.to_vec(),
        })
    }

    /// Validate a point given as a name → value map.
    pub fn point_named(&self, values: &[(&str, f64)]) -> Result<Point> {
        let mut coords = vec![f64::NAN; self.dim()];
        for &(name, v) in values {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::ChartMismatch(format!("unknown coordinate `{name}`")))?;
            coords[i] = v;
        }
        if let Some(i) = coords.iter().position(|v| v.is_nan()) {
            return Err(Error::ChartMismatch(format!(
                "coordinate `{}` not assigned",
                self.names[i]
            )));
        }
        self.point(&coords)
    }

    /// Uniform samples in the domain box.
    pub fn sample_points(&self, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.domain
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                    .collect()
            })
            .collect()
    }

    /// Deterministic samples from a seed.
    pub fn seeded_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_points(count, &mut rng)
    }

    pub fn same_as(&self, other: &Chart) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// A point of a chart, coordinates in chart order.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

pub(crate) fn check_chart(a: &Chart, b: &Chart, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::ChartMismatch(format!(
            "{what}: [{}] vs [{}]",
            a.names().join(","),
            b.names().join(",")
        )))
    }
}

/// Sign of the permutation that sorts the concatenation of two disjoint
/// increasing sequences.
fn shuffle_sign(a: &[usize], b: &[usize]) -> f64 {
    let inversions: usize = a
        .iter()
        .map(|&i| b.iter().filter(|&&j| j < i).count())
        .sum();
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn merge(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a.iter().any(|i| b.contains(i)) {
        return None;
    }
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    Some(out)
}

/// All strictly increasing multi-indices of length `p` from `0..m`.
pub fn multi_indices(m: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if p <= m {
        rec(0, m, p, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    chart: Arc<Chart>,
    degree: usize,
    terms: BTreeMap<Vec<usize>, Expr>,
}

impl DifferentialForm {
    pub fn zero(chart: &Arc<Chart>, degree: usize) -> Self {
        DifferentialForm {
            chart: chart.clone(),
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(chart: &Arc<Chart>, f: Expr) -> Self {
        let mut form = DifferentialForm::zero(chart, 0);
        form.insert(Vec::new(), f);
        form
    }

    /// `dx^i`.
    pub fn coordinate(chart: &Arc<Chart>, i: usize) -> Self {
        let mut form = DifferentialForm::zero(chart, 1);
        form.insert(vec![i], Expr::one());
        form
    }

    /// One-form `Σ c_a dx^a`.
    pub fn one_form(chart: &Arc<Chart>, coeffs: &[Expr]) -> Result<Self> {
        if coeffs.len() != chart.dim() {
            return Err(Error::DegreeMismatch(format!(
                "one-form needs {} coefficients, got {}",
                chart.dim(),
                coeffs.len()
            )));
        }
        let mut form = DifferentialForm::zero(chart, 1);
        for (a, c) in coeffs.iter().enumerate() {
            form.insert(vec![a], c.clone());
        }
        Ok(form)
    }

    /// Build from `(multi-index, coefficient)` pairs. Indices must be
    /// strictly increasing and in range.
    pub fn from_terms(
        chart: &Arc<Chart>,
        degree: usize,
        terms: impl IntoIterator<Item = (Vec<usize>, Expr)>,
    ) -> Result<Self> {
        let mut form = DifferentialForm::zero(chart, degree);
        for (idx, c) in terms {
            if idx.len() != degree {
                return Err(Error::DegreeMismatch(format!(
                    "multi-index {idx:?} has length {} for a degree-{degree} form",
                    idx.len()
                )));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidIndex(format!(
                    "multi-index {idx:?} is not strictly increasing"
                )));
            }
            if idx.iter().any(|&i| i >= chart.dim()) {
                return Err(Error::InvalidIndex(format!(
                    "multi-index {idx:?} out of range for dimension {}",
                    chart.dim()
                )));
            }
            let prev = form.coefficient(&idx);
            form.insert(idx, Expr::add(&prev, &c));
        }
        Ok(form)
    }

    fn insert(&mut self, idx: Vec<usize>, c: Expr) {
        if c.is_zero() {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, c);
        }
    }

    fn accumulate(&mut self, idx: Vec<usize>, c: Expr) {
        let next = match self.terms.get(&idx) {
            Some(prev) => Expr::add(prev, &c),
            None => c,
        };
        self.insert(idx, next);
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &Expr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, idx: &[usize]) -> Expr {
        self.terms.get(idx).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &DifferentialForm) -> Result<Self> {
        check_chart(&self.chart, &other.chart, "add")?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(format!(
                "add {} + {}",
                self.degree, other.degree
            )));
        }
        let mut out = self.clone();
        for (idx, c) in &other.terms {
            out.accumulate(idx.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DifferentialForm) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coefficients(Expr::neg)
    }

    /// Multiply by a function.
    pub fn scale(&self, f: &Expr) -> Self {
        self.map_coefficients(|c| Expr::mul(f, c))
    }

    pub fn map_coefficients(&self, mut f: impl FnMut(&Expr) -> Expr) -> Self {
        let mut out = DifferentialForm::zero(&self.chart, self.degree);
        for (idx, c) in &self.terms {
            out.insert(idx.clone(), f(c));
        }
        out
    }

    pub fn wedge(&self, other: &DifferentialForm) -> Result<Self> {
        check_chart(&self.chart, &other.chart, "wedge")?;
        let degree = self.degree + other.degree;
        let mut out = DifferentialForm::zero(&self.chart, degree);
        if degree > self.chart.dim() {
            return Ok(out);
        }
        // Contributions are grouped by their unordered pair of factor indices
        // and groups are summed in key order, so a∧b and ±b∧a agree bit for bit.
        type Groups<'a> = BTreeMap<(&'a Vec<usize>, &'a Vec<usize>), Vec<Expr>>;
        let mut parts: BTreeMap<Vec<usize>, Groups> = BTreeMap::new();
        for (i, a) in &self.terms {
            for (j, b) in &other.terms {
                if let Some(k) = merge(i, j) {
                    let (key, prod) = if i <= j {
                        ((i, j), Expr::mul(a, b))
                    } else {
                        ((j, i), Expr::mul(b, a))
                    };
                    parts
                        .entry(k)
                        .or_default()
                        .entry(key)
                        .or_default()
                        .push(prod.scale(shuffle_sign(i, j)));
                }
            }
        }
        for (k, groups) in parts {
            let sum = groups
                .into_values()
                .map(|g| {
                    g.into_iter()
                        .reduce(|x, y| Expr::add(&x, &y))
                        .expect("groups are nonempty")
                })
                .reduce(|acc, e| Expr::add(&acc, &e))
                .unwrap_or_else(Expr::zero);
            out.insert(k, sum);
        }
        Ok(out)
    }

    pub fn exterior_derivative(&self) -> Self {
        let mut out = DifferentialForm::zero(&self.chart, self.degree + 1);
        for (idx, c) in &self.terms {
            for v in 0..self.chart.dim() {
                if idx.contains(&v) {
                    continue;
                }
                let dc = c.diff(v);
                if dc.is_zero() {
                    continue;
                }
                let before = idx.iter().filter(|&&i| i < v).count();
                let mut k = idx.clone();
                k.insert(before, v);
                let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                out.accumulate(k, dc.scale(sign));
            }
        }
        out
    }

    pub fn interior_product(&self, x: &VectorField) -> Result<Self> {
        check_chart(&self.chart, &x.chart, "interior product")?;
        if self.degree == 0 {
            return Err(Error::DegreeMismatch("interior product of a 0-form".into()));
        }
        let mut out = DifferentialForm::zero(&self.chart, self.degree - 1);
        for (idx, c) in &self.terms {
            for (pos, &a) in idx.iter().enumerate() {
                let xa = &x.components[a];
                if xa.is_zero() {
                    continue;
                }
                let mut rest = idx.clone();
                rest.remove(pos);
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                out.accumulate(rest, Expr::mul(xa, c).scale(sign));
            }
        }
        Ok(out)
    }

    /// Coefficient values at a point, in multi-index order.
    pub fn eval_coefficients(&self, x: &[f64]) -> Result<BTreeMap<Vec<usize>, f64>> {
        self.terms
            .iter()
            .map(|(idx, c)| Ok((idx.clone(), c.eval(x)?)))
            .collect()
    }

    pub fn max_abs_coefficient(&self, x: &[f64]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for c in self.terms.values() {
            m = m.max(c.eval(x)?.abs());
        }
        Ok(m)
    }

    /// Value on `vectors` (one per degree) at the point `x`.
    pub fn evaluate(&self, x: &[f64], vectors: &[Vec<f64>]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::DegreeMismatch(format!(
                "degree-{} form evaluated on {} vectors",
                self.degree,
                vectors.len()
            )));
        }
        let m = self.chart.dim();
        if vectors.iter().any(|v| v.len() != m) {
            return Err(Error::DegreeMismatch(format!(
                "tangent vectors must have {m} components"
            )));
        }
        let mut total = 0.0;
        for (idx, c) in &self.terms {
            let minor = DMatrix::from_fn(self.degree, self.degree, |r, s| vectors[r][idx[s]]);
            let det = if self.degree == 0 {
                1.0
            } else {
                minor.determinant()
            };
            if det != 0.0 {
                total += c.eval(x)? * det;
            }
        }
        Ok(total)
    }

    /// `u^* self`, a form on the source chart of `u`.
    pub fn pullback(&self, u: &ChartMap) -> Result<Self> {
        check_chart(&self.chart, &u.target, "pullback")?;
        let src = &u.source;
        if self.degree > src.dim() {
            return Ok(DifferentialForm::zero(src, self.degree));
        }
        let du: Vec<DifferentialForm> = u
            .components
            .iter()
            .map(|c| DifferentialForm::scalar(src, c.clone()).exterior_derivative())
            .collect();
        let mut out = DifferentialForm::zero(src, self.degree);
        for (idx, c) in &self.terms {
            let mut piece = DifferentialForm::scalar(src, c.substitute(&u.components));
            for &i in idx {
                piece = piece.wedge(&du[i])?;
            }
            out = out.add(&piece)?;
        }
        Ok(out)
    }

    /// Riemannian Hodge star with respect to the chart metric `g`
    /// (volume form `sqrt(det g) dx^1∧…∧dx^m`).
    pub fn hodge_star(&self, g: &ExprMatrix) -> Result<Self> {
        let m = self.chart.dim();
        if g.nrows() != m || g.ncols() != m {
            return Err(Error::DegreeMismatch(format!("metric must be {m}x{m}")));
        }
        for x in self.chart.seeded_samples(16, 0x5eed) {
            let gv = g.eval(&x)?;
            if gv.clone().cholesky().is_none() {
                return Err(Error::Singular {
                    what: "chart metric (not positive definite)".into(),
                    point: x,
                });
            }
        }
        let ginv = g.inverse();
        let vol = Expr::sqrt(&g.det());
        let p = self.degree;
        let mut out = DifferentialForm::zero(&self.chart, m - p.min(m));
        if p > m {
            return Ok(out);
        }
        for i in multi_indices(m, p) {
            let mut raised = Expr::zero();
            for (j, c) in &self.terms {
                let minor = if p == 0 {
                    Expr::one()
                } else {
                    ginv.submatrix(&i, j).det()
                };
                raised = Expr::add(&raised, &Expr::mul(&minor, c));
            }
            if raised.is_zero() {
                continue;
            }
            let comp: Vec<usize> = (0..m).filter(|a| !i.contains(a)).collect();
            let sign = shuffle_sign(&i, &comp);
            out.accumulate(comp, Expr::mul(&vol, &raised).scale(sign));
        }
        Ok(out)
    }

    pub fn display(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let names = self.chart.names();
        self.terms
            .iter()
            .map(|(idx, c)| {
                let basis: Vec<String> = idx.iter().map(|&i| format!("d{}", names[i])).collect();
                if basis.is_empty() {
                    c.to_text(names)
                } else {
                    format!("{} {}", c.to_text(names), basis.join("^"))
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    chart: Arc<Chart>,
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: &Arc<Chart>, components: Vec<Expr>) -> Result<Self> {
        if components.len() != chart.dim() {
            return Err(Error::DegreeMismatch(format!(
                "vector field needs {} components, got {}",
                chart.dim(),
                components.len()
            )));
        }
        Ok(VectorField {
            chart: chart.clone(),
            components,
        })
    }

    pub fn parse(chart: &Arc<Chart>, components: &[&str]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|c| chart.parse(c))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(chart, comps)
    }

    /// `∂/∂x^i`.
    pub fn coordinate(chart: &Arc<Chart>, i: usize) -> Self {
        let components = (0..chart.dim())
            .map(|a| if a == i { Expr::one() } else { Expr::zero() })
            .collect();
        VectorField {
            chart: chart.clone(),
            components,
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| Ok(c.eval(x)?)).collect()
    }

    /// `[X, Y]^a = X^b ∂_b Y^a − Y^b ∂_b X^a`, exact.
    pub fn lie_bracket(&self, other: &VectorField) -> Result<VectorField> {
        check_chart(&self.chart, &other.chart, "Lie bracket")?;
        let m = self.chart.dim();
        let components = (0..m)
            .map(|a| {
                let terms: Vec<Expr> = (0..m)
                    .map(|b| {
                        Expr::sub(
                            &Expr::mul(&self.components[b], &other.components[a].diff(b)),
                            &Expr::mul(&other.components[b], &self.components[a].diff(b)),
                        )
                    })
                    .collect();
                Expr::sum(&terms)
            })
            .collect();
        Ok(VectorField {
            chart: self.chart.clone(),
            components,
        })
    }
}

/// Smooth map between charts, components written in source coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartMap {
    source: Arc<Chart>,
    target: Arc<Chart>,
    components: Vec<Expr>,
}

impl ChartMap {
    pub fn new(source: &Arc<Chart>, target: &Arc<Chart>, components: Vec<Expr>) -> Result<Self> {
        if components.len() != target.dim() {
            return Err(Error::DegreeMismatch(format!(
                "map into a {}-dimensional chart needs {} components, got {}",
                target.dim(),
                target.dim(),
                components.len()
            )));
        }
        if let Some(v) = components.iter().filter_map(Expr::max_var).max() {
            if v >= source.dim() {
                return Err(Error::ChartMismatch(
                    "map component uses a non-source variable".into(),
                ));
            }
        }
        Ok(ChartMap {
            source: source.clone(),
            target: target.clone(),
            components,
        })
    }

    pub fn parse(source: &Arc<Chart>, target: &Arc<Chart>, components: &[&str]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|c| source.parse(c))
            .collect::<Result<Vec<_>>>()?;
        ChartMap::new(source, target, comps)
    }

    pub fn identity(chart: &Arc<Chart>) -> Self {
        ChartMap {
            source: chart.clone(),
            target: chart.clone(),
            components: (0..chart.dim()).map(Expr::var).collect(),
        }
    }

    pub fn source(&self) -> &Arc<Chart> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Chart> {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| Ok(c.eval(x)?)).collect()
    }

    /// Symbolic Jacobian `∂u^i/∂s^α` (target × source).
    pub fn jacobian(&self) -> ExprMatrix {
        ExprMatrix::from_fn(self.target.dim(), self.source.dim(), |i, a| {
            self.components[i].diff(a)
        })
    }

    /// Fraction of sampled source points whose image leaves the target box.
    pub fn escape_fraction(&self, samples: usize, seed: u64) -> Result<f64> {
        let pts = self.source.seeded_samples(samples, seed);
        let mut out = 0usize;
        for p in &pts {
            if !self.target.contains(&self.eval(p)?) {
                out += 1;
            }
        }
        Ok(out as f64 / samples.max(1) as f64)
    }
}
