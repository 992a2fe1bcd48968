//! Injective case: adapted frames, second fundamental form and normal
//! connection coefficients, the ambient metric on the normal bundle, and the
//! check that its Levi-Civita connection restricts to the puzzle data.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bundle::{covariant_exterior_derivative, BundleValuedForm, ConnectionForms};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{Chart, DifferentialForm};
use crate::puzzle::{rank_profile, Puzzle, RankClass};
use crate::symbolic::ExprMatrix;

#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    chart: Arc<Chart>,
    tangent_dim: usize,
    /// Columns are the new frame vectors written in the old frame.
    p: ExprMatrix,
    pinv: ExprMatrix,
    omega: ConnectionForms,
    metric: ExprMatrix,
    tangent_metric: ExprMatrix,
}

impl AdaptedFrame {
    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangent_dim
    }

    pub fn normal_dim(&self) -> usize {
        self.p.nrows() - self.tangent_dim
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.p
    }

    pub fn inverse(&self) -> &ExprMatrix {
        &self.pinv
    }

    /// `ω̃ = P⁻¹dP + P⁻¹ωP`.
    pub fn connection(&self) -> &ConnectionForms {
        &self.omega
    }

    /// `g̃ = Pᵀ g P`.
    pub fn metric(&self) -> &ExprMatrix {
        &self.metric
    }

    /// Tangential block of `g̃`, the induced metric.
    pub fn tangent_metric(&self) -> &ExprMatrix {
        &self.tangent_metric
    }

    /// `φ̃ = P⁻¹φ`.
    pub fn solder(&self, p: &Puzzle) -> Result<BundleValuedForm> {
        p.solder().change_frame(&self.pinv)
    }
}

fn dot(g: &ExprMatrix, u: &[Expr], v: &[Expr]) -> Expr {
    let n = u.len();
    let mut terms = Vec::new();
    for i in 0..n {
        if u[i].is_zero() {
            continue;
        }
        for j in 0..n {
            if !v[j].is_zero() && !g.get(i, j).is_zero() {
                terms.push(Expr::mul(&Expr::mul(&u[i], g.get(i, j)), &v[j]));
            }
        }
    }
    Expr::sum(&terms)
}

/// Standard basis vectors of the fiber completing the tangent columns at the
/// chart center, chosen greedily.
fn default_completion(p: &Puzzle) -> Result<Vec<Vec<Expr>>> {
    let n = p.rank();
    let mut basis = p.solder().one_form_matrix(&p.chart().center())?;
    let mut out = Vec::new();
    for k in 0..n {
        if basis.ncols() == n {
            break;
        }
        let mut trial = basis.clone().insert_column(basis.ncols(), 0.0);
        trial[(k, basis.ncols())] = 1.0;
        if crate::puzzle::numerical_rank(&trial) == trial.ncols() {
            basis = trial;
            out.push(
                (0..n)
                    .map(|i| if i == k { Expr::one() } else { Expr::zero() })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Frame `(φ_*∂_1, …, φ_*∂_m, e_{m+1}, …, e_n)` with the normals obtained by
/// Gram–Schmidt of `completion` against `g`.
pub fn adapted_frame(p: &Puzzle, completion: Option<&[Vec<Expr>]>) -> Result<AdaptedFrame> {
    let samples = p.chart().seeded_samples(30, 0xad);
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "adapted frames need a solder 1-form".into(),
        ));
    }
    let profile = rank_profile(p, &samples)?;
    if !matches!(profile.class, RankClass::Injective | RankClass::Isomorphism) {
        return Err(Error::Precondition(format!(
            "adapted frame needs an injective solder form, found {}",
            profile.class
        )));
    }
    let g = p
        .metric()
        .ok_or_else(|| Error::Precondition("adapted frame needs a fiber metric".into()))?
        .matrix()
        .clone();
    let n = p.rank();
    let m = p.chart().dim();
    let phi = p.solder().one_form_exprs()?;
    let tangents: Vec<Vec<Expr>> = (0..m)
        .map(|a| (0..n).map(|i| phi.get(i, a).clone()).collect())
        .collect();
    let completion = match completion {
        Some(c) => c.to_vec(),
        None => default_completion(p)?,
    };
    if completion.len() != n - m || completion.iter().any(|v| v.len() != n) {
        return Err(Error::RankMismatch {
            expected: n - m,
            found: completion.len(),
        });
    }
    let tangent_metric = phi.congruence(&g);
    let tinv = tangent_metric.inverse();
    let mut normals: Vec<Vec<Expr>> = Vec::with_capacity(n - m);
    for v in &completion {
        // Remove the tangential part: v − T (TᵀgT)⁻¹ Tᵀ g v.
        let tgv: Vec<Expr> = tangents.iter().map(|t| dot(&g, t, v)).collect();
        let coeff: Vec<Expr> = (0..m)
            .map(|a| {
                Expr::sum(
                    &(0..m)
                        .map(|b| Expr::mul(tinv.get(a, b), &tgv[b]))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let mut w: Vec<Expr> = (0..n)
            .map(|i| {
                let proj = Expr::sum(
                    &(0..m)
                        .map(|a| Expr::mul(&coeff[a], &tangents[a][i]))
                        .collect::<Vec<_>>(),
                );
                Expr::sub(&v[i], &proj)
            })
            .collect();
        for u in &normals {
            let c = dot(&g, u, &w);
            w = (0..n)
                .map(|i| Expr::sub(&w[i], &Expr::mul(&c, &u[i])))
                .collect();
        }
        for x in &samples {
            let norm2 = dot(&g, &w, &w).eval(x)?;
            if norm2 < 1e-16 {
                return Err(Error::Singular {
                    what: "frame completion".into(),
                    point: x.clone(),
                });
            }
        }
        let len = Expr::sqrt(&dot(&g, &w, &w));
        normals.push(w.iter().map(|e| Expr::div(e, &len)).collect());
    }
    let mut cols = tangents.clone();
    cols.extend(normals.iter().cloned());
    let pm = ExprMatrix::from_fn(n, n, |i, j| cols[j][i].clone());
    // P⁻¹ = [ (TᵀgT)⁻¹ Tᵀ g ; Nᵀ g ] since the normals are g-orthonormal and g-orthogonal to T.
    let pinv = ExprMatrix::from_fn(n, n, |r, i| {
        if r < m {
            let terms: Vec<Expr> = (0..m)
                .flat_map(|b| {
                    let tinv = &tinv;
                    let tangents = &tangents;
                    let g = &g;
                    (0..n).map(move |k| {
                        Expr::mul(&Expr::mul(tinv.get(r, b), &tangents[b][k]), g.get(k, i))
                    })
                })
                .filter(|e| !e.is_zero())
                .collect();
            Expr::sum(&terms)
        } else {
            let u = &normals[r - m];
            Expr::sum(
                &(0..n)
                    .map(|k| Expr::mul(&u[k], g.get(k, i)))
                    .filter(|e| !e.is_zero())
                    .collect::<Vec<_>>(),
            )
        }
    });
    let omega = p.connection().gauge_transform_with_inverse(&pm, &pinv)?;
    let metric = pm.congruence(&g);
    Ok(AdaptedFrame {
        chart: p.chart().clone(),
        tangent_dim: m,
        p: pm,
        pinv,
        omega,
        metric,
        tangent_metric,
    })
}

/// `h_{μab}` at one point, with its measured asymmetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HTable {
    pub normals: usize,
    pub dim: usize,
    values: Vec<f64>,
    pub asymmetry: f64,
}

impl HTable {
    /// `μ` is the 0-based normal index.
    pub fn get(&self, mu: usize, a: usize, b: usize) -> f64 {
        self.values[(mu * self.dim + a) * self.dim + b]
    }
}

/// `A^μ_{aν}` at one point, with its measured failure of antisymmetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ATable {
    pub normals: usize,
    pub dim: usize,
    values: Vec<f64>,
    pub symmetric_part: f64,
}

impl ATable {
    pub fn get(&self, mu: usize, a: usize, nu: usize) -> f64 {
        self.values[(mu * self.dim + a) * self.normals + nu]
    }
}

/// Solve `w = Σ_b c_b φ̃^b` for `c` given the `dx` coefficients `w`.
fn tangential_solve(
    frame: &AdaptedFrame,
    p: &Puzzle,
    x: &[f64],
) -> Result<impl Fn(&DifferentialForm) -> Result<Vec<f64>>> {
    let m = frame.tangent_dim;
    let phit = frame.solder(p)?.one_form_matrix(x)?;
    let block = phit.view((0, 0), (m, m)).into_owned();
    let inv = block.try_inverse().ok_or_else(|| Error::Singular {
        what: "tangential coframe".into(),
        point: x.to_vec(),
    })?;
    let x = x.to_vec();
    Ok(move |form: &DifferentialForm| -> Result<Vec<f64>> {
        let mut w = DMatrix::zeros(1, m);
        for (idx, c) in form.terms() {
            w[(0, idx[0])] = c.eval(&x)?;
        }
        Ok((w * &inv).iter().cloned().collect())
    })
}

/// `ω̃^μ_a = h_{μab} φ̃^b` solved at `x`.
pub fn extract_h(frame: &AdaptedFrame, p: &Puzzle, x: &[f64]) -> Result<HTable> {
    let m = frame.tangent_dim;
    let k = frame.normal_dim();
    let solve = tangential_solve(frame, p, x)?;
    let mut values = vec![0.0; k * m * m];
    for mu in 0..k {
        for a in 0..m {
            let row = solve(frame.omega.get(m + mu, a))?;
            values[(mu * m + a) * m..(mu * m + a + 1) * m].copy_from_slice(&row);
        }
    }
    let mut asym: f64 = 0.0;
    for mu in 0..k {
        for a in 0..m {
            for b in 0..m {
                asym =
                    asym.max((values[(mu * m + a) * m + b] - values[(mu * m + b) * m + a]).abs());
            }
        }
    }
    Ok(HTable {
        normals: k,
        dim: m,
        values,
        asymmetry: asym,
    })
}

/// `ω̃^μ_ν = A^μ_{aν} φ̃^a` solved at `x`.
pub fn extract_a(frame: &AdaptedFrame, p: &Puzzle, x: &[f64]) -> Result<ATable> {
    let m = frame.tangent_dim;
    let k = frame.normal_dim();
    let solve = tangential_solve(frame, p, x)?;
    let mut values = vec![0.0; k * m * k];
    for mu in 0..k {
        for nu in 0..k {
            let row = solve(frame.omega.get(m + mu, m + nu))?;
            for a in 0..m {
                values[(mu * m + a) * k + nu] = row[a];
            }
        }
    }
    let mut sym: f64 = 0.0;
    for mu in 0..k {
        for nu in 0..k {
            for a in 0..m {
                sym =
                    sym.max((values[(mu * m + a) * k + nu] + values[(nu * m + a) * k + mu]).abs());
            }
        }
    }
    Ok(ATable {
        normals: k,
        dim: m,
        values,
        symmetric_part: sym,
    })
}

/// Max of the tangential and normal blocks of `d^{ω̃}φ̃` over `points`.
pub fn split_residual(frame: &AdaptedFrame, p: &Puzzle, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    let r = covariant_exterior_derivative(&frame.omega, &frame.solder(p)?)?;
    let m = frame.tangent_dim;
    let (mut tan, mut nor): (f64, f64) = (0.0, 0.0);
    for x in points {
        for (i, c) in r.components().iter().enumerate() {
            let v = c.max_abs_coefficient(x)?;
            if i < m {
                tan = tan.max(v);
            } else {
                nor = nor.max(v);
            }
        }
    }
    Ok((tan, nor))
}

/// Caller-chosen `S^b_{μν}`, symmetric in `μ, ν`.
#[derive(Debug, Clone)]
pub struct NormalShift {
    dim: usize,
    normals: usize,
    values: Vec<Expr>,
}

impl NormalShift {
    pub fn zero(dim: usize, normals: usize) -> Self {
        NormalShift {
            dim,
            normals,
            values: vec![Expr::zero(); dim * normals * normals],
        }
    }

    /// `f(b, μ, ν)` must be symmetric in `μ, ν`.
    pub fn from_fn(
        dim: usize,
        normals: usize,
        mut f: impl FnMut(usize, usize, usize) -> Expr,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dim * normals * normals);
        for b in 0..dim {
            for mu in 0..normals {
                for nu in 0..normals {
                    values.push(f(b, mu, nu));
                }
            }
        }
        let s = NormalShift {
            dim,
            normals,
            values,
        };
        for b in 0..dim {
            for mu in 0..normals {
                for nu in 0..mu {
                    if s.get(b, mu, nu) != s.get(b, nu, mu) {
                        return Err(Error::Precondition(
                            "S must be symmetric in its normal indices".into(),
                        ));
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn get(&self, b: usize, mu: usize, nu: usize) -> &Expr {
        &self.values[(b * self.normals + mu) * self.normals + nu]
    }
}

#[derive(Debug, Clone)]
pub struct AmbientMetric {
    chart: Arc<Chart>,
    tangent_dim: usize,
    g: ExprMatrix,
    /// `G` is positive definite for `max |t^μ| ≤ radius` at all probes.
    pub radius: f64,
}

impl AmbientMetric {
    /// Product chart `(x, t)`.
    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.g
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangent_dim
    }
}

fn normal_names(base: &[String], k: usize) -> Vec<String> {
    (1..=k)
        .map(|mu| {
            let mut name = format!("t{mu}");
            while base.contains(&name) {
                name.insert(0, '_');
            }
            name
        })
        .collect()
}

/// `G_ab = g_ab − 2t^μ h_{μab}`, `G_μν = δ_μν`, `G_aμ = t^ν(A^μ_{aν} + g_ab S^b_{μν})`.
pub fn build_ambient_metric(
    frame: &AdaptedFrame,
    shift: Option<&NormalShift>,
) -> Result<AmbientMetric> {
    let m = frame.tangent_dim;
    let k = frame.normal_dim();
    let n = m + k;
    let zero_shift = NormalShift::zero(m, k);
    let s = shift.unwrap_or(&zero_shift);
    if s.dim != m || s.normals != k {
        return Err(Error::RankMismatch {
            expected: m * k * k,
            found: s.values.len(),
        });
    }
    let w = &frame.omega;
    let coeff = |i: usize, j: usize, a: usize| w.get(i, j).coefficient(&[a]);
    let h = |mu: usize, a: usize, b: usize| {
        Expr::add(&coeff(m + mu, a, b), &coeff(m + mu, b, a)).scale(0.5)
    };
    let a_coef = |mu: usize, a: usize, nu: usize| coeff(m + mu, m + nu, a);
    let t = |mu: usize| Expr::var(m + mu);
    let gt = &frame.tangent_metric;
    let mut g = ExprMatrix::zeros(n, n);
    for a in 0..m {
        for b in a..m {
            let mut e = gt.get(a, b).clone();
            for mu in 0..k {
                e = Expr::sub(&e, &Expr::mul(&t(mu), &h(mu, a, b)).scale(2.0));
            }
            g.set(a, b, e.clone());
            g.set(b, a, e);
        }
    }
    for mu in 0..k {
        g.set(m + mu, m + mu, Expr::one());
    }
    for a in 0..m {
        for mu in 0..k {
            let mut e = Expr::zero();
            for nu in 0..k {
                let mut inner = a_coef(mu, a, nu);
                for b in 0..m {
                    inner = Expr::add(&inner, &Expr::mul(gt.get(a, b), s.get(b, mu, nu)));
                }
                e = Expr::add(&e, &Expr::mul(&t(nu), &inner));
            }
            g.set(a, m + mu, e.clone());
            g.set(m + mu, a, e);
        }
    }
    let base = frame.chart.as_ref();
    let mut names: Vec<String> = base.names().to_vec();
    names.extend(normal_names(base.names(), k));
    let probes = base.seeded_samples(20, 0xa1);
    let mut radius = 0.0;
    let mut r = 1.0;
    'outer: for _ in 0..20 {
        for x in &probes {
            for corner in 0..(1usize << k).max(1) {
                let mut pt = x.clone();
                pt.extend((0..k).map(|mu| if corner >> mu & 1 == 1 { r } else { -r }));
                let ok = g
                    .eval(&pt)
                    .map(|gm| gm.cholesky().is_some())
                    .unwrap_or(false);
                if !ok {
                    r *= 0.5;
                    continue 'outer;
                }
            }
        }
        radius = r;
        break;
    }
    let mut domain = base.domain().to_vec();
    domain.extend(std::iter::repeat_n(
        (-radius.max(1e-6), radius.max(1e-6)),
        k,
    ));
    let chart = Chart::new(names, domain)?;
    Ok(AmbientMetric {
        chart,
        tangent_dim: m,
        g,
        radius,
    })
}

/// Coordinate-frame Levi-Civita forms `ϖ^i_j = Γ^i_{kj} dx^k`.
pub fn levi_civita_forms(metric: &AmbientMetric) -> Result<ConnectionForms> {
    christoffel_forms(&metric.chart, &metric.g)
}

/// Levi-Civita forms of any chart metric, exact.
pub fn christoffel_forms(chart: &Arc<Chart>, g: &ExprMatrix) -> Result<ConnectionForms> {
    let n = chart.dim();
    if g.nrows() != n {
        return Err(Error::RankMismatch {
            expected: n,
            found: g.nrows(),
        });
    }
    let ginv = g.inverse();
    let dg: Vec<ExprMatrix> = (0..n).map(|a| g.diff(a)).collect();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let coeffs: Vec<Expr> = (0..n)
                .map(|kk| {
                    let terms: Vec<Expr> = (0..n)
                        .filter(|&l| !ginv.get(i, l).is_zero())
                        .map(|l| {
                            let first = Expr::sub(
                                &Expr::add(dg[kk].get(l, j), dg[j].get(l, kk)),
                                dg[l].get(kk, j),
                            );
                            Expr::mul(ginv.get(i, l), &first)
                        })
                        .collect();
                    Expr::sum(&terms).scale(0.5)
                })
                .collect();
            entries.push(DifferentialForm::one_form(chart, &coeffs)?);
        }
    }
    ConnectionForms::new(chart, n, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingResiduals {
    /// `max |ϖ(∂x^a) − ω̃(∂x^a)|` at `t = 0`.
    pub tangential: f64,
    /// Max error of the `dt` coefficients of `ϖ` at `t = 0` against the four blocks.
    pub first_order: f64,
}

pub fn verify_embedding(
    p: &Puzzle,
    frame: &AdaptedFrame,
    metric: &AmbientMetric,
    varpi: &ConnectionForms,
    shift: Option<&NormalShift>,
    points: &[Vec<f64>],
) -> Result<EmbeddingResiduals> {
    let m = frame.tangent_dim;
    let k = frame.normal_dim();
    let n = m + k;
    let zero_shift = NormalShift::zero(m, k);
    let s = shift.unwrap_or(&zero_shift);
    if metric.chart().dim() != n || varpi.rank() != n {
        return Err(Error::RankMismatch {
            expected: n,
            found: varpi.rank(),
        });
    }
    let mut out = EmbeddingResiduals {
        tangential: 0.0,
        first_order: 0.0,
    };
    for x in points {
        let mut pt = x.clone();
        pt.extend(std::iter::repeat_n(0.0, k));
        for a in 0..m {
            let mut e = vec![0.0; n];
            e[a] = 1.0;
            let lhs = varpi.eval_on(&pt, &e)?;
            let mut ex = vec![0.0; m];
            ex[a] = 1.0;
            let rhs = frame.omega.eval_on(x, &ex)?;
            out.tangential = out.tangential.max((lhs - rhs).amax());
        }
        let h = extract_h(frame, p, x)?;
        let at = extract_a(frame, p, x)?;
        let gt = frame.tangent_metric.eval(x)?;
        let gtinv = gt.try_inverse().ok_or_else(|| Error::Singular {
            what: "induced metric".into(),
            point: x.clone(),
        })?;
        for mu in 0..k {
            let mut e = vec![0.0; n];
            e[m + mu] = 1.0;
            let got = varpi.eval_on(&pt, &e)?;
            let mut expect = DMatrix::zeros(n, n);
            for a in 0..m {
                for b in 0..m {
                    expect[(a, b)] = -(0..m)
                        .map(|c| gtinv[(a, c)] * 0.5 * (h.get(mu, b, c) + h.get(mu, c, b)))
                        .sum::<f64>();
                }
                for nu in 0..k {
                    expect[(a, m + nu)] = s.get(a, nu, mu).eval(x)?;
                    expect[(m + nu, a)] = at.get(nu, a, mu);
                }
            }
            out.first_order = out.first_order.max((got - expect).amax());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::FiberMetric;
    use crate::riemann::MetricField;

    fn sphere_graph() -> Puzzle {
        let c = Chart::new(vec!["x1", "x2"], vec![(-0.6, 0.6), (-0.6, 0.6)]).unwrap();
        let comps = vec![
            DifferentialForm::coordinate(&c, 0),
            DifferentialForm::coordinate(&c, 1),
            DifferentialForm::one_form(
                &c,
                &[
                    c.parse("-x1/sqrt(1-x1^2-x2^2)").unwrap(),
                    c.parse("-x2/sqrt(1-x1^2-x2^2)").unwrap(),
                ],
            )
            .unwrap(),
        ];
        Puzzle::new(
            ConnectionForms::zero(&c, 3),
            BundleValuedForm::new(&c, 1, comps).unwrap(),
            Some(FiberMetric::identity(&c, 3)),
        )
        .unwrap()
    }

    #[test]
    fn sphere_frame_at_origin() {
        let p = sphere_graph();
        let f = adapted_frame(&p, None).unwrap();
        let pm = f.matrix().eval(&[0.0, 0.0]).unwrap();
        assert!((pm - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
        let h = extract_h(&f, &p, &[0.0, 0.0]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { -1.0 } else { 0.0 };
                assert!((h.get(0, a, b) - expect).abs() < 1e-12);
            }
        }
        let gtilde = FiberMetric::new(p.chart(), f.metric().clone()).unwrap();
        let compat = crate::bundle::metric_compatibility_residual(f.connection(), &gtilde).unwrap();
        for x in p.chart().seeded_samples(10, 1) {
            let gt = f.metric().eval(&x).unwrap();
            assert!((gt[(2, 2)] - 1.0).abs() < 1e-12);
            assert!(gt[(0, 2)].abs() < 1e-12 && gt[(1, 2)].abs() < 1e-12);
            assert!(extract_h(&f, &p, &x).unwrap().asymmetry < 1e-12);
            assert!(compat.max_abs_coefficient(&x).unwrap() < 1e-12);
        }
    }

    #[test]
    fn ambient_metric_and_levi_civita() {
        let p = sphere_graph();
        let f = adapted_frame(&p, None).unwrap();
        let g = build_ambient_metric(&f, None).unwrap();
        assert!(g.radius > 0.0);
        let at0 = g.matrix().eval(&[0.0, 0.0, 0.25]).unwrap();
        assert!(
            (at0[(0, 0)] - 1.5).abs() < 1e-12
                && (at0[(2, 2)] - 1.0).abs() < 1e-15
                && at0[(0, 2)].abs() < 1e-15
        );
        let varpi = levi_civita_forms(&g).unwrap();
        let field = MetricField::new(g.chart(), g.matrix().clone()).unwrap();
        for x in g.chart().seeded_samples(5, 2) {
            let geo = field.at(&x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for kk in 0..3 {
                        let got = varpi.get(i, j).coefficient(&[kk]).eval(&x).unwrap();
                        assert!((got - geo.christoffel(i, kk, j)).abs() < 1e-10);
                    }
                }
            }
        }
        let pts: Vec<Vec<f64>> = p.chart().seeded_samples(10, 3);
        let r = verify_embedding(&p, &f, &g, &varpi, None, &pts).unwrap();
        assert!(r.tangential < 1e-10 && r.first_order < 1e-10, "{r:?}");
    }

    #[test]
    fn non_injective_rejected() {
        let c = Chart::new(vec!["x", "y", "z"], vec![(-1.0, 1.0); 3]).unwrap();
        let p = Puzzle::new(
            ConnectionForms::zero(&c, 2),
            BundleValuedForm::new(
                &c,
                1,
                vec![
                    DifferentialForm::coordinate(&c, 0),
                    DifferentialForm::coordinate(&c, 1),
                ],
            )
            .unwrap(),
            Some(FiberMetric::identity(&c, 2)),
        )
        .unwrap();
        assert!(adapted_frame(&p, None).is_err());
    }
}
