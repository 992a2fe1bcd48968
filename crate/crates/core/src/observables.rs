//! Observables: dual sections `f` with `d(f, φ) = 0`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::embed::adapted_frame;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{Chart, DifferentialForm};
use crate::puzzle::{kernel_distribution, rank_profile, Puzzle, RankClass};
use crate::solderint::{build_quotient, SliceSpec};

/// Section of the dual bundle, components `f_i` in the dual frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSection {
    chart: Arc<Chart>,
    components: Vec<Expr>,
}

impl DualSection {
    pub fn new(chart: &Arc<Chart>, components: Vec<Expr>) -> Result<Self> {
        if let Some(v) = components.iter().filter_map(Expr::max_var).max() {
            if v >= chart.dim() {
                return Err(Error::ChartMismatch(
                    "dual section uses a variable outside the chart".into(),
                ));
            }
        }
        Ok(DualSection {
            chart: chart.clone(),
            components,
        })
    }

    pub fn parse(chart: &Arc<Chart>, components: &[&str]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|c| chart.parse(c))
            .collect::<Result<Vec<_>>>()?;
        DualSection::new(chart, comps)
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| Ok(c.eval(x)?)).collect()
    }
}

fn check_rank(p: &Puzzle, f: &DualSection) -> Result<()> {
    if f.rank() != p.rank() {
        return Err(Error::RankMismatch {
            expected: p.rank(),
            found: f.rank(),
        });
    }
    crate::forms::check_chart(p.chart(), &f.chart, "dual section")
}

/// The pairing `(f, φ) = f_i φ^i`.
pub fn pairing(p: &Puzzle, f: &DualSection) -> Result<DifferentialForm> {
    check_rank(p, f)?;
    let mut acc = DifferentialForm::zero(p.chart(), p.degree());
    for (fi, phi) in f.components.iter().zip(p.solder().components()) {
        acc = acc.add(&phi.scale(fi))?;
    }
    Ok(acc)
}

/// `d(f, φ)`.
pub fn observable_residual(p: &Puzzle, f: &DualSection) -> Result<DifferentialForm> {
    Ok(pairing(p, f)?.exterior_derivative())
}

/// `(df_i − f_j ω^j_i) ∧ φ^i`, which equals `d(f, φ)` when `d^∇φ = 0`.
pub fn cartan_form(p: &Puzzle, f: &DualSection) -> Result<DifferentialForm> {
    check_rank(p, f)?;
    let chart = p.chart();
    let n = p.rank();
    let mut acc = DifferentialForm::zero(chart, p.degree() + 1);
    for i in 0..n {
        let mut c = DifferentialForm::scalar(chart, f.components[i].clone()).exterior_derivative();
        for j in 0..n {
            c = c.sub(&p.connection().get(j, i).scale(&f.components[j]))?;
        }
        acc = acc.add(&c.wedge(p.solder().component(i))?)?;
    }
    Ok(acc)
}

fn require_isomorphism(p: &Puzzle) -> Result<()> {
    if p.degree() != 1 || p.rank() != p.chart().dim() {
        return Err(Error::Precondition(
            "needs a solder 1-form with n = m".into(),
        ));
    }
    Ok(())
}

/// The unique `f` with `dα = (f, φ)` for an invertible solder form.
pub fn reconstruct_observable(p: &Puzzle, alpha: &Expr) -> Result<DualSection> {
    require_isomorphism(p)?;
    let chart = p.chart();
    let phi = p.solder().one_form_exprs()?;
    let det = phi.det();
    for x in chart.seeded_samples(30, 0x0b) {
        if det.eval(&x)?.abs() < 1e-12 {
            return Err(Error::Singular {
                what: "solder form".into(),
                point: x,
            });
        }
    }
    // dα_a = f_i φ^i_a, so f_i = Σ_a ∂_aα (φ⁻¹)^a_i.
    let inv = phi.inverse();
    let m = chart.dim();
    let grad: Vec<Expr> = (0..m).map(|a| alpha.diff(a)).collect();
    let comps = (0..m)
        .map(|i| {
            let terms: Vec<Expr> = (0..m).map(|a| Expr::mul(&grad[a], inv.get(a, i))).collect();
            Expr::sum(&terms)
        })
        .collect();
    DualSection::new(chart, comps)
}

/// `h_{ik}` solving `df_i − f_j ω^j_i = h_{ik} φ^k` at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartanTable {
    pub h: Vec<Vec<f64>>,
    pub asymmetry: f64,
}

pub fn cartan_coefficients(p: &Puzzle, f: &DualSection, x: &[f64]) -> Result<CartanTable> {
    require_isomorphism(p)?;
    check_rank(p, f)?;
    let n = p.rank();
    let phi = p.solder().one_form_matrix(x)?;
    let inv = phi.try_inverse().ok_or_else(|| Error::Singular {
        what: "solder form".into(),
        point: x.to_vec(),
    })?;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for a in 0..n {
            let mut v = f.components[i].diff(a).eval(x)?;
            for j in 0..n {
                v -= f.components[j].eval(x)?
                    * p.connection().get(j, i).coefficient(&[a]).eval(x)?;
            }
            w[(i, a)] = v;
        }
    }
    let h = w * inv;
    let asymmetry = (&h - h.transpose()).amax();
    Ok(CartanTable {
        h: (0..n).map(|i| h.row(i).iter().cloned().collect()).collect(),
        asymmetry,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solvability {
    /// Isomorphism case.
    Unique(DualSection),
    /// Injective case: one solution in the adapted frame, unique up to the
    /// annihilator of the tangent image.
    Affine {
        representative: DualSection,
        annihilator_dim: usize,
        residual: f64,
    },
    /// Surjective case with `dα` vanishing on the kernel at every sample.
    LeafConstant {
        max_derivative: f64,
        quotient: Option<DualSection>,
    },
    /// Surjective case: `dα(ξ) ≠ 0` for a kernel vector `ξ` at `point`.
    Unsolvable {
        point: Vec<f64>,
        direction: Vec<f64>,
        derivative: f64,
    },
}

impl Solvability {
    pub fn is_solvable(&self) -> bool {
        !matches!(self, Solvability::Unsolvable { .. })
    }
}

/// Solve `dα = (f, φ)` according to the rank case of the puzzle.
pub fn classify_solvability(
    p: &Puzzle,
    alpha: &Expr,
    points: &[Vec<f64>],
    tol: f64,
    slice: Option<&SliceSpec>,
) -> Result<Solvability> {
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "solvability needs a solder 1-form".into(),
        ));
    }
    let chart = p.chart();
    let m = chart.dim();
    let profile = rank_profile(p, points)?;
    match profile.class {
        RankClass::Isomorphism => Ok(Solvability::Unique(reconstruct_observable(p, alpha)?)),
        RankClass::Injective => {
            let frame = adapted_frame(p, None)?;
            let phit = frame.solder(p)?;
            let n = p.rank();
            // In the adapted frame φ̃^a = dx^a and φ̃^μ = 0.
            let comps: Vec<Expr> = (0..n)
                .map(|i| if i < m { alpha.diff(i) } else { Expr::zero() })
                .collect();
            let rep = DualSection::new(chart, comps)?;
            let mut residual: f64 = 0.0;
            let dalpha = DifferentialForm::scalar(chart, alpha.clone()).exterior_derivative();
            let mut paired = DifferentialForm::zero(chart, 1);
            for (fi, c) in rep.components.iter().zip(phit.components()) {
                paired = paired.add(&c.scale(fi))?;
            }
            let diff = dalpha.sub(&paired)?;
            for x in points {
                residual = residual.max(diff.max_abs_coefficient(x)?);
            }
            Ok(Solvability::Affine {
                representative: rep,
                annihilator_dim: n - m,
                residual,
            })
        }
        RankClass::Surjective => {
            let grad: Vec<Expr> = (0..m).map(|a| alpha.diff(a)).collect();
            let mut worst: f64 = 0.0;
            for x in points {
                let g: Vec<f64> = grad.iter().map(|e| e.eval(x)).collect::<Result<_, _>>()?;
                for xi in kernel_distribution(p, x)? {
                    let d: f64 = xi.iter().zip(&g).map(|(a, b)| a * b).sum();
                    if d.abs() > tol {
                        return Ok(Solvability::Unsolvable {
                            point: x.clone(),
                            direction: xi.iter().cloned().collect(),
                            derivative: d,
                        });
                    }
                    worst = worst.max(d.abs());
                }
            }
            let quotient = match slice {
                Some(spec) => {
                    let q = build_quotient(p, spec, points)?;
                    let alpha_bar = alpha.substitute(q.slice().components());
                    Some(reconstruct_observable(q.puzzle(), &alpha_bar)?)
                }
                None => None,
            };
            Ok(Solvability::LeafConstant {
                max_derivative: worst,
                quotient,
            })
        }
        class => Err(Error::Precondition(format!(
            "solvability is not defined for rank class {class}"
        ))),
    }
}
