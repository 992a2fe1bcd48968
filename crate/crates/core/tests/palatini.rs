use nalgebra::DMatrix;
use solderlab_core::bundle::FiberMetric;
use solderlab_core::expr::Expr;
use solderlab_core::fixtures;
use solderlab_core::forms::multi_indices;
use solderlab_core::palatini::{
    einstein_defect, einstein_residual, palatini_action, palatini_residual, PalatiniResidual,
    Quadrature,
};
use solderlab_core::puzzle::{induced_metric, integrability_defect, Puzzle};
use solderlab_core::riemann::MetricField;
use solderlab_core::specfile::load_puzzle;
use solderlab_core::symbolic::ExprMatrix;

fn fixture(name: &str) -> (Puzzle, Option<Quadrature>) {
    let s = load_puzzle(fixtures::path(&format!("corpus/{name}.toml"))).unwrap();
    (s.puzzle, s.palatini)
}

/// `2 G_{ℓm} ⋆θ^m` with the Einstein tensor from the Christoffel pipeline,
/// rotated into the orthonormal frame, and `⋆` from the chart metric `EᵀE`.
fn oracle_lambda(p: &Puzzle, x: &[f64]) -> Vec<Vec<f64>> {
    let g = induced_metric(p).unwrap();
    let e = p.solder().one_form_matrix(x).unwrap();
    let f = e.clone().try_inverse().unwrap();
    let ein = MetricField::new(p.chart(), g.clone())
        .unwrap()
        .at(x)
        .unwrap()
        .einstein();
    let frame: DMatrix<f64> = f.transpose() * ein * &f;
    let stars: Vec<_> = (0..4)
        .map(|m| p.solder().component(m).hodge_star(&g).unwrap())
        .collect();
    (0..4)
        .map(|l| {
            multi_indices(4, 3)
                .iter()
                .map(|idx| {
                    (0..4)
                        .map(|m| 2.0 * frame[(l, m)] * stars[m].coefficient(idx).eval(x).unwrap())
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn lambda_values(lam: &PalatiniResidual, x: &[f64]) -> Vec<Vec<f64>> {
    lam.lambda
        .iter()
        .map(|form| {
            multi_indices(4, 3)
                .iter()
                .map(|idx| form.coefficient(idx).eval(x).unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn round_s4_einstein_is_minus_three_g() {
    let (p, _) = fixture("round-s4");
    let g = induced_metric(&p).unwrap();
    for x in p.chart().seeded_samples(20, 7) {
        let ein = &einstein_residual(&p, &[x.clone()]).unwrap()[0];
        let gx = g.eval(&x).unwrap();
        assert!((ein + 3.0 * gx).amax() < 1e-8);
    }
}

#[test]
fn round_s4_lambda_matches_einstein_contraction() {
    let (p, _) = fixture("round-s4");
    let lam = palatini_residual(&p).unwrap();
    for x in p.chart().seeded_samples(20, 8) {
        let got = lambda_values(&lam, &x);
        let want = oracle_lambda(&p, &x);
        for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(got.iter().flatten().any(|v| v.abs() > 0.1));
    }
}

#[test]
fn schwarzschild_is_vacuum() {
    let (p, _) = fixture("schwarzschild");
    let pts = p.chart().seeded_samples(20, 9);
    assert!(integrability_defect(&p, &pts).unwrap() < 1e-8);
    assert!(palatini_residual(&p).unwrap().max_abs(&pts).unwrap() < 1e-8);
    assert!(einstein_defect(&p, &pts).unwrap() < 1e-8);
}

#[test]
fn flat_is_exactly_zero() {
    let (p, quad) = fixture("flat-r4");
    let pts = p.chart().seeded_samples(10, 10);
    assert_eq!(palatini_residual(&p).unwrap().max_abs(&pts).unwrap(), 0.0);
    assert_eq!(einstein_defect(&p, &pts).unwrap(), 0.0);
    assert_eq!(palatini_action(&p, &quad.unwrap()).unwrap(), 0.0);
}

#[test]
fn action_is_twice_the_scalar_curvature_integral() {
    // The integrand equals k R vol with k = 2.
    const K: f64 = 2.0;
    let (p, quad) = fixture("round-s4");
    let quad = quad.unwrap();
    let field = MetricField::new(p.chart(), induced_metric(&p).unwrap()).unwrap();
    let oracle = solderlab_core::palatini::integrate_box(&quad.domain, quad.nodes, |x| {
        let geo = field.at(x)?;
        Ok(geo.scalar() * geo.g.determinant().sqrt())
    })
    .unwrap();
    let action = palatini_action(&p, &quad).unwrap();
    assert!(
        (action - K * oracle).abs() < 1e-8 * oracle.abs(),
        "{action} vs {}",
        K * oracle
    );
    let finer = palatini_action(
        &p,
        &Quadrature {
            nodes: 2 * quad.nodes,
            ..quad.clone()
        },
    )
    .unwrap();
    assert!((finer - action).abs() < 1e-8);
}

#[test]
fn action_scales_quadratically() {
    let (p, quad) = fixture("round-s4");
    let quad = quad.unwrap();
    let c = 1.7;
    let scaled = p
        .solder()
        .change_frame(&ExprMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                Expr::constant(c)
            } else {
                Expr::zero()
            }
        }))
        .unwrap();
    let q = Puzzle::new(p.connection().clone(), scaled, p.metric().cloned()).unwrap();
    let a = palatini_action(&p, &quad).unwrap();
    let b = palatini_action(&q, &quad).unwrap();
    assert!((b - c * c * a).abs() < 1e-10 * a.abs());
}

fn rotation(angles: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut r = DMatrix::identity(4, 4);
    for &(i, j, t) in angles {
        let mut g = DMatrix::identity(4, 4);
        g[(i, i)] = t.cos();
        g[(j, j)] = t.cos();
        g[(i, j)] = -t.sin();
        g[(j, i)] = t.sin();
        r = r * g;
    }
    r
}

/// Max over points and 3-indices of the Euclidean norm of `(λ_ℓ)_ℓ`.
fn invariant_norm(p: &Puzzle, pts: &[Vec<f64>]) -> f64 {
    let lam = palatini_residual(p).unwrap();
    let mut worst: f64 = 0.0;
    for x in pts {
        let v = lambda_values(&lam, x);
        for k in 0..v[0].len() {
            worst = worst.max((0..4).map(|l| v[l][k] * v[l][k]).sum::<f64>().sqrt());
        }
    }
    worst
}

#[test]
fn lambda_is_frame_covariant() {
    let (p, _) = fixture("round-s4");
    let r = rotation(&[(0, 1, 0.3), (1, 3, -1.1), (2, 3, 0.7), (0, 2, 2.0)]);
    let pm = ExprMatrix::from_fn(4, 4, |i, j| Expr::constant(r[(i, j)]));
    let pinv = ExprMatrix::from_fn(4, 4, |i, j| Expr::constant(r[(j, i)]));
    let q = Puzzle::new(
        p.connection()
            .gauge_transform_with_inverse(&pm, &pinv)
            .unwrap(),
        p.solder().change_frame(&pinv).unwrap(),
        Some(FiberMetric::identity(p.chart(), 4)),
    )
    .unwrap();
    let pts = p.chart().seeded_samples(10, 11);
    let a = invariant_norm(&p, &pts);
    let b = invariant_norm(&q, &pts);
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
}
