mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use solderlab_core::bundle::{covariant_exterior_derivative, BundleValuedForm, FiberMetric};
use solderlab_core::expr::Expr;
use solderlab_core::forms::{ChartMap, DifferentialForm, VectorField};
use solderlab_core::puzzle::{
    frobenius_residual, integrability_defect, integrability_residual, kernel_distribution,
    pullback_puzzle, torsion_free_connection, Puzzle,
};

fn map_data() -> impl Strategy<Value = Vec<PolyData>> {
    prop::collection::vec(poly_data(2, 3), 3)
}

fn small_map(data: &[PolyData]) -> ChartMap {
    let comps = data.iter().map(|d| poly(d).scale(0.2)).collect();
    ChartMap::new(&cube(2), &cube(3), comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_puzzles_are_integrable(data in integrable_data(3, 2), pts in points(3, 10)) {
        let p = integrable_puzzle(&cube(3), 2, &data);
        let scale = 1.0 + pts.iter().map(|x| p.solder().max_abs_coefficient(x).unwrap()).fold(0.0, f64::max);
        prop_assert!(integrability_defect(&p, &pts).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn pullback_commutes_with_covariant_derivative(
        w in connection_data(3, 2),
        phi in prop::collection::vec(form_data(3, 1), 2),
        u in map_data(),
        pts in points(2, 10),
    ) {
        let c = cube(3);
        let p = Puzzle::new(connection(&c, 2, &w), bundle_form(&c, 1, &phi), None).unwrap();
        let u = small_map(&u);
        let lhs = integrability_residual(&pullback_puzzle(&p, &u).unwrap()).unwrap();
        let rhs = integrability_residual(&p).unwrap().pullback(&u).unwrap();
        for x in &pts {
            for i in 0..2 {
                let d = lhs.component(i).sub(rhs.component(i)).unwrap();
                prop_assert!(max_abs(&d, x) <= 1e-10 * (1.0 + max_abs(rhs.component(i), x)));
            }
        }
    }

    #[test]
    fn pullback_preserves_integrability(data in integrable_data(3, 2), u in map_data(), pts in points(2, 10)) {
        let p = integrable_puzzle(&cube(3), 2, &data);
        let q = pullback_puzzle(&p, &small_map(&u)).unwrap();
        let scale = 1.0 + pts.iter().map(|x| q.solder().max_abs_coefficient(x).unwrap()).fold(0.0, f64::max);
        prop_assert!(integrability_defect(&q, &pts).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn torsion_free_connection_is_skew_and_torsion_free(
        e in prop::collection::vec(poly_data(3, 3), 9),
        pts in points(3, 10),
    ) {
        let c = cube(3);
        // Diagonally dominant coframe, invertible on the cube.
        let rows: Vec<DifferentialForm> = (0..3)
            .map(|i| {
                let coeffs: Vec<Expr> = (0..3)
                    .map(|a| {
                        let q = poly(&e[i * 3 + a]).scale(0.1);
                        if i == a { Expr::add(&Expr::constant(2.0), &q) } else { q }
                    })
                    .collect();
                DifferentialForm::one_form(&c, &coeffs).unwrap()
            })
            .collect();
        let theta = BundleValuedForm::new(&c, 1, rows).unwrap();
        let omega = torsion_free_connection(&theta, &FiberMetric::identity(&c, 3)).unwrap();
        let torsion = covariant_exterior_derivative(&omega, &theta).unwrap();
        for x in &pts {
            for i in 0..3 {
                for j in 0..3 {
                    let a = omega.get(i, j).eval_coefficients(x).unwrap();
                    let b = omega.get(j, i).eval_coefficients(x).unwrap();
                    for (k, v) in &a {
                        prop_assert_eq!(*v, -b.get(k).copied().unwrap_or(0.0));
                    }
                }
            }
            prop_assert!(torsion.max_abs_coefficient(x).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilates(
        w in connection_data(4, 2),
        phi in prop::collection::vec(form_data(4, 1), 2),
        x in point(4),
    ) {
        let c = cube(4);
        let p = Puzzle::new(connection(&c, 2, &w), bundle_form(&c, 1, &phi), None).unwrap();
        let a = p.solder_map(&x).unwrap();
        let k = kernel_distribution(&p, &x).unwrap();
        prop_assert!(k.len() >= 2);
        let basis = DMatrix::from_columns(&k);
        let gram = basis.transpose() * &basis;
        prop_assert!((gram - DMatrix::identity(k.len(), k.len())).amax() <= 1e-12);
        prop_assert!((&a * &basis).amax() <= 1e-10 * (1.0 + a.amax()));
    }

    #[test]
    fn kernel_fields_close_under_bracket(data in integrable_data(3, 1), pts in points(3, 10)) {
        // For rank one the kernel of φ = p⁻¹du is spanned by ∇u × e_1 and ∇u × e_2.
        let c = cube(3);
        let p = integrable_puzzle(&c, 1, &data);
        let u = poly(&data.u[0]);
        let g: Vec<Expr> = (0..3).map(|a| u.diff(a)).collect();
        let x = VectorField::new(&c, vec![Expr::zero(), g[2].clone(), Expr::neg(&g[1])]).unwrap();
        let y = VectorField::new(&c, vec![Expr::neg(&g[2]), Expr::zero(), g[0].clone()]).unwrap();
        let r = frobenius_residual(&p, &x, &y, &pts).unwrap();
        prop_assert!(r.kernel_violation <= 1e-12);
        prop_assert!(r.bracket <= 1e-9);
    }
}
