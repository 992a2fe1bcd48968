mod common;

use common::*;
use proptest::prelude::*;
use solderlab_core::forms::ChartMap;
use solderlab_core::symbolic::ExprMatrix;

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_squared_vanishes(p in 0usize..3, data in form_data(3, 2), pts in points(3, 100)) {
        let c = cube(3);
        let data = &data[..solderlab_core::forms::multi_indices(3, p).len().min(data.len())];
        let a = form(&c, p, &pad(data, 3, p));
        let dd = a.exterior_derivative().exterior_derivative();
        for x in &pts {
            prop_assert!(max_abs(&dd, x) <= 1e-12);
        }
    }

    #[test]
    fn graded_leibniz(
        p in 0usize..3, q in 0usize..2,
        da in form_data(3, 1), db in form_data(3, 1),
        pts in points(3, 100),
    ) {
        let c = cube(3);
        let a = form(&c, p, &pad(&da, 3, p));
        let b = form(&c, q, &pad(&db, 3, q));
        let lhs = a.wedge(&b).unwrap().exterior_derivative();
        let rhs = a
            .exterior_derivative()
            .wedge(&b)
            .unwrap()
            .add(&a.wedge(&b.exterior_derivative()).unwrap().scale(&sign(p).into()))
            .unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        for x in &pts {
            prop_assert!(max_abs(&diff, x) <= 1e-10);
        }
    }

    #[test]
    fn graded_commutativity(
        p in 0usize..3, q in 0usize..3,
        da in form_data(4, 2), db in form_data(4, 2),
        pts in points(4, 100),
    ) {
        let c = cube(4);
        let a = form(&c, p, &pad(&da, 4, p));
        let b = form(&c, q, &pad(&db, 4, q));
        let ab = a.wedge(&b).unwrap();
        let ba = b.wedge(&a).unwrap().scale(&sign(p * q).into());
        for x in &pts {
            let u = ab.eval_coefficients(x).unwrap();
            let v = ba.eval_coefficients(x).unwrap();
            for (k, val) in &u {
                prop_assert_eq!(*val, v.get(k).copied().unwrap_or(0.0));
            }
            for (k, val) in &v {
                prop_assert_eq!(*val, u.get(k).copied().unwrap_or(0.0));
            }
        }
    }

    #[test]
    fn pullback_commutes_with_d(
        p in 0usize..3,
        data in form_data(3, 1),
        map in prop::collection::vec(poly_data(2, 3), 3),
        pts in points(2, 100),
    ) {
        let target = cube(3);
        let source = cube(2);
        let u = ChartMap::new(&source, &target, map.iter().map(poly).collect()).unwrap();
        let a = form(&target, p, &pad(&data, 3, p));
        let lhs = a.exterior_derivative().pullback(&u).unwrap();
        let rhs = a.pullback(&u).unwrap().exterior_derivative();
        let diff = lhs.sub(&rhs).unwrap();
        for x in &pts {
            let scale = 1.0 + max_abs(&lhs, x);
            prop_assert!(max_abs(&diff, x) <= 1e-10 * scale);
        }
    }

    #[test]
    fn hodge_star_is_an_involution(m in 2usize..5, p in 0usize..5, data in form_data(4, 2), pts in points(4, 100)) {
        prop_assume!(p <= m);
        let c = cube(m);
        let a = form(&c, p, &pad(&data, m, p));
        let g = ExprMatrix::identity(m);
        let twice = a.hodge_star(&g).unwrap().hodge_star(&g).unwrap();
        let diff = twice.sub(&a.scale(&sign(p * (m - p)).into())).unwrap();
        for x in &pts {
            prop_assert!(max_abs(&diff, &x[..m]) <= 1e-12);
        }
    }
}

/// Reuse generated polynomials for a form of another shape, dropping
/// variables beyond `m`.
fn pad(data: &[PolyData], m: usize, p: usize) -> Vec<PolyData> {
    let need = solderlab_core::forms::multi_indices(m, p).len();
    (0..need)
        .map(|k| {
            data[k % data.len()]
                .iter()
                .map(|(c, e)| (*c, (0..m).map(|i| e.get(i).copied().unwrap_or(0)).collect()))
                .collect()
        })
        .collect()
}
