use proptest::collection::vec;
use proptest::prelude::*;

use proxsplit::funcs::{prox_conjugate, prox_l1, Bounds, Indicator, L1Norm, ProxFn, Quadratic, SmoothFn};
use proxsplit::{LinearOperator, Vector};

fn coords() -> impl Strategy<Value = Vec<f64>> {
    vec(-10.0..10.0f64, 6)
}

proptest! {
    #[test]
    fn soft_threshold_matches_closed_form(x in coords(), gamma in 0.01..5.0f64, w in 0.0..3.0f64) {
        let p = prox_l1(&Vector::from_vec(x.clone()), gamma, w).unwrap();
        for (pi, xi) in p.iter().zip(&x) {
            let want = xi.signum() * (xi.abs() - gamma * w).max(0.0);
            prop_assert!((pi - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn moreau_decomposition(x in coords(), gamma in 0.05..20.0f64, w in 0.1..3.0f64) {
        let f = L1Norm::new(w).unwrap();
        let x = Vector::from_vec(x);
        let p = f.prox(&x, gamma).unwrap();
        let q = prox_conjugate(&f, &x.scale(1.0 / gamma), 1.0 / gamma).unwrap();
        let back = p.add_scaled(gamma, &q);
        prop_assert!(back.dist(&x) <= 1e-9 * (1.0 + x.norm()));
    }

    #[test]
    fn box_projection_is_firmly_nonexpansive(x in coords(), y in coords()) {
        let c = Indicator::from_bounds(Bounds::new(vec![-1.0, -2.0, 0.0, -0.5, -3.0, 1.0], vec![1.0, 2.0, 4.0, 0.5, 0.0, 1.5]).unwrap());
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        let (px, py) = (c.prox(&x, 1.0).unwrap(), c.prox(&y, 1.0).unwrap());
        let d = px.sub(&py);
        prop_assert!(d.norm_sq() <= d.dot(&x.sub(&y)) + 1e-10);
    }

    #[test]
    fn quadratic_prox_is_stationary(x in coords(), gamma in 0.01..10.0f64) {
        let op = LinearOperator::from_rows(&[
            vec![1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0, 0.0, 0.3, 0.0],
            vec![0.2, 0.0, 0.0, 2.0, 0.0, 1.0],
        ]).unwrap();
        let q = Quadratic::new(op, Vector::from_slice(&[1.0, -1.0, 0.5]), 0.7).unwrap();
        let x = Vector::from_vec(x);
        let p = q.prox(&x, gamma).unwrap();
        let r = p.sub(&x).scale(1.0 / gamma).add(&SmoothFn::gradient(&q, &p));
        prop_assert!(r.norm() <= 1e-7 * (1.0 + x.norm()));
    }
}
