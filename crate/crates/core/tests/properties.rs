use approx::assert_relative_eq;
use echodex_core::dynamics::{evolve, Activation, Readout};
use echodex_core::echo_index::hausdorff_semidistance;
use echodex_core::input::{d_prod, d_unif};
use echodex_core::training::{normal_equation_residual, ridge_readout};
use echodex_core::{DrivenSystem, InputSequence, RnnParams, State};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

prop_compose! {
    fn network()(n in 1usize..6, m in 1usize..3, feedback in any::<bool>())
        (alpha in 0.05f64..=1.0,
         w_r in matrix(n, n, -2.0, 2.0),
         w_in in matrix(n, m, -2.0, 2.0),
         w_fb in matrix(n, 1, -1.0, 1.0),
         w_o in matrix(1, n, -1.0, 1.0),
         feedback in Just(feedback)) -> RnnParams {
        if feedback {
            RnnParams::new(alpha, w_r, w_in, w_fb, Readout::Linear(w_o), Activation::Tanh).unwrap()
        } else {
            RnnParams::without_feedback(alpha, w_r, w_in).unwrap()
        }
    }
}

prop_compose! {
    fn network_with_input(len: usize)(p in network())
        (values in prop::collection::vec(-1.0f64..1.0, len * p.input_dim()),
         x in prop::collection::vec(-1.0f64..1.0, p.state_dim()),
         p in Just(p)) -> (RnnParams, InputSequence, State) {
        let m = p.input_dim();
        (p, InputSequence::explicit(-20, values, m).unwrap(), State::from(x))
    }
}

fn brute_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut sup = 0.0f64;
    for p in a {
        let mut inf = f64::INFINITY;
        for q in b {
            let mut sq = 0.0;
            for i in 0..p.len() {
                sq += (p[i] - q[i]) * (p[i] - q[i]);
            }
            inf = inf.min(sq.sqrt());
        }
        sup = sup.max(inf);
    }
    sup
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cocycle_is_bit_exact((p, u, x) in network_with_input(80), a in 0usize..30, b in 0usize..30) {
        let whole = evolve(&p, &u, -20, &x, a + b).unwrap();
        let mid = evolve(&p, &u, -20, &x, a).unwrap();
        prop_assert_eq!(&whole, &evolve(&p, &u, -20 + a as i64, &mid, b).unwrap());
        prop_assert_eq!(&whole, &evolve(&p, &u.shift(a as i64), -20, &mid, b).unwrap());
    }

    #[test]
    fn jacobian_matches_central_differences((p, u, x) in network_with_input(1)) {
        let v = u.value(-20).unwrap().to_vec();
        let j = p.jacobian(&v, &x).unwrap();
        let h = 1e-6;
        let n = p.state_dim();
        let fd = DMatrix::from_fn(n, n, |r, c| {
            let mut xp = x.0.clone();
            let mut xm = x.0.clone();
            xp[c] += h;
            xm[c] -= h;
            (p.apply(&v, &xp)[r] - p.apply(&v, &xm)[r]) / (2.0 * h)
        });
        prop_assert!((&j - &fd).norm() <= 1e-6 * j.norm().max(1e-3));
    }

    #[test]
    fn state_box_is_absorbing(p in network(), seq in prop::collection::vec(-100.0f64..100.0, 400)) {
        let m = p.input_dim();
        let mut x = State::from(vec![1.0; p.state_dim()]);
        for u in seq.chunks_exact(m) {
            x = p.step(u, &x).unwrap();
            prop_assert!(x.norm_inf() <= p.bound());
        }
    }

    #[test]
    fn params_round_trip_through_json(p in network()) {
        let text = serde_json::to_string(&p).unwrap();
        let back: RnnParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn ridge_solves_normal_equations(s in matrix(60, 8, -1.0, 1.0), y in matrix(60, 2, -1.0, 1.0), lambda in 1e-4f64..5.0) {
        let w = ridge_readout(&s, &y, lambda).unwrap();
        prop_assert_eq!(w.shape(), (2, 8));
        prop_assert!(normal_equation_residual(&s, &y, lambda, &w) <= 1e-8);
    }

    #[test]
    fn hausdorff_matches_brute_force(
        dim in 1usize..4,
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..15),
        b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..15),
    ) {
        let a: Vec<Vec<f64>> = a.into_iter().map(|v| v[..dim].to_vec()).collect();
        let b: Vec<Vec<f64>> = b.into_iter().map(|v| v[..dim].to_vec()).collect();
        let sa: Vec<State> = a.iter().cloned().map(State::from).collect();
        let sb: Vec<State> = b.iter().cloned().map(State::from).collect();
        prop_assert_eq!(hausdorff_semidistance(&sa, &sb).unwrap(), brute_hausdorff(&a, &b));
        prop_assert_eq!(hausdorff_semidistance(&sa, &sa).unwrap(), 0.0);
    }

    #[test]
    fn d_unif_is_a_metric(
        u in prop::collection::vec(-1.0f64..1.0, 40),
        v in prop::collection::vec(-1.0f64..1.0, 40),
        w in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let mk = |x: Vec<f64>| InputSequence::explicit(-5, x, 2).unwrap();
        let (u, v, w) = (mk(u), mk(v), mk(w));
        let d = |a: &InputSequence, b: &InputSequence| d_unif(a, b).unwrap();
        prop_assert_eq!(d(&u, &u), 0.0);
        prop_assert_eq!(d(&u, &v), d(&v, &u));
        prop_assert!(d(&u, &w) <= (d(&u, &v) + d(&v, &w)) * (1.0 + 4.0 * f64::EPSILON));
        if u.values() != v.values() {
            prop_assert!(d(&u, &v) > 0.0);
        }
    }

    #[test]
    fn d_prod_is_symmetric_and_bounded(
        u in prop::collection::vec(-1.0f64..1.0, 41),
        v in prop::collection::vec(-1.0f64..1.0, 41),
    ) {
        let mk = |x: Vec<f64>| InputSequence::explicit(-20, x, 1).unwrap();
        let (u, v) = (mk(u), mk(v));
        let d = d_prod(&u, &v, 20).unwrap();
        prop_assert_eq!(d, d_prod(&v, &u, 20).unwrap());
        prop_assert_eq!(d_prod(&u, &u, 20).unwrap(), 0.0);
        // Weights 1 + 2 (1/2 + 1/4 + ...) < 3 times the largest difference.
        prop_assert!(d <= 3.0 * d_unif(&u, &v).unwrap());
    }
}

#[test]
fn jacobian_of_diagonal_network_is_closed_form() {
    let p = RnnParams::without_feedback(0.5, DMatrix::from_diagonal_element(2, 2, 1.5), DMatrix::identity(2, 2)).unwrap();
    let x = State::from(vec![0.2, -0.4]);
    let u = [0.1, 0.3];
    let j = p.jacobian(&u, &x).unwrap();
    for i in 0..2 {
        let t = (1.5 * x.0[i] + u[i]).tanh();
        assert_relative_eq!(j[(i, i)], 0.5 + 0.5 * 1.5 * (1.0 - t * t), max_relative = 1e-15);
    }
    assert_eq!(j[(0, 1)], 0.0);
    assert_eq!(j[(1, 0)], 0.0);
}
