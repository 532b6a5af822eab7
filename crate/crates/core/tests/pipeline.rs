use std::fs::File;

use echodex_core::contraction::global_esp_check;
use echodex_core::dynamics::evolve;
use echodex_core::echo_index::{
    estimate_echo_index, pullback_fibre, run_ensemble, EchoIndex, FibreGrid, IndexProtocol, InitialConditions,
};
use echodex_core::input::{gen_two_symbol, gen_uniform_scaled, Window};
use echodex_core::rng::{substream, uniform};
use echodex_core::{systems, InputSequence, RnnParams, State};
use nalgebra::DMatrix;

fn switching_input(seed: u64) -> InputSequence {
    let (u1, u2) = systems::switching_inputs();
    gen_two_symbol(&u1, &u2, 0.5, Window::symmetric(3000), seed).unwrap()
}

#[test]
fn index_is_shift_invariant() {
    let p = systems::switching_2d();
    let u = switching_input(11);
    let protocol = IndexProtocol { max_escalations: 1, ..Default::default() };
    for m in [-50, -23, 0, 7, 31, 50] {
        let r = estimate_echo_index(&p, &u.shift(m), &protocol).unwrap();
        assert_eq!(r.index, EchoIndex::Definite(2), "shift {m}: {:?}", r.notes);
    }
}

#[test]
fn pullback_fibres_land_on_forward_clusters() {
    let p = systems::switching_2d();
    let u = switching_input(4);
    let run = run_ensemble(&p, &u, &InitialConditions::Sampled { count: 30, seed: 2 }, 400, 60).unwrap();
    let finals: Vec<&State> = run.trajectories.iter().map(|t| t.last()).collect();
    for region in [systems::region_upper(), systems::region_lower()] {
        let f = pullback_fibre(&p, &u, 460, 200, &FibreGrid::Grid { region, per_axis: 9 }).unwrap();
        assert!(f.diameter() < 1e-10);
        let nearest = finals.iter().map(|s| s.distance(&f.points[0])).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-8, "{nearest}");
    }
}

#[test]
fn certified_networks_contract_at_the_certified_rate() {
    for r in 0..10u64 {
        let mut rng = substream(r, 99);
        let n = 12;
        let raw = DMatrix::from_fn(n, n, |_, _| uniform(&mut rng, -1.0, 1.0));
        let w_r = &raw * (0.85 / raw.singular_values().max());
        let w_in = DMatrix::from_fn(n, 1, |_, _| uniform(&mut rng, -1.0, 1.0));
        let alpha = uniform(&mut rng, 0.5, 1.0);
        let p = RnnParams::without_feedback(alpha, w_r, w_in).unwrap();
        let g = global_esp_check(&p, 0.9).unwrap();
        assert!(g.certified);
        let rate = g.effective_rate.unwrap();

        let u = gen_uniform_scaled(1.0, Window::new(1, 2000), r).unwrap();
        let x = State::from(vec![1.0; n]);
        let y = State::from(vec![-1.0; n]);
        let d0 = x.distance(&y);
        for k in [1, 10, 40] {
            let d = evolve(&p, &u, 0, &x, k).unwrap().distance(&evolve(&p, &u, 0, &y, k).unwrap());
            assert!(d <= rate.powi(k as i32) * d0 * (1.0 + 1e-12), "k {k}: {d} vs {}", rate.powi(k as i32) * d0);
        }
        let rep = estimate_echo_index(&p, &u, &IndexProtocol::default()).unwrap();
        assert_eq!(rep.index, EchoIndex::Definite(1));
    }
}

#[test]
fn input_csv_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let u = switching_input(1);
    u.write_csv(File::create(&path).unwrap()).unwrap();
    let back = InputSequence::read_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back.first(), u.first());
    assert_eq!(back.dim(), 2);
    assert_eq!(back.values(), u.values());
}

#[test]
fn ensemble_csv_has_one_row_per_member_and_step() {
    let p = systems::scalar_bistable(1.0);
    let u = gen_uniform_scaled(0.01, Window::new(1, 100), 0).unwrap();
    let run = run_ensemble(&p, &u, &InitialConditions::Sampled { count: 4, seed: 0 }, 50, 20).unwrap();
    let mut buf = Vec::new();
    run.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ic_id,k,x_1"));
    assert_eq!(lines.count(), 4 * 20);
}
