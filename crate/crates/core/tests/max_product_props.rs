mod common;

use mrfqp::generators::{gen_ising_grid, gen_random_tree, IsingSpec};
use mrfqp::max_product::{mp_iteration, solve_mp, MpMessages};
use mrfqp::rng;
use mrfqp::{Parallelism, PairwiseMrf, SolverConfig, SolverKind};
use proptest::prelude::*;

fn tree(seed: u64, max_n: usize, max_k: usize) -> PairwiseMrf {
    let mut r = rng::seeded(seed);
    let n = 2 + rng::index(&mut r, max_n - 1);
    let domains = (0..n).map(|_| 2 + rng::index(&mut r, max_k - 1)).collect();
    gen_random_tree(domains, 1.0, seed).unwrap()
}

fn add_constant(m: &PairwiseMrf, edge: usize, c: f64) -> PairwiseMrf {
    let mut out = PairwiseMrf::new(m.domains().to_vec()).unwrap();
    for (e, ed) in m.edges().iter().enumerate() {
        let shift = if e == edge { c } else { 0.0 };
        out.add_edge(ed.i, ed.j, m.table(e).iter().map(|v| v + shift).collect()).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_on_trees(seed in any::<u64>()) {
        let m = tree(seed, 8, 3);
        let config = SolverConfig { restarts: 1, ..SolverConfig::for_solver(SolverKind::MaxProduct) };
        let r = solve_mp(&m, &config).unwrap();
        let (_, best) = common::brute_force(&m);
        prop_assert!(r.converged);
        prop_assert!((r.integral_objective - best).abs() < 1e-12, "{} vs {}", r.integral_objective, best);
    }

    #[test]
    fn exact_on_trees_with_unaries(seed in any::<u64>()) {
        let m = common::with_unaries(tree(seed, 6, 3), seed);
        let r = solve_mp(&m, &SolverConfig::for_solver(SolverKind::MaxProduct)).unwrap();
        let (_, best) = common::brute_force(&m);
        prop_assert!((r.integral_objective - best).abs() < 1e-12);
    }

    #[test]
    fn table_constants_do_not_change_decoding(seed in any::<u64>(), c in 0.0f64..3.0) {
        let m = tree(seed, 8, 3);
        let edge = (seed % m.num_edges() as u64) as usize;
        let shifted = add_constant(&m, edge, c);
        let config = SolverConfig { restarts: 1, ..SolverConfig::for_solver(SolverKind::MaxProduct) };
        let a = solve_mp(&m, &config).unwrap();
        let b = solve_mp(&shifted, &config).unwrap();
        prop_assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn messages_are_max_normalized(seed in any::<u64>(), damping in 0.0f64..1.0) {
        let m = common::random_instance(seed, 6, 3, 1.0);
        let start = MpMessages::noisy(&m, 0.5, &mut rng::seeded(seed));
        let (next, _) = mp_iteration(&m, &start, damping, Parallelism::Serial);
        for edge in m.edges() {
            for (from, to) in [(edge.i, edge.j), (edge.j, edge.i)] {
                let msg = next.between(&m, from, to).unwrap();
                prop_assert_eq!(msg.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
            }
        }
    }
}

#[test]
fn first_iteration_on_two_nodes_gives_normalized_column_maxima() {
    let mut m = PairwiseMrf::new(vec![2, 2]).unwrap();
    m.add_edge(0, 1, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
    let (next, change) = mp_iteration(&m, &MpMessages::zeros(&m), 0.0, Parallelism::Serial);
    assert_eq!(next.between(&m, 0, 1).unwrap(), &[0.0, -1.0]);
    assert_eq!(next.between(&m, 1, 0).unwrap(), &[0.0, -1.0]);
    assert_eq!(change, 1.0);
}

#[test]
fn trees_converge_within_diameter_sweeps() {
    // Path of 5 nodes: diameter 4.
    let mut m = PairwiseMrf::new(vec![2, 3, 2, 3, 2]).unwrap();
    let mut r = rng::seeded(17);
    for i in 0..4 {
        let len = m.domain_size(i) * m.domain_size(i + 1);
        m.add_edge(i, i + 1, (0..len).map(|_| rng::unit(&mut r)).collect()).unwrap();
    }
    let mut msgs = MpMessages::zeros(&m);
    for _ in 0..4 {
        msgs = mp_iteration(&m, &msgs, 0.0, Parallelism::Serial).0;
    }
    let (_, change) = mp_iteration(&m, &msgs, 0.0, Parallelism::Serial);
    assert!(change < 1e-12);
}

#[test]
fn frustrated_grid_reports_convergence_status() {
    let m = gen_ising_grid(&IsingSpec::new(2, 2, 2.0, 3)).unwrap();
    let config = SolverConfig { restarts: 2, max_iterations: 100, ..SolverConfig::for_solver(SolverKind::MaxProduct) };
    let r = solve_mp(&m, &config).unwrap();
    assert_eq!(r.restarts.len(), 2);
    assert!(r.iterations <= 100);
    assert_eq!(r.trace.len(), r.iterations + 1);
    let (_, best) = common::brute_force(&m);
    assert!(r.integral_objective <= best + 1e-12);
}
