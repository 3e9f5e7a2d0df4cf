mod common;

use bb1_precoder::baselines::exhaustive_solve;
use bb1_precoder::bb1::{
    bb1_solve, bb1_solve_observed, child_cost, prepare, SearchNode, SearchObserver, TriangularizedProblem,
};
use bb1_precoder::TrickConfig;
use proptest::prelude::*;

#[derive(Default)]
struct LeafAudit {
    leaves: usize,
    worst_sum_gap: f64,
    worst_exact_gap: f64,
}

impl SearchObserver for LeafAudit {
    fn leaf_reached(&mut self, tp: &TriangularizedProblem, leaf: &SearchNode, exact: f64) {
        self.leaves += 1;
        let x = tp.alphabet.vector(&leaf.psv);
        let num: f64 = tp.r.mul_vec(&x).iter().map(|v| v.norm_sqr()).sum();
        self.worst_sum_gap = self.worst_sum_gap.max(common::relative_gap(leaf.num_past, num));
        let scratch = common::triangular_objective(tp, &leaf.psv);
        if scratch.is_finite() {
            self.worst_exact_gap = self.worst_exact_gap.max(common::relative_gap(exact, scratch));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn matches_exhaustive_for_any_config(
        u in 1usize..4,
        b in 1usize..7,
        n0 in prop::sample::select(vec![0.0, 0.01, 0.3, 3.0]),
        bits in 0u8..16,
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let p = common::rayleigh_instance(&mut rng, u, b, n0);
        let cfg = TrickConfig::all_combinations().nth(bits as usize).unwrap();
        let reference = exhaustive_solve(&p).unwrap();
        let got = bb1_solve(&p, &cfg).unwrap();
        prop_assert!(common::relative_gap(got.cmqp_value, reference.cmqp_value) <= 1e-9);
        prop_assert!(got.beta > 0.0);
        prop_assert_eq!(got.x.clone(), p.alphabet().vector(&got.indices));
        prop_assert!(got.stats.leaves_reached <= got.stats.nodes_visited);
    }

    #[test]
    fn incremental_sums_match_scratch_values(u in 1usize..4, b in 2usize..7, bits in 0u8..16, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let p = common::rayleigh_instance(&mut rng, u, b, 0.2);
        let cfg = TrickConfig::all_combinations().nth(bits as usize).unwrap();
        let mut audit = LeafAudit::default();
        bb1_solve_observed(&p, &cfg, &mut audit).unwrap();
        prop_assert!(audit.leaves > 0 || cfg.radius_init);
        prop_assert!(audit.worst_sum_gap <= 1e-9);
        prop_assert!(audit.worst_exact_gap <= 1e-12);
    }

    #[test]
    fn preprune_and_radius_init_never_add_nodes(u in 1usize..4, b in 2usize..8, bits in 0u8..16, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let p = common::rayleigh_instance(&mut rng, u, b, 0.5);
        let base = TrickConfig::all_combinations().nth(bits as usize).unwrap();
        let nodes = |cfg: TrickConfig| bb1_solve(&p, &cfg).unwrap().stats.nodes_visited;
        let with_pp = nodes(TrickConfig { preprune: true, ..base });
        let without_pp = nodes(TrickConfig { preprune: false, ..base });
        prop_assert!(with_pp <= without_pp);
        let with_ri = nodes(TrickConfig { radius_init: true, ..base });
        let without_ri = nodes(TrickConfig { radius_init: false, ..base });
        prop_assert!(with_ri <= without_ri);
    }
}

#[test]
fn optimum_is_independent_of_tricks() {
    let mut rng = common::rng(21);
    for _ in 0..40 {
        let p = common::rayleigh_instance(&mut rng, 3, 7, 0.1);
        let values: Vec<f64> = TrickConfig::all_combinations()
            .map(|cfg| bb1_solve(&p, &cfg).unwrap().cmqp_value)
            .collect();
        for v in &values {
            assert!(common::relative_gap(*v, values[0]) <= 1e-9);
        }
    }
}

#[test]
fn repeated_solves_are_identical() {
    let mut rng = common::rng(4);
    let p = common::rayleigh_instance(&mut rng, 3, 8, 1.0);
    let a = bb1_solve(&p, &TrickConfig::all_on()).unwrap();
    let b = bb1_solve(&p, &TrickConfig::all_on()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.cmqp_value.to_bits(), b.cmqp_value.to_bits());
    assert_eq!(a.stats.nodes_visited, b.stats.nodes_visited);
}

#[test]
fn noiseless_wide_channel_falls_back_to_trivial_bound() {
    // N0 = 0 with B > U leaves the leading blocks of R singular.
    let mut rng = common::rng(8);
    for _ in 0..30 {
        let p = common::rayleigh_instance(&mut rng, 2, 5, 0.0);
        let reference = exhaustive_solve(&p).unwrap();
        let got = bb1_solve(&p, &TrickConfig::all_on()).unwrap();
        assert!(common::relative_gap(got.cmqp_value, reference.cmqp_value) <= 1e-9);
    }
}

#[test]
fn root_costs_are_sign_symmetric() {
    let mut rng = common::rng(9);
    let p = common::rayleigh_instance(&mut rng, 2, 4, 0.5);
    let cfg = TrickConfig::all_on();
    let tp = prepare(&p, &cfg).unwrap();
    let root = SearchNode::root(&tp);
    for m in 0..4 {
        let a = child_cost(&root, m, &tp, &cfg);
        let b = child_cost(&root, tp.alphabet.negation_index(m), &tp, &cfg);
        assert!(common::relative_gap(a, b) <= 1e-12);
    }
}
