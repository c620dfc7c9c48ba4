mod common;

use std::collections::BTreeSet;

use mmot_core::extremal::{
    check_thm41, is_vertex, lemma_trip_check, solve_strict_order, symmetry_witness, GraphMap, ThetaOutcome,
};
use mmot_core::io::{coupling_from_json, coupling_to_json, marginal_from_json, marginal_to_json};
use mmot_core::structure::{check_c_monotone, decompose_graphs, splitting_support, TOL_MONO};
use mmot_core::*;
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn solved(seed: u64, n: usize, max_len: usize) -> (ProductSpace, CostModel, SolveResult) {
    let mut r = common::rng(seed);
    let space = common::random_space(&mut r, n, max_len);
    let model = common::random_table(&mut r, &space);
    let sol = solve_exact(&model, &space).unwrap();
    (space, model, sol)
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn optimal_plans_are_certified(seed in any::<u64>(), n in 2usize..=3) {
        let (space, model, sol) = solved(seed, n, 4);
        prop_assert!(space.marginal_deviation(&sol.plan) <= 1e-12);
        let bound: usize = space.shape().iter().sum::<usize>() - n + 1;
        prop_assert!(sol.plan.len() <= bound);
        prop_assert!(sol.duals.worst_violation(&model, &space, 1e-9).unwrap().is_none());
        prop_assert!(duality_gap(&model, &space, &sol.plan, &sol.duals).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn support_lies_in_splitting_set_and_is_monotone(seed in any::<u64>()) {
        let (space, model, sol) = solved(seed, 3, 4);
        let split = splitting_support(&model, &space, &sol.duals, 1e-9).unwrap();
        let support: Vec<Cell> = sol.plan.support(1e-10).into_iter().cloned().collect();
        prop_assert!(support.iter().all(|c| split.contains(c)));
        prop_assert!(check_c_monotone(&model, &space, &support, TOL_MONO).unwrap().is_empty());
    }

    #[test]
    fn conjugate_dominates_and_stays_feasible(seed in any::<u64>(), axis in 0usize..3) {
        let (space, model, sol) = solved(seed, 3, 4);
        let up = c_conjugate_update(&model, &space, &sol.duals, axis).unwrap();
        let mut next = sol.duals.clone();
        let mut fresh = Vec::new();
        for (j, v) in up.values.iter().enumerate() {
            let v = v.unwrap();
            prop_assert!(v >= sol.duals.axis(axis)[j] - 1e-9);
            fresh.push(v);
        }
        next.replace_axis(axis, fresh);
        prop_assert!(next.worst_violation(&model, &space, 1e-9).unwrap().is_none());
        prop_assert!(next.dual_value(&space) >= sol.duals.dual_value(&space) - 1e-9);
    }

    #[test]
    fn decomposition_rebuilds_the_plan(seed in any::<u64>()) {
        let (space, _, sol) = solved(seed, 3, 4);
        let dec = decompose_graphs(&sol.plan, &space).unwrap();
        let back = dec.reconstruct(&space).unwrap();
        prop_assert!(back.tv_distance(&sol.plan) <= 1e-12);
        for row in dec.alpha_table() {
            let s: f64 = row.iter().sum();
            prop_assert!(row.is_empty() || (s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn coupling_json_round_trip_is_bit_exact(masses in prop::collection::vec(1e-300f64..1.0, 1..12)) {
        let total: f64 = masses.iter().sum();
        let shape = vec![masses.len(), 2];
        let plan = Coupling::from_masses(shape.clone(), masses.iter().enumerate().map(|(i, m)| (vec![i, i % 2], m / total))).unwrap();
        let back = Coupling::from_masses(shape.clone(), coupling_from_json(&coupling_to_json(&plan), shape).unwrap().entries().map(|(c, m)| (c.clone(), m))).unwrap();
        for ((c1, m1), (c2, m2)) in plan.entries().zip(back.entries()) {
            prop_assert_eq!(c1, c2);
            prop_assert_eq!(m1.to_bits(), m2.to_bits());
        }
    }

    #[test]
    fn marginal_json_round_trip(seed in any::<u64>(), len in 1usize..6) {
        let mut r = common::rng(seed);
        let pts: Vec<Vec<f64>> = (0..len).map(|j| vec![j as f64 + r.gen_range(0.0..0.5), r.gen::<f64>()]).collect();
        let w: Vec<f64> = (0..len).map(|_| r.gen_range(1.0..2.0)).collect();
        let total: f64 = w.iter().sum();
        let m = DiscreteMarginal::new(pts, w.iter().map(|x| x / total).collect()).unwrap();
        prop_assert_eq!(marginal_from_json(&marginal_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn kernel_direction_is_a_feasible_perturbation(seed in any::<u64>()) {
        let (space, _, a) = solved(seed, 3, 3);
        let mut r = common::rng(seed.wrapping_add(1));
        let b = solve_exact(&common::random_table(&mut r, &space), &space).unwrap();
        let plan = a.plan.mix(&b.plan, 0.5).unwrap();
        let cert = is_vertex(&plan, &space).unwrap();
        prop_assert_eq!(cert.is_extremal, cert.kernel_direction.is_none());
        if let Some(dir) = cert.kernel_direction {
            let shape = space.shape();
            for axis in 0..3 {
                let mut sums = vec![0.0; shape[axis]];
                for (c, v) in &dir {
                    prop_assert!(plan.mass(c) > 0.0);
                    sums[c[axis]] += v;
                }
                prop_assert!(sums.iter().all(|s| s.abs() <= 1e-9));
            }
            let eps = dir.iter().map(|(c, v)| plan.mass(c) / v.abs()).fold(f64::INFINITY, f64::min) * 0.5;
            for sign in [1.0, -1.0] {
                prop_assert!(dir.iter().all(|(c, v)| plan.mass(c) + sign * eps * v >= 0.0));
            }
        }
    }

    #[test]
    fn composed_check_implies_vertex(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let space = common::random_space(&mut r, 3, 3);
        let a = solve_exact(&common::random_table(&mut r, &space), &space).unwrap().plan;
        let plan = if r.gen_bool(0.5) {
            a
        } else {
            a.mix(&solve_exact(&common::random_table(&mut r, &space), &space).unwrap().plan, 0.5).unwrap()
        };
        if lemma_trip_check(&plan, &space).unwrap() {
            prop_assert!(is_vertex(&plan, &space).unwrap().is_extremal);
        }
    }

    #[test]
    fn theta_exists_iff_acyclic(edges in prop::collection::vec((0usize..6, 0usize..6), 0..12)) {
        // reachability closure as the acyclicity oracle
        let mut reach = [[false; 6]; 6];
        for &(a, b) in &edges {
            reach[a][b] = true;
        }
        for k in 0..6 {
            for i in 0..6 {
                for j in 0..6 {
                    reach[i][j] |= reach[i][k] && reach[k][j];
                }
            }
        }
        let acyclic = (0..6).all(|i| !reach[i][i]);
        match solve_strict_order(6, &edges) {
            ThetaOutcome::Found(t) => {
                prop_assert!(acyclic);
                prop_assert!(edges.iter().all(|&(a, b)| t[a] - t[b] >= 1));
            }
            ThetaOutcome::Cycle(c) => {
                prop_assert!(!acyclic);
                let set: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
                for i in 0..c.len() {
                    prop_assert!(set.contains(&(c[i], c[(i + 1) % c.len()])));
                }
            }
        }
    }

    #[test]
    fn plans_on_admissible_graphs_are_extremal(seed in any::<u64>(), n1 in 2usize..6, k in 1usize..4) {
        let mut r = common::rng(seed);
        let perm = |r: &mut rand_chacha::ChaCha8Rng, len: usize| {
            let mut p: Vec<usize> = (0..len).collect();
            rand::seq::SliceRandom::shuffle(p.as_mut_slice(), r);
            p
        };
        // K₁ arbitrary into a shared block, K_j (j ≥ 2) injective into disjoint blocks
        let n3 = n1 * k;
        let mut maps = vec![GraphMap { h: perm(&mut r, n1).into_iter().map(Some).collect(), k: (0..n1).map(|_| Some(r.gen_range(0..n1))).collect() }];
        for j in 1..k {
            let h = perm(&mut r, n1).into_iter().map(Some).collect();
            let kk = perm(&mut r, n1).into_iter().map(|x| Some(j * n1 + x)).collect();
            maps.push(GraphMap { h, k: kk });
        }
        let mut alpha: Vec<Vec<f64>> = (0..n1).map(|_| (0..k).map(|_| r.gen_range(1..=4) as f64).collect()).collect();
        for row in &mut alpha {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|a| *a /= s);
        }
        let mu1 = vec![1.0 / n1 as f64; n1];
        let mut masses = std::collections::BTreeMap::new();
        for x in 0..n1 {
            for (i, m) in maps.iter().enumerate() {
                *masses.entry(vec![x, m.h[x].unwrap(), m.k[x].unwrap()]).or_insert(0.0) += alpha[x][i] * mu1[x];
            }
        }
        let plan = Coupling::new(vec![n1, n1, n3], masses).unwrap();
        let axis = |w: Vec<f64>| DiscreteMarginal::from_1d(&(0..w.len()).map(|j| j as f64).collect::<Vec<_>>(), w).unwrap();
        let space = ProductSpace::new(vec![axis(plan.marginal(0)), axis(plan.marginal(1)), axis(plan.marginal(2))]).unwrap();
        let rep = check_thm41(&space, &maps, None).unwrap();
        if rep.all_hold() {
            prop_assert!(is_vertex(&plan, &space).unwrap().is_extremal);
        }
    }

    #[test]
    fn witness_invariants(seed in any::<u64>(), len in 3usize..6) {
        let mut r = common::rng(seed);
        let xs: Vec<f64> = (0..len).map(|j| j as f64 + 1.0).collect();
        let uniform = DiscreteMarginal::uniform_1d(&xs).unwrap();
        let space = ProductSpace::repeated(uniform, 3).unwrap();
        let base = solve_exact(&common::random_table(&mut r, &space), &space).unwrap().plan;
        let plan = base.symmetrize().unwrap();
        let mut labels: Vec<usize> = (0..len).map(|_| r.gen_range(0..4)).collect();
        labels[0] = 0;
        labels[1] = 1;
        labels[2] = 2;
        let sets: Vec<Vec<usize>> = (0..3).map(|s| (0..len).filter(|&j| labels[j] == s).collect()).collect();
        let model = CostModel::ProductXYZ;
        match symmetry_witness(&plan, &space, [&sets[0], &sets[1], &sets[2]], &model) {
            Ok(w) => {
                prop_assert!(w.coupling.entries().all(|(_, m)| m >= 0.0));
                prop_assert!(space.marginal_deviation(&w.coupling) <= 1e-12);
                prop_assert!((w.cost_after - w.cost_before).abs() <= 1e-9 * (1.0 + w.cost_before.abs()));
                prop_assert!(w.tv_distance > 1e-12);
            }
            Err(Error::Precondition(_)) => {
                let charged = plan.entries().any(|(c, _)| sets[0].contains(&c[0]) && sets[1].contains(&c[1]) && sets[2].contains(&c[2]));
                prop_assert!(!charged);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn two_marginal_value_matches_permutation_search(seed in any::<u64>(), len in 2usize..6) {
        let mut r = common::rng(seed);
        let xs: Vec<f64> = (0..len).map(|j| j as f64).collect();
        let space = ProductSpace::repeated(DiscreteMarginal::uniform_1d(&xs).unwrap(), 2).unwrap();
        let c: Vec<Vec<f64>> = (0..len).map(|_| (0..len).map(|_| r.gen_range(0.0..1.0)).collect()).collect();
        let model = CostModel::Tabulated(TabulatedCost::from_fn(&space, |cell| ExtReal::Finite(c[cell[0]][cell[1]])).unwrap());
        let sol = solve_exact(&model, &space).unwrap();
        prop_assert!((sol.primal_value - common::birkhoff_min(&c)).abs() <= 1e-12);
    }

    #[test]
    fn vertex_test_agrees_with_two_lp_oracle(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let space = common::random_space(&mut r, 3, 3);
        let a = solve_exact(&common::random_table(&mut r, &space), &space).unwrap().plan;
        let b = solve_exact(&common::random_table(&mut r, &space), &space).unwrap().plan;
        let plan = a.mix(&b, 0.5).unwrap();
        prop_assert_eq!(is_vertex(&plan, &space).unwrap().is_extremal, common::two_lp_extremal(&plan, &space, seed));
    }
}
