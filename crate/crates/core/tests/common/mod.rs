#![allow(dead_code)]

use std::collections::BTreeMap;

use mmot_core::{solve_exact, Cell, CostModel, Coupling, DiscreteMarginal, ExtReal, ProductSpace, TabulatedCost};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Axis with points `0..len` and integer weights in `1..=5`, normalized.
pub fn rational_axis(r: &mut impl Rng, len: usize) -> DiscreteMarginal {
    let w: Vec<f64> = (0..len).map(|_| r.gen_range(1..=5) as f64).collect();
    let total: f64 = w.iter().sum();
    let xs: Vec<f64> = (0..len).map(|j| j as f64).collect();
    DiscreteMarginal::from_1d(&xs, w.iter().map(|x| x / total).collect()).unwrap()
}

pub fn random_space(r: &mut impl Rng, n: usize, max_len: usize) -> ProductSpace {
    let axes = (0..n)
        .map(|_| {
            let len = r.gen_range(2..=max_len);
            rational_axis(r, len)
        })
        .collect();
    ProductSpace::new(axes).unwrap()
}

pub fn random_table(r: &mut impl Rng, space: &ProductSpace) -> CostModel {
    let t = TabulatedCost::from_fn(space, |_| ExtReal::Finite(r.gen_range(0.0..1.0))).unwrap();
    CostModel::Tabulated(t)
}

/// Decides extremality without linear algebra: with `f` a random functional on
/// the support, `max f·π - min f·π` over couplings supported in the plan's
/// support vanishes iff that face is the single point `plan`.
pub fn two_lp_extremal(plan: &Coupling, space: &ProductSpace, seed: u64) -> bool {
    let mut r = rng(seed);
    let f: BTreeMap<Cell, f64> = plan.entries().map(|(c, _)| (c.clone(), r.gen_range(-1.0..1.0))).collect();
    let table = |sign: f64| {
        CostModel::Tabulated(
            TabulatedCost::from_fn(space, |c| f.get(c).map_or(ExtReal::PosInf, |v| ExtReal::Finite(sign * v))).unwrap(),
        )
    };
    let lo = solve_exact(&table(1.0), space).unwrap().primal_value;
    let hi = -solve_exact(&table(-1.0), space).unwrap().primal_value;
    hi - lo <= 1e-9
}

/// Minimum of `Σ_j c(j, σ(j)) / N` over permutations σ: the optimal value of a
/// two-marginal problem with uniform marginals of equal size.
pub fn birkhoff_min(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best / cost.len() as f64
}
