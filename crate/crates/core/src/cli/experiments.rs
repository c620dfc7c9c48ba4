//! Named reference experiments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost::CostModel;
use crate::diff::{hessian_offdiag, signature, three_marginal_criterion};
use crate::error::{Error, Result};
use crate::extremal::{check_thm41, find_theta, is_vertex, lemma_trip_check, symmetry_witness, GraphMap, ThetaOutcome};
use crate::instances;
use crate::solver::{duality_gap, solve_exact, SolveResult};
use crate::space::{permutations, Cell, Coupling, DiscreteMarginal, ProductSpace};
use crate::structure::{
    check_c_monotone, decompose_graphs, region_of, splitting_support, twist_multiplicity, TOL_MONO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalFamily {
    /// Uniform weights on an equally spaced grid of `[0,1]`, same on every axis.
    UniformGrid,
    /// Weights `∝ 1 + j/N` on axis 1, seeded permutations of them on the others.
    RampPermuted,
    /// Independent random integer weights per axis.
    RandomWeights,
    /// Symmetric midpoint grid with weight ratio 1:2 between the half-lines.
    MirroredHalfLines,
    /// `[0,1]` twice and `[0,3/2]` with the two-well image weights.
    TwoWell,
    /// Random sample points in `[-1,1]^d`, no marginals.
    RandomCube,
    /// Three uniform points, six-cell symmetric plan.
    SixCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub description: String,
    pub n: usize,
    pub grid_size: usize,
    pub marginal_family: MarginalFamily,
    pub cost: String,
    pub seed: u64,
    pub instances: usize,
    pub samples: usize,
    pub tol_support: f64,
    pub tol_dual: f64,
    pub tol_grad: f64,
}

impl ExperimentSpec {
    fn base(name: &str, description: &str, family: MarginalFamily, cost: &str, grid_size: usize) -> Self {
        ExperimentSpec {
            name: name.into(),
            description: description.into(),
            n: 3,
            grid_size,
            marginal_family: family,
            cost: cost.into(),
            seed: 0,
            instances: 1,
            samples: 0,
            tol_support: 1e-9,
            tol_dual: 1e-9,
            tol_grad: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if experiment_registry().iter().all(|e| e.name != self.name) {
            return Err(Error::arg(format!("unknown experiment '{}'", self.name)));
        }
        for (label, t) in [("tol-support", self.tol_support), ("tol-dual", self.tol_dual), ("tol-grad", self.tol_grad)]
        {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::arg(format!("{label} must be positive, got {t}")));
            }
        }
        if self.grid_size == 0 {
            return Err(Error::arg("grid size must be positive"));
        }
        Ok(())
    }
}

pub fn experiment_registry() -> Vec<ExperimentSpec> {
    use MarginalFamily::*;
    vec![
        ExperimentSpec::base(
            "coulomb-equal",
            "Coulomb cost, three equal uniform marginals: graph count of the optimal plan",
            UniformGrid,
            "coulomb1d",
            15,
        ),
        ExperimentSpec {
            instances: 10,
            seed: 1,
            ..ExperimentSpec::base(
                "coulomb-unequal",
                "Coulomb cost, ramp-weighted unequal marginals: twist multiplicity and region uniqueness",
                RampPermuted,
                "coulomb1d",
                12,
            )
        },
        ExperimentSpec {
            instances: 20,
            seed: 100,
            ..ExperimentSpec::base(
                "coulomb-sharpness-search",
                "Coulomb cost, random unequal marginals: largest observed graph count",
                RandomWeights,
                "coulomb1d",
                8,
            )
        },
        ExperimentSpec::base(
            "xyz-unique",
            "Cost xyz on mirrored half-line marginals: two-graph optimizer and weights",
            MirroredHalfLines,
            "xyz",
            10,
        ),
        ExperimentSpec::base(
            "twowell-extremal",
            "Two-well cost: two-graph optimizer, graph criterion hypotheses, extremality",
            TwoWell,
            "twowell",
            20,
        ),
        ExperimentSpec {
            seed: 7,
            samples: 20,
            ..ExperimentSpec::base(
                "expcos-signature",
                "Off-diagonal Hessian signatures and the three-marginal product test",
                RandomCube,
                "expcos",
                1,
            )
        },
        ExperimentSpec::base(
            "symmetric-witness",
            "Second optimizer from a permutation-invariant plan",
            SixCell,
            "coulomb1d",
            9,
        ),
    ]
}

pub fn find_experiment(name: &str) -> Option<ExperimentSpec> {
    experiment_registry().into_iter().find(|e| e.name == name)
}

/// One named assertion of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value <= bound, format!("{value:e} <= {bound:e}"))
    }
}

pub struct ExperimentOutcome {
    pub checks: Vec<Check>,
    pub result: Value,
    /// The plan a CSV export should list, if the experiment has one.
    pub plan: Option<(ProductSpace, Coupling)>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    match spec.name.as_str() {
        "coulomb-equal" => coulomb_equal(spec),
        "coulomb-unequal" => coulomb_unequal(spec),
        "coulomb-sharpness-search" => coulomb_sharpness(spec),
        "xyz-unique" => xyz_unique(spec),
        "twowell-extremal" => two_well(spec),
        "expcos-signature" => expcos_signature(spec),
        "symmetric-witness" => symmetric_witness(spec),
        other => Err(Error::arg(format!("unknown experiment '{other}'"))),
    }
}

/// Minimum pairwise gap of sampled Coulomb triples. Closer points make one
/// Hessian eigenvalue fall below the relative zero tolerance.
pub const COULOMB_MIN_GAP: f64 = 0.2;

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

fn support_cells(plan: &Coupling, tol: f64) -> Vec<Cell> {
    plan.support(tol).into_iter().cloned().collect()
}

fn monotone_check(model: &CostModel, space: &ProductSpace, plan: &Coupling, tol: f64) -> Result<Check> {
    let v = check_c_monotone(model, space, &support_cells(plan, tol), TOL_MONO)?;
    Ok(Check::new("support is c-monotone", v.is_empty(), format!("{} violations", v.len())))
}

fn solve_with_gap(model: &CostModel, space: &ProductSpace) -> Result<(SolveResult, f64)> {
    let sol = solve_exact(model, space)?;
    let gap = duality_gap(model, space, &sol.plan, &sol.duals)?;
    Ok((sol, gap))
}

fn coulomb_equal(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let model = CostModel::Coulomb1D;
    let space = instances::uniform_grid(spec.grid_size, spec.n)?;
    let (sol, gap) = solve_with_gap(&model, &space)?;
    let dec = decompose_graphs(&sol.plan, &space)?;
    let sym = sol.plan.symmetrize()?;
    let sym_dec = decompose_graphs(&sym, &space)?;
    let split = splitting_support(&model, &space, &sol.duals, spec.tol_support)?;
    let (expected, bound) = (factorial(spec.n - 1), factorial(spec.n) - factorial(spec.n - 1));
    let checks = vec![
        Check::new("graph count equals (n-1)!", dec.k == expected, format!("k = {}, expected {expected}", dec.k)),
        Check::new("graph count within n! - (n-1)!", dec.k <= bound, format!("k = {} <= {bound}", dec.k)),
        Check::at_most("duality gap", gap.abs(), spec.tol_dual),
        monotone_check(&model, &space, &sol.plan, spec.tol_support)?,
    ];
    let result = json!({
        "value": sol.primal_value,
        "dual_value": sol.dual_value,
        "duality_gap": gap,
        "iterations": sol.iterations,
        "graph_count": dec.k,
        "support_size": sol.plan.len(),
        "splitting_set_size": split.cells.len(),
        "symmetrized_graph_count": sym_dec.k,
        "alpha": dec.alpha_table(),
    });
    Ok(ExperimentOutcome { checks, result, plan: Some((space, sol.plan)) })
}

/// Number of cells of one gradient cluster falling into the same order region, maximised.
fn region_overlap(space: &ProductSpace, cells: &[Cell]) -> Result<usize> {
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for c in cells {
        let x: Vec<f64> = space.coords(c).iter().map(|p| p[0]).collect();
        *seen.entry(region_of(&x)?).or_insert(0) += 1;
    }
    Ok(seen.into_values().max().unwrap_or(0))
}

fn coulomb_twist_instances(
    spec: &ExperimentSpec,
    build: impl Fn(usize, u64) -> Result<ProductSpace>,
) -> Result<(Vec<Value>, usize, usize, usize, f64)> {
    let model = CostModel::Coulomb1D;
    let (mut rows, mut max_mult, mut max_region, mut max_k, mut max_gap) = (Vec::new(), 0, 0, 0, 0.0f64);
    for i in 0..spec.instances {
        let seed = spec.seed + i as u64;
        let space = build(spec.grid_size, seed)?;
        let (sol, gap) = solve_with_gap(&model, &space)?;
        let split = splitting_support(&model, &space, &sol.duals, spec.tol_support)?;
        let twist = twist_multiplicity(&model, &split, &space, spec.tol_grad)?;
        let region = twist.clusters.iter().map(|c| region_overlap(&space, &c.cells)).collect::<Result<Vec<_>>>()?;
        let region = region.into_iter().max().unwrap_or(0);
        let k = decompose_graphs(&sol.plan, &space)?.k;
        max_mult = max_mult.max(twist.max_multiplicity);
        max_region = max_region.max(region);
        max_k = max_k.max(k);
        max_gap = max_gap.max(gap.abs());
        rows.push(json!({
            "seed": seed,
            "value": sol.primal_value,
            "duality_gap": gap,
            "graph_count": k,
            "splitting_set_size": split.cells.len(),
            "max_multiplicity": twist.max_multiplicity,
            "max_cells_per_region": region,
        }));
    }
    Ok((rows, max_mult, max_region, max_k, max_gap))
}

fn coulomb_unequal(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let (rows, mult, region, k, gap) = coulomb_twist_instances(spec, instances::ramp_permuted)?;
    let bound = factorial(spec.n) - factorial(spec.n - 1);
    let checks = vec![
        Check::new("twist multiplicity within n! - (n-1)!", mult <= bound, format!("{mult} <= {bound}")),
        Check::new("each cluster meets each order region at most once", region <= 1, format!("max {region}")),
        Check::at_most("duality gap", gap, spec.tol_dual),
    ];
    let result = json!({ "instances": rows, "max_multiplicity": mult, "max_graph_count": k });
    Ok(ExperimentOutcome { checks, result, plan: None })
}

fn coulomb_sharpness(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let (rows, mult, region, k, gap) = coulomb_twist_instances(spec, instances::random_weights)?;
    let bound = factorial(spec.n) - factorial(spec.n - 1);
    let checks = vec![
        Check::new("twist multiplicity within n! - (n-1)!", mult <= bound, format!("{mult} <= {bound}")),
        Check::new("each cluster meets each order region at most once", region <= 1, format!("max {region}")),
        Check::at_most("duality gap", gap, spec.tol_dual),
    ];
    let result = json!({ "instances": rows, "max_observed_graph_count": k, "max_multiplicity": mult });
    Ok(ExperimentOutcome { checks, result, plan: None })
}

fn xyz_unique(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let model = CostModel::ProductXYZ;
    let m = spec.grid_size;
    let space = instances::example42(m)?;
    let (sol, gap) = solve_with_gap(&model, &space)?;
    let mu = space.axis(0);
    let mirror = |j: usize| 2 * m - 1 - j;
    // G₁(x) = (-x, |x|), G₂(x) = (x, -|x|)
    let graphs = |j: usize| -> [Cell; 2] {
        if j >= m {
            [vec![j, mirror(j), j], vec![j, j, mirror(j)]]
        } else {
            [vec![j, mirror(j), mirror(j)], vec![j, j, j]]
        }
    };
    let (mut alpha_err, mut on_graphs, mut rows) = (0.0f64, 0.0, Vec::new());
    for j in 0..2 * m {
        let [g1, g2] = graphs(j);
        let w = mu.weight(j);
        let (a1, a2) = (sol.plan.mass(&g1) / w, sol.plan.mass(&g2) / w);
        let expected = if j >= m { (0.5, 0.5) } else { (1.0, 0.0) };
        alpha_err = alpha_err.max((a1 - expected.0).abs()).max((a2 - expected.1).abs());
        on_graphs += sol.plan.mass(&g1) + sol.plan.mass(&g2);
        rows.push(json!({ "x": mu.point(j)[0], "alpha": [a1, a2] }));
    }
    let bound: f64 = (0..2 * m).map(|j| -mu.weight(j) * mu.point(j)[0].abs().powi(3)).sum();
    let k = decompose_graphs(&sol.plan, &space)?.k;
    let checks = vec![
        Check::at_most("mass off the two graphs", (1.0 - on_graphs).abs(), 1e-9),
        Check::at_most("graph weights", alpha_err, 1e-9),
        Check::at_most("value equals -sum mu |x|^3", (sol.primal_value - bound).abs(), 1e-9),
        Check::new("two graphs", k == 2, format!("k = {k}")),
        Check::at_most("duality gap", gap.abs(), spec.tol_dual),
        monotone_check(&model, &space, &sol.plan, spec.tol_support)?,
    ];
    let result = json!({
        "value": sol.primal_value,
        "closed_form_value": bound,
        "duality_gap": gap,
        "graph_count": k,
        "alpha": rows,
    });
    Ok(ExperimentOutcome { checks, result, plan: Some((space, sol.plan)) })
}

fn two_well(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let model = CostModel::TwoWell;
    let s = spec.grid_size;
    let space = instances::two_well(s)?;
    let (sol, gap) = solve_with_gap(&model, &space)?;
    let on_graphs: f64 = (0..=s).map(|j| sol.plan.mass(&[j, j, j]) + sol.plan.mass(&[j, j, j + s / 2])).sum();
    let maps = [GraphMap::from_fn(s + 1, |x| Some((x, x))), GraphMap::from_fn(s + 1, |x| Some((x, x + s / 2)))];
    let theta: Vec<f64> = space.axis(2).points().map(|z| -z[0]).collect();
    let given = check_thm41(&space, &maps, Some(&theta))?;
    let searched = find_theta(&maps, space.axis(2).len());
    let searched_ok = matches!(&searched, ThetaOutcome::Found(_));
    let vertex = is_vertex(&sol.plan, &space)?;
    let composed = lemma_trip_check(&sol.plan, &space)?;
    let checks = vec![
        Check::at_most("mass off (x,x,x) and (x,x,x+1/2)", (1.0 - on_graphs).abs(), 1e-9),
        Check::new("graph criterion holds with theta(z) = -z", given.all_hold(), given.failures.join("; ")),
        Check::new("theta search succeeds", searched_ok, format!("{searched:?}")),
        Check::new("optimal plan is extremal", vertex.is_extremal, ""),
        Check::new("composed extremality check", composed, ""),
        Check::at_most("optimal value", sol.primal_value.abs(), 1e-12),
        Check::at_most("duality gap", gap.abs(), spec.tol_dual),
        monotone_check(&model, &space, &sol.plan, spec.tol_support)?,
    ];
    let result = json!({
        "value": sol.primal_value,
        "duality_gap": gap,
        "support_size": sol.plan.len(),
        "hypotheses": [given.hypothesis_i, given.hypothesis_ii, given.hypothesis_iii],
        "theta_found": match searched { ThetaOutcome::Found(t) => Some(t), ThetaOutcome::Cycle(_) => None },
    });
    Ok(ExperimentOutcome { checks, result, plan: Some((space, sol.plan)) })
}

/// Signature triples of the off-diagonal Hessian at each sample.
pub fn sample_signatures(model: &CostModel, samples: &[Vec<Vec<f64>>]) -> Result<Vec<(usize, usize, usize)>> {
    samples
        .iter()
        .map(|pts| {
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            Ok(signature(&hessian_offdiag(model, &refs)?.assembled, None)?.triple())
        })
        .collect()
}

fn expcos_signature(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let pts = instances::cube_samples(spec.seed, spec.samples, 3, 2);
    let sigs = sample_signatures(&CostModel::ExpCos, &pts)?;
    let mut crit_dev = 0.0f64;
    let mut all_negative = true;
    for p in &pts {
        let refs: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        let c = three_marginal_criterion(&CostModel::ExpCos, &refs)?;
        let e = (2.0 * p[0][0]).exp();
        let target = -nalgebra::DMatrix::<f64>::identity(2, 2) * e;
        crit_dev = crit_dev.max((c.product - target).amax());
        all_negative &= c.negative_definite;
    }
    let coulomb_pts = instances::separated_samples(spec.seed, spec.samples, 3, COULOMB_MIN_GAP);
    let coulomb = sample_signatures(&CostModel::Coulomb1D, &coulomb_pts)?;
    let count = |v: &[(usize, usize, usize)], t| v.iter().filter(|&&s| s == t).count();
    let checks = vec![
        Check::new(
            "expcos signature (4,2,0)",
            count(&sigs, (4, 2, 0)) == sigs.len(),
            format!("{}/{}", count(&sigs, (4, 2, 0)), sigs.len()),
        ),
        Check::at_most("product equals -exp(2 x1) I", crit_dev, 1e-8),
        Check::new("product negative definite", all_negative, ""),
        Check::new(
            "coulomb signature (2,1,0)",
            count(&coulomb, (2, 1, 0)) == coulomb.len(),
            format!("{}/{}", count(&coulomb, (2, 1, 0)), coulomb.len()),
        ),
    ];
    let fmt = |v: &[(usize, usize, usize)]| v.iter().map(|(a, b, c)| format!("({a},{b},{c})")).collect::<Vec<_>>();
    let result = json!({
        "expcos_signatures": fmt(&sigs),
        "coulomb_signatures": fmt(&coulomb),
        "max_product_deviation": crit_dev,
    });
    Ok(ExperimentOutcome { checks, result, plan: None })
}

/// The uniform plan on the six permutations of `(0, 1, 2)`.
pub fn six_cell_plan() -> Coupling {
    let entries = permutations(3).into_iter().map(|p| (p, 1.0 / 6.0));
    Coupling::new(vec![3, 3, 3], entries).expect("six-cell plan")
}

fn symmetric_witness(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let model = CostModel::Coulomb1D;
    let space = ProductSpace::repeated(DiscreteMarginal::uniform_1d(&[0.0, 1.0, 2.0])?, 3)?;
    let plan = six_cell_plan();
    let w = symmetry_witness(&plan, &space, [&[0], &[1], &[2]], &model)?;
    let cyclic = [vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]];
    let mass_err = permutations(3)
        .into_iter()
        .map(|p| {
            let target = if cyclic.contains(&p) { 5.0 / 36.0 } else { 7.0 / 36.0 };
            (w.coupling.mass(&p) - target).abs()
        })
        .fold(0.0, f64::max);

    // the same construction on the symmetrized optimum of an equal-marginal Coulomb grid
    let g = spec.grid_size;
    let big = instances::uniform_grid(g, 3)?;
    let (sol, _) = solve_with_gap(&model, &big)?;
    let sym = sol.plan.symmetrize()?;
    let thirds: Vec<Vec<usize>> = (0..3).map(|i| (i * g / 3..(i + 1) * g / 3).collect()).collect();
    let wb = symmetry_witness(&sym, &big, [&thirds[0], &thirds[1], &thirds[2]], &model)?;
    let wb_gap = duality_gap(&model, &big, &wb.coupling, &sol.duals)?;

    let checks = vec![
        Check::at_most("cell masses 7/36 and 5/36", mass_err, 1e-15),
        Check::at_most("marginals preserved", space.marginal_deviation(&w.coupling), 1e-12),
        Check::at_most("cost preserved", (w.cost_after - w.cost_before).abs(), 1e-12),
        Check::new("distance from the plan", w.tv_distance >= 1.0 / 18.0 - 1e-12, format!("{:e}", w.tv_distance)),
        Check::at_most("grid witness marginals", big.marginal_deviation(&wb.coupling), 1e-12),
        Check::at_most(
            "grid witness cost",
            (wb.cost_after - wb.cost_before).abs() / (1.0 + wb.cost_before.abs()),
            1e-9,
        ),
        Check::at_most("grid witness optimality gap", wb_gap.abs(), spec.tol_dual),
        Check::new("grid witness differs", wb.tv_distance > 1e-12, format!("{:e}", wb.tv_distance)),
    ];
    let result = json!({
        "six_cell": {
            "masses": w.coupling.entries().map(|(c, m)| json!({ "idx": c, "mass": m })).collect::<Vec<_>>(),
            "cost": w.cost_after,
            "tv_distance": w.tv_distance,
        },
        "grid": { "size": g, "cost": wb.cost_after, "tv_distance": wb.tv_distance },
    });
    Ok(ExperimentOutcome { checks, result, plan: Some((space, w.coupling)) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_distinct_and_valid() {
        let reg = experiment_registry();
        assert!(reg.len() >= 7);
        let names: std::collections::BTreeSet<_> = reg.iter().map(|e| e.name.clone()).collect();
        assert_eq!(names.len(), reg.len());
        for e in &reg {
            e.validate().unwrap();
            let text = serde_json::to_string(e).unwrap();
            assert_eq!(&serde_json::from_str::<ExperimentSpec>(&text).unwrap(), e);
        }
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let mut e = find_experiment("xyz-unique").unwrap();
        e.tol_grad = 0.0;
        assert!(e.validate().is_err());
    }
}
