//! Grids and marginals for the reference experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{DiscreteMarginal, ProductSpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `size` equally spaced points on `[0, 1]`.
pub fn unit_grid(size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..size).map(|j| j as f64 / (size - 1) as f64).collect(),
    }
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// `n` copies of the uniform measure on `unit_grid(size)`.
pub fn uniform_grid(size: usize, n: usize) -> Result<ProductSpace> {
    ProductSpace::repeated(DiscreteMarginal::uniform_1d(&unit_grid(size))?, n)
}

/// Three marginals on `unit_grid(size)`: the first with weights `∝ 1 + j/size`,
/// the other two with those weights shuffled by `seed`.
pub fn ramp_permuted(size: usize, seed: u64) -> Result<ProductSpace> {
    let xs = unit_grid(size);
    let base: Vec<f64> = (0..size).map(|j| 1.0 + j as f64 / size as f64).collect();
    let mut r = rng(seed);
    let mut axes = vec![DiscreteMarginal::from_1d(&xs, normalized(&base))?];
    for _ in 1..3 {
        let mut w = base.clone();
        w.shuffle(&mut r);
        axes.push(DiscreteMarginal::from_1d(&xs, normalized(&w))?);
    }
    ProductSpace::new(axes)
}

/// Three marginals on `unit_grid(size)` with independent integer weights in `1..=9`.
pub fn random_weights(size: usize, seed: u64) -> Result<ProductSpace> {
    let xs = unit_grid(size);
    let mut r = rng(seed);
    let axes = (0..3)
        .map(|_| {
            let w: Vec<f64> = (0..size).map(|_| r.gen_range(1..=9) as f64).collect();
            DiscreteMarginal::from_1d(&xs, normalized(&w))
        })
        .collect::<Result<Vec<_>>>()?;
    ProductSpace::new(axes)
}

/// Midpoint discretization of `(1/3)[L on [-1,0] + 2 L on [0,1]]` with `m`
/// points per sign, repeated on three axes. Points are sorted, so index `j`
/// and `2m-1-j` are mirror images.
pub fn example42(m: usize) -> Result<ProductSpace> {
    if m == 0 {
        return Err(Error::arg("need at least one point per sign"));
    }
    let mf = m as f64;
    let mut xs: Vec<f64> = (1..=m).rev().map(|j| -(j as f64 - 0.5) / mf).collect();
    xs.extend((1..=m).map(|j| (j as f64 - 0.5) / mf));
    let w: Vec<f64> = xs.iter().map(|&x| if x < 0.0 { 1.0 / (3.0 * mf) } else { 2.0 / (3.0 * mf) }).collect();
    ProductSpace::repeated(DiscreteMarginal::from_1d(&xs, w)?, 3)
}

/// Grid for the two-well cost: `x, y ∈ {j/s}` on `[0,1]` with uniform
/// weights, and `z ∈ {k/s : k ≤ 3s/2}` carrying the image of `x` under
/// `x ↦ x` and `x ↦ x + 1/2` with equal shares.
pub fn two_well(s: usize) -> Result<ProductSpace> {
    if s < 2 || !s.is_multiple_of(2) {
        return Err(Error::arg(format!("two-well grid needs an even number of steps, got {s}")));
    }
    let sf = s as f64;
    let xs: Vec<f64> = (0..=s).map(|j| j as f64 / sf).collect();
    let zs: Vec<f64> = (0..=s + s / 2).map(|k| k as f64 / sf).collect();
    let half = s / 2;
    let zw: Vec<f64> = (0..zs.len()).map(|k| if (half..=s).contains(&k) { 2.0 } else { 1.0 }).collect();
    let uniform = DiscreteMarginal::uniform_1d(&xs)?;
    ProductSpace::new(vec![uniform.clone(), uniform, DiscreteMarginal::from_1d(&zs, normalized(&zw))?])
}

/// `count` points of `[-1,1]^dim` per sample, `samples` times.
pub fn cube_samples(seed: u64, samples: usize, count: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng(seed);
    (0..samples).map(|_| (0..count).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()).collect()
}

/// Like [`cube_samples`] in one dimension, redrawing tuples whose entries
/// come closer than `min_gap`.
pub fn separated_samples(seed: u64, samples: usize, count: usize, min_gap: f64) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let xs: Vec<f64> = (0..count).map(|_| r.gen_range(-1.0..1.0)).collect();
        let ok = (0..count).all(|i| (i + 1..count).all(|j| (xs[i] - xs[j]).abs() >= min_gap));
        if ok {
            out.push(xs.into_iter().map(|x| vec![x]).collect());
        }
    }
    out
}
