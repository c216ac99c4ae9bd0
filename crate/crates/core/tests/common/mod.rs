//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use crl_core::{ClassRepresentative, CrModel, ModelMetadata, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exactly rounded sum of `xs` (Shewchuk's partials, as in Python's `math.fsum`).
pub fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // final pass with the half-way correction
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Component-wise mean computed with exact summation.
pub fn exact_mean(rows: &[Vec<f32>]) -> Vec<f64> {
    let dim = rows[0].len();
    (0..dim)
        .map(|d| fsum(rows.iter().map(|r| f64::from(r[d]))) / rows.len() as f64)
        .collect()
}

/// Cosine with sequential 64-bit loops, written out longhand.
pub fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for i in 0..a.len() {
        ab += f64::from(a[i]) * f64::from(b[i]);
    }
    for x in a {
        aa += f64::from(*x) * f64::from(*x);
    }
    for y in b {
        bb += f64::from(*y) * f64::from(*y);
    }
    let c = ab / (aa.sqrt() * bb.sqrt());
    let c = c.clamp(-1.0, 1.0);
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

/// Full ranking by repeated selection of the best remaining class: highest
/// score wins, equal scores go to the lexicographically smaller name.
pub fn oracle_ranking(model: &CrModel, query: &[f32]) -> Vec<(String, f64)> {
    let mut pool: Vec<(String, f64)> = model
        .crs()
        .iter()
        .map(|cr| (cr.name().to_string(), oracle_cosine(cr.vector(), query)))
        .collect();
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (ref n, s) = pool[i];
            let (ref bn, bs) = pool[best];
            if s > bs || (s == bs && n < bn) {
                best = i;
            }
        }
        out.push(pool.swap_remove(best));
    }
    out
}

/// Two-sample KS statistic from the pooled sample: at every pooled value,
/// count how much of each sample lies at or below it.
pub fn oracle_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for &x in sa.iter().chain(sb.iter()) {
        let fa = sa.partition_point(|&v| v <= x) as f64 / sa.len() as f64;
        let fb = sb.partition_point(|&v| v <= x) as f64 / sb.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

/// Random model whose vectors are drawn from a small pool, so that exact
/// score ties show up often when `dup_rate` is non-zero.
pub fn random_model(rng: &mut ChaCha8Rng, classes: usize, dim: usize, dup_rate: f64) -> CrModel {
    let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let v = if !vectors.is_empty() && rng.random_bool(dup_rate) {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else {
            random_vec(rng, dim)
        };
        vectors.push(v);
    }
    // shuffled names so ties are not resolved by insertion order
    let mut ids: Vec<usize> = (0..classes).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let crs = vectors
        .into_iter()
        .zip(ids)
        .map(|(v, id)| {
            ClassRepresentative::from_parts(format!("k{id:03}"), rng.random_range(1..50), v)
                .unwrap()
        })
        .collect();
    CrModel::new(Shape::flat(dim), crs, ModelMetadata::default()).unwrap()
}
