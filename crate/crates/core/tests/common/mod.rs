#![allow(dead_code)]

use kmlab::dataset::{Dataset, Planted, SyntheticSpec};
use kmlab::kmeans::{self, Centroids, Clustering};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// k = 3, 1000 points per cluster in unit balls, d = 50, centers pairwise 30000 apart.
pub fn large_planted_spec() -> SyntheticSpec {
    let d = 50;
    let s = 30000.0 / 2f64.sqrt();
    let centers = (0..3)
        .map(|r| {
            let mut c = vec![0.0; d];
            c[r] = s;
            c
        })
        .collect();
    SyntheticSpec {
        centers,
        sizes: vec![1000; 3],
        radius: 1.0,
        seed: 20240601,
    }
}

pub fn large_planted() -> Planted {
    large_planted_spec().generate().unwrap()
}

/// k = 3, 100 points per cluster, d = 2, centers 10 apart.
pub fn small_planted(seed: u64) -> Planted {
    SyntheticSpec {
        centers: vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![5.0, 8.66]],
        sizes: vec![100; 3],
        radius: 1.0,
        seed,
    }
    .generate()
    .unwrap()
}

pub fn uniform_rows(n: usize, d: usize, scale: f64, seed: u64) -> Dataset {
    let mut g = rng(seed);
    Dataset::from_rows(
        (0..n)
            .map(|_| (0..d).map(|_| scale * g.random::<f64>()).collect())
            .collect(),
    )
    .unwrap()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Σ_i ‖x_i − c_{a(i)}‖², computed point by point from dense copies.
pub fn brute_cost(ds: &Dataset, c: &[Vec<f64>], labels: &[usize]) -> f64 {
    ds.points()
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq(&p.to_dense(ds.dim()), &c[l]))
        .sum()
}

/// Σ_i min_r ‖x_i − c_r‖² over all centers.
pub fn brute_voronoi_cost(ds: &Dataset, c: &[Vec<f64>]) -> f64 {
    ds.points()
        .iter()
        .map(|p| {
            let x = p.to_dense(ds.dim());
            c.iter().map(|cr| sq(&x, cr)).fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Every permutation of 0..k.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// min over bijections π of Σ_r w_r ‖cp_π(r) − c_r‖², by enumeration.
pub fn brute_delta(cp: &[Vec<f64>], c: &[Vec<f64>], w: &[usize]) -> f64 {
    permutations(c.len())
        .iter()
        .map(|pi| {
            (0..c.len())
                .map(|r| w[r] as f64 * sq(&cp[pi[r]], &c[r]))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Means of the planted clusters and the clustering itself.
pub fn planted_optimum(p: &Planted) -> (Centroids, Clustering) {
    let c = kmeans::means(&p.dataset, &p.clustering).unwrap();
    (c, p.clustering.clone())
}
