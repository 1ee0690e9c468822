mod common;

use common::*;
use kmlab::dataset::Dataset;
use kmlab::seeding::{self, SeedMethod, SeedSpec};
use proptest::prelude::*;

/// O(n³) single linkage: recompute every inter-component distance from the
/// points at each merge.
fn naive_single_linkage(points: &[Vec<f64>], target: usize) -> Vec<usize> {
    let n = points.len();
    let mut comp: Vec<usize> = (0..n).collect();
    let mut live: Vec<usize> = (0..n).collect();
    while live.len() > target {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ia, &a) in live.iter().enumerate() {
            for &b in &live[ia + 1..] {
                let mut d = f64::INFINITY;
                for i in (0..n).filter(|&i| comp[i] == a) {
                    for j in (0..n).filter(|&j| comp[j] == b) {
                        d = d.min(sq(&points[i], &points[j]));
                    }
                }
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.unwrap();
        comp.iter_mut().filter(|c| **c == b).for_each(|c| *c = a);
        live.retain(|&x| x != b);
    }
    comp.iter()
        .map(|c| live.iter().position(|l| l == c).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn linkage_matches_naive_oracle(
        pts in proptest::collection::vec(proptest::collection::vec(0i32..6, 2), 1..25),
        target in 1usize..6,
    ) {
        // integer grid points produce many ties
        let points: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let mut distinct = points.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        let target = target.min(distinct.len());
        let lib = seeding::single_linkage(&points, target).unwrap();
        prop_assert_eq!(lib, naive_single_linkage(&points, target));
    }

    #[test]
    fn buckshot_centers_lie_in_the_data_hull(
        rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 5..40),
        seed in any::<u64>(),
    ) {
        let ds = Dataset::from_rows(rows.clone()).unwrap();
        let spec = SeedSpec { method: SeedMethod::Buckshot { m0: 12 }, k: 2, seed };
        if let Ok(c) = spec.run(&ds) {
            for j in 0..2 {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                for r in 0..2 {
                    prop_assert!(c.center(r)[j] >= lo - 1e-12 && c.center(r)[j] <= hi + 1e-12);
                }
            }
            prop_assert_eq!(spec.run(&ds).unwrap(), c);
        }
    }
}

#[test]
fn buckshot_recovers_separated_clusters() {
    let p = small_planted(9);
    let (cstar, astar) = planted_optimum(&p);
    for seed in 0..50 {
        let c0 = SeedSpec {
            method: SeedMethod::Buckshot { m0: 40 },
            k: 3,
            seed,
        }
        .run(&p.dataset)
        .unwrap();
        let d = kmlab::kmeans::delta(&c0, &cstar, astar.sizes(), kmlab::kmeans::DeltaMode::Exact)
            .unwrap();
        // every seed center lands inside its own cluster's unit ball
        assert!(d.value <= 300.0, "seed {seed}: {}", d.value);
    }
}

#[test]
fn random_seeds_are_data_points_without_repeats() {
    let ds = uniform_rows(30, 3, 1.0, 4);
    let c = seeding::seed_random(&ds, 30, &mut rng(1)).unwrap();
    let mut idx: Vec<usize> = c
        .centers()
        .iter()
        .map(|cr| {
            ds.points()
                .iter()
                .position(|p| &p.to_dense(3) == cr)
                .unwrap()
        })
        .collect();
    idx.sort();
    idx.dedup();
    assert_eq!(idx.len(), 30);
}
