//! Initial centers: uniform random data points, or Buckshot
//! (single-linkage on a small uniform sample, component means as seeds).

use rand::seq::index;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::Centroids;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMethod {
    RandomPoints,
    /// Sample size m0 >= k.
    Buckshot {
        m0: usize,
    },
}

impl std::fmt::Display for SeedMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedMethod::RandomPoints => write!(f, "random"),
            SeedMethod::Buckshot { m0 } => write!(f, "buckshot(m0={m0})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub method: SeedMethod,
    pub k: usize,
    pub seed: u64,
}

impl SeedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        if let SeedMethod::Buckshot { m0 } = self.method {
            if m0 < self.k {
                return Err(Error::invalid(
                    "m0",
                    format!("m0={m0} must be >= k={}", self.k),
                ));
            }
        }
        Ok(())
    }

    pub fn run(&self, ds: &Dataset) -> Result<Centroids> {
        self.validate()?;
        let mut rng = crate::rng::rng_from_seed(self.seed);
        match self.method {
            SeedMethod::RandomPoints => seed_random(ds, self.k, &mut rng),
            SeedMethod::Buckshot { m0 } => seed_buckshot(ds, self.k, m0, &mut rng),
        }
    }
}

/// `k` distinct data points chosen uniformly without replacement.
pub fn seed_random<R: Rng + ?Sized>(ds: &Dataset, k: usize, rng: &mut R) -> Result<Centroids> {
    if k == 0 || k > ds.len() {
        return Err(Error::invalid(
            "k",
            format!("need 1 <= k <= n, got k={k}, n={}", ds.len()),
        ));
    }
    let picks = index::sample(rng, ds.len(), k);
    let centers = picks
        .iter()
        .map(|i| ds.point(i).to_dense(ds.dim()))
        .collect();
    Centroids::new(centers)
}

/// Buckshot: draw `m0` points with replacement, merge by single linkage down to
/// `k` components and return the component means.
pub fn seed_buckshot<R: Rng + ?Sized>(
    ds: &Dataset,
    k: usize,
    m0: usize,
    rng: &mut R,
) -> Result<Centroids> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if m0 < k {
        return Err(Error::invalid("m0", format!("m0={m0} must be >= k={k}")));
    }
    let sample: Vec<Vec<f64>> = (0..m0)
        .map(|_| ds.point(rng.random_range(0..ds.len())).to_dense(ds.dim()))
        .collect();
    let labels = single_linkage(&sample, k)?;
    let mut sums = vec![vec![0.0; ds.dim()]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in sample.iter().zip(&labels) {
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        counts[l] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Centroids::new(sums)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

/// Single-linkage agglomeration down to `target` components.
///
/// A component is identified by its smallest point index. Each step merges the
/// pair of components at minimum point-to-point distance; ties go to the
/// lexicographically smallest (id, id) pair. Returns labels `0..target`,
/// numbered by component id.
pub fn single_linkage(points: &[Vec<f64>], target: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if target == 0 {
        return Err(Error::invalid("target_components", "must be >= 1"));
    }
    let distinct = distinct_count(points);
    if target > distinct {
        return Err(Error::TooFewDistinct {
            distinct,
            k: target,
        });
    }
    // dist[a][b] for live component ids a < b, updated by the single-linkage
    // (min) rule; the merged component keeps the smaller id.
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| sq_dist(&points[a], &points[b])).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut components = n;
    while components > target {
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in a + 1..n {
                if alive[b] && dist[a][b] < best_d {
                    best_d = dist[a][b];
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        for c in 0..n {
            if alive[c] && c != a && c != b {
                let d = dist[a][c].min(dist[b][c]);
                dist[a][c] = d;
                dist[c][a] = d;
            }
        }
        alive[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        components -= 1;
    }
    let mut relabel = vec![usize::MAX; n];
    let mut next = 0;
    for id in 0..n {
        if alive[id] {
            relabel[id] = next;
            next += 1;
        }
    }
    Ok(owner.into_iter().map(|o| relabel[o]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn linkage_nearest_pair_first() {
        assert_eq!(
            single_linkage(&line(&[0.0, 1.0, 10.0]), 2).unwrap(),
            vec![0, 0, 1]
        );
    }

    #[test]
    fn linkage_target_n_is_singletons() {
        assert_eq!(
            single_linkage(&line(&[5.0, 1.0, 3.0]), 3).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn linkage_tie_breaks_on_ids() {
        // 0-1 and 1-2 both at distance 1; the (0,1) pair wins.
        assert_eq!(
            single_linkage(&line(&[0.0, 1.0, 2.0]), 2).unwrap(),
            vec![0, 0, 1]
        );
    }

    #[test]
    fn linkage_needs_distinct_points() {
        let err = single_linkage(&line(&[1.0, 1.0, 1.0]), 2).unwrap_err();
        assert!(matches!(err, Error::TooFewDistinct { distinct: 1, k: 2 }));
    }

    #[test]
    fn random_seeds() {
        let ds = Dataset::from_rows(line(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        let c = seed_random(&ds, 4, &mut rng_from_seed(1)).unwrap();
        let mut xs: Vec<f64> = c.centers().iter().map(|v| v[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![1.0, 2.0, 3.0, 4.0]);
        let a = seed_random(&ds, 2, &mut rng_from_seed(9)).unwrap();
        let b = seed_random(&ds, 2, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        let one = seed_random(&ds, 1, &mut rng_from_seed(3)).unwrap();
        assert!([1.0, 2.0, 3.0, 4.0].contains(&one.center(0)[0]));
        assert!(seed_random(&ds, 5, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn buckshot_k1_is_sample_mean() {
        let ds = Dataset::from_rows(line(&[0.0, 4.0])).unwrap();
        let mut rng = rng_from_seed(5);
        let c = seed_buckshot(&ds, 1, 8, &mut rng).unwrap();
        // replay the same draws
        let mut rng = rng_from_seed(5);
        let draws: Vec<f64> = (0..8)
            .map(|_| [0.0, 4.0][rng.random_range(0..2usize)])
            .collect();
        let mean = draws.iter().sum::<f64>() / 8.0;
        assert_eq!(c.center(0), &[mean]);
    }

    #[test]
    fn buckshot_m0_equals_k() {
        let ds = Dataset::from_rows(line(&[0.0, 10.0, 20.0, 30.0])).unwrap();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            match seed_buckshot(&ds, 3, 3, &mut rng) {
                Ok(c) => {
                    let mut rng = rng_from_seed(seed);
                    let mut draws: Vec<f64> = (0..3)
                        .map(|_| ds.point(rng.random_range(0..4usize)).get(0))
                        .collect();
                    let mut got: Vec<f64> = c.centers().iter().map(|v| v[0]).collect();
                    draws.sort_by(f64::total_cmp);
                    got.sort_by(f64::total_cmp);
                    assert_eq!(got, draws);
                }
                Err(e) => assert!(matches!(e, Error::TooFewDistinct { .. })),
            }
        }
    }

    #[test]
    fn seed_spec_validation() {
        let spec = SeedSpec {
            method: SeedMethod::Buckshot { m0: 2 },
            k: 3,
            seed: 0,
        };
        assert!(spec.validate().is_err());
    }
}
