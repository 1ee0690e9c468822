//! Voronoi assignment, the mean map, k-means cost and the centroidal distance.
//!
//! Everything here is a pure function of its inputs. Per-point work may run on
//! the rayon pool, but per-cluster sums are always accumulated in point-index
//! order, so results are bit-identical for any worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{render_row, Dataset, Point};
use crate::error::{Error, Result};
use crate::matching;

/// Below this many items the per-point loops stay sequential.
pub(crate) const PAR_THRESHOLD: usize = 2048;

/// `k` centers in R^d, each flagged active or degenerate.
///
/// Degenerate centers own no points; solvers never move them.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    centers: Vec<Vec<f64>>,
    active: Vec<bool>,
    sq_norms: Vec<f64>,
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Centroids {
    /// All centers active.
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self> {
        let k = centers.len();
        Centroids::with_active(centers, vec![true; k])
    }

    pub fn with_active(centers: Vec<Vec<f64>>, active: Vec<bool>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("centroids", "k must be >= 1"));
        }
        if active.len() != centers.len() {
            return Err(Error::invalid("centroids", "one active flag per center"));
        }
        let d = centers[0].len();
        if d == 0 {
            return Err(Error::invalid("centroids", "dimension must be positive"));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.len(),
            });
        }
        let sq_norms = centers.iter().map(|c| sq_norm(c)).collect();
        Ok(Centroids {
            centers,
            active,
            sq_norms,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn center(&self, r: usize) -> &[f64] {
        &self.centers[r]
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn sq_norm(&self, r: usize) -> f64 {
        self.sq_norms[r]
    }

    pub fn is_active(&self, r: usize) -> bool {
        self.active[r]
    }

    pub fn active_flags(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.k()).filter(|&r| self.active[r]).collect()
    }

    pub fn set_center(&mut self, r: usize, v: Vec<f64>) {
        debug_assert_eq!(v.len(), self.dim());
        self.sq_norms[r] = sq_norm(&v);
        self.centers[r] = v;
    }

    pub fn set_active(&mut self, r: usize, active: bool) {
        self.active[r] = active;
    }

    /// Digest of positions and flags.
    pub fn digest(&self) -> u64 {
        let mut bytes = Vec::new();
        for (c, a) in self.centers.iter().zip(&self.active) {
            for v in c {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            bytes.push(*a as u8);
        }
        crate::rng::fnv1a(&bytes)
    }

    /// Dense CSV, one center per line, then `# active=1,0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.centers {
            out.push_str(&render_row(c));
            out.push('\n');
        }
        let flags: Vec<&str> = self
            .active
            .iter()
            .map(|a| if *a { "1" } else { "0" })
            .collect();
        let _ = writeln!(out, "# active={}", flags.join(","));
        out
    }

    /// Inverse of [`Centroids::to_csv`]. Without an `# active=` line every center is active.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut active = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(flags) = rest.trim().strip_prefix("active=") {
                    let parsed = flags
                        .split(',')
                        .map(|f| match f.trim() {
                            "1" => Ok(true),
                            "0" => Ok(false),
                            other => Err(Error::Parse {
                                line: lineno + 1,
                                msg: format!("bad active flag '{other}'"),
                            }),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    active = Some(parsed);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad value '{}'", t.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let k = rows.len();
        Centroids::with_active(rows, active.unwrap_or_else(|| vec![true; k]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Centroids::from_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A partition of point indices into at most `k` labelled clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Clustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("clustering", "k must be >= 1"));
        }
        let mut sizes = vec![0; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::invalid(
                    "clustering",
                    format!("cluster id {l} out of range for k={k}"),
                ));
            }
            sizes[l] += 1;
        }
        Ok(Clustering { labels, sizes })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn nonempty(&self) -> usize {
        self.sizes.iter().filter(|s| **s > 0).count()
    }

    pub fn members(&self, r: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == r)
            .collect()
    }

    /// Labels renumbered by first appearance; equal iff the partitions are equal.
    pub fn canonical(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.k()];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }

    /// Partition equality up to relabelling.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        self.labels.len() == other.labels.len() && self.canonical() == other.canonical()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * 3);
        for l in &self.labels {
            let _ = writeln!(out, "{l}");
        }
        out
    }

    /// One cluster id per line. `k` defaults to the largest id plus one.
    pub fn from_text(text: &str, k: Option<usize>) -> Result<Self> {
        let labels = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad cluster id '{}'", l.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = k.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
        Clustering::new(labels, k)
    }

    pub fn load(path: &Path, k: Option<usize>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Clustering::from_text(&text, k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub clustering: Clustering,
    /// Some point's two nearest active centers are equidistant (within the tolerance).
    pub boundary_hit: bool,
}

fn check_dims(ds: &Dataset, c: &Centroids) -> Result<()> {
    if ds.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: c.dim(),
        });
    }
    Ok(())
}

/// Nearest active center of `p`, lowest index on ties, plus whether the
/// runner-up is within `tol` of the winner.
pub(crate) fn nearest(p: &Point, c: &Centroids, active: &[usize], tol: f64) -> (usize, bool) {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    let mut second_d = f64::INFINITY;
    for &r in active {
        let d = p.sq_dist(c.center(r), c.sq_norm(r));
        if d < best_d {
            second_d = best_d;
            best_d = d;
            best = r;
        } else if d < second_d {
            second_d = d;
        }
    }
    let tie = second_d.is_finite() && second_d - best_d <= tol;
    (best, tie)
}

fn map_points<T, F>(ds: &Dataset, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Point) -> T + Sync + Send,
{
    if ds.len() >= PAR_THRESHOLD {
        ds.points().par_iter().map(f).collect()
    } else {
        ds.points().iter().map(f).collect()
    }
}

/// Voronoi assignment with exact tie detection.
pub fn assign(ds: &Dataset, c: &Centroids) -> Result<Assignment> {
    assign_with_tolerance(ds, c, 0.0)
}

/// Voronoi assignment to active centers; ties go to the lowest index.
///
/// `boundary_tol` is the absolute gap in squared distance under which the two
/// nearest centers count as equidistant.
pub fn assign_with_tolerance(ds: &Dataset, c: &Centroids, boundary_tol: f64) -> Result<Assignment> {
    check_dims(ds, c)?;
    let active = c.active_indices();
    if active.is_empty() {
        return Err(Error::NoActiveCenters);
    }
    let per_point = map_points(ds, |p| nearest(p, c, &active, boundary_tol));
    let boundary_hit = per_point.iter().any(|(_, tie)| *tie);
    let labels = per_point.into_iter().map(|(r, _)| r).collect();
    Ok(Assignment {
        clustering: Clustering::new(labels, c.k())?,
        boundary_hit,
    })
}

/// Cluster means; empty clusters come back inactive at the origin.
pub fn means(ds: &Dataset, a: &Clustering) -> Result<Centroids> {
    means_impl(ds, a, None)
}

/// Cluster means; empty clusters come back inactive at their position in `prev`.
pub fn means_from(ds: &Dataset, a: &Clustering, prev: &Centroids) -> Result<Centroids> {
    check_dims(ds, prev)?;
    if prev.k() != a.k() {
        return Err(Error::invalid("centroids", "k differs from clustering"));
    }
    means_impl(ds, a, Some(prev))
}

fn means_impl(ds: &Dataset, a: &Clustering, prev: Option<&Centroids>) -> Result<Centroids> {
    if a.len() != ds.len() {
        return Err(Error::invalid("clustering", "length differs from dataset"));
    }
    let d = ds.dim();
    let mut sums = vec![vec![0.0; d]; a.k()];
    for (p, &l) in ds.points().iter().zip(a.labels()) {
        p.add_to(&mut sums[l]);
    }
    let mut active = vec![true; a.k()];
    for (r, sum) in sums.iter_mut().enumerate() {
        let n = a.sizes()[r];
        if n == 0 {
            active[r] = false;
            match prev {
                Some(prev) => sum.copy_from_slice(prev.center(r)),
                None => sum.iter_mut().for_each(|v| *v = 0.0),
            }
        } else {
            let inv = n as f64;
            sum.iter_mut().for_each(|v| *v /= inv);
        }
    }
    Centroids::with_active(sums, active)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostMode {
    /// ‖x‖² − 2⟨x,c⟩ + ‖c‖² with cached norms.
    #[default]
    Expanded,
    /// Coordinate-wise ‖x − c‖².
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub total: f64,
    pub per_cluster: Vec<f64>,
}

pub fn cost(ds: &Dataset, c: &Centroids, a: &Clustering) -> Result<CostReport> {
    cost_with_mode(ds, c, a, CostMode::Expanded)
}

pub fn cost_with_mode(
    ds: &Dataset,
    c: &Centroids,
    a: &Clustering,
    mode: CostMode,
) -> Result<CostReport> {
    check_dims(ds, c)?;
    if a.len() != ds.len() || a.k() != c.k() {
        return Err(Error::invalid(
            "clustering",
            "shape differs from dataset/centroids",
        ));
    }
    let labels = a.labels();
    let dists: Vec<f64> = if ds.len() >= PAR_THRESHOLD {
        ds.points()
            .par_iter()
            .zip(labels.par_iter())
            .map(|(p, &r)| point_cost(p, c, r, mode))
            .collect()
    } else {
        ds.points()
            .iter()
            .zip(labels)
            .map(|(p, &r)| point_cost(p, c, r, mode))
            .collect()
    };
    let mut per_cluster = vec![0.0; c.k()];
    for (d, &r) in dists.iter().zip(labels) {
        per_cluster[r] += d;
    }
    let total = per_cluster.iter().sum();
    Ok(CostReport { total, per_cluster })
}

fn point_cost(p: &Point, c: &Centroids, r: usize, mode: CostMode) -> f64 {
    match mode {
        CostMode::Expanded => (p.squared_norm() - 2.0 * p.dot(c.center(r)) + c.sq_norm(r)).max(0.0),
        CostMode::Naive => p.sq_dist_naive(c.center(r)),
    }
}

/// φ(C): cost of `c` under its own Voronoi assignment.
pub fn voronoi_cost(ds: &Dataset, c: &Centroids) -> Result<f64> {
    voronoi_cost_with_mode(ds, c, CostMode::Expanded)
}

pub fn voronoi_cost_with_mode(ds: &Dataset, c: &Centroids, mode: CostMode) -> Result<f64> {
    let a = assign(ds, c)?;
    Ok(cost_with_mode(ds, c, &a.clustering, mode)?.total)
}

/// |φ(c,Y) − φ(m(Y),Y) − |Y|·‖m(Y) − c‖²| for a dense point set.
pub fn centroidal_identity_check(y: &[Vec<f64>], c: &[f64]) -> Result<f64> {
    let Some(first) = y.first() else {
        return Err(Error::NoPoints);
    };
    let d = first.len();
    if c.len() != d || y.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: c.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for p in y {
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    let n = y.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let phi_c: f64 = y.iter().map(|p| sq_dist(p, c)).sum();
    let phi_m: f64 = y.iter().map(|p| sq_dist(p, &mean)).sum();
    Ok((phi_c - phi_m - n * sq_dist(&mean, c)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMode {
    Exact,
    Greedy,
    /// Exact up to [`EXACT_DELTA_MAX_K`] target centers, greedy above.
    Auto,
}

pub const EXACT_DELTA_MAX_K: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaResult {
    pub value: f64,
    /// `matching[r]` is the source center paired with target center `r`.
    pub matching: Vec<usize>,
    /// `Exact` or `Greedy`; never `Auto`.
    pub method: DeltaMode,
}

/// Δ(Cp, C) = min over matchings π of Σ_r n_r ‖cp_π(r) − c_r‖².
///
/// `weights` are the sizes n_r of the clusters behind `c`. Only active centers
/// of `cp` take part; there must be at least as many as there are centers in `c`.
pub fn delta(
    cp: &Centroids,
    c: &Centroids,
    weights: &[usize],
    mode: DeltaMode,
) -> Result<DeltaResult> {
    if cp.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: cp.dim(),
        });
    }
    if weights.len() != c.k() {
        return Err(Error::invalid("weights", "one weight per target center"));
    }
    let sources = cp.active_indices();
    if sources.len() < c.k() {
        return Err(Error::TooFewActiveCenters {
            active: sources.len(),
            targets: c.k(),
        });
    }
    let cost: Vec<Vec<f64>> = (0..c.k())
        .map(|r| {
            sources
                .iter()
                .map(|&s| weights[r] as f64 * sq_dist(cp.center(s), c.center(r)))
                .collect()
        })
        .collect();
    let method = match mode {
        DeltaMode::Auto if c.k() <= EXACT_DELTA_MAX_K => DeltaMode::Exact,
        DeltaMode::Auto => DeltaMode::Greedy,
        m => m,
    };
    let cols = match method {
        DeltaMode::Greedy => {
            let mut order: Vec<usize> = (0..c.k()).collect();
            order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
            matching::greedy(&cost, &order)
        }
        _ => matching::hungarian(&cost),
    };
    let value = matching::assignment_cost(&cost, &cols);
    Ok(DeltaResult {
        value,
        matching: cols.into_iter().map(|j| sources[j]).collect(),
        method,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGapCheck {
    pub gap: f64,
    pub delta: f64,
    pub holds: bool,
}

/// Checks φ(C) − φ(C*) ≤ Δ(C, C*) for a stationary point `cstar` of `astar`.
///
/// Costs are summed coordinate-wise, since the gap is a small difference of
/// two large sums.
pub fn cost_gap_bound_check(
    ds: &Dataset,
    c: &Centroids,
    cstar: &Centroids,
    astar: &Clustering,
) -> Result<CostGapCheck> {
    let phi = voronoi_cost_with_mode(ds, c, CostMode::Naive)?;
    let phi_star = voronoi_cost_with_mode(ds, cstar, CostMode::Naive)?;
    let d = delta(c, cstar, astar.sizes(), DeltaMode::Auto)?;
    let gap = phi - phi_star;
    Ok(CostGapCheck {
        gap,
        delta: d.value,
        holds: gap <= d.value + 1e-9 * d.value.max(1.0),
    })
}
