//! Batch k-means (Lloyd) and stationary-clustering detection.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::{self, Centroids, Clustering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// A^{t+1} = A^t.
    Stationary,
    MaxIters,
    /// Stationary, but the last assignment had a point on a bisector.
    BoundaryAmbiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydTrace {
    /// φ(m(A^t), A^t) after each update.
    pub costs: Vec<f64>,
    /// Active centers after each update.
    pub active: Vec<usize>,
    /// (iteration, center) for every center that lost all its points.
    pub degenerate_events: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub centroids: Centroids,
    pub clustering: Clustering,
    pub trace: LloydTrace,
    pub stopped: StopReason,
}

impl BatchResult {
    pub fn iterations(&self) -> usize {
        self.trace.costs.len()
    }
}

/// Alternate Voronoi assignment and means until the clustering repeats.
///
/// Centers that lose all their points are frozen in place and stay inactive.
pub fn lloyd_run(ds: &Dataset, c0: &Centroids, max_iters: usize) -> Result<BatchResult> {
    let mut c = c0.clone();
    let mut prev: Option<Clustering> = None;
    let mut trace = LloydTrace {
        costs: Vec::new(),
        active: Vec::new(),
        degenerate_events: Vec::new(),
    };
    let mut stopped = StopReason::MaxIters;
    for t in 1..=max_iters + 1 {
        let assignment = kmeans::assign(ds, &c)?;
        if prev.as_ref() == Some(&assignment.clustering) {
            stopped = if assignment.boundary_hit {
                StopReason::BoundaryAmbiguous
            } else {
                StopReason::Stationary
            };
            break;
        }
        if t > max_iters {
            break;
        }
        let next = kmeans::means_from(ds, &assignment.clustering, &c)?;
        for r in 0..c.k() {
            if c.is_active(r) && !next.is_active(r) {
                trace.degenerate_events.push((t, r));
            }
        }
        c = next;
        trace
            .costs
            .push(kmeans::cost(ds, &c, &assignment.clustering)?.total);
        trace.active.push(c.active_count());
        prev = Some(assignment.clustering);
    }
    let clustering = match prev {
        Some(a) => a,
        // max_iters == 0: report the clustering C0 induces
        None => kmeans::assign(ds, &c)?.clustering,
    };
    Ok(BatchResult {
        centroids: c,
        clustering,
        trace,
        stopped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stationarity {
    pub stationary: bool,
    pub boundary: bool,
}

/// Whether m(A) lies in the closure of v⁻¹(A).
///
/// Every point must be at least as close to its own cluster mean as to any
/// other nonempty cluster mean; `boundary` reports a point with an equidistant
/// rival. Under lowest-index tie breaking, a boundary stationary clustering may
/// be reassigned differently by [`kmeans::assign`] yet still counts as stationary.
pub fn is_stationary(ds: &Dataset, a: &Clustering) -> Result<Stationarity> {
    is_stationary_with_tolerance(ds, a, 0.0)
}

pub fn is_stationary_with_tolerance(
    ds: &Dataset,
    a: &Clustering,
    tol: f64,
) -> Result<Stationarity> {
    let c = kmeans::means(ds, a)?;
    let active = c.active_indices();
    if active.is_empty() {
        return Err(Error::NoPoints);
    }
    let mut stationary = true;
    let mut boundary = false;
    for (p, &own) in ds.points().iter().zip(a.labels()) {
        let d_own = p.sq_dist(c.center(own), c.sq_norm(own));
        for &s in &active {
            if s == own {
                continue;
            }
            let d = p.sq_dist(c.center(s), c.sq_norm(s));
            if d < d_own - tol {
                stationary = false;
            } else if d <= d_own + tol {
                boundary = true;
            }
        }
    }
    Ok(Stationarity {
        stationary,
        boundary,
    })
}

pub const ENUM_MAX_N: usize = 14;
pub const ENUM_MAX_K: usize = 3;

/// All stationary clusterings with at most `k` nonempty clusters, by exhaustive search.
///
/// Partitions are generated as restricted growth strings, so each appears once
/// and labels are already canonical.
pub fn enumerate_stationary(ds: &Dataset, k: usize) -> Result<Vec<(Clustering, Centroids)>> {
    let n = ds.len();
    if n > ENUM_MAX_N || k > ENUM_MAX_K || k == 0 {
        return Err(Error::EnumerationTooLarge { n, k });
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    // labels[i] <= max(labels[..i]) + 1, and < k
    fn rec(
        i: usize,
        used: usize,
        labels: &mut Vec<usize>,
        k: usize,
        ds: &Dataset,
        out: &mut Vec<(Clustering, Centroids)>,
    ) -> Result<()> {
        if i == labels.len() {
            let a = Clustering::new(labels.clone(), k)?;
            if is_stationary(ds, &a)?.stationary {
                let c = kmeans::means(ds, &a)?;
                out.push((a, c));
            }
            return Ok(());
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), labels, k, ds, out)?;
        }
        Ok(())
    }
    rec(0, 0, &mut labels, k, ds, &mut out)?;
    Ok(out)
}
