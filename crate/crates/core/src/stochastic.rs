//! Online (m = 1) and mini-batch (m > 1) stochastic k-means.
//!
//! Each iteration draws `m` indices uniformly with replacement, assigns every
//! sample to its nearest active center of the previous iterate, and moves each
//! sampled center by the convex update
//! `c_r ← (1 − η_r) c_r + η_r · mean(samples of r)`. Centers that receive no
//! sample stay where they are; there is no relocation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Point};
use crate::error::{Error, Result};
use crate::kmeans::{self, Centroids, Clustering, DeltaMode, PAR_THRESHOLD};
use crate::rng::{fnv1a, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    /// η^t = c′ / (t0 + t) for every cluster.
    Flat { c_prime: f64, t0: f64 },
    /// η_r^t = n̂_r^t / N̂_r^t, N̂_r the cumulative sample count of cluster r.
    Bbs,
}

impl LearningRate {
    pub fn validate(&self) -> Result<()> {
        if let LearningRate::Flat { c_prime, t0 } = *self {
            if !(c_prime.is_finite() && c_prime > 0.0) {
                return Err(Error::invalid("c_prime", "must be positive"));
            }
            if !(t0.is_finite() && t0 >= 0.0) {
                return Err(Error::invalid("t0", "must be nonnegative"));
            }
            if c_prime >= t0 + 1.0 {
                return Err(Error::invalid(
                    "c_prime",
                    format!(
                        "c_prime={c_prime} must be < t0+1={} so that every rate is below 1",
                        t0 + 1.0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Short name used in file names, e.g. `flat-c2-t3` or `bbs`.
    pub fn label(&self) -> String {
        match self {
            LearningRate::Flat { c_prime, t0 } => format!("flat-c{c_prime}-t{t0}"),
            LearningRate::Bbs => "bbs".to_string(),
        }
    }
}

/// What one iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    /// n̂_r^t.
    pub counts: Vec<usize>,
    /// Rate applied to each center; `None` when it was not sampled.
    pub etas: Vec<Option<f64>>,
}

impl BatchStats {
    pub fn updated_clusters(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    fn eta_range(&self) -> (f64, f64) {
        self.etas
            .iter()
            .flatten()
            .fold((f64::NAN, f64::NAN), |(lo, hi), &e| (lo.min(e), hi.max(e)))
    }
}

/// Solver state between iterations.
#[derive(Debug, Clone)]
pub struct StochasticState {
    centroids: Centroids,
    policy: LearningRate,
    cumulative: Vec<u64>,
    t: usize,
}

impl StochasticState {
    pub fn new(c0: Centroids, policy: LearningRate) -> Result<Self> {
        policy.validate()?;
        let k = c0.k();
        Ok(StochasticState {
            centroids: c0,
            policy,
            cumulative: vec![0; k],
            t: 0,
        })
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn into_centroids(self) -> Centroids {
        self.centroids
    }

    /// Iterations applied so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// N̂_r, cumulative samples per cluster.
    pub fn cumulative_counts(&self) -> &[u64] {
        &self.cumulative
    }

    /// Nearest active center for each sample, lowest index on ties.
    pub fn assign_batch(&self, samples: &[&Point]) -> Result<Vec<usize>> {
        let active = self.centroids.active_indices();
        if active.is_empty() {
            return Err(Error::NoActiveCenters);
        }
        let c = &self.centroids;
        let labels = if samples.len() >= PAR_THRESHOLD {
            samples
                .par_iter()
                .map(|p| kmeans::nearest(p, c, &active, 0.0).0)
                .collect()
        } else {
            samples
                .iter()
                .map(|p| kmeans::nearest(p, c, &active, 0.0).0)
                .collect()
        };
        Ok(labels)
    }

    /// Apply iteration t+1 for samples already assigned to centers.
    pub fn update(&mut self, samples: &[&Point], labels: &[usize]) -> BatchStats {
        debug_assert_eq!(samples.len(), labels.len());
        self.t += 1;
        let k = self.centroids.k();
        let d = self.centroids.dim();
        let mut counts = vec![0usize; k];
        let mut sums = vec![Vec::new(); k];
        for (p, &r) in samples.iter().zip(labels) {
            if counts[r] == 0 {
                sums[r] = vec![0.0; d];
            }
            counts[r] += 1;
            p.add_to(&mut sums[r]);
        }
        let mut etas = vec![None; k];
        for r in 0..k {
            if counts[r] == 0 {
                continue;
            }
            self.cumulative[r] += counts[r] as u64;
            let eta = match self.policy {
                LearningRate::Flat { c_prime, t0 } => c_prime / (t0 + self.t as f64),
                LearningRate::Bbs => counts[r] as f64 / self.cumulative[r] as f64,
            };
            let inv = 1.0 / counts[r] as f64;
            let next: Vec<f64> = self
                .centroids
                .center(r)
                .iter()
                .zip(&sums[r])
                .map(|(c, s)| (1.0 - eta) * c + eta * (s * inv))
                .collect();
            self.centroids.set_center(r, next);
            etas[r] = Some(eta);
        }
        BatchStats { counts, etas }
    }

    /// Assign and apply an explicit batch.
    pub fn apply_batch(&mut self, samples: &[&Point]) -> Result<BatchStats> {
        let labels = self.assign_batch(samples)?;
        Ok(self.update(samples, &labels))
    }

    /// One iteration: draw `m` uniform indices with replacement and apply them.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        ds: &Dataset,
        m: usize,
        rng: &mut R,
    ) -> Result<BatchStats> {
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..ds.len())).collect();
        let samples: Vec<&Point> = idx.iter().map(|&i| ds.point(i)).collect();
        self.apply_batch(&samples)
    }
}

/// Stop once full-cost evaluations improve by less than `eps` (relative) over `window` evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps: f64,
    pub window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            eps: 1e-6,
            window: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochasticConfig {
    pub m: usize,
    pub policy: LearningRate,
    pub max_iters: usize,
    pub seed: u64,
    /// Stationary solution to track Δ(C^t, C*) against; weights are the clustering's sizes.
    pub reference: Option<(Centroids, Clustering)>,
    /// Evaluate the full cost every this many iterations.
    pub cost_eval_every: usize,
    /// `None` runs exactly `max_iters` iterations.
    pub stop: Option<StopRule>,
}

impl StochasticConfig {
    pub fn new(m: usize, policy: LearningRate, max_iters: usize, seed: u64) -> Self {
        StochasticConfig {
            m,
            policy,
            max_iters,
            seed,
            reference: None,
            cost_eval_every: 1,
            stop: Some(StopRule::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "mini-batch size must be >= 1"));
        }
        if self.cost_eval_every == 0 {
            return Err(Error::invalid("cost_eval_every", "must be >= 1"));
        }
        if let Some(rule) = self.stop {
            if rule.window == 0 {
                return Err(Error::invalid("stop.window", "must be >= 1"));
            }
        }
        self.policy.validate()
    }

    pub fn digest(&self) -> u64 {
        let text = format!(
            "m={} policy={:?} max_iters={} seed={} every={} stop={:?} reference={}",
            self.m,
            self.policy,
            self.max_iters,
            self.seed,
            self.cost_eval_every,
            self.stop,
            self.reference.as_ref().map_or(0, |(c, _)| c.digest()),
        );
        fnv1a(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// φ^t, NaN when not evaluated this iteration.
    pub phi: f64,
    pub delta: Option<f64>,
    pub counts: Vec<usize>,
    /// NaN when no center moved.
    pub eta_min: f64,
    pub eta_max: f64,
}

impl TraceRow {
    pub fn updated_clusters(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStop {
    MaxIters,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// φ(C^0).
    pub initial_phi: f64,
    pub initial_delta: Option<f64>,
    pub rows: Vec<TraceRow>,
    pub seed: u64,
    pub config_digest: u64,
    pub stopped: RunStop,
}

pub const TRACE_HEADER: &str = "t,phi,delta,updated_clusters,eta_min,eta_max";

fn opt_field(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

impl RunTrace {
    /// (t, φ^t) for every evaluated iteration, starting with t = 0.
    pub fn phi_series(&self) -> Vec<(usize, f64)> {
        std::iter::once((0, self.initial_phi))
            .chain(
                self.rows
                    .iter()
                    .filter(|r| !r.phi.is_nan())
                    .map(|r| (r.t, r.phi)),
            )
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.t,
                opt_field(row.phi),
                row.delta.map_or(String::new(), |d| format!("{d:?}")),
                row.updated_clusters(),
                opt_field(row.eta_min),
                opt_field(row.eta_max),
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct StochasticRun {
    pub centroids: Centroids,
    pub trace: RunTrace,
}

fn reference_delta(c: &Centroids, reference: &Option<(Centroids, Clustering)>) -> Option<f64> {
    reference.as_ref().and_then(|(cref, aref)| {
        kmeans::delta(c, cref, aref.sizes(), DeltaMode::Auto)
            .ok()
            .map(|d| d.value)
    })
}

/// Run the solver from `c0`.
pub fn run(ds: &Dataset, c0: &Centroids, cfg: &StochasticConfig) -> Result<StochasticRun> {
    cfg.validate()?;
    if c0.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: c0.dim(),
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = StochasticState::new(c0.clone(), cfg.policy)?;
    let initial_phi = kmeans::voronoi_cost(ds, c0)?;
    let mut evaluations = vec![initial_phi];
    let mut rows = Vec::with_capacity(cfg.max_iters);
    let mut stopped = RunStop::MaxIters;
    for t in 1..=cfg.max_iters {
        let stats = state.step(ds, cfg.m, &mut rng)?;
        let phi = if t % cfg.cost_eval_every == 0 {
            kmeans::voronoi_cost(ds, state.centroids())?
        } else {
            f64::NAN
        };
        let (eta_min, eta_max) = stats.eta_range();
        rows.push(TraceRow {
            t,
            phi,
            delta: reference_delta(state.centroids(), &cfg.reference),
            counts: stats.counts,
            eta_min,
            eta_max,
        });
        if !phi.is_nan() {
            evaluations.push(phi);
            if let Some(rule) = cfg.stop {
                let len = evaluations.len();
                if len > rule.window {
                    let old = evaluations[len - 1 - rule.window];
                    let improvement = if old > 0.0 { (old - phi) / old } else { 0.0 };
                    if improvement < rule.eps {
                        stopped = RunStop::Converged;
                        break;
                    }
                }
            }
        }
    }
    Ok(StochasticRun {
        centroids: state.into_centroids(),
        trace: RunTrace {
            initial_phi,
            initial_delta: reference_delta(c0, &cfg.reference),
            rows,
            seed: cfg.seed,
            config_digest: cfg.digest(),
            stopped,
        },
    })
}

/// Replay scripted batches under the BBS rate and compare each center with the
/// plain average of every sample scripted to it.
///
/// Each batch lists `(point, cluster)` pairs. The script must agree with the
/// nearest-center rule at every step. Returns the largest Euclidean gap between
/// a replayed center and its cumulative mean (centers never sampled are compared
/// with their starting position).
pub fn verify_bbs_running_average(
    c0: &Centroids,
    batches: &[Vec<(Vec<f64>, usize)>],
) -> Result<f64> {
    let k = c0.k();
    let d = c0.dim();
    let mut state = StochasticState::new(c0.clone(), LearningRate::Bbs)?;
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (step, batch) in batches.iter().enumerate() {
        let points: Vec<Point> = batch
            .iter()
            .map(|(x, _)| {
                if x.len() != d {
                    Err(Error::DimensionMismatch {
                        expected: d,
                        got: x.len(),
                    })
                } else {
                    Ok(Point::dense(x.clone()))
                }
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Point> = points.iter().collect();
        let labels = state.assign_batch(&refs)?;
        for ((x, scripted), &nearest) in batch.iter().zip(&labels) {
            if *scripted != nearest {
                return Err(Error::MembershipViolation {
                    step: step + 1,
                    scripted: *scripted,
                    nearest,
                });
            }
            sums[nearest].iter_mut().zip(x).for_each(|(s, v)| *s += v);
            counts[nearest] += 1;
        }
        state.update(&refs, &labels);
    }
    let mut worst = 0.0f64;
    for r in 0..k {
        let expected: Vec<f64> = if counts[r] == 0 {
            c0.center(r).to_vec()
        } else {
            sums[r].iter().map(|s| s / counts[r] as f64).collect()
        };
        let gap = expected
            .iter()
            .zip(state.centroids().center(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Probability that a cluster holding `n_r` of `n` points receives at least one
/// of `m` uniform draws: 1 − (1 − n_r/n)^m.
pub fn update_probability(n_r: usize, n: usize, m: usize) -> Result<f64> {
    if n == 0 || m == 0 || n_r > n {
        return Err(Error::invalid(
            "update_probability",
            format!("need 0 <= n_r <= n, n >= 1, m >= 1 (n_r={n_r}, n={n}, m={m})"),
        ));
    }
    let q = 1.0 - n_r as f64 / n as f64;
    Ok(1.0 - q.powi(m as i32))
}

/// Fraction of `steps` draws of size `m` in which each center of the fixed
/// `c` receives at least one sample.
pub fn frozen_update_frequency<R: Rng + ?Sized>(
    ds: &Dataset,
    c: &Centroids,
    m: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let state = StochasticState::new(c.clone(), LearningRate::Bbs)?;
    let mut hits = vec![0usize; c.k()];
    for _ in 0..steps {
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..ds.len())).collect();
        let samples: Vec<&Point> = idx.iter().map(|&i| ds.point(i)).collect();
        let labels = state.assign_batch(&samples)?;
        let mut seen = vec![false; c.k()];
        for l in labels {
            seen[l] = true;
        }
        for (h, s) in hits.iter_mut().zip(seen) {
            *h += s as usize;
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / steps as f64).collect())
}
