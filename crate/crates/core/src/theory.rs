//! Diagnostics for clusterability conditions, basin stability, and the
//! closed-form rate bounds, plus the log-log slope fit used on convergence traces.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::{Coords, Dataset};
use crate::error::{Error, Result};
use crate::kmeans::{self, Centroids, Clustering, DeltaMode};
use crate::rng::{derive_seed, rng_from_seed};

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Margin between clusters `r` and `s`: the smallest gap
/// |‖x̄ − c_r‖ − ‖x̄ − c_s‖| over their points, x̄ the projection of x onto the
/// line through the two centers.
pub fn margin(ds: &Dataset, a: &Clustering, c: &Centroids, r: usize, s: usize) -> Result<f64> {
    if r == s {
        return Err(Error::invalid("margin", "r and s must differ"));
    }
    if r >= c.k() || s >= c.k() {
        return Err(Error::invalid("margin", "cluster index out of range"));
    }
    if a.sizes()[r] == 0 || a.sizes()[s] == 0 {
        return Err(Error::invalid("margin", "both clusters must be nonempty"));
    }
    let (r, s) = (r.min(s), r.max(s));
    let cr = c.center(r);
    let cs = c.center(s);
    let dir: Vec<f64> = cs.iter().zip(cr).map(|(b, a)| b - a).collect();
    let len = sq_norm(&dir).sqrt();
    if len == 0.0 {
        return Err(Error::invalid("margin", "coincident centers"));
    }
    let offset = dot(cr, &dir);
    let mut best = f64::INFINITY;
    for (p, &l) in ds.points().iter().zip(a.labels()) {
        if l != r && l != s {
            continue;
        }
        let along = match p.coords() {
            Coords::Dense(v) => v
                .iter()
                .zip(cr)
                .zip(&dir)
                .map(|((x, c), u)| (x - c) * u)
                .sum::<f64>(),
            Coords::Sparse { .. } => p.dot(&dir) - offset,
        } / len;
        let gap = (along.abs() - (along - len).abs()).abs();
        best = best.min(gap);
    }
    Ok(best)
}

/// Which of the separation, margin and balance conditions an optimal solution meets.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub alpha: f64,
    pub phi_opt: f64,
    /// φ^opt = 0: separation is infinite and the separation condition holds vacuously.
    pub zero_cost: bool,
    /// max{64², (5α+5)/(256α), max n_r/n_s}.
    pub f_required: f64,
    /// min over pairs of ‖c_r − c_s‖ / (√φ^opt (1/√n_r + 1/√n_s)).
    pub f_achieved: f64,
    /// min over pairs of margin / ‖c_r − c_s‖.
    pub gamma_achieved: f64,
    /// 8√2 / √f_achieved.
    pub gamma_threshold: f64,
    pub p_min: f64,
    /// γ/(16² f) + √α.
    pub balance_threshold: f64,
    pub b1_holds: bool,
    pub b2_holds: bool,
    pub b3_holds: bool,
    /// γ²f²/16², the basin radius (in units of φ^opt) the conditions guarantee.
    pub stable_radius: f64,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.b1_holds && self.b2_holds && self.b3_holds
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 14] = [
            ("alpha", format!("{:?}", self.alpha)),
            ("phi_opt", format!("{:?}", self.phi_opt)),
            ("zero_cost", self.zero_cost.to_string()),
            ("f_required", format!("{:?}", self.f_required)),
            ("f_achieved", format!("{:?}", self.f_achieved)),
            ("gamma_achieved", format!("{:?}", self.gamma_achieved)),
            ("gamma_threshold", format!("{:?}", self.gamma_threshold)),
            ("p_min", format!("{:?}", self.p_min)),
            ("balance_threshold", format!("{:?}", self.balance_threshold)),
            ("b1_holds", self.b1_holds.to_string()),
            ("b2_holds", self.b2_holds.to_string()),
            ("b3_holds", self.b3_holds.to_string()),
            ("stable_radius", format!("{:?}", self.stable_radius)),
            ("all_hold", self.all_hold().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Evaluate separation (B1), margin (B2) and balance (B3) for `(a, c)` at `alpha`.
///
/// The separation constant f is taken as the largest value the data supports
/// (`f_achieved`), which makes the margin and balance thresholds as loose as
/// the instance allows.
pub fn check_assumptions(
    ds: &Dataset,
    a: &Clustering,
    c: &Centroids,
    alpha: f64,
) -> Result<AssumptionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if a.k() != c.k() || a.len() != ds.len() {
        return Err(Error::invalid(
            "clustering",
            "shape differs from dataset/centroids",
        ));
    }
    if a.sizes().contains(&0) {
        return Err(Error::invalid("clustering", "empty cluster"));
    }
    let k = c.k();
    let n = ds.len() as f64;
    let sizes: Vec<f64> = a.sizes().iter().map(|&s| s as f64).collect();
    let phi_opt = kmeans::cost_with_mode(ds, c, a, kmeans::CostMode::Naive)?.total;
    let zero_cost = phi_opt == 0.0;

    let mut balance: f64 = 0.0;
    let mut f_achieved = f64::INFINITY;
    let mut gamma_achieved = f64::INFINITY;
    for r in 0..k {
        for s in 0..k {
            if r == s {
                continue;
            }
            balance = balance.max(sizes[r] / sizes[s]);
            if s < r {
                continue;
            }
            let sep = sq_norm(
                &c.center(r)
                    .iter()
                    .zip(c.center(s))
                    .map(|(x, y)| x - y)
                    .collect::<Vec<_>>(),
            )
            .sqrt();
            if !zero_cost {
                let scale = phi_opt.sqrt() * (1.0 / sizes[r].sqrt() + 1.0 / sizes[s].sqrt());
                f_achieved = f_achieved.min(sep / scale);
            }
            let m = margin(ds, a, c, r, s)?;
            gamma_achieved = gamma_achieved.min(m / sep);
        }
    }
    let f_required = (64.0f64 * 64.0)
        .max((5.0 * alpha + 5.0) / (256.0 * alpha))
        .max(balance);
    let p_min = sizes.iter().cloned().fold(f64::INFINITY, f64::min) / n;
    let gamma_threshold = 8.0 * 2f64.sqrt() / f_achieved.sqrt();
    let balance_threshold = if f_achieved.is_infinite() {
        alpha.sqrt()
    } else {
        gamma_achieved / (256.0 * f_achieved) + alpha.sqrt()
    };
    Ok(AssumptionReport {
        alpha,
        phi_opt,
        zero_cost,
        f_required,
        f_achieved,
        gamma_achieved,
        gamma_threshold,
        p_min,
        balance_threshold,
        b1_holds: f_achieved > f_required,
        b2_holds: gamma_achieved > gamma_threshold,
        b3_holds: p_min >= balance_threshold,
        stable_radius: gamma_achieved * gamma_achieved * f_achieved * f_achieved / 256.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrial {
    /// Requested Δ(C, C*) / φ*.
    pub b_prime: f64,
    /// Δ(C, C*) actually realized.
    pub delta: f64,
    /// max_r |A_π(r) △ A*_r| / n*_r.
    pub symdiff_ratio: f64,
    /// Δ(one Lloyd step from C, C*) / (b′φ*); infinite if the step degenerates a center.
    pub contraction: f64,
    pub phi: f64,
    /// b/(5b + 4(1 + φ(C)/φ*)) with b = min(α̂, 1)·b′.
    pub allowed_symdiff: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub b0: f64,
    pub phi_star: f64,
    /// Largest contraction ratio observed; below 1 means one Lloyd step contracted every trial.
    pub alpha_estimate: f64,
    pub trials: Vec<ProbeTrial>,
}

impl StabilityReport {
    pub fn violations(&self) -> usize {
        self.trials.iter().filter(|t| !t.holds).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial,b_prime,delta,symdiff_ratio,contraction,phi,allowed_symdiff,holds\n",
        );
        for (i, t) in self.trials.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                t.b_prime,
                t.delta,
                t.symdiff_ratio,
                t.contraction,
                t.phi,
                t.allowed_symdiff,
                t.holds
            );
        }
        out
    }
}

/// Centers displaced from `cstar` so that Σ_r n_r ‖δ_r‖² = `target`.
pub fn perturb_to_delta<R: Rng + ?Sized>(
    cstar: &Centroids,
    sizes: &[usize],
    target: f64,
    rng: &mut R,
) -> Result<Centroids> {
    let d = cstar.dim();
    let mut dirs: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| {
            let w = 1.0 / (n.max(1) as f64).sqrt();
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    w * z
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let weight: f64 = dirs
        .iter()
        .zip(sizes)
        .map(|(v, &n)| n as f64 * sq_norm(v))
        .sum();
    let scale = if weight > 0.0 {
        (target / weight).sqrt()
    } else {
        0.0
    };
    for (v, c) in dirs.iter_mut().zip(cstar.centers()) {
        v.iter_mut().zip(c).for_each(|(x, ci)| *x = ci + scale * *x);
    }
    Centroids::new(dirs)
}

/// Probe the basin around a stationary point.
///
/// Trial 0 is the unperturbed point. Each other trial draws b′ uniform in
/// (0, b0], perturbs `cstar` to Δ = b′φ*, and records the misassignment ratio
/// and how far one Lloyd step lands from `cstar`. Trial `i` uses a stream
/// derived from `(seed, i)`.
pub fn stability_probe(
    ds: &Dataset,
    astar: &Clustering,
    cstar: &Centroids,
    b0: f64,
    trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::invalid("b0", "must be positive"));
    }
    let phi_star = kmeans::cost(ds, cstar, astar)?.total;
    if phi_star <= 0.0 {
        return Err(Error::invalid(
            "phi_star",
            "stationary cost must be positive",
        ));
    }
    let sizes = astar.sizes();
    let raw = (0..trials.max(1))
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64, f64, f64)> {
            let (b_prime, c) = if i == 0 {
                (0.0, cstar.clone())
            } else {
                let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
                let b_prime = b0 * (1.0 - rng.random::<f64>());
                (
                    b_prime,
                    perturb_to_delta(cstar, sizes, b_prime * phi_star, &mut rng)?,
                )
            };
            let dres = kmeans::delta(&c, cstar, sizes, DeltaMode::Auto)?;
            let a = kmeans::assign(ds, &c)?;
            let mut symdiff: f64 = 0.0;
            for (r, &src) in dres.matching.iter().enumerate() {
                let count = a
                    .clustering
                    .labels()
                    .iter()
                    .zip(astar.labels())
                    .filter(|(&mine, &theirs)| (mine == src) != (theirs == r))
                    .count();
                symdiff = symdiff.max(count as f64 / sizes[r] as f64);
            }
            let phi = kmeans::cost(ds, &c, &a.clustering)?.total;
            let stepped = kmeans::means_from(ds, &a.clustering, &c)?;
            let post = match kmeans::delta(&stepped, cstar, sizes, DeltaMode::Auto) {
                Ok(d) => d.value,
                Err(Error::TooFewActiveCenters { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let contraction = if b_prime > 0.0 {
                post / (b_prime * phi_star)
            } else if post == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok((b_prime, dres.value, symdiff, contraction, phi))
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha_estimate = raw.iter().map(|t| t.3).fold(0.0, f64::max);
    let alpha_used = alpha_estimate.min(1.0);
    let trials = raw
        .into_iter()
        .map(|(b_prime, delta, symdiff_ratio, contraction, phi)| {
            let b = alpha_used * b_prime;
            let allowed = if b > 0.0 {
                b / (5.0 * b + 4.0 * (1.0 + phi / phi_star))
            } else {
                0.0
            };
            ProbeTrial {
                b_prime,
                delta,
                symdiff_ratio,
                contraction,
                phi,
                allowed_symdiff: allowed,
                holds: symdiff_ratio <= allowed,
            }
        })
        .collect();
    Ok(StabilityReport {
        b0,
        phi_star,
        alpha_estimate,
        trials,
    })
}

/// β = 2c′ · p · (1 − a·√α).
pub fn beta_value(c_prime: f64, p_min: f64, a_max_ratio: f64, alpha: f64) -> Result<f64> {
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::invalid("p", "must lie in (0, 1]"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", "must lie in [0, 1)"));
    }
    if a_max_ratio < 1.0 {
        return Err(Error::invalid("a_max_ratio", "must be >= 1"));
    }
    if c_prime <= 0.0 {
        return Err(Error::invalid("c_prime", "must be positive"));
    }
    Ok(2.0 * c_prime * p_min * (1.0 - a_max_ratio * alpha.sqrt()))
}

/// ρ(m) = 1 − [1 − (p_min − γ/(16² f))]^m.
pub fn rho(p_min: f64, gamma: f64, f: f64, m: usize) -> f64 {
    let p = p_min - gamma / (256.0 * f);
    1.0 - (1.0 - p).powi(m as i32)
}

/// Parameters of the recurrence u_t ≤ (1 − a/t) u_{t−1} + b/t², t > t0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub a: f64,
    pub b: f64,
    pub t0: f64,
    pub u_t0: f64,
}

/// ((t0+1)/(t+1))^a u_{t0} + b/(a−1) (1 + 1/(t0+1))^{a+1} / (t+1).
pub fn recurrence_envelope(p: &BoundParams, t: f64) -> Result<f64> {
    if p.a <= 1.0 {
        return Err(Error::invalid("a", "closed form needs a > 1"));
    }
    if t < p.t0 {
        return Err(Error::invalid("t", "must be >= t0"));
    }
    let decay = ((p.t0 + 1.0) / (t + 1.0)).powf(p.a) * p.u_t0;
    let noise = p.b / (p.a - 1.0) * (1.0 + 1.0 / (p.t0 + 1.0)).powf(p.a + 1.0) / (t + 1.0);
    Ok(decay + noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeWindow {
    /// t ≥ t_max / 2.
    SecondHalf,
    /// Inclusive range of t.
    Range { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub floor: f64,
    pub points: usize,
}

/// Least-squares slope of log(φ^t − floor) against log t.
///
/// `series` holds (t, φ^t); NaN costs and t = 0 are ignored. `floor` defaults to
/// the smallest φ in the series. Differences that are nonpositive or below
/// 1e−12·`phi0` are dropped.
pub fn slope_estimate(
    series: &[(f64, f64)],
    phi0: f64,
    floor: Option<f64>,
    window: SlopeWindow,
) -> Result<SlopeFit> {
    let floor = floor.unwrap_or_else(|| {
        series
            .iter()
            .map(|p| p.1)
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min)
    });
    let t_max = series.iter().map(|p| p.0).fold(0.0, f64::max);
    let (lo, hi) = match window {
        SlopeWindow::SecondHalf => (t_max / 2.0, t_max),
        SlopeWindow::Range { from, to } => (from, to),
    };
    let cutoff = 1e-12 * phi0.abs();
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, phi)| *t > 0.0 && *t >= lo && *t <= hi && !phi.is_nan())
        .filter_map(|&(t, phi)| {
            let gap = phi - floor;
            (gap > 0.0 && gap >= cutoff).then(|| (t.ln(), gap.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid(
            "slope",
            format!("{} usable points in the window, need 2", pts.len()),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope", "window spans a single t"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        floor,
        points: pts.len(),
    })
}
