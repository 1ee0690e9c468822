//! Sweep over (m, k, policy), averaging repeated stochastic runs.
//!
//! Seeds: with master seed `s`, the initial centers for the `j`-th entry of
//! `k_list` come from `derive_seed(s, [1, j])`, so every m and every policy at
//! that k starts from the same C⁰. Run `r` of policy `p` in cell `c`
//! (`c = i·|k_list| + j` for the `i`-th m) uses `derive_seed(s, [2, c, p, r])`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::Centroids;
use crate::rng::derive_seed;
use crate::seeding::SeedSpec;
use crate::stochastic::{self, LearningRate, RunTrace, StochasticConfig};
use crate::theory::{self, SlopeFit, SlopeWindow};

/// Averaged results for one (m, k, policy).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResult {
    pub m: usize,
    pub k: usize,
    pub policy: LearningRate,
    pub c0_digest: u64,
    pub run_seeds: Vec<u64>,
    /// Mean of φ(C⁰) over runs.
    pub phi0: f64,
    /// (t, φ̄^t) for every evaluated t ≥ 1.
    pub averaged: Vec<(usize, f64)>,
    /// Smallest point of the averaged series, φ̄⁰ included.
    pub phi_min: f64,
    /// `None` when the window has too few usable points.
    pub slope: Option<SlopeFit>,
    pub runs: Vec<RunTrace>,
}

impl ConfigResult {
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.m, self.k, self.policy.label())
    }

    pub fn terminal_phi(&self) -> f64 {
        self.averaged.last().map_or(self.phi0, |p| p.1)
    }

    /// (t, φ̄^t, φ̄^t − φ_min, (φ̄⁰ − φ_min)/t).
    pub fn convergence_rows(&self) -> Vec<(usize, f64, f64, f64)> {
        self.averaged
            .iter()
            .map(|&(t, phi)| {
                (
                    t,
                    phi,
                    phi - self.phi_min,
                    (self.phi0 - self.phi_min) / t as f64,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSeed {
    pub k: usize,
    pub seed: u64,
    pub c0: Centroids,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config_digest: u64,
    pub master_seed: u64,
    pub normalize: bool,
    pub iters: usize,
    pub initial: Vec<CellSeed>,
    /// Ordered by m, then k, then policy.
    pub configs: Vec<ConfigResult>,
}

/// Load the dataset named by `cfg` (normalized if requested) and run the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ds = cfg.source.load()?;
    let ds = if cfg.normalize { ds.normalized() } else { ds };
    run_sweep_on(cfg, &ds)
}

/// Run the sweep on an already loaded dataset.
pub fn run_sweep_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<SweepResult> {
    cfg.validate()?;
    let initial = cfg
        .k_list
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let seed = derive_seed(cfg.seed, &[1, j as u64]);
            let spec = SeedSpec {
                method: cfg.seeding,
                k,
                seed,
            };
            Ok(CellSeed {
                k,
                seed,
                c0: spec.run(ds)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let nk = cfg.k_list.len();
    let np = cfg.policies.len();
    let mut jobs = Vec::new();
    for (i, &m) in cfg.m_list.iter().enumerate() {
        for j in 0..nk {
            let cell = i * nk + j;
            for (p, &policy) in cfg.policies.iter().enumerate() {
                for r in 0..cfg.reps {
                    jobs.push((m, j, cell, p, policy, r));
                }
            }
        }
    }
    let traces = jobs
        .par_iter()
        .map(|&(m, j, cell, p, policy, r)| {
            let seed = derive_seed(cfg.seed, &[2, cell as u64, p as u64, r as u64]);
            let mut sc = StochasticConfig::new(m, policy, cfg.iters, seed);
            sc.cost_eval_every = cfg.cost_eval_every;
            sc.stop = None;
            stochastic::run(ds, &initial[j].c0, &sc).map(|run| run.trace)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut configs = Vec::with_capacity(cfg.m_list.len() * nk * np);
    let mut traces = traces.into_iter();
    for &m in &cfg.m_list {
        for cs in &initial {
            for &policy in &cfg.policies {
                let runs: Vec<RunTrace> = traces.by_ref().take(cfg.reps).collect();
                configs.push(summarize(m, cs, policy, runs)?);
            }
        }
    }
    Ok(SweepResult {
        config_digest: cfg.digest(),
        master_seed: cfg.seed,
        normalize: cfg.normalize,
        iters: cfg.iters,
        initial,
        configs,
    })
}

fn summarize(
    m: usize,
    cs: &CellSeed,
    policy: LearningRate,
    runs: Vec<RunTrace>,
) -> Result<ConfigResult> {
    let reps = runs.len() as f64;
    let series: Vec<Vec<(usize, f64)>> = runs.iter().map(|r| r.phi_series()).collect();
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::invalid(
            "sweep",
            "runs evaluated the cost at different iterations",
        ));
    }
    // index 0 is t = 0
    let mean_at = |i: usize| series.iter().map(|s| s[i].1).sum::<f64>() / reps;
    let phi0 = mean_at(0);
    let averaged: Vec<(usize, f64)> = (1..len).map(|i| (series[0][i].0, mean_at(i))).collect();
    let phi_min = averaged.iter().map(|p| p.1).fold(phi0, f64::min);
    let points: Vec<(f64, f64)> = averaged.iter().map(|&(t, v)| (t as f64, v)).collect();
    let slope = theory::slope_estimate(&points, phi0, Some(phi_min), SlopeWindow::SecondHalf).ok();
    Ok(ConfigResult {
        m,
        k: cs.k,
        policy,
        c0_digest: cs.c0.digest(),
        run_seeds: runs.iter().map(|r| r.seed).collect(),
        phi0,
        averaged,
        phi_min,
        slope,
        runs,
    })
}

pub const CONVERGENCE_HEADER: &str = "t,phi_avg,phi_minus_floor,baseline";
pub const SLOPES_HEADER: &str = "m,k,policy,phi0,phi_min,terminal_phi,slope,r2,points";

fn write(out_dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out_dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Write convergence CSVs, `slopes.csv`, raw run traces and `manifest.txt`.
pub fn emit_plots_data(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.configs.is_empty() {
        return Err(Error::invalid("result", "empty sweep"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut slopes = format!("{SLOPES_HEADER}\n");
    for cr in &result.configs {
        let mut conv = format!("{CONVERGENCE_HEADER}\n");
        for (t, phi, gap, base) in cr.convergence_rows() {
            let _ = writeln!(conv, "{t},{phi:?},{gap:?},{base:?}");
        }
        write(
            out_dir,
            &format!("convergence_{}.csv", cr.file_stem()),
            &conv,
            &mut files,
        )?;
        let (s, r2, pts) = match cr.slope {
            Some(fit) => (
                format!("{:?}", fit.slope),
                format!("{:?}", fit.r2),
                fit.points.to_string(),
            ),
            None => (String::new(), String::new(), "0".to_string()),
        };
        let _ = writeln!(
            slopes,
            "{},{},{},{:?},{:?},{:?},{s},{r2},{pts}",
            cr.m,
            cr.k,
            cr.policy.label(),
            cr.phi0,
            cr.phi_min,
            cr.terminal_phi()
        );
        for (r, run) in cr.runs.iter().enumerate() {
            let mut text = format!("# phi0={:?} seed={}\n", run.initial_phi, run.seed);
            text.push_str(&run.to_csv());
            write(
                out_dir,
                &format!("trace_{}_run{r}.csv", cr.file_stem()),
                &text,
                &mut files,
            )?;
        }
    }
    write(out_dir, "slopes.csv", &slopes, &mut files)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_digest = {:016x}", result.config_digest);
    let _ = writeln!(manifest, "master_seed = {}", result.master_seed);
    let _ = writeln!(manifest, "normalize = {}", result.normalize);
    let _ = writeln!(manifest, "iters = {}", result.iters);
    for cs in &result.initial {
        let _ = writeln!(
            manifest,
            "c0 k={} seed={} digest={:016x}",
            cs.k,
            cs.seed,
            cs.c0.digest()
        );
    }
    for cr in &result.configs {
        let seeds: Vec<String> = cr.run_seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            manifest,
            "run {} c0_digest={:016x} seeds={}",
            cr.file_stem(),
            cr.c0_digest,
            seeds.join(",")
        );
    }
    write(out_dir, "manifest.txt", &manifest, &mut files)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "synthetic.center = 0,0\nsynthetic.center = 20,0\nsynthetic.size = 30,30\n\
             policy.1.kind = flat\npolicy.1.c_prime = 1\npolicy.1.t0 = 1\npolicy.2.kind = bbs\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn single_iteration_slope_missing() {
        let cfg = tiny("m_list = 1\nk_list = 1\nreps = 1\niters = 1\n");
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.configs.len(), 2);
        assert_eq!(res.configs[0].averaged.len(), 1);
        assert!(res.configs[0].slope.is_none());
    }

    #[test]
    fn policies_share_initial_centers() {
        let cfg = tiny("m_list = 1,5\nk_list = 2\nreps = 2\niters = 10\n");
        let res = run_sweep(&cfg).unwrap();
        let d = res.configs[0].c0_digest;
        assert!(res.configs.iter().all(|c| c.c0_digest == d));
        for c in &res.configs {
            let phi0 = c.runs[0].initial_phi;
            assert!(c
                .runs
                .iter()
                .all(|r| r.initial_phi.to_bits() == phi0.to_bits()));
        }
    }

    #[test]
    fn averaged_is_pointwise_mean() {
        let cfg = tiny("m_list = 3\nk_list = 2\nreps = 3\niters = 20\n");
        let res = run_sweep(&cfg).unwrap();
        let cr = &res.configs[0];
        assert_eq!(cr.averaged.len(), 20);
        for (i, &(t, v)) in cr.averaged.iter().enumerate() {
            let mean = cr.runs.iter().map(|r| r.rows[i].phi).sum::<f64>() / 3.0;
            assert_eq!(t, i + 1);
            assert_eq!(v, mean);
            assert!(v >= cr.phi_min);
        }
        let rows = cr.convergence_rows();
        assert_eq!(rows[0].3, cr.phi0 - cr.phi_min);
    }
}
