//! `kmlab` command line.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on IO errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::ExperimentConfig;
use super::sweep::{emit_plots_data, run_sweep};
use crate::dataset::{Dataset, FileFormat};
use crate::error::{Error, Result};
use crate::kmeans::{self, Centroids, Clustering};
use crate::lloyd;
use crate::seeding::{SeedMethod, SeedSpec};
use crate::stochastic::{self, LearningRate, StochasticConfig, StopRule};
use crate::theory;

#[derive(Parser, Debug)]
#[command(
    name = "kmlab",
    version,
    about = "Batch, online and mini-batch k-means with convergence diagnostics"
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sweep configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Data file (svmlight or dense CSV).
    #[arg(long)]
    dataset: PathBuf,
    /// Override format detection (svmlight, csv).
    #[arg(long)]
    format: Option<FileFormat>,
    /// Scale every point to unit length.
    #[arg(long)]
    normalize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self
            .format
            .unwrap_or_else(|| FileFormat::from_path(&self.dataset));
        let ds = Dataset::load(&self.dataset, format, None)?;
        Ok(if self.normalize { ds.normalized() } else { ds })
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Seeding {
    Random,
    Buckshot,
}

#[derive(Args, Debug)]
struct InitArgs {
    /// Number of clusters (ignored with --init).
    #[arg(long, short)]
    k: Option<usize>,
    /// Start from these centers instead of seeding.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    seeding: Seeding,
    /// Buckshot sample size.
    #[arg(long)]
    m0: Option<usize>,
}

impl InitArgs {
    fn spec(&self, seed: u64) -> Result<SeedSpec> {
        let k = self
            .k
            .ok_or_else(|| Error::invalid("k", "required unless --init is given"))?;
        let method = match self.seeding {
            Seeding::Random => SeedMethod::RandomPoints,
            Seeding::Buckshot => SeedMethod::Buckshot {
                m0: self
                    .m0
                    .ok_or_else(|| Error::invalid("m0", "required for buckshot"))?,
            },
        };
        Ok(SeedSpec { method, k, seed })
    }

    fn centers(&self, ds: &Dataset, seed: u64) -> Result<Centroids> {
        match &self.init {
            Some(path) => Centroids::load(path),
            None => self.spec(seed)?.run(ds),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Rate {
    Flat,
    Bbs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One stochastic k-means run.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        /// Mini-batch size.
        #[arg(long, short, default_value_t = 1)]
        m: usize,
        #[arg(long, value_enum, default_value = "flat")]
        rate: Rate,
        #[arg(long, default_value_t = 1.0)]
        c_prime: f64,
        #[arg(long, default_value_t = 1.0)]
        t0: f64,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        cost_eval_every: usize,
        /// Run all iterations instead of stopping on stalled cost.
        #[arg(long)]
        no_stop: bool,
        /// Write the per-iteration trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write final centers here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch k-means (Lloyd).
    Batch {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        /// Write final centers here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write final labels here.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Emit initial centers.
    Seed {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        /// Write centers here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sweep described by --config.
    Sweep {
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Clusterability, stationarity and stability diagnostics for a solution.
    Verify {
        #[command(flatten)]
        data: DataArgs,
        /// Centers of the solution.
        #[arg(long)]
        solution: PathBuf,
        /// Labels of the solution (default: nearest-center assignment).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        /// Basin probe trials (0 skips the probe).
        #[arg(long, default_value_t = 0)]
        probe_trials: usize,
        /// Largest perturbation, as a multiple of the solution cost.
        #[arg(long, default_value_t = 0.1)]
        b0: f64,
    },
    /// List every stationary clustering of a tiny dataset.
    Enumerate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, short)]
        k: usize,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: thread pool: {e}");
            return 1;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| dispatch(&cli, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn save_or_print(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => write!(out, "{text}").map_err(|e| Error::io("<stdout>", e)),
    }
}

fn emit(out: &mut dyn Write, text: String) -> Result<()> {
    write!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit {
            data,
            init,
            m,
            rate,
            c_prime,
            t0,
            iters,
            cost_eval_every,
            no_stop,
            trace,
            out: centers_out,
        } => {
            let ds = data.load()?;
            let c0 = init.centers(&ds, cli.seed)?;
            let policy = match rate {
                Rate::Flat => LearningRate::Flat {
                    c_prime: *c_prime,
                    t0: *t0,
                },
                Rate::Bbs => LearningRate::Bbs,
            };
            let mut cfg =
                StochasticConfig::new(*m, policy, *iters, crate::rng::derive_seed(cli.seed, &[0]));
            cfg.cost_eval_every = *cost_eval_every;
            cfg.stop = if *no_stop {
                None
            } else {
                Some(StopRule::default())
            };
            let run = stochastic::run(&ds, &c0, &cfg)?;
            if let Some(p) = trace {
                run.trace.save(p)?;
            }
            if let Some(p) = centers_out {
                run.centroids.save(p)?;
            }
            let phi = kmeans::voronoi_cost(&ds, &run.centroids)?;
            emit(
                out,
                format!(
                    "iterations = {}\nstopped = {:?}\nphi0 = {:?}\nphi = {:?}\nactive = {}\n",
                    run.trace.rows.len(),
                    run.trace.stopped,
                    run.trace.initial_phi,
                    phi,
                    run.centroids.active_count()
                ),
            )
        }
        Command::Batch {
            data,
            init,
            max_iters,
            out: centers_out,
            labels,
        } => {
            let ds = data.load()?;
            let c0 = init.centers(&ds, cli.seed)?;
            let res = lloyd::lloyd_run(&ds, &c0, *max_iters)?;
            if let Some(p) = centers_out {
                res.centroids.save(p)?;
            }
            if let Some(p) = labels {
                res.clustering.save(p)?;
            }
            let phi = res.trace.costs.last().copied().unwrap_or(f64::NAN);
            emit(
                out,
                format!(
                    "iterations = {}\nstopped = {:?}\nphi = {:?}\nactive = {}\ndegenerate = {}\n",
                    res.iterations(),
                    res.stopped,
                    phi,
                    res.centroids.active_count(),
                    res.trace.degenerate_events.len()
                ),
            )
        }
        Command::Seed {
            data,
            init,
            out: centers_out,
        } => {
            let ds = data.load()?;
            let c = init.spec(cli.seed)?.run(&ds)?;
            save_or_print(out, centers_out.as_deref(), &c.to_csv())
        }
        Command::Sweep { out_dir } => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::invalid("config", "sweep needs --config <file>"))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(d) = out_dir {
                cfg.out_dir = d.clone();
            }
            let res = run_sweep(&cfg)?;
            let files = emit_plots_data(&res, &cfg.out_dir)?;
            let mut text = String::new();
            for cr in &res.configs {
                let slope = cr.slope.map_or("missing".to_string(), |f| {
                    format!("{:.4} (r2 {:.4})", f.slope, f.r2)
                });
                text.push_str(&format!(
                    "m={} k={} {}: terminal phi {:?}, slope {slope}\n",
                    cr.m,
                    cr.k,
                    cr.policy.label(),
                    cr.terminal_phi()
                ));
            }
            text.push_str(&format!(
                "wrote {} files to {}\n",
                files.len(),
                cfg.out_dir.display()
            ));
            emit(out, text)
        }
        Command::Verify {
            data,
            solution,
            labels,
            alpha,
            probe_trials,
            b0,
        } => {
            let ds = data.load()?;
            let c = Centroids::load(solution)?;
            let a = match labels {
                Some(p) => Clustering::load(p, Some(c.k()))?,
                None => kmeans::assign(&ds, &c)?.clustering,
            };
            let report = theory::check_assumptions(&ds, &a, &c, *alpha)?;
            let st = lloyd::is_stationary(&ds, &a)?;
            let mut text = report.to_kv();
            text.push_str(&format!(
                "stationary = {}\nboundary = {}\n",
                st.stationary, st.boundary
            ));
            if *probe_trials > 0 {
                let probe = theory::stability_probe(
                    &ds,
                    &a,
                    &kmeans::means(&ds, &a)?,
                    *b0,
                    *probe_trials,
                    cli.seed,
                )?;
                text.push_str(&format!(
                    "probe_trials = {}\nprobe_alpha_estimate = {:?}\nprobe_violations = {}\n",
                    probe.trials.len(),
                    probe.alpha_estimate,
                    probe.violations()
                ));
            }
            emit(out, text)
        }
        Command::Enumerate { data, k } => {
            let ds = data.load()?;
            let all = lloyd::enumerate_stationary(&ds, *k)?;
            let mut text = format!("stationary = {}\n", all.len());
            for (a, c) in &all {
                let labels: Vec<String> = a.labels().iter().map(|l| l.to_string()).collect();
                let phi = kmeans::cost(&ds, c, a)?.total;
                text.push_str(&format!("{} phi={phi:?}\n", labels.join(" ")));
            }
            emit(out, text)
        }
    }
}
