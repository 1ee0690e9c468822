//! Flat `key = value` sweep configuration.
//!
//! ```text
//! # planted instance
//! synthetic.center = 0,0
//! synthetic.center = 10,0
//! synthetic.size = 100
//! synthetic.size = 100
//! synthetic.radius = 1
//! m_list = 1, 10, 100
//! k_list = 2
//! policy.1.kind = flat
//! policy.1.c_prime = 2
//! policy.1.t0 = 3
//! policy.2.kind = bbs
//! reps = 5
//! iters = 200
//! ```
//!
//! List keys accept comma-separated values, repeated keys, or both.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{Dataset, FileFormat, SyntheticSpec};
use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::seeding::SeedMethod;
use crate::stochastic::LearningRate;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File {
        path: PathBuf,
        format: Option<FileFormat>,
    },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::File { path, format } => {
                let format = format.unwrap_or_else(|| FileFormat::from_path(path));
                Dataset::load(path, format, None)
            }
            DataSource::Synthetic(spec) => Ok(spec.generate()?.dataset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub m_list: Vec<usize>,
    pub k_list: Vec<usize>,
    pub policies: Vec<LearningRate>,
    pub reps: usize,
    pub iters: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub normalize: bool,
    pub cost_eval_every: usize,
    pub seeding: SeedMethod,
}

fn parse_num<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{key}: cannot parse {:?}", v.trim()),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, line, s))
        .collect()
}

fn parse_bool(key: &str, line: usize, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Parse {
            line,
            msg: format!("{key}: expected a boolean, got {other:?}"),
        }),
    }
}

#[derive(Default)]
struct PolicyDraft {
    kind: Option<String>,
    c_prime: Option<f64>,
    t0: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dataset: Option<PathBuf> = None;
        let mut format: Option<FileFormat> = None;
        let mut centers: Vec<Vec<f64>> = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        let mut radius = 1.0;
        let mut synth_seed = 0u64;
        let mut m_list = Vec::new();
        let mut k_list = Vec::new();
        let mut drafts: BTreeMap<usize, PolicyDraft> = BTreeMap::new();
        let mut reps = 5;
        let mut iters = 100;
        let mut seed = 0u64;
        let mut out_dir = PathBuf::from("out");
        let mut normalize = false;
        let mut cost_eval_every = 1;
        let mut seeding_kind = String::from("random");
        let mut m0: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got {body:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "dataset" => dataset = Some(PathBuf::from(value)),
                "format" => {
                    format = Some(value.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("format: unknown {value:?}"),
                    })?)
                }
                "synthetic.center" => centers.push(parse_list(key, line, value)?),
                "synthetic.size" => sizes.extend(parse_list::<usize>(key, line, value)?),
                "synthetic.radius" => radius = parse_num(key, line, value)?,
                "synthetic.seed" => synth_seed = parse_num(key, line, value)?,
                "m_list" => m_list.extend(parse_list::<usize>(key, line, value)?),
                "k_list" => k_list.extend(parse_list::<usize>(key, line, value)?),
                "reps" => reps = parse_num(key, line, value)?,
                "iters" => iters = parse_num(key, line, value)?,
                "seed" => seed = parse_num(key, line, value)?,
                "out_dir" => out_dir = PathBuf::from(value),
                "normalize" => normalize = parse_bool(key, line, value)?,
                "cost_eval_every" => cost_eval_every = parse_num(key, line, value)?,
                "seeding" => seeding_kind = value.to_string(),
                "seeding.m0" => m0 = Some(parse_num(key, line, value)?),
                _ => {
                    let parts: Vec<&str> = key.split('.').collect();
                    if parts.len() != 3 || parts[0] != "policy" {
                        return Err(Error::Parse {
                            line,
                            msg: format!("unknown key {key:?}"),
                        });
                    }
                    let n: usize = parse_num(key, line, parts[1])?;
                    let draft = drafts.entry(n).or_default();
                    match parts[2] {
                        "kind" => draft.kind = Some(value.to_string()),
                        "c_prime" => draft.c_prime = Some(parse_num(key, line, value)?),
                        "t0" => draft.t0 = Some(parse_num(key, line, value)?),
                        other => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("unknown policy field {other:?}"),
                            })
                        }
                    }
                }
            }
        }

        let mut problems: Vec<(String, String)> = Vec::new();
        let source = match (dataset, centers.is_empty()) {
            (Some(path), true) => Some(DataSource::File { path, format }),
            (None, false) => Some(DataSource::Synthetic(SyntheticSpec {
                centers,
                sizes,
                radius,
                seed: synth_seed,
            })),
            (Some(_), false) => {
                problems.push((
                    "dataset".into(),
                    "give either dataset or synthetic.*, not both".into(),
                ));
                None
            }
            (None, true) => {
                problems.push((
                    "dataset".into(),
                    "missing (set dataset or synthetic.center)".into(),
                ));
                None
            }
        };
        let mut policies = Vec::new();
        for (n, d) in drafts {
            match d.kind.as_deref() {
                Some("flat") => match (d.c_prime, d.t0) {
                    (Some(c_prime), Some(t0)) => policies.push(LearningRate::Flat { c_prime, t0 }),
                    _ => problems.push((format!("policy.{n}"), "flat needs c_prime and t0".into())),
                },
                Some("bbs") => policies.push(LearningRate::Bbs),
                Some(other) => problems.push((
                    format!("policy.{n}.kind"),
                    format!("unknown kind {other:?}"),
                )),
                None => problems.push((format!("policy.{n}.kind"), "missing".into())),
            }
        }
        let seeding = match seeding_kind.as_str() {
            "random" => SeedMethod::RandomPoints,
            "buckshot" => match m0 {
                Some(m0) => SeedMethod::Buckshot { m0 },
                None => {
                    problems.push(("seeding.m0".into(), "required for buckshot".into()));
                    SeedMethod::RandomPoints
                }
            },
            other => {
                problems.push(("seeding".into(), format!("unknown method {other:?}")));
                SeedMethod::RandomPoints
            }
        };
        if !problems.is_empty() {
            return Err(join_problems(problems));
        }
        let cfg = ExperimentConfig {
            source: source.expect("set when no problems"),
            m_list,
            k_list,
            policies,
            reps,
            iters,
            seed,
            out_dir,
            normalize,
            cost_eval_every,
            seeding,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every violated constraint, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<(String, String)> = Vec::new();
        let mut need = |ok: bool, field: &str, msg: &str| {
            if !ok {
                problems.push((field.to_string(), msg.to_string()));
            }
        };
        need(self.reps >= 1, "reps", "must be >= 1");
        need(self.iters >= 1, "iters", "must be >= 1");
        need(
            !self.m_list.is_empty(),
            "m_list",
            "must list at least one mini-batch size",
        );
        need(
            self.m_list.iter().all(|&m| m >= 1),
            "m_list",
            "every m must be >= 1",
        );
        need(
            !self.k_list.is_empty(),
            "k_list",
            "must list at least one k",
        );
        need(
            self.k_list.iter().all(|&k| k >= 1),
            "k_list",
            "every k must be >= 1",
        );
        need(
            !self.policies.is_empty(),
            "policy",
            "at least one policy.N.kind is required",
        );
        need(self.cost_eval_every >= 1, "cost_eval_every", "must be >= 1");
        if let SeedMethod::Buckshot { m0 } = self.seeding {
            need(
                self.k_list.iter().all(|&k| m0 >= k),
                "seeding.m0",
                "must be >= every k in k_list",
            );
        }
        for (i, p) in self.policies.iter().enumerate() {
            if let Err(Error::Invalid { field, msg }) = p.validate() {
                problems.push((format!("policy[{}].{field}", i + 1), msg));
            }
        }
        if let DataSource::Synthetic(spec) = &self.source {
            if let Err(Error::Invalid { field, msg }) = spec.validate() {
                problems.push((format!("synthetic.{field}"), msg));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(join_problems(problems))
        }
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match &self.source {
            DataSource::File { path, format } => {
                let _ = writeln!(out, "dataset = {}", path.display());
                if let Some(f) = format {
                    let name = match f {
                        FileFormat::SvmLight => "svmlight",
                        FileFormat::CsvDense => "csv",
                    };
                    let _ = writeln!(out, "format = {name}");
                }
            }
            DataSource::Synthetic(spec) => {
                for c in &spec.centers {
                    let row: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
                    let _ = writeln!(out, "synthetic.center = {}", row.join(","));
                }
                for s in &spec.sizes {
                    let _ = writeln!(out, "synthetic.size = {s}");
                }
                let _ = writeln!(out, "synthetic.radius = {:?}", spec.radius);
                let _ = writeln!(out, "synthetic.seed = {}", spec.seed);
            }
        }
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "m_list = {}", join(&self.m_list));
        let _ = writeln!(out, "k_list = {}", join(&self.k_list));
        for (i, p) in self.policies.iter().enumerate() {
            match p {
                LearningRate::Flat { c_prime, t0 } => {
                    let _ = writeln!(out, "policy.{}.kind = flat", i + 1);
                    let _ = writeln!(out, "policy.{}.c_prime = {c_prime:?}", i + 1);
                    let _ = writeln!(out, "policy.{}.t0 = {t0:?}", i + 1);
                }
                LearningRate::Bbs => {
                    let _ = writeln!(out, "policy.{}.kind = bbs", i + 1);
                }
            }
        }
        let _ = writeln!(out, "reps = {}", self.reps);
        let _ = writeln!(out, "iters = {}", self.iters);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(out, "normalize = {}", self.normalize);
        let _ = writeln!(out, "cost_eval_every = {}", self.cost_eval_every);
        match self.seeding {
            SeedMethod::RandomPoints => {
                let _ = writeln!(out, "seeding = random");
            }
            SeedMethod::Buckshot { m0 } => {
                let _ = writeln!(out, "seeding = buckshot");
                let _ = writeln!(out, "seeding.m0 = {m0}");
            }
        }
        out
    }

    /// Digest of everything except `out_dir`, so moving the output does not change it.
    pub fn digest(&self) -> u64 {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        fnv1a(text.as_bytes())
    }
}

fn join_problems(problems: Vec<(String, String)>) -> Error {
    if problems.len() == 1 {
        let (field, msg) = problems.into_iter().next().expect("one problem");
        return Error::Invalid { field, msg };
    }
    let fields: Vec<String> = problems.iter().map(|(f, _)| f.clone()).collect();
    let msg: Vec<String> = problems.iter().map(|(f, m)| format!("{f}: {m}")).collect();
    Error::Invalid {
        field: fields.join(", "),
        msg: msg.join("; "),
    }
}
