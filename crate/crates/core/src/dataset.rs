//! Point sets: dense and sparse points, file formats, and the planted-cluster generator.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kmeans::{Centroids, Clustering};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub enum Coords {
    Dense(Vec<f64>),
    /// Strictly increasing indices with matching values.
    Sparse {
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// A point in R^d with its cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Coords,
    sq_norm: f64,
}

impl Point {
    pub fn dense(values: Vec<f64>) -> Self {
        let sq_norm = values.iter().map(|v| v * v).sum();
        Point {
            coords: Coords::Dense(values),
            sq_norm,
        }
    }

    pub fn sparse(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid(
                "sparse point",
                "index and value counts differ",
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "sparse point",
                "indices must be strictly increasing",
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: last + 1,
                });
            }
        }
        let sq_norm = values.iter().map(|v| v * v).sum();
        Ok(Point {
            coords: Coords::Sparse { indices, values },
            sq_norm,
        })
    }

    pub fn coords(&self) -> &Coords {
        &self.coords
    }

    pub fn squared_norm(&self) -> f64 {
        self.sq_norm
    }

    /// Number of stored coordinates.
    pub fn stored(&self) -> usize {
        match &self.coords {
            Coords::Dense(v) => v.len(),
            Coords::Sparse { indices, .. } => indices.len(),
        }
    }

    /// Largest coordinate index this point needs, plus one.
    fn min_dim(&self) -> usize {
        match &self.coords {
            Coords::Dense(v) => v.len(),
            Coords::Sparse { indices, .. } => indices.last().map_or(0, |&i| i + 1),
        }
    }

    pub fn get(&self, j: usize) -> f64 {
        match &self.coords {
            Coords::Dense(v) => v[j],
            Coords::Sparse { indices, values } => {
                indices.binary_search(&j).map_or(0.0, |pos| values[pos])
            }
        }
    }

    pub fn dot(&self, c: &[f64]) -> f64 {
        match &self.coords {
            Coords::Dense(v) => v.iter().zip(c).map(|(a, b)| a * b).sum(),
            Coords::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&j, v)| v * c[j]).sum()
            }
        }
    }

    /// Squared distance to `c` (whose squared norm is `c_sq_norm`).
    ///
    /// Dense points use the direct difference; sparse points use
    /// ‖x‖² − 2⟨x,c⟩ + ‖c‖² with the cached norm, clamped at zero.
    pub fn sq_dist(&self, c: &[f64], c_sq_norm: f64) -> f64 {
        match &self.coords {
            Coords::Dense(v) => v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
            Coords::Sparse { .. } => (self.sq_norm - 2.0 * self.dot(c) + c_sq_norm).max(0.0),
        }
    }

    /// Squared distance by coordinate-wise differences over every dimension.
    pub fn sq_dist_naive(&self, c: &[f64]) -> f64 {
        match &self.coords {
            Coords::Dense(v) => v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
            Coords::Sparse { indices, values } => {
                let mut next = 0;
                let mut total = 0.0;
                for (j, &cj) in c.iter().enumerate() {
                    let xj = if next < indices.len() && indices[next] == j {
                        next += 1;
                        values[next - 1]
                    } else {
                        0.0
                    };
                    total += (xj - cj) * (xj - cj);
                }
                total
            }
        }
    }

    /// `acc += self`.
    pub fn add_to(&self, acc: &mut [f64]) {
        match &self.coords {
            Coords::Dense(v) => acc.iter_mut().zip(v).for_each(|(a, b)| *a += b),
            Coords::Sparse { indices, values } => {
                for (&j, v) in indices.iter().zip(values) {
                    acc[j] += v;
                }
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        match &self.coords {
            Coords::Dense(v) => v.clone(),
            Coords::Sparse { indices, values } => {
                let mut out = vec![0.0; dim];
                for (&j, &v) in indices.iter().zip(values) {
                    out[j] = v;
                }
                out
            }
        }
    }

    fn scaled(&self, s: f64) -> Point {
        match &self.coords {
            Coords::Dense(v) => Point::dense(v.iter().map(|x| x * s).collect()),
            Coords::Sparse { indices, values } => {
                let values: Vec<f64> = values.iter().map(|x| x * s).collect();
                let sq_norm = values.iter().map(|v| v * v).sum();
                Point {
                    coords: Coords::Sparse {
                        indices: indices.clone(),
                        values,
                    },
                    sq_norm,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// `<label> <idx>:<val> ...`, 1-based indices.
    SvmLight,
    /// One point per line, comma-separated, no header.
    CsvDense,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svmlight" | "svm" | "libsvm" => Ok(FileFormat::SvmLight),
            "csv" | "csv-dense" => Ok(FileFormat::CsvDense),
            other => Err(Error::invalid(
                "format",
                format!("unknown format '{other}'"),
            )),
        }
    }
}

impl FileFormat {
    /// Guess from the file extension: `.csv` is dense, anything else svmlight.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::CsvDense,
            _ => FileFormat::SvmLight,
        }
    }
}

/// An immutable set of `n >= 1` points in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
    dim: usize,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub dim: usize,
    pub density: f64,
    pub bbox_diagonal: f64,
}

impl Dataset {
    pub fn new(points: Vec<Point>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoPoints);
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        for p in &points {
            let ok = match p.coords() {
                Coords::Dense(v) => v.len() == dim,
                Coords::Sparse { .. } => p.min_dim() <= dim,
            };
            if !ok {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.min_dim(),
                });
            }
        }
        Ok(Dataset {
            points,
            dim,
            labels: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Dataset::new(rows.into_iter().map(Point::dense).collect(), dim)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::invalid("labels", "one label per point required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn is_sparse(&self) -> bool {
        self.points
            .iter()
            .any(|p| matches!(p.coords(), Coords::Sparse { .. }))
    }

    /// Scale every nonzero point to unit L2 norm.
    pub fn normalized(&self) -> Dataset {
        let points = self
            .points
            .iter()
            .map(|p| {
                let norm = p.squared_norm().sqrt();
                if norm > 0.0 {
                    p.scaled(1.0 / norm)
                } else {
                    p.clone()
                }
            })
            .collect();
        Dataset {
            points,
            dim: self.dim,
            labels: self.labels.clone(),
        }
    }

    pub fn describe(&self) -> Summary {
        let n = self.points.len();
        let stored: usize = self.points.iter().map(Point::stored).sum();
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        let mut seen = vec![0usize; self.dim];
        for p in &self.points {
            match p.coords() {
                Coords::Dense(v) => {
                    for (j, &x) in v.iter().enumerate() {
                        lo[j] = lo[j].min(x);
                        hi[j] = hi[j].max(x);
                        seen[j] += 1;
                    }
                }
                Coords::Sparse { indices, values } => {
                    for (&j, &x) in indices.iter().zip(values) {
                        lo[j] = lo[j].min(x);
                        hi[j] = hi[j].max(x);
                        seen[j] += 1;
                    }
                }
            }
        }
        let mut diag = 0.0;
        for j in 0..self.dim {
            // implicit zeros
            if seen[j] < n {
                lo[j] = lo[j].min(0.0);
                hi[j] = hi[j].max(0.0);
            }
            diag += (hi[j] - lo[j]) * (hi[j] - lo[j]);
        }
        Summary {
            n,
            dim: self.dim,
            density: stored as f64 / (n as f64 * self.dim as f64),
            bbox_diagonal: diag.sqrt(),
        }
    }

    /// Load a point file. `dim_override` fixes d; it must cover every index in the file.
    pub fn load(path: &Path, format: FileFormat, dim_override: Option<usize>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = Vec::new();
        for line in reader.lines() {
            lines.push(line.map_err(|e| Error::io(path, e))?);
        }
        match format {
            FileFormat::SvmLight => parse_svmlight(lines.iter().map(String::as_str), dim_override),
            FileFormat::CsvDense => parse_csv(lines.iter().map(String::as_str)),
        }
    }

    /// Write as svmlight: stored coordinates only, 1-based indices. Dense zeros are omitted.
    pub fn write_svmlight(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, p) in self.points.iter().enumerate() {
            let label = self.labels.as_ref().map_or("0", |l| l[i].as_str());
            out.push_str(label);
            match p.coords() {
                Coords::Dense(v) => {
                    for (j, x) in v.iter().enumerate().filter(|(_, x)| **x != 0.0) {
                        let _ = write!(out, " {}:{:?}", j + 1, x);
                    }
                }
                Coords::Sparse { indices, values } => {
                    for (j, x) in indices.iter().zip(values) {
                        let _ = write!(out, " {}:{:?}", j + 1, x);
                    }
                }
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&render_row(&p.to_dense(self.dim)));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn render_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

pub fn parse_svmlight<'a>(
    lines: impl Iterator<Item = &'a str>,
    dim_override: Option<usize>,
) -> Result<Dataset> {
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in lines.enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let mut tokens = line.split_whitespace().peekable();
        let label = match tokens.peek() {
            Some(t) if !t.contains(':') => tokens.next().unwrap_or_default().to_string(),
            _ => String::new(),
        };
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected <index>:<value>, got '{tok}'"),
            })?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value '{val}'"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value '{val}'"),
                });
            }
            pairs.push((idx - 1, val));
        }
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: line_no,
                msg: "duplicate feature index".into(),
            });
        }
        if let Some(&(last, _)) = pairs.last() {
            max_index = max_index.max(last + 1);
        }
        labels.push(label);
        rows.push(pairs.into_iter().unzip());
    }
    if rows.is_empty() {
        return Err(Error::NoPoints);
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::DimensionOverride {
                requested: d,
                seen: max_index,
            })
        }
        Some(d) => d,
        None => max_index.max(1),
    };
    let points = rows
        .into_iter()
        .map(|(idx, val)| Point::sparse(idx, val, dim))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(points, dim)?.with_labels(labels)
}

pub fn parse_csv<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in lines.enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad value '{t}'"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoPoints);
    }
    Dataset::from_rows(rows)
}

/// Parameters of a planted instance: `sizes[r]` points uniform in the ball of
/// `radius` around `centers[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub centers: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub radius: f64,
    pub seed: u64,
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: Dataset,
    pub centers: Centroids,
    pub clustering: Clustering,
}

impl SyntheticSpec {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::invalid("synthetic.center", "at least one center"));
        }
        if self.sizes.len() != self.centers.len() {
            return Err(Error::invalid(
                "synthetic.size",
                format!(
                    "{} sizes for {} centers",
                    self.sizes.len(),
                    self.centers.len()
                ),
            ));
        }
        if self.sizes.contains(&0) {
            return Err(Error::invalid(
                "synthetic.size",
                "every cluster needs a point",
            ));
        }
        let d = self.centers[0].len();
        if d == 0 || self.centers.iter().any(|c| c.len() != d) {
            return Err(Error::invalid(
                "synthetic.center",
                "centers must share a positive dimension",
            ));
        }
        if self.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthetic.center", "non-finite coordinate"));
        }
        for (r, a) in self.centers.iter().enumerate() {
            if self.centers[..r].contains(a) {
                return Err(Error::invalid(
                    "synthetic.center",
                    "centers must be distinct",
                ));
            }
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::invalid(
                "synthetic.radius",
                "must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    /// Draw the instance. Points are laid out cluster by cluster.
    pub fn generate(&self) -> Result<Planted> {
        self.validate()?;
        let d = self.centers[0].len();
        let mut rng = rng_from_seed(self.seed);
        let mut rows = Vec::with_capacity(self.sizes.iter().sum());
        let mut labels = Vec::with_capacity(rows.capacity());
        for (r, (center, &size)) in self.centers.iter().zip(&self.sizes).enumerate() {
            for _ in 0..size {
                let dir: Vec<f64> = loop {
                    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = g.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break g.into_iter().map(|v| v / norm).collect();
                    }
                };
                let u: f64 = rng.random();
                let rad = self.radius * u.powf(1.0 / d as f64);
                rows.push(center.iter().zip(&dir).map(|(c, v)| c + rad * v).collect());
                labels.push(r);
            }
        }
        let dataset = Dataset::from_rows(rows)?
            .with_labels(labels.iter().map(|r| r.to_string()).collect())?;
        Ok(Planted {
            dataset,
            centers: Centroids::new(self.centers.clone())?,
            clustering: Clustering::new(labels, self.k())?,
        })
    }
}
