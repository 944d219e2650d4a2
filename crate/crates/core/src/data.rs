//! Datasets of candidate molecules.
//!
//! # CSV schema
//!
//! ```text
//! # y_range=4.6,8.0
//! # provenance=real
//! id,y,f1,f2,...,fd
//! mol-1,6.2,0,3,...,1
//! ```
//!
//! Metadata lines start with `#` and carry `key=value` pairs; `y_range` is
//! enforced on load, `provenance` and `name` are informational.
//!
//! # Descriptor text
//!
//! One molecule per line, `id<TAB>y<TAB>token token ...`, where each token is a
//! signature descriptor such as `[C]([C]=[C])`. Features are token counts over
//! the sorted corpus vocabulary.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpBelief, KernelSpec};
use crate::linalg::BASE_JITTER;
use crate::rng::{standard_normal, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Real,
    Projected,
    Synthetic,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Projected => "projected",
            Provenance::Synthetic => "synthetic",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "projected" => Ok(Provenance::Projected),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::data(format!("unknown provenance '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    /// True rewards `y*` (−log IC50).
    pub targets: Vec<f64>,
    pub provenance: Provenance,
    /// Declared target range, when the file carries one.
    pub y_range: Option<(f64, f64)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Largest true target, `r*`.
    pub fn best_target(&self) -> f64 {
        self.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn target_range(&self) -> (f64, f64) {
        let lo = self.targets.iter().copied().fold(f64::INFINITY, f64::min);
        (lo, self.best_target())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.features.len() || self.ids.len() != self.targets.len() {
            return Err(Error::data(format!(
                "dataset '{}' has {} ids, {} feature rows and {} targets",
                self.name,
                self.ids.len(),
                self.features.len(),
                self.targets.len()
            )));
        }
        let d = self.dim();
        let mut seen = HashSet::new();
        for (i, id) in self.ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate id '{id}'")));
            }
            if self.features[i].len() != d {
                return Err(Error::data(format!(
                    "row for '{id}' has {} features, expected {d}",
                    self.features[i].len()
                )));
            }
            if !self.targets[i].is_finite() || self.features[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("row for '{id}' contains a non-finite value")));
            }
        }
        if let Some((lo, hi)) = self.y_range {
            if let Some(i) = self.targets.iter().position(|&y| y < lo || y > hi) {
                return Err(Error::data(format!(
                    "target {} of '{}' lies outside the declared range [{lo}, {hi}]",
                    self.targets[i], self.ids[i]
                )));
            }
        }
        Ok(())
    }
}

/// A parsed CSV table whose targets may be absent (candidate files for live campaigns).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    pub name: String,
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub y_range: Option<(f64, f64)>,
}

#[derive(Default)]
struct Metadata {
    y_range: Option<(f64, f64)>,
    provenance: Option<Provenance>,
    name: Option<String>,
}

fn parse_metadata(text: &str) -> Result<Metadata> {
    let mut meta = Metadata::default();
    for line in text.lines().map(str::trim).filter(|l| l.starts_with('#')) {
        for pair in line.trim_start_matches('#').split_whitespace() {
            let Some((key, value)) = pair.split_once('=') else {
                continue;
            };
            match key {
                "y_range" => {
                    let (lo, hi) = value
                        .split_once(',')
                        .ok_or_else(|| Error::data(format!("malformed y_range '{value}'")))?;
                    let lo: f64 = lo
                        .trim()
                        .parse()
                        .map_err(|_| Error::data(format!("malformed y_range '{value}'")))?;
                    let hi: f64 = hi
                        .trim()
                        .parse()
                        .map_err(|_| Error::data(format!("malformed y_range '{value}'")))?;
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        return Err(Error::data(format!(
                            "y_range lower bound {lo} exceeds upper bound {hi}"
                        )));
                    }
                    meta.y_range = Some((lo, hi));
                }
                "provenance" => meta.provenance = Some(Provenance::parse(value)?),
                "name" => meta.name = Some(value.to_string()),
                _ => {}
            }
        }
    }
    Ok(meta)
}

fn parse_table(text: &str, default_name: &str) -> Result<CandidateTable> {
    let meta = parse_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "y" {
        return Err(Error::data(format!(
            "header must be 'id,y,f1,...,fd' with at least one feature column, got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let d = header.len() - 2;
    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, len, .. } => Error::data(format!(
                "row at line {} has {} cells, expected {}",
                pos.as_ref().map_or(0, |p| p.line()),
                len,
                d + 2
            )),
            _ => Error::from(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::data(format!("row at line {line}: empty id")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::data(format!("row at line {line}: duplicate id '{id}'")));
        }
        let y = match &record[1] {
            "" => None,
            cell => Some(parse_cell(cell, line, "y")?),
        };
        let mut row = Vec::with_capacity(d);
        for c in 0..d {
            row.push(parse_cell(&record[c + 2], line, &header[c + 2])?);
        }
        ids.push(id);
        features.push(row);
        targets.push(y);
    }
    if ids.is_empty() {
        return Err(Error::data("dataset has no rows"));
    }
    let known = targets.iter().filter(|t| t.is_some()).count();
    let targets = if known == targets.len() {
        Some(targets.into_iter().flatten().collect())
    } else if known == 0 {
        None
    } else {
        let line = targets.iter().position(Option::is_none).unwrap_or(0);
        return Err(Error::data(format!(
            "targets must be all present or all absent; row {} (id '{}') has none",
            line + 1,
            ids[line]
        )));
    };
    Ok(CandidateTable {
        name: meta.name.unwrap_or_else(|| default_name.to_string()),
        ids,
        features,
        targets,
        provenance: meta.provenance.unwrap_or_default(),
        y_range: meta.y_range,
    })
}

fn parse_cell(cell: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        Error::data(format!(
            "row at line {line}, column '{column}': '{cell}' is not a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::data(format!(
            "row at line {line}, column '{column}': value is not finite"
        )));
    }
    Ok(v)
}

/// Parses a candidate table whose `y` column may be entirely blank.
pub fn parse_candidates(text: &str, name: &str) -> Result<CandidateTable> {
    let table = parse_table(text, name)?;
    if let (Some(t), Some((lo, hi))) = (&table.targets, table.y_range) {
        if let Some(i) = t.iter().position(|&y| y < lo || y > hi) {
            return Err(Error::data(format!(
                "target {} of '{}' lies outside the declared range [{lo}, {hi}]",
                t[i], table.ids[i]
            )));
        }
    }
    Ok(table)
}

pub fn parse_dataset(text: &str, name: &str) -> Result<Dataset> {
    let table = parse_table(text, name)?;
    let targets = table
        .targets
        .ok_or_else(|| Error::data("dataset has no targets in column 'y'"))?;
    let data = Dataset {
        name: table.name,
        ids: table.ids,
        features: table.features,
        targets,
        provenance: table.provenance,
        y_range: table.y_range,
    };
    data.validate()?;
    Ok(data)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

/// Loads a dataset CSV.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, &stem(path))
}

/// Loads a dataset from either a CSV file or, for `.tsv`/`.txt`/`.desc`
/// files, descriptor text that is vectorized on the fly.
pub fn load_any(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("txt") | Some("desc") => {
            let table = DescriptorTable::load(path)?;
            descriptors_to_dataset(&table, &stem(path))
        }
        _ => load_dataset(path),
    }
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# name={} provenance={}",
        data.name.replace(char::is_whitespace, "_"),
        data.provenance.as_str()
    );
    if let Some((lo, hi)) = data.y_range {
        let _ = writeln!(out, "# y_range={lo},{hi}");
    }
    out.push_str("id,y");
    for c in 1..=data.dim() {
        let _ = write!(out, ",f{c}");
    }
    out.push('\n');
    for ((id, y), row) in data.ids.iter().zip(&data.targets).zip(&data.features) {
        let _ = write!(out, "{},{y}", csv_field(id));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_csv(data))?;
    Ok(())
}

/// One signature descriptor token and its height (parenthesis nesting depth).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub token: String,
    pub height: usize,
}

pub fn parse_descriptor(token: &str) -> Result<Descriptor> {
    if token.is_empty() {
        return Err(Error::input("empty descriptor token"));
    }
    let mut depth = 0usize;
    let mut height = 0usize;
    let mut in_atom = false;
    for ch in token.chars() {
        match ch {
            '[' if in_atom => return Err(Error::input(format!("nested '[' in descriptor '{token}'"))),
            '[' => in_atom = true,
            ']' if !in_atom => return Err(Error::input(format!("unbalanced ']' in descriptor '{token}'"))),
            ']' => in_atom = false,
            '(' if !in_atom => {
                depth += 1;
                height = height.max(depth);
            }
            ')' if !in_atom => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::input(format!("unbalanced ')' in descriptor '{token}'")))?;
            }
            _ => {}
        }
    }
    if in_atom || depth != 0 {
        return Err(Error::input(format!("unbalanced brackets in descriptor '{token}'")));
    }
    Ok(Descriptor {
        token: token.to_string(),
        height,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub id: String,
    pub y: f64,
    pub descriptors: Vec<Descriptor>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DescriptorTable {
    pub records: Vec<DescriptorRecord>,
}

impl DescriptorTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(y), Some(tokens)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::data(format!("line {}: expected 'id<TAB>y<TAB>tokens'", n + 1)));
            };
            let y: f64 = y
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("line {}: target '{y}' is not a number", n + 1)))?;
            let descriptors = tokens
                .split_whitespace()
                .map(parse_descriptor)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::data(format!("line {}: {e}", n + 1)))?;
            if descriptors.is_empty() {
                return Err(Error::data(format!(
                    "line {}: molecule '{id}' has no descriptors",
                    n + 1
                )));
            }
            records.push(DescriptorRecord {
                id: id.trim().to_string(),
                y,
                descriptors,
            });
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Token-count vectors over the sorted corpus vocabulary.
///
/// Returns the vocabulary and one count vector per molecule, in table order.
pub fn vectorize_descriptors(table: &DescriptorTable) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if table.records.is_empty() {
        return Err(Error::input("descriptor corpus is empty"));
    }
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in &table.records {
        for d in &rec.descriptors {
            parse_descriptor(&d.token)?;
            vocab.insert(d.token.as_str(), 0);
        }
    }
    for (i, slot) in vocab.values_mut().enumerate() {
        *slot = i;
    }
    let features = table
        .records
        .iter()
        .map(|rec| {
            let mut v = vec![0.0; vocab.len()];
            for d in &rec.descriptors {
                v[vocab[d.token.as_str()]] += 1.0;
            }
            v
        })
        .collect();
    Ok((vocab.keys().map(|s| s.to_string()).collect(), features))
}

pub fn descriptors_to_dataset(table: &DescriptorTable, name: &str) -> Result<Dataset> {
    let (_, features) = vectorize_descriptors(table)?;
    let data = Dataset {
        name: name.to_string(),
        ids: table.records.iter().map(|r| r.id.clone()).collect(),
        features,
        targets: table.records.iter().map(|r| r.y).collect(),
        provenance: Provenance::Real,
        y_range: None,
    };
    data.validate()?;
    Ok(data)
}

/// Per-dimension affine map to mean 0, variance 1 (constant columns are only centered).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Self {
        let d = features.first().map_or(0, Vec::len);
        let n = features.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in features {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}

const MEDIAN_SAMPLE: usize = 1000;

/// Median Euclidean distance between distinct points (strided subsample above 1000 points).
/// Falls back to `1.0` when every point coincides.
pub fn median_pairwise_distance(features: &[Vec<f64>]) -> f64 {
    let stride = features.len().div_ceil(MEDIAN_SAMPLE).max(1);
    let pts: Vec<&Vec<f64>> = features.iter().step_by(stride).collect();
    let mut dists = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in 0..i {
            let sq: f64 = pts[i].iter().zip(pts[j]).map(|(a, b)| (a - b).powi(2)).sum();
            dists.push(sq.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

/// Feature jitter for synthetic candidates, as a fraction of each source column's spread.
pub const SYNTHETIC_JITTER: f64 = 0.05;

/// Builds a synthetic dataset by sampling a GP fitted to `source`.
///
/// Candidate features are convex combinations `λ a + (1 − λ) b` of two
/// distinct source rows (λ uniform on [0, 1)) plus Gaussian jitter with
/// per-column standard deviation `SYNTHETIC_JITTER · spread`. The GP works on
/// standardized source features with constant prior mean equal to the source
/// target mean; the targets are one joint posterior draw of `f` at all
/// candidates.
pub fn generate_synthetic(
    source: &Dataset,
    n_points: usize,
    seed: u64,
    kernel: KernelSpec,
    noise_variance: f64,
) -> Result<Dataset> {
    if n_points == 0 {
        return Err(Error::input("n_points must be at least 1"));
    }
    if source.is_empty() {
        return Err(Error::input("source dataset is empty"));
    }
    source.validate()?;
    let standardizer = Standardizer::fit(&source.features);
    let train = standardizer.apply_all(&source.features);
    let mean = source.targets.iter().sum::<f64>() / source.len() as f64;
    let gp = GpBelief::fit(kernel, noise_variance, mean, &train, &source.targets)?;

    let ns = source.len();
    let d = source.dim();
    let spread: Vec<f64> = (0..d)
        .map(|c| {
            let m = standardizer.mean[c];
            (source.features.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / ns as f64).sqrt()
        })
        .collect();
    let mut rng = stream(seed);
    let mut features = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let a = rng.random_range(0..ns);
        let b = if ns > 1 {
            let b = rng.random_range(0..ns - 1);
            if b >= a {
                b + 1
            } else {
                b
            }
        } else {
            a
        };
        let lambda: f64 = rng.random();
        let row: Vec<f64> = (0..d)
            .map(|c| {
                lambda * source.features[a][c]
                    + (1.0 - lambda) * source.features[b][c]
                    + SYNTHETIC_JITTER * spread[c] * standard_normal(&mut rng)
            })
            .collect();
        features.push(row);
    }
    let queries = standardizer.apply_all(&features);
    let sv = kernel.signal_variance;
    let targets = gp.sample_function_values_jittered(&queries, &mut rng, BASE_JITTER * sv, 1e-4 * sv)?;
    let data = Dataset {
        name: format!("{}-synthetic", source.name),
        ids: (0..n_points).map(|i| format!("syn-{i:05}")).collect(),
        features,
        targets,
        provenance: Provenance::Synthetic,
        y_range: None,
    };
    data.validate()?;
    Ok(data)
}
