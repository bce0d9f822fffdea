//! CSV ingestion, fold splitting and synthetic data generators.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Column, ColumnKind, DataFrame, Schema};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub target_column: String,
    /// Standard deviation of the Gaussian jitter added to continuous
    /// columns and the target; 0 disables it.
    pub jitter_sd: f64,
    pub one_hot: bool,
    pub seed: u64,
}

impl IngestConfig {
    pub fn new(target_column: impl Into<String>) -> Self {
        IngestConfig {
            target_column: target_column.into(),
            jitter_sd: 1e-3,
            one_hot: true,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.jitter_sd >= 0.0 && self.jitter_sd.is_finite()) {
            return Err(Error::InvalidConfig("jitter_sd must be ≥ 0".into()));
        }
        Ok(())
    }
}

struct RawTable {
    header: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::InvalidData(format!("cannot open '{}': {e}", path.display()))
            }
            _ => Error::Csv(e),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut cells = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row: Vec<String> = rec.iter().map(str::to_owned).collect();
        for (j, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidData(format!(
                    "missing value at data row {}, column '{}'",
                    i + 1,
                    header[j]
                )));
            }
        }
        cells.push(row);
    }
    Ok(RawTable { header, cells })
}

fn parse_numeric(cells: &[Vec<String>], j: usize) -> Option<Vec<f64>> {
    cells
        .iter()
        .map(|r| r[j].parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

fn jitter(frame: &mut DataFrame, sd: f64, seed: u64) {
    if sd == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sd).expect("sd is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = frame.n_features();
    let kinds: Vec<ColumnKind> = frame.schema().columns.iter().map(|c| c.kind).collect();
    let mut features = frame.features().to_vec();
    let mut target = frame.target().to_vec();
    for (i, y) in target.iter_mut().enumerate() {
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == ColumnKind::Continuous {
                features[i * m + j] += normal.sample(&mut rng);
            }
        }
        *y += normal.sample(&mut rng);
    }
    frame.replace_data(features, target);
}

/// Reads a CSV file into a frame, inferring column kinds.
///
/// Numeric columns with exactly two distinct values become binary, other
/// numeric columns continuous, and text columns are one-hot encoded into
/// `column=value` indicators (levels sorted).
pub fn load_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<DataFrame> {
    config.check()?;
    let table = read_table(path.as_ref())?;
    let t = table
        .header
        .iter()
        .position(|h| *h == config.target_column)
        .ok_or_else(|| {
            Error::InvalidData(format!(
                "target column '{}' not found",
                config.target_column
            ))
        })?;
    let target = parse_numeric(&table.cells, t).ok_or_else(|| {
        Error::InvalidData(format!(
            "target column '{}' is not numeric",
            config.target_column
        ))
    })?;

    let mut columns = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (j, name) in table.header.iter().enumerate() {
        if j == t {
            continue;
        }
        if let Some(v) = parse_numeric(&table.cells, j) {
            let distinct: BTreeSet<u64> = v.iter().map(|x| x.to_bits()).collect();
            if distinct.len() == 2 {
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let levels = (lo != 0.0 || hi != 1.0).then_some([lo, hi]);
                columns.push(Column {
                    name: name.clone(),
                    kind: ColumnKind::Binary,
                    levels,
                });
                values.push(v.iter().map(|&x| if x == lo { 0.0 } else { 1.0 }).collect());
            } else {
                columns.push(Column::continuous(name.clone()));
                values.push(v);
            }
        } else if config.one_hot {
            let levels: BTreeSet<&str> = table.cells.iter().map(|r| r[j].as_str()).collect();
            for level in levels {
                columns.push(Column::binary(format!("{name}={level}")));
                values.push(
                    table
                        .cells
                        .iter()
                        .map(|r| if r[j] == level { 1.0 } else { 0.0 })
                        .collect(),
                );
            }
        } else {
            return Err(Error::InvalidData(format!(
                "column '{name}' is not numeric and one-hot encoding is disabled"
            )));
        }
    }
    let schema = Schema::new(columns, config.target_column.clone())?;
    let n = target.len();
    let mut features = Vec::with_capacity(n * schema.m());
    for i in 0..n {
        features.extend(values.iter().map(|v| v[i]));
    }
    let mut frame = DataFrame::from_flat(schema, features, target)?;
    jitter(&mut frame, config.jitter_sd, config.seed);
    Ok(frame)
}

/// Reads a CSV file into a frame laid out like `schema`.
///
/// Columns are matched by name, so the file may order them differently.
/// One-hot indicators `column=value` are rebuilt from the raw text column.
pub fn load_csv_for_schema(
    path: impl AsRef<Path>,
    schema: &Schema,
    jitter_sd: f64,
    seed: u64,
) -> Result<DataFrame> {
    let table = read_table(path.as_ref())?;
    let pos: HashMap<&str, usize> = table
        .header
        .iter()
        .enumerate()
        .map(|(j, h)| (h.as_str(), j))
        .collect();
    let t = *pos.get(schema.target_name.as_str()).ok_or_else(|| {
        Error::Schema(format!("target column '{}' not found", schema.target_name))
    })?;
    let target = parse_numeric(&table.cells, t).ok_or_else(|| {
        Error::InvalidData(format!(
            "target column '{}' is not numeric",
            schema.target_name
        ))
    })?;

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(schema.m());
    for col in &schema.columns {
        if let Some(&j) = pos.get(col.name.as_str()) {
            let raw = parse_numeric(&table.cells, j).ok_or_else(|| {
                Error::InvalidData(format!("column '{}' is not numeric", col.name))
            })?;
            let v = match (col.kind, col.levels) {
                (ColumnKind::Binary, Some([lo, hi])) => raw
                    .iter()
                    .map(|&x| {
                        if x == lo {
                            Ok(0.0)
                        } else if x == hi {
                            Ok(1.0)
                        } else {
                            Err(Error::InvalidData(format!(
                                "binary column '{}' holds unseen level {x}",
                                col.name
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => raw,
            };
            values.push(v);
        } else if let Some((&j, level)) = col
            .name
            .split_once('=')
            .and_then(|(src, level)| pos.get(src).map(|j| (j, level)))
        {
            values.push(
                table
                    .cells
                    .iter()
                    .map(|r| if r[j] == level { 1.0 } else { 0.0 })
                    .collect(),
            );
        } else {
            return Err(Error::Schema(format!("column '{}' not found", col.name)));
        }
    }
    let n = target.len();
    let mut features = Vec::with_capacity(n * schema.m());
    for i in 0..n {
        features.extend(values.iter().map(|v| v[i]));
    }
    let mut frame = DataFrame::from_flat(schema.clone(), features, target)?;
    jitter(&mut frame, jitter_sd, seed);
    Ok(frame)
}

/// Writes a frame as CSV: feature columns then the target. Binary columns
/// with raw levels are written back as those levels.
pub fn write_csv(frame: &DataFrame, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let schema = frame.schema();
    let mut header: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&schema.target_name);
    w.write_record(&header)?;
    for i in 0..frame.n_rows() {
        let mut rec: Vec<String> = frame
            .row(i)
            .iter()
            .zip(&schema.columns)
            .map(|(&v, c)| match c.levels {
                Some(l) => l[v as usize].to_string(),
                None => v.to_string(),
            })
            .collect();
        rec.push(frame.target()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one log density per row under the header `row,log_density`.
pub fn write_log_densities(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "log_density"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a sampled density curve under the header `y,density`.
pub fn write_density_grid(curve: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "density"])?;
    for (y, d) in curve {
        w.write_record([y.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Row indices of each test fold after a seeded shuffle.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("folds must be ≥ 2".into()));
    }
    if folds > n {
        return Err(Error::InvalidConfig(format!(
            "{folds} folds requested for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// `(train, test)` pairs of a seeded k-fold split.
pub fn kfold(frame: &DataFrame, folds: usize, seed: u64) -> Result<Vec<(DataFrame, DataFrame)>> {
    let tests = kfold_indices(frame.n_rows(), folds, seed)?;
    Ok(tests
        .iter()
        .map(|test| {
            let mut in_test = vec![false; frame.n_rows()];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..frame.n_rows()).filter(|&i| !in_test[i]).collect();
            (frame.select_rows(&train), frame.select_rows(test))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Standard-normal columns unrelated to anything.
    Independent,
    /// Noisy copies of existing features.
    Dependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub w: usize,
    pub seed: u64,
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Appends `spec.w` irrelevant features, named with a `noise_` prefix.
///
/// Dependent noise copies `w` distinct existing columns (chosen at random)
/// and adds Gaussian noise with half the column's sample standard deviation.
pub fn inject_noise_features(
    frame: &DataFrame,
    spec: &NoiseSpec,
) -> Result<(DataFrame, Vec<String>)> {
    if spec.w < 1 {
        return Err(Error::InvalidConfig("w must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = frame.n_rows();
    let (names, values): (Vec<String>, Vec<Vec<f64>>) = match spec.mode {
        NoiseMode::Independent => (1..=spec.w)
            .map(|i| {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                (format!("noise_{i}"), v)
            })
            .unzip(),
        NoiseMode::Dependent => {
            let usable: Vec<(usize, f64)> = (0..frame.n_features())
                .map(|j| (j, sample_sd(&frame.column(j))))
                .filter(|&(_, sd)| sd > 0.0)
                .collect();
            if usable.len() < spec.w {
                return Err(Error::InvalidData(format!(
                    "dependent noise needs {} non-constant columns, found {}",
                    spec.w,
                    usable.len()
                )));
            }
            let mut picks = index::sample(&mut rng, usable.len(), spec.w).into_vec();
            picks.sort_unstable();
            picks
                .into_iter()
                .map(|p| {
                    let (j, sd) = usable[p];
                    let normal = Normal::new(0.0, sd / 2.0).expect("positive sd");
                    let v: Vec<f64> = frame
                        .column(j)
                        .into_iter()
                        .map(|x| x + normal.sample(&mut rng))
                        .collect();
                    (format!("noise_{}", frame.schema().columns[j].name), v)
                })
                .unzip()
        }
    };
    let cols = names.iter().map(Column::continuous).collect();
    let out = frame.with_columns(cols, values)?;
    Ok((out, names))
}

/// Synthetic data with a known conditional density.
///
/// `x1 ~ U(0, 1)`; `y ~ U(0, 0.5)` when `x1 ≤ 0.5`, else `U(0.5, 1)`; plus
/// `m_noise` standard-normal columns `z1, z2, …`. The true conditional log
/// density is ln 2 on its support.
pub fn make_step_dataset(n: usize, m_noise: usize, seed: u64) -> DataFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![Column::continuous("x1")];
    columns.extend((1..=m_noise).map(|i| Column::continuous(format!("z{i}"))));
    let schema = Schema::new(columns, "y").expect("fixed schema is valid");
    let mut features = Vec::with_capacity(n * (1 + m_noise));
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random();
        let u: f64 = rng.random();
        features.push(x1);
        for _ in 0..m_noise {
            features.push(rng.sample(StandardNormal));
        }
        target.push(if x1 <= 0.5 { 0.5 * u } else { 0.5 + 0.5 * u });
    }
    DataFrame::from_flat(schema, features, target).expect("generated frame is valid")
}

/// `m` uniform features and a standard-normal target independent of them.
pub fn make_noise_dataset(n: usize, m: usize, seed: u64) -> DataFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = (1..=m.max(1))
        .map(|i| Column::continuous(format!("x{i}")))
        .collect();
    let schema = Schema::new(columns, "y").expect("fixed schema is valid");
    let mut features = Vec::with_capacity(n * m.max(1));
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..m.max(1) {
            features.push(rng.random::<f64>());
        }
        target.push(rng.sample(StandardNormal));
    }
    DataFrame::from_flat(schema, features, target).expect("generated frame is valid")
}
