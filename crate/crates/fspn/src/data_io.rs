//! Dataset ingestion and synthetic generation.
//!
//! CSV files carry a header row; discrete columns are integer-coded at
//! ingestion with the code-to-label maps recorded, continuous domains are
//! recorded from the observed min/max expanded by a 1% margin. The benchmark
//! loader reads the comma-separated binary `<name>.{ts,valid,test}.data`
//! triple convention.

use crate::error::{FspnError, Result};
use crate::model::VariableMeta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// n x m table of integer-coded discrete and real continuous values.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    variables: Vec<VariableMeta>,
    /// Per column: code -> original label for discrete columns.
    labels: Vec<Option<Vec<String>>>,
    /// Row-major values.
    values: Vec<f64>,
    n_rows: usize,
}

impl DataMatrix {
    pub fn from_parts(
        variables: Vec<VariableMeta>,
        labels: Vec<Option<Vec<String>>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = variables.len();
        if m == 0 {
            return Err(FspnError::Data("data matrix needs at least one column".into()));
        }
        if labels.len() != m {
            return Err(FspnError::Data("label maps do not match column count".into()));
        }
        if values.len() % m != 0 {
            return Err(FspnError::Data("value buffer is not a multiple of the column count".into()));
        }
        let n_rows = values.len() / m;
        for meta in &variables {
            if let Some(msg) = meta.check() {
                return Err(FspnError::Data(msg));
            }
        }
        Ok(Self { variables, labels, values, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VariableMeta] {
        &self.variables
    }

    pub fn labels(&self) -> &[Option<Vec<String>>] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.variables.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.variables.len();
        &self.values[row * m..(row + 1) * m]
    }

    /// Column values for the given row indices, in that order.
    pub fn gather(&self, col: usize, rows: &[u32]) -> Vec<f64> {
        rows.iter().map(|&r| self.get(r as usize, col)).collect()
    }

    pub fn all_rows(&self) -> Vec<u32> {
        (0..self.n_rows as u32).collect()
    }
}

/// Per-column kind overrides for CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Discrete,
    Continuous,
}

/// Optional schema hints for `load_csv`; columns without a hint are
/// auto-detected (integral values with few distincts become discrete).
#[derive(Debug, Clone, Default)]
pub struct SchemaHints {
    pub kinds: BTreeMap<String, ColumnKind>,
    pub max_auto_discrete: Option<usize>,
}

const DEFAULT_MAX_AUTO_DISCRETE: usize = 20;

pub fn load_csv(path: &Path, hints: &SchemaHints) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| FspnError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| FspnError::parse(path.display().to_string(), e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let m = headers.len();
    if m == 0 {
        return Err(FspnError::Data("csv has an empty header".into()));
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| FspnError::parse(path.display().to_string(), e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != m {
            return Err(FspnError::parse(
                format!("{}:{line}", path.display()),
                format!("ragged row: {} cells, expected {m}", record.len()),
            ));
        }
        cells.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    if cells.is_empty() {
        return Err(FspnError::Data("csv has no data rows".into()));
    }
    build_matrix(path, &headers, &cells, hints)
}

fn build_matrix(
    path: &Path,
    headers: &[String],
    cells: &[Vec<String>],
    hints: &SchemaHints,
) -> Result<DataMatrix> {
    let n = cells.len();
    let m = headers.len();
    let max_auto = hints.max_auto_discrete.unwrap_or(DEFAULT_MAX_AUTO_DISCRETE);
    let mut variables = Vec::with_capacity(m);
    let mut labels: Vec<Option<Vec<String>>> = Vec::with_capacity(m);
    let mut values = vec![0.0f64; n * m];
    for j in 0..m {
        let name = &headers[j];
        let parsed: Vec<Option<f64>> = cells.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        let all_numeric = parsed.iter().all(|p| p.is_some());
        let kind = match hints.kinds.get(name) {
            Some(ColumnKind::Continuous) => ColumnKind::Continuous,
            Some(ColumnKind::Discrete) => ColumnKind::Discrete,
            None => {
                if !all_numeric {
                    ColumnKind::Discrete
                } else {
                    let integral = parsed
                        .iter()
                        .all(|p| p.map(|v| v.fract() == 0.0).unwrap_or(false));
                    let mut distinct: Vec<f64> = parsed.iter().map(|p| p.unwrap()).collect();
                    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    distinct.dedup();
                    if integral && distinct.len() <= max_auto {
                        ColumnKind::Discrete
                    } else {
                        ColumnKind::Continuous
                    }
                }
            }
        };
        match kind {
            ColumnKind::Continuous => {
                for (i, p) in parsed.iter().enumerate() {
                    match p {
                        Some(v) if v.is_finite() => values[i * m + j] = *v,
                        _ => {
                            return Err(FspnError::parse(
                                format!("{}:{}", path.display(), i + 2),
                                format!("column {name}: cannot parse '{}' as a number", cells[i][j]),
                            ))
                        }
                    }
                }
                let lo = parsed.iter().map(|p| p.unwrap()).fold(f64::INFINITY, f64::min);
                let hi = parsed.iter().map(|p| p.unwrap()).fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = expand_domain(lo, hi);
                variables.push(VariableMeta::continuous(name, lo, hi));
                labels.push(None);
            }
            ColumnKind::Discrete => {
                // numeric discrete columns sort by value, others lexicographically
                let (codes, label_list) = if all_numeric {
                    let mut distinct: Vec<f64> = parsed.iter().map(|p| p.unwrap()).collect();
                    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    distinct.dedup();
                    let index: BTreeMap<u64, usize> =
                        distinct.iter().enumerate().map(|(k, v)| (v.to_bits(), k)).collect();
                    let codes: Vec<usize> = parsed
                        .iter()
                        .map(|p| index[&p.unwrap().to_bits()])
                        .collect();
                    let label_list = distinct.iter().map(|v| format_cell(*v)).collect();
                    (codes, label_list)
                } else {
                    let mut distinct: Vec<String> = cells.iter().map(|r| r[j].clone()).collect();
                    distinct.sort();
                    distinct.dedup();
                    let index: BTreeMap<&str, usize> =
                        distinct.iter().enumerate().map(|(k, v)| (v.as_str(), k)).collect();
                    let codes: Vec<usize> =
                        cells.iter().map(|r| index[r[j].as_str()]).collect();
                    (codes, distinct)
                };
                for (i, &code) in codes.iter().enumerate() {
                    values[i * m + j] = code as f64;
                }
                variables.push(VariableMeta::discrete(name, label_list.len()));
                labels.push(Some(label_list));
            }
        }
    }
    DataMatrix::from_parts(variables, labels, values)
}

/// 1% margin keeps leaf supports strictly wider than the observed range.
fn expand_domain(lo: f64, hi: f64) -> (f64, f64) {
    if lo < hi {
        let margin = 0.01 * (hi - lo);
        (lo - margin, hi + margin)
    } else {
        let margin = (0.01 * lo.abs()).max(0.5);
        (lo - margin, hi + margin)
    }
}

fn format_cell(v: f64) -> String {
    format!("{v}")
}

pub fn save_csv(data: &DataMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    let names: Vec<&str> = data.variables().iter().map(|v| v.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..data.n_rows() {
        for j in 0..data.n_cols() {
            if j > 0 {
                out.push(',');
            }
            let v = data.get(i, j);
            match &data.labels()[j] {
                Some(map) => out.push_str(&map[v as usize]),
                None => out.push_str(&format_cell(v)),
            }
        }
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| FspnError::io(path, e))
}

/// Load a `<name>.{ts,valid,test}.data` benchmark triple of binary columns.
pub fn load_benchmark(dir: &Path, name: &str) -> Result<(DataMatrix, DataMatrix, DataMatrix)> {
    let load = |suffix: &str, expect_cols: Option<usize>| -> Result<DataMatrix> {
        let path = dir.join(format!("{name}.{suffix}.data"));
        let text = std::fs::read_to_string(&path).map_err(|e| FspnError::io(&path, e))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut n_cols = expect_cols;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for cell in line.split(',') {
                match cell.trim() {
                    "0" => row.push(0.0),
                    "1" => row.push(1.0),
                    other => {
                        return Err(FspnError::parse(
                            format!("{}:{}", path.display(), lineno + 1),
                            format!("non-binary value '{other}'"),
                        ))
                    }
                }
            }
            match n_cols {
                None => n_cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(FspnError::parse(
                        format!("{}:{}", path.display(), lineno + 1),
                        format!("row has {} columns, expected {c}", row.len()),
                    ))
                }
                _ => {}
            }
            rows.push(row);
        }
        let m = n_cols.ok_or_else(|| FspnError::Data(format!("{} is empty", path.display())))?;
        if rows.is_empty() {
            return Err(FspnError::Data(format!("{} is empty", path.display())));
        }
        let variables = (0..m)
            .map(|i| VariableMeta::discrete(&format!("V{i}"), 2))
            .collect();
        let labels = (0..m)
            .map(|_| Some(vec!["0".to_string(), "1".to_string()]))
            .collect();
        let values = rows.into_iter().flatten().collect();
        DataMatrix::from_parts(variables, labels, values)
    };
    let train = load("ts", None)?;
    let valid = load("valid", Some(train.n_cols()))?;
    let test = load("test", Some(train.n_cols()))?;
    Ok((train, valid, test))
}

/// Recipe for synthetic discrete data with a controllable dependence knob.
///
/// Within each group the variables are noisy deterministic functions of a
/// shared latent categorical draw: with probability `1 - noise_level` a
/// variable copies a per-variable permutation of the latent value, otherwise
/// it resamples uniformly over its own domain. `noise_level = 1` yields
/// fully independent columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_vars: usize,
    pub domain_sizes: Vec<usize>,
    pub group_structure: Vec<Vec<usize>>,
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_vars == 0 {
            return Err(FspnError::Data("synthetic spec needs rows and variables".into()));
        }
        if self.domain_sizes.len() != self.n_vars {
            return Err(FspnError::Data("domain_sizes length differs from n_vars".into()));
        }
        if self.domain_sizes.iter().any(|&d| d < 2) {
            return Err(FspnError::Data("domain sizes must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(FspnError::Data("noise_level must lie in [0, 1]".into()));
        }
        let mut seen = vec![false; self.n_vars];
        for group in &self.group_structure {
            for &v in group {
                if v >= self.n_vars {
                    return Err(FspnError::Data(format!("group references unknown variable {v}")));
                }
                if seen[v] {
                    return Err(FspnError::Data(format!("variable {v} appears in two groups")));
                }
                seen[v] = true;
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // fixed per-variable value permutations, drawn before any row
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(spec.n_vars);
    for &d in &spec.domain_sizes {
        let mut p: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rng.gen_range(0..=i);
            p.swap(i, j);
        }
        perms.push(p);
    }
    let grouped: Vec<bool> = {
        let mut g = vec![false; spec.n_vars];
        for group in &spec.group_structure {
            for &v in group {
                g[v] = true;
            }
        }
        g
    };
    let m = spec.n_vars;
    let mut values = vec![0.0f64; spec.n_rows * m];
    for row in 0..spec.n_rows {
        for group in &spec.group_structure {
            if group.is_empty() {
                continue;
            }
            let latent_card = group.iter().map(|&v| spec.domain_sizes[v]).min().unwrap();
            let z = rng.gen_range(0..latent_card);
            for &v in group {
                let d = spec.domain_sizes[v];
                let noisy = rng.gen::<f64>() < spec.noise_level;
                let value = if noisy { rng.gen_range(0..d) } else { perms[v][z] };
                values[row * m + v] = value as f64;
            }
        }
        for v in 0..m {
            if !grouped[v] {
                values[row * m + v] = rng.gen_range(0..spec.domain_sizes[v]) as f64;
            }
        }
    }
    let variables = (0..m)
        .map(|i| VariableMeta::discrete(&format!("V{i}"), spec.domain_sizes[i]))
        .collect();
    let labels = (0..m)
        .map(|i| Some((0..spec.domain_sizes[i]).map(|v| v.to_string()).collect()))
        .collect();
    DataMatrix::from_parts(variables, labels, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn binary_column_coding() {
        let f = write_tmp("a,b\n0,1.5\n1,2.5\n0,3.5\n");
        let data = load_csv(f.path(), &SchemaHints::default()).unwrap();
        assert_eq!(data.n_rows(), 3);
        assert_eq!(data.variables()[0].cardinality(), Some(2));
        assert_eq!(data.get(1, 0), 1.0);
        assert!(!data.variables()[1].is_discrete());
    }

    #[test]
    fn ragged_row_names_the_line() {
        let f = write_tmp("a,b\n1,2\n3\n");
        let err = load_csv(f.path(), &SchemaHints::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3") && msg.contains("ragged"), "{msg}");
    }

    #[test]
    fn unparseable_cell_names_the_line() {
        let mut hints = SchemaHints::default();
        hints.kinds.insert("a".into(), ColumnKind::Continuous);
        let f = write_tmp("a\n1.0\nwat\n");
        let err = load_csv(f.path(), &hints).unwrap_err();
        assert!(err.to_string().contains(":3"), "{err}");
    }

    #[test]
    fn csv_roundtrip_is_identity() {
        let f = write_tmp("a,b,c\n0,1.25,red\n1,2.5,blue\n0,-1.5,red\n");
        let first = load_csv(f.path(), &SchemaHints::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_csv(&first, out.path()).unwrap();
        let second = load_csv(out.path(), &SchemaHints::default()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn benchmark_triple_loads_and_rejects_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        for suffix in ["ts", "valid", "test"] {
            std::fs::write(dir.path().join(format!("toy.{suffix}.data")), "0,1,0\n1,1,1\n").unwrap();
        }
        let (train, valid, test) = load_benchmark(dir.path(), "toy").unwrap();
        assert_eq!(train.n_cols(), 3);
        assert_eq!(valid.n_rows(), 2);
        assert_eq!(test.variables()[0].cardinality(), Some(2));

        std::fs::write(dir.path().join("toy.valid.data"), "0,2,0\n").unwrap();
        let err = load_benchmark(dir.path(), "toy").unwrap_err();
        assert!(err.to_string().contains("non-binary"), "{err}");

        std::fs::remove_file(dir.path().join("toy.test.data")).unwrap();
        std::fs::write(dir.path().join("toy.valid.data"), "0,1,0\n").unwrap();
        assert!(load_benchmark(dir.path(), "toy").is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_sized() {
        let spec = SyntheticSpec {
            n_rows: 200,
            n_vars: 4,
            domain_sizes: vec![3, 4, 5, 3],
            group_structure: vec![vec![0, 2], vec![1, 3]],
            noise_level: 0.2,
            seed: 7,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rows(), 200);
        assert_eq!(a.n_cols(), 4);
        for j in 0..4 {
            for i in 0..200 {
                let v = a.get(i, j);
                assert!(v >= 0.0 && v < spec.domain_sizes[j] as f64);
            }
        }
    }

    #[test]
    fn synthetic_rejects_overlapping_groups() {
        let spec = SyntheticSpec {
            n_rows: 10,
            n_vars: 3,
            domain_sizes: vec![2, 2, 2],
            group_structure: vec![vec![0, 1], vec![1, 2]],
            noise_level: 0.0,
            seed: 1,
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
