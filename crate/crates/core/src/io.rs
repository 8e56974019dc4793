//! Model and run configuration files, and tabular artifact I/O.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixInput {
    Nested(Vec<Vec<f64>>),
    /// row-major
    Flat(Vec<f64>),
}

impl MatrixInput {
    fn to_rows(&self, n: usize, name: &str) -> Result<Vec<f64>> {
        let flat: Vec<f64> = match self {
            MatrixInput::Flat(v) => v.clone(),
            MatrixInput::Nested(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Schema(format!("{name} must be {n}x{n}")));
                }
                rows.iter().flatten().copied().collect()
            }
        };
        if flat.len() != n * n {
            return Err(Error::Schema(format!("{name} needs {} entries, got {}", n * n, flat.len())));
        }
        Ok(flat)
    }
}

/// Couplings in the orthonormal Gell-Mann basis of M_d.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub d: usize,
    pub eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_im: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_re: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_im: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_re: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_im: Option<MatrixInput>,
}

fn complex_matrix(re: &Option<MatrixInput>, im: &Option<MatrixInput>, n: usize, name: &str) -> Result<CMat> {
    let zero = vec![0.0; n * n];
    let r = re.as_ref().map(|m| m.to_rows(n, &format!("{name}_re"))).transpose()?.unwrap_or_else(|| zero.clone());
    let i = im.as_ref().map(|m| m.to_rows(n, &format!("{name}_im"))).transpose()?.unwrap_or(zero);
    Ok(CMat::from_fn(n, n, |a, b| Complex64::new(r[a * n + b], i[a * n + b])))
}

fn split_matrix(m: &CMat) -> (MatrixInput, MatrixInput) {
    let n = m.nrows();
    let rows = |f: fn(&Complex64) -> f64| MatrixInput::Nested((0..n).map(|a| (0..n).map(|b| f(&m[(a, b)])).collect()).collect());
    (rows(|z| z.re), rows(|z| z.im))
}

impl ModelFile {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let n = self.d * self.d;
        if self.eps.len() != n {
            return Err(Error::Schema(format!("eps needs {n} entries, got {}", self.eps.len())));
        }
        let h = complex_matrix(&self.h_re, &self.h_im, n, "h")?;
        let c = complex_matrix(&self.c_re, &self.c_im, n, "C")?;
        let mut spec = ModelSpec::new(self.d, &self.eps, h, c);
        if let Some(im) = &self.eps_im {
            if im.len() != n {
                return Err(Error::Schema(format!("eps_im needs {n} entries, got {}", im.len())));
            }
            for (z, x) in spec.eps.iter_mut().zip(im) {
                z.im = *x;
            }
        }
        Ok(spec)
    }

    pub fn from_spec(spec: &ModelSpec) -> Self {
        let (h_re, h_im) = split_matrix(&spec.h);
        let (c_re, c_im) = split_matrix(&spec.c);
        let eps_im: Vec<f64> = spec.eps.iter().map(|z| z.im).collect();
        Self {
            d: spec.d,
            eps: spec.eps.iter().map(|z| z.re).collect(),
            eps_im: eps_im.iter().any(|x| *x != 0.0).then_some(eps_im),
            h_re: Some(h_re),
            h_im: Some(h_im),
            c_re: Some(c_re),
            c_im: Some(c_im),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(ModelFile),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parse(format!("unknown format {other:?}; expected csv or json"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), format: Format::Csv }
    }
}

fn default_grid() -> usize {
    101
}

fn default_support() -> usize {
    2
}

fn default_t_oracle() -> f64 {
    0.5
}

fn default_n_list() -> Vec<usize> {
    (2..=8).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    /// initial averages ω_0 in the orthonormal basis
    pub omega0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// support length for the quasi-local stage
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default = "default_t_oracle")]
    pub t_oracle: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Schema(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.grid < 2 {
            return Err(Error::Schema("grid needs at least 2 points".into()));
        }
        if !(self.t_oracle >= 0.0 && self.t_oracle <= self.t_end) {
            return Err(Error::Schema(format!("t_oracle must lie in [0, t_end], got {}", self.t_oracle)));
        }
        self.tolerances.check().map_err(Error::Schema)
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn parse_doc<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    if is_json(path) {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    parse_doc(path, &read_text(path)?)
}

/// Loads a run configuration, resolving relative model and output paths against the
/// configuration file's directory.
pub fn load_run_config(path: &Path) -> Result<(RunConfig, ModelSpec)> {
    let mut cfg: RunConfig = parse_doc(path, &read_text(path)?)?;
    cfg.check()?;
    let base = path.parent().unwrap_or(Path::new("."));
    if cfg.output.dir.is_relative() {
        cfg.output.dir = base.join(&cfg.output.dir);
    }
    let model = match &cfg.model {
        ModelSource::Inline(m) => m.clone(),
        ModelSource::Path(p) => {
            let full = if p.is_absolute() { p.clone() } else { base.join(p) };
            if !full.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("model file {} not found", full.display()),
                )));
            }
            load_model_file(&full)?
        }
    };
    Ok((cfg, model.to_spec()?))
}

/// A file that is either a run configuration or a bare model.
pub enum ConfigDocument {
    Run(Box<RunConfig>, ModelSpec),
    Model(ModelSpec),
}

pub fn load_any(path: &Path) -> Result<ConfigDocument> {
    let text = read_text(path)?;
    let value: serde_json::Value = if is_json(path) {
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| Error::Parse(e.to_string()))?
    };
    if value.get("d").is_some() {
        let m: ModelFile = parse_doc(path, &text)?;
        return Ok(ConfigDocument::Model(m.to_spec()?));
    }
    let (cfg, spec) = load_run_config(path)?;
    Ok(ConfigDocument::Run(Box::new(cfg), spec))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(fs::write(path, text)?)
}

/// Shortest decimal string that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| Error::Parse(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| fmt_f64(*x))).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut t = Table::new(columns);
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != t.columns.len() {
                return Err(Error::Schema(format!("row with {} fields, header has {}", rec.len(), t.columns.len())));
            }
            t.rows.push(rec.iter().map(parse_f64).collect::<Result<_>>()?);
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = JsonTable {
            columns: self.columns.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(|x| fmt_f64(*x)).collect()).collect(),
        };
        serde_json::to_string_pretty(&j).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: JsonTable = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut t = Table::new(j.columns);
        for r in j.rows {
            if r.len() != t.columns.len() {
                return Err(Error::Schema(format!("row with {} fields, header has {}", r.len(), t.columns.len())));
            }
            t.rows.push(r.iter().map(|s| parse_f64(s)).collect::<Result<_>>()?);
        }
        Ok(t)
    }

    /// Writes `<dir>/<stem>.<ext>` and returns the path.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        let text = match format {
            Format::Csv => self.to_csv()?,
            Format::Json => self.to_json()?,
        };
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        if is_json(path) {
            Self::from_json(&text)
        } else {
            Self::from_csv(&text)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub columns: Vec<String>,
    pub rows_compared: usize,
    pub per_column: BTreeMap<String, f64>,
    pub max_defect: f64,
}

/// Max absolute differences per column. Rows are matched on the `t` column when both tables
/// have one (rows of A without a partner in B are skipped), otherwise by position.
pub fn compare_tables(a: &Table, b: &Table, common_only: bool) -> Result<CompareReport> {
    let columns: Vec<String> = if common_only {
        a.columns.iter().filter(|c| b.column(c).is_some()).cloned().collect()
    } else {
        if a.columns != b.columns {
            return Err(Error::Schema(format!("column sets differ: {:?} vs {:?}", a.columns, b.columns)));
        }
        a.columns.clone()
    };
    if columns.is_empty() {
        return Err(Error::Schema("no common columns".into()));
    }
    let pairs: Vec<(usize, usize)> = match (a.column("t"), b.column("t")) {
        (Some(ta), Some(tb)) => a
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                b.rows.iter().position(|s| (s[tb] - r[ta]).abs() <= 1e-12 * (1.0 + r[ta].abs())).map(|j| (i, j))
            })
            .collect(),
        _ => {
            if a.rows.len() != b.rows.len() {
                return Err(Error::Schema(format!("row counts differ: {} vs {}", a.rows.len(), b.rows.len())));
            }
            (0..a.rows.len()).map(|i| (i, i)).collect()
        }
    };
    if pairs.is_empty() {
        return Err(Error::Schema("no matching rows".into()));
    }
    let mut per_column = BTreeMap::new();
    let mut max_defect: f64 = 0.0;
    for c in &columns {
        let (ia, ib) = (a.column(c).expect("column"), b.column(c).expect("column"));
        let mut m: f64 = 0.0;
        for &(i, j) in &pairs {
            let (x, y) = (a.rows[i][ia], b.rows[j][ib]);
            let d = if x == y { 0.0 } else { (x - y).abs() };
            m = if d.is_nan() { f64::INFINITY } else { m.max(d) };
        }
        max_defect = max_defect.max(m);
        per_column.insert(c.clone(), m);
    }
    Ok(CompareReport { columns, rows_compared: pairs.len(), per_column, max_defect })
}

/// Serializes a real number as its shortest round-trip decimal string.
pub fn json_num(x: f64) -> serde_json::Value {
    serde_json::Value::String(fmt_f64(x))
}

pub fn json_vec(v: &[f64]) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|x| json_num(*x)).collect())
}

pub fn json_rmat(m: &crate::linalg::RMat) -> serde_json::Value {
    serde_json::Value::Array((0..m.nrows()).map(|i| json_vec(&m.row(i).iter().copied().collect::<Vec<_>>())).collect())
}

pub fn json_cmat(m: &CMat) -> serde_json::Value {
    let re = crate::linalg::re(m);
    let im = crate::linalg::im(m);
    serde_json::json!({ "re": json_rmat(&re), "im": json_rmat(&im) })
}
