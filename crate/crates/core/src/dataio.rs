//! Dataset loading and saving, label files and synthetic generators.
//!
//! Two matrix formats are supported. CSV uses `,` as delimiter and `.` as
//! decimal mark, with an optional single header line and no quoting. The
//! binary `f32-raw` format is the magic `HNND`, little-endian `u32` row and
//! column counts, then `rows × cols` little-endian `f32` values in row-major
//! order; it is read in fixed-size chunks so loading needs no buffer beyond
//! the destination matrix.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid_argument, invalid_data, HnneError, Result};
use crate::matrix::{sq_dist, DataMatrix};
use crate::rng;

pub const RAW_MAGIC: &[u8; 4] = b"HNND";
const RAW_HEADER_LEN: u64 = 12;
const RAW_CHUNK_VALUES: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    F32Raw,
}

impl Format {
    /// `.bin`, `.raw`, `.f32` and `.hnnd` files are f32-raw, everything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin" | "raw" | "f32" | "hnnd") => Format::F32Raw,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = HnneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "f32-raw" | "raw" => Ok(Format::F32Raw),
            _ => Err(invalid_argument(format!("unknown format '{s}' (expected csv or f32-raw)"))),
        }
    }
}

/// Parameters of [`gen_blobs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            n: 5000,
            dim: 64,
            clusters: 10,
            separation: 20.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// A named generator with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Synthetic {
    Blobs(BlobParams),
    UniformSquare { n: usize, seed: u64 },
}

impl Synthetic {
    pub fn generate(&self) -> Result<(DataMatrix, Option<Vec<i64>>)> {
        match *self {
            Synthetic::Blobs(p) => {
                let (x, y) = gen_blobs(p.n, p.dim, p.clusters, p.separation, p.noise, p.seed)?;
                Ok((x, Some(y)))
            }
            Synthetic::UniformSquare { n, seed } => Ok((gen_uniform_square(n, seed)?, None)),
        }
    }

    pub fn with_seed(mut self, s: u64) -> Self {
        match &mut self {
            Synthetic::Blobs(p) => p.seed = s,
            Synthetic::UniformSquare { seed, .. } => *seed = s,
        }
        self
    }
}

impl fmt::Display for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Synthetic::Blobs(p) => write!(
                f,
                "blobs,n={},dim={},clusters={},separation={},noise={},seed={}",
                p.n, p.dim, p.clusters, p.separation, p.noise, p.seed
            ),
            Synthetic::UniformSquare { n, seed } => write!(f, "square,n={n},seed={seed}"),
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| invalid_argument(format!("bad value for {key}: '{v}'")))
}

/// Parses `blobs,n=5000,dim=64,clusters=10,separation=20,noise=1,seed=0`
/// or `square,n=100000,seed=0`; omitted keys keep their defaults.
impl FromStr for Synthetic {
    type Err = HnneError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let name = parts.next().unwrap_or_default();
        let mut blobs = BlobParams::default();
        let (mut n_square, mut seed_square) = (100_000, 0);
        for kv in parts.filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid_argument(format!("expected key=value, got '{kv}'")))?;
            match (name, k) {
                ("blobs", "n") => blobs.n = value(k, v)?,
                ("blobs", "dim") => blobs.dim = value(k, v)?,
                ("blobs", "clusters") => blobs.clusters = value(k, v)?,
                ("blobs", "separation") => blobs.separation = value(k, v)?,
                ("blobs", "noise") => blobs.noise = value(k, v)?,
                ("blobs", "seed") => blobs.seed = value(k, v)?,
                ("square", "n") => n_square = value(k, v)?,
                ("square", "seed") => seed_square = value(k, v)?,
                _ => return Err(invalid_argument(format!("unknown parameter '{k}' for generator '{name}'"))),
            }
        }
        match name {
            "blobs" => Ok(Synthetic::Blobs(blobs)),
            "square" => Ok(Synthetic::UniformSquare {
                n: n_square,
                seed: seed_square,
            }),
            _ => Err(invalid_argument(format!(
                "unknown generator '{name}' (expected blobs or square)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Synthetic(Synthetic),
}

/// Where a dataset comes from and how to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: Source,
    /// `None` infers the format from the file extension.
    pub format: Option<Format>,
    pub has_header: bool,
    pub labels_path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            source: Source::File(path.into()),
            format: None,
            has_header: false,
            labels_path: None,
        }
    }

    pub fn synthetic(gen: Synthetic) -> Self {
        Self {
            source: Source::Synthetic(gen),
            format: None,
            has_header: false,
            labels_path: None,
        }
    }
}

/// Loads a dataset and, when a labels file is given, its labels. Labels
/// from a labels file replace generator labels.
pub fn load(spec: &DatasetSpec) -> Result<(DataMatrix, Option<Vec<i64>>)> {
    let (x, mut labels) = match &spec.source {
        Source::File(path) => {
            let fmt = spec.format.unwrap_or_else(|| Format::from_path(path));
            let x = match fmt {
                Format::Csv => load_csv(path, spec.has_header)?,
                Format::F32Raw => load_f32_raw(path)?,
            };
            (x, None)
        }
        Source::Synthetic(g) => g.generate()?,
    };
    if let Some(lp) = &spec.labels_path {
        let l = read_labels(lp)?;
        check_labels(&l, x.rows())?;
        labels = Some(l);
    }
    Ok((x, labels))
}

pub fn load_matrix(path: &Path, format: Option<Format>, has_header: bool) -> Result<DataMatrix> {
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => load_csv(path, has_header),
        Format::F32Raw => load_f32_raw(path),
    }
}

pub fn save_matrix(path: &Path, format: Option<Format>, m: &DataMatrix) -> Result<()> {
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => save_csv(path, m),
        Format::F32Raw => save_f32_raw(path, m),
    }
}

pub fn load_csv(path: &Path, has_header: bool) -> Result<DataMatrix> {
    read_csv(BufReader::new(File::open(path)?), has_header)
}

/// Parses CSV text. Blank lines are skipped; line numbers in errors are
/// 1-based physical lines.
pub fn read_csv(reader: impl Read, has_header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| match e.position() {
            Some(p) => HnneError::Parse {
                line: p.line() as usize,
                message: e.to_string(),
            },
            None => invalid_data(e.to_string()),
        })?;
        if !more {
            break;
        }
        let lineno = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if rows == 0 {
            cols = record.len();
        } else if record.len() != cols {
            return Err(invalid_data(format!(
                "line {lineno} has {} columns, expected {cols}",
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| HnneError::Parse {
                line: lineno,
                message: format!("column {}: cannot parse '{field}' as a number", c + 1),
            })?;
            if !v.is_finite() {
                return Err(invalid_data(format!(
                    "non-finite value '{field}' at line {lineno}, column {}",
                    c + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(invalid_data("input contains no data rows"));
    }
    DataMatrix::new(rows, cols, values)
}

pub fn save_csv(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Writes shortest round-trip decimal representations, one row per line.
pub fn write_csv(w: &mut impl Write, m: &DataMatrix) -> Result<()> {
    let mut line = String::new();
    for row in m.iter_rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn load_f32_raw(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    read_f32_raw(BufReader::new(file), Some(len))
}

/// Reads the f32-raw format. When `total_len` is known the header is
/// checked against it before any allocation.
pub fn read_f32_raw(mut r: impl Read, total_len: Option<u64>) -> Result<DataMatrix> {
    let mut header = [0u8; RAW_HEADER_LEN as usize];
    r.read_exact(&mut header)
        .map_err(|_| invalid_data("file too short for an f32-raw header"))?;
    if &header[..4] != RAW_MAGIC {
        return Err(invalid_data("not an f32-raw file (bad magic)"));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(invalid_data(format!("f32-raw header declares an empty {rows}x{cols} matrix")));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid_data("f32-raw dimensions overflow"))?;
    if let Some(len) = total_len {
        let expect = RAW_HEADER_LEN + 4 * count as u64;
        if len != expect {
            return Err(invalid_data(format!(
                "f32-raw header declares {rows}x{cols} ({expect} bytes) but the file has {len} bytes"
            )));
        }
    }
    let mut values = Vec::with_capacity(count);
    let mut buf = vec![0u8; 4 * RAW_CHUNK_VALUES];
    while values.len() < count {
        let take = (count - values.len()).min(RAW_CHUNK_VALUES);
        let chunk = &mut buf[..4 * take];
        r.read_exact(chunk)
            .map_err(|_| invalid_data(format!("f32-raw payload truncated after {} values", values.len())))?;
        for b in chunk.chunks_exact(4) {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if !v.is_finite() {
                let pos = values.len();
                return Err(invalid_data(format!(
                    "non-finite value at row {}, column {}",
                    pos / cols,
                    pos % cols
                )));
            }
            values.push(v as f64);
        }
    }
    if total_len.is_none() && r.read(&mut [0u8; 1])? != 0 {
        return Err(invalid_data("trailing bytes after f32-raw payload"));
    }
    DataMatrix::new(rows, cols, values)
}

pub fn save_f32_raw(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_f32_raw(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Values are narrowed to `f32`; data read from this format round-trips exactly.
pub fn write_f32_raw(w: &mut impl Write, m: &DataMatrix) -> Result<()> {
    let too_big = |what| invalid_argument(format!("{what} exceeds the f32-raw u32 limit"));
    let rows = u32::try_from(m.rows()).map_err(|_| too_big("row count"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| too_big("column count"))?;
    w.write_all(RAW_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for &v in m.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(invalid_data(format!("value {v} overflows f32")));
        }
        w.write_all(&f.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one integer label per line; blank lines are skipped.
pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    parse_labels(BufReader::new(File::open(path)?))
}

pub fn parse_labels(reader: impl BufRead) -> Result<Vec<i64>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| HnneError::Parse {
            line: idx + 1,
            message: format!("cannot parse '{t}' as an integer label"),
        })?);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn check_labels(labels: &[i64], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(invalid_data(format!(
            "labels file has {} entries but the data has {rows} rows",
            labels.len()
        )));
    }
    Ok(())
}

const BLOB_CENTER_STREAM: u64 = 0x424c_4331;
const BLOB_NOISE_STREAM: u64 = 0x424c_4e31;
const SQUARE_STREAM: u64 = 0x5351;

/// Isotropic Gaussian clusters. Centers are drawn from `N(0, separation²)`
/// per axis and redrawn until every pair is at least `separation` apart;
/// point `i` belongs to cluster `i mod clusters`.
pub fn gen_blobs(
    n: usize,
    dim: usize,
    clusters: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<(DataMatrix, Vec<i64>)> {
    if clusters == 0 || dim == 0 || n < clusters {
        return Err(invalid_argument(format!(
            "blobs need clusters >= 1, dim >= 1 and n >= clusters (n={n}, dim={dim}, clusters={clusters})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite() && noise >= 0.0 && noise.is_finite()) {
        return Err(invalid_argument("separation and noise must be finite and non-negative"));
    }
    let mut rng = rng::seeded(seed, BLOB_CENTER_STREAM);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(clusters);
    let mut spread = separation.max(f64::MIN_POSITIVE);
    let mut attempts = 0;
    while centers.len() < clusters {
        let c: Vec<f64> = (0..dim)
            .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if centers.iter().all(|o| sq_dist(o, &c) >= separation * separation) {
            centers.push(c);
        } else {
            attempts += 1;
            if attempts % 100 == 0 {
                spread *= 1.5;
            }
        }
    }
    let mut rng = rng::seeded(seed, BLOB_NOISE_STREAM);
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % clusters;
        labels.push(c as i64);
        for &m in &centers[c] {
            values.push(m + noise * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok((DataMatrix::new(n, dim, values)?, labels))
}

/// `n` points uniform in the unit square.
pub fn gen_uniform_square(n: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 {
        return Err(invalid_argument(format!("need n >= 2, got {n}")));
    }
    let mut rng = rng::seeded(seed, SQUARE_STREAM);
    let values: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    DataMatrix::new(n, 2, values)
}
