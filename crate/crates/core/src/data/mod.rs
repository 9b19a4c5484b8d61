//! Dataset ingestion, preprocessing, and synthetic generation.

pub mod metrics;
pub mod pgm;
pub mod plot;

use std::fs;
use std::path::Path;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::rng::Prng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Binary,
    Real,
}

/// On-disk dataset description: a directory containing `train.csv`,
/// `valid.csv`, and optionally `test.csv`, plus the preprocessing to apply.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub name: String,
    /// Explicit directory; defaults to `<data root>/<name>`.
    #[serde(default)]
    pub path: Option<std::path::PathBuf>,
    pub kind: DataKind,
    /// Binarize after loading (raw files may carry grayscale levels).
    #[serde(default)]
    pub binarize_threshold: Option<f64>,
    /// Fivefold shift augmentation of the training split (8x8 images).
    #[serde(default)]
    pub augment_shifts: bool,
    /// Per-feature z-scoring with statistics from the training split.
    #[serde(default)]
    pub standardize: bool,
}

/// Loads and preprocesses a dataset per its spec. `root` resolves named
/// datasets (the CLI passes `--data-dir` or `ADVIL_DATA_DIR`).
pub fn load_dataset(spec: &DataSpec, root: Option<&Path>) -> Result<Dataset> {
    let dir = match (&spec.path, root) {
        (Some(p), _) => p.clone(),
        (None, Some(r)) => r.join(&spec.name),
        (None, None) => {
            return Err(Error::config(
                "data.path",
                "no dataset directory: set data.path, --data-dir, or ADVIL_DATA_DIR",
            ))
        }
    };
    let raw_kind = if spec.binarize_threshold.is_some() {
        DataKind::Real
    } else {
        spec.kind
    };
    let mut train = load_csv(dir.join("train.csv"), raw_kind)?;
    let mut valid = load_csv(dir.join("valid.csv"), raw_kind)?;
    let test_path = dir.join("test.csv");
    let mut test = if test_path.exists() {
        Some(load_csv(test_path, raw_kind)?)
    } else {
        None
    };

    if let Some(thr) = spec.binarize_threshold {
        train = binarize(&train, thr);
        valid = binarize(&valid, thr);
        test = test.map(|t| binarize(&t, thr));
    }
    if spec.augment_shifts {
        train = shift_augment_digits(&train)?;
    }
    if spec.standardize {
        let (z, stats) = standardize(&train);
        train = z;
        let apply = |m: &DenseArray| {
            let d = m.cols();
            DenseArray::new(
                m.shape().to_vec(),
                m.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (x - stats.mean[i % d]) / stats.std[i % d])
                    .collect(),
            )
            .expect("finite z-scores")
        };
        valid = apply(&valid);
        test = test.as_ref().map(apply);
    }

    let ds = Dataset {
        name: spec.name.clone(),
        train,
        valid,
        test,
        kind: spec.kind,
    };
    ds.validate()?;
    Ok(ds)
}

/// Example matrices with train/valid/test splits. `test` may be empty when
/// a corpus ships without one (evaluation then falls back to `valid`).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub train: DenseArray,
    pub valid: DenseArray,
    pub test: Option<DenseArray>,
    pub kind: DataKind,
}

impl Dataset {
    pub fn d(&self) -> usize {
        self.train.cols()
    }

    pub fn eval_split(&self, which: &str) -> Result<&DenseArray> {
        match which {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => self.test.as_ref().ok_or_else(|| {
                Error::config("split", format!("dataset {} has no test split", self.name))
            }),
            other => Err(Error::config("split", format!("unknown split {other}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.train.cols();
        if self.valid.cols() != d || self.test.as_ref().is_some_and(|t| t.cols() != d) {
            return Err(Error::DimMismatch("split widths differ".into()));
        }
        if self.kind == DataKind::Binary {
            for split in [Some(&self.train), Some(&self.valid), self.test.as_ref()]
                .into_iter()
                .flatten()
            {
                if split.values().iter().any(|&x| x != 0.0 && x != 1.0) {
                    return Err(Error::Domain {
                        op: "Dataset::validate",
                        detail: "binary dataset contains non-{0,1} entries".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// FNV-1a hash over dimensions and full-precision values; identifies
    /// the exact preprocessed data a run saw.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for split in [Some(&self.train), Some(&self.valid), self.test.as_ref()]
            .into_iter()
            .flatten()
        {
            eat(&(split.rows() as u64).to_le_bytes());
            eat(&(split.cols() as u64).to_le_bytes());
            for &x in split.values() {
                eat(&x.to_le_bytes());
            }
        }
        h
    }
}

// ── CSV ──────────────────────────────────────────────────────────────

/// Loads a headerless comma-separated matrix; rows are examples. Binary
/// kind additionally validates every entry is 0 or 1.
pub fn load_csv(path: impl AsRef<Path>, kind: DataKind) -> Result<DenseArray> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_csv(&text, kind, &path.display().to_string())
}

fn parse_csv(text: &str, kind: DataKind, origin: &str) -> Result<DenseArray> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                detail: format!("non-numeric field {field:?}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: lineno + 1,
                    detail: "non-finite value".into(),
                });
            }
            if kind == DataKind::Binary && x != 0.0 && x != 1.0 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: lineno + 1,
                    detail: format!("value {x} out of binary domain"),
                });
            }
            row.push(x);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: lineno + 1,
                    detail: format!("ragged row: {} fields, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 0,
            detail: "empty file".into(),
        });
    }
    DenseArray::from_rows(&rows)
}

/// Writes a matrix as full-precision CSV (round-trips exactly).
pub fn save_csv(path: impl AsRef<Path>, m: &DenseArray) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format_full(*x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Shortest decimal that parses back to the same f64.
pub(crate) fn format_full(x: f64) -> String {
    let mut s = format!("{x}");
    if s.parse::<f64>() != Ok(x) {
        s = format!("{x:.17}");
    }
    s
}

// ── Preprocessing ────────────────────────────────────────────────────

/// Fivefold augmentation of 8x8 images: original plus one-pixel shifts
/// up, down, left, right with zero fill at the vacated edge.
pub fn shift_augment_digits(m: &DenseArray) -> Result<DenseArray> {
    if m.cols() != 64 {
        return Err(Error::DimMismatch(format!(
            "digit augmentation expects 64 columns, got {}",
            m.cols()
        )));
    }
    let n = m.rows();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(5 * n);
    for r in 0..n {
        rows.push(m.row(r).to_vec());
    }
    // (dr, dc) moves pixel (i, j) to (i + dr, j + dc)
    for &(dr, dc) in &[(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
        for r in 0..n {
            let src = m.row(r);
            let mut img = vec![0.0; 64];
            for i in 0..8i32 {
                for j in 0..8i32 {
                    let (ti, tj) = (i + dr, j + dc);
                    if (0..8).contains(&ti) && (0..8).contains(&tj) {
                        img[(ti * 8 + tj) as usize] = src[(i * 8 + j) as usize];
                    }
                }
            }
            rows.push(img);
        }
    }
    DenseArray::from_rows(&rows)
}

/// `1[x >= threshold]` elementwise.
pub fn binarize(m: &DenseArray, threshold: f64) -> DenseArray {
    m.map(|x| if x >= threshold { 1.0 } else { 0.0 })
}

/// Per-feature statistics captured by `standardize`, used for inversion.
#[derive(Clone, Debug)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-feature z-scores; standard deviations are floored at 1e-8 so
/// constant columns map to zeros.
pub fn standardize(m: &DenseArray) -> (DenseArray, Standardization) {
    let (n, d) = (m.rows(), m.cols());
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (j, &x) in m.row(r).iter().enumerate() {
            mean[j] += x;
        }
    }
    for mu in &mut mean {
        *mu /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in 0..n {
        for (j, &x) in m.row(r).iter().enumerate() {
            var[j] += (x - mean[j]) * (x - mean[j]);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&v| (v / n as f64).sqrt().max(1e-8))
        .collect();
    let z = DenseArray::new(
        m.shape().to_vec(),
        m.values()
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - mean[i % d]) / std[i % d])
            .collect(),
    )
    .expect("finite z-scores");
    (z, Standardization { mean, std })
}

pub fn destandardize(z: &DenseArray, stats: &Standardization) -> DenseArray {
    let d = z.cols();
    DenseArray::new(
        z.shape().to_vec(),
        z.values()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * stats.std[i % d] + stats.mean[i % d])
            .collect(),
    )
    .expect("finite inversion")
}

// ── Synthetic data ───────────────────────────────────────────────────

/// A synthetic binary dataset drawn from a categorical distribution over
/// `{0,1}^d`, itself sampled from a symmetric Dirichlet. Returns the true
/// probability table for oracle likelihood computations.
pub fn dirichlet_categorical_synth(
    d: usize,
    alpha: f64,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if d > 12 {
        return Err(Error::BudgetExceeded(format!(
            "synthetic table budget is 12 bits, got {d}"
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::Domain {
            op: "dirichlet_categorical_synth",
            detail: format!("alpha must be positive, got {alpha}"),
        });
    }
    let mut rng = Prng::seed_from(seed);
    let k = 1usize << d;
    let table = rng.dirichlet(alpha, k);

    // cumulative distribution for inverse-transform sampling
    let mut cdf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &p in &table {
        acc += p;
        cdf.push(acc);
    }

    let mut draw_split = |n: usize| -> DenseArray {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.uniform();
            let code = cdf.partition_point(|&c| c < u).min(k - 1);
            rows.push(crate::energy::enumeration::code_bits(code, d));
        }
        DenseArray::from_rows(&rows).expect("rectangular")
    };

    let train = draw_split(sizes.0);
    let valid = draw_split(sizes.1);
    let test = draw_split(sizes.2);
    let ds = Dataset {
        name: format!("dirichlet-synth-d{d}"),
        train,
        valid,
        test: Some(test),
        kind: DataKind::Binary,
    };
    Ok((ds, table))
}
