//! Desk-scale low-rank adapter arithmetic.
//!
//! A frozen weight matrix `W` (d×k) is adapted by two trainable low-rank
//! factors: `A` (r×k) and `B` (d×r), so the weight update is the rank-r
//! product `B·A` times a scaling factor. A fresh adapter has `B = 0` and
//! therefore a zero delta, which keeps the adapted function identical to
//! the frozen one until training moves `B`.
//!
//! There is no training loop here; the point is that the decomposition,
//! the merged/unmerged forward equivalence, and the parameter accounting
//! are all checkable on small matrices.
//!
//! Adapters save to a plain text format: a header line
//! `lora <d> <k> <r> <scaling>` followed by the rows of `A`, then the rows
//! of `B`, one row per line, space-separated decimal entries.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoraError {
    #[error("rank {r} invalid for a {d}x{k} base matrix (need 1 <= r <= min(d, k))")]
    RankTooLarge { r: usize, d: usize, k: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("adapter file: {0}")]
    Format(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major dense matrix of f64 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>) -> Result<DenseMatrix, LoraError> {
        if entries.len() != rows * cols {
            return Err(LoraError::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                found: format!("{} entries", entries.len()),
            });
        }
        if let Some(bad) = entries.iter().position(|e| !e.is_finite()) {
            return Err(LoraError::NonFinite(bad));
        }
        Ok(DenseMatrix { rows, cols, entries })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `self · other`, panics on incompatible shapes (internal use only;
    /// public operations validate shapes first).
    fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for l in 0..self.cols {
                    acc += self.get(i, l) * other.get(l, j);
                }
                out.entries[i * other.cols + j] = acc;
            }
        }
        out
    }

    /// `self · x` for a column vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LoraError> {
        if x.len() != self.cols {
            return Err(LoraError::ShapeMismatch {
                expected: format!("vector of length {}", self.cols),
                found: format!("length {}", x.len()),
            });
        }
        let mut out = vec![0.0; self.rows];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, xv) in x.iter().enumerate() {
                acc += self.get(i, j) * xv;
            }
            *slot = acc;
        }
        Ok(out)
    }

    fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * factor).collect(),
        }
    }
}

/// Low-rank adapter: `A` is r×k, `B` is d×r, delta is `scaling · B·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub rank: usize,
    pub scaling: f64,
}

impl LoraAdapter {
    pub fn output_dim(&self) -> usize {
        self.b.rows
    }

    pub fn input_dim(&self) -> usize {
        self.a.cols
    }
}

/// Standard normal sample via the Box-Muller transform, so adapter
/// initialization depends only on the seed and not on any library's
/// distribution internals.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fresh adapter for a d×k base matrix: `B` all zeros, `A` from a seeded
/// standard normal stream, scaling 1. The delta of a fresh adapter is the
/// zero matrix.
pub fn init_adapter(d: usize, k: usize, r: usize, seed: u64) -> Result<LoraAdapter, LoraError> {
    if r == 0 || r > d.min(k) {
        return Err(LoraError::RankTooLarge { r, d, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_entries: Vec<f64> = (0..r * k).map(|_| standard_normal(&mut rng)).collect();
    Ok(LoraAdapter {
        a: DenseMatrix::from_entries(r, k, a_entries)?,
        b: DenseMatrix::zeros(d, r),
        rank: r,
        scaling: 1.0,
    })
}

/// The weight update `scaling · B·A`, a d×k matrix.
pub fn delta(adapter: &LoraAdapter) -> DenseMatrix {
    adapter.b.matmul(&adapter.a).scaled(adapter.scaling)
}

/// `W + delta(adapter)`.
pub fn merge(w: &DenseMatrix, adapter: &LoraAdapter) -> Result<DenseMatrix, LoraError> {
    if w.rows != adapter.output_dim() || w.cols != adapter.input_dim() {
        return Err(LoraError::ShapeMismatch {
            expected: format!("{}x{} base matrix", adapter.output_dim(), adapter.input_dim()),
            found: format!("{}x{}", w.rows, w.cols),
        });
    }
    let d = delta(adapter);
    let entries = w.entries.iter().zip(&d.entries).map(|(a, b)| a + b).collect();
    DenseMatrix::from_entries(w.rows, w.cols, entries)
}

/// Adapted forward pass `W·x + scaling · B·(A·x)`, computed without
/// materializing the merged matrix.
pub fn forward(x: &[f64], w: &DenseMatrix, adapter: &LoraAdapter) -> Result<Vec<f64>, LoraError> {
    if w.rows != adapter.output_dim() || w.cols != adapter.input_dim() {
        return Err(LoraError::ShapeMismatch {
            expected: format!("{}x{} base matrix", adapter.output_dim(), adapter.input_dim()),
            found: format!("{}x{}", w.rows, w.cols),
        });
    }
    let base = w.matvec(x)?;
    let ax = adapter.a.matvec(x)?;
    let bax = adapter.b.matvec(&ax)?;
    Ok(base.iter().zip(&bax).map(|(wv, lv)| wv + adapter.scaling * lv).collect())
}

/// Parameter accounting: adapter trains `r·(d+k)` entries instead of the
/// full `d·k`.
pub fn param_savings(d: usize, k: usize, r: usize) -> Result<(usize, usize, f64), LoraError> {
    if r == 0 || r > d.min(k) {
        return Err(LoraError::RankTooLarge { r, d, k });
    }
    let adapter_params = r * (d + k);
    let full_params = d * k;
    Ok((adapter_params, full_params, adapter_params as f64 / full_params as f64))
}

pub fn save_adapter(adapter: &LoraAdapter, path: &Path) -> Result<(), LoraError> {
    let mut out = format!(
        "lora {} {} {} {}\n",
        adapter.output_dim(),
        adapter.input_dim(),
        adapter.rank,
        adapter.scaling
    );
    for matrix in [&adapter.a, &adapter.b] {
        for row in 0..matrix.rows {
            let rendered: Vec<String> =
                (0..matrix.cols).map(|col| format!("{}", matrix.get(row, col))).collect();
            out.push_str(&rendered.join(" "));
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_adapter(path: &Path) -> Result<LoraAdapter, LoraError> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| LoraError::Format("empty file".to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "lora" {
        return Err(LoraError::Format("header must be `lora d k r scaling`".to_string()));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>().map_err(|_| LoraError::Format(format!("bad dimension {s:?}")))
    };
    let d = parse_dim(fields[1])?;
    let k = parse_dim(fields[2])?;
    let r = parse_dim(fields[3])?;
    let scaling = fields[4]
        .parse::<f64>()
        .map_err(|_| LoraError::Format(format!("bad scaling {:?}", fields[4])))?;
    if r == 0 || r > d.min(k) || scaling <= 0.0 {
        return Err(LoraError::Format(format!("invalid header lora {d} {k} {r} {scaling}")));
    }

    let mut read_matrix = |rows: usize, cols: usize| -> Result<DenseMatrix, LoraError> {
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| LoraError::Format("missing matrix row".to_string()))?;
            for field in line.split_whitespace() {
                entries.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| LoraError::Format(format!("bad entry {field:?}")))?,
                );
            }
        }
        DenseMatrix::from_entries(rows, cols, entries)
    };
    let a = read_matrix(r, k)?;
    let b = read_matrix(d, r)?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(LoraError::Format("trailing content after matrices".to_string()));
    }
    Ok(LoraAdapter { a, b, rank: r, scaling })
}
