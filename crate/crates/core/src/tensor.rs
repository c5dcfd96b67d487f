//! Dense embedding numerics: normalization, cosine similarity and batched
//! similarity matrices.
//!
//! Dot products accumulate in `f64` in ascending component order and are
//! stored as `f32`, so every entry is independent of how rows are scheduled
//! across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Norms below this are treated as zero vectors.
pub const NORM_FLOOR: f64 = 1e-12;

/// A single embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Dot product accumulated in `f64`, ascending index order.
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum()
}

/// Scale `values` to unit Euclidean norm.
///
/// A vector whose norm is already 1 to within `f32` rounding is returned
/// unchanged, which makes the operation idempotent bit for bit.
pub fn normalize_slice(values: &[f32]) -> Result<Vec<f32>> {
    check_finite(values)?;
    let n = norm(values);
    if n < NORM_FLOOR {
        return Err(Error::ZeroNorm { norm: n });
    }
    if (n - 1.0).abs() <= 4.0 * f64::from(f32::EPSILON) {
        return Ok(values.to_vec());
    }
    Ok(values.iter().map(|&x| (f64::from(x) / n) as f32).collect())
}

pub fn l2_normalize(v: &Embedding) -> Result<Embedding> {
    normalize_slice(&v.0).map(Embedding)
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &Embedding, v: &Embedding) -> Result<f32> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(unit_cosine(&u.0, &v.0))
}

#[inline]
pub(crate) fn unit_cosine(u: &[f32], v: &[f32]) -> f32 {
    dot(u, v).clamp(-1.0, 1.0) as f32
}

/// Row-major `rows x dim` matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyInput("matrix has no rows"));
        }
        if dim < 2 {
            return Err(Error::BadParams(format!("embedding dim {dim} < 2")));
        }
        if data.len() != rows * dim {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * dim,
            });
        }
        check_finite(&data)?;
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::EmptyInput("matrix has no rows"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding(self.row(i).to_vec())
    }

    /// Copy of the matrix with every row scaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.iter_rows() {
            data.extend(normalize_slice(row)?);
        }
        Ok(EmbeddingMatrix {
            rows: self.rows,
            dim: self.dim,
            data,
        })
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let rows: Vec<&[f32]> = indices.iter().map(|&i| self.row(i)).collect();
        Self::from_rows(&rows)
    }

    /// Vertical concatenation.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(EmbeddingMatrix {
            rows: self.rows + other.rows,
            dim: self.dim,
            data,
        })
    }
}

/// Row-major `rows x cols` table of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl SimMatrix {
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Cosine similarity of every image row against every concept row.
pub fn sim_matrix(images: &EmbeddingMatrix, concepts: &EmbeddingMatrix) -> Result<SimMatrix> {
    sim_rows(images.data(), images.dim(), concepts)
}

/// Like [`sim_matrix`] but over a raw row-major slice, so callers holding
/// zero rows get `EmptyInput` rather than a construction error.
pub fn sim_rows(images: &[f32], dim: usize, concepts: &EmbeddingMatrix) -> Result<SimMatrix> {
    if images.is_empty() {
        return Err(Error::EmptyInput("no image rows"));
    }
    if dim != concepts.dim() {
        return Err(Error::DimMismatch {
            expected: concepts.dim(),
            found: dim,
        });
    }
    let cols = concepts.rows();
    let mut data = vec![0f32; images.len() / dim * cols];
    data.par_chunks_mut(cols)
        .zip(images.par_chunks_exact(dim))
        .for_each(|(out, img)| {
            for (o, c) in out.iter_mut().zip(concepts.iter_rows()) {
                *o = unit_cosine(img, c);
            }
        });
    Ok(SimMatrix {
        rows: images.len() / dim,
        cols,
        data,
    })
}
