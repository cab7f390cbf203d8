use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NnError;

/// Dense row-major array of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = NnError;

    fn try_from(raw: RawTensor) -> Result<Self, Self::Error> {
        Tensor::new(raw.shape, raw.values)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NnError::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(NnError::InvalidTensor(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![value; shape.iter().product()],
        }
    }

    /// 2-D tensor from `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    /// 2-D tensor from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::InvalidTensor("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Some((r, c)),
            _ => None,
        }
    }

    pub(crate) fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize), NnError> {
        self.matrix_dims().ok_or_else(|| {
            NnError::shape(op, format!("expected a matrix, got shape {:?}", self.shape))
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[self.rank() - 1];
        &self.values[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[self.rank() - 1];
        &mut self.values[r * cols..(r + 1) * cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.shape[1] + c]
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, NnError> {
        let (n, k) = self.expect_matrix("matmul")?;
        let (k2, m) = rhs.expect_matrix("matmul")?;
        if k != k2 {
            return Err(NnError::shape("matmul", format!("{n}x{k} times {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a = &self.values[i * k..(i + 1) * k];
            let o = &mut out[i * m..(i + 1) * m];
            for (p, &av) in a.iter().enumerate() {
                let b = &rhs.values[p * m..(p + 1) * m];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            values: out,
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, NnError> {
        if self.shape != rhs.shape {
            return Err(NnError::shape(
                "add",
                format!("{:?} vs {:?}", self.shape, rhs.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Adds `bias` to every row of a matrix.
    pub fn add_row_bias(&mut self, bias: &Tensor) -> Result<(), NnError> {
        let (_, c) = self.expect_matrix("bias")?;
        if bias.values.len() != c {
            return Err(NnError::shape(
                "bias",
                format!("bias of {} for {c} columns", bias.values.len()),
            ));
        }
        for v in self.values.chunks_mut(c) {
            for (x, b) in v.iter_mut().zip(&bias.values) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Stacks matrices with equal column counts along the row axis.
    pub fn vstack(parts: &[Tensor]) -> Result<Tensor, NnError> {
        let cols = match parts.first() {
            Some(t) => t.expect_matrix("vstack")?.1,
            None => return Err(NnError::shape("vstack", "no parts")),
        };
        let mut rows = 0;
        let mut values = Vec::new();
        for p in parts {
            let (r, c) = p.expect_matrix("vstack")?;
            if c != cols {
                return Err(NnError::shape("vstack", format!("{c} columns vs {cols}")));
            }
            rows += r;
            values.extend_from_slice(&p.values);
        }
        Ok(Tensor {
            shape: vec![rows, cols],
            values,
        })
    }
}

/// Named tensors, serialized as `{"name": {"shape": [...], "values": [...]}}`.
pub type TensorMap = BTreeMap<String, Tensor>;

pub fn load_tensor_file(path: &Path) -> crate::error::Result<TensorMap> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| crate::error::Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn tensor_map_to_json(map: &TensorMap) -> String {
    let mut s = serde_json::to_string(map).expect("tensors serialize");
    s.push('\n');
    s
}
