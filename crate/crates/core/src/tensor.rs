//! Dense N-order tensors, unfoldings and mode products.
//!
//! Values are stored with the first index varying fastest. Modes are 0-based
//! throughout the API; error messages and file formats report them 1-based.
//!
//! For a mode `m`, an element at multi-index `(i_1, .., i_N)` lives at flat
//! offset `l + left * (i_m + n_m * r)`, where `left = n_1 * .. * n_{m-1}`,
//! `l` is the flat offset of the indices before `m` and `r` the flat offset of
//! the indices after it. The mode-`m` unfolding places that element in row
//! `i_m`, column `l + left * r`, which is the usual column map
//! `j = sum_{k != m} i_k * J_k` with `J_k` the product of the extents before
//! `k` skipping `m`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

pub type Matrix = DMatrix<f64>;

/// Largest tensor order supported.
pub const MAX_ORDER: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_ORDER {
        return Err(invalid(format!(
            "tensor order must be in 1..={MAX_ORDER}, got {}",
            dims.len()
        )));
    }
    if let Some(pos) = dims.iter().position(|&n| n == 0) {
        return Err(invalid(format!("extent of mode {} is zero", pos + 1)));
    }
    dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).ok_or_else(|| invalid("tensor size overflows usize"))
}

impl DenseTensor {
    /// Builds a tensor from dims and values in storage order. All values must
    /// be finite.
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if values.len() != len {
            return Err(invalid(format!(
                "dims {dims:?} require {len} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at flat offset {pos}")));
        }
        Ok(Self { dims, values })
    }

    /// Unchecked constructor for internal arithmetic, where the caller
    /// guarantees the length and handles finiteness itself.
    pub(crate) fn from_parts(dims: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), dims.iter().product::<usize>());
        Self { dims, values }
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            values: vec![0.0; len],
        })
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.values.fill(value);
        Self::new(t.dims, t.values)
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index, in
    /// storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f(&idx));
            for (i, n) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < *n {
                    break;
                }
                *i = 0;
            }
        }
        Self::new(dims.to_vec(), values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        offset_of(&self.dims, index)
    }

    /// 0-based multi-index of a flat offset.
    pub fn multi_index(&self, offset: usize) -> Vec<usize> {
        multi_index_of(&self.dims, offset)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.offset(index)?])
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(invalid(format!(
                "mode {} out of range 1..={}",
                mode + 1,
                self.order()
            )));
        }
        Ok(())
    }

    /// `(left, extent, right)` strides for fibers along `mode`.
    fn fiber_layout(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }

    pub fn same_dims(&self, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(invalid(format!(
                "dims mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Mode-`mode` unfolding: the `n_mode x I_mode` matrix whose columns are
    /// the mode fibers.
    pub fn unfold(&self, mode: usize) -> Result<Unfolding> {
        self.check_mode(mode)?;
        let (left, n, right) = self.fiber_layout(mode);
        let cols = left * right;
        let mut matrix = Matrix::zeros(n, cols);
        for r in 0..right {
            for i in 0..n {
                let src = left * (i + n * r);
                for l in 0..left {
                    matrix[(i, l + left * r)] = self.values[src + l];
                }
            }
        }
        Ok(Unfolding {
            mode,
            matrix,
            parent_dims: self.dims.clone(),
        })
    }

    /// `self ×_mode y`: the tensor whose mode unfolding is `y * X_(mode)`.
    /// The extent of `mode` becomes `y.nrows()`.
    pub fn mode_multiply(&self, mode: usize, y: &Matrix) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        if y.ncols() != self.dims[mode] {
            return Err(invalid(format!(
                "mode {} product needs a matrix with {} columns, got {}x{}",
                mode + 1,
                self.dims[mode],
                y.nrows(),
                y.ncols()
            )));
        }
        if y.nrows() == 0 {
            return Err(invalid("mode product matrix has no rows"));
        }
        let product = y * self.unfold(mode)?.matrix;
        let mut dims = self.dims.clone();
        dims[mode] = y.nrows();
        Unfolding {
            mode,
            matrix: product,
            parent_dims: dims,
        }
        .refold()
    }

    /// Applies `f(input_fiber, output_fiber)` to every mode-`mode` fiber.
    pub fn map_fibers(
        &self,
        mode: usize,
        mut f: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    ) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let (left, n, right) = self.fiber_layout(mode);
        let mut out = self.values.clone();
        let mut fiber = vec![0.0; n];
        let mut result = vec![0.0; n];
        for r in 0..right {
            for l in 0..left {
                let base = l + left * n * r;
                for (i, x) in fiber.iter_mut().enumerate() {
                    *x = self.values[base + left * i];
                }
                f(&fiber, &mut result)?;
                for (i, y) in result.iter().enumerate() {
                    out[base + left * i] = *y;
                }
            }
        }
        Ok(DenseTensor::from_parts(self.dims.clone(), out))
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> DenseTensor {
        DenseTensor::from_parts(
            self.dims.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &DenseTensor) -> Result<DenseTensor> {
        self.same_dims(other)?;
        Ok(DenseTensor::from_parts(
            self.dims.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.add_scaled(-1.0, other)
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &DenseTensor) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) fn offset_of(dims: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != dims.len() {
        return Err(invalid(format!(
            "index has {} components, tensor order is {}",
            index.len(),
            dims.len()
        )));
    }
    let mut offset = 0;
    let mut stride = 1;
    for (mode, (&i, &n)) in index.iter().zip(dims).enumerate() {
        if i >= n {
            return Err(invalid(format!(
                "index {} out of range 1..={n} in mode {}",
                i + 1,
                mode + 1
            )));
        }
        offset += i * stride;
        stride *= n;
    }
    Ok(offset)
}

pub(crate) fn multi_index_of(dims: &[usize], mut offset: usize) -> Vec<usize> {
    dims.iter()
        .map(|&n| {
            let i = offset % n;
            offset /= n;
            i
        })
        .collect()
}

/// A materialized mode-`m` unfolding together with the dims it folds back to.
#[derive(Clone, Debug, PartialEq)]
pub struct Unfolding {
    mode: usize,
    matrix: Matrix,
    parent_dims: Vec<usize>,
}

impl Unfolding {
    pub fn new(mode: usize, matrix: Matrix, parent_dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&parent_dims)?;
        if mode >= parent_dims.len() {
            return Err(invalid(format!(
                "mode {} out of range 1..={}",
                mode + 1,
                parent_dims.len()
            )));
        }
        if matrix.nrows() != parent_dims[mode] || matrix.nrows() * matrix.ncols() != len {
            return Err(invalid(format!(
                "{}x{} matrix is not a mode-{} unfolding of dims {parent_dims:?}",
                matrix.nrows(),
                matrix.ncols(),
                mode + 1
            )));
        }
        Ok(Self {
            mode,
            matrix,
            parent_dims,
        })
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn parent_dims(&self) -> &[usize] {
        &self.parent_dims
    }

    /// Replaces the matrix, keeping mode and parent dims.
    pub fn with_matrix(&self, matrix: Matrix) -> Result<Self> {
        Self::new(self.mode, matrix, self.parent_dims.clone())
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn refold(&self) -> Result<DenseTensor> {
        let dims = &self.parent_dims;
        let mode = self.mode;
        let left: usize = dims[..mode].iter().product();
        let right: usize = dims[mode + 1..].iter().product();
        let n = dims[mode];
        if self.matrix.nrows() != n || self.matrix.ncols() != left * right {
            return Err(invalid(format!(
                "{}x{} matrix cannot fold into dims {dims:?} along mode {}",
                self.matrix.nrows(),
                self.matrix.ncols(),
                mode + 1
            )));
        }
        let mut values = vec![0.0; n * left * right];
        for r in 0..right {
            for i in 0..n {
                let dst = left * (i + n * r);
                for l in 0..left {
                    values[dst + l] = self.matrix[(i, l + left * r)];
                }
            }
        }
        Ok(DenseTensor::from_parts(dims.clone(), values))
    }
}

/// Free-function form of [`DenseTensor::unfold`].
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Unfolding> {
    t.unfold(mode)
}

/// Free-function form of [`Unfolding::refold`].
pub fn refold(u: &Unfolding) -> Result<DenseTensor> {
    u.refold()
}
