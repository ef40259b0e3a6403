//! Observed tensor entries: the sampling operator `A` and its adjoint.

use std::collections::HashSet;

use crate::error::{invalid, Result};
use crate::tensor::{multi_index_of, offset_of, DenseTensor};

/// Observed entries of a tensor with known dims.
///
/// Entries are kept in insertion order and addressed by flat storage offset.
/// Multi-indices are 0-based here; the file formats convert to 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn empty(dims: &[usize]) -> Result<Self> {
        DenseTensor::zeros(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            offsets: Vec::new(),
            values: Vec::new(),
        })
    }

    /// Builds a sample set from `(0-based multi-index, value)` pairs.
    pub fn new(dims: &[usize], entries: impl IntoIterator<Item = (Vec<usize>, f64)>) -> Result<Self> {
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for (index, value) in entries {
            offsets.push(offset_of(dims, &index)?);
            values.push(value);
        }
        Self::from_offsets(dims, offsets, values)
    }

    /// Builds a sample set from flat storage offsets.
    pub fn from_offsets(dims: &[usize], offsets: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let total = DenseTensor::zeros(dims)?.len();
        if offsets.len() != values.len() {
            return Err(invalid("offset and value counts differ"));
        }
        let mut seen = HashSet::with_capacity(offsets.len());
        for &o in &offsets {
            if o >= total {
                return Err(invalid(format!("sample offset {o} outside tensor of {total} entries")));
            }
            if !seen.insert(o) {
                let idx: Vec<usize> = multi_index_of(dims, o).iter().map(|i| i + 1).collect();
                return Err(invalid(format!("duplicate sample at index {idx:?}")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample value {v}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            offsets,
            values,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(0-based multi-index, value)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.offsets
            .iter()
            .zip(&self.values)
            .map(|(&o, &v)| (multi_index_of(&self.dims, o), v))
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(invalid(format!(
                "sample dims {:?} do not match tensor dims {dims:?}",
                self.dims
            )));
        }
        Ok(())
    }

    /// `A(t)`: the tensor values at the sampled positions.
    pub fn gather(&self, t: &DenseTensor) -> Result<Vec<f64>> {
        self.check_dims(t.dims())?;
        Ok(self.offsets.iter().map(|&o| t.values()[o]).collect())
    }

    /// `A*(b)`: sample values scattered into a zero tensor.
    pub fn scatter(&self) -> DenseTensor {
        let mut values = vec![0.0; self.dims.iter().product()];
        for (&o, &v) in self.offsets.iter().zip(&self.values) {
            values[o] = v;
        }
        DenseTensor::from_parts(self.dims.clone(), values)
    }

    /// `‖A(t) − b‖₂`.
    pub fn misfit(&self, t: &DenseTensor) -> Result<f64> {
        self.check_dims(t.dims())?;
        Ok(self
            .offsets
            .iter()
            .zip(&self.values)
            .map(|(&o, &b)| (t.values()[o] - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Boolean mask over storage offsets.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dims.iter().product()];
        for &o in &self.offsets {
            mask[o] = true;
        }
        mask
    }

    /// Storage offsets that are not sampled, ascending.
    pub fn unobserved_offsets(&self) -> Vec<usize> {
        self.mask()
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(o, _)| o)
            .collect()
    }

    /// The entries at the given positions of this set's entry list.
    pub fn select(&self, positions: &[usize]) -> Result<SampleSet> {
        let offsets = positions.iter().map(|&p| self.offsets[p]).collect();
        let values = positions.iter().map(|&p| self.values[p]).collect();
        Self::from_offsets(&self.dims, offsets, values)
    }

    pub fn is_disjoint(&self, other: &SampleSet) -> bool {
        let mine: HashSet<usize> = self.offsets.iter().copied().collect();
        other.offsets.iter().all(|o| !mine.contains(o))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_scatter_are_adjoint() {
        let dims = [3, 2];
        let s = SampleSet::new(&dims, vec![(vec![0, 0], 2.0), (vec![2, 1], -1.0)]).unwrap();
        let t = DenseTensor::from_fn(&dims, |i| (i[0] * 2 + i[1]) as f64 + 0.5).unwrap();
        let b = s.gather(&t).unwrap();
        assert_eq!(b, vec![0.5, 5.5]);
        // <A t, b> = <t, A* b>
        let lhs: f64 = b.iter().zip(s.values()).map(|(x, y)| x * y).sum();
        assert_eq!(lhs, t.inner(&s.scatter()).unwrap());
        assert_eq!(s.unobserved_offsets(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(SampleSet::new(&[2, 2], vec![(vec![1, 1], 1.0), (vec![1, 1], 2.0)]).is_err());
        assert!(SampleSet::new(&[2, 2], vec![(vec![2, 0], 1.0)]).is_err());
        assert!(SampleSet::new(&[2, 2], vec![(vec![0, 0], f64::INFINITY)]).is_err());
    }

    #[test]
    fn misfit_of_exact_tensor_is_zero() {
        let t = DenseTensor::from_fn(&[4], |i| i[0] as f64).unwrap();
        let s = SampleSet::from_offsets(&[4], vec![3, 1], vec![3.0, 1.0]).unwrap();
        assert_eq!(s.misfit(&t).unwrap(), 0.0);
    }
}
