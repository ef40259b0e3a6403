//! Synthetic radio-map-like ground truth and random sampling masks.
//!
//! A synthetic map is `L + S + E` in dB:
//!
//! * `L = (100 / r) Σ_k u_k¹ ∘ u_k² ∘ … ∘ u_kᴺ`, a CP-rank-`r` field whose
//!   factor vectors are `1 + 0.15 g` with `g` standardized (zero mean, unit
//!   deviation) Gaussian noise, moving-average filtered with half-width
//!   `smoothness` when that is positive;
//! * `S`, present only when `smoothness > 0`: Gaussian noise filtered by a
//!   separable moving average of half-width `smoothness` along every mode,
//!   standardized and scaled to 4 dB;
//! * `E`: white Gaussian noise with deviation `noise_db`.
//!
//! Windows are truncated at the borders. All draws come from the
//! [`Stream::Synthetic`] stream in the order factors, `S`, `E`; the draws for
//! `S` and `E` are consumed even when those terms are zero. With the defaults
//! values fall roughly within 40..160 dB.

use crate::error::{invalid, Result};
use crate::rng::{PortableRng, Stream};
use crate::samples::SampleSet;
use crate::tensor::DenseTensor;

const BASE_DB: f64 = 100.0;
const FACTOR_SPREAD: f64 = 0.15;
const FIELD_DB: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub dims: Vec<usize>,
    pub rank: usize,
    /// Moving-average half-width in cells.
    pub smoothness: usize,
    /// Deviation of the additive white noise, in dB.
    pub noise_db: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(dims: Vec<usize>, rank: usize, smoothness: usize, noise_db: f64, seed: u64) -> Self {
        Self {
            dims,
            rank,
            smoothness,
            noise_db,
            seed,
        }
    }

    /// Largest admissible rank: the smallest side over all unfoldings.
    pub fn max_rank(dims: &[usize]) -> usize {
        let total: usize = dims.iter().product();
        dims.iter().map(|&n| n.min(total / n)).min().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        DenseTensor::zeros(&self.dims)?;
        let max = Self::max_rank(&self.dims);
        if self.rank < 1 || self.rank > max {
            return Err(invalid(format!(
                "rank must be between 1 and {max} (smallest unfolding dimension) for dims {:?}, got {}",
                self.dims, self.rank
            )));
        }
        if !(self.noise_db >= 0.0) || !self.noise_db.is_finite() {
            return Err(invalid(format!("noise_db must be finite and >= 0, got {}", self.noise_db)));
        }
        Ok(())
    }
}

/// Truncated-window moving average of half-width `h`.
fn moving_average(x: &[f64], h: usize) -> Vec<f64> {
    if h == 0 {
        return x.to_vec();
    }
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Zero mean, unit deviation; all-zero when the input is constant.
fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in x.iter_mut() {
        *v = if sd > 1e-12 { (*v - mean) / sd } else { 0.0 };
    }
}

pub fn synthetic_map(spec: &SyntheticSpec) -> Result<DenseTensor> {
    spec.validate()?;
    let dims = &spec.dims;
    let mut rng = PortableRng::new(spec.seed, Stream::Synthetic);

    let mut factors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.rank);
    for _ in 0..spec.rank {
        let per_mode = dims
            .iter()
            .map(|&n| {
                let raw: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let mut g = moving_average(&raw, spec.smoothness);
                standardize(&mut g);
                g.iter().map(|v| 1.0 + FACTOR_SPREAD * v).collect()
            })
            .collect();
        factors.push(per_mode);
    }
    let weight = BASE_DB / spec.rank as f64;
    let low_rank = DenseTensor::from_fn(dims, |idx| {
        factors
            .iter()
            .map(|f| weight * idx.iter().enumerate().map(|(m, &i)| f[m][i]).product::<f64>())
            .sum()
    })?;

    let len = low_rank.len();
    let field_noise: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
    let white: Vec<f64> = (0..len).map(|_| rng.normal()).collect();

    let mut field = DenseTensor::from_parts(dims.clone(), field_noise);
    if spec.smoothness > 0 {
        for mode in 0..dims.len() {
            field = field.map_fibers(mode, |x, y| {
                y.copy_from_slice(&moving_average(x, spec.smoothness));
                Ok(())
            })?;
        }
        standardize(field.values_mut());
    }
    let field_scale = if spec.smoothness > 0 { FIELD_DB } else { 0.0 };

    let values = low_rank
        .values()
        .iter()
        .zip(field.values())
        .zip(&white)
        .map(|((l, s), e)| l + field_scale * s + spec.noise_db * e)
        .collect();
    DenseTensor::new(dims.clone(), values)
}

/// Number of entries a mask of `fraction` selects: `floor(fraction · total + 0.5)`.
pub fn mask_count(total: usize, fraction: f64) -> usize {
    ((fraction * total as f64 + 0.5).floor() as usize).min(total)
}

/// Uniformly chosen distinct storage offsets, ascending.
pub fn random_mask(dims: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid(format!("sampling fraction must be in [0, 1], got {fraction}")));
    }
    let total = DenseTensor::zeros(dims)?.len();
    let count = mask_count(total, fraction);
    let mut rng = PortableRng::new(seed, Stream::Mask);
    let mut mask = rng.sample_without_replacement(total, count);
    mask.sort_unstable();
    Ok(mask)
}

/// `A(truth)` for the given storage offsets.
pub fn make_samples(truth: &DenseTensor, mask: &[usize]) -> Result<SampleSet> {
    let values = mask
        .iter()
        .map(|&o| {
            truth
                .values()
                .get(o)
                .copied()
                .ok_or_else(|| invalid(format!("mask offset {o} outside tensor of {} entries", truth.len())))
        })
        .collect::<Result<Vec<_>>>()?;
    SampleSet::from_offsets(truth.dims(), mask.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::tv2;

    #[test]
    fn rank_one_without_smoothing_or_noise() {
        let t = synthetic_map(&SyntheticSpec::new(vec![12, 9, 3], 1, 0, 0.0, 4)).unwrap();
        let s = t.unfold(0).unwrap().matrix().singular_values();
        assert!(s[1] / s[0] <= 1e-10, "{s}");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::new(vec![10, 8, 3], 2, 2, 1.0, 9);
        assert_eq!(synthetic_map(&spec).unwrap(), synthetic_map(&spec).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec.clone() };
        assert_ne!(synthetic_map(&spec).unwrap(), synthetic_map(&other).unwrap());
    }

    #[test]
    fn smoothing_reduces_tv2() {
        let rough = synthetic_map(&SyntheticSpec::new(vec![30, 30, 3], 3, 0, 0.0, 1)).unwrap();
        let smooth = synthetic_map(&SyntheticSpec::new(vec![30, 30, 3], 3, 4, 0.0, 1)).unwrap();
        let total = |t: &DenseTensor| (0..3).map(|m| tv2(t, m).unwrap()).sum::<f64>();
        assert!(total(&smooth) < total(&rough));
    }

    #[test]
    fn default_range() {
        let t = synthetic_map(&SyntheticSpec::new(vec![30, 30, 3], 3, 4, 1.0, 2)).unwrap();
        assert!(t.values().iter().all(|v| v.is_finite() && (20.0..=180.0).contains(v)));
    }

    #[test]
    fn rank_validation() {
        assert!(synthetic_map(&SyntheticSpec::new(vec![30, 30, 3], 4, 0, 0.0, 1)).is_err());
        assert!(synthetic_map(&SyntheticSpec::new(vec![30, 30, 3], 0, 0, 0.0, 1)).is_err());
        assert_eq!(SyntheticSpec::max_rank(&[5]), 1);
    }

    #[test]
    fn mask_cardinalities() {
        assert_eq!(random_mask(&[4, 5], 1.0, 3).unwrap(), (0..20).collect::<Vec<_>>());
        assert!(random_mask(&[4, 5], 0.0, 3).unwrap().is_empty());
        assert_eq!(random_mask(&[129, 184, 3], 0.1, 1).unwrap().len(), 7121);
        assert_eq!(random_mask(&[30, 30, 3], 0.05, 1).unwrap().len(), 135);
        assert_eq!(mask_count(10, 0.25), 3);
        assert!(random_mask(&[4], 1.5, 1).is_err());
        let a = random_mask(&[10, 10], 0.3, 8).unwrap();
        assert_eq!(a, random_mask(&[10, 10], 0.3, 8).unwrap());
    }

    #[test]
    fn samples_from_masks() {
        let t = DenseTensor::from_fn(&[2, 2, 2], |i| (i[0] + 2 * i[1] + 4 * i[2]) as f64 + 1.0).unwrap();
        let full = make_samples(&t, &(0..8).collect::<Vec<_>>()).unwrap();
        assert_eq!(full.values(), t.values());
        assert!(make_samples(&t, &[]).unwrap().is_empty());
        let one = make_samples(&t, &[0]).unwrap();
        assert_eq!(one.values(), &[1.0]);
        assert!(make_samples(&t, &[8]).is_err());
    }
}
