//! Multiquadric radial basis function interpolation baseline.
//!
//! `φ(r) = sqrt(1 + (r/ε)²)`, pure kernel expansion `s(c) = Σ_k w_k φ(‖c − c_k‖)`
//! with no polynomial tail. The weights solve `Φ w = b`. `Φ` is symmetric but
//! indefinite, so it is factored with partial-pivoting LU, checked with a
//! 1-norm condition estimate and polished with iterative refinement.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::samples::SampleSet;
use crate::tensor::{multi_index_of, DenseTensor, Matrix};

/// Largest accepted 1-norm condition estimate of `Φ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Physical coordinates of every grid index, per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    axes: Vec<Vec<f64>>,
}

impl Geometry {
    /// Cell-index coordinates.
    pub fn unit(dims: &[usize]) -> Self {
        Self::from_scale(dims, &vec![1.0; dims.len()]).expect("unit scale is valid")
    }

    /// Coordinates `index · scale[mode]`, e.g. 3 m cells.
    pub fn from_scale(dims: &[usize], scale: &[f64]) -> Result<Self> {
        if scale.len() != dims.len() {
            return Err(invalid(format!(
                "{} scale factors for a tensor of order {}",
                scale.len(),
                dims.len()
            )));
        }
        if let Some(s) = scale.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(invalid(format!("scale factors must be finite and > 0, got {s}")));
        }
        Ok(Self {
            axes: dims
                .iter()
                .zip(scale)
                .map(|(&n, &s)| (0..n).map(|i| i as f64 * s).collect())
                .collect(),
        })
    }

    /// Explicit coordinates per mode, e.g. measured heights.
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(invalid("every axis needs at least one coordinate"));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("axis coordinates must be finite"));
        }
        Ok(Self { axes })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn coordinate(&self, index: &[usize]) -> Vec<f64> {
        index.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect()
    }

    /// Length of the bounding box diagonal.
    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| {
                let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub fn multiquadric(r: f64, epsilon: f64) -> f64 {
    (1.0 + (r / epsilon).powi(2)).sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfModel {
    centers: Vec<Vec<f64>>,
    weights: Vec<f64>,
    epsilon: f64,
}

impl RbfModel {
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn predict(&self, coord: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * multiquadric(distance(coord, c), self.epsilon))
            .sum()
    }
}

/// The interpolation matrix `Φ_kl = φ(‖c_k − c_l‖)`, filled symmetrically.
pub fn interpolation_matrix(centers: &[Vec<f64>], epsilon: f64) -> Matrix {
    let n = centers.len();
    let mut phi = Matrix::zeros(n, n);
    for k in 0..n {
        phi[(k, k)] = 1.0;
        for l in k + 1..n {
            let v = multiquadric(distance(&centers[k], &centers[l]), epsilon);
            phi[(k, l)] = v;
            phi[(l, k)] = v;
        }
    }
    phi
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimate of `‖Φ⁻¹‖₁` for symmetric `Φ`, from repeated solves.
fn inverse_one_norm_estimate(solve: impl Fn(&DVector<f64>) -> Option<DVector<f64>>, n: usize) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        estimate = y.iter().map(|v| v.abs()).sum();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve(&xi)?;
        let (j, zmax) = z
            .iter()
            .map(|v| v.abs())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    Some(estimate)
}

/// Fits weights for arbitrary centers.
pub fn fit_points(centers: Vec<Vec<f64>>, values: &[f64], epsilon: f64) -> Result<RbfModel> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be finite and > 0, got {epsilon}")));
    }
    if centers.is_empty() {
        return Err(invalid("RBF fit needs at least one sample"));
    }
    if centers.len() != values.len() {
        return Err(invalid("center and value counts differ"));
    }
    let n = centers.len();
    let phi = interpolation_matrix(&centers, epsilon);
    let lu = phi.clone().lu();
    let solve = |rhs: &DVector<f64>| lu.solve(rhs);
    let ill = || {
        Error::Numerical(format!(
            "RBF interpolation matrix is singular or ill-conditioned for epsilon = {epsilon}; try a different epsilon"
        ))
    };
    let inv_norm = inverse_one_norm_estimate(solve, n).ok_or_else(ill)?;
    let condition = one_norm(&phi) * inv_norm;
    if !(condition <= MAX_CONDITION) {
        return Err(ill());
    }
    let b = DVector::from_column_slice(values);
    let mut w = solve(&b).ok_or_else(ill)?;
    let mut residual = &b - &phi * &w;
    for _ in 0..3 {
        let before = residual.amax();
        if before == 0.0 {
            break;
        }
        let candidate = &w + solve(&residual).ok_or_else(ill)?;
        let after = &b - &phi * &candidate;
        if after.amax() >= before {
            break;
        }
        w = candidate;
        residual = after;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ill());
    }
    Ok(RbfModel {
        centers,
        weights: w.data.into(),
        epsilon,
    })
}

/// Fits the model to the samples placed at their grid coordinates.
pub fn fit_rbf(samples: &SampleSet, geometry: &Geometry, epsilon: f64) -> Result<RbfModel> {
    if geometry.dims() != samples.dims() {
        return Err(invalid(format!(
            "geometry dims {:?} do not match sample dims {:?}",
            geometry.dims(),
            samples.dims()
        )));
    }
    let centers = samples.iter().map(|(idx, _)| geometry.coordinate(&idx)).collect();
    fit_points(centers, samples.values(), epsilon)
}

pub fn predict_rbf(model: &RbfModel, coord: &[f64]) -> f64 {
    model.predict(coord)
}

/// Fits once and evaluates at every grid position.
pub fn reconstruct_rbf(samples: &SampleSet, geometry: &Geometry, epsilon: f64) -> Result<DenseTensor> {
    let model = fit_rbf(samples, geometry, epsilon)?;
    let dims = samples.dims().to_vec();
    let total: usize = dims.iter().product();
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|o| model.predict(&geometry.coordinate(&multi_index_of(&dims, o))))
        .collect();
    DenseTensor::new(dims, values)
}
