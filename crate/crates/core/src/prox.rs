//! Proximal operators used by the splitting solver.
//!
//! Every operator computes `prox_{γf}(x) = argmin_y f(y) + ‖x − y‖² / (2γ)`
//! for its own `f`:
//!
//! * [`prox_nuclear`]: nuclear norm of one unfolding (singular value shrinkage).
//! * [`prox_data_fidelity`]: `λ/2 ‖A(X) − b‖²` over the sampled entries.
//! * [`prox_l2tv`]: quadratic smoothing along one mode, a mode product with
//!   `(1/γ) A⁻¹` where `A` is tridiagonal Toeplitz.
//! * [`prox_l1tv`]: total variation along one mode, solved exactly per fiber.
//! * [`consensus_mean`]: projection onto the diagonal of the product space.

use std::sync::{Arc, Mutex};

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::samples::SampleSet;
use crate::tensor::{DenseTensor, Matrix};

/// Singular value soft-thresholding `U diag(max(σ − τ, 0)) Vᵀ`.
pub fn shrink(x: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!("shrinkage threshold must be finite and >= 0, got {tau}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("shrink: matrix has non-finite entries".into()));
    }
    if tau == 0.0 || x.is_empty() {
        return Ok(x.clone());
    }
    if x.nrows() > x.ncols() {
        return Ok(shrink_wide(&x.transpose(), tau)?.transpose());
    }
    shrink_wide(x, tau)
}

/// `U diag(max(1 − τ/σ, 0)) Uᵀ X` for `nrows ≤ ncols`; needs only the left factor.
fn shrink_wide(x: &Matrix, tau: f64) -> Result<Matrix> {
    // X = Rᵀ Qᵀ shares its left singular vectors with the square factor Rᵀ.
    let square = if x.ncols() > x.nrows() { x.transpose().qr().r().transpose() } else { x.clone() };
    let svd = square
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("shrink: SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Numerical("shrink: SVD factors missing".into()))?;
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tau)
        .collect();
    if kept.is_empty() {
        return Ok(Matrix::zeros(x.nrows(), x.ncols()));
    }
    let uk = u.select_columns(&kept);
    let mut coeffs = uk.transpose() * x;
    for (row, &i) in kept.iter().enumerate() {
        let sigma = svd.singular_values[i];
        coeffs.row_mut(row).scale_mut(1.0 - tau / sigma);
    }
    Ok(uk * coeffs)
}

/// Nuclear norm of a matrix, `Σ σᵢ`.
pub fn nuclear_norm(x: &Matrix) -> Result<f64> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("nuclear norm of non-finite matrix".into()));
    }
    Ok(x.singular_values().iter().sum())
}

/// Prox of `‖X_(mode)‖_*`: `refold(shrink(X_(mode), γ))`.
pub fn prox_nuclear(t: &DenseTensor, mode: usize, gamma: f64) -> Result<DenseTensor> {
    check_gamma(gamma)?;
    let u = t.unfold(mode)?;
    let shrunk = shrink(u.matrix(), gamma)?;
    u.with_matrix(shrunk)?.refold()
}

/// Prox of `λ/2 ‖A(X) − b‖²`. Sampled entries become
/// `(λγ b_j + x_j) / (λγ + 1)`; every other entry passes through untouched.
pub fn prox_data_fidelity(
    t: &DenseTensor,
    samples: &SampleSet,
    lambda: f64,
    gamma: f64,
) -> Result<DenseTensor> {
    check_gamma(gamma)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and > 0, got {lambda}")));
    }
    samples.check_dims(t.dims())?;
    let lg = lambda * gamma;
    let mut out = t.clone();
    let values = out.values_mut();
    for (&o, &b) in samples.offsets().iter().zip(samples.values()) {
        values[o] = (lg * b + values[o]) / (lg + 1.0);
    }
    Ok(out)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be finite and > 0, got {gamma}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// The per-fiber linear map of the quadratic smoothing prox.
///
/// `A` is the `K×K` symmetric tridiagonal Toeplitz matrix with diagonal
/// `4α + 1/γ` and off-diagonal `−2α`; the operator materializes
/// `M = (1/γ) A⁻¹` so that `M x` solves `A y = x / γ`. With `heuristic` set,
/// every row of `M` is rescaled to sum to one, which keeps constant fibers
/// fixed.
///
/// Because the endpoint rows also carry `4α`, `A` is the Hessian of
/// `α (Σ (y_{k+1} − y_k)² + y_1² + y_K²) + ‖y‖² / (2γ)`, i.e. smoothing with
/// zero boundary values. That is what pulls fiber ends toward zero and what the
/// row rescaling counteracts.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator {
    size: usize,
    alpha: f64,
    gamma: f64,
    heuristic: bool,
    matrix: Matrix,
}

impl TridiagonalOperator {
    pub fn build(size: usize, alpha: f64, gamma: f64, heuristic: bool) -> Result<Self> {
        if size < 1 {
            return Err(invalid("tridiagonal operator size must be >= 1"));
        }
        check_alpha(alpha)?;
        check_gamma(gamma)?;
        let mut op = Self {
            size,
            alpha,
            gamma,
            heuristic,
            matrix: Matrix::zeros(size, size),
        };
        let mut rhs = vec![0.0; size];
        for j in 0..size {
            rhs.fill(0.0);
            rhs[j] = 1.0;
            let col = op.solve(&rhs);
            op.matrix.set_column(j, &DVector::from_vec(col));
        }
        if heuristic {
            for mut row in op.matrix.row_iter_mut() {
                let sum: f64 = row.iter().sum();
                row /= sum;
            }
        }
        Ok(op)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn heuristic(&self) -> bool {
        self.heuristic
    }

    pub fn diagonal(&self) -> f64 {
        4.0 * self.alpha + 1.0 / self.gamma
    }

    pub fn off_diagonal(&self) -> f64 {
        -2.0 * self.alpha
    }

    /// The system matrix `A`, densely.
    pub fn system_matrix(&self) -> Matrix {
        let k = self.size;
        let (d, e) = (self.diagonal(), self.off_diagonal());
        Matrix::from_fn(k, k, |i, j| {
            if i == j {
                d
            } else if i.abs_diff(j) == 1 {
                e
            } else {
                0.0
            }
        })
    }

    /// The materialized `(1/γ) A⁻¹`, row-rescaled when the heuristic is on.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Solves `A y = x / γ` in O(K) with the Thomas algorithm. Ignores the
    /// heuristic.
    pub fn solve(&self, x: &[f64]) -> Vec<f64> {
        let k = x.len();
        debug_assert_eq!(k, self.size);
        let (d, e) = (self.diagonal(), self.off_diagonal());
        let mut c = vec![0.0; k];
        let mut y: Vec<f64> = x.iter().map(|v| v / self.gamma).collect();
        // Forward sweep. A is strictly diagonally dominant, so no pivoting.
        let mut denom = d;
        c[0] = e / denom;
        y[0] /= denom;
        for i in 1..k {
            denom = d - e * c[i - 1];
            c[i] = e / denom;
            y[i] = (y[i] - e * y[i - 1]) / denom;
        }
        for i in (0..k.saturating_sub(1)).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        y
    }

    /// `M x` for one fiber.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).data.into()
    }
}

/// Builds the per-fiber map of [`prox_l2tv`].
pub fn build_tridiagonal(
    size: usize,
    alpha: f64,
    gamma: f64,
    heuristic: bool,
) -> Result<TridiagonalOperator> {
    TridiagonalOperator::build(size, alpha, gamma, heuristic)
}

/// Quadratic smoothing along `mode`: `X ×_mode M` with `M` from
/// [`build_tridiagonal`].
pub fn prox_l2tv(
    t: &DenseTensor,
    mode: usize,
    alpha: f64,
    gamma: f64,
    heuristic: bool,
) -> Result<DenseTensor> {
    let k = *t
        .dims()
        .get(mode)
        .ok_or_else(|| invalid(format!("mode {} out of range 1..={}", mode + 1, t.order())))?;
    let op = build_tridiagonal(k, alpha, gamma, heuristic)?;
    t.mode_multiply(mode, op.matrix())
}

/// Exact minimizer of `w Σ |y_{k+1} − y_k| + ½ Σ (x_k − y_k)²`.
///
/// Uses Condat's direct algorithm, which tracks the taut string through
/// running lower and upper bounds on the current segment value and emits a
/// segment whenever the bounds cross. Linear time in practice, no
/// tolerances.
pub fn prox_l1tv_fiber(x: &[f64], w: f64) -> Result<Vec<f64>> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(invalid(format!("TV weight must be finite and >= 0, got {w}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("TV prox: fiber has non-finite entries".into()));
    }
    let n = x.len();
    if n <= 1 || w == 0.0 {
        return Ok(x.to_vec());
    }
    let mut out = vec![0.0; n];
    let lambda = w;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = x[0] - lambda;
    let mut vmax = x[0] + lambda;

    let fill = |out: &mut [f64], from: &mut usize, to: usize, v: f64| {
        while *from <= to {
            out[*from] = v;
            *from += 1;
        }
    };

    loop {
        while k == n - 1 {
            if umin < 0.0 {
                fill(&mut out, &mut k0, kminus, vmin);
                if k0 >= n {
                    return Ok(out);
                }
                k = k0;
                kminus = k0;
                vmin = x[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                fill(&mut out, &mut k0, kplus, vmax);
                if k0 >= n {
                    return Ok(out);
                }
                k = k0;
                kplus = k0;
                vmax = x[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                fill(&mut out, &mut k0, k, vmin);
                return Ok(out);
            }
        }
        umin += x[k + 1] - vmin;
        if umin < -lambda {
            fill(&mut out, &mut k0, kminus, vmin);
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = x[k0];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += x[k + 1] - vmax;
        if umax > lambda {
            fill(&mut out, &mut k0, kplus, vmax);
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = x[k0];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Prox of `α Tv₁` along `mode`: [`prox_l1tv_fiber`] with weight `γα` on
/// every fiber.
pub fn prox_l1tv(t: &DenseTensor, mode: usize, alpha: f64, gamma: f64) -> Result<DenseTensor> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    let w = gamma * alpha;
    t.map_fibers(mode, |x, y| {
        y.copy_from_slice(&prox_l1tv_fiber(x, w)?);
        Ok(())
    })
}

/// Elementwise mean of `M` equally shaped tensors, summed in list order.
///
/// Computed as `z₁ + Σ (zᵢ − z₁) / M`, so positions where all blocks agree
/// reproduce that value exactly.
pub fn consensus_mean(blocks: &[DenseTensor]) -> Result<DenseTensor> {
    let first = blocks
        .first()
        .ok_or_else(|| invalid("consensus mean of an empty block list"))?;
    for b in &blocks[1..] {
        first.same_dims(b)?;
    }
    let m = blocks.len() as f64;
    let mut acc = vec![0.0; first.len()];
    for b in &blocks[1..] {
        for ((a, v), f) in acc.iter_mut().zip(b.values()).zip(first.values()) {
            *a += v - f;
        }
    }
    let values = first
        .values()
        .iter()
        .zip(&acc)
        .map(|(f, a)| f + a / m)
        .collect();
    Ok(DenseTensor::from_parts(first.dims().to_vec(), values))
}

/// One term `fᵢ` of a splitting problem, represented by its proximal map.
pub trait ProxOperator: Send + Sync {
    /// `prox_{γ fᵢ}(x)`. `lambda` is the data weight currently scheduled by
    /// the solver; operators that do not [`use_lambda`](Self::uses_lambda)
    /// ignore it.
    fn apply(&self, x: &DenseTensor, gamma: f64, lambda: f64) -> Result<DenseTensor>;

    fn uses_lambda(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

/// Prox of the zero function.
#[derive(Clone, Debug, Default)]
pub struct IdentityProx;

impl ProxOperator for IdentityProx {
    fn apply(&self, x: &DenseTensor, _gamma: f64, _lambda: f64) -> Result<DenseTensor> {
        Ok(x.clone())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

#[derive(Clone, Debug)]
pub struct NuclearNormProx {
    pub mode: usize,
}

impl ProxOperator for NuclearNormProx {
    fn apply(&self, x: &DenseTensor, gamma: f64, _lambda: f64) -> Result<DenseTensor> {
        prox_nuclear(x, self.mode, gamma)
    }

    fn name(&self) -> String {
        format!("nuclear[{}]", self.mode + 1)
    }
}

#[derive(Clone, Debug)]
pub struct DataFidelityProx {
    pub samples: SampleSet,
}

impl ProxOperator for DataFidelityProx {
    fn apply(&self, x: &DenseTensor, gamma: f64, lambda: f64) -> Result<DenseTensor> {
        prox_data_fidelity(x, &self.samples, lambda, gamma)
    }

    fn uses_lambda(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "data".into()
    }
}

/// [`prox_l2tv`] with the tridiagonal map cached for the last `γ` seen.
#[derive(Debug)]
pub struct L2TvProx {
    mode: usize,
    alpha: f64,
    heuristic: bool,
    cache: Mutex<Option<Arc<TridiagonalOperator>>>,
}

impl L2TvProx {
    pub fn new(mode: usize, alpha: f64, heuristic: bool) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            mode,
            alpha,
            heuristic,
            cache: Mutex::new(None),
        })
    }

    fn operator(&self, size: usize, gamma: f64) -> Result<Arc<TridiagonalOperator>> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(op) = cache.as_ref() {
            if op.size() == size && op.gamma() == gamma {
                return Ok(Arc::clone(op));
            }
        }
        let op = Arc::new(build_tridiagonal(size, self.alpha, gamma, self.heuristic)?);
        *cache = Some(Arc::clone(&op));
        Ok(op)
    }
}

impl ProxOperator for L2TvProx {
    fn apply(&self, x: &DenseTensor, gamma: f64, _lambda: f64) -> Result<DenseTensor> {
        check_gamma(gamma)?;
        let size = *x
            .dims()
            .get(self.mode)
            .ok_or_else(|| invalid(format!("mode {} out of range 1..={}", self.mode + 1, x.order())))?;
        let op = self.operator(size, gamma)?;
        x.mode_multiply(self.mode, op.matrix())
    }

    fn name(&self) -> String {
        format!("l2tv[{}]", self.mode + 1)
    }
}

#[derive(Clone, Debug)]
pub struct L1TvProx {
    pub mode: usize,
    pub alpha: f64,
}

impl ProxOperator for L1TvProx {
    fn apply(&self, x: &DenseTensor, gamma: f64, _lambda: f64) -> Result<DenseTensor> {
        prox_l1tv(x, self.mode, self.alpha, gamma)
    }

    fn name(&self) -> String {
        format!("l1tv[{}]", self.mode + 1)
    }
}
