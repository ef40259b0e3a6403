use nalgebra::DMatrix;
use proptest::prelude::*;

use radiomap_core::prox::{
    consensus_mean, prox_data_fidelity, prox_l1tv, prox_l1tv_fiber, prox_l2tv, prox_nuclear, shrink,
    TridiagonalOperator,
};
use radiomap_core::rbf::{fit_points, Geometry};
use radiomap_core::tensor::{refold, unfold};
use radiomap_core::{DenseTensor, SampleSet};

fn dims_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_extent, 1..=max_order)
}

fn tensor_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = DenseTensor> {
    dims_strategy(max_order, max_extent).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(-100.0..100.0f64, n).prop_map(move |v| DenseTensor::new(dims.clone(), v).unwrap())
    })
}

/// Two tensors of the same dims.
fn tensor_pair(max_order: usize, max_extent: usize) -> impl Strategy<Value = (DenseTensor, DenseTensor)> {
    dims_strategy(max_order, max_extent).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        let d = dims.clone();
        (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(-50.0..50.0f64, n),
        )
            .prop_map(move |(a, b)| (DenseTensor::new(d.clone(), a).unwrap(), DenseTensor::new(d.clone(), b).unwrap()))
    })
}

/// `k` tensors of the same dims.
fn tensor_family(k: usize, max_order: usize, max_extent: usize) -> impl Strategy<Value = Vec<DenseTensor>> {
    dims_strategy(max_order, max_extent).prop_flat_map(move |dims| {
        let n: usize = dims.iter().product();
        let d = dims.clone();
        prop::collection::vec(prop::collection::vec(-50.0..50.0f64, n), k)
            .prop_map(move |vs| vs.into_iter().map(|v| DenseTensor::new(d.clone(), v).unwrap()).collect())
    })
}

fn firmly_nonexpansive(px: &DenseTensor, py: &DenseTensor, x: &DenseTensor, y: &DenseTensor) -> bool {
    let dp = px.sub(py).unwrap();
    let dx = x.sub(y).unwrap();
    let lhs = dp.norm().powi(2);
    let rhs = dp.inner(&dx).unwrap();
    lhs <= rhs + 1e-9 * (1.0 + dx.norm().powi(2))
}

/// Minimizes `½‖y − x‖² + w Σ|y_{i+1} − y_i|` through its dual
/// `min ½‖Dᵀz‖² − zᵀDx, |z_i| ≤ w`, `y = x − Dᵀz`, by exact coordinate descent.
fn l1tv_dual_oracle(x: &[f64], w: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let dx: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let mut z = vec![0.0; n - 1];
    for _ in 0..200_000 {
        let mut delta: f64 = 0.0;
        for j in 0..n - 1 {
            // (DDᵀ)_jj = 2, (DDᵀ)_{j,j±1} = −1.
            let neighbors = if j > 0 { z[j - 1] } else { 0.0 } + if j + 2 < n { z[j + 1] } else { 0.0 };
            let new = ((dx[j] + neighbors) / 2.0).clamp(-w, w);
            delta = delta.max((new - z[j]).abs());
            z[j] = new;
        }
        if delta < 1e-15 {
            break;
        }
    }
    (0..n)
        .map(|i| {
            let dtz = if i > 0 { z[i - 1] } else { 0.0 } - if i + 1 < n { z[i] } else { 0.0 };
            x[i] - dtz
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unfold_refold_is_exact(t in tensor_strategy(4, 6)) {
        for mode in 0..t.order() {
            let u = unfold(&t, mode).unwrap();
            prop_assert_eq!(u.matrix().nrows(), t.dims()[mode]);
            prop_assert!((u.matrix().norm() - t.norm()).abs() <= 1e-12 * (1.0 + t.norm()));
            prop_assert_eq!(refold(&u).unwrap(), t.clone());
        }
    }

    #[test]
    fn mode_product_with_identity(t in tensor_strategy(4, 5)) {
        for mode in 0..t.order() {
            let n = t.dims()[mode];
            prop_assert_eq!(t.mode_multiply(mode, &DMatrix::identity(n, n)).unwrap(), t.clone());
        }
    }

    #[test]
    fn mode_product_composes(t in tensor_strategy(3, 5), seed in 0u64..1000) {
        // (T ×ₘ Y) ×ₘ Z = T ×ₘ (Z Y)
        let mode = (seed as usize) % t.order();
        let n = t.dims()[mode];
        let y = DMatrix::from_fn(4, n, |i, j| ((i * 7 + j * 3 + seed as usize) % 5) as f64 - 2.0);
        let z = DMatrix::from_fn(2, 4, |i, j| ((i + 2 * j + seed as usize) % 3) as f64 - 1.0);
        let a = t.mode_multiply(mode, &y).unwrap().mode_multiply(mode, &z).unwrap();
        let b = t.mode_multiply(mode, &(&z * &y)).unwrap();
        prop_assert!(a.distance(&b).unwrap() <= 1e-9 * (1.0 + b.norm()));
    }

    #[test]
    fn shrink_matches_svd_oracle(rows in 1usize..12, cols in 1usize..12, tau in 0.0..5.0f64, seed in any::<u64>()) {
        let x = DMatrix::from_fn(rows, cols, |i, j| {
            let h = (i as u64 * 0x9e37_79b9 + j as u64 * 0x85eb_ca6b) ^ seed;
            (h % 2001) as f64 / 100.0 - 10.0
        });
        let mut expected: Vec<f64> = x.singular_values().iter().map(|s| (s - tau).max(0.0)).collect();
        let mut got: Vec<f64> = shrink(&x, tau).unwrap().singular_values().iter().copied().collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        got.sort_by(|a, b| b.total_cmp(a));
        for (g, e) in got.iter().zip(&expected) {
            prop_assert!((g - e).abs() <= 1e-10 * (1.0 + e.abs()), "{g} vs {e}");
        }
    }

    #[test]
    fn nuclear_prox_is_firmly_nonexpansive((x, y) in tensor_pair(3, 5), gamma in 0.01..20.0f64) {
        for mode in 0..x.order() {
            let px = prox_nuclear(&x, mode, gamma).unwrap();
            let py = prox_nuclear(&y, mode, gamma).unwrap();
            prop_assert!(firmly_nonexpansive(&px, &py, &x, &y));
        }
    }

    #[test]
    fn data_prox_is_firmly_nonexpansive((x, y) in tensor_pair(3, 5), lambda in 0.01..100.0f64, gamma in 0.01..10.0f64) {
        let n = x.len();
        let offsets: Vec<usize> = (0..n).step_by(2).collect();
        let values = offsets.iter().map(|&o| o as f64 * 0.5).collect();
        let s = SampleSet::from_offsets(x.dims(), offsets, values).unwrap();
        let px = prox_data_fidelity(&x, &s, lambda, gamma).unwrap();
        let py = prox_data_fidelity(&y, &s, lambda, gamma).unwrap();
        prop_assert!(firmly_nonexpansive(&px, &py, &x, &y));
    }

    #[test]
    fn l2tv_prox_is_firmly_nonexpansive((x, y) in tensor_pair(3, 6), alpha in 0.0..5.0f64, gamma in 0.05..5.0f64) {
        for mode in 0..x.order() {
            let px = prox_l2tv(&x, mode, alpha, gamma, false).unwrap();
            let py = prox_l2tv(&y, mode, alpha, gamma, false).unwrap();
            prop_assert!(firmly_nonexpansive(&px, &py, &x, &y));
        }
    }

    #[test]
    fn l1tv_prox_is_firmly_nonexpansive((x, y) in tensor_pair(3, 6), alpha in 0.0..5.0f64, gamma in 0.05..5.0f64) {
        for mode in 0..x.order() {
            let px = prox_l1tv(&x, mode, alpha, gamma).unwrap();
            let py = prox_l1tv(&y, mode, alpha, gamma).unwrap();
            prop_assert!(firmly_nonexpansive(&px, &py, &x, &y));
        }
    }

    #[test]
    fn consensus_projection_is_firmly_nonexpansive(f in tensor_family(4, 3, 5)) {
        let (x, y, u, v) = (&f[0], &f[1], &f[2], &f[3]);
        let px = consensus_mean(&[x.clone(), u.clone()]).unwrap();
        let py = consensus_mean(&[y.clone(), v.clone()]).unwrap();
        // On the product space the projection maps (x, u) to (m, m).
        let lhs = 2.0 * px.distance(&py).unwrap().powi(2);
        let rhs = px.sub(&py).unwrap().inner(&x.sub(y).unwrap().add_scaled(1.0, &u.sub(v).unwrap()).unwrap()).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn l2tv_matches_dense_solve(x in prop::collection::vec(-10.0..10.0f64, 1..40), alpha in 0.0..5.0f64, gamma in 0.05..5.0f64) {
        let op = TridiagonalOperator::build(x.len(), alpha, gamma, false).unwrap();
        let a = op.system_matrix();
        let rhs = nalgebra::DVector::from_iterator(x.len(), x.iter().map(|v| v / gamma));
        let dense = a.lu().solve(&rhs).unwrap();
        for (g, e) in op.apply(&x).iter().zip(dense.iter()) {
            prop_assert!((g - e).abs() <= 1e-10);
        }
    }

    #[test]
    fn l2tv_prox_is_optimal(x in prop::collection::vec(-10.0..10.0f64, 2..30), alpha in 0.01..5.0f64, gamma in 0.05..5.0f64) {
        // Stationarity of ½‖y − x‖² + γα(Σ(y_{i+1} − y_i)² + y₁² + y_K²).
        let op = TridiagonalOperator::build(x.len(), alpha, gamma, false).unwrap();
        let y = op.apply(&x);
        let k = y.len();
        let ga = gamma * alpha;
        for i in 0..k {
            let left = if i > 0 { y[i] - y[i - 1] } else { y[i] };
            let right = if i + 1 < k { y[i] - y[i + 1] } else { y[i] };
            let grad = (y[i] - x[i]) + 2.0 * ga * (left + right);
            prop_assert!(grad.abs() <= 1e-9 * (1.0 + x[i].abs()));
        }
    }

    #[test]
    fn l2tv_heuristic_fixes_constants(k in 1usize..200, c in -100.0..100.0f64, alpha in 0.0..5.0f64, gamma in 0.05..5.0f64) {
        let op = TridiagonalOperator::build(k, alpha, gamma, true).unwrap();
        for v in op.apply(&vec![c; k]) {
            prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn l1tv_matches_dual_oracle(x in prop::collection::vec(-10.0..10.0f64, 1..=8), w in 0.0..6.0f64) {
        let got = prox_l1tv_fiber(&x, w).unwrap();
        let oracle = l1tv_dual_oracle(&x, w);
        for (g, o) in got.iter().zip(&oracle) {
            prop_assert!((g - o).abs() <= 1e-6, "{got:?} vs {oracle:?}");
        }
        let mean_in = x.iter().sum::<f64>() / x.len() as f64;
        let mean_out = got.iter().sum::<f64>() / got.len() as f64;
        prop_assert!((mean_in - mean_out).abs() <= 1e-10 * (1.0 + mean_in.abs()));
    }

    #[test]
    fn l1tv_large_weight_gives_mean(x in prop::collection::vec(-10.0..10.0f64, 1..=64)) {
        let w = 1e3 * x.len() as f64 * 20.0;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        for v in prox_l1tv_fiber(&x, w).unwrap() {
            prop_assert!((v - mean).abs() <= 1e-8);
        }
    }

    #[test]
    fn consensus_mean_of_equal_blocks_is_exact(t in tensor_strategy(3, 5), m in 1usize..6) {
        let blocks = vec![t.clone(); m];
        prop_assert_eq!(consensus_mean(&blocks).unwrap(), t);
    }

    #[test]
    fn rbf_is_invariant_to_sample_order(
        points in prop::collection::btree_set((0usize..12, 0usize..12), 2..20),
        eps in 0.5..8.0f64,
        rot in 0usize..20,
    ) {
        let geom = Geometry::unit(&[12, 12]);
        let pts: Vec<(usize, usize)> = points.into_iter().collect();
        let centers: Vec<Vec<f64>> = pts.iter().map(|&(i, j)| geom.coordinate(&[i, j])).collect();
        let values: Vec<f64> = pts.iter().map(|&(i, j)| 50.0 + (i as f64 * 0.7).sin() * 5.0 + j as f64).collect();
        let a = match fit_points(centers.clone(), &values, eps) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let r = rot % centers.len();
        let mut c2 = centers.clone();
        let mut v2 = values.clone();
        c2.rotate_left(r);
        v2.rotate_left(r);
        c2.reverse();
        v2.reverse();
        let b = fit_points(c2, &v2, eps).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let q = geom.coordinate(&[i, j]);
                let (pa, pb) = (a.predict(&q), b.predict(&q));
                prop_assert!((pa - pb).abs() <= 1e-6 * (1.0 + pa.abs()), "{pa} vs {pb}");
            }
        }
    }
}
