//! Least-squares fitting of expansion coefficients and analytic Bayesian
//! model evidence for truncation-order selection.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSet, GermKind};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Basis terms × outputs.
    pub coefficients: DMatrix<f64>,
    /// Relative RMS of the in-sample residual, per output.
    pub residual_rrmse: Vec<f64>,
    pub log_evidence: Option<Vec<f64>>,
}

fn check_finite(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what} contains a non-finite value at flat index {pos}"
        )));
    }
    Ok(())
}

/// Minimizes `‖design·c − targets‖² + ridge·‖c‖²`.
///
/// Solved through an SVD of the design (or of the ridge-augmented system).
/// With `ridge == 0` a numerically rank-deficient design is an error.
pub fn least_squares_fit(design: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<FitResult> {
    check_dim("design/target rows", design.nrows(), targets.nrows())?;
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(Error::InvalidInput("empty design matrix".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidInput(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    check_finite("design", design)?;
    check_finite("targets", targets)?;

    let cols = design.ncols();
    let coefficients = if ridge == 0.0 {
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = design.nrows().max(cols) as f64 * f64::EPSILON * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        svd.solve(targets, tol).map_err(|e| Error::Numerical(e.to_string()))?
    } else {
        let n = design.nrows();
        let mut aug = DMatrix::zeros(n + cols, cols);
        aug.rows_mut(0, n).copy_from(design);
        let sr = ridge.sqrt();
        for j in 0..cols {
            aug[(n + j, j)] = sr;
        }
        let mut rhs = DMatrix::zeros(n + cols, targets.ncols());
        rhs.rows_mut(0, n).copy_from(targets);
        let svd = aug.svd(true, true);
        svd.solve(&rhs, 0.0).map_err(|e| Error::Numerical(e.to_string()))?
    };

    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares coefficients are not finite".into()));
    }

    let fitted = design * &coefficients;
    let residual_rrmse = (0..targets.ncols())
        .map(|o| {
            let t = targets.column(o);
            let r2 = (t - fitted.column(o)).norm_squared();
            let t2 = t.norm_squared();
            if t2 > 0.0 {
                (r2 / t2).sqrt()
            } else if r2 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();

    Ok(FitResult {
        coefficients,
        residual_rrmse,
        log_evidence: None,
    })
}

/// Like [`least_squares_fit`] but also fills `log_evidence` per output.
pub fn least_squares_fit_with_evidence(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: f64,
) -> Result<FitResult> {
    let mut fit = least_squares_fit(design, targets, ridge)?;
    let ev = (0..targets.ncols())
        .map(|o| {
            let col: Vec<f64> = targets.column(o).iter().copied().collect();
            log_evidence(design, &col)
        })
        .collect::<Result<Vec<_>>>()?;
    fit.log_evidence = Some(ev);
    Ok(fit)
}

/// Log-spaced hyperparameter grid shared by prior and noise variances.
pub const EVIDENCE_GRID: [f64; 13] = [
    1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4,
];

/// Log marginal likelihood of `y = X w + e` with `w ~ N(0, τ² I)` and
/// `e ~ N(0, s² I)`, maximized over `(τ², s²)` on [`EVIDENCE_GRID`].
pub fn log_evidence(design: &DMatrix<f64>, targets: &[f64]) -> Result<f64> {
    check_dim("design/target rows", design.nrows(), targets.len())?;
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(Error::InvalidInput("empty design matrix".into()));
    }
    check_finite("design", design)?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("targets contain non-finite values".into()));
    }

    let n = design.nrows();
    let y = DVector::from_column_slice(targets);
    // Covariance of y is s² I + τ² U S² Uᵀ; its spectrum is s² + τ² σ_i² on
    // the column space of X and s² on the complement.
    let svd = design.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let proj = u.transpose() * &y;
    let sig2: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let proj2: Vec<f64> = proj.iter().map(|b| b * b).collect();
    let resid2 = (y.norm_squared() - proj2.iter().sum::<f64>()).max(0.0);
    let k = sig2.len();
    let rest = (n - k) as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    let mut best = f64::NEG_INFINITY;
    for &tau2 in &EVIDENCE_GRID {
        for &s2 in &EVIDENCE_GRID {
            let mut logdet = rest * s2.ln();
            let mut quad = resid2 / s2;
            for (sg, b2) in sig2.iter().zip(&proj2) {
                let ev = s2 + tau2 * sg;
                logdet += ev.ln();
                quad += b2 / ev;
            }
            let ll = -0.5 * (n as f64 * ln2pi + logdet + quad);
            if ll > best {
                best = ll;
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Numerical("log evidence is not finite".into()));
    }
    Ok(best)
}

/// Log-evidence differences below this are treated as ties.
pub const EVIDENCE_TIE_TOL: f64 = 1e-6;

/// Total-degree order in `0..=max_order` with maximal evidence. Ties (within
/// [`EVIDENCE_TIE_TOL`]) go to the smaller order.
pub fn select_order_by_evidence(
    germ_points: &[Vec<f64>],
    targets: &[f64],
    germ_kinds: &[GermKind],
    max_order: usize,
) -> Result<usize> {
    check_dim("germ points/targets", germ_points.len(), targets.len())?;
    let mut best = (0usize, f64::NEG_INFINITY);
    for order in 0..=max_order {
        let basis = BasisSet::total_degree(germ_kinds.to_vec(), order)?;
        let design = basis.design_matrix(germ_points)?;
        let ev = log_evidence(&design, targets)?;
        if ev > best.1 + EVIDENCE_TIE_TOL {
            best = (order, ev);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eval_univariate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn uniform_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect()
    }

    fn legendre_design(points: &[Vec<f64>], order: usize) -> (BasisSet, DMatrix<f64>) {
        let b = BasisSet::total_degree(vec![GermKind::Uniform; points[0].len()], order).unwrap();
        let d = b.design_matrix(points).unwrap();
        (b, d)
    }

    #[test]
    fn identity_design() {
        let fit = least_squares_fit(
            &DMatrix::identity(3, 3),
            &DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            0.0,
        )
        .unwrap();
        for (i, v) in fit.coefficients.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-14);
        }
        assert!(fit.residual_rrmse[0] < 1e-14);
    }

    #[test]
    fn exact_series_recovered() {
        let pts = uniform_points(30, 1, 3);
        let (_, d) = legendre_design(&pts, 2);
        let truth = [1.5, -0.7, 0.25];
        let y: Vec<f64> = pts
            .iter()
            .map(|p| (0..3).map(|k| truth[k] * eval_univariate(GermKind::Uniform, k, p[0])).sum())
            .collect();
        let fit = least_squares_fit(&d, &DMatrix::from_column_slice(30, 1, &y), 0.0).unwrap();
        for k in 0..3 {
            assert!((fit.coefficients[(k, 0)] - truth[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn noisy_quadratic_coefficient() {
        let pts = uniform_points(200, 1, 11);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let y: Vec<f64> = pts
            .iter()
            .map(|p| {
                let e: f64 = rng.sample(StandardNormal);
                3.0 + 0.5 * eval_univariate(GermKind::Uniform, 2, p[0]) + 0.01 * e
            })
            .collect();
        let (_, d) = legendre_design(&pts, 2);
        let fit = least_squares_fit(&d, &DMatrix::from_column_slice(200, 1, &y), 0.0).unwrap();
        assert!((fit.coefficients[(2, 0)] - 0.5).abs() < 0.01);
    }

    #[test]
    fn rank_deficiency_detected() {
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let t = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(least_squares_fit(&d, &t, 0.0), Err(Error::RankDeficient { rank: 1, cols: 2 })));
        assert!(least_squares_fit(&d, &t, 1e-3).is_ok());
    }

    #[test]
    fn invalid_inputs() {
        let d = DMatrix::identity(2, 2);
        let t = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(least_squares_fit(&d, &t, 0.0), Err(Error::Dimension { .. })));
        let t = DMatrix::from_column_slice(2, 1, &[1.0, f64::NAN]);
        assert!(least_squares_fit(&d, &t, 0.0).is_err());
        assert!(log_evidence(&d, &[1.0, f64::INFINITY]).is_err());
        let t = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert!(least_squares_fit(&d, &t, -1.0).is_err());
    }

    fn poly_targets(pts: &[Vec<f64>], coeffs: &[f64], noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        pts.iter()
            .map(|p| {
                let e: f64 = rng.sample(StandardNormal);
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * eval_univariate(GermKind::Uniform, k, p[0]))
                    .sum::<f64>()
                    + noise * e
            })
            .collect()
    }

    #[test]
    fn evidence_prefers_true_order_over_overfit() {
        let pts = uniform_points(60, 1, 5);
        let y = poly_targets(&pts, &[1.0, 0.8, -0.6, 0.9], 0.05, 6);
        let (_, d3) = legendre_design(&pts, 3);
        let (_, d5) = legendre_design(&pts, 5);
        assert!(log_evidence(&d3, &y).unwrap() > log_evidence(&d5, &y).unwrap());
    }

    #[test]
    fn constant_targets_prefer_order_zero() {
        let pts = uniform_points(25, 1, 8);
        let y = vec![2.5; 25];
        let evs: Vec<f64> = (0..=4)
            .map(|o| log_evidence(&legendre_design(&pts, o).1, &y).unwrap())
            .collect();
        let argmax = (0..evs.len()).fold(0, |b, i| if evs[i] > evs[b] { i } else { b });
        assert_eq!(argmax, 0, "{evs:?}");
    }

    #[test]
    fn single_sample_single_term() {
        let ev = log_evidence(&DMatrix::from_element(1, 1, 1.0), &[0.3]).unwrap();
        assert!(ev.is_finite());
    }

    #[test]
    fn order_selection_examples() {
        let kinds = [GermKind::Uniform];
        let pts = uniform_points(50, 1, 21);
        let y = poly_targets(&pts, &[0.5, -1.0, 0.3, 0.7], 0.0, 0);
        assert_eq!(select_order_by_evidence(&pts, &y, &kinds, 5).unwrap(), 3);

        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let noise: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(select_order_by_evidence(&pts, &noise, &kinds, 5).unwrap(), 0);

        assert_eq!(select_order_by_evidence(&pts, &y, &kinds, 0).unwrap(), 0);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let pts = uniform_points(40, 2, 9);
        let (_, d) = legendre_design(&pts, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let y = DMatrix::from_fn(40, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = least_squares_fit(&d, &y, 0.0).unwrap();
        let r = &y - &d * &fit.coefficients;
        for j in 0..d.ncols() {
            let ip = d.column(j).dot(&r.column(0));
            assert!(ip.abs() < 1e-8 * d.column(j).norm() * y.norm(), "column {j}: {ip}");
        }
    }

    #[test]
    fn order_selection_scale_invariant() {
        let kinds = [GermKind::Uniform];
        for seed in 0..4 {
            let pts = uniform_points(40, 1, 100 + seed);
            let y = poly_targets(&pts, &[0.2, 1.0, 0.5], 0.05, 200 + seed);
            let y10: Vec<f64> = y.iter().map(|v| v * 10.0).collect();
            assert_eq!(
                select_order_by_evidence(&pts, &y, &kinds, 4).unwrap(),
                select_order_by_evidence(&pts, &y10, &kinds, 4).unwrap()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ridge_never_grows_coefficients(seed in 0u64..1000, r1 in 0.0f64..5.0, dr in 0.0f64..5.0) {
            let pts = uniform_points(15, 2, seed);
            let (_, d) = legendre_design(&pts, 2);
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
            let y = DMatrix::from_fn(15, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = least_squares_fit(&d, &y, r1).unwrap().coefficients.norm();
            let b = least_squares_fit(&d, &y, r1 + dr).unwrap().coefficients.norm();
            prop_assert!(b <= a * (1.0 + 1e-10) + 1e-12);
        }
    }
}
