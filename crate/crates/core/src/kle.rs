//! Karhunen–Loève expansion of sampled random fields.
//!
//! Fields are centered by their combined mean and the sample covariance is
//! eigendecomposed. On a uniform grid the discrete inner product is a plain
//! dot product; on a non-uniform grid trapezoidal weights `W` enter through
//! the symmetric matrix `W^½ C W^½`, and modes are orthonormal under `W`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::datasets::Ensemble;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Smallest number of modes explaining at least `1 − ε` of the variance.
    ExplainedVariance(f64),
    /// A fixed number of modes.
    Modes(usize),
}

/// Combined stochastic–parametric field samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble {
    /// `K × L_x`.
    pub values: DMatrix<f64>,
    pub grid: Vec<f64>,
    /// `(n, m)` for each row.
    pub lambda_index: Vec<(usize, usize)>,
}

impl FieldEnsemble {
    pub fn from_rows(rows: &[Vec<f64>], grid: Vec<f64>) -> Result<Self> {
        let lx = grid.len();
        for r in rows {
            check_dim("field length", lx, r.len())?;
        }
        let values = DMatrix::from_fn(rows.len(), lx, |k, x| rows[k][x]);
        Ok(Self {
            values,
            grid,
            lambda_index: (0..rows.len()).map(|k| (k, 0)).collect(),
        })
    }

    pub fn from_ensemble(e: &Ensemble) -> Self {
        let (n, m, w) = (e.n(), e.m(), e.width());
        let values = DMatrix::from_row_slice(n * m, w, e.values());
        let grid = if e.meta.grid.len() == w {
            e.meta.grid.clone()
        } else {
            (0..w).map(|i| i as f64).collect()
        };
        Self {
            values,
            grid,
            lambda_index: (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KleModel {
    pub grid: Vec<f64>,
    /// Quadrature weights, normalized to mean one (all ones on a uniform grid).
    pub weights: Vec<f64>,
    pub mean_field: Vec<f64>,
    /// All `L_x` eigenvalues, descending, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// `L_x × L` retained modes.
    pub eigenvectors: DMatrix<f64>,
    pub explained_fraction: f64,
    /// Set when every eigenvalue is zero; all modes are then retained.
    pub degenerate: bool,
    pub truncation: Truncation,
}

/// Trapezoid weights scaled to mean one, or `None` for a uniform grid.
pub fn quadrature_weights(grid: &[f64]) -> Option<Vec<f64>> {
    let n = grid.len();
    if n < 3 {
        return None;
    }
    let h0 = grid[1] - grid[0];
    let uniform = grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-9 * h0.abs());
    if uniform {
        return None;
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|v| *v /= mean);
    Some(w)
}

pub fn fit_kle(ens: &FieldEnsemble, truncation: Truncation) -> Result<KleModel> {
    let k = ens.len();
    let lx = ens.grid.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("KLE needs at least two samples, got {k}")));
    }
    check_dim("field length", lx, ens.values.ncols())?;
    if lx == 0 {
        return Err(Error::InvalidInput("empty field grid".into()));
    }
    if ens.grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("field grid must be strictly increasing".into()));
    }
    if let Some(pos) = ens.values.iter().position(|v| !v.is_finite()) {
        // Column-major storage.
        return Err(Error::InvalidInput(format!(
            "non-finite field value at sample {}, grid point {}",
            pos % k,
            pos / k
        )));
    }
    match truncation {
        Truncation::ExplainedVariance(eps) if !(eps > 0.0 && eps < 1.0) => {
            return Err(Error::InvalidInput(format!("ε must lie in (0,1), got {eps}")));
        }
        Truncation::Modes(n) if n == 0 || n > lx => {
            return Err(Error::InvalidInput(format!("mode count must lie in 1..={lx}, got {n}")));
        }
        _ => {}
    }

    let mean_field: Vec<f64> = (0..lx).map(|x| ens.values.column(x).mean()).collect();
    let mut centered = ens.values.clone();
    for x in 0..lx {
        let m = mean_field[x];
        centered.column_mut(x).iter_mut().for_each(|v| *v -= m);
    }
    let weights = quadrature_weights(&ens.grid);
    if let Some(w) = &weights {
        for x in 0..lx {
            let s = w[x].sqrt();
            centered.column_mut(x).iter_mut().for_each(|v| *v *= s);
        }
    }
    let mut cov = centered.transpose() * &centered / (k - 1) as f64;
    // Symmetrize away rounding noise.
    cov = (&cov + cov.transpose()) * 0.5;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..lx).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let degenerate = !(total > 0.0);
    let n_modes = if degenerate {
        lx
    } else {
        match truncation {
            Truncation::Modes(n) => n,
            Truncation::ExplainedVariance(eps) => {
                let mut acc = 0.0;
                let mut l = lx;
                for (i, mu) in eigenvalues.iter().enumerate() {
                    acc += mu;
                    if acc / total >= 1.0 - eps {
                        l = i + 1;
                        break;
                    }
                }
                l
            }
        }
    };
    let explained_fraction = if degenerate {
        1.0
    } else {
        eigenvalues[..n_modes].iter().sum::<f64>() / total
    };

    let mut eigenvectors = DMatrix::zeros(lx, n_modes);
    for (l, &i) in order.iter().take(n_modes).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(w) = &weights {
            for x in 0..lx {
                v[x] /= w[x].sqrt();
            }
        }
        // Deterministic sign: largest-magnitude entry positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(l, &v);
    }

    Ok(KleModel {
        grid: ens.grid.clone(),
        weights: weights.unwrap_or_else(|| vec![1.0; lx]),
        mean_field,
        eigenvalues,
        eigenvectors,
        explained_fraction,
        degenerate,
        truncation,
    })
}

impl KleModel {
    pub fn n_modes(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.n_modes()]
    }

    /// Cumulative explained fraction for every mode count `1..=L_x`.
    pub fn explained_curve(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|mu| {
                acc += mu;
                if total > 0.0 {
                    acc / total
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Mode scores `η_l = ⟨f − f₀, φ_l⟩ / √μ_l` (`K × L`); zero-variance
    /// modes score zero.
    pub fn project(&self, ens: &FieldEnsemble) -> Result<DMatrix<f64>> {
        check_dim("field grid", self.grid_len(), ens.grid.len())?;
        if ens.grid.iter().zip(&self.grid).any(|(a, b)| a != b) {
            return Err(Error::InvalidInput("field grid differs from the KLE grid".into()));
        }
        let rows: Vec<Vec<f64>> = (0..ens.len())
            .map(|k| ens.values.row(k).iter().copied().collect())
            .collect();
        let mut eta = DMatrix::zeros(ens.len(), self.n_modes());
        for (k, f) in rows.iter().enumerate() {
            let e = self.project_one(f)?;
            for (l, v) in e.into_iter().enumerate() {
                eta[(k, l)] = v;
            }
        }
        Ok(eta)
    }

    pub fn project_one(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_dim("field length", self.grid_len(), field.len())?;
        Ok((0..self.n_modes())
            .map(|l| {
                let mu = self.eigenvalues[l];
                if mu == 0.0 {
                    return 0.0;
                }
                let ip: f64 = (0..self.grid_len())
                    .map(|x| self.weights[x] * (field[x] - self.mean_field[x]) * self.eigenvectors[(x, l)])
                    .sum();
                ip / mu.sqrt()
            })
            .collect())
    }

    /// `f₀ + Σ_l η_l √μ_l φ_l` for one score vector.
    pub fn reconstruct_one(&self, eta: &[f64]) -> Result<Vec<f64>> {
        check_dim("mode scores", self.n_modes(), eta.len())?;
        let mut f = self.mean_field.clone();
        for (l, &e) in eta.iter().enumerate() {
            let a = e * self.eigenvalues[l].sqrt();
            if a != 0.0 {
                for (x, v) in f.iter_mut().enumerate() {
                    *v += a * self.eigenvectors[(x, l)];
                }
            }
        }
        Ok(f)
    }

    /// Row-wise reconstruction of a `K × L` score matrix.
    pub fn reconstruct(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("mode scores", self.n_modes(), eta.ncols())?;
        let mut out = DMatrix::zeros(eta.nrows(), self.grid_len());
        for k in 0..eta.nrows() {
            let row: Vec<f64> = eta.row(k).iter().copied().collect();
            let f = self.reconstruct_one(&row)?;
            for (x, v) in f.into_iter().enumerate() {
                out[(k, x)] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Cholesky;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn uniform_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    fn random_ensemble(k: usize, lx: usize, seed: u64) -> FieldEnsemble {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (0..lx)
                    .map(|x| {
                        let t = x as f64 / lx as f64;
                        1.0 + a * t + 0.3 * b * (3.0 * t).sin() + 0.05 * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        FieldEnsemble::from_rows(&rows, uniform_grid(lx)).unwrap()
    }

    /// Fields with exponential covariance exp(−|x−x'|/0.3) on 64 points.
    pub(crate) fn exponential_field(k: usize, seed: u64) -> (FieldEnsemble, DMatrix<f64>) {
        let lx = 64;
        let g = uniform_grid(lx);
        let c = DMatrix::from_fn(lx, lx, |i, j| (-(g[i] - g[j]).abs() / 0.3).exp());
        let chol = Cholesky::new(c.clone()).unwrap();
        let l = chol.l();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let z = nalgebra::DVector::from_fn(lx, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&l * z).iter().copied().collect()
            })
            .collect();
        (FieldEnsemble::from_rows(&rows, g).unwrap(), c)
    }

    #[test]
    fn identical_fields_are_degenerate() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 5];
        let m = fit_kle(&FieldEnsemble::from_rows(&rows, vec![0.0, 1.0, 2.0]).unwrap(), Truncation::ExplainedVariance(0.01)).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.n_modes(), 3);
        assert!(m.eigenvalues.iter().all(|&v| v == 0.0));
        let eta = m.project(&FieldEnsemble::from_rows(&rows, vec![0.0, 1.0, 2.0]).unwrap()).unwrap();
        assert!(eta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_ensemble() {
        let lx = 20;
        let v: Vec<f64> = (0..lx).map(|x| (x as f64 * 0.3).cos()).collect();
        let f0: Vec<f64> = (0..lx).map(|x| 2.0 + x as f64 * 0.1).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<Vec<f64>> = a.iter().map(|ai| (0..lx).map(|x| f0[x] + ai * v[x]).collect()).collect();
        let ens = FieldEnsemble::from_rows(&rows, uniform_grid(lx)).unwrap();
        let m = fit_kle(&ens, Truncation::ExplainedVariance(0.01)).unwrap();
        assert_eq!(m.n_modes(), 1);
        assert!(m.eigenvalues[0] > 0.0 && m.eigenvalues[1] < 1e-12 * m.eigenvalues[0]);
        let eta = m.project(&ens).unwrap();
        let (ma, sa) = crate::metrics::mean_sd(&a);
        let sign = (eta[(0, 0)] * (a[0] - ma)).signum();
        for k in 0..a.len() {
            assert!((sign * eta[(k, 0)] - (a[k] - ma) / sa).abs() < 1e-8);
        }
    }

    #[test]
    fn modes_orthonormal_and_sorted() {
        let m = fit_kle(&random_ensemble(300, 30, 2), Truncation::Modes(30)).unwrap();
        let g = m.eigenvectors.transpose() * &m.eigenvectors;
        assert!((g - DMatrix::identity(30, 30)).abs().max() < 1e-8);
        assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let curve = m.explained_curve();
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn variance_bookkeeping_and_full_reconstruction() {
        let ens = random_ensemble(200, 25, 3);
        let m = fit_kle(&ens, Truncation::Modes(25)).unwrap();
        let pointwise: f64 = (0..25)
            .map(|x| {
                let col: Vec<f64> = ens.values.column(x).iter().copied().collect();
                crate::metrics::mean_sd(&col).1.powi(2)
            })
            .sum();
        let total: f64 = m.eigenvalues.iter().sum();
        assert!((total - pointwise).abs() < 1e-8 * pointwise);

        let eta = m.project(&ens).unwrap();
        let rec = m.reconstruct(&eta).unwrap();
        assert!((&rec - &ens.values).norm() < 1e-8 * ens.values.norm());
    }

    #[test]
    fn scores_are_standardized() {
        let ens = random_ensemble(1500, 16, 4);
        let m = fit_kle(&ens, Truncation::ExplainedVariance(0.01)).unwrap();
        let eta = m.project(&ens).unwrap();
        let k = ens.len() as f64;
        for l in 0..m.n_modes() {
            let col: Vec<f64> = eta.column(l).iter().copied().collect();
            let (mean, sd) = crate::metrics::mean_sd(&col);
            assert!(mean.abs() <= 3.0 / k.sqrt());
            assert!((0.9..=1.1).contains(&(sd * sd)));
            for l2 in 0..l {
                let other: Vec<f64> = eta.column(l2).iter().copied().collect();
                let corr = col.iter().zip(&other).map(|(a, b)| a * b).sum::<f64>() / (k - 1.0);
                assert!(corr.abs() <= 4.0 / k.sqrt());
            }
        }
    }

    #[test]
    fn truncated_reconstruction_error() {
        let (ens, _) = exponential_field(500, 5);
        let m = fit_kle(&ens, Truncation::ExplainedVariance(0.01)).unwrap();
        let rec = m.reconstruct(&m.project(&ens).unwrap()).unwrap();
        let err: f64 = (0..ens.len())
            .map(|k| (rec.row(k) - ens.values.row(k)).norm() / ens.values.row(k).norm())
            .sum::<f64>()
            / ens.len() as f64;
        assert!(err <= 0.15, "{err}");
        let zero = m.reconstruct_one(&vec![0.0; m.n_modes()]).unwrap();
        assert_eq!(zero, m.mean_field);
    }

    #[test]
    fn exponential_field_truncation_matches_analytic() {
        let (ens, c) = exponential_field(2000, 6);
        let m = fit_kle(&ens, Truncation::ExplainedVariance(0.01)).unwrap();
        let mut mu: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        mu.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = mu.iter().sum();
        let mut acc = 0.0;
        let l_exact = mu
            .iter()
            .position(|v| {
                acc += v;
                acc / total >= 0.99
            })
            .unwrap()
            + 1;
        assert!((m.n_modes() as i64 - l_exact as i64).abs() <= 1, "{} vs {l_exact}", m.n_modes());
    }

    #[test]
    fn nonuniform_grid_is_weight_orthonormal() {
        let lx = 30;
        let grid: Vec<f64> = (0..lx).map(|i| (i as f64 / (lx - 1) as f64).powi(2)).collect();
        let mut ens = random_ensemble(200, lx, 7);
        ens.grid = grid;
        let m = fit_kle(&ens, Truncation::Modes(lx)).unwrap();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.weights.clone()));
        let g = m.eigenvectors.transpose() * w * &m.eigenvectors;
        assert!((g - DMatrix::identity(lx, lx)).abs().max() < 1e-8);
        let rec = m.reconstruct(&m.project(&ens).unwrap()).unwrap();
        assert!((&rec - &ens.values).norm() < 1e-8 * ens.values.norm());
        assert!((m.weights.iter().sum::<f64>() / lx as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let one = FieldEnsemble::from_rows(&[vec![1.0, 2.0]], vec![0.0, 1.0]).unwrap();
        assert!(fit_kle(&one, Truncation::ExplainedVariance(0.01)).is_err());
        let ens = random_ensemble(10, 5, 8);
        assert!(fit_kle(&ens, Truncation::ExplainedVariance(1.0)).is_err());
        assert!(fit_kle(&ens, Truncation::Modes(6)).is_err());
        let m = fit_kle(&ens, Truncation::Modes(2)).unwrap();
        assert!(m.reconstruct_one(&[1.0]).is_err());
        let other = random_ensemble(10, 6, 8);
        assert!(m.project(&other).is_err());
    }
}
