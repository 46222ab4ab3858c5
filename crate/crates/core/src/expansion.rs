//! Multivariate orthogonal polynomial series with vector-valued coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcExpansion {
    basis: BasisSet,
    /// Terms × outputs.
    coefficients: DMatrix<f64>,
}

impl PcExpansion {
    pub fn new(basis: BasisSet, coefficients: DMatrix<f64>) -> Result<Self> {
        check_dim("coefficient rows", basis.len(), coefficients.nrows())?;
        if coefficients.ncols() == 0 {
            return Err(Error::InvalidInput("expansion needs at least one output".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("expansion coefficients must be finite".into()));
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn n_outputs(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `Σ_j c_j Ψ_j(point)`.
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        let psi = self.basis.eval(point)?;
        Ok((0..self.n_outputs())
            .map(|o| {
                psi.iter()
                    .enumerate()
                    .map(|(j, p)| self.coefficients[(j, o)] * p)
                    .sum()
            })
            .collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        self.coefficients.row(0).iter().copied().collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        let norms = self.basis.norms_sq();
        (0..self.n_outputs())
            .map(|o| {
                (1..self.len())
                    .map(|j| self.coefficients[(j, o)].powi(2) * norms[j])
                    .sum()
            })
            .collect()
    }
}

/// Variance-based sensitivity indices of one scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    /// One main effect per parametric input.
    pub main_effects: Vec<f64>,
    /// Summed effect of every term supported only on the stochastic germ.
    pub noise_group: f64,
    pub interaction_residual: f64,
    pub total_variance: f64,
    /// Set when the output has zero variance; all indices are then zero.
    pub degenerate: bool,
}

impl SobolReport {
    pub fn partition_sum(&self) -> f64 {
        self.main_effects.iter().sum::<f64>() + self.noise_group + self.interaction_residual
    }

    /// Index of the largest main effect.
    pub fn most_sensitive(&self) -> Option<usize> {
        (0..self.main_effects.len()).max_by(|&a, &b| self.main_effects[a].total_cmp(&self.main_effects[b]))
    }
}

/// Sobol partition of a scalar series whose first `n_param` germ dimensions
/// are parametric and the rest stochastic.
pub fn sobol_partition(basis: &BasisSet, coeffs: &[f64], n_param: usize) -> Result<SobolReport> {
    check_dim("coefficient count", basis.len(), coeffs.len())?;
    if n_param > basis.dim() {
        return Err(Error::InvalidInput(format!(
            "{n_param} parametric dimensions exceed basis dimension {}",
            basis.dim()
        )));
    }
    let norms = basis.norms_sq();
    let mut main = vec![0.0; n_param];
    let mut noise = 0.0;
    let mut total = 0.0;
    for (j, idx) in basis.indices().iter().enumerate().skip(1) {
        let v = coeffs[j] * coeffs[j] * norms[j];
        total += v;
        let (p, s) = idx.0.split_at(n_param);
        let stoch_zero = s.iter().all(|&d| d == 0);
        let active: Vec<usize> = (0..n_param).filter(|&i| p[i] != 0).collect();
        if stoch_zero && active.len() == 1 {
            main[active[0]] += v;
        } else if active.is_empty() && !stoch_zero {
            noise += v;
        }
    }
    if !(total > 0.0) {
        return Ok(SobolReport {
            main_effects: vec![0.0; n_param],
            noise_group: 0.0,
            interaction_residual: 0.0,
            total_variance: 0.0,
            degenerate: true,
        });
    }
    main.iter_mut().for_each(|m| *m /= total);
    noise /= total;
    let residual = 1.0 - main.iter().sum::<f64>() - noise;
    Ok(SobolReport {
        main_effects: main,
        noise_group: noise,
        interaction_residual: residual,
        total_variance: total,
        degenerate: false,
    })
}
