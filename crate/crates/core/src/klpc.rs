//! KLPC surrogates: a joint PCE for the Karhunen–Loève mode scores of a
//! random field, folded back through the KLE.
//!
//! The field-level coefficients are
//! `c_j(x) = f₀(x) δ_{j0} + Σ_l c_{lj} √μ_l φ_l(x)`, so pointwise moments and
//! Sobol indices follow from the same formulas as for any PCE.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Ensemble, OutputKind};
use crate::error::{check_dim, Error, Result};
use crate::expansion::{sobol_partition, SobolReport};
use crate::joint_pce::{build_joint_pce, BuildDiagnostics, JointConfig, JointPce, JointPceFile, StochasticPce, SCHEMA_VERSION};
use crate::kle::{fit_kle, FieldEnsemble, KleModel, Truncation};

pub const DEFAULT_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlpcConfig {
    pub truncation: Truncation,
    pub joint: JointConfig,
}

impl Default for KlpcConfig {
    fn default() -> Self {
        Self {
            truncation: Truncation::ExplainedVariance(DEFAULT_EPS),
            joint: JointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlpcSurrogate {
    kle: KleModel,
    joint: JointPce,
    /// `J × L_x`.
    field_coeffs: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct KlpcBuild {
    pub surrogate: KlpcSurrogate,
    /// `K × L` mode scores of the training ensemble.
    pub eta: DMatrix<f64>,
    pub stochastic: Vec<StochasticPce>,
    pub diagnostics: BuildDiagnostics,
}

/// Groups the rows of a `K × L` score matrix by parameter point.
fn group_scores(eta: &DMatrix<f64>, n: usize, m: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| eta.row(i * m + j).iter().copied().collect())
                .collect()
        })
        .collect()
}

pub fn build_klpc(ens: &Ensemble, cfg: &KlpcConfig) -> Result<KlpcBuild> {
    if ens.meta.output_kind != OutputKind::Field {
        return Err(Error::InvalidInput("KLPC needs a field ensemble".into()));
    }
    if ens.n() < 2 || ens.m() < 2 {
        return Err(Error::InvalidInput(format!(
            "KLPC needs at least 2 parameter points and 2 replicas, got {} x {}",
            ens.n(),
            ens.m()
        )));
    }
    let fields = FieldEnsemble::from_ensemble(ens);
    let kle = fit_kle(&fields, cfg.truncation)?;
    let eta = kle.project(&fields)?;
    let reps = group_scores(&eta, ens.n(), ens.m());
    let jb = build_joint_pce(&ens.meta.param_space, &ens.lambdas, &reps, &cfg.joint)?;
    let surrogate = KlpcSurrogate::new(kle, jb.pce)?;
    Ok(KlpcBuild {
        surrogate,
        eta,
        stochastic: jb.stochastic,
        diagnostics: jb.diagnostics,
    })
}

impl KlpcSurrogate {
    pub fn new(kle: KleModel, joint: JointPce) -> Result<Self> {
        let l = kle.n_modes();
        check_dim("joint PCE outputs vs KLE modes", l, joint.n_outputs())?;
        let lx = kle.grid_len();
        let c = joint.coefficients();
        let mut field_coeffs = DMatrix::zeros(c.nrows(), lx);
        let scaled: Vec<f64> = kle.retained_eigenvalues().iter().map(|m| m.sqrt()).collect();
        for j in 0..c.nrows() {
            for x in 0..lx {
                let mut v: f64 = (0..l).map(|m| c[(j, m)] * scaled[m] * kle.eigenvectors[(x, m)]).sum();
                if j == 0 {
                    v += kle.mean_field[x];
                }
                field_coeffs[(j, x)] = v;
            }
        }
        Ok(Self { kle, joint, field_coeffs })
    }

    pub fn kle(&self) -> &KleModel {
        &self.kle
    }

    pub fn joint(&self) -> &JointPce {
        &self.joint
    }

    pub fn field_coefficients(&self) -> &DMatrix<f64> {
        &self.field_coeffs
    }

    pub fn grid(&self) -> &[f64] {
        &self.kle.grid
    }

    pub fn grid_len(&self) -> usize {
        self.kle.grid_len()
    }

    /// Field realization for germ values `(ξ, ζ)`.
    pub fn generate(&self, xi: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        let eta = self.joint.sample(xi, zeta)?;
        self.kle.reconstruct_one(&eta)
    }

    /// `count` realizations at the physical parameter point `λ`.
    pub fn generate_at<R: Rng + ?Sized>(&self, lambda: &[f64], count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.joint
            .generate(lambda, count, rng)?
            .iter()
            .map(|eta| self.kle.reconstruct_one(eta))
            .collect()
    }

    fn check_x(&self, x: usize) -> Result<()> {
        if x >= self.grid_len() {
            return Err(Error::InvalidInput(format!(
                "grid index {x} out of range (grid has {} points)",
                self.grid_len()
            )));
        }
        Ok(())
    }

    pub fn pointwise_moments(&self, x: usize) -> Result<(f64, f64)> {
        self.check_x(x)?;
        let norms = self.joint.basis().norms_sq();
        let col = self.field_coeffs.column(x);
        let var = (1..col.len()).map(|j| col[j] * col[j] * norms[j]).sum();
        Ok((col[0], var))
    }

    /// Means and variances at every grid point.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.grid_len())
            .map(|x| self.pointwise_moments(x).expect("in range"))
            .unzip()
    }

    /// Pointwise mean and variance over the stochastic germ at fixed `ξ`.
    pub fn conditional_moments(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.joint.conditional_coefficients(xi)?;
        let norms = self.joint.stoch_basis().norms_sq();
        let sq: Vec<f64> = self.kle.retained_eigenvalues().iter().map(|m| m.sqrt()).collect();
        let lx = self.grid_len();
        let mut mean = self.kle.mean_field.clone();
        let mut var = vec![0.0; lx];
        for s in 0..z.nrows() {
            for x in 0..lx {
                let f: f64 = (0..z.ncols()).map(|l| z[(s, l)] * sq[l] * self.kle.eigenvectors[(x, l)]).sum();
                if s == 0 {
                    mean[x] += f;
                } else {
                    var[x] += f * f * norms[s];
                }
            }
        }
        Ok((mean, var))
    }

    pub fn pointwise_sobol(&self, x: usize) -> Result<SobolReport> {
        self.check_x(x)?;
        let col: Vec<f64> = self.field_coeffs.column(x).iter().copied().collect();
        sobol_partition(self.joint.basis(), &col, self.joint.n_param())
    }

    pub fn sobol(&self) -> Vec<SobolReport> {
        (0..self.grid_len())
            .map(|x| self.pointwise_sobol(x).expect("in range"))
            .collect()
    }

    pub fn to_file(&self) -> KlpcFile {
        let k = &self.kle;
        let mut eigenvectors = Vec::with_capacity(k.eigenvectors.len());
        for x in 0..k.eigenvectors.nrows() {
            eigenvectors.extend(k.eigenvectors.row(x).iter());
        }
        KlpcFile {
            schema_version: SCHEMA_VERSION,
            kind: "klpc".into(),
            truncation: k.truncation,
            n_modes: k.n_modes(),
            explained_fraction: k.explained_fraction,
            degenerate: k.degenerate,
            grid: k.grid.clone(),
            weights: k.weights.clone(),
            mean_field: k.mean_field.clone(),
            eigenvalues: k.eigenvalues.clone(),
            eigenvectors,
            joint: self.joint.to_file(),
        }
    }

    pub fn from_file(f: KlpcFile) -> Result<Self> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Corrupt(format!("unsupported schema version {}", f.schema_version)));
        }
        let lx = f.grid.len();
        if f.weights.len() != lx || f.mean_field.len() != lx || f.eigenvalues.len() != lx {
            return Err(Error::Corrupt("KLE arrays disagree with the grid length".into()));
        }
        if f.n_modes == 0 || f.n_modes > lx || f.eigenvectors.len() != lx * f.n_modes {
            return Err(Error::Corrupt(format!(
                "expected {lx} x {} eigenvector entries, found {}",
                f.n_modes,
                f.eigenvectors.len()
            )));
        }
        let kle = KleModel {
            eigenvectors: DMatrix::from_row_slice(lx, f.n_modes, &f.eigenvectors),
            grid: f.grid,
            weights: f.weights,
            mean_field: f.mean_field,
            eigenvalues: f.eigenvalues,
            explained_fraction: f.explained_fraction,
            degenerate: f.degenerate,
            truncation: f.truncation,
        };
        let joint = JointPce::from_file(f.joint)?;
        Self::new(kle, joint).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: KlpcFile = serde_json::from_str(s).map_err(|e| Error::Corrupt(e.to_string()))?;
        if f.kind != "klpc" {
            return Err(Error::Corrupt(format!("expected a klpc document, found '{}'", f.kind)));
        }
        Self::from_file(f)
    }
}

/// On-disk form of a [`KlpcSurrogate`]. Eigenvectors are row-major
/// (grid point, mode); the joint PCE holds one output per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlpcFile {
    pub schema_version: u32,
    pub kind: String,
    pub truncation: Truncation,
    pub n_modes: usize,
    pub explained_fraction: f64,
    pub degenerate: bool,
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean_field: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
    pub joint: JointPceFile,
}
